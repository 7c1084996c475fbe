#pragma once

#include <string>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/memory.hpp"
#include "mt3d/weights.hpp"

namespace mt3d {

// One labeled sequence: per-frame clouds with a ground-truth box each.
struct Tracklet {
    std::vector<Cloud> frames;
    std::vector<Box7> gt;
    std::string klass = "Car";
    std::string source;

    void validate() const;
};

// Mutable per-target tracking state. The bank stores token coordinates in the
// world frame; each step re-expresses them in the current canonical
// search-region frame so history and current points are comparable.
struct TrackerState {
    Config cfg;
    PipelineWeights weights;
    MemoryBank bank;
    Box7 current_box;
    std::int64_t frame_index = 0;
    bool coasted = false;  // last step emitted the previous box unchanged

    TrackerState(const Config& c, const PipelineWeights& w)
        : cfg(c), weights(w), bank(c.capacity) {}
};

// Previous box enlarged per axis to max(scale * extent, extent + 2 * margin);
// center and heading unchanged.
Box7 search_region(const Box7& box, const Config& cfg);

// Points inside `region` (boundary inclusive), intensity carried along.
Cloud crop_points(const Cloud& cloud, const Box7& region);

TrackerState tracker_init(const Cloud& first, const Box7& b1, const Config& cfg,
                          const PipelineWeights& w);

// One tracking step: crop around the previous box, run the forward path
// against the memory bank, localize with the previous box as prior, push the
// new frame into the bank, return the predicted box in world coordinates.
// An empty search region coasts: previous box returned, bank untouched.
Box7 tracker_step(TrackerState& state, const Cloud& cloud);

// Keep frames 0, interval, 2*interval, ...; errors if fewer than 2 remain.
Tracklet subsample_htv(const Tracklet& t, int interval);

struct FrameEval {
    Box7 box;
    double iou = 0.0;
    double center_error = 0.0;
    bool coasted = false;
};

// One-pass protocol: initialize from gt at frame 0, then step. Ground truth
// after frame 0 is used only to score. gt_replay substitutes the ground-truth
// box as the prediction (oracle upper bound for pipeline tests).
std::vector<FrameEval> run_tracklet(const Tracklet& t, const Config& cfg,
                                    const PipelineWeights& w, bool gt_replay = false);

struct TrainReport {
    std::vector<double> losses;  // total loss before each step
    double initial = 0.0;
    double final_loss = 0.0;
};

// Teacher-forced head fit: freeze everything but the localization heads, build
// per-frame features from gt-centered crops and gt masks once, then run plain
// gradient descent on the summed frame losses.
TrainReport train_heads(PipelineWeights& w, const Tracklet& t, const Config& cfg,
                        int steps, double lr);

}  // namespace mt3d
