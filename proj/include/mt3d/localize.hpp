#pragma once

#include <utility>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Per-token affine heads over the propagated features.
struct HeadWeights {
    Vec mask_w;   // C
    double mask_b = 0.0;
    Mat vote_w;   // 3 x C
    Vec vote_b;   // 3
    Vec vq_w;     // C
    double vq_b = 0.0;
    Mat box_w;    // 4 x C
    Vec box_b;    // 4
    Vec bq_w;     // C
    double bq_b = 0.0;

    void validate(int channels) const;
};

struct LocalizeOutput {
    Vec mask_logits;   // N
    Mat votes;         // N x 3 center offsets relative to token coordinates
    Vec vote_quality;  // N logits
    Mat box_params;    // N x 4 (dx, dy, dz, dtheta) relative to voted centers
    Vec box_quality;   // N logits
};

struct LossBreakdown {
    double mask = 0.0;
    double center = 0.0;
    double vote_quality = 0.0;
    double box_quality = 0.0;
    double box = 0.0;
    double total = 0.0;
};

// Ground truth for one frame, in the same coordinate frame as the tokens.
struct LocalizeTargets {
    std::vector<bool> fg_mask;  // N, foreground per token
    Point3 center;
    double theta_offset = 0.0;  // gt theta minus prior theta
};

// Gradients of the loss sum with respect to the head outputs.
struct LocalizeOutputGrads {
    Vec mask_logits;
    Mat votes;
    Vec vote_quality;
    Mat box_params;
    Vec box_quality;
};

// Run the heads and select the box: center = voted center of the
// highest-box-quality token plus its regressed offset, theta = prior theta
// plus the regressed offset, sizes copied from the prior. Argmax ties break
// toward the lowest token index.
std::pair<LocalizeOutput, Box7> localize(const Mat& coords, const FeatureMatrix& feats,
                                         const HeadWeights& w, const Box7& prior);

// Loss terms: mask and quality cross-entropies, vote-center MSE over
// foreground tokens, smooth-L1 on box parameters over foreground tokens.
// Quality targets are positive when the implied center lies within
// cfg.quality_radius of the ground truth center.
LossBreakdown losses(const LocalizeOutput& out, const Mat& coords, const LocalizeTargets& gt,
                     const Config& cfg);

LocalizeOutputGrads losses_backward(const LocalizeOutput& out, const Mat& coords,
                                    const LocalizeTargets& gt, const Config& cfg);

struct GradCheckReport {
    double max_rel = 0.0;  // worst relative disagreement across all entries
    bool pass = false;
};

// Central finite differences (step 1e-4) on every head-output entry against
// losses_backward. Callers should keep the instance away from the quality
// radius boundary, where the loss is deliberately discontinuous.
GradCheckReport losses_grad_check(const LocalizeOutput& out, const Mat& coords,
                                  const LocalizeTargets& gt, const Config& cfg,
                                  double tol = 1e-4);

double logistic(double x);

// Huber transition at 1: 0.5 x^2 inside, |x| - 0.5 outside.
double smooth_l1(double x);
double smooth_l1_grad(double x);

}  // namespace mt3d
