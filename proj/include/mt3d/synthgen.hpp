#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mt3d/geometry.hpp"
#include "mt3d/io.hpp"
#include "mt3d/tracker.hpp"

namespace mt3d {

// Constant forward speed and yaw rate held for a span of frames.
struct MotionSegment {
    int frames = 0;
    double speed = 0.0;     // meters per frame along the current heading
    double yaw_rate = 0.0;  // radians per frame
};

// Everything the generator needs; the seed fixes all randomness.
struct ScenarioSpec {
    std::string name;
    std::string klass = "Car";
    Box7 start;                          // initial target box
    std::vector<MotionSegment> motion;   // applied in order, then held at zero
    int frame_count = 40;
    int points_per_frame = 1024;         // target surface budget at 10 m reference range
    double clutter_density = 0.0;        // ground points per square meter
    std::vector<Box7> distractors;       // static, same size class as the target
    double noise_sigma = 0.0;            // per-axis Gaussian, meters
    std::uint64_t seed = 0;

    void validate() const;
};

// Ground-truth trajectory implied by the motion profile (frame 0 = start).
std::vector<Box7> motion_trajectory(const ScenarioSpec& spec);

// Synthesize a tracklet: per frame, LiDAR-like returns on the visible target
// surface (density falling off with squared range, back-face culling), plus
// ground clutter and distractor surfaces, all with Gaussian noise.
// Deterministic per spec.
Tracklet generate(const ScenarioSpec& spec);

// Fixed named scenarios used by tests and the command line:
// car-straight, car-turn, ped-sparse, distractor-pair.
std::vector<ScenarioSpec> preset_suite();
ScenarioSpec preset_by_name(const std::string& name);

ojson scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const json& j);

}  // namespace mt3d
