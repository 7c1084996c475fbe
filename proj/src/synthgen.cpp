#include "mt3d/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "mt3d/rng.hpp"

namespace mt3d {

void ScenarioSpec::validate() const {
    if (frame_count < 2)
        throw Error(ErrorKind::InvalidArgument, "scenario needs at least 2 frames");
    if (noise_sigma < 0.0)
        throw Error(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
    if (points_per_frame < 1)
        throw Error(ErrorKind::InvalidArgument, "points budget must be >= 1");
    if (clutter_density < 0.0)
        throw Error(ErrorKind::InvalidArgument, "clutter density must be >= 0");
    start.validate();
    for (const Box7& d : distractors) d.validate();
}

std::vector<Box7> motion_trajectory(const ScenarioSpec& spec) {
    std::vector<Box7> out;
    out.reserve(static_cast<std::size_t>(spec.frame_count));
    Box7 b = spec.start;
    out.push_back(b);
    std::size_t seg = 0;
    int left = spec.motion.empty() ? 0 : spec.motion[0].frames;
    for (int t = 1; t < spec.frame_count; ++t) {
        while (seg < spec.motion.size() && left == 0) {
            ++seg;
            left = seg < spec.motion.size() ? spec.motion[seg].frames : 0;
        }
        double speed = 0.0, yaw = 0.0;
        if (seg < spec.motion.size()) {
            speed = spec.motion[seg].speed;
            yaw = spec.motion[seg].yaw_rate;
            --left;
        }
        b.theta = normalize_angle(b.theta + yaw);
        b.cx += speed * std::cos(b.theta);
        b.cy += speed * std::sin(b.theta);
        out.push_back(b);
    }
    return out;
}

namespace {

// Rectangular face of a box: origin corner plus two edge vectors and an
// outward normal, all in world coordinates.
struct Face {
    Eigen::Vector3d origin, eu, ev, normal;
    double area = 0.0;
};

std::array<Face, 6> box_faces(const Box7& b) {
    const double ct = std::cos(b.theta), st = std::sin(b.theta);
    auto world = [&](double x, double y, double z) {
        return Eigen::Vector3d(b.cx + ct * x - st * y, b.cy + st * x + ct * y, b.cz + z);
    };
    auto dir = [&](double x, double y, double z) {
        return Eigen::Vector3d(ct * x - st * y, st * x + ct * y, z);
    };
    const double hl = b.l / 2, hw = b.w / 2, hh = b.h / 2;
    std::array<Face, 6> f;
    // +x (front), -x, +y, -y, +z (roof), -z (floor); origin at the min corner
    // of each face's (u,v) parameterization.
    f[0] = {world(hl, -hw, -hh), dir(0, b.w, 0), dir(0, 0, b.h), dir(1, 0, 0), b.w * b.h};
    f[1] = {world(-hl, -hw, -hh), dir(0, b.w, 0), dir(0, 0, b.h), dir(-1, 0, 0), b.w * b.h};
    f[2] = {world(-hl, hw, -hh), dir(b.l, 0, 0), dir(0, 0, b.h), dir(0, 1, 0), b.l * b.h};
    f[3] = {world(-hl, -hw, -hh), dir(b.l, 0, 0), dir(0, 0, b.h), dir(0, -1, 0), b.l * b.h};
    f[4] = {world(-hl, -hw, hh), dir(b.l, 0, 0), dir(0, b.w, 0), dir(0, 0, 1), b.l * b.w};
    f[5] = {world(-hl, -hw, -hh), dir(b.l, 0, 0), dir(0, b.w, 0), dir(0, 0, -1), b.l * b.w};
    return f;
}

// LiDAR-like returns from one box as seen from the origin: point count decays
// with squared range from a 10 m reference, faces pointing away are culled.
void sample_box_surface(const Box7& b, int base_count, double sigma, Rng& rng, Cloud& out) {
    const Eigen::Vector3d sensor(0.0, 0.0, 0.0);
    const double range =
        std::max(1.0, Eigen::Vector3d(b.cx, b.cy, b.cz).norm());
    const double kRefRange = 10.0;
    const double scale = (kRefRange / range) * (kRefRange / range);
    const int count = std::min(
        4 * base_count,
        static_cast<int>(std::lround(static_cast<double>(base_count) * scale)));
    if (count <= 0) return;

    const auto faces = box_faces(b);
    double weights[6];
    double total = 0.0;
    for (int i = 0; i < 6; ++i) {
        const Eigen::Vector3d center = faces[i].origin + 0.5 * faces[i].eu + 0.5 * faces[i].ev;
        const bool visible = faces[i].normal.dot(sensor - center) > 0.0;
        weights[i] = visible ? faces[i].area : 0.0;
        total += weights[i];
    }
    if (total <= 0.0) {  // sensor inside the box: treat every face as visible
        for (int i = 0; i < 6; ++i) weights[i] = faces[i].area;
        total = 0.0;
        for (int i = 0; i < 6; ++i) total += weights[i];
    }

    for (int s = 0; s < count; ++s) {
        double pick = rng.uniform() * total;
        int fi = 0;
        while (fi < 5 && pick >= weights[fi]) {
            pick -= weights[fi];
            ++fi;
        }
        const Face& f = faces[fi];
        const Eigen::Vector3d p = f.origin + rng.uniform() * f.eu + rng.uniform() * f.ev;
        out.points.push_back({p.x() + rng.normal(0.0, sigma), p.y() + rng.normal(0.0, sigma),
                              p.z() + rng.normal(0.0, sigma)});
        out.intensity.push_back(rng.uniform());
    }
}

}  // namespace

Tracklet generate(const ScenarioSpec& spec) {
    spec.validate();
    const std::vector<Box7> traj = motion_trajectory(spec);

    Tracklet t;
    t.klass = spec.klass;
    t.source = spec.name.empty() ? "synthetic" : spec.name;
    t.gt = traj;
    t.frames.reserve(traj.size());

    const double kPatch = 40.0;  // ground clutter square, meters
    const int clutter_count =
        static_cast<int>(std::lround(spec.clutter_density * kPatch * kPatch));

    for (int f = 0; f < spec.frame_count; ++f) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(f)));
        Cloud cloud;
        sample_box_surface(traj[static_cast<std::size_t>(f)], spec.points_per_frame,
                           spec.noise_sigma, rng, cloud);
        for (const Box7& d : spec.distractors)
            sample_box_surface(d, spec.points_per_frame, spec.noise_sigma, rng, cloud);
        for (int i = 0; i < clutter_count; ++i) {
            cloud.points.push_back({rng.uniform(-kPatch / 2, kPatch / 2),
                                    rng.uniform(-kPatch / 2, kPatch / 2),
                                    rng.normal(0.0, spec.noise_sigma)});
            cloud.intensity.push_back(rng.uniform());
        }
        t.frames.push_back(std::move(cloud));
    }
    return t;
}

std::vector<ScenarioSpec> preset_suite() {
    std::vector<ScenarioSpec> out;

    ScenarioSpec car;
    car.name = "car-straight";
    car.klass = "Car";
    car.start = Box7(10.0, 3.0, 0.8, 1.8, 4.2, 1.6, 0.0);
    car.motion = {{40, 0.25, 0.0}};
    car.frame_count = 40;
    car.points_per_frame = 1024;
    car.clutter_density = 0.03;
    car.noise_sigma = 0.01;
    car.seed = 1001;
    out.push_back(car);

    ScenarioSpec turn = car;
    turn.name = "car-turn";
    turn.start = Box7(12.0, -2.0, 0.8, 1.8, 4.2, 1.6, 0.5);
    turn.motion = {{15, 0.3, 0.0}, {25, 0.3, 0.02}};
    turn.seed = 1002;
    out.push_back(turn);

    ScenarioSpec ped;
    ped.name = "ped-sparse";
    ped.klass = "Pedestrian";
    ped.start = Box7(8.0, 2.0, 0.85, 0.6, 0.6, 1.7, 1.2);
    ped.motion = {{40, 0.08, 0.01}};
    ped.frame_count = 40;
    ped.points_per_frame = 384;
    ped.clutter_density = 0.02;
    ped.noise_sigma = 0.012;
    ped.seed = 1003;
    out.push_back(ped);

    ScenarioSpec twin = car;
    twin.name = "distractor-pair";
    twin.start = Box7(11.0, 4.0, 0.8, 1.8, 4.2, 1.6, 0.0);
    twin.motion = {{40, 0.2, 0.0}};
    twin.distractors = {Box7(11.0, 8.0, 0.8, 1.8, 4.2, 1.6, 0.0)};
    twin.seed = 1004;
    out.push_back(twin);

    return out;
}

ScenarioSpec preset_by_name(const std::string& name) {
    for (const ScenarioSpec& s : preset_suite())
        if (s.name == name) return s;
    throw Error(ErrorKind::InvalidArgument, "unknown preset: " + name);
}

static ojson box_to_json(const Box7& b) {
    return ojson{{"cx", b.cx}, {"cy", b.cy}, {"cz", b.cz}, {"w", b.w},
                 {"l", b.l},   {"h", b.h},   {"theta", b.theta}};
}

static Box7 box_from_json(const json& j) {
    return Box7(j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("cz").get<double>(),
                j.at("w").get<double>(), j.at("l").get<double>(), j.at("h").get<double>(),
                j.at("theta").get<double>());
}

ojson scenario_to_json(const ScenarioSpec& spec) {
    ojson j;
    j["name"] = spec.name;
    j["class"] = spec.klass;
    j["start"] = box_to_json(spec.start);
    ojson motion = ojson::array();
    for (const MotionSegment& m : spec.motion)
        motion.push_back(
            ojson{{"frames", m.frames}, {"speed", m.speed}, {"yaw_rate", m.yaw_rate}});
    j["motion"] = motion;
    j["frame_count"] = spec.frame_count;
    j["points_per_frame"] = spec.points_per_frame;
    j["clutter_density"] = spec.clutter_density;
    ojson ds = ojson::array();
    for (const Box7& d : spec.distractors) ds.push_back(box_to_json(d));
    j["distractors"] = ds;
    j["noise_sigma"] = spec.noise_sigma;
    j["seed"] = spec.seed;
    return j;
}

ScenarioSpec scenario_from_json(const json& j) {
    ScenarioSpec spec;
    spec.name = j.value("name", std::string("custom"));
    spec.klass = j.value("class", std::string("Car"));
    if (j.contains("start")) spec.start = box_from_json(j.at("start"));
    if (j.contains("motion"))
        for (const auto& m : j.at("motion"))
            spec.motion.push_back({m.at("frames").get<int>(), m.at("speed").get<double>(),
                                   m.at("yaw_rate").get<double>()});
    spec.frame_count = j.value("frame_count", spec.frame_count);
    spec.points_per_frame = j.value("points_per_frame", spec.points_per_frame);
    spec.clutter_density = j.value("clutter_density", spec.clutter_density);
    if (j.contains("distractors"))
        for (const auto& d : j.at("distractors")) spec.distractors.push_back(box_from_json(d));
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

}  // namespace mt3d
