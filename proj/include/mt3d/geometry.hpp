#pragma once

#include <array>
#include <vector>

#include "mt3d/types.hpp"

namespace mt3d {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Normalize an angle to (-pi, pi].
double normalize_angle(double theta);

// 7-DoF oriented box: center, size, heading about the up axis. The length l
// runs along the heading direction, w across it, h up. theta is normalized to
// (-pi, pi] on construction.
struct Box7 {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double w = 1.0, l = 1.0, h = 1.0;
    double theta = 0.0;

    Box7() = default;
    Box7(double cx_, double cy_, double cz_, double w_, double l_, double h_, double theta_);

    double volume() const { return w * l * h; }
    void validate() const;
};

struct BoxDelta {
    double dx = 0.0, dy = 0.0, dz = 0.0;
    double dtheta = 0.0;
};

struct Cloud {
    std::vector<Point3> points;
    std::vector<double> intensity;  // optional; empty or same length as points

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_intensity() const { return !intensity.empty(); }
    void validate() const;
};

// Corners of the yaw-rotated cuboid in world coordinates. Order: bottom face
// counterclockwise viewed from above, starting at (+l/2, +w/2, -h/2) in the
// box frame, then the top face in the same x/y order.
std::array<Point3, 8> box_corners(const Box7& b);

// Exact rotated 3D IoU: BEV polygon intersection (convex clipping) times
// vertical overlap, over the union volume. Symmetric; degenerate overlap is 0.
double iou3d(const Box7& a, const Box7& b);

// Euclidean distance between box centers.
double center_error(const Box7& a, const Box7& b);

// Boundary-inclusive membership test against the box enlarged by `margin` on
// each side. margin must be >= 0.
std::vector<bool> points_in_box(const Cloud& c, const Box7& b, double margin = 0.0);
bool point_in_box(const Point3& p, const Box7& b, double margin = 0.0);

// Transform points into the box's canonical frame (translate by -center,
// rotate by -theta) and back.
Cloud to_box_frame(const Cloud& c, const Box7& b);
Cloud from_box_frame(const Cloud& c, const Box7& b);
Point3 point_to_box_frame(const Point3& p, const Box7& b);
Point3 point_from_box_frame(const Point3& p, const Box7& b);

// Express a box given in b's canonical frame back in world coordinates.
Box7 box_from_frame(const Box7& local, const Box7& frame);

// Apply per-frame offsets to a box (sizes unchanged).
Box7 apply_delta(const Box7& b, const BoxDelta& d);

}  // namespace mt3d
