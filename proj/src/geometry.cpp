#include "mt3d/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mt3d {

namespace {

constexpr double kClipEps = 1e-9;  // cross-product tolerance for collinear clip edges

struct P2 {
    double x, y;
};

double cross(const P2& o, const P2& a, const P2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// BEV footprint corners, counterclockwise.
std::array<P2, 4> bev_corners(const Box7& b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double hl = 0.5 * b.l, hw = 0.5 * b.w;
    std::array<P2, 4> out;
    const double lx[4] = {hl, -hl, -hl, hl};
    const double ly[4] = {hw, hw, -hw, -hw};
    for (int i = 0; i < 4; ++i) {
        out[i] = {b.cx + c * lx[i] - s * ly[i], b.cy + s * lx[i] + c * ly[i]};
    }
    return out;
}

// Sutherland-Hodgman clip of convex polygon `poly` against the half-plane to
// the left of edge a->b.
std::vector<P2> clip_edge(const std::vector<P2>& poly, const P2& a, const P2& b) {
    std::vector<P2> out;
    out.reserve(poly.size() + 1);
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const P2& cur = poly[i];
        const P2& nxt = poly[(i + 1) % n];
        const double dc = cross(a, b, cur);
        const double dn = cross(a, b, nxt);
        if (dc >= -kClipEps) out.push_back(cur);
        if ((dc > kClipEps && dn < -kClipEps) || (dc < -kClipEps && dn > kClipEps)) {
            const double t = dc / (dc - dn);
            out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
        }
    }
    return out;
}

double polygon_area(const std::vector<P2>& poly) {
    if (poly.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const P2& a = poly[i];
        const P2& b = poly[(i + 1) % poly.size()];
        s += a.x * b.y - b.x * a.y;
    }
    return 0.5 * std::abs(s);
}

double bev_intersection_area(const Box7& a, const Box7& b) {
    const auto ca = bev_corners(a);
    const auto cb = bev_corners(b);
    std::vector<P2> poly(ca.begin(), ca.end());
    for (int i = 0; i < 4 && !poly.empty(); ++i) {
        poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
    }
    return polygon_area(poly);
}

}  // namespace

double normalize_angle(double theta) {
    double t = std::fmod(theta, 2.0 * M_PI);
    if (t <= -M_PI) t += 2.0 * M_PI;
    if (t > M_PI) t -= 2.0 * M_PI;
    return t;
}

Box7::Box7(double cx_, double cy_, double cz_, double w_, double l_, double h_, double theta_)
    : cx(cx_), cy(cy_), cz(cz_), w(w_), l(l_), h(h_), theta(normalize_angle(theta_)) {}

void Box7::validate() const {
    if (!(w > 0.0 && l > 0.0 && h > 0.0))
        throw Error(ErrorKind::InvalidArgument, "box sizes must be positive");
    if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(cz) || !std::isfinite(theta))
        throw Error(ErrorKind::InvalidArgument, "box fields must be finite");
}

void Cloud::validate() const {
    if (!intensity.empty() && intensity.size() != points.size())
        throw Error(ErrorKind::ShapeMismatch, "intensity length must match point count");
}

std::array<Point3, 8> box_corners(const Box7& b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double hl = 0.5 * b.l, hw = 0.5 * b.w, hh = 0.5 * b.h;
    const double lx[4] = {hl, -hl, -hl, hl};
    const double ly[4] = {hw, hw, -hw, -hw};
    std::array<Point3, 8> out;
    for (int i = 0; i < 8; ++i) {
        const int j = i % 4;
        const double z = (i < 4) ? -hh : hh;
        out[i] = {b.cx + c * lx[j] - s * ly[j], b.cy + s * lx[j] + c * ly[j], b.cz + z};
    }
    return out;
}

double iou3d(const Box7& a, const Box7& b) {
    a.validate();
    b.validate();
    // Clipping one footprint against the other is not a symmetric computation,
    // so order the arguments canonically to make iou3d(a,b) == iou3d(b,a) exact.
    const auto key = [](const Box7& x) {
        return std::array<double, 7>{x.cx, x.cy, x.cz, x.w, x.l, x.h, x.theta};
    };
    if (key(b) < key(a)) return iou3d(b, a);
    const double inter_area = bev_intersection_area(a, b);
    const double za0 = a.cz - 0.5 * a.h, za1 = a.cz + 0.5 * a.h;
    const double zb0 = b.cz - 0.5 * b.h, zb1 = b.cz + 0.5 * b.h;
    const double dz = std::min(za1, zb1) - std::max(za0, zb0);
    if (inter_area <= 0.0 || dz <= 0.0) return 0.0;
    const double inter = inter_area * dz;
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double center_error(const Box7& a, const Box7& b) {
    const double dx = a.cx - b.cx, dy = a.cy - b.cy, dz = a.cz - b.cz;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool point_in_box(const Point3& p, const Box7& b, double margin) {
    const Point3 q = point_to_box_frame(p, b);
    return std::abs(q.x) <= 0.5 * b.l + margin && std::abs(q.y) <= 0.5 * b.w + margin &&
           std::abs(q.z) <= 0.5 * b.h + margin;
}

std::vector<bool> points_in_box(const Cloud& c, const Box7& b, double margin) {
    if (margin < 0.0) throw Error(ErrorKind::InvalidArgument, "margin must be >= 0");
    b.validate();
    std::vector<bool> mask(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) mask[i] = point_in_box(c.points[i], b, margin);
    return mask;
}

Point3 point_to_box_frame(const Point3& p, const Box7& b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    const double dx = p.x - b.cx, dy = p.y - b.cy;
    return {c * dx + s * dy, -s * dx + c * dy, p.z - b.cz};
}

Point3 point_from_box_frame(const Point3& p, const Box7& b) {
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    return {b.cx + c * p.x - s * p.y, b.cy + s * p.x + c * p.y, b.cz + p.z};
}

Cloud to_box_frame(const Cloud& c, const Box7& b) {
    b.validate();
    Cloud out;
    out.points.reserve(c.size());
    for (const auto& p : c.points) out.points.push_back(point_to_box_frame(p, b));
    out.intensity = c.intensity;
    return out;
}

Cloud from_box_frame(const Cloud& c, const Box7& b) {
    b.validate();
    Cloud out;
    out.points.reserve(c.size());
    for (const auto& p : c.points) out.points.push_back(point_from_box_frame(p, b));
    out.intensity = c.intensity;
    return out;
}

Box7 box_from_frame(const Box7& local, const Box7& frame) {
    const Point3 c = point_from_box_frame({local.cx, local.cy, local.cz}, frame);
    return Box7(c.x, c.y, c.z, local.w, local.l, local.h, local.theta + frame.theta);
}

Box7 apply_delta(const Box7& b, const BoxDelta& d) {
    return Box7(b.cx + d.dx, b.cy + d.dy, b.cz + d.dz, b.w, b.l, b.h, b.theta + d.dtheta);
}

}  // namespace mt3d
