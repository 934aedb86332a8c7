#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sparscene/error.hpp"

namespace sparscene {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

// Wraps an angle to (-pi, pi]. Both +pi and -pi map to +pi.
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * M_PI;
    double r = std::fmod(a, two_pi);
    if (r <= -M_PI) r += two_pi;
    if (r > M_PI) r -= two_pi;
    // fmod keeps the sign of the input, so an exact -pi survives; fold it.
    if (r == -M_PI) r = M_PI;
    return r;
}

// Rotate v by angle a (counter-clockwise).
inline Vec2 rotate(const Vec2& v, double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct Pose {
    Vec2 p;
    double theta = 0.0;  // radians, (-pi, pi]

    Pose() = default;
    Pose(Vec2 p_, double theta_) : p(p_), theta(wrap_angle(theta_)) {}
    Pose(double x, double y, double theta_) : p(x, y), theta(wrap_angle(theta_)) {}

    // Express a global point in this pose's local frame (x-axis = heading).
    Vec2 to_local(const Vec2& g) const { return rotate(g - p, -theta); }
    // Map a local point back to the global frame.
    Vec2 to_global(const Vec2& l) const { return rotate(l, theta) + p; }
};

enum class EdgeType : int { A2L = 0, L2A = 1, L2L = 2, A2A = 3 };
constexpr int kNumEdgeTypes = 4;

// Relative-pose descriptor of a directed edge, expressed in the target frame.
struct EdgeGeom {
    double dx = 0.0;
    double dy = 0.0;
    double cos_dt = 1.0;
    double sin_dt = 0.0;
    EdgeType etype = EdgeType::A2L;
};

// Geometry of edge source -> target, seen from the target's local frame:
// dp = R(-theta_t) (p_s - p_t), dtheta = wrap(theta_s - theta_t).
inline EdgeGeom rel_pose(const Pose& target, const Pose& source,
                         EdgeType etype = EdgeType::A2L) {
    EdgeGeom g;
    const Vec2 dp = rotate(source.p - target.p, -target.theta);
    const double dt = wrap_angle(source.theta - target.theta);
    g.dx = dp.x;
    g.dy = dp.y;
    g.cos_dt = std::cos(dt);
    g.sin_dt = std::sin(dt);
    g.etype = etype;
    return g;
}

// Minimum distance from point p to segment [a, b].
inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 <= 0.0) return (p - a).norm();
    double t = (p - a).dot(ab) / len2;
    t = std::fmin(1.0, std::fmax(0.0, t));
    return (p - (a + ab * t)).norm();
}

// Minimum distance from point p to a polyline (over all segments).
inline double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& pts) {
    if (pts.empty()) throw DataError("point_polyline_distance: empty polyline");
    if (pts.size() == 1) return (p - pts[0]).norm();
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        best = std::fmin(best, point_segment_distance(p, pts[i], pts[i + 1]));
    }
    return best;
}

}  // namespace sparscene
