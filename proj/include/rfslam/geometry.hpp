#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rfslam {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

struct WallSegment {
    Point2 a;
    Point2 b;
};

struct FloorPlan {
    std::vector<WallSegment> walls;
    Point2 roi_center;
    double roi_radius = 40.0;
};

/// Ground-truth map feature. index == 1 is the physical anchor itself;
/// index > 1 are virtual anchors, mirror images of the PA across
/// walls[*generating_wall].
struct FeatureTruth {
    int anchor = 1;
    int index = 1;
    Point2 position;
    std::optional<std::size_t> generating_wall;
};

struct AgentTruth {
    double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
    int entry_slot = 1;
};

class invalid_geometry_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Reflection of p across the infinite line through wall. Involution.
inline Point2 mirror_point(Point2 p, const WallSegment& wall) {
    const Point2 d = wall.b - wall.a;
    const double len2 = dot(d, d);
    if (len2 <= 0.0)
        throw invalid_geometry_error("mirror_point: degenerate wall segment");
    const double t = dot(p - wall.a, d) / len2;
    const Point2 foot = wall.a + t * d;
    return {2.0 * foot.x - p.x, 2.0 * foot.y - p.y};
}

namespace detail {

inline int orientation_sign(Point2 a, Point2 b, Point2 c) {
    const double v = cross(b - a, c - a);
    if (v > 0.0) return 1;
    if (v < 0.0) return -1;
    return 0;
}

inline bool on_segment(Point2 a, Point2 b, Point2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

/// Closed segment intersection: touching an endpoint counts.
inline bool segments_intersect(Point2 p, Point2 q, Point2 a, Point2 b) {
    const int o1 = orientation_sign(p, q, a);
    const int o2 = orientation_sign(p, q, b);
    const int o3 = orientation_sign(a, b, p);
    const int o4 = orientation_sign(a, b, q);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p, q, a)) return true;
    if (o2 == 0 && on_segment(p, q, b)) return true;
    if (o3 == 0 && on_segment(a, b, p)) return true;
    if (o4 == 0 && on_segment(a, b, q)) return true;
    return false;
}

/// True when segment(p, q) hits any wall other than `skip`.
inline bool blocked(Point2 p, Point2 q, const FloorPlan& plan,
                    std::optional<std::size_t> skip = std::nullopt) {
    for (std::size_t w = 0; w < plan.walls.size(); ++w) {
        if (skip && *skip == w) continue;
        if (segments_intersect(p, q, plan.walls[w].a, plan.walls[w].b)) return true;
    }
    return false;
}

}  // namespace detail

/// Emits, per PA, the PA itself (l = 1) followed by one VA per wall,
/// ordered by (anchor, wall index).
inline std::vector<FeatureTruth> enumerate_virtual_anchors(const FloorPlan& plan,
                                                           const std::vector<Point2>& pas) {
    if (pas.empty())
        throw invalid_geometry_error("enumerate_virtual_anchors: no physical anchors");
    std::vector<FeatureTruth> out;
    out.reserve(pas.size() * (1 + plan.walls.size()));
    for (std::size_t m = 0; m < pas.size(); ++m) {
        out.push_back({static_cast<int>(m + 1), 1, pas[m], std::nullopt});
        for (std::size_t w = 0; w < plan.walls.size(); ++w) {
            out.push_back({static_cast<int>(m + 1), static_cast<int>(w + 2),
                           mirror_point(pas[m], plan.walls[w]), w});
        }
    }
    return out;
}

struct SpecularPath {
    Point2 reflection_point;
    double length = 0.0;
};

/// First-order reflected path from the generating wall, or absent when the
/// reflection point falls outside the wall span or either leg is obstructed.
inline std::optional<SpecularPath> specular_path(Point2 agent, const FeatureTruth& feature,
                                                 const FloorPlan& plan) {
    if (!feature.generating_wall)
        throw invalid_geometry_error("specular_path: feature is not a virtual anchor");
    const std::size_t wi = *feature.generating_wall;
    const WallSegment& wall = plan.walls[wi];
    const Point2 va = feature.position;

    // Intersection of segment(agent, va) with the wall's supporting line.
    const Point2 d = va - agent;
    const Point2 e = wall.b - wall.a;
    const double denom = cross(d, e);
    if (denom == 0.0) return std::nullopt;
    const double t = cross(wall.a - agent, e) / denom;  // along agent->va
    const double s = cross(wall.a - agent, d) / denom;  // along wall
    if (!(t > 0.0 && t < 1.0)) return std::nullopt;
    if (!(s > 0.0 && s < 1.0)) return std::nullopt;  // strictly within the wall span
    const Point2 refl = agent + t * d;

    const Point2 pa = mirror_point(va, wall);
    if (detail::blocked(agent, refl, plan, wi)) return std::nullopt;
    if (detail::blocked(refl, pa, plan, wi)) return std::nullopt;
    return SpecularPath{refl, distance(agent, va)};
}

/// Per-anchor visible feature sets at the given agent position. Index m-1
/// holds anchor m. PAs require an unobstructed line of sight; VAs require a
/// valid specular path.
inline std::vector<std::vector<FeatureTruth>> visible_features(
    Point2 agent, const FloorPlan& plan, const std::vector<FeatureTruth>& features) {
    int max_anchor = 0;
    for (const auto& f : features) max_anchor = std::max(max_anchor, f.anchor);
    std::vector<std::vector<FeatureTruth>> out(static_cast<std::size_t>(max_anchor));
    for (const auto& f : features) {
        bool visible = false;
        if (f.index == 1) {
            visible = !detail::blocked(agent, f.position, plan);
        } else {
            visible = specular_path(agent, f, plan).has_value();
        }
        if (visible) out[static_cast<std::size_t>(f.anchor - 1)].push_back(f);
    }
    return out;
}

}  // namespace rfslam
