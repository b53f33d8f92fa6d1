#pragma once

// Two-dimensional heart-in-torso triangulation.
//
// The torso is a rectangle [0, W] x [0, H] meshed by a structured grid of
// squares, each cut into two right triangles. The heart is a sub-region of
// that triangulation (elements are tagged by centroid), so the torso mesh has
// no hole: ventricular cavities are tagged as generic torso tissue.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecgrom/errors.hpp"

namespace ecgrom {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
    friend Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
    friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

enum class Region : std::int32_t {
    RV = 0,
    LV_endo = 1,
    LV_mcell = 2,
    LV_epi = 3,
    torso_generic = 4,
    torso_lung = 5,
    torso_bone = 6,
};

inline constexpr std::array<Region, 7> kAllRegions{
    Region::RV,         Region::LV_endo,     Region::LV_mcell,  Region::LV_epi,
    Region::torso_generic, Region::torso_lung, Region::torso_bone,
};

inline constexpr bool is_heart(Region r) { return static_cast<int>(r) <= static_cast<int>(Region::LV_epi); }
inline constexpr bool is_left_ventricle(Region r) {
    return r == Region::LV_endo || r == Region::LV_mcell || r == Region::LV_epi;
}

inline std::string_view region_name(Region r) {
    switch (r) {
    case Region::RV: return "RV";
    case Region::LV_endo: return "LV_endo";
    case Region::LV_mcell: return "LV_mcell";
    case Region::LV_epi: return "LV_epi";
    case Region::torso_generic: return "torso_generic";
    case Region::torso_lung: return "torso_lung";
    case Region::torso_bone: return "torso_bone";
    }
    return "?";
}

inline Region parse_region(std::string_view name) {
    for (Region r : kAllRegions)
        if (region_name(r) == name) return r;
    throw ConfigError("unknown region tag '" + std::string(name) + "'");
}

inline Region region_from_int(std::int32_t v) {
    if (v < 0 || v > static_cast<std::int32_t>(Region::torso_bone))
        throw ConfigError("region tag out of range: " + std::to_string(v));
    return static_cast<Region>(v);
}

enum class BoundaryTag : std::int32_t { heart_surface = 0, torso_exterior = 1 };

struct BoundaryEdge {
    std::int32_t a = 0;
    std::int32_t b = 0;
    BoundaryTag tag = BoundaryTag::torso_exterior;
};

using Triangle = std::array<std::int32_t, 3>;

/// Signed area of the triangle (p0, p1, p2); positive for counter-clockwise order.
inline double signed_area(Point2 p0, Point2 p1, Point2 p2) {
    return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

/// Ratio inradius / circumradius, scaled so an equilateral triangle gives 1.
inline double triangle_quality(Point2 p0, Point2 p1, Point2 p2) {
    const double a = distance(p1, p2), b = distance(p0, p2), c = distance(p0, p1);
    const double area = std::abs(signed_area(p0, p1, p2));
    if (area == 0.0) return 0.0;
    const double s = 0.5 * (a + b + c);
    const double inradius = area / s;
    const double circumradius = a * b * c / (4.0 * area);
    return 2.0 * inradius / circumradius;
}

/// Immutable triangulation with region tags and derived node sets.
///
/// Global node ids index `nodes()`. Heart quantities (V_m, u_e, w) live on a
/// compact heart-local numbering: `heart_nodes()[i]` is the global id of heart
/// dof i and `heart_local(g)` the inverse map (-1 for pure torso nodes).
class Mesh {
public:
    Mesh() = default;

    /// Builds a mesh from raw arrays and derives every node set.
    /// Throws ConfigError when an element is inverted or degenerate or the
    /// triangulation is not conforming.
    static Mesh from_arrays(std::vector<Point2> nodes, std::vector<Triangle> triangles,
                            std::vector<Region> regions,
                            std::map<std::string, std::int32_t> electrodes = {}) {
        Mesh m;
        m.nodes_ = std::move(nodes);
        m.triangles_ = std::move(triangles);
        m.regions_ = std::move(regions);
        m.electrodes_ = std::move(electrodes);
        m.finalize();
        return m;
    }

    const std::vector<Point2>& nodes() const noexcept { return nodes_; }
    const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
    const std::vector<Region>& element_region() const noexcept { return regions_; }
    const std::vector<BoundaryEdge>& boundary_edges() const noexcept { return boundary_edges_; }

    std::size_t num_nodes() const noexcept { return nodes_.size(); }
    std::size_t num_elements() const noexcept { return triangles_.size(); }
    std::size_t num_heart_nodes() const noexcept { return heart_nodes_.size(); }

    const std::vector<std::int32_t>& heart_nodes() const noexcept { return heart_nodes_; }
    const std::vector<std::int32_t>& heart_boundary_nodes() const noexcept { return heart_boundary_nodes_; }
    const std::vector<std::int32_t>& torso_nodes() const noexcept { return torso_nodes_; }
    const std::vector<std::int32_t>& exterior_nodes() const noexcept { return exterior_nodes_; }
    const std::vector<std::int32_t>& heart_elements() const noexcept { return heart_elements_; }
    const std::vector<std::int32_t>& torso_elements() const noexcept { return torso_elements_; }
    const std::map<std::string, std::int32_t>& electrodes() const noexcept { return electrodes_; }

    std::int32_t heart_local(std::int32_t global) const { return heart_local_[static_cast<std::size_t>(global)]; }

    /// Position of heart element e (index into `heart_elements()`) in the global list.
    std::int32_t heart_element_global(std::size_t e) const { return heart_elements_[e]; }

    double element_area(std::size_t e) const {
        const auto& t = triangles_[e];
        return signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]);
    }

    Point2 centroid(std::size_t e) const {
        const auto& t = triangles_[e];
        return {(nodes_[t[0]].x + nodes_[t[1]].x + nodes_[t[2]].x) / 3.0,
                (nodes_[t[0]].y + nodes_[t[1]].y + nodes_[t[2]].y) / 3.0};
    }

    double min_quality() const {
        double q = std::numeric_limits<double>::infinity();
        for (const auto& t : triangles_) q = std::min(q, triangle_quality(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]));
        return q;
    }

    double total_area() const {
        double a = 0.0;
        for (std::size_t e = 0; e < triangles_.size(); ++e) a += element_area(e);
        return a;
    }

    double heart_area() const {
        double a = 0.0;
        for (auto e : heart_elements_) a += element_area(static_cast<std::size_t>(e));
        return a;
    }

    /// Nearest node among `candidates` (global ids) to point p.
    std::int32_t nearest_node(Point2 p, const std::vector<std::int32_t>& candidates) const {
        if (candidates.empty()) throw ConfigError("nearest_node: empty candidate set");
        std::int32_t best = candidates.front();
        double best_d = std::numeric_limits<double>::infinity();
        for (auto g : candidates) {
            const double d = distance(nodes_[static_cast<std::size_t>(g)], p);
            if (d < best_d) {
                best_d = d;
                best = g;
            }
        }
        return best;
    }

    std::int32_t electrode(const std::string& name) const {
        auto it = electrodes_.find(name);
        if (it == electrodes_.end()) throw ConfigError("mesh has no electrode named '" + name + "'");
        return it->second;
    }

private:
    void finalize() {
        if (regions_.size() != triangles_.size())
            throw ConfigError("element_region size does not match triangle count");
        const auto n = static_cast<std::int32_t>(nodes_.size());
        for (std::size_t e = 0; e < triangles_.size(); ++e) {
            for (auto v : triangles_[e])
                if (v < 0 || v >= n) throw ConfigError("triangle " + std::to_string(e) + " references a missing node");
            if (!(element_area(e) > 0.0))
                throw ConfigError("triangle " + std::to_string(e) + " has non-positive signed area");
        }

        std::vector<char> in_heart(nodes_.size(), 0), in_torso(nodes_.size(), 0);
        heart_elements_.clear();
        torso_elements_.clear();
        for (std::size_t e = 0; e < triangles_.size(); ++e) {
            const bool h = is_heart(regions_[e]);
            (h ? heart_elements_ : torso_elements_).push_back(static_cast<std::int32_t>(e));
            for (auto v : triangles_[e]) (h ? in_heart : in_torso)[static_cast<std::size_t>(v)] = 1;
        }

        heart_nodes_.clear();
        heart_boundary_nodes_.clear();
        torso_nodes_.clear();
        heart_local_.assign(nodes_.size(), -1);
        for (std::int32_t g = 0; g < n; ++g) {
            if (in_heart[g]) {
                heart_local_[g] = static_cast<std::int32_t>(heart_nodes_.size());
                heart_nodes_.push_back(g);
                if (in_torso[g]) heart_boundary_nodes_.push_back(g);
            }
            if (in_torso[g]) torso_nodes_.push_back(g);
        }

        // Edge -> (count, heart-element count); conforming meshes share each
        // interior edge between exactly two triangles.
        struct EdgeInfo {
            int count = 0;
            int heart = 0;
        };
        std::map<std::pair<std::int32_t, std::int32_t>, EdgeInfo> edges;
        for (std::size_t e = 0; e < triangles_.size(); ++e) {
            const auto& t = triangles_[e];
            for (int k = 0; k < 3; ++k) {
                auto a = t[k], b = t[(k + 1) % 3];
                auto& info = edges[{std::min(a, b), std::max(a, b)}];
                ++info.count;
                if (is_heart(regions_[e])) ++info.heart;
            }
        }
        boundary_edges_.clear();
        std::vector<char> exterior(nodes_.size(), 0);
        for (const auto& [key, info] : edges) {
            if (info.count > 2) throw ConfigError("non-conforming mesh: edge shared by more than two triangles");
            if (info.count == 1) {
                boundary_edges_.push_back({key.first, key.second, BoundaryTag::torso_exterior});
                exterior[key.first] = exterior[key.second] = 1;
            } else if (info.heart == 1) {
                boundary_edges_.push_back({key.first, key.second, BoundaryTag::heart_surface});
            }
        }
        exterior_nodes_.clear();
        for (std::int32_t g = 0; g < n; ++g)
            if (exterior[g]) exterior_nodes_.push_back(g);
        for (const auto& [name, g] : electrodes_)
            if (g < 0 || g >= n) throw ConfigError("electrode '" + name + "' references a missing node");
    }

    std::vector<Point2> nodes_;
    std::vector<Triangle> triangles_;
    std::vector<Region> regions_;
    std::vector<BoundaryEdge> boundary_edges_;
    std::vector<std::int32_t> heart_nodes_;
    std::vector<std::int32_t> heart_boundary_nodes_;
    std::vector<std::int32_t> torso_nodes_;
    std::vector<std::int32_t> exterior_nodes_;
    std::vector<std::int32_t> heart_elements_;
    std::vector<std::int32_t> torso_elements_;
    std::vector<std::int32_t> heart_local_;
    std::map<std::string, std::int32_t> electrodes_;
};

/// Returns the (possibly empty) list of element ids carrying `tag`.
inline std::vector<std::int32_t> region_element_ids(const Mesh& mesh, Region tag) {
    std::vector<std::int32_t> ids;
    const auto& regions = mesh.element_region();
    for (std::size_t e = 0; e < regions.size(); ++e)
        if (regions[e] == tag) ids.push_back(static_cast<std::int32_t>(e));
    return ids;
}

inline std::vector<std::int32_t> region_element_ids(const Mesh& mesh, std::string_view tag) {
    return region_element_ids(mesh, parse_region(tag));
}

struct Ellipse {
    Point2 center;
    double ax = 0.0;
    double ay = 0.0;

    double level(Point2 p) const {
        const double dx = (p.x - center.x) / ax, dy = (p.y - center.y) / ay;
        return dx * dx + dy * dy;
    }
    bool contains(Point2 p) const { return ax > 0.0 && ay > 0.0 && level(p) < 1.0; }
    Point2 at_angle(double theta) const { return {center.x + ax * std::cos(theta), center.y + ay * std::sin(theta)}; }
};

/// Geometry of the idealized two-ventricle cross-section (lengths in cm).
struct GeometryConfig {
    double torso_width = 16.0;
    double torso_height = 16.0;

    Point2 lv_center{9.0, 8.0};
    double lv_axis_x = 3.0;
    double lv_axis_y = 3.5;
    double lv_wall = 1.0;

    bool rv_enabled = true;
    Point2 rv_offset{-2.6, 0.0};  // RV ellipse center relative to the LV center
    double rv_axis_x = 2.6;
    double rv_axis_y = 3.2;
    double rv_wall = 0.5;

    double h = 0.1;
    double min_quality = 0.2;

    bool lungs_enabled = false;
    Ellipse left_lung{{13.5, 9.5}, 1.8, 3.5};
    Ellipse right_lung{{2.8, 9.5}, 1.8, 3.5};
    bool bone_enabled = false;
    Ellipse sternum{{5.2, 14.2}, 1.2, 0.6};

    Ellipse lv_outer() const { return {lv_center, lv_axis_x, lv_axis_y}; }
    Ellipse lv_inner() const {
        return {lv_center, std::max(lv_axis_x - lv_wall, 0.0), std::max(lv_axis_y - lv_wall, 0.0)};
    }
    Ellipse rv_outer() const { return {lv_center + rv_offset, rv_axis_x, rv_axis_y}; }
    Ellipse rv_inner() const {
        return {lv_center + rv_offset, std::max(rv_axis_x - rv_wall, 0.0), std::max(rv_axis_y - rv_wall, 0.0)};
    }

    /// Largest semi-axis of the LV epicardial ellipse.
    double heart_outer_radius() const { return std::max(lv_axis_x, lv_axis_y); }

    /// Axis-aligned bounding box (xmin, ymin, xmax, ymax) of the heart.
    std::array<double, 4> heart_bbox() const {
        std::array<double, 4> b{lv_center.x - lv_axis_x, lv_center.y - lv_axis_y, lv_center.x + lv_axis_x,
                                lv_center.y + lv_axis_y};
        if (rv_enabled) {
            const auto rv = rv_outer();
            b[0] = std::min(b[0], rv.center.x - rv.ax);
            b[1] = std::min(b[1], rv.center.y - rv.ay);
            b[2] = std::max(b[2], rv.center.x + rv.ax);
            b[3] = std::max(b[3], rv.center.y + rv.ay);
        }
        return b;
    }

    void validate() const {
        if (!(h > 0.0)) throw ConfigError("geometry: h must be positive");
        if (!(torso_width > 0.0 && torso_height > 0.0)) throw ConfigError("geometry: torso dimensions must be positive");
        if (!(lv_axis_x > 0.0 && lv_axis_y > 0.0))
            throw ConfigError("geometry: heart must have positive area (LV axes must be > 0)");
        if (!(lv_wall > 0.0)) throw ConfigError("geometry: lv_wall must be positive");
        if (rv_enabled && !(rv_axis_x > 0.0 && rv_axis_y > 0.0 && rv_wall > 0.0))
            throw ConfigError("geometry: RV axes and wall must be positive when the RV is enabled");
        const auto b = heart_bbox();
        if (!(b[0] > 0.0 && b[1] > 0.0 && b[2] < torso_width && b[3] < torso_height))
            throw ConfigError("geometry: heart intersects the torso boundary");
        double thinnest = std::min({lv_wall, lv_axis_x, lv_axis_y});
        if (rv_enabled) thinnest = std::min(thinnest, rv_wall);
        if (thinnest / h < 2.0)
            throw ConfigError("geometry: h=" + std::to_string(h) + " resolves the thinnest wall (" +
                              std::to_string(thinnest) + " cm) with fewer than 2 elements");
        if (!(min_quality > 0.0 && min_quality <= 1.0)) throw ConfigError("geometry: min_quality must be in (0, 1]");
    }
};

/// Transmural coordinate in [0, 1] of a point in the LV wall: 0 on the
/// endocardial ellipse, 1 on the epicardial one (axes interpolated linearly).
inline double lv_transmural_depth(const GeometryConfig& cfg, Point2 p) {
    const Ellipse in = cfg.lv_inner(), out = cfg.lv_outer();
    auto level_at = [&](double s) {
        const Ellipse e{cfg.lv_center, in.ax + s * (out.ax - in.ax), in.ay + s * (out.ay - in.ay)};
        if (e.ax <= 0.0 || e.ay <= 0.0) return std::numeric_limits<double>::infinity();
        return e.level(p);
    };
    double lo = 0.0, hi = 1.0;
    if (level_at(lo) <= 1.0) return 0.0;
    if (level_at(hi) >= 1.0) return 1.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (level_at(mid) > 1.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Region of a point; torso_generic also covers both ventricular cavities.
inline Region classify_point(const GeometryConfig& cfg, Point2 p) {
    const Ellipse lv_out = cfg.lv_outer(), lv_in = cfg.lv_inner();
    if (lv_out.contains(p)) {
        if (lv_in.contains(p)) return Region::torso_generic;
        const double s = lv_transmural_depth(cfg, p);
        if (s < 1.0 / 3.0) return Region::LV_endo;
        if (s < 2.0 / 3.0) return Region::LV_mcell;
        return Region::LV_epi;
    }
    if (cfg.rv_enabled && cfg.rv_outer().contains(p)) {
        if (cfg.rv_inner().contains(p)) return Region::torso_generic;
        return Region::RV;
    }
    if (cfg.bone_enabled && cfg.sternum.contains(p)) return Region::torso_bone;
    if (cfg.lungs_enabled && (cfg.left_lung.contains(p) || cfg.right_lung.contains(p))) return Region::torso_lung;
    return Region::torso_generic;
}

/// Target positions of the limb and precordial electrodes on the torso edge.
inline std::map<std::string, Point2> default_electrode_targets(const GeometryConfig& cfg) {
    const double W = cfg.torso_width, H = cfg.torso_height;
    const double cy = cfg.lv_center.y;
    return {
        {"R", {0.1 * W, H}},
        {"L", {0.9 * W, H}},
        {"F", {0.5 * W, 0.0}},
        {"V1", {W, cy + 2.0}},
        {"V2", {W, cy}},
        {"V3", {W, cy - 2.0}},
    };
}

/// Structured triangulation of the torso rectangle with heart regions tagged.
/// Electrodes are placed at the exterior nodes closest to `targets`
/// (the default layout when empty).
inline Mesh build_idealized_geometry(const GeometryConfig& cfg, std::map<std::string, Point2> targets = {}) {
    cfg.validate();
    const int nx = std::max(1, static_cast<int>(std::lround(cfg.torso_width / cfg.h)));
    const int ny = std::max(1, static_cast<int>(std::lround(cfg.torso_height / cfg.h)));
    const double hx = cfg.torso_width / nx, hy = cfg.torso_height / ny;

    std::vector<Point2> nodes;
    nodes.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) nodes.push_back({i * hx, j * hy});
    auto id = [nx](int i, int j) { return static_cast<std::int32_t>(j * (nx + 1) + i); };

    std::vector<Triangle> tris;
    tris.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const auto a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            tris.push_back({a, b, c});
            tris.push_back({a, c, d});
        }
    }
    std::vector<Region> regions(tris.size());
    for (std::size_t e = 0; e < tris.size(); ++e) {
        const auto& t = tris[e];
        const Point2 c{(nodes[t[0]].x + nodes[t[1]].x + nodes[t[2]].x) / 3.0,
                       (nodes[t[0]].y + nodes[t[1]].y + nodes[t[2]].y) / 3.0};
        regions[e] = classify_point(cfg, c);
    }

    Mesh base = Mesh::from_arrays(nodes, tris, regions);
    if (base.heart_elements().empty()) throw ConfigError("geometry: heart is not resolved by the mesh (h too large)");

    std::map<std::string, std::int32_t> electrodes;
    if (targets.empty()) targets = default_electrode_targets(cfg);
    for (const auto& [name, target] : targets)
        electrodes[name] = base.nearest_node(target, base.exterior_nodes());

    Mesh mesh = Mesh::from_arrays(std::move(nodes), std::move(tris), std::move(regions), std::move(electrodes));
    if (mesh.min_quality() < cfg.min_quality)
        throw ConfigError("geometry: minimum triangle quality below the configured floor");
    return mesh;
}

} // namespace ecgrom
