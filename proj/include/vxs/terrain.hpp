#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vxs/geometry.hpp"
#include "vxs/kv.hpp"
#include "vxs/lidar.hpp"
#include "vxs/math.hpp"

namespace vxs {

// ======================================================
// Families and the parameter table
// ======================================================
enum class TerrainFamily { kPlane, kCeiling, kForest, kDoor, kPlatform, kPile, kUpstair, kDownstair };

inline constexpr TerrainFamily kAllFamilies[] = {
    TerrainFamily::kPlane,   TerrainFamily::kCeiling, TerrainFamily::kForest,
    TerrainFamily::kDoor,    TerrainFamily::kPlatform, TerrainFamily::kPile,
    TerrainFamily::kUpstair, TerrainFamily::kDownstair};

inline const char* family_name(TerrainFamily f) {
    switch (f) {
        case TerrainFamily::kPlane: return "plane";
        case TerrainFamily::kCeiling: return "ceiling";
        case TerrainFamily::kForest: return "forest";
        case TerrainFamily::kDoor: return "door";
        case TerrainFamily::kPlatform: return "platform";
        case TerrainFamily::kPile: return "pile";
        case TerrainFamily::kUpstair: return "upstair";
        case TerrainFamily::kDownstair: return "downstair";
    }
    throw std::invalid_argument("unknown terrain family");
}

inline TerrainFamily family_from_name(const std::string& name) {
    for (TerrainFamily f : kAllFamilies)
        if (name == family_name(f)) return f;
    throw std::invalid_argument("unknown terrain family: " + name);
}

struct ParamRange {
    const char* name;
    double min_value;  // easiest setting
    double max_value;  // hardest setting
};

// Easiest -> hardest endpoints per family term.
inline std::vector<ParamRange> param_table(TerrainFamily f) {
    switch (f) {
        case TerrainFamily::kPlane: return {};
        case TerrainFamily::kCeiling:
            return {{"ceiling_height", 1.30, 1.00}, {"ceiling_count", 10, 40}};
        case TerrainFamily::kForest:
            return {{"tree_spacing", 2.0, 1.0}, {"tree_count", 3, 32}};
        case TerrainFamily::kDoor:
            return {{"wall_spacing", 2.00, 1.00}, {"door_width", 1.60, 0.80}};
        case TerrainFamily::kPlatform:
            return {{"platform_height", 0.05, 0.35}, {"platform_gap", 0.20, 0.50}};
        case TerrainFamily::kPile: return {{"cylinder_spacing", 0.35, 0.45}};
        case TerrainFamily::kUpstair:
        case TerrainFamily::kDownstair:
            return {{"step_height", 0.00, 0.20}, {"step_width", 0.50, 0.30}};
    }
    throw std::invalid_argument("unknown terrain family");
}

struct ResolvedParams {
    std::vector<std::pair<std::string, double>> values;

    double get(const std::string& name) const {
        for (const auto& [k, v] : values)
            if (k == name) return v;
        throw std::runtime_error("unknown parameter: " + name);
    }
    int get_count(const std::string& name) const {
        return static_cast<int>(std::llround(get(name)));
    }
};

// p(s) = (1-s) p_min + s p_max, exact at both endpoints.
inline ResolvedParams interpolate_params(TerrainFamily family, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("difficulty must lie in [0, 1]");
    ResolvedParams out;
    for (const ParamRange& r : param_table(family))
        out.values.emplace_back(r.name, (1.0 - s) * r.min_value + s * r.max_value);
    return out;
}

// ======================================================
// TerrainBlock
// ======================================================
inline constexpr double kBlockHalf = 4.0;        // 8 m x 8 m blocks
inline constexpr double kPileOverlayDrop = 0.02; // overlay plane sits this far below the tops
inline constexpr double kPileOverlayThreshold = 0.5;
inline constexpr double kPilePitDepth = 0.5;
inline constexpr double kPilePitHalf = 3.0;
inline constexpr double kPileCylinderRadius = 0.10;
inline constexpr double kForestTreeRadius = 0.15;
inline constexpr double kForestTreeHeight = 2.0;
inline constexpr double kForestSpawnClearance = 1.0;
inline constexpr double kWallThickness = 0.2;
inline constexpr double kWallHeight = 2.0;
inline constexpr double kCeilingThickness = 0.1;
inline constexpr double kPlatformRingWidth = 0.8;
inline constexpr double kStairFlatHalf = 1.0;    // flat strip around the spawn
inline constexpr int kStairMaxSteps = 10;

// Owns its meshes and BVHs; deque storage keeps SceneInstance pointers
// stable as geometry is appended, including across moves of the block.
struct TerrainBlock {
    TerrainFamily family = TerrainFamily::kPlane;
    double difficulty = 0.0;
    uint64_t seed = 0;
    ResolvedParams params;
    Vec3 spawn{0, 0, 0};
    bool overlay_present = false;

    std::deque<TriangleMesh> meshes;
    std::deque<Bvh> bvhs;
    std::vector<SceneInstance> instances;

    void add_mesh(TriangleMesh mesh, bool dynamic = false) {
        mesh.mesh_id = static_cast<int>(meshes.size());
        meshes.push_back(std::move(mesh));
        bvhs.push_back(build_bvh(meshes.back()));
        instances.push_back({&meshes.back(), &bvhs.back(), RigidTransform::identity(), dynamic});
    }

    void pop_mesh() {
        meshes.pop_back();
        bvhs.pop_back();
        instances.pop_back();
    }

    // downward probe against the block's geometry; sentinel when no hit
    std::optional<double> ground_height(double x, double y, double from_z = 10.0) const {
        const Ray ray{{x, y, from_z}, {0, 0, -1}, kDefaultRayTMax};
        std::optional<RayHit> best;
        for (const SceneInstance& inst : instances) {
            const auto hit = raycast_world(*inst.bvh, *inst.mesh, inst.transform, ray);
            if (hit && (!best || hit->t < best->t)) best = hit;
        }
        if (!best) return std::nullopt;
        return best->point.z;
    }
};

namespace detail {

inline TriangleMesh ground_plane() {
    return make_plane(-kBlockHalf, kBlockHalf, -kBlockHalf, kBlockHalf, 0.0);
}

inline void generate_ceiling(TerrainBlock& block, Rng& rng) {
    block.add_mesh(ground_plane());
    const double clearance = block.params.get("ceiling_height");
    const int count = block.params.get_count("ceiling_count");
    for (int i = 0; i < count; ++i) {
        const double sx = rng.uniform(0.5, 1.5);
        const double sy = rng.uniform(0.5, 1.5);
        const double cx = rng.uniform(-3.25, 3.25);
        const double cy = rng.uniform(-3.25, 3.25);
        block.add_mesh(make_box({cx - sx / 2, cy - sy / 2, clearance},
                                {cx + sx / 2, cy + sy / 2, clearance + kCeilingThickness}));
    }
}

inline void generate_forest(TerrainBlock& block, Rng& rng) {
    block.add_mesh(ground_plane());
    const double spacing = block.params.get("tree_spacing");
    const int count = block.params.get_count("tree_count");
    const double limit = kBlockHalf - kForestTreeRadius - 0.05;

    std::vector<Vec3> centers;
    const int max_attempts = 500 * count;
    int attempts = 0;
    while (static_cast<int>(centers.size()) < count) {
        if (++attempts > max_attempts)
            throw std::runtime_error("forest packing infeasible at requested spacing");
        const Vec3 c{rng.uniform(-limit, limit), rng.uniform(-limit, limit), 0.0};
        if (std::hypot(c.x, c.y) < kForestSpawnClearance) continue;
        bool ok = true;
        for (const Vec3& other : centers)
            if (std::hypot(c.x - other.x, c.y - other.y) < spacing) {
                ok = false;
                break;
            }
        if (ok) centers.push_back(c);
    }
    for (const Vec3& c : centers)
        block.add_mesh(make_cylinder(c.x, c.y, 0.0, kForestTreeHeight, kForestTreeRadius));
}

inline void generate_door(TerrainBlock& block, Rng& rng) {
    block.add_mesh(ground_plane());
    const double spacing = block.params.get("wall_spacing");
    const double width = block.params.get("door_width");
    const double door_y = rng.uniform(-2.0, 2.0);

    for (double wall_x : {-spacing / 2.0, spacing / 2.0}) {
        const double x0 = wall_x - kWallThickness / 2.0;
        const double x1 = wall_x + kWallThickness / 2.0;
        const double gap_lo = door_y - width / 2.0;
        const double gap_hi = door_y + width / 2.0;
        block.add_mesh(make_box({x0, -kBlockHalf, 0.0}, {x1, gap_lo, kWallHeight}));
        block.add_mesh(make_box({x0, gap_hi, 0.0}, {x1, kBlockHalf, kWallHeight}));
    }
}

inline void generate_platform(TerrainBlock& block) {
    block.add_mesh(ground_plane());
    const double h = block.params.get("platform_height");
    const double gap = block.params.get("platform_gap");

    // central square slab
    const double a0 = kPlatformRingWidth;
    block.add_mesh(make_box({-a0, -a0, 0.0}, {a0, a0, h}));

    // concentric square annuli, each built from four strips
    double inner = a0 + gap;
    while (inner + kPlatformRingWidth <= kBlockHalf) {
        const double outer = inner + kPlatformRingWidth;
        block.add_mesh(make_box({-outer, inner, 0.0}, {outer, outer, h}));    // north
        block.add_mesh(make_box({-outer, -outer, 0.0}, {outer, -inner, h}));  // south
        block.add_mesh(make_box({inner, -inner, 0.0}, {outer, inner, h}));    // east
        block.add_mesh(make_box({-outer, -inner, 0.0}, {-inner, inner, h}));  // west
        inner = outer + gap;
    }
    block.spawn.z = h;
}

inline void generate_pile(TerrainBlock& block) {
    const double spacing = block.params.get("cylinder_spacing");

    // perimeter ring at ground level around the recessed pit
    TriangleMesh ring = make_plane(-kBlockHalf, kBlockHalf, -kBlockHalf, -kPilePitHalf, 0.0);
    ring.append(make_plane(-kBlockHalf, kBlockHalf, kPilePitHalf, kBlockHalf, 0.0));
    ring.append(make_plane(-kBlockHalf, -kPilePitHalf, -kPilePitHalf, kPilePitHalf, 0.0));
    ring.append(make_plane(kPilePitHalf, kBlockHalf, -kPilePitHalf, kPilePitHalf, 0.0));
    block.add_mesh(std::move(ring));

    // pit floor and walls
    TriangleMesh pit = make_plane(-kPilePitHalf, kPilePitHalf, -kPilePitHalf, kPilePitHalf,
                                  -kPilePitDepth);
    const double lo = -kPilePitHalf, hi = kPilePitHalf, z0 = -kPilePitDepth;
    auto wall = [&](Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
        TriangleMesh w;
        w.vertices = {a, b, c, d};
        w.triangles = {{0, 1, 2}, {0, 2, 3}};
        pit.append(w);
    };
    wall({lo, lo, z0}, {hi, lo, z0}, {hi, lo, 0}, {lo, lo, 0});
    wall({lo, hi, z0}, {hi, hi, z0}, {hi, hi, 0}, {lo, hi, 0});
    wall({lo, lo, z0}, {lo, hi, z0}, {lo, hi, 0}, {lo, lo, 0});
    wall({hi, lo, z0}, {hi, hi, z0}, {hi, hi, 0}, {hi, lo, 0});
    block.add_mesh(std::move(pit));

    // stepping cylinders on a centered grid, tops flush with the ring
    const int steps = static_cast<int>(std::floor((kPilePitHalf - kPileCylinderRadius) / spacing));
    for (int i = -steps; i <= steps; ++i)
        for (int j = -steps; j <= steps; ++j)
            block.add_mesh(make_cylinder(i * spacing, j * spacing, -kPilePitDepth, 0.0,
                                         kPileCylinderRadius));
}

// Shared stair profile: treads extruded along y, mirrored in +x and -x.
// Upstair climbs away from a flat spawn strip; Downstair starts on a raised
// plateau and descends to ground at the block edge.
inline void generate_stairs(TerrainBlock& block, bool upward) {
    const double rise = block.params.get("step_height");
    const double run = block.params.get("step_width");
    const double span = kBlockHalf - kStairFlatHalf;
    const int n_steps = std::min(kStairMaxSteps,
                                 static_cast<int>(std::floor(span / run + 1e-9)));
    const double top = n_steps * rise;
    const double base_depth = 0.2;  // treads are solid boxes with real thickness

    if (upward) {
        // flat spawn strip
        block.add_mesh(make_box({-kStairFlatHalf, -kBlockHalf, -base_depth},
                                {kStairFlatHalf, kBlockHalf, 0.0}));
        for (int side : {+1, -1}) {
            for (int n = 1; n <= n_steps; ++n) {
                const double x0 = kStairFlatHalf + (n - 1) * run;
                const double x1 = n == n_steps ? kBlockHalf : kStairFlatHalf + n * run;
                const double lo = side > 0 ? x0 : -x1;
                const double hi = side > 0 ? x1 : -x0;
                block.add_mesh(
                    make_box({lo, -kBlockHalf, -base_depth}, {hi, kBlockHalf, n * rise}));
            }
        }
        block.spawn.z = 0.0;
    } else {
        // raised plateau at the spawn, descending treads outward
        block.add_mesh(make_box({-kStairFlatHalf, -kBlockHalf, -base_depth},
                                {kStairFlatHalf, kBlockHalf, top}));
        for (int side : {+1, -1}) {
            for (int n = 1; n <= n_steps; ++n) {
                const double x0 = kStairFlatHalf + (n - 1) * run;
                const double x1 = n == n_steps ? kBlockHalf : kStairFlatHalf + n * run;
                const double lo = side > 0 ? x0 : -x1;
                const double hi = side > 0 ? x1 : -x0;
                block.add_mesh(
                    make_box({lo, -kBlockHalf, -base_depth}, {hi, kBlockHalf, top - n * rise}));
            }
        }
        block.spawn.z = top;
    }
}

}  // namespace detail

// Adds or removes the training-support plane under the Pile cylinders so its
// presence matches the difficulty. The overlay is always the last instance.
inline void pile_overlay(TerrainBlock& block, double s) {
    if (block.family != TerrainFamily::kPile)
        throw std::invalid_argument("pile overlay applies to pile blocks only");
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("difficulty must lie in [0, 1]");
    const bool want = s < kPileOverlayThreshold;
    if (want && !block.overlay_present) {
        block.add_mesh(make_plane(-kPilePitHalf, kPilePitHalf, -kPilePitHalf, kPilePitHalf,
                                  -kPileOverlayDrop));
        block.overlay_present = true;
    } else if (!want && block.overlay_present) {
        block.pop_mesh();
        block.overlay_present = false;
    }
}

// Deterministic per (family, s, seed). Spawn is the block center at standing
// height.
inline TerrainBlock generate_block(TerrainFamily family, double s, uint64_t seed) {
    TerrainBlock block;
    block.family = family;
    block.difficulty = s;
    block.seed = seed;
    block.params = interpolate_params(family, s);
    block.spawn = {0, 0, 0};
    Rng rng(seed);

    switch (family) {
        case TerrainFamily::kPlane:
            block.add_mesh(detail::ground_plane());
            break;
        case TerrainFamily::kCeiling:
            detail::generate_ceiling(block, rng);
            break;
        case TerrainFamily::kForest:
            detail::generate_forest(block, rng);
            break;
        case TerrainFamily::kDoor:
            detail::generate_door(block, rng);
            break;
        case TerrainFamily::kPlatform:
            detail::generate_platform(block);
            break;
        case TerrainFamily::kPile:
            detail::generate_pile(block);
            pile_overlay(block, s);
            break;
        case TerrainFamily::kUpstair:
            detail::generate_stairs(block, true);
            break;
        case TerrainFamily::kDownstair:
            detail::generate_stairs(block, false);
            break;
    }
    return block;
}

// ======================================================
// Curriculum
// ======================================================
struct CurriculumState {
    std::vector<double> difficulty;
    double delta = 0.1;

    explicit CurriculumState(size_t env_count, double initial = 0.0, double step = 0.1)
        : difficulty(env_count, initial), delta(step) {}
};

inline void curriculum_update(CurriculumState& state, size_t env_index, bool success) {
    if (env_index >= state.difficulty.size()) throw std::out_of_range("bad environment index");
    double& s = state.difficulty[env_index];
    s = std::clamp(s + (success ? state.delta : -state.delta), 0.0, 1.0);
}

// ======================================================
// Goal sampling: uniform over the block perimeter, grounded by raycast
// ======================================================
inline Vec3 sample_goal(const TerrainBlock& block, uint64_t seed) {
    Rng rng(seed);
    const double u = rng.uniform(0.0, 8.0 * kBlockHalf);
    double x, y;
    const double side = 2.0 * kBlockHalf;
    if (u < side) {
        x = -kBlockHalf + u;
        y = -kBlockHalf;
    } else if (u < 2 * side) {
        x = kBlockHalf;
        y = -kBlockHalf + (u - side);
    } else if (u < 3 * side) {
        x = kBlockHalf - (u - 2 * side);
        y = kBlockHalf;
    } else {
        x = -kBlockHalf;
        y = kBlockHalf - (u - 3 * side);
    }
    const auto z = block.ground_height(x, y);
    return {x, y, z.value_or(0.0)};
}

// ======================================================
// Block export: meshes plus a plain-text manifest
// ======================================================
inline KvFile block_manifest(const TerrainBlock& block) {
    KvFile kv;
    kv.set("family", std::string(family_name(block.family)));
    kv.set("difficulty", block.difficulty);
    kv.set("seed", block.seed);
    for (const auto& [name, value] : block.params.values) kv.set("param." + name, value);
    kv.set("mesh_count", static_cast<int64_t>(block.meshes.size()));
    kv.set("spawn_x", block.spawn.x);
    kv.set("spawn_y", block.spawn.y);
    kv.set("spawn_z", block.spawn.z);
    kv.set("overlay_present", std::string(block.overlay_present ? "1" : "0"));
    return kv;
}

inline void export_block(const TerrainBlock& block, const std::string& dir, bool binary = false) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    block_manifest(block).save((fs::path(dir) / "manifest.txt").string());
    for (size_t i = 0; i < block.meshes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mesh_%03zu.%s", i, binary ? "bin" : "obj");
        const std::string path = (fs::path(dir) / name).string();
        if (binary)
            save_mesh_binary(block.meshes[i], path);
        else
            save_obj(block.meshes[i], path);
    }
}

}  // namespace vxs
