#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vxs/lidar.hpp"
#include "vxs/math.hpp"

namespace vxs {

// ======================================================
// GridBounds
// ======================================================
// Robot-centric sampling volume, half-open cells [min, min + res) so every
// in-range point belongs to exactly one cell.
struct GridBounds {
    Vec3 min{-0.8, -0.8, -1.0};
    Vec3 max{0.8, 0.8, 1.0};
    double resolution = 0.05;

    int cells_x() const { return axis_cells(min.x, max.x); }
    int cells_y() const { return axis_cells(min.y, max.y); }
    int cells_z() const { return axis_cells(min.z, max.z); }

    void validate() const {
        if (resolution <= 0) throw std::invalid_argument("resolution must be positive");
        for (int a = 0; a < 3; ++a) {
            const double span = max[a] - min[a];
            if (span <= 0) throw std::invalid_argument("bounds must have positive extent");
            const double cells = span / resolution;
            // tolerance covers f32-quantized bounds read back from grid files
            if (std::abs(cells - std::round(cells)) > 1e-6)
                throw std::invalid_argument("extent must be an integral number of cells");
        }
    }

private:
    int axis_cells(double lo, double hi) const {
        return static_cast<int>(std::round((hi - lo) / resolution));
    }
};

struct CellIndex {
    int c = 0;  // z slice
    int v = 0;  // y row
    int u = 0;  // x column
    bool operator==(const CellIndex&) const = default;
};

// floor((p - min)/res) per axis; none outside the half-open volume. The
// explicit >= max test runs first so the upper boundary maps to none even
// when the division would round across it; the clamp absorbs the opposite
// rounding for points just under the boundary.
inline std::optional<CellIndex> point_to_cell(const Vec3& p, const GridBounds& b) {
    int idx[3];
    const int dims[3] = {b.cells_x(), b.cells_y(), b.cells_z()};
    for (int a = 0; a < 3; ++a) {
        if (p[a] < b.min[a] || p[a] >= b.max[a]) return std::nullopt;
        int i = static_cast<int>(std::floor((p[a] - b.min[a]) / b.resolution));
        idx[a] = std::clamp(i, 0, dims[a] - 1);
    }
    return CellIndex{idx[2], idx[1], idx[0]};
}

// ======================================================
// VoxelGrid
// ======================================================
// Binary occupancy over the bounds, indexed (c, v, u) = (z slice, y row,
// x column), storage order c outermost / u innermost.
struct VoxelGrid {
    GridBounds bounds;
    RigidTransform frame = RigidTransform::identity();  // torso pose the grid was built in
    std::vector<uint8_t> occupancy;                     // one byte per cell, values 0/1

    VoxelGrid() : VoxelGrid(GridBounds{}) {}
    explicit VoxelGrid(const GridBounds& b) : bounds(b) {
        bounds.validate();
        occupancy.assign(static_cast<size_t>(depth()) * height() * width(), 0);
    }

    int depth() const { return bounds.cells_z(); }   // C
    int height() const { return bounds.cells_y(); }  // H
    int width() const { return bounds.cells_x(); }   // W

    size_t flat_index(int c, int v, int u) const {
        return (static_cast<size_t>(c) * height() + v) * width() + u;
    }
    uint8_t at(int c, int v, int u) const { return occupancy[flat_index(c, v, u)]; }
    void set(int c, int v, int u, uint8_t value) { occupancy[flat_index(c, v, u)] = value; }

    size_t occupied_count() const {
        size_t n = 0;
        for (uint8_t o : occupancy) n += o;
        return n;
    }

    bool same_occupancy(const VoxelGrid& other) const {
        return depth() == other.depth() && height() == other.height() &&
               width() == other.width() && occupancy == other.occupancy;
    }
};

// Every world point is mapped into the torso frame and binned; a cell is
// occupied iff at least one point lands in it.
inline VoxelGrid voxelize(const std::vector<LidarScan>& scans, const RigidTransform& torso_pose,
                          const GridBounds& bounds = GridBounds{}) {
    VoxelGrid grid(bounds);
    grid.frame = torso_pose;
    for (const LidarScan& scan : scans)
        for (const Vec3& p : scan.points)
            if (const auto cell = point_to_cell(torso_pose.apply_inverse(p), bounds))
                grid.set(cell->c, cell->v, cell->u, 1);
    return grid;
}

// Independently zero each OCCUPIED cell with probability frac; empty cells
// consume no randomness, so the draw sequence depends only on the occupied
// set in storage order.
inline VoxelGrid apply_dropout(const VoxelGrid& grid, double frac, Rng& rng) {
    if (frac < 0.0 || frac > 1.0) throw std::invalid_argument("dropout fraction out of range");
    VoxelGrid out = grid;
    if (frac == 0.0) return out;
    for (uint8_t& cell : out.occupancy)
        if (cell && rng.bernoulli(frac)) cell = 0;
    return out;
}

// Mirror across the x-z plane: y row v maps to H-1-v. Involution.
inline VoxelGrid flip_y(const VoxelGrid& grid) {
    VoxelGrid out = grid;
    const int C = grid.depth(), H = grid.height(), W = grid.width();
    for (int c = 0; c < C; ++c)
        for (int v = 0; v < H; ++v)
            for (int u = 0; u < W; ++u)
                out.occupancy[out.flat_index(c, H - 1 - v, u)] = grid.at(c, v, u);
    return out;
}

// ======================================================
// HeightMap
// ======================================================
// 33x33 privileged terrain samples around the base, 0.05 m pitch spanning
// [-0.8, 0.8] inclusive; entries are terrain z minus base z. Flattened
// row-major with x fastest: index = iy*33 + ix.
struct HeightMap {
    static constexpr int kSize = 33;
    static constexpr double kPitch = 0.05;
    static constexpr double kHalfSpan = 0.8;
    static constexpr double kNoReturn = -1.0;

    std::vector<double> values = std::vector<double>(kSize * kSize, 0.0);

    double at(int iy, int ix) const { return values[static_cast<size_t>(iy) * kSize + ix]; }
    double& at(int iy, int ix) { return values[static_cast<size_t>(iy) * kSize + ix]; }
};

// Vertical downward rays from well above the terrain, one per grid point.
// Grid points are offsets in the base frame mapped to world and projected to
// their world x,y. Columns with no return record the sentinel.
inline HeightMap sample_height_map(const std::vector<SceneInstance>& terrain,
                                   const RigidTransform& base_pose,
                                   double ray_start_z = 10.0) {
    HeightMap hm;
    for (int iy = 0; iy < HeightMap::kSize; ++iy) {
        for (int ix = 0; ix < HeightMap::kSize; ++ix) {
            const Vec3 offset{-HeightMap::kHalfSpan + ix * HeightMap::kPitch,
                              -HeightMap::kHalfSpan + iy * HeightMap::kPitch, 0.0};
            const Vec3 world = base_pose.apply(offset);
            const Ray ray{{world.x, world.y, ray_start_z}, {0, 0, -1}, kDefaultRayTMax};
            std::optional<RayHit> best;
            for (const SceneInstance& inst : terrain) {
                const auto hit = raycast_world(*inst.bvh, *inst.mesh, inst.transform, ray);
                if (hit && (!best || hit->t < best->t)) best = hit;
            }
            hm.at(iy, ix) =
                best ? best->point.z - base_pose.translation.z : HeightMap::kNoReturn;
        }
    }
    return hm;
}

// Mirror the sample lattice across the x-z plane: row iy maps to 32-iy.
inline HeightMap flip_y(const HeightMap& hm) {
    HeightMap out;
    for (int iy = 0; iy < HeightMap::kSize; ++iy)
        for (int ix = 0; ix < HeightMap::kSize; ++ix)
            out.at(HeightMap::kSize - 1 - iy, ix) = hm.at(iy, ix);
    return out;
}

// ======================================================
// Voxel-grid file format
// ======================================================
// "VXGRID1", u32 dims (C,H,W), f32 bounds (min xyz, max xyz), f32 cell
// size, then C*H*W occupancy bits packed LSB-first in storage order.
inline constexpr char kGridMagic[] = "VXGRID1";

inline void save_grid(const VoxelGrid& grid, std::ostream& out) {
    out.write(kGridMagic, 7);
    const uint32_t dims[3] = {static_cast<uint32_t>(grid.depth()),
                              static_cast<uint32_t>(grid.height()),
                              static_cast<uint32_t>(grid.width())};
    out.write(reinterpret_cast<const char*>(dims), 12);
    const float bounds[7] = {
        static_cast<float>(grid.bounds.min.x), static_cast<float>(grid.bounds.min.y),
        static_cast<float>(grid.bounds.min.z), static_cast<float>(grid.bounds.max.x),
        static_cast<float>(grid.bounds.max.y), static_cast<float>(grid.bounds.max.z),
        static_cast<float>(grid.bounds.resolution)};
    out.write(reinterpret_cast<const char*>(bounds), 28);
    std::vector<uint8_t> packed((grid.occupancy.size() + 7) / 8, 0);
    for (size_t i = 0; i < grid.occupancy.size(); ++i)
        if (grid.occupancy[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    out.write(reinterpret_cast<const char*>(packed.data()),
              static_cast<std::streamsize>(packed.size()));
}

inline void save_grid(const VoxelGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_grid(grid, out);
}

inline VoxelGrid load_grid(std::istream& in) {
    char magic[7];
    in.read(magic, 7);
    if (!in || std::memcmp(magic, kGridMagic, 7) != 0)
        throw std::runtime_error("bad grid magic");
    uint32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), 12);
    float bounds[7];
    in.read(reinterpret_cast<char*>(bounds), 28);
    if (!in) throw std::runtime_error("truncated grid header");

    GridBounds gb;
    gb.min = {bounds[0], bounds[1], bounds[2]};
    gb.max = {bounds[3], bounds[4], bounds[5]};
    gb.resolution = bounds[6];
    // f32 round-trip of the bounds must still resolve to the stored dims
    VoxelGrid grid(gb);
    if (grid.depth() != static_cast<int>(dims[0]) || grid.height() != static_cast<int>(dims[1]) ||
        grid.width() != static_cast<int>(dims[2]))
        throw std::runtime_error("grid dims disagree with bounds");

    std::vector<uint8_t> packed((grid.occupancy.size() + 7) / 8);
    in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!in) throw std::runtime_error("truncated grid payload");
    for (size_t i = 0; i < grid.occupancy.size(); ++i)
        grid.occupancy[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return grid;
}

inline VoxelGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return load_grid(in);
}

// Height map as CSV: 33 rows of 33 comma-separated entries (row = y index),
// or a single flat 1089-value line in the same order with flat = true.
inline void save_height_map_csv(const HeightMap& hm, std::ostream& out, bool flat = false) {
    out.precision(17);
    if (flat) {
        for (size_t i = 0; i < hm.values.size(); ++i)
            out << hm.values[i] << (i + 1 < hm.values.size() ? "," : "\n");
        return;
    }
    for (int iy = 0; iy < HeightMap::kSize; ++iy)
        for (int ix = 0; ix < HeightMap::kSize; ++ix)
            out << hm.at(iy, ix) << (ix + 1 < HeightMap::kSize ? "," : "\n");
}

inline void save_height_map_csv(const HeightMap& hm, const std::string& path, bool flat = false) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_height_map_csv(hm, out, flat);
}

}  // namespace vxs
