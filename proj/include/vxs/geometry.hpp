#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vxs/math.hpp"

namespace vxs {

inline constexpr double kDefaultRayTMax = 100.0;  // exceeds any block diagonal
inline constexpr double kBaryEpsilon = 1e-9;
inline constexpr double kDegenerateArea = 1e-12;

// ======================================================
// Aabb
// ======================================================
struct Aabb {
    Vec3 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity()};
    Vec3 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity()};

    void expand(const Vec3& p) {
        min = min_componentwise(min, p);
        max = max_componentwise(max, p);
    }
    void expand(const Aabb& b) {
        min = min_componentwise(min, b.min);
        max = max_componentwise(max, b.max);
    }
    bool valid() const { return min.x <= max.x && min.y <= max.y && min.z <= max.z; }
    Vec3 extent() const { return max - min; }

    int longest_axis() const {
        const Vec3 e = extent();
        int axis = 0;
        if (e.y > e.x) axis = 1;
        if (e.z > e[axis]) axis = 2;
        return axis;
    }

    bool contains(const Aabb& inner, double tol = 0.0) const {
        return inner.min.x >= min.x - tol && inner.min.y >= min.y - tol &&
               inner.min.z >= min.z - tol && inner.max.x <= max.x + tol &&
               inner.max.y <= max.y + tol && inner.max.z <= max.z + tol;
    }

    // Slab test; hit iff the [t_enter, t_exit] interval overlaps [0, t_limit].
    bool intersects_ray(const Vec3& origin, const Vec3& inv_dir, double t_limit) const {
        double t0 = 0.0, t1 = t_limit;
        for (int i = 0; i < 3; ++i) {
            const double ta = (min[i] - origin[i]) * inv_dir[i];
            const double tb = (max[i] - origin[i]) * inv_dir[i];
            // 0 * inf: the origin sits exactly on a slab plane and the ray runs
            // parallel to it, staying on the inclusive boundary for all t, so
            // this axis imposes no constraint.
            if (std::isnan(ta) || std::isnan(tb)) continue;
            t0 = std::max(t0, std::min(ta, tb));
            t1 = std::min(t1, std::max(ta, tb));
            if (t0 > t1) return false;
        }
        return true;
    }
};

// ======================================================
// Ray / RayHit
// ======================================================
struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit norm
    double t_max = kDefaultRayTMax;
};

struct RayHit {
    double t = 0.0;
    Vec3 point;
    int mesh_id = 0;
    uint32_t triangle_index = 0;
};

// ======================================================
// TriangleMesh
// ======================================================
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<uint32_t, 3>> triangles;
    int mesh_id = 0;

    size_t triangle_count() const { return triangles.size(); }

    Vec3 vertex(uint32_t i) const { return vertices[i]; }

    std::array<Vec3, 3> triangle(uint32_t t) const {
        const auto& tri = triangles[t];
        return {vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]};
    }

    double triangle_area(uint32_t t) const {
        const auto v = triangle(t);
        return 0.5 * (v[1] - v[0]).cross(v[2] - v[0]).norm();
    }

    Aabb triangle_bounds(uint32_t t) const {
        Aabb b;
        for (const auto& p : triangle(t)) b.expand(p);
        return b;
    }

    Aabb bounds() const {
        Aabb b;
        for (const auto& v : vertices) b.expand(v);
        return b;
    }

    void validate() const {
        if (triangles.empty()) throw std::invalid_argument("mesh has no triangles");
        for (const auto& tri : triangles)
            for (uint32_t idx : tri)
                if (idx >= vertices.size()) throw std::invalid_argument("triangle index out of range");
        for (uint32_t t = 0; t < triangles.size(); ++t)
            if (triangle_area(t) <= kDegenerateArea)
                throw std::invalid_argument("degenerate triangle " + std::to_string(t));
    }

    void append(const TriangleMesh& other) {
        const uint32_t base = static_cast<uint32_t>(vertices.size());
        vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
        for (const auto& tri : other.triangles)
            triangles.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
    }
};

// ======================================================
// Ray-triangle intersection
// ======================================================
// Single consistent test used by both BVH traversal and brute-force checks:
// Moller-Trumbore with an inclusive barycentric epsilon so rays through shared
// edges register on both incident triangles (the caller tie-breaks by index).
inline std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                                const Vec3& b, const Vec3& c, double t_max) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-14) return std::nullopt;  // parallel
    const double inv_det = 1.0 / det;
    const Vec3 tvec = origin - a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < -kBaryEpsilon || u > 1.0 + kBaryEpsilon) return std::nullopt;
    const Vec3 qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < -kBaryEpsilon || u + v > 1.0 + kBaryEpsilon) return std::nullopt;
    const double t = e2.dot(qvec) * inv_det;
    if (t < 0.0 || t > t_max) return std::nullopt;
    return t;
}

// ======================================================
// Bvh
// ======================================================
// Median split on the longest axis, leaf size <= 4. Nodes stored as a flat
// array; immutable after build. Triangle order is permuted into prim_order,
// leaves reference contiguous ranges of it.
class Bvh {
public:
    struct Node {
        Aabb bounds;
        int32_t left = -1;    // interior: child node indices
        int32_t right = -1;
        uint32_t first = 0;   // leaf: range into prim_order
        uint32_t count = 0;   // leaf iff count > 0
        bool is_leaf() const { return count > 0; }
    };

    static constexpr uint32_t kLeafSize = 4;

    Bvh() = default;

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<uint32_t>& prim_order() const { return prim_order_; }
    const Aabb& root_bounds() const { return nodes_.front().bounds; }
    bool empty() const { return nodes_.empty(); }

    static Bvh build(const TriangleMesh& mesh) {
        mesh.validate();
        Bvh bvh;
        const uint32_t n = static_cast<uint32_t>(mesh.triangle_count());
        bvh.prim_order_.resize(n);
        for (uint32_t i = 0; i < n; ++i) bvh.prim_order_[i] = i;

        std::vector<Aabb> tri_bounds(n);
        std::vector<Vec3> centroids(n);
        for (uint32_t i = 0; i < n; ++i) {
            tri_bounds[i] = mesh.triangle_bounds(i);
            centroids[i] = (tri_bounds[i].min + tri_bounds[i].max) * 0.5;
        }

        bvh.nodes_.reserve(2 * n);
        bvh.build_range(0, n, tri_bounds, centroids);
        return bvh;
    }

private:
    int32_t build_range(uint32_t begin, uint32_t end, const std::vector<Aabb>& tri_bounds,
                        const std::vector<Vec3>& centroids) {
        Node node;
        for (uint32_t i = begin; i < end; ++i) node.bounds.expand(tri_bounds[prim_order_[i]]);

        const uint32_t count = end - begin;
        const int32_t node_index = static_cast<int32_t>(nodes_.size());
        nodes_.push_back(node);

        if (count <= kLeafSize) {
            nodes_[node_index].first = begin;
            nodes_[node_index].count = count;
            return node_index;
        }

        const int axis = nodes_[node_index].bounds.longest_axis();
        const uint32_t mid = begin + count / 2;
        std::nth_element(prim_order_.begin() + begin, prim_order_.begin() + mid,
                         prim_order_.begin() + end, [&](uint32_t a, uint32_t b) {
                             const double ca = centroids[a][axis], cb = centroids[b][axis];
                             return ca < cb || (ca == cb && a < b);  // index tiebreak: determinism
                         });

        const int32_t left = build_range(begin, mid, tri_bounds, centroids);
        const int32_t right = build_range(mid, end, tri_bounds, centroids);
        nodes_[node_index].left = left;
        nodes_[node_index].right = right;
        return node_index;
    }

    std::vector<Node> nodes_;
    std::vector<uint32_t> prim_order_;
};

inline Bvh build_bvh(const TriangleMesh& mesh) { return Bvh::build(mesh); }

namespace detail {
// Minimum-t winner with lowest-triangle-index tiebreak; order-independent, so
// BVH traversal and brute-force iteration agree on shared-edge ties.
inline void consider_hit(double t, uint32_t tri, std::optional<double>& best_t,
                         uint32_t& best_tri) {
    if (!best_t || t < *best_t || (t == *best_t && tri < best_tri)) {
        best_t = t;
        best_tri = tri;
    }
}
}  // namespace detail

inline std::optional<RayHit> raycast_local(const Bvh& bvh, const TriangleMesh& mesh,
                                           const Ray& ray) {
    if (bvh.empty()) return std::nullopt;
    const Vec3 inv_dir{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};

    std::optional<double> best_t;
    uint32_t best_tri = 0;

    std::array<int32_t, 64> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const auto& node = bvh.nodes()[static_cast<size_t>(stack[--sp])];
        const double t_limit = best_t ? *best_t : ray.t_max;
        if (!node.bounds.intersects_ray(ray.origin, inv_dir, t_limit)) continue;
        if (node.is_leaf()) {
            for (uint32_t i = node.first; i < node.first + node.count; ++i) {
                const uint32_t tri = bvh.prim_order()[i];
                const auto v = mesh.triangle(tri);
                if (auto t = intersect_triangle(ray.origin, ray.direction, v[0], v[1], v[2],
                                                ray.t_max))
                    detail::consider_hit(*t, tri, best_t, best_tri);
            }
        } else {
            stack[sp++] = node.left;
            stack[sp++] = node.right;
        }
    }

    if (!best_t) return std::nullopt;
    return RayHit{*best_t, ray.origin + ray.direction * (*best_t), mesh.mesh_id, best_tri};
}

// Brute-force nearest hit over all triangles; the reference the BVH must match.
inline std::optional<RayHit> raycast_brute_force(const TriangleMesh& mesh, const Ray& ray) {
    std::optional<double> best_t;
    uint32_t best_tri = 0;
    for (uint32_t tri = 0; tri < mesh.triangle_count(); ++tri) {
        const auto v = mesh.triangle(tri);
        if (auto t = intersect_triangle(ray.origin, ray.direction, v[0], v[1], v[2], ray.t_max))
            detail::consider_hit(*t, tri, best_t, best_tri);
    }
    if (!best_t) return std::nullopt;
    return RayHit{*best_t, ray.origin + ray.direction * (*best_t), mesh.mesh_id, best_tri};
}

// Raycast against a rigidly transformed mesh: map the ray into the mesh's
// local frame (inverse on the origin, inverse rotation on the direction),
// query the precomputed BVH there, then map the hit point forward into world.
// t is frame-invariant because the rotation preserves lengths.
inline std::optional<RayHit> raycast_world(const Bvh& bvh, const TriangleMesh& mesh,
                                           const RigidTransform& transform, const Ray& ray) {
    const Ray local_ray{transform.apply_inverse(ray.origin), transform.rotate_inverse(ray.direction),
                        ray.t_max};
    auto hit = raycast_local(bvh, mesh, local_ray);
    if (!hit) return std::nullopt;
    hit->point = transform.apply(hit->point);
    return hit;
}

// ======================================================
// Mesh IO: ASCII OBJ subset (v/f records, 1-based) and raw binary
// ======================================================
inline constexpr char kMeshMagic[] = "VXMESH1";  // 7 bytes on disk

inline void save_obj(const TriangleMesh& mesh, std::ostream& out) {
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

inline void save_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_obj(mesh, out);
}

inline TriangleMesh load_obj(std::istream& in, int mesh_id = 0) {
    TriangleMesh mesh;
    mesh.mesh_id = mesh_id;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) throw std::runtime_error("malformed OBJ vertex: " + line);
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<uint32_t, 3> tri{};
            for (int i = 0; i < 3; ++i) {
                std::string tok;
                if (!(ls >> tok)) throw std::runtime_error("malformed OBJ face: " + line);
                const long idx = std::stol(tok.substr(0, tok.find('/')));  // 1-based
                if (idx < 1) throw std::runtime_error("OBJ face index must be positive: " + line);
                tri[static_cast<size_t>(i)] = static_cast<uint32_t>(idx - 1);
            }
            mesh.triangles.push_back(tri);
        }
        // other record types ignored
    }
    return mesh;
}

inline TriangleMesh load_obj(const std::string& path, int mesh_id = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return load_obj(in, mesh_id);
}

inline void save_mesh_binary(const TriangleMesh& mesh, std::ostream& out) {
    out.write(kMeshMagic, 7);
    const uint32_t nv = static_cast<uint32_t>(mesh.vertices.size());
    const uint32_t nt = static_cast<uint32_t>(mesh.triangles.size());
    out.write(reinterpret_cast<const char*>(&nv), 4);
    out.write(reinterpret_cast<const char*>(&nt), 4);
    for (const auto& v : mesh.vertices) {
        const float f[3] = {static_cast<float>(v.x), static_cast<float>(v.y),
                            static_cast<float>(v.z)};
        out.write(reinterpret_cast<const char*>(f), 12);
    }
    for (const auto& t : mesh.triangles)
        out.write(reinterpret_cast<const char*>(t.data()), 12);
}

inline void save_mesh_binary(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_mesh_binary(mesh, out);
}

inline TriangleMesh load_mesh_binary(std::istream& in, int mesh_id = 0) {
    char magic[7];
    in.read(magic, 7);
    if (!in || std::memcmp(magic, kMeshMagic, 7) != 0)
        throw std::runtime_error("bad mesh magic");
    uint32_t nv = 0, nt = 0;
    in.read(reinterpret_cast<char*>(&nv), 4);
    in.read(reinterpret_cast<char*>(&nt), 4);
    TriangleMesh mesh;
    mesh.mesh_id = mesh_id;
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices) {
        float f[3];
        in.read(reinterpret_cast<char*>(f), 12);
        v = {f[0], f[1], f[2]};
    }
    mesh.triangles.resize(nt);
    for (auto& t : mesh.triangles) in.read(reinterpret_cast<char*>(t.data()), 12);
    if (!in) throw std::runtime_error("truncated mesh file");
    return mesh;
}

inline TriangleMesh load_mesh_binary(const std::string& path, int mesh_id = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return load_mesh_binary(in, mesh_id);
}

// ======================================================
// Primitive builders
// ======================================================
inline TriangleMesh make_plane(double x0, double x1, double y0, double y1, double z,
                               int mesh_id = 0) {
    TriangleMesh m;
    m.mesh_id = mesh_id;
    m.vertices = {{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

inline TriangleMesh make_box(const Vec3& lo, const Vec3& hi, int mesh_id = 0) {
    TriangleMesh m;
    m.mesh_id = mesh_id;
    m.vertices = {{lo.x, lo.y, lo.z}, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {lo.x, hi.y, lo.z},
                  {lo.x, lo.y, hi.z}, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}};
    m.triangles = {{0, 2, 1}, {0, 3, 2},   // bottom (z = lo.z)
                   {4, 5, 6}, {4, 6, 7},   // top
                   {0, 1, 5}, {0, 5, 4},   // y = lo.y
                   {3, 6, 2}, {3, 7, 6},   // y = hi.y
                   {0, 4, 7}, {0, 7, 3},   // x = lo.x
                   {1, 2, 6}, {1, 6, 5}};  // x = hi.x
    return m;
}

inline TriangleMesh make_cylinder(double cx, double cy, double z0, double z1, double radius,
                                  int segments = 16, int mesh_id = 0) {
    TriangleMesh m;
    m.mesh_id = mesh_id;
    const uint32_t n = static_cast<uint32_t>(segments);
    for (uint32_t i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * i / n;
        m.vertices.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a), z0});
    }
    for (uint32_t i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * i / n;
        m.vertices.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a), z1});
    }
    const uint32_t cb = 2 * n, ct = 2 * n + 1;
    m.vertices.push_back({cx, cy, z0});
    m.vertices.push_back({cx, cy, z1});
    for (uint32_t i = 0; i < n; ++i) {
        const uint32_t j = (i + 1) % n;
        m.triangles.push_back({i, j, n + i});          // side
        m.triangles.push_back({j, n + j, n + i});
        m.triangles.push_back({cb, j, i});             // bottom cap
        m.triangles.push_back({ct, n + i, n + j});     // top cap
    }
    return m;
}

}  // namespace vxs
