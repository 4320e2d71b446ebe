#include "cortifield/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "cortifield/errors.hpp"
#include "cortifield/parallel.hpp"
#include "cortifield/volume.hpp"

namespace cf {

double TriangleMesh::face_area(int f) const {
    const Vec3 a = face_vertex(f, 0), b = face_vertex(f, 1), c = face_vertex(f, 2);
    return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::total_area() const {
    double s = 0.0;
    for (int f = 0; f < static_cast<int>(faces.size()); ++f) s += face_area(f);
    return s;
}

Box3 TriangleMesh::bounds() const {
    Box3 b;
    if (vertices.empty()) return b;
    b.lo = b.hi = vertices[0];
    for (const Vec3& v : vertices) b.expand(v);
    return b;
}

void TriangleMesh::validate() const {
    const int nv = static_cast<int>(vertices.size());
    for (const auto& f : faces) {
        for (int c = 0; c < 3; ++c)
            require(f[static_cast<size_t>(c)] >= 0 && f[static_cast<size_t>(c)] < nv, errc::invalid_argument,
                    "face index out of range");
        require(f[0] != f[1] && f[1] != f[2] && f[0] != f[2], errc::invalid_argument,
                "face references a vertex twice");
    }
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Affine& t) {
    TriangleMesh out = mesh;
    for (Vec3& v : out.vertices) v = t.apply(v);
    // A reflection flips orientation; rewind faces to keep outward CCW.
    if (t.det3() < 0.0)
        for (auto& f : out.faces) std::swap(f[1], f[2]);
    return out;
}

TriangleMesh make_icosphere(int subdivisions) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                  {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                  {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    for (Vec3& v : m.vertices) v = v.normalized();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(m.vertices.size());
            m.vertices.push_back((m.vertices[static_cast<size_t>(a)] + m.vertices[static_cast<size_t>(b)])
                                     .normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.faces = std::move(next);
    }
    return m;
}

// --- topology ---------------------------------------------------------------

namespace {
uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

std::unordered_map<uint64_t, int> edge_face_counts(const TriangleMesh& mesh) {
    std::unordered_map<uint64_t, int> counts;
    counts.reserve(mesh.faces.size() * 2);
    for (const auto& f : mesh.faces) {
        ++counts[edge_key(f[0], f[1])];
        ++counts[edge_key(f[1], f[2])];
        ++counts[edge_key(f[2], f[0])];
    }
    return counts;
}
} // namespace

int euler_characteristic(const TriangleMesh& mesh) {
    const auto edges = edge_face_counts(mesh);
    return static_cast<int>(mesh.vertices.size()) - static_cast<int>(edges.size()) +
           static_cast<int>(mesh.faces.size());
}

bool is_closed(const TriangleMesh& mesh) {
    if (mesh.faces.empty()) return false;
    for (const auto& [key, count] : edge_face_counts(mesh))
        if (count != 2) return false;
    return true;
}

int genus(const TriangleMesh& mesh) {
    require(is_closed(mesh), errc::not_closed, "genus needs a closed mesh (every edge on exactly 2 faces)");
    const int chi = euler_characteristic(mesh);
    return (2 - chi) / 2;
}

double signed_volume(const TriangleMesh& mesh) {
    double vol = 0.0;
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Vec3 a = mesh.face_vertex(f, 0), b = mesh.face_vertex(f, 1), c = mesh.face_vertex(f, 2);
        vol += a.dot(b.cross(c));
    }
    return vol / 6.0;
}

// --- sampling ---------------------------------------------------------------

std::vector<Vec3> sample_on_surface(const TriangleMesh& mesh, int64_t n, Rng& rng) {
    require(n > 0, errc::invalid_argument, "sample count must be positive");
    const int nf = static_cast<int>(mesh.faces.size());
    std::vector<double> cdf(static_cast<size_t>(nf));
    double acc = 0.0;
    for (int f = 0; f < nf; ++f) {
        acc += mesh.face_area(f);
        cdf[static_cast<size_t>(f)] = acc;
    }
    require(acc > 0.0, errc::zero_area, "mesh has zero total area");
    std::vector<Vec3> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double target = rng.uniform() * acc;
        const int f = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), target) - cdf.begin());
        const Vec3 a = mesh.face_vertex(f, 0), b = mesh.face_vertex(f, 1), c = mesh.face_vertex(f, 2);
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        out.push_back(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    }
    return out;
}

// --- voxelization -----------------------------------------------------------

Volume voxelize(const TriangleMesh& mesh, const Bvh& bvh, std::array<int, 3> dims, Vec3 spacing,
                const Affine& affine) {
    Volume out;
    out.dims = dims;
    out.spacing = spacing;
    out.affine = affine;
    out.data.assign(static_cast<size_t>(out.size()), 0.0f);
    const int64_t plane = int64_t(dims[0]) * dims[1];
    // One z-slab per chunk; each voxel is written by exactly one worker.
    parallel_ranges(dims[2], 1, [&](int64_t kb, int64_t ke, int64_t) {
        for (int64_t k = kb; k < ke; ++k)
            for (int j = 0; j < dims[1]; ++j)
                for (int i = 0; i < dims[0]; ++i) {
                    const Vec3 p = out.affine.apply({double(i), double(j), double(k)});
                    if (bvh.is_inside(p))
                        out.data[static_cast<size_t>(k * plane + j * dims[0] + i)] = 1.0f;
                }
    });
    return out;
}

// --- surface sets -----------------------------------------------------------

const char* SurfaceSet::channel_name(int i) {
    static const char* names[4] = {"left_inner", "left_outer", "right_inner", "right_outer"};
    return names[i];
}

SurfaceSet load_surface_set(const std::string& dir) {
    SurfaceSet s;
    for (int i = 0; i < 4; ++i)
        s.meshes[static_cast<size_t>(i)] = load_mesh(dir + "/" + SurfaceSet::channel_name(i) + ".obj");
    return s;
}

void save_surface_set(const SurfaceSet& s, const std::string& dir) {
    for (int i = 0; i < 4; ++i)
        save_mesh(s.meshes[static_cast<size_t>(i)], dir + "/" + SurfaceSet::channel_name(i) + ".obj");
}

} // namespace cf
