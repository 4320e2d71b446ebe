// Triangle meshes and the read-only geometric queries the implicit targets are
// built from: exact closest point, ray-parity inside tests, area-weighted
// surface sampling, voxelization, and topology audits. Meshes and BVHs are
// immutable after construction and safe for concurrent queries.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cortifield/geom.hpp"
#include "cortifield/rng.hpp"

namespace cf {

struct Volume;

struct TriangleMesh {
    std::vector<Vec3> vertices;               // mm
    std::vector<std::array<int, 3>> faces;    // CCW seen from outside

    bool empty() const { return faces.empty(); }
    Vec3 face_vertex(int f, int corner) const {
        return vertices[static_cast<size_t>(faces[static_cast<size_t>(f)][static_cast<size_t>(corner)])];
    }
    double face_area(int f) const;
    double total_area() const;
    Box3 bounds() const;
    // Throws invalid_argument on an out-of-range or repeated face index.
    void validate() const;
};

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Affine& t);

// Unit icosphere centered at the origin; `subdivisions` rounds of 4-way
// splitting of the icosahedron (4 -> 2562 vertices).
TriangleMesh make_icosphere(int subdivisions);

// --- file I/O (OBJ with v/f records, OFF) -----------------------------------

struct LoadStats {
    int dropped_degenerate_faces = 0;
};

TriangleMesh load_mesh(const std::string& path, LoadStats* stats = nullptr);
void save_mesh(const TriangleMesh& mesh, const std::string& path);

// --- topology ---------------------------------------------------------------

// V - E + F over unique undirected edges; works for any triangle soup.
int euler_characteristic(const TriangleMesh& mesh);

// (2 - chi) / 2; throws not_closed if some edge is not shared by exactly 2 faces.
int genus(const TriangleMesh& mesh);

bool is_closed(const TriangleMesh& mesh);

// Signed volume via the divergence theorem; positive for outward orientation.
double signed_volume(const TriangleMesh& mesh);

// --- spatial index ----------------------------------------------------------

class Bvh {
public:
    explicit Bvh(const TriangleMesh& mesh);

    struct ClosestHit {
        Vec3 point;      // projection onto the surface
        double distance; // Euclidean
        int face;        // ties broken by lowest face index
    };
    ClosestHit closest_point(const Vec3& p) const;

    // Parity of ray crossings; degenerate hits retry a fixed fallback list of
    // 8 directions, then throw degenerate_after_fallbacks.
    bool is_inside(const Vec3& p) const;

    const TriangleMesh& mesh() const { return *mesh_; }

private:
    struct Node {
        Box3 box;
        int left = -1, right = -1;  // children, or leaf range when left == -1
        int begin = 0, end = 0;     // face slots in order_
    };

    enum class RayClass { miss, hit, degenerate };
    RayClass count_crossings(const Vec3& origin, const Vec3& dir, int& crossings) const;

    const TriangleMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<int> order_;
};

// Exact point-to-triangle closest point.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// --- sampling ---------------------------------------------------------------

// Area-weighted face choice, then the square-root parameterization
// P = (1-sqrt(u)) A + sqrt(u)(1-v) B + sqrt(u) v C. Throws zero_area.
std::vector<Vec3> sample_on_surface(const TriangleMesh& mesh, int64_t n, Rng& rng);

// --- voxelization -----------------------------------------------------------

// Binary volume: 1 where the voxel center is inside the closed mesh.
Volume voxelize(const TriangleMesh& mesh, const Bvh& bvh, std::array<int, 3> dims, Vec3 spacing,
                const Affine& affine);

// --- surface sets -----------------------------------------------------------

enum class Hemisphere { left = 0, right = 1 };
enum class Boundary { inner = 0, outer = 1 };

// The four target surfaces in template coordinates. Channel order is fixed and
// shared with the field model: left_inner, left_outer, right_inner, right_outer.
struct SurfaceSet {
    std::array<TriangleMesh, 4> meshes;

    static constexpr int index_of(Hemisphere h, Boundary b) {
        return static_cast<int>(h) * 2 + static_cast<int>(b);
    }
    TriangleMesh& at(Hemisphere h, Boundary b) { return meshes[static_cast<size_t>(index_of(h, b))]; }
    const TriangleMesh& at(Hemisphere h, Boundary b) const {
        return meshes[static_cast<size_t>(index_of(h, b))];
    }
    static const char* channel_name(int i); // "left_inner", ...
};

// Loads/saves the four canonical {hemi}_{boundary}.obj files of a directory.
SurfaceSet load_surface_set(const std::string& dir);
void save_surface_set(const SurfaceSet& s, const std::string& dir);

} // namespace cf
