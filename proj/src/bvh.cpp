#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cortifield/errors.hpp"
#include "cortifield/mesh.hpp"

namespace cf {

namespace {
constexpr int kLeafSize = 4;

Box3 face_box(const TriangleMesh& m, int f) {
    Box3 b;
    b.lo = b.hi = m.face_vertex(f, 0);
    b.expand(m.face_vertex(f, 1));
    b.expand(m.face_vertex(f, 2));
    return b;
}
} // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    mesh.validate();
    const int nf = static_cast<int>(mesh.faces.size());
    order_.resize(static_cast<size_t>(nf));
    std::iota(order_.begin(), order_.end(), 0);
    if (nf == 0) return;
    nodes_.reserve(static_cast<size_t>(2 * nf / kLeafSize + 2));

    struct BuildItem {
        int node, begin, end;
    };
    std::vector<BuildItem> stack;
    nodes_.push_back({});
    stack.push_back({0, 0, nf});
    std::vector<Vec3> centroids(static_cast<size_t>(nf));
    for (int f = 0; f < nf; ++f)
        centroids[static_cast<size_t>(f)] =
            (mesh.face_vertex(f, 0) + mesh.face_vertex(f, 1) + mesh.face_vertex(f, 2)) / 3.0;

    while (!stack.empty()) {
        const BuildItem item = stack.back();
        stack.pop_back();
        Node& node = nodes_[static_cast<size_t>(item.node)];
        node.box = face_box(mesh, order_[static_cast<size_t>(item.begin)]);
        for (int s = item.begin + 1; s < item.end; ++s) {
            const Box3 fb = face_box(mesh, order_[static_cast<size_t>(s)]);
            node.box.expand(fb.lo);
            node.box.expand(fb.hi);
        }
        if (item.end - item.begin <= kLeafSize) {
            node.left = -1;
            node.begin = item.begin;
            node.end = item.end;
            continue;
        }
        Box3 cb;
        cb.lo = cb.hi = centroids[static_cast<size_t>(order_[static_cast<size_t>(item.begin)])];
        for (int s = item.begin + 1; s < item.end; ++s) cb.expand(centroids[static_cast<size_t>(order_[static_cast<size_t>(s)])]);
        const Vec3 ext = cb.extent();
        const int axis = ext.x >= ext.y ? (ext.x >= ext.z ? 0 : 2) : (ext.y >= ext.z ? 1 : 2);
        const int mid = (item.begin + item.end) / 2;
        std::nth_element(order_.begin() + item.begin, order_.begin() + mid, order_.begin() + item.end,
                         [&](int fa, int fb) {
                             const double ca = centroids[static_cast<size_t>(fa)][axis];
                             const double cbv = centroids[static_cast<size_t>(fb)][axis];
                             return ca < cbv || (ca == cbv && fa < fb);
                         });
        const int left = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        nodes_[static_cast<size_t>(item.node)].left = left;
        nodes_[static_cast<size_t>(item.node)].right = left + 1;
        stack.push_back({left, item.begin, mid});
        stack.push_back({left + 1, mid, item.end});
    }
}

Bvh::ClosestHit Bvh::closest_point(const Vec3& p) const {
    require(!mesh_->faces.empty(), errc::empty_mesh, "closest_point on an empty mesh");
    ClosestHit best;
    best.distance = std::numeric_limits<double>::infinity();
    best.face = -1;
    double best2 = std::numeric_limits<double>::infinity();

    // Depth-first with nearer child first; a node is pruned only when its box
    // is strictly farther than the best hit, so equal-distance faces are still
    // visited and the lowest-index tie rule is exact.
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[static_cast<size_t>(stack[--top])];
        if (node.box.dist2(p) > best2) continue;
        if (node.left < 0) {
            for (int s = node.begin; s < node.end; ++s) {
                const int f = order_[static_cast<size_t>(s)];
                const Vec3 q = closest_point_on_triangle(p, mesh_->face_vertex(f, 0), mesh_->face_vertex(f, 1),
                                                         mesh_->face_vertex(f, 2));
                const double d2 = (q - p).norm2();
                if (d2 < best2 || (d2 == best2 && f < best.face)) {
                    best2 = d2;
                    best.point = q;
                    best.face = f;
                }
            }
            continue;
        }
        const double dl = nodes_[static_cast<size_t>(node.left)].box.dist2(p);
        const double dr = nodes_[static_cast<size_t>(node.right)].box.dist2(p);
        // Push the farther child first so the nearer one is processed next.
        if (dl <= dr) {
            if (dr <= best2) stack[top++] = node.right;
            stack[top++] = node.left;
        } else {
            if (dl <= best2) stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    best.distance = std::sqrt(best2);
    return best;
}

namespace {

// Fixed primary + fallback ray directions, deliberately incommensurate with
// the coordinate axes.
const Vec3 kRayDirections[9] = {
    Vec3{0.8017837257372732, 0.5345224838248488, 0.2672612419124244}.normalized(),
    Vec3{-0.577350, 0.711287, 0.400982}.normalized(),
    Vec3{0.211325, -0.788675, 0.577350}.normalized(),
    Vec3{0.314159, 0.271828, -0.909297}.normalized(),
    Vec3{-0.486833, -0.393919, 0.779726}.normalized(),
    Vec3{0.912871, -0.182574, -0.365148}.normalized(),
    Vec3{-0.302905, 0.921318, -0.242324}.normalized(),
    Vec3{0.104828, -0.524142, -0.845154}.normalized(),
    Vec3{-0.823387, -0.118457, 0.554958}.normalized(),
};

bool ray_hits_box(const Vec3& o, const Vec3& inv_dir, const Box3& box) {
    double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
    for (int ax = 0; ax < 3; ++ax) {
        const double t1 = (box.lo[ax] - o[ax]) * inv_dir[ax];
        const double t2 = (box.hi[ax] - o[ax]) * inv_dir[ax];
        tmin = std::fmax(tmin, std::fmin(t1, t2));
        tmax = std::fmin(tmax, std::fmax(t1, t2));
    }
    return tmax >= tmin;
}

} // namespace

Bvh::RayClass Bvh::count_crossings(const Vec3& origin, const Vec3& dir, int& crossings) const {
    const double eps = 1e-9;
    const Vec3 inv_dir{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    crossings = 0;
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[static_cast<size_t>(stack[--top])];
        if (!ray_hits_box(origin, inv_dir, node.box)) continue;
        if (node.left >= 0) {
            stack[top++] = node.left;
            stack[top++] = node.right;
            continue;
        }
        for (int s = node.begin; s < node.end; ++s) {
            const int f = order_[static_cast<size_t>(s)];
            const Vec3 a = mesh_->face_vertex(f, 0);
            const Vec3 e1 = mesh_->face_vertex(f, 1) - a;
            const Vec3 e2 = mesh_->face_vertex(f, 2) - a;
            const Vec3 pv = dir.cross(e2);
            const double det = e1.dot(pv);
            const double scale = e1.norm() * e2.norm();
            if (std::fabs(det) <= eps * scale) {
                // Ray parallel to (or within) the triangle plane: only a
                // problem when the triangle is actually in the ray's path.
                const Vec3 tv = origin - a;
                const Vec3 qv = tv.cross(e1);
                if (std::fabs(tv.dot(e1.cross(e2))) <= eps * scale * std::sqrt(scale) + 1e-300) {
                    Box3 fb;
                    fb.lo = fb.hi = a;
                    fb.expand(a + e1);
                    fb.expand(a + e2);
                    if (ray_hits_box(origin, inv_dir, fb)) return RayClass::degenerate;
                }
                (void)qv;
                continue;
            }
            const double inv_det = 1.0 / det;
            const Vec3 tv = origin - a;
            const double u = tv.dot(pv) * inv_det;
            if (u < -eps || u > 1.0 + eps) continue;
            const Vec3 qv = tv.cross(e1);
            const double v = dir.dot(qv) * inv_det;
            if (v < -eps || u + v > 1.0 + eps) continue;
            const double t = e2.dot(qv) * inv_det;
            if (t <= -eps * std::sqrt(scale)) continue;
            // Hits through an edge/vertex or grazing the origin are ambiguous.
            if (u < eps || v < eps || u + v > 1.0 - eps || std::fabs(t) <= eps * std::sqrt(scale))
                return RayClass::degenerate;
            ++crossings;
        }
    }
    return crossings > 0 ? RayClass::hit : RayClass::miss;
}

bool Bvh::is_inside(const Vec3& p) const {
    require(!mesh_->faces.empty(), errc::empty_mesh, "is_inside on an empty mesh");
    bool surface_checked = false;
    for (const Vec3& dir : kRayDirections) {
        int crossings = 0;
        if (count_crossings(p, dir, crossings) != RayClass::degenerate) return (crossings & 1) != 0;
        if (!surface_checked) {
            // A query point on the surface itself (vertex, edge, face) makes
            // every ray degenerate; it counts as interior (sdf +0).
            const double scale = nodes_.empty() ? 1.0 : nodes_[0].box.diagonal();
            if (closest_point(p).distance <= 1e-9 * std::max(scale, 1e-30)) return true;
            surface_checked = true;
        }
    }
    raise(errc::degenerate_after_fallbacks, "all ray directions hit degenerate geometry");
}

} // namespace cf
