#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cortifield/rng.hpp"
#include "cortifield/volume.hpp"

namespace cf::testing {

BruteClosest brute_force_closest(const TriangleMesh& mesh, const Vec3& p) {
    BruteClosest best;
    best.distance = std::numeric_limits<double>::infinity();
    best.face = -1;
    double best2 = best.distance;
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Vec3 q = closest_point_on_triangle(p, mesh.face_vertex(f, 0), mesh.face_vertex(f, 1),
                                                 mesh.face_vertex(f, 2));
        const double d2 = (q - p).norm2();
        if (d2 < best2) {
            best2 = d2;
            best.point = q;
            best.face = f;
        }
    }
    best.distance = std::sqrt(best2);
    return best;
}

double winding_number(const TriangleMesh& mesh, const Vec3& p) {
    // Van Oosterom & Strackee signed solid angle per triangle.
    double total = 0.0;
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        const Vec3 a = mesh.face_vertex(f, 0) - p;
        const Vec3 b = mesh.face_vertex(f, 1) - p;
        const Vec3 c = mesh.face_vertex(f, 2) - p;
        const double la = a.norm(), lb = b.norm(), lc = c.norm();
        const double num = a.dot(b.cross(c));
        const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        total += 2.0 * std::atan2(num, den);
    }
    return total / (4.0 * 3.14159265358979323846);
}

bool winding_inside(const TriangleMesh& mesh, const Vec3& p) { return winding_number(mesh, p) > 0.5; }

double exact_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    // Jonker-style O(n^3) Hungarian on the dense cost matrix, then the mean
    // matched distance (uniform weights 1/n on both sides).
    const int n = static_cast<int>(a.size());
    std::vector<double> cost(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost[static_cast<size_t>(i) * n + j] = (a[static_cast<size_t>(i)] - b[static_cast<size_t>(j)]).norm();

    std::vector<double> u(static_cast<size_t>(n + 1)), v(static_cast<size_t>(n + 1));
    // match[j] = 1-based row assigned to column j; 0 = unmatched sentinel.
    std::vector<int> match(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n + 1), std::numeric_limits<double>::infinity());
        std::vector<char> used(static_cast<size_t>(n + 1), 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = match[static_cast<size_t>(j0)];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost[static_cast<size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<size_t>(i0)] -
                                   v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
        total += cost[static_cast<size_t>(match[static_cast<size_t>(j)] - 1) * n + (j - 1)];
    return total / double(n);
}

double central_difference(std::function<double()> eval, double& x, double h) {
    const double saved = x;
    x = saved + h;
    const double fp = eval();
    x = saved - h;
    const double fm = eval();
    x = saved;
    return (fp - fm) / (2.0 * h);
}

double grad_rel_err(double analytic, double fd) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
    return std::fabs(analytic - fd) / denom;
}

TriangleMesh make_torus(double major, double minor, int nu, int nv) {
    TriangleMesh m;
    for (int i = 0; i < nu; ++i) {
        const double a = 2.0 * 3.14159265358979323846 * i / nu;
        for (int j = 0; j < nv; ++j) {
            const double b = 2.0 * 3.14159265358979323846 * j / nv;
            m.vertices.push_back({(major + minor * std::cos(b)) * std::cos(a),
                                  (major + minor * std::cos(b)) * std::sin(a), minor * std::sin(b)});
        }
    }
    auto at = [&](int i, int j) { return (i % nu) * nv + (j % nv); };
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    return m;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
    TriangleMesh m;
    for (int c = 0; c < 8; ++c)
        m.vertices.push_back({c & 1 ? hi.x : lo.x, c & 2 ? hi.y : lo.y, c & 4 ? hi.z : lo.z});
    const int quads[6][4] = {
        {0, 4, 6, 2}, // x = lo
        {1, 3, 7, 5}, // x = hi
        {0, 1, 5, 4}, // y = lo
        {2, 6, 7, 3}, // y = hi
        {0, 2, 3, 1}, // z = lo
        {4, 5, 7, 6}, // z = hi
    };
    for (const auto& q : quads) {
        m.faces.push_back({q[0], q[1], q[2]});
        m.faces.push_back({q[0], q[2], q[3]});
    }
    return m;
}

Volume random_blob_field(int n, uint64_t seed, int bumps) {
    Volume v = make_volume({n, n, n}, Vec3{2.0 / (n - 1), 2.0 / (n - 1), 2.0 / (n - 1)}, {-1, -1, -1});
    Rng rng(seed);
    std::vector<Vec3> centers;
    std::vector<double> amp, inv_w2;
    for (int b = 0; b < bumps; ++b) {
        centers.push_back({rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)});
        amp.push_back(rng.uniform(0.4, 1.0) * (rng.below(2) ? 1.0 : -1.0));
        const double w = rng.uniform(0.12, 0.35);
        inv_w2.push_back(1.0 / (w * w));
    }
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Vec3 p = v.voxel_center(i, j, k);
                double acc = -0.15;
                for (int b = 0; b < bumps; ++b)
                    acc += amp[static_cast<size_t>(b)] *
                           std::exp(-(p - centers[static_cast<size_t>(b)]).norm2() * inv_w2[static_cast<size_t>(b)]);
                v.at(i, j, k) = static_cast<float>(acc);
            }
    return v;
}

Volume sphere_sdf_volume(int n, double half, double radius, const Vec3& center) {
    const double step = 2.0 * half / (n - 1);
    Volume v = make_volume({n, n, n}, Vec3{step, step, step}, {-half, -half, -half});
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                v.at(i, j, k) = static_cast<float>(radius - (v.voxel_center(i, j, k) - center).norm());
    return v;
}

Volume torus_field_volume(int n, double half, double major, double minor) {
    const double step = 2.0 * half / (n - 1);
    Volume v = make_volume({n, n, n}, Vec3{step, step, step}, {-half, -half, -half});
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Vec3 p = v.voxel_center(i, j, k);
                const double ring = std::sqrt(p.x * p.x + p.y * p.y) - major;
                v.at(i, j, k) = static_cast<float>(minor - std::sqrt(ring * ring + p.z * p.z));
            }
    return v;
}

} // namespace cf::testing
