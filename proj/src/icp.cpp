// Rigid ICP: sampled closest-point correspondences alternated with the Horn
// quaternion fit (largest eigenvector of the 4x4 profile matrix via cyclic
// Jacobi, which keeps everything deterministic and dependency-free).
#include <algorithm>
#include <cmath>

#include "cortifield/errors.hpp"
#include "cortifield/metrics.hpp"
#include "cortifield/rng.hpp"

namespace cf {

namespace {

// Cyclic Jacobi eigensolver for small symmetric matrices (n <= 4).
void jacobi_eigen(double a[4][4], int n, double vecs[4][4], double vals[4]) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) vecs[i][j] = i == j ? 1.0 : 0.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vecs[k][p], vkq = vecs[k][q];
                    vecs[k][p] = c * vkp - s * vkq;
                    vecs[k][q] = s * vkp + c * vkq;
                }
            }
    }
    for (int i = 0; i < n; ++i) vals[i] = a[i][i];
}

// Best rigid transform mapping src -> dst in least squares (Horn 1987).
Affine horn_fit(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
    const size_t n = src.size();
    Vec3 cs{0, 0, 0}, cd{0, 0, 0};
    for (size_t i = 0; i < n; ++i) {
        cs += src[i];
        cd += dst[i];
    }
    cs = cs / double(n);
    cd = cd / double(n);
    double S[3][3] = {};
    for (size_t i = 0; i < n; ++i) {
        const Vec3 p = src[i] - cs, q = dst[i] - cd;
        const double pv[3] = {p.x, p.y, p.z}, qv[3] = {q.x, q.y, q.z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) S[r][c] += pv[r] * qv[c];
    }
    double N[4][4] = {
        {S[0][0] + S[1][1] + S[2][2], S[1][2] - S[2][1], S[2][0] - S[0][2], S[0][1] - S[1][0]},
        {S[1][2] - S[2][1], S[0][0] - S[1][1] - S[2][2], S[0][1] + S[1][0], S[2][0] + S[0][2]},
        {S[2][0] - S[0][2], S[0][1] + S[1][0], S[1][1] - S[0][0] - S[2][2], S[1][2] + S[2][1]},
        {S[0][1] - S[1][0], S[2][0] + S[0][2], S[1][2] + S[2][1], S[2][2] - S[0][0] - S[1][1]},
    };
    double vecs[4][4], vals[4];
    jacobi_eigen(N, 4, vecs, vals);
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (vals[i] > vals[best]) best = i;
    const double w = vecs[0][best], x = vecs[1][best], y = vecs[2][best], z = vecs[3][best];
    std::array<double, 9> R = {
        w * w + x * x - y * y - z * z, 2 * (x * y - w * z),           2 * (x * z + w * y),
        2 * (x * y + w * z),           w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
        2 * (x * z - w * y),           2 * (y * z + w * x),           w * w - x * x - y * y + z * z,
    };
    Affine t = Affine::from_linear(R, {0, 0, 0});
    const Vec3 rc = t.apply_vector(cs);
    t.at(0, 3) = cd.x - rc.x;
    t.at(1, 3) = cd.y - rc.y;
    t.at(2, 3) = cd.z - rc.z;
    return t;
}

} // namespace

IcpResult icp_rigid(const TriangleMesh& source, const TriangleMesh& target, const IcpConfig& cfg) {
    require(!source.empty() && !target.empty(), errc::empty_mesh, "icp needs nonempty meshes");
    Rng rng(cfg.seed);
    const std::vector<Vec3> samples = sample_on_surface(source, cfg.samples, rng);
    const Bvh bvh(target);

    IcpResult result;
    result.transform = Affine::identity();
    Affine current = Affine::identity();
    double best_rms = std::numeric_limits<double>::infinity();
    std::vector<Vec3> moved(samples.size()), matched(samples.size());

    for (int it = 0; it < cfg.max_iterations; ++it) {
        result.iterations = it + 1;
        for (size_t i = 0; i < samples.size(); ++i) moved[i] = current.apply(samples[i]);
        double sq = 0.0;
        for (size_t i = 0; i < samples.size(); ++i) {
            const auto hit = bvh.closest_point(moved[i]);
            matched[i] = hit.point;
            sq += hit.distance * hit.distance;
        }
        const double rms = std::sqrt(sq / double(samples.size()));
        if (rms < best_rms) {
            if (best_rms - rms < cfg.tolerance * std::max(best_rms, 1e-12)) {
                best_rms = rms;
                result.transform = current;
                result.converged = true;
                break;
            }
            best_rms = rms;
            result.transform = current;
        }
        // Refit from scratch each round: samples -> current correspondences.
        current = horn_fit(samples, matched);
    }
    result.rms = best_rms;
    return result;
}

} // namespace cf
