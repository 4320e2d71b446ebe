// Intensity-based 12-DOF affine registration: center-of-mass and second-moment
// initialization, then Levenberg-Marquardt on the mean squared intensity error
// over a 3-level pyramid. Runs as a single deterministic computation stream.
#include <algorithm>
#include <cmath>
#include <vector>

#include "cortifield/errors.hpp"
#include "cortifield/rng.hpp"
#include "cortifield/volume.hpp"

namespace cf {

namespace {

Volume downsample2(const Volume& v) {
    Volume out;
    out.dims = {(v.dims[0] + 1) / 2, (v.dims[1] + 1) / 2, (v.dims[2] + 1) / 2};
    out.spacing = v.spacing * 2.0;
    // New voxel i covers old {2i, 2i+1}; its center sits at old index 2i+0.5.
    Affine step = Affine::scaling({2, 2, 2});
    step.at(0, 3) = step.at(1, 3) = step.at(2, 3) = 0.5;
    out.affine = v.affine * step;
    out.data.assign(static_cast<size_t>(out.size()), 0.0f);
    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i) {
                double acc = 0.0;
                int cnt = 0;
                for (int dk = 0; dk < 2; ++dk)
                    for (int dj = 0; dj < 2; ++dj)
                        for (int di = 0; di < 2; ++di) {
                            const int si = 2 * i + di, sj = 2 * j + dj, sk = 2 * k + dk;
                            if (si < v.dims[0] && sj < v.dims[1] && sk < v.dims[2]) {
                                acc += v.at(si, sj, sk);
                                ++cnt;
                            }
                        }
                out.at(i, j, k) = static_cast<float>(acc / cnt);
            }
    return out;
}

struct Moments {
    double mass = 0.0;
    Vec3 com{0, 0, 0};
    Vec3 var{0, 0, 0}; // world-axis second moments about the COM
};

Moments moments(const Volume& v) {
    Moments m;
    double sx = 0, sy = 0, sz = 0;
    for (int k = 0; k < v.dims[2]; ++k)
        for (int j = 0; j < v.dims[1]; ++j)
            for (int i = 0; i < v.dims[0]; ++i) {
                const double w = std::fabs(v.at(i, j, k));
                if (w <= 0.0) continue;
                const Vec3 p = v.voxel_center(i, j, k);
                m.mass += w;
                sx += w * p.x;
                sy += w * p.y;
                sz += w * p.z;
            }
    if (m.mass <= 0.0) return m;
    m.com = {sx / m.mass, sy / m.mass, sz / m.mass};
    double vx = 0, vy = 0, vz = 0;
    for (int k = 0; k < v.dims[2]; ++k)
        for (int j = 0; j < v.dims[1]; ++j)
            for (int i = 0; i < v.dims[0]; ++i) {
                const double w = std::fabs(v.at(i, j, k));
                if (w <= 0.0) continue;
                const Vec3 d = v.voxel_center(i, j, k) - m.com;
                vx += w * d.x * d.x;
                vy += w * d.y * d.y;
                vz += w * d.z * d.z;
            }
    m.var = {vx / m.mass, vy / m.mass, vz / m.mass};
    return m;
}

// Trilinear value and gradient with respect to continuous voxel coordinates.
void sample_with_grad(const Volume& v, const Vec3& vc, double& val, Vec3& grad) {
    val = 0.0;
    grad = {0, 0, 0};
    const int i0 = static_cast<int>(std::floor(vc.x));
    const int j0 = static_cast<int>(std::floor(vc.y));
    const int k0 = static_cast<int>(std::floor(vc.z));
    if (i0 < 0 || j0 < 0 || k0 < 0 || i0 + 1 >= v.dims[0] || j0 + 1 >= v.dims[1] || k0 + 1 >= v.dims[2])
        return; // outside (or on the outer border): value 0, no gradient
    const double fx = vc.x - i0, fy = vc.y - j0, fz = vc.z - k0;
    const double wx[2] = {1.0 - fx, fx}, wy[2] = {1.0 - fy, fy}, wz[2] = {1.0 - fz, fz};
    const double dx[2] = {-1.0, 1.0};
    for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
                const double c = v.at(i0 + di, j0 + dj, k0 + dk);
                val += c * wx[di] * wy[dj] * wz[dk];
                grad.x += c * dx[di] * wy[dj] * wz[dk];
                grad.y += c * wx[di] * dx[dj] * wz[dk];
                grad.z += c * wx[di] * wy[dj] * dx[dk];
            }
}

// 12 parameters: row-major 3x3 matrix A then offset b, in the normalized frame
// u = com_m + h * (A * xhat + b), xhat = (x_f - com_f) / h.
struct Params {
    double a[9];
    double b[3];
};

struct NormFrame {
    Vec3 com_f, com_m;
    double h; // mm half-extent used to keep every parameter O(1)
};

Affine to_affine(const Params& p, const NormFrame& n) {
    // u = com_m + A*(x - com_f) + h*b  (A already dimensionless)
    std::array<double, 9> L;
    for (int i = 0; i < 9; ++i) L[static_cast<size_t>(i)] = p.a[i];
    Vec3 Ac{L[0] * n.com_f.x + L[1] * n.com_f.y + L[2] * n.com_f.z,
            L[3] * n.com_f.x + L[4] * n.com_f.y + L[5] * n.com_f.z,
            L[6] * n.com_f.x + L[7] * n.com_f.y + L[8] * n.com_f.z};
    Vec3 t = n.com_m - Ac + Vec3{p.b[0], p.b[1], p.b[2]} * n.h;
    return Affine::from_linear(L, t);
}

bool solve12(double H[12][12], const double g[12], double delta[12]) {
    // Gaussian elimination with partial pivoting on the augmented system.
    double a[12][13];
    for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) a[i][j] = H[i][j];
        a[i][12] = -g[i];
    }
    for (int col = 0; col < 12; ++col) {
        int piv = col;
        for (int r = col + 1; r < 12; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-300) return false;
        if (piv != col)
            for (int j = col; j < 13; ++j) std::swap(a[piv][j], a[col][j]);
        for (int r = col + 1; r < 12; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int j = col; j < 13; ++j) a[r][j] -= f * a[col][j];
        }
    }
    for (int i = 11; i >= 0; --i) {
        double s = a[i][12];
        for (int j = i + 1; j < 12; ++j) s -= a[i][j] * delta[j];
        delta[i] = s / a[i][i];
    }
    return true;
}

struct SampleSet {
    std::vector<Vec3> xhat;   // normalized fixed coordinates
    std::vector<float> fval;  // fixed intensities
};

SampleSet draw_samples(const Volume& fixed, const NormFrame& frame, int64_t max_samples, Rng rng) {
    SampleSet s;
    const int64_t total = fixed.size();
    const int64_t want = std::min(total, max_samples);
    s.xhat.reserve(static_cast<size_t>(want));
    s.fval.reserve(static_cast<size_t>(want));
    auto push = [&](int64_t lin) {
        const int i = static_cast<int>(lin % fixed.dims[0]);
        const int j = static_cast<int>((lin / fixed.dims[0]) % fixed.dims[1]);
        const int k = static_cast<int>(lin / (int64_t(fixed.dims[0]) * fixed.dims[1]));
        s.xhat.push_back((fixed.voxel_center(i, j, k) - frame.com_f) / frame.h);
        s.fval.push_back(fixed.at(i, j, k));
    };
    if (total <= max_samples) {
        for (int64_t lin = 0; lin < total; ++lin) push(lin);
    } else {
        for (int64_t n = 0; n < want; ++n) push(static_cast<int64_t>(rng.below(static_cast<uint64_t>(total))));
    }
    return s;
}

double mse_of(const Volume& moving, const Affine& world_to_voxel, const Params& p, const NormFrame& frame,
              const SampleSet& s) {
    double acc = 0.0;
    for (size_t n = 0; n < s.xhat.size(); ++n) {
        const Vec3& x = s.xhat[n];
        const Vec3 u{frame.com_m.x + frame.h * (p.a[0] * x.x + p.a[1] * x.y + p.a[2] * x.z + p.b[0]),
                     frame.com_m.y + frame.h * (p.a[3] * x.x + p.a[4] * x.y + p.a[5] * x.z + p.b[1]),
                     frame.com_m.z + frame.h * (p.a[6] * x.x + p.a[7] * x.y + p.a[8] * x.z + p.b[2])};
        const double r = moving.sample_trilinear(world_to_voxel.apply(u)) - s.fval[n];
        acc += r * r;
    }
    return acc / static_cast<double>(s.xhat.size());
}

} // namespace

RegistrationResult register_affine(const Volume& moving, const Volume& fixed, const RegistrationConfig& cfg) {
    moving.validate();
    fixed.validate();
    const Moments mm = moments(moving);
    const Moments mf = moments(fixed);
    require(mm.mass > 0.0 && mf.mass > 0.0, errc::invalid_argument,
            "registration needs nonzero intensities in both volumes");
    require(mm.var.x + mm.var.y + mm.var.z > 0.0 && mf.var.x + mf.var.y + mf.var.z > 0.0,
            errc::invalid_argument, "registration needs positive intensity variance");

    NormFrame frame;
    frame.com_f = mf.com;
    frame.com_m = mm.com;
    {
        const Vec3 ext = fixed.affine.apply({double(fixed.dims[0] - 1), double(fixed.dims[1] - 1),
                                             double(fixed.dims[2] - 1)}) -
                         fixed.affine.apply({0, 0, 0});
        frame.h = std::max({std::fabs(ext.x), std::fabs(ext.y), std::fabs(ext.z)}) * 0.5;
        if (frame.h <= 0.0) frame.h = 1.0;
    }

    Params p{};
    for (int i = 0; i < 9; ++i) p.a[i] = 0.0;
    for (int i = 0; i < 3; ++i) p.b[i] = 0.0;
    auto scale_init = [](double vm, double vf) {
        if (vm <= 0.0 || vf <= 0.0) return 1.0;
        return std::clamp(std::sqrt(vm / vf), 0.5, 2.0);
    };
    p.a[0] = scale_init(mm.var.x, mf.var.x);
    p.a[4] = scale_init(mm.var.y, mf.var.y);
    p.a[8] = scale_init(mm.var.z, mf.var.z);

    // Pyramid: levels[0] is the finest.
    std::vector<Volume> pyr_m{moving}, pyr_f{fixed};
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        pyr_m.push_back(downsample2(pyr_m.back()));
        pyr_f.push_back(downsample2(pyr_f.back()));
    }

    // Joint-support check at the initial transform, on the coarsest level.
    {
        const Volume& cf_ = pyr_f.back();
        const Volume& cm_ = pyr_m.back();
        const Affine w2v = cm_.affine.inverse();
        int64_t joint = 0;
        for (int k = 0; k < cf_.dims[2]; ++k)
            for (int j = 0; j < cf_.dims[1]; ++j)
                for (int i = 0; i < cf_.dims[0]; ++i) {
                    if (std::fabs(cf_.at(i, j, k)) <= cfg.support_threshold) continue;
                    const Vec3 x = (cf_.voxel_center(i, j, k) - frame.com_f) / frame.h;
                    const Vec3 u{frame.com_m.x + frame.h * (p.a[0] * x.x + p.a[1] * x.y + p.a[2] * x.z),
                                 frame.com_m.y + frame.h * (p.a[3] * x.x + p.a[4] * x.y + p.a[5] * x.z),
                                 frame.com_m.z + frame.h * (p.a[6] * x.x + p.a[7] * x.y + p.a[8] * x.z)};
                    if (std::fabs(cm_.sample_trilinear(w2v.apply(u))) > cfg.support_threshold) ++joint;
                }
        require(joint > 0, errc::no_overlap, "no joint intensity support after initialization");
    }

    RegistrationResult result;
    Rng rng(cfg.seed);
    int total_iters = 0;
    bool fine_converged = false;

    for (int l = cfg.pyramid_levels - 1; l >= 0; --l) {
        const Volume& mv = pyr_m[static_cast<size_t>(l)];
        const Volume& fv = pyr_f[static_cast<size_t>(l)];
        const Affine w2v = mv.affine.inverse();
        const SampleSet samples = draw_samples(fv, frame, cfg.max_samples, rng.fork(static_cast<uint64_t>(l)));
        const size_t ns = samples.xhat.size();

        double lambda = 1e-3;
        double best = mse_of(mv, w2v, p, frame, samples);
        int stall = 0;
        for (int it = 0; it < cfg.max_iterations; ++it) {
            ++total_iters;
            double H[12][12] = {};
            double g[12] = {};
            for (size_t n = 0; n < ns; ++n) {
                const Vec3& x = samples.xhat[n];
                const Vec3 u{frame.com_m.x + frame.h * (p.a[0] * x.x + p.a[1] * x.y + p.a[2] * x.z + p.b[0]),
                             frame.com_m.y + frame.h * (p.a[3] * x.x + p.a[4] * x.y + p.a[5] * x.z + p.b[1]),
                             frame.com_m.z + frame.h * (p.a[6] * x.x + p.a[7] * x.y + p.a[8] * x.z + p.b[2])};
                double val;
                Vec3 gv;
                sample_with_grad(mv, w2v.apply(u), val, gv);
                const double r = val - samples.fval[n];
                // d(value)/d(u_world) = L^T * d(value)/d(voxel), L = linear part of w2v
                const Vec3 gw{w2v.at(0, 0) * gv.x + w2v.at(1, 0) * gv.y + w2v.at(2, 0) * gv.z,
                              w2v.at(0, 1) * gv.x + w2v.at(1, 1) * gv.y + w2v.at(2, 1) * gv.z,
                              w2v.at(0, 2) * gv.x + w2v.at(1, 2) * gv.y + w2v.at(2, 2) * gv.z};
                double J[12];
                for (int row = 0; row < 3; ++row) {
                    const double gh = (row == 0 ? gw.x : row == 1 ? gw.y : gw.z) * frame.h;
                    J[row * 3 + 0] = gh * x.x;
                    J[row * 3 + 1] = gh * x.y;
                    J[row * 3 + 2] = gh * x.z;
                    J[9 + row] = gh;
                }
                for (int i = 0; i < 12; ++i) {
                    g[i] += J[i] * r;
                    for (int j = i; j < 12; ++j) H[i][j] += J[i] * J[j];
                }
            }
            for (int i = 0; i < 12; ++i)
                for (int j = 0; j < i; ++j) H[i][j] = H[j][i];

            bool accepted = false;
            for (int attempt = 0; attempt < 8; ++attempt) {
                double Hd[12][12];
                for (int i = 0; i < 12; ++i)
                    for (int j = 0; j < 12; ++j) Hd[i][j] = H[i][j];
                for (int i = 0; i < 12; ++i) Hd[i][i] += lambda * (H[i][i] + 1e-12);
                double delta[12];
                if (!solve12(Hd, g, delta)) {
                    lambda *= 10.0;
                    continue;
                }
                Params trial = p;
                for (int i = 0; i < 9; ++i) trial.a[i] += delta[i];
                for (int i = 0; i < 3; ++i) trial.b[i] += delta[9 + i];
                const double trial_mse = mse_of(mv, w2v, trial, frame, samples);
                if (trial_mse < best) {
                    const double rel = (best - trial_mse) / (best + 1e-300);
                    p = trial;
                    best = trial_mse;
                    lambda = std::max(lambda / 3.0, 1e-9);
                    accepted = true;
                    stall = rel < cfg.tolerance ? stall + 1 : 0;
                    break;
                }
                lambda *= 4.0;
            }
            if (!accepted) ++stall;
            if (stall >= 2) {
                if (l == 0) fine_converged = true;
                break;
            }
        }
        if (l == 0) result.mse = best;
    }

    result.iterations = total_iters;
    result.converged = fine_converged;
    // p maps fixed -> moving world; the registration transform is its inverse.
    result.moving_to_fixed = to_affine(p, frame).inverse();
    return result;
}

} // namespace cf
