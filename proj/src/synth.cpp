#include "cortifield/synth.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "cortifield/errors.hpp"
#include "cortifield/parallel.hpp"
#include "cortifield/rng.hpp"

namespace cf {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Real spherical harmonics Y_lm on unit directions, degrees 2..L (0 and 1
// would only shift/scale the base ellipsoid).
class FoldField {
public:
    FoldField(int max_degree, Rng& rng) : max_degree_(max_degree) {
        for (int l = 2; l <= max_degree; ++l)
            for (int m = -l; m <= l; ++m) coeffs_.push_back(rng.normal());
    }

    double operator()(const Vec3& u) const {
        const double ct = u.z;
        const double phi = std::atan2(u.y, u.x);
        double acc = 0.0;
        size_t idx = 0;
        for (int l = 2; l <= max_degree_; ++l)
            for (int m = -l; m <= l; ++m) acc += coeffs_[idx++] * real_sh(l, m, ct, phi);
        return acc;
    }

private:
    static double assoc_legendre(int l, int m, double x) {
        // P_m^m up via the standard recurrences, Condon-Shortley included.
        double pmm = 1.0;
        if (m > 0) {
            const double somx2 = std::sqrt((1.0 - x) * (1.0 + x));
            double fact = 1.0;
            for (int i = 1; i <= m; ++i) {
                pmm *= -fact * somx2;
                fact += 2.0;
            }
        }
        if (l == m) return pmm;
        double pmmp1 = x * (2.0 * m + 1.0) * pmm;
        if (l == m + 1) return pmmp1;
        double pll = 0.0;
        for (int ll = m + 2; ll <= l; ++ll) {
            pll = ((2.0 * ll - 1.0) * x * pmmp1 - (ll + m - 1.0) * pmm) / (ll - m);
            pmm = pmmp1;
            pmmp1 = pll;
        }
        return pll;
    }

    static double norm_k(int l, int m) {
        double num = 1.0, den = 1.0;
        for (int i = l - m + 1; i <= l + m; ++i) den *= i;
        return std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) * num / den);
    }

    static double real_sh(int l, int m, double ct, double phi) {
        if (m == 0) return norm_k(l, 0) * assoc_legendre(l, 0, ct);
        const int am = m > 0 ? m : -m;
        const double base = std::sqrt(2.0) * norm_k(l, am) * assoc_legendre(l, am, ct);
        return m > 0 ? base * std::cos(am * phi) : base * std::sin(am * phi);
    }

    int max_degree_;
    std::vector<double> coeffs_;
};

std::vector<Vec3> vertex_normals(const TriangleMesh& m) {
    std::vector<Vec3> normals(m.vertices.size(), Vec3{0, 0, 0});
    for (const auto& f : m.faces) {
        const Vec3 a = m.vertices[static_cast<size_t>(f[0])];
        const Vec3 b = m.vertices[static_cast<size_t>(f[1])];
        const Vec3 c = m.vertices[static_cast<size_t>(f[2])];
        const Vec3 fn = (b - a).cross(c - a); // area-weighted
        for (int corner = 0; corner < 3; ++corner) normals[static_cast<size_t>(f[static_cast<size_t>(corner)])] += fn;
    }
    for (Vec3& n : normals) n = n.normalized();
    return normals;
}

Affine random_perturbation(const SynthParams& p, Rng& rng) {
    const Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    const double angle = rng.uniform(-1.0, 1.0) * p.transform_rotation_deg * kPi / 180.0;
    const Vec3 trans{rng.uniform(-1.0, 1.0) * p.transform_translation_mm,
                     rng.uniform(-1.0, 1.0) * p.transform_translation_mm,
                     rng.uniform(-1.0, 1.0) * p.transform_translation_mm};
    const Vec3 scale{rng.uniform(p.transform_scale_lo, p.transform_scale_hi),
                     rng.uniform(p.transform_scale_lo, p.transform_scale_hi),
                     rng.uniform(p.transform_scale_lo, p.transform_scale_hi)};
    const Affine rot = axis.norm2() > 0.0 && angle != 0.0 ? Affine::rotation(axis, angle) : Affine::identity();
    return Affine::translation(trans) * rot * Affine::scaling(scale);
}

} // namespace

void SynthParams::validate() const {
    require(semi_axes.x > 0 && semi_axes.y > 0 && semi_axes.z > 0, errc::invalid_argument,
            "semi axes must be positive");
    require(inner_offset_mm > 0, errc::invalid_argument, "inner offset must be positive");
    const double min_semi = std::min({semi_axes.x, semi_axes.y, semi_axes.z});
    require(fold_amplitude_mm >= 0 && fold_amplitude_mm < min_semi / 2.0, errc::invalid_argument,
            "fold amplitude must stay below half the smallest semi-axis");
    require(fold_max_degree >= 2 && fold_max_degree <= 16, errc::invalid_argument,
            "fold degree must be in [2, 16]");
    require(subdivisions >= 1 && subdivisions <= 6, errc::invalid_argument, "subdivisions must be in [1, 6]");
    require(dims[0] >= 8 && dims[1] >= 8 && dims[2] >= 8, errc::invalid_argument, "volume dims must be >= 8");
    require(spacing.x > 0 && spacing.y > 0 && spacing.z > 0, errc::invalid_argument,
            "spacing must be positive");
    require(transform_scale_lo > 0 && transform_scale_hi >= transform_scale_lo, errc::invalid_argument,
            "bad scale range");
}

SynthCase synth_case(const SynthParams& params) {
    params.validate();
    SynthCase out;
    out.params = params;
    Rng root(params.seed);

    // Right hemisphere in template coordinates; the left is its mirror image.
    // Folding displaces radially by up to the amplitude, so the center keeps
    // the displaced surface clear of the midplane gap.
    const double cx = params.semi_axes.x + params.fold_amplitude_mm + params.hemisphere_gap_mm / 2.0;
    const Vec3 center_r{cx, 0.0, 0.0};

    TriangleMesh sphere = make_icosphere(params.subdivisions);
    Rng fold_rng = root.fork(1);
    const FoldField fold(params.fold_max_degree, fold_rng);

    std::vector<double> h(sphere.vertices.size());
    double hmax = 0.0;
    for (size_t i = 0; i < sphere.vertices.size(); ++i) {
        h[i] = fold(sphere.vertices[i]);
        hmax = std::max(hmax, std::fabs(h[i]));
    }
    const double fold_scale = params.fold_amplitude_mm > 0 && hmax > 0 ? params.fold_amplitude_mm / hmax : 0.0;

    TriangleMesh outer_r = sphere;
    for (size_t i = 0; i < sphere.vertices.size(); ++i) {
        const Vec3 u = sphere.vertices[i];
        const Vec3 ell{u.x * params.semi_axes.x, u.y * params.semi_axes.y, u.z * params.semi_axes.z};
        outer_r.vertices[i] = center_r + ell + ell.normalized() * (fold_scale * h[i]);
    }

    TriangleMesh inner_r = outer_r;
    const std::vector<Vec3> normals = vertex_normals(outer_r);
    for (size_t i = 0; i < inner_r.vertices.size(); ++i)
        inner_r.vertices[i] = outer_r.vertices[i] - normals[i] * params.inner_offset_mm;

    const Affine mirror = Affine::scaling({-1.0, 1.0, 1.0});
    out.surfaces.at(Hemisphere::right, Boundary::outer) = outer_r;
    out.surfaces.at(Hemisphere::right, Boundary::inner) = inner_r;
    out.surfaces.at(Hemisphere::left, Boundary::outer) = transform_mesh(outer_r, mirror);
    out.surfaces.at(Hemisphere::left, Boundary::inner) = transform_mesh(inner_r, mirror);

    // Probe ordering: every inner vertex must lie strictly inside its outer
    // surface, and inner surfaces must stay on their side of the midplane.
    {
        const Bvh outer_bvh(outer_r);
        for (const Vec3& v : inner_r.vertices) {
            require(outer_bvh.is_inside(v), errc::self_intersecting_inner,
                    "inner offset exceeds the outer surface curvature");
            require(v.x > 0.0, errc::self_intersecting_inner, "inner surface crosses the hemisphere gap");
        }
    }

    // Native-space volume: each voxel center is mapped into template space and
    // labeled by the surfaces there.
    Rng xform_rng = root.fork(2);
    const Affine perturb = random_perturbation(params, xform_rng); // template -> native
    out.native_to_template = perturb.inverse();

    const Vec3 origin{-(params.dims[0] - 1) * params.spacing.x / 2.0,
                      -(params.dims[1] - 1) * params.spacing.y / 2.0,
                      -(params.dims[2] - 1) * params.spacing.z / 2.0};
    out.volume = make_volume(params.dims, params.spacing, origin);

    std::array<const Bvh*, 4> bvhs;
    std::array<std::unique_ptr<Bvh>, 4> owned;
    for (int ch = 0; ch < 4; ++ch) {
        owned[static_cast<size_t>(ch)] = std::make_unique<Bvh>(out.surfaces.meshes[static_cast<size_t>(ch)]);
        bvhs[static_cast<size_t>(ch)] = owned[static_cast<size_t>(ch)].get();
    }
    const int ii = SurfaceSet::index_of(Hemisphere::left, Boundary::inner);
    const int io = SurfaceSet::index_of(Hemisphere::left, Boundary::outer);
    const int ri = SurfaceSet::index_of(Hemisphere::right, Boundary::inner);
    const int ro = SurfaceSet::index_of(Hemisphere::right, Boundary::outer);
    const Vec3 head_semi = params.semi_axes * 1.35;

    Volume& vol = out.volume;
    parallel_ranges(params.dims[2], 1, [&](int64_t kb, int64_t ke, int64_t) {
        for (int64_t k = kb; k < ke; ++k)
            for (int j = 0; j < params.dims[1]; ++j)
                for (int i = 0; i < params.dims[0]; ++i) {
                    const Vec3 native = vol.voxel_center(i, j, static_cast<int>(k));
                    const Vec3 p = out.native_to_template.apply(native);
                    double value = params.intensity_background;
                    const Vec3 dl{(p.x + cx) / head_semi.x, p.y / head_semi.y, p.z / head_semi.z};
                    const Vec3 dr{(p.x - cx) / head_semi.x, p.y / head_semi.y, p.z / head_semi.z};
                    if (dl.norm2() <= 1.0 || dr.norm2() <= 1.0) {
                        value = params.intensity_csf;
                        // Cheap hemisphere pre-test keeps the ray queries local.
                        const int inner = p.x < 0.0 ? ii : ri;
                        const int outer = p.x < 0.0 ? io : ro;
                        if (bvhs[static_cast<size_t>(inner)]->is_inside(p))
                            value = params.intensity_wm;
                        else if (bvhs[static_cast<size_t>(outer)]->is_inside(p))
                            value = params.intensity_gm;
                    }
                    vol.at(i, j, static_cast<int>(k)) = static_cast<float>(value);
                }
    });

    if (params.noise_sigma > 0.0) {
        Rng noise = root.fork(3);
        for (float& f : vol.data) f += static_cast<float>(noise.normal(0.0, params.noise_sigma));
    }
    return out;
}

void synth_write_case(const SynthCase& c, const std::string& dir) {
    save_raw(c.volume, dir + "/volume.cfvol");
    save_transform(c.native_to_template, dir + "/transform.txt");
    save_surface_set(c.surfaces, dir);
    nlohmann::json j;
    const SynthParams& p = c.params;
    j["seed"] = p.seed;
    j["semi_axes"] = {p.semi_axes.x, p.semi_axes.y, p.semi_axes.z};
    j["fold_amplitude_mm"] = p.fold_amplitude_mm;
    j["fold_max_degree"] = p.fold_max_degree;
    j["subdivisions"] = p.subdivisions;
    j["inner_offset_mm"] = p.inner_offset_mm;
    j["hemisphere_gap_mm"] = p.hemisphere_gap_mm;
    j["intensities"] = {p.intensity_background, p.intensity_csf, p.intensity_gm, p.intensity_wm};
    j["noise_sigma"] = p.noise_sigma;
    j["dims"] = {p.dims[0], p.dims[1], p.dims[2]};
    j["spacing"] = {p.spacing.x, p.spacing.y, p.spacing.z};
    j["transform_translation_mm"] = p.transform_translation_mm;
    j["transform_rotation_deg"] = p.transform_rotation_deg;
    j["transform_scale"] = {p.transform_scale_lo, p.transform_scale_hi};
    std::ofstream f(dir + "/params.json");
    require(f.good(), errc::io_error, "cannot write params.json in " + dir);
    f << j.dump(2) << "\n";
}

SynthParams synth_params_from_json_file(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), errc::io_error, "cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        raise(errc::parse_error, std::string("bad params json: ") + e.what());
    }
    SynthParams p;
    p.seed = j.value("seed", p.seed);
    if (j.contains("semi_axes")) {
        p.semi_axes = {j["semi_axes"][0], j["semi_axes"][1], j["semi_axes"][2]};
    }
    p.fold_amplitude_mm = j.value("fold_amplitude_mm", p.fold_amplitude_mm);
    p.fold_max_degree = j.value("fold_max_degree", p.fold_max_degree);
    p.subdivisions = j.value("subdivisions", p.subdivisions);
    p.inner_offset_mm = j.value("inner_offset_mm", p.inner_offset_mm);
    p.hemisphere_gap_mm = j.value("hemisphere_gap_mm", p.hemisphere_gap_mm);
    p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
    if (j.contains("dims")) p.dims = {j["dims"][0], j["dims"][1], j["dims"][2]};
    if (j.contains("spacing")) p.spacing = {j["spacing"][0], j["spacing"][1], j["spacing"][2]};
    p.transform_translation_mm = j.value("transform_translation_mm", p.transform_translation_mm);
    p.transform_rotation_deg = j.value("transform_rotation_deg", p.transform_rotation_deg);
    if (j.contains("transform_scale")) {
        p.transform_scale_lo = j["transform_scale"][0];
        p.transform_scale_hi = j["transform_scale"][1];
    }
    return p;
}

} // namespace cf
