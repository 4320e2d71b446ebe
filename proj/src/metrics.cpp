#include "cortifield/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cortifield/errors.hpp"
#include "cortifield/parallel.hpp"
#include "cortifield/rng.hpp"

namespace cf {

SurfaceDiscrepancy surface_discrepancy(const TriangleMesh& a, const TriangleMesh& b,
                                       const DiscrepancyConfig& cfg) {
    require(!a.empty() && !b.empty(), errc::empty_mesh, "surface_discrepancy needs nonempty meshes");
    require(cfg.samples > 0, errc::invalid_argument, "sample count must be positive");
    const Bvh bvh_a(a), bvh_b(b);
    Rng rng(cfg.seed);
    Rng rng_a = rng.fork(1), rng_b = rng.fork(2);
    const std::vector<Vec3> pa = sample_on_surface(a, cfg.samples, rng_a);
    const std::vector<Vec3> pb = sample_on_surface(b, cfg.samples, rng_b);

    // Pooled bidirectional distances: samples of each mesh against the
    // opposite full mesh. Distances at floating-point noise level collapse to
    // an exact zero so identical surfaces measure 0, not ~1e-16.
    Box3 joint = a.bounds();
    {
        const Box3 bb = b.bounds();
        joint.expand(bb.lo);
        joint.expand(bb.hi);
    }
    const double zero_floor = 1e-12 * std::max(joint.diagonal(), 1e-30);
    std::vector<double> dist(static_cast<size_t>(2 * cfg.samples));
    parallel_ranges(cfg.samples, 4096, [&](int64_t lo, int64_t hi, int64_t) {
        for (int64_t i = lo; i < hi; ++i) {
            double da = bvh_b.closest_point(pa[static_cast<size_t>(i)]).distance;
            double db = bvh_a.closest_point(pb[static_cast<size_t>(i)]).distance;
            dist[static_cast<size_t>(i)] = da <= zero_floor ? 0.0 : da;
            dist[static_cast<size_t>(cfg.samples + i)] = db <= zero_floor ? 0.0 : db;
        }
    });

    SurfaceDiscrepancy out;
    out.sample_count = cfg.samples;
    double acc = 0.0;
    int64_t over1 = 0, over2 = 0;
    for (double d : dist) {
        acc += d;
        if (d > 1.0) ++over1;
        if (d > 2.0) ++over2;
    }
    const double n = double(dist.size());
    out.ad_mm = acc / n;
    out.pct_over_1mm = 100.0 * double(over1) / n;
    out.pct_over_2mm = 100.0 * double(over2) / n;

    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    auto nearest_rank = [&](double q) {
        const size_t rank = static_cast<size_t>(std::ceil(q * n));
        return sorted[std::min(sorted.size() - 1, rank == 0 ? 0 : rank - 1)];
    };
    out.hd90_mm = nearest_rank(0.90);
    out.median_mm = nearest_rank(0.50);

    if (cfg.compute_emd) {
        const int m = static_cast<int>(std::min<int64_t>(cfg.emd_subsample, cfg.samples));
        std::vector<Vec3> sa(static_cast<size_t>(m)), sb(static_cast<size_t>(m));
        Rng rs = rng.fork(3);
        for (int i = 0; i < m; ++i) {
            sa[static_cast<size_t>(i)] = pa[static_cast<size_t>(rs.below(static_cast<uint64_t>(cfg.samples)))];
            sb[static_cast<size_t>(i)] = pb[static_cast<size_t>(rs.below(static_cast<uint64_t>(cfg.samples)))];
        }
        Box3 box = a.bounds();
        const Box3 bb = b.bounds();
        box.expand(bb.lo);
        box.expand(bb.hi);
        const double eps = std::max(cfg.sinkhorn_epsilon_scale * box.diagonal(), 1e-9);
        out.emd = sinkhorn_emd(sa, sb, eps, cfg.sinkhorn_iterations);
    }
    return out;
}

double dice(const Volume& a, const Volume& b) {
    require(a.dims == b.dims, errc::dims_mismatch, "dice needs matching dims");
    int64_t na = 0, nb = 0, ninter = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool ia = a.data[i] > 0.5f, ib = b.data[i] > 0.5f;
        na += ia;
        nb += ib;
        ninter += ia && ib;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(ninter) / double(na + nb);
}

double volume_similarity(const Volume& a, const Volume& b) {
    require(a.dims == b.dims, errc::dims_mismatch, "volume_similarity needs matching dims");
    int64_t na = 0, nb = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        na += a.data[i] > 0.5f;
        nb += b.data[i] > 0.5f;
    }
    if (na + nb == 0) return 1.0;
    return 1.0 - double(std::llabs(na - nb)) / double(na + nb);
}

namespace {

Volume binary_morph6(const Volume& v, bool dilate) {
    Volume out = v;
    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    parallel_ranges(nz, 1, [&](int64_t kb, int64_t ke, int64_t) {
        for (int64_t k = kb; k < ke; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const bool center = v.at(i, static_cast<int>(j), static_cast<int>(k)) > 0.5f;
                    bool hit = center;
                    const int di[6] = {1, -1, 0, 0, 0, 0};
                    const int dj[6] = {0, 0, 1, -1, 0, 0};
                    const int dk[6] = {0, 0, 0, 0, 1, -1};
                    for (int d = 0; d < 6 && hit == !dilate; ++d) {
                        const int ii = i + di[d], jj = j + dj[d], kk = static_cast<int>(k) + dk[d];
                        // Outside the grid counts as background.
                        const bool nb = ii >= 0 && jj >= 0 && kk >= 0 && ii < nx && jj < ny && kk < nz &&
                                        v.at(ii, jj, kk) > 0.5f;
                        if (dilate && nb) hit = true;
                        if (!dilate && !nb) hit = false;
                    }
                    out.at(i, j, static_cast<int>(k)) = hit ? 1.0f : 0.0f;
                }
    });
    return out;
}

} // namespace

Volume binary_erode6(const Volume& v) { return binary_morph6(v, false); }
Volume binary_dilate6(const Volume& v) { return binary_morph6(v, true); }

Volume ribbon_segmentation(const SurfaceSet& surfaces, std::array<int, 3> native_dims, Vec3 native_spacing,
                           const Affine& native_affine) {
    // 1 mm^3 voxelization over each mesh's padded bounds.
    std::array<Volume, 4> vox;
    for (int ch = 0; ch < 4; ++ch) {
        const TriangleMesh& m = surfaces.meshes[static_cast<size_t>(ch)];
        require(!m.empty(), errc::empty_mesh, "ribbon_segmentation needs four nonempty surfaces");
        Box3 box = m.bounds();
        const Vec3 lo = box.lo - Vec3{2, 2, 2};
        const Vec3 hi = box.hi + Vec3{2, 2, 2};
        const std::array<int, 3> dims = {static_cast<int>(std::ceil(hi.x - lo.x)) + 1,
                                         static_cast<int>(std::ceil(hi.y - lo.y)) + 1,
                                         static_cast<int>(std::ceil(hi.z - lo.z)) + 1};
        Affine aff = Affine::translation(lo);
        const Bvh bvh(m);
        vox[static_cast<size_t>(ch)] = voxelize(m, bvh, dims, {1, 1, 1}, aff);
    }

    // Resample each voxel grid to the native grid by nearest neighbor.
    auto to_native = [&](const Volume& src) {
        Volume out;
        out.dims = native_dims;
        out.spacing = native_spacing;
        out.affine = native_affine;
        out.data.assign(static_cast<size_t>(out.size()), 0.0f);
        const Affine to_src = src.affine.inverse() * native_affine;
        for (int k = 0; k < native_dims[2]; ++k)
            for (int j = 0; j < native_dims[1]; ++j)
                for (int i = 0; i < native_dims[0]; ++i) {
                    const Vec3 c = to_src.apply({double(i), double(j), double(k)});
                    const int si = static_cast<int>(std::lround(c.x));
                    const int sj = static_cast<int>(std::lround(c.y));
                    const int sk = static_cast<int>(std::lround(c.z));
                    if (si < 0 || sj < 0 || sk < 0 || si >= src.dims[0] || sj >= src.dims[1] ||
                        sk >= src.dims[2])
                        continue;
                    if (src.at(si, sj, sk) > 0.5f) out.at(i, j, k) = 1.0f;
                }
        return out;
    };

    const Volume outer_l = to_native(vox[static_cast<size_t>(SurfaceSet::index_of(Hemisphere::left, Boundary::outer))]);
    const Volume outer_r = to_native(vox[static_cast<size_t>(SurfaceSet::index_of(Hemisphere::right, Boundary::outer))]);
    const Volume inner_l = to_native(vox[static_cast<size_t>(SurfaceSet::index_of(Hemisphere::left, Boundary::inner))]);
    const Volume inner_r = to_native(vox[static_cast<size_t>(SurfaceSet::index_of(Hemisphere::right, Boundary::inner))]);

    Volume ribbon = outer_l;
    for (size_t i = 0; i < ribbon.data.size(); ++i) {
        const bool outer = outer_l.data[i] > 0.5f || outer_r.data[i] > 0.5f;
        const bool inner = inner_l.data[i] > 0.5f || inner_r.data[i] > 0.5f;
        ribbon.data[i] = outer && !inner ? 1.0f : 0.0f;
    }
    ribbon = binary_dilate6(binary_erode6(ribbon)); // opening
    ribbon = binary_dilate6(ribbon);                // then one dilation
    return ribbon;
}

} // namespace cf
