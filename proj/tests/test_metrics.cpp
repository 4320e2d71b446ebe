#include <doctest.h>

#include "cortifield/errors.hpp"
#include "cortifield/metrics.hpp"
#include "cortifield/synth.hpp"
#include "support/oracles.hpp"

using namespace cf;
using namespace cf::testing;

namespace {

TriangleMesh sphere_mesh(double r, const Vec3& c, int subdiv = 3) {
    TriangleMesh m = make_icosphere(subdiv);
    for (Vec3& v : m.vertices) v = v * r + c;
    return m;
}

// Asymmetric closed surface for rigid-registration tests.
TriangleMesh folded_blob(uint64_t seed) {
    SynthParams p;
    p.seed = seed;
    p.subdivisions = 3;
    p.dims = {8, 8, 8};
    p.spacing = {24, 24, 24};
    return synth_case(p).surfaces.at(Hemisphere::right, Boundary::outer);
}

double rotation_angle_deg(const Affine& a, const Affine& b) {
    // angle of R_a * R_b^T
    double trace = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) trace += a.at(i, k) * b.at(i, k);
    const double c = std::clamp((trace - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979;
}

} // namespace

TEST_CASE("self discrepancy is exactly zero") {
    const TriangleMesh m = sphere_mesh(10.0, {0, 0, 0});
    DiscrepancyConfig cfg;
    cfg.samples = 5000;
    cfg.compute_emd = false;
    const SurfaceDiscrepancy d = surface_discrepancy(m, m, cfg);
    CHECK(d.ad_mm == 0.0);
    CHECK(d.hd90_mm == 0.0);
    CHECK(d.pct_over_1mm == 0.0);
    CHECK(d.pct_over_2mm == 0.0);
    CHECK(d.hd90_mm >= d.median_mm);
}

TEST_CASE("concentric spheres measure their radial gap") {
    const TriangleMesh a = sphere_mesh(10.0, {0, 0, 0}, 4);
    const TriangleMesh b = sphere_mesh(10.5, {0, 0, 0}, 4);
    DiscrepancyConfig cfg;
    cfg.samples = 20000;
    cfg.compute_emd = false;
    cfg.seed = 3;
    const SurfaceDiscrepancy d = surface_discrepancy(a, b, cfg);
    CHECK(std::fabs(d.ad_mm - 0.5) < 0.05);
    CHECK(d.pct_over_1mm == doctest::Approx(0.0));
}

TEST_CASE("discrepancy is symmetric up to sampling noise") {
    const TriangleMesh a = folded_blob(4);
    TriangleMesh b = folded_blob(4);
    for (Vec3& v : b.vertices) v += Vec3{1.0, -0.5, 0.25};
    for (uint64_t seed = 0; seed < 10; ++seed) {
        DiscrepancyConfig cfg;
        cfg.samples = 4000;
        cfg.compute_emd = false;
        cfg.seed = seed;
        const SurfaceDiscrepancy ab = surface_discrepancy(a, b, cfg);
        const SurfaceDiscrepancy ba = surface_discrepancy(b, a, cfg);
        CHECK(std::fabs(ab.ad_mm - ba.ad_mm) / ab.ad_mm < 0.02);
    }
}

TEST_CASE("AD and HD90 are invariant under a common rigid transform") {
    const TriangleMesh a = folded_blob(5);
    TriangleMesh b = folded_blob(5);
    for (Vec3& v : b.vertices) v += Vec3{0.8, 0.3, -0.4};
    DiscrepancyConfig cfg;
    cfg.samples = 4000;
    cfg.compute_emd = false;
    const SurfaceDiscrepancy base = surface_discrepancy(a, b, cfg);
    const Affine t = Affine::translation({5, 6, -7}) * Affine::rotation({1, 2, 3}, 0.6);
    const SurfaceDiscrepancy moved = surface_discrepancy(transform_mesh(a, t), transform_mesh(b, t), cfg);
    CHECK(std::fabs(base.ad_mm - moved.ad_mm) < 1e-6);
    CHECK(std::fabs(base.hd90_mm - moved.hd90_mm) < 1e-6);
}

TEST_CASE("sinkhorn transport cost is close to the exact assignment at small n") {
    const TriangleMesh a = sphere_mesh(10.0, {0, 0, 0});
    const TriangleMesh b = sphere_mesh(11.0, {1.0, 0, 0});
    Rng ra(1), rb(2);
    const auto pa = sample_on_surface(a, 64, ra);
    const auto pb = sample_on_surface(b, 64, rb);
    Box3 box = a.bounds();
    const Box3 bb = b.bounds();
    box.expand(bb.lo);
    box.expand(bb.hi);
    const double eps = 0.01 * box.diagonal();
    const double approx = sinkhorn_emd(pa, pb, eps, 500);
    const double exact = exact_emd(pa, pb);
    CHECK(approx >= exact * 0.999); // any feasible plan costs at least the optimum
    CHECK(std::fabs(approx - exact) / exact < 0.05);
}

TEST_CASE("icp: identity, recovery, and the bounded-iteration contract") {
    const TriangleMesh source = folded_blob(6);

    SUBCASE("source equals target") {
        const IcpResult r = icp_rigid(source, source);
        for (int i = 0; i < 16; ++i) {
            const double expect = (i % 5 == 0) ? 1.0 : 0.0;
            CHECK(std::fabs(r.transform.m[static_cast<size_t>(i)] - expect) < 1e-6);
        }
        CHECK(r.converged);
    }

    SUBCASE("known rigid transforms are recovered") {
        Rng rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            CAPTURE(trial);
            const Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
            const double angle = rng.uniform(-1.0, 1.0) * 15.0 * 3.14159265 / 180.0;
            const Vec3 trans{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            const Affine known = Affine::translation(trans) * Affine::rotation(axis, angle);
            const TriangleMesh target = transform_mesh(source, known);
            IcpConfig cfg;
            cfg.seed = static_cast<uint64_t>(trial);
            const IcpResult r = icp_rigid(source, target, cfg);
            CHECK(rotation_angle_deg(r.transform, known) < 0.5);
            double disp = 0.0;
            for (size_t i = 0; i < source.vertices.size(); i += 7)
                disp = std::max(disp, (r.transform.apply(source.vertices[i]) - known.apply(source.vertices[i])).norm());
            CHECK(disp < 0.1);
        }
    }

    SUBCASE("iteration budget returns best-so-far") {
        const Affine known = Affine::translation({4, -3, 2}) * Affine::rotation({0, 0, 1}, 0.2);
        const TriangleMesh target = transform_mesh(source, known);
        IcpConfig cfg;
        cfg.max_iterations = 2;
        const IcpResult r = icp_rigid(source, target, cfg);
        CHECK(r.iterations == 2);
        CHECK_FALSE(r.converged);
        CHECK(std::isfinite(r.rms));
    }
}

TEST_CASE("dice and volume similarity identities and worked example") {
    Volume a = make_volume({10, 10, 10}, {1, 1, 1});
    Volume b = a;
    // |A| = 80, |B| = 120, |A and B| = 60.
    for (int i = 0; i < 120; ++i) {
        if (i < 80) a.data[static_cast<size_t>(i)] = 1.0f;            // A: 0..79
        b.data[static_cast<size_t>(i + 20)] = 1.0f;                   // B: 20..139
    }
    CHECK(dice(a, a) == 1.0);
    CHECK(volume_similarity(a, a) == 1.0);
    CHECK(dice(a, b) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(volume_similarity(a, b) == doctest::Approx(0.8).epsilon(1e-12));

    Volume c = make_volume({10, 10, 10}, {1, 1, 1});
    Volume d = c;
    for (int i = 0; i < 50; ++i) {
        c.data[static_cast<size_t>(i)] = 1.0f;
        d.data[static_cast<size_t>(500 + i)] = 1.0f;
    }
    CHECK(dice(c, d) == 0.0);
    CHECK(volume_similarity(c, d) == 1.0);

    const Volume empty = make_volume({10, 10, 10}, {1, 1, 1});
    CHECK(dice(empty, empty) == 1.0);
    CHECK(volume_similarity(empty, empty) == 1.0);

    Volume other_dims = make_volume({9, 10, 10}, {1, 1, 1});
    CHECK_THROWS_AS(dice(a, other_dims), error);
}

namespace {

SurfaceSet concentric_set(double r_outer, double r_inner) {
    SurfaceSet s;
    s.at(Hemisphere::left, Boundary::outer) = sphere_mesh(r_outer, {-30, 0, 0});
    s.at(Hemisphere::left, Boundary::inner) = sphere_mesh(r_inner, {-30, 0, 0});
    s.at(Hemisphere::right, Boundary::outer) = sphere_mesh(r_outer, {30, 0, 0});
    s.at(Hemisphere::right, Boundary::inner) = sphere_mesh(r_inner, {30, 0, 0});
    return s;
}

// Analytic reference: label by true sphere membership, then the same
// morphology ops.
Volume brute_ribbon(double r_outer, double r_inner, std::array<int, 3> dims, const Affine& aff) {
    Volume v = make_volume(dims, {1, 1, 1});
    v.affine = aff;
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) {
                const Vec3 p = v.voxel_center(i, j, k);
                const double dl = (p - Vec3{-30, 0, 0}).norm();
                const double dr = (p - Vec3{30, 0, 0}).norm();
                const bool outer = dl < r_outer || dr < r_outer;
                const bool inner = dl < r_inner || dr < r_inner;
                v.at(i, j, k) = outer && !inner ? 1.0f : 0.0f;
            }
    return binary_dilate6(binary_dilate6(binary_erode6(v)));
}

int64_t count_on(const Volume& v) {
    int64_t n = 0;
    for (float f : v.data) n += f > 0.5f;
    return n;
}

} // namespace

TEST_CASE("ribbon segmentation matches the analytic shell construction") {
    const SurfaceSet s = concentric_set(20.0, 15.0);
    const std::array<int, 3> dims = {112, 52, 52};
    const Affine aff = Affine::translation({-55.5, -25.5, -25.5});
    const Volume ribbon = ribbon_segmentation(s, dims, {1, 1, 1}, aff);
    const Volume reference = brute_ribbon(20.0, 15.0, dims, aff);
    const int64_t got = count_on(ribbon);
    const int64_t expect = count_on(reference);
    CHECK(std::fabs(double(got - expect)) / double(expect) < 0.05);

    // Disjoint hemispheres: the ribbon splits exactly at the midplane.
    int64_t left = 0, right = 0;
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i)
                if (ribbon.at(i, j, k) > 0.5f) (ribbon.voxel_center(i, j, k).x < 0 ? left : right) += 1;
    CHECK(left + right == got);
    CHECK(left == right); // mirror symmetry of the construction
}

TEST_CASE("inner equal to outer leaves a near-empty ribbon") {
    SurfaceSet s = concentric_set(20.0, 15.0);
    s.at(Hemisphere::left, Boundary::inner) = s.at(Hemisphere::left, Boundary::outer);
    s.at(Hemisphere::right, Boundary::inner) = s.at(Hemisphere::right, Boundary::outer);
    const std::array<int, 3> dims = {112, 52, 52};
    const Affine aff = Affine::translation({-55.5, -25.5, -25.5});
    const Volume ribbon = ribbon_segmentation(s, dims, {1, 1, 1}, aff);
    const double outer_volume = 2.0 * 4.0 / 3.0 * 3.14159 * 20 * 20 * 20;
    CHECK(double(count_on(ribbon)) <= 0.01 * outer_volume);
}
