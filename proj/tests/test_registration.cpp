#include <doctest.h>

#include "cortifield/errors.hpp"
#include "cortifield/synth.hpp"
#include "cortifield/volume.hpp"

using namespace cf;

namespace {

// Structured head-like phantom in canonical position.
Volume make_phantom(int n = 48, double spacing = 3.0) {
    SynthParams p;
    p.seed = 123;
    p.subdivisions = 2;
    p.dims = {n, n, n};
    p.spacing = {spacing, spacing, spacing};
    p.noise_sigma = 0.0;
    p.transform_translation_mm = 0.0;
    p.transform_rotation_deg = 0.0;
    p.transform_scale_lo = p.transform_scale_hi = 1.0;
    return synth_case(p).volume;
}

// Mean displacement between two affine maps over the volume's voxel centers.
double mean_voxel_displacement(const Volume& v, const Affine& a, const Affine& b) {
    double acc = 0.0;
    int64_t n = 0;
    for (int k = 0; k < v.dims[2]; k += 4)
        for (int j = 0; j < v.dims[1]; j += 4)
            for (int i = 0; i < v.dims[0]; i += 4) {
                const Vec3 w = v.voxel_center(i, j, k);
                acc += (a.apply(w) - b.apply(w)).norm();
                ++n;
            }
    return acc / double(n);
}

} // namespace

TEST_CASE("registering a volume to itself is near identity") {
    const Volume fixed = make_phantom();
    const RegistrationResult r = register_affine(fixed, fixed);
    for (int i = 0; i < 16; ++i) {
        const double expect = (i % 5 == 0) ? 1.0 : 0.0;
        CHECK(std::fabs(r.moving_to_fixed.m[static_cast<size_t>(i)] - expect) < 1e-3);
    }
}

TEST_CASE("known translation is recovered within half a voxel per axis") {
    const Volume fixed = make_phantom();
    const Affine known = Affine::translation({5.0, -3.0, 2.0}); // fixed -> moving world
    // moving(v) = fixed(known^-1 . w): content shifted by `known`.
    const Volume moving = resample(fixed, known, fixed.dims, fixed.spacing, fixed.affine);
    const RegistrationResult r = register_affine(moving, fixed);
    // moving_to_fixed should be ~known^-1: translation (-5, 3, -2).
    const Vec3 t{r.moving_to_fixed.at(0, 3), r.moving_to_fixed.at(1, 3), r.moving_to_fixed.at(2, 3)};
    CHECK(std::fabs(t.x + 5.0) < 1.5);
    CHECK(std::fabs(t.y - 3.0) < 1.5);
    CHECK(std::fabs(t.z + 2.0) < 1.5);
    CHECK(mean_voxel_displacement(fixed, r.moving_to_fixed, known.inverse()) < 1.5);
}

TEST_CASE("random affine perturbations are recovered below half the spacing") {
    const Volume fixed = make_phantom();
    Rng rng(2024);
    int tested = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
        const double angle = rng.uniform(-1.0, 1.0) * 10.0 * 3.14159265 / 180.0;
        const Vec3 trans{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
        const Vec3 scale{rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1)};
        const Affine known = Affine::translation(trans) * Affine::rotation(axis, angle) * Affine::scaling(scale);
        const Volume moving = resample(fixed, known, fixed.dims, fixed.spacing, fixed.affine);
        const RegistrationResult r = register_affine(moving, fixed);
        const double err = mean_voxel_displacement(fixed, r.moving_to_fixed, known.inverse());
        CAPTURE(trial);
        CHECK(err < 0.5 * fixed.spacing.x);
        ++tested;
    }
    CHECK(tested == 10);
}

TEST_CASE("zero-variance volumes are rejected") {
    const Volume fixed = make_phantom(24);
    Volume flat = make_volume({24, 24, 24}, {3, 3, 3});
    CHECK_THROWS_AS(register_affine(flat, fixed), error);
    try {
        register_affine(flat, fixed);
    } catch (const error& e) {
        CHECK(e.code() == errc::invalid_argument);
    }
}

TEST_CASE("disjoint supports raise NoOverlap") {
    // Same centers of mass, but the moving intensity lives in two far blobs
    // while the fixed intensity is a small central one: after center/moment
    // initialization there is still no joint support.
    Volume fixed = make_volume({48, 48, 48}, {2, 2, 2}, {-47, -47, -47});
    Volume moving = fixed;
    for (int k = 0; k < 48; ++k)
        for (int j = 0; j < 48; ++j)
            for (int i = 0; i < 48; ++i) {
                const Vec3 w = fixed.voxel_center(i, j, k);
                if (w.norm() <= 6.0) fixed.at(i, j, k) = 1.0f;
                if ((w - Vec3{40, 0, 0}).norm() <= 6.0 || (w + Vec3{40, 0, 0}).norm() <= 6.0)
                    moving.at(i, j, k) = 1.0f;
            }
    try {
        register_affine(moving, fixed);
        FAIL("expected NoOverlap");
    } catch (const error& e) {
        CHECK(e.code() == errc::no_overlap);
    }
}
