#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "cortifield/errors.hpp"
#include "cortifield/implicit.hpp"
#include "cortifield/synth.hpp"
#include "support/oracles.hpp"

using namespace cf;
using namespace cf::testing;

TEST_CASE("zero fold amplitude gives an exact ellipsoid") {
    SynthParams p;
    p.fold_amplitude_mm = 0.0;
    p.dims = {16, 16, 16};
    p.spacing = {12, 12, 12};
    const SynthCase c = synth_case(p);
    const TriangleMesh& outer = c.surfaces.at(Hemisphere::right, Boundary::outer);
    const double cx = p.semi_axes.x + p.hemisphere_gap_mm / 2.0; // amplitude 0
    for (const Vec3& v : outer.vertices) {
        const Vec3 d{(v.x - cx) / p.semi_axes.x, v.y / p.semi_axes.y, v.z / p.semi_axes.z};
        CHECK(std::fabs(d.norm() - 1.0) < 1e-6);
    }
}

TEST_CASE("same seed gives a bit-identical case") {
    SynthParams p;
    p.seed = 17;
    p.dims = {24, 24, 24};
    p.spacing = {8, 8, 8};
    p.subdivisions = 2;
    const SynthCase a = synth_case(p);
    const SynthCase b = synth_case(p);
    CHECK(std::memcmp(a.volume.data.data(), b.volume.data.data(), a.volume.data.size() * 4) == 0);
    for (int ch = 0; ch < 4; ++ch) {
        const auto& va = a.surfaces.meshes[static_cast<size_t>(ch)].vertices;
        const auto& vb = b.surfaces.meshes[static_cast<size_t>(ch)].vertices;
        REQUIRE(va.size() == vb.size());
        CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(Vec3)) == 0);
    }
    for (int i = 0; i < 16; ++i)
        CHECK(a.native_to_template.m[static_cast<size_t>(i)] == b.native_to_template.m[static_cast<size_t>(i)]);
}

TEST_CASE("generated surfaces are closed, genus zero, outward oriented") {
    SynthParams p;
    p.seed = 5;
    p.subdivisions = 3;
    p.dims = {16, 16, 16};
    p.spacing = {12, 12, 12};
    const SynthCase c = synth_case(p);
    for (int ch = 0; ch < 4; ++ch) {
        const TriangleMesh& m = c.surfaces.meshes[static_cast<size_t>(ch)];
        CHECK(is_closed(m));
        CHECK(genus(m) == 0);
        CHECK(signed_volume(m) > 0.0);
    }
}

TEST_CASE("inner surfaces lie strictly inside their outer surfaces") {
    SynthParams p;
    p.seed = 6;
    p.subdivisions = 3;
    p.dims = {16, 16, 16};
    p.spacing = {12, 12, 12};
    const SynthCase c = synth_case(p);
    for (Hemisphere h : {Hemisphere::left, Hemisphere::right}) {
        const SurfaceSetIndex index(c.surfaces);
        const int io = SurfaceSet::index_of(h, Boundary::outer);
        const int in = SurfaceSet::index_of(h, Boundary::inner);
        Rng rng(99);
        TriangleMesh inner = c.surfaces.meshes[static_cast<size_t>(in)];
        const auto probes = sample_on_surface(inner, 300, rng);
        for (const Vec3& q : probes) {
            const auto sdf = index.sdf_targets(q);
            CHECK(sdf[static_cast<size_t>(io)] > sdf[static_cast<size_t>(in)] - 1e-9);
            CHECK(sdf[static_cast<size_t>(io)] > 0.0f);
        }
    }
}

TEST_CASE("cross-oracle consistency: sdf sign equals occupancy sign on probes") {
    SynthParams p;
    p.seed = 11;
    p.subdivisions = 3;
    p.dims = {16, 16, 16};
    p.spacing = {12, 12, 12};
    const SynthCase c = synth_case(p);
    const SurfaceSetIndex index(c.surfaces);
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 q{rng.uniform(-80, 80), rng.uniform(-60, 60), rng.uniform(-60, 60)};
        const auto occ = index.occupancy_targets(q);
        const auto sdf = index.sdf_targets(q);
        for (int ch = 0; ch < 4; ++ch) {
            const float expected = 2.0f * occ[static_cast<size_t>(ch)] - 1.0f;
            if (std::fabs(sdf[static_cast<size_t>(ch)]) > 1e-9)
                CHECK(sdf[static_cast<size_t>(ch)] * expected > 0.0f);
        }
    }
}

TEST_CASE("excessive inner offset raises SelfIntersectingInner") {
    SynthParams p;
    p.seed = 3;
    p.subdivisions = 2;
    p.semi_axes = {20, 20, 20};
    p.fold_amplitude_mm = 8.0;
    p.fold_max_degree = 6;
    p.inner_offset_mm = 18.0; // deeper than the folds allow
    p.dims = {16, 16, 16};
    p.spacing = {12, 12, 12};
    CHECK_THROWS_AS(synth_case(p), error);
}

TEST_CASE("tissue intensities appear in the volume") {
    SynthParams p;
    p.seed = 8;
    p.noise_sigma = 0.0;
    p.transform_translation_mm = 0.0;
    p.transform_rotation_deg = 0.0;
    p.transform_scale_lo = p.transform_scale_hi = 1.0;
    const SynthCase c = synth_case(p);
    int64_t wm = 0, gm = 0, csf = 0, bg = 0;
    for (float f : c.volume.data) {
        if (f == doctest::Approx(1.0f)) ++wm;
        else if (f == doctest::Approx(0.6f)) ++gm;
        else if (f == doctest::Approx(0.2f)) ++csf;
        else ++bg;
    }
    CHECK(wm > 0);
    CHECK(gm > 0);
    CHECK(csf > 0);
    CHECK(bg > 0);
    // WM sits inside GM shell: their counts should be same order of magnitude.
    CHECK(double(gm) / double(wm) < 3.0);
}

TEST_CASE("case write produces the canonical directory layout") {
    SynthParams p;
    p.seed = 21;
    p.subdivisions = 2;
    p.dims = {12, 12, 12};
    p.spacing = {16, 16, 16};
    const SynthCase c = synth_case(p);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "cortifield_test_case").string();
    std::filesystem::create_directories(dir);
    synth_write_case(c, dir);
    CHECK(std::filesystem::exists(dir + "/volume.cfvol"));
    CHECK(std::filesystem::exists(dir + "/transform.txt"));
    CHECK(std::filesystem::exists(dir + "/params.json"));
    for (int ch = 0; ch < 4; ++ch)
        CHECK(std::filesystem::exists(dir + "/" + std::string(SurfaceSet::channel_name(ch)) + ".obj"));
    const SurfaceSet loaded = load_surface_set(dir);
    CHECK(loaded.meshes[0].faces == c.surfaces.meshes[0].faces);
    const SynthParams rp = synth_params_from_json_file(dir + "/params.json");
    CHECK(rp.seed == p.seed);
    CHECK(rp.subdivisions == p.subdivisions);
}
