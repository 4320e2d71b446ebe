#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "cortifield/errors.hpp"
#include "cortifield/implicit.hpp"
#include "cortifield/parallel.hpp"
#include "support/oracles.hpp"

using namespace cf;
using namespace cf::testing;

namespace {

SurfaceSet sphere_set() {
    // Two concentric sphere pairs standing in for hemispheres.
    SurfaceSet s;
    auto scaled = [](double r, const Vec3& c) {
        TriangleMesh m = make_icosphere(3);
        for (Vec3& v : m.vertices) v = v * r + c;
        return m;
    };
    s.at(Hemisphere::left, Boundary::outer) = scaled(20.0, {-30, 0, 0});
    s.at(Hemisphere::left, Boundary::inner) = scaled(14.0, {-30, 0, 0});
    s.at(Hemisphere::right, Boundary::outer) = scaled(20.0, {30, 0, 0});
    s.at(Hemisphere::right, Boundary::inner) = scaled(14.0, {30, 0, 0});
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("cortifield_test_" + name)).string();
}

} // namespace

TEST_CASE("occupancy targets at landmark points") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    const auto at_left_center = index.occupancy_targets({-30, 0, 0});
    CHECK(at_left_center[SurfaceSet::index_of(Hemisphere::left, Boundary::inner)] == 1.0f);
    CHECK(at_left_center[SurfaceSet::index_of(Hemisphere::left, Boundary::outer)] == 1.0f);
    CHECK(at_left_center[SurfaceSet::index_of(Hemisphere::right, Boundary::inner)] == 0.0f);
    const auto at_corner = index.occupancy_targets({-95, -95, -95});
    for (float f : at_corner) CHECK(f == 0.0f);
}

TEST_CASE("occupancy targets agree with the winding oracle on random points") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    Rng rng(42);
    for (int i = 0; i < 500; ++i) {
        const Vec3 p{rng.uniform(-60, 60), rng.uniform(-30, 30), rng.uniform(-30, 30)};
        const auto occ = index.occupancy_targets(p);
        for (int ch = 0; ch < 4; ++ch)
            CHECK(occ[static_cast<size_t>(ch)] ==
                  (winding_inside(s.meshes[static_cast<size_t>(ch)], p) ? 1.0f : 0.0f));
    }
}

TEST_CASE("sdf targets: sign convention and magnitudes") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    const int right_outer = SurfaceSet::index_of(Hemisphere::right, Boundary::outer);

    // On a vertex of the mesh the distance is zero.
    const Vec3 v = s.meshes[static_cast<size_t>(right_outer)].vertices[0];
    CHECK(std::fabs(index.sdf_targets(v)[static_cast<size_t>(right_outer)]) < 1e-6);

    // Center: +20 within icosphere chord error; outside point: negative.
    const float center = index.sdf_targets({30, 0, 0})[static_cast<size_t>(right_outer)];
    CHECK(center == doctest::Approx(20.0).epsilon(0.01));
    const float outside = index.sdf_targets({30, 0, 35})[static_cast<size_t>(right_outer)];
    CHECK(outside == doctest::Approx(-15.0).epsilon(0.02));
}

TEST_CASE("sdf magnitude equals brute-force distance and sign matches occupancy") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const Vec3 p{rng.uniform(-55, 55), rng.uniform(-25, 25), rng.uniform(-25, 25)};
        const auto sdf = index.sdf_targets(p);
        const auto occ = index.occupancy_targets(p);
        for (int ch = 0; ch < 4; ++ch) {
            const double brute = brute_force_closest(s.meshes[static_cast<size_t>(ch)], p).distance;
            // Targets carry float32 semantics; the double-precision BVH/brute
            // identity is covered in the mesh suite.
            CHECK(std::fabs(sdf[static_cast<size_t>(ch)]) == static_cast<float>(brute));
            const double expected_sign = occ[static_cast<size_t>(ch)] > 0.5f ? 1.0 : -1.0;
            if (brute > 1e-9) CHECK(sdf[static_cast<size_t>(ch)] * expected_sign >= 0.0f);
        }
    }
}

TEST_CASE("pool split counts are exact") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    TemplateSpace omega;
    SamplingConfig cfg;
    cfg.pool_size = 1000;
    cfg.uniform_fraction = 0.1;
    cfg.seed = 4;
    const SamplePool pool = build_pool(index, omega, Representation::sdf, cfg);
    int64_t near = 0, uniform = 0;
    for (SampleSource src : pool.source) (src == SampleSource::near_surface ? near : uniform) += 1;
    CHECK(near == 900);
    CHECK(uniform == 100);
    const Box3 box = omega.box();
    for (const Vec3& p : pool.points) CHECK(box.contains(p));
}

TEST_CASE("near-surface points are closer to surfaces than uniform points") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    TemplateSpace omega;
    SamplingConfig cfg;
    cfg.pool_size = 4000;
    cfg.seed = 5;
    const SamplePool pool = build_pool(index, omega, Representation::sdf, cfg);
    double near_acc = 0, uni_acc = 0;
    int64_t near_n = 0, uni_n = 0;
    for (int64_t i = 0; i < pool.size(); ++i) {
        double min_abs = 1e30;
        for (int ch = 0; ch < 4; ++ch)
            min_abs = std::min(min_abs, std::fabs(double(pool.targets[static_cast<size_t>(i)][static_cast<size_t>(ch)])));
        if (pool.source[static_cast<size_t>(i)] == SampleSource::near_surface) {
            near_acc += min_abs;
            ++near_n;
        } else {
            uni_acc += min_abs;
            ++uni_n;
        }
    }
    CHECK(near_acc / double(near_n) < uni_acc / double(uni_n));
}

TEST_CASE("95 percent of near-surface points lie within 4 sigma of a surface") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    TemplateSpace omega;
    SamplingConfig cfg;
    cfg.pool_size = 4000;
    cfg.perturbation_sigma_mm = 1.0;
    cfg.seed = 6;
    const SamplePool pool = build_pool(index, omega, Representation::sdf, cfg);
    int64_t near_n = 0, close = 0;
    for (int64_t i = 0; i < pool.size(); ++i) {
        if (pool.source[static_cast<size_t>(i)] != SampleSource::near_surface) continue;
        ++near_n;
        double min_abs = 1e30;
        for (int ch = 0; ch < 4; ++ch)
            min_abs = std::min(min_abs, std::fabs(double(pool.targets[static_cast<size_t>(i)][static_cast<size_t>(ch)])));
        if (min_abs <= 4.0 * cfg.perturbation_sigma_mm) ++close;
    }
    CHECK(double(close) / double(near_n) >= 0.95);
}

TEST_CASE("pool construction is deterministic and jobs independent") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    TemplateSpace omega;
    SamplingConfig cfg;
    cfg.pool_size = 2000;
    cfg.seed = 7;
    ThreadPool::global().set_jobs(1);
    const SamplePool a = build_pool(index, omega, Representation::occ, cfg);
    ThreadPool::global().set_jobs(4);
    const SamplePool b = build_pool(index, omega, Representation::occ, cfg);
    ThreadPool::global().set_jobs(0);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.points.data(), b.points.data(), sizeof(Vec3) * a.points.size()) == 0);
    CHECK(std::memcmp(a.targets.data(), b.targets.data(), 16 * a.targets.size()) == 0);
    for (float t : a.targets[0]) CHECK((t == 0.0f || t == 1.0f));
}

TEST_CASE("pool file round trip") {
    const SurfaceSet s = sphere_set();
    const SurfaceSetIndex index(s);
    TemplateSpace omega;
    SamplingConfig cfg;
    cfg.pool_size = 500;
    cfg.seed = 3;
    const SamplePool pool = build_pool(index, omega, Representation::sdf, cfg);
    const std::string path = temp_path("pool.cfpool");
    save_pool(pool, path);
    const SamplePool r = load_pool(path);
    REQUIRE(r.size() == pool.size());
    CHECK(r.representation == Representation::sdf);
    CHECK(r.sigma_mm == pool.sigma_mm);
    CHECK(r.seed == pool.seed);
    for (int64_t i = 0; i < r.size(); ++i) {
        CHECK(static_cast<float>(r.points[static_cast<size_t>(i)].x) ==
              static_cast<float>(pool.points[static_cast<size_t>(i)].x));
        CHECK(r.targets[static_cast<size_t>(i)] == pool.targets[static_cast<size_t>(i)]);
        CHECK(r.source[static_cast<size_t>(i)] == pool.source[static_cast<size_t>(i)]);
    }
}
