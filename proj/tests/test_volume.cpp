#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cortifield/errors.hpp"
#include "cortifield/rng.hpp"
#include "cortifield/volume.hpp"

using namespace cf;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("cortifield_test_" + name)).string();
}

// Hand-written minimal NIfTI-1 file; the oracle is manual header arithmetic.
void write_nifti(const std::string& path, int nx, int ny, int nz, float slope, float inter,
                 const std::vector<float>& values, int16_t datatype = 16) {
    std::vector<unsigned char> h(352, 0);
    auto put_i32 = [&](size_t off, int32_t v) { std::memcpy(h.data() + off, &v, 4); };
    auto put_i16 = [&](size_t off, int16_t v) { std::memcpy(h.data() + off, &v, 2); };
    auto put_f32 = [&](size_t off, float v) { std::memcpy(h.data() + off, &v, 4); };
    put_i32(0, 348);
    put_i16(40, 3); // dim[0]
    put_i16(42, static_cast<int16_t>(nx));
    put_i16(44, static_cast<int16_t>(ny));
    put_i16(46, static_cast<int16_t>(nz));
    put_i16(70, datatype);
    put_i16(72, datatype == 16 ? 32 : (datatype == 4 ? 16 : 8));
    put_f32(80, 2.0f); // pixdim[1..3]
    put_f32(84, 2.0f);
    put_f32(88, 2.0f);
    put_f32(108, 352.0f); // vox_offset
    put_f32(112, slope);
    put_f32(116, inter);
    put_i16(254, 1); // sform_code
    // srow: diag(2) with origin (-1, -2, -3)
    put_f32(280, 2.0f);
    put_f32(292, -1.0f);
    put_f32(300, 2.0f);
    put_f32(308, -2.0f);
    put_f32(320, 2.0f);
    put_f32(324, -3.0f);
    std::memcpy(h.data() + 344, "n+1\0", 4);
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(h.data()), 352);
    if (datatype == 16) {
        f.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * 4));
    } else if (datatype == 4) {
        for (float v : values) {
            const int16_t s = static_cast<int16_t>(v);
            f.write(reinterpret_cast<const char*>(&s), 2);
        }
    } else {
        for (float v : values) {
            const unsigned char b = static_cast<unsigned char>(v);
            f.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
}

} // namespace

TEST_CASE("raw volume round trip is bit exact") {
    Volume v = make_volume({8, 8, 8}, {1, 1, 1});
    CHECK(v.data.size() == 512);
    Rng rng(7);
    for (float& f : v.data) f = static_cast<float>(rng.normal());
    const std::string path = temp_path("roundtrip.cfvol");
    save_raw(v, path);
    const Volume r = load_volume(path);
    CHECK(r.dims == v.dims);
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
    for (int i = 0; i < 16; ++i) CHECK(r.affine.m[static_cast<size_t>(i)] == v.affine.m[static_cast<size_t>(i)]);
}

TEST_CASE("all-zero raw volume loads with identity affine") {
    const Volume v = make_volume({8, 8, 8}, {1, 1, 1});
    const std::string path = temp_path("zeros.cfvol");
    save_raw(v, path);
    const Volume r = load_volume(path);
    for (float f : r.data) CHECK(f == 0.0f);
    CHECK(r.affine.at(0, 0) == 1.0);
    CHECK(r.affine.at(0, 3) == 0.0);
}

TEST_CASE("nifti scl_slope and scl_inter apply") {
    const std::string path = temp_path("scaled.nii");
    std::vector<float> vals(8, 3.0f);
    write_nifti(path, 2, 2, 2, 2.0f, 1.0f, vals);
    const Volume v = load_volume(path);
    for (float f : v.data) CHECK(f == doctest::Approx(7.0f)); // 2*3 + 1
    CHECK(v.affine.at(0, 0) == doctest::Approx(2.0));
    CHECK(v.affine.at(2, 3) == doctest::Approx(-3.0));
}

TEST_CASE("nifti int16 and uint8 payloads load") {
    const std::string path = temp_path("i16.nii");
    write_nifti(path, 2, 2, 2, 0.0f, 0.0f, std::vector<float>(8, 5.0f), 4);
    const Volume v = load_volume(path);
    CHECK(v.data[0] == 5.0f);
    write_nifti(path, 2, 2, 2, 0.0f, 0.0f, std::vector<float>(8, 9.0f), 2);
    CHECK(load_volume(path).data[0] == 9.0f);
}

TEST_CASE("truncated header raises CorruptHeader") {
    const std::string path = temp_path("trunc.nii");
    std::ofstream f(path, std::ios::binary);
    f.write("\x5c\x01\x00\x00 junk", 9);
    f.close();
    try {
        load_volume(path);
        FAIL("expected CorruptHeader");
    } catch (const error& e) {
        CHECK(e.code() == errc::corrupt_header);
    }
}

TEST_CASE("unsupported dtype raises") {
    const std::string path = temp_path("f64.nii");
    write_nifti(path, 2, 2, 2, 0.0f, 0.0f, std::vector<float>(8, 1.0f), 64); // float64 tag
    CHECK_THROWS_AS(load_volume(path), error);
    try {
        load_volume(path);
    } catch (const error& e) {
        CHECK(e.code() == errc::unsupported_dtype);
    }
}

TEST_CASE("transform file round trip and validation") {
    Affine t = Affine::rotation({0, 0, 1}, 0.3) * Affine::translation({1.5, -2.0, 0.25});
    const std::string path = temp_path("transform.txt");
    save_transform(t, path);
    const Affine r = load_transform(path);
    for (int i = 0; i < 16; ++i) CHECK(r.m[static_cast<size_t>(i)] == t.m[static_cast<size_t>(i)]);

    std::ofstream f(path);
    f << "1 0 0 0  0 1 0 0  0 0 1 0  0 0 1 1";
    f.close();
    CHECK_THROWS_AS(load_transform(path), error);
}

TEST_CASE("affine inverse round trips points") {
    const Affine t = Affine::rotation({1, 2, 3}, 0.7) * Affine::scaling({1.2, 0.8, 1.05}) *
                     Affine::translation({4, -5, 6});
    const Affine inv = t.inverse();
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
        const Vec3 q = inv.apply(t.apply(p));
        CHECK((q - p).norm() < 1e-6);
    }
}

TEST_CASE("resample with identity transform is bitwise equal") {
    Volume v = make_volume({6, 5, 4}, {1.5, 1.5, 1.5});
    Rng rng(11);
    for (float& f : v.data) f = static_cast<float>(rng.uniform());
    const Volume r = resample(v, Affine::identity(), v.dims, v.spacing, v.affine);
    CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
}

TEST_CASE("resample shifts by exactly one voxel") {
    Volume v = make_volume({8, 8, 8}, {2, 2, 2});
    Rng rng(13);
    for (float& f : v.data) f = static_cast<float>(rng.uniform());
    // world_to_world maps src world onto out world: shifting content by +1
    // voxel along x means out(i) = src(i-1).
    const Affine shift = Affine::translation({2.0, 0.0, 0.0});
    const Volume r = resample(v, shift, v.dims, v.spacing, v.affine);
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j) {
            CHECK(r.at(0, j, k) == 0.0f); // border fill
            for (int i = 1; i < 8; ++i) CHECK(r.at(i, j, k) == doctest::Approx(v.at(i - 1, j, k)).epsilon(1e-6));
        }
}

TEST_CASE("trilinear resampling reproduces linear ramps at interior points") {
    Volume v = make_volume({16, 16, 16}, {1, 1, 1});
    for (int k = 0; k < 16; ++k)
        for (int j = 0; j < 16; ++j)
            for (int i = 0; i < 16; ++i)
                v.at(i, j, k) = static_cast<float>(0.5 * i - 0.25 * j + 0.125 * k + 1.0);
    const Affine half_shift = Affine::translation({0.5, 0.5, 0.5});
    const Volume r = resample(v, half_shift, v.dims, v.spacing, v.affine);
    for (int k = 2; k < 14; ++k)
        for (int j = 2; j < 14; ++j)
            for (int i = 2; i < 14; ++i) {
                const double expect = 0.5 * (i - 0.5) - 0.25 * (j - 0.5) + 0.125 * (k - 0.5) + 1.0;
                CHECK(std::fabs(r.at(i, j, k) - expect) < 1e-5);
            }
}

TEST_CASE("degenerate resample transform raises") {
    Volume v = make_volume({4, 4, 4}, {1, 1, 1});
    Affine singular;
    singular.at(0, 0) = 0.0;
    singular.at(1, 1) = 0.0;
    CHECK_THROWS_AS(resample(v, singular, v.dims, v.spacing, v.affine), error);
}
