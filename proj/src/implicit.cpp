#include "cortifield/implicit.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cortifield/errors.hpp"
#include "cortifield/parallel.hpp"

namespace cf {

const char* representation_name(Representation r) { return r == Representation::occ ? "occ" : "sdf"; }

Representation representation_from_name(const std::string& name) {
    if (name == "occ") return Representation::occ;
    if (name == "sdf") return Representation::sdf;
    raise(errc::invalid_argument, "unknown representation '" + name + "' (expected occ or sdf)");
}

SurfaceSetIndex::SurfaceSetIndex(const SurfaceSet& surfaces) : surfaces_(&surfaces) {
    for (int i = 0; i < 4; ++i) {
        const TriangleMesh& m = surfaces.meshes[static_cast<size_t>(i)];
        require(!m.empty(), errc::empty_mesh,
                std::string("surface '") + SurfaceSet::channel_name(i) + "' is empty");
        bvhs_[static_cast<size_t>(i)] = std::make_unique<Bvh>(m);
    }
}

std::array<float, 4> SurfaceSetIndex::occupancy_targets(const Vec3& p) const {
    std::array<float, 4> t{};
    for (int i = 0; i < 4; ++i) t[static_cast<size_t>(i)] = bvhs_[static_cast<size_t>(i)]->is_inside(p) ? 1.0f : 0.0f;
    return t;
}

std::array<float, 4> SurfaceSetIndex::sdf_targets(const Vec3& p) const {
    std::array<float, 4> t{};
    for (int i = 0; i < 4; ++i) {
        const Bvh& b = *bvhs_[static_cast<size_t>(i)];
        const double d = b.closest_point(p).distance;
        t[static_cast<size_t>(i)] = static_cast<float>(b.is_inside(p) ? d : -d);
    }
    return t;
}

std::array<float, 4> SurfaceSetIndex::targets(const Vec3& p, Representation repr) const {
    return repr == Representation::occ ? occupancy_targets(p) : sdf_targets(p);
}

void SamplingConfig::validate() const {
    require(pool_size > 0, errc::invalid_argument, "pool_size must be positive");
    require(uniform_fraction >= 0.0 && uniform_fraction <= 1.0, errc::invalid_argument,
            "uniform_fraction must be in [0, 1]");
    require(perturbation_sigma_mm > 0.0, errc::invalid_argument, "perturbation sigma must be positive");
}

SamplePool build_pool(const SurfaceSetIndex& index, const TemplateSpace& omega, Representation repr,
                      const SamplingConfig& cfg) {
    cfg.validate();
    const int64_t n = cfg.pool_size;
    const int64_t n_uniform = static_cast<int64_t>(std::floor(cfg.uniform_fraction * double(n)));
    const int64_t n_near = n - n_uniform;
    const Box3 box = omega.box();

    SamplePool pool;
    pool.representation = repr;
    pool.uniform_fraction = cfg.uniform_fraction;
    pool.sigma_mm = cfg.perturbation_sigma_mm;
    pool.seed = cfg.seed;
    pool.points.resize(static_cast<size_t>(n));
    pool.targets.resize(static_cast<size_t>(n));
    pool.source.resize(static_cast<size_t>(n));

    const Rng root(cfg.seed);

    // Near-surface points: equal shares over the four surfaces (channels with
    // lower index absorb the remainder). Point generation is single-stream.
    {
        int64_t cursor = 0;
        for (int ch = 0; ch < 4; ++ch) {
            const int64_t share = n_near / 4 + (ch < n_near % 4 ? 1 : 0);
            if (share == 0) continue;
            Rng rng = root.fork(static_cast<uint64_t>(ch));
            std::vector<Vec3> base =
                sample_on_surface(index.surfaces().meshes[static_cast<size_t>(ch)], share, rng);
            for (int64_t i = 0; i < share; ++i) {
                const Vec3 offset{rng.normal(0.0, cfg.perturbation_sigma_mm),
                                  rng.normal(0.0, cfg.perturbation_sigma_mm),
                                  rng.normal(0.0, cfg.perturbation_sigma_mm)};
                const size_t slot = static_cast<size_t>(cursor + i);
                pool.points[slot] = box.clamp(base[static_cast<size_t>(i)] + offset);
                pool.source[slot] = SampleSource::near_surface;
            }
            cursor += share;
        }
        Rng rng = root.fork(4);
        for (int64_t i = 0; i < n_uniform; ++i) {
            const size_t slot = static_cast<size_t>(n_near + i);
            pool.points[slot] = {rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                                 rng.uniform(box.lo.z, box.hi.z)};
            pool.source[slot] = SampleSource::uniform;
        }
    }

    // Target evaluation is the expensive part; chunks are fixed-size so the
    // result does not depend on the worker count.
    parallel_ranges(n, 4096, [&](int64_t begin, int64_t end, int64_t) {
        for (int64_t i = begin; i < end; ++i)
            pool.targets[static_cast<size_t>(i)] = index.targets(pool.points[static_cast<size_t>(i)], repr);
    });
    return pool;
}

void save_pool(const SamplePool& pool, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open for writing: " + path);
    char head[256];
    const int n = std::snprintf(head, sizeof(head), "CFPOOL1 %lld %s %.17g %.17g %llu\n",
                                static_cast<long long>(pool.size()), representation_name(pool.representation),
                                pool.uniform_fraction, pool.sigma_mm,
                                static_cast<unsigned long long>(pool.seed));
    f.write(head, n);
    std::vector<unsigned char> rec(29);
    for (int64_t i = 0; i < pool.size(); ++i) {
        const size_t s = static_cast<size_t>(i);
        const float p[3] = {static_cast<float>(pool.points[s].x), static_cast<float>(pool.points[s].y),
                            static_cast<float>(pool.points[s].z)};
        std::memcpy(rec.data(), p, 12);
        std::memcpy(rec.data() + 12, pool.targets[s].data(), 16);
        rec[28] = static_cast<unsigned char>(pool.source[s]);
        f.write(reinterpret_cast<const char*>(rec.data()), 29);
    }
    require(f.good(), errc::io_error, "write failed: " + path);
}

SamplePool load_pool(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), errc::io_error, "cannot open: " + path);
    std::string line;
    std::getline(f, line);
    std::istringstream ss(line);
    std::string magic, repr;
    long long n = 0;
    unsigned long long seed = 0;
    SamplePool pool;
    require(static_cast<bool>(ss >> magic >> n >> repr >> pool.uniform_fraction >> pool.sigma_mm >> seed) &&
                magic == "CFPOOL1" && n >= 0,
            errc::corrupt_header, "bad CFPOOL1 header: " + path);
    pool.representation = representation_from_name(repr);
    pool.seed = seed;
    pool.points.resize(static_cast<size_t>(n));
    pool.targets.resize(static_cast<size_t>(n));
    pool.source.resize(static_cast<size_t>(n));
    std::vector<unsigned char> rec(29);
    for (long long i = 0; i < n; ++i) {
        f.read(reinterpret_cast<char*>(rec.data()), 29);
        require(f.gcount() == 29, errc::corrupt_header, "truncated CFPOOL1 payload: " + path);
        float p[3];
        std::memcpy(p, rec.data(), 12);
        const size_t s = static_cast<size_t>(i);
        pool.points[s] = {p[0], p[1], p[2]};
        std::memcpy(pool.targets[s].data(), rec.data() + 12, 16);
        require(rec[28] <= 1, errc::corrupt_header, "bad sample source tag: " + path);
        pool.source[s] = static_cast<SampleSource>(rec[28]);
    }
    return pool;
}

} // namespace cf
