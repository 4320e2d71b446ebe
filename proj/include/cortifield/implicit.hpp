// Ground-truth implicit representations of a SurfaceSet (occupancy bits and
// signed distances, positive inside) and the surface-biased training pool.
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cortifield/mesh.hpp"
#include "cortifield/volume.hpp"

namespace cf {

enum class Representation : uint8_t { occ = 0, sdf = 1 };

const char* representation_name(Representation r);
Representation representation_from_name(const std::string& name);

enum class SampleSource : uint8_t { uniform = 0, near_surface = 1 };

// Prebuilt BVHs over the four surfaces; queries are read-only and concurrent.
class SurfaceSetIndex {
public:
    explicit SurfaceSetIndex(const SurfaceSet& surfaces);

    const SurfaceSet& surfaces() const { return *surfaces_; }
    const Bvh& bvh(int channel) const { return *bvhs_[static_cast<size_t>(channel)]; }

    // Per-surface inside indicator (Eq. of the occupancy field; level 1/2).
    std::array<float, 4> occupancy_targets(const Vec3& p) const;
    // Per-surface (2*occ - 1) * |p - proj(p)| in mm.
    std::array<float, 4> sdf_targets(const Vec3& p) const;
    std::array<float, 4> targets(const Vec3& p, Representation repr) const;

private:
    const SurfaceSet* surfaces_;
    std::array<std::unique_ptr<Bvh>, 4> bvhs_;
};

struct SamplingConfig {
    int64_t pool_size = 200000;          // production scale: 4,000,000
    double uniform_fraction = 0.10;
    double perturbation_sigma_mm = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

struct SamplePool {
    std::vector<Vec3> points;                      // template mm, inside omega
    std::vector<std::array<float, 4>> targets;     // one value per surface channel
    std::vector<SampleSource> source;
    Representation representation = Representation::sdf;
    double uniform_fraction = 0.10;
    double sigma_mm = 1.0;
    uint64_t seed = 0;

    int64_t size() const { return static_cast<int64_t>(points.size()); }
};

// ceil((1-uf)*n) near-surface points (surface samples in equal shares over the
// four surfaces, plus isotropic Gaussian offsets, clamped to omega) and
// floor(uf*n) uniform points. Deterministic per seed and independent of the
// worker count.
SamplePool build_pool(const SurfaceSetIndex& index, const TemplateSpace& omega, Representation repr,
                      const SamplingConfig& cfg);

// CFPOOL1 file format: text header then fixed 29-byte little-endian records.
void save_pool(const SamplePool& pool, const std::string& path);
SamplePool load_pool(const std::string& path);

} // namespace cf
