// Inference side: dense grid evaluation of a trained field, digital topology
// correction to genus zero, marching cubes extraction, and the native-space
// mapping of the resulting meshes.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cortifield/mesh.hpp"
#include "cortifield/nn.hpp"
#include "cortifield/volume.hpp"

namespace cf {

struct GridSpec {
    int resolution = 128; // production scale: 512
    TemplateSpace omega;

    Vec3 spacing() const {
        const Vec3 ext = omega.bbox_max - omega.bbox_min;
        return ext / double(resolution - 1);
    }
    void validate() const;
};

struct ImplicitVolume {
    Volume grid;            // field values on the evaluation grid
    float level = 0.0f;     // 0.5 for occupancy, 0.0 for sdf
    Representation repr = Representation::sdf;
};

// Encode once, then decode every grid point in fixed-size chunks. Bit-exact
// for any chunking/job count. Occupancy models emit probabilities.
template <typename T>
std::array<ImplicitVolume, 4> evaluate_grid(FieldModel<T>& model, const Volume& template_volume,
                                            const GridSpec& grid);

// --- digital topology (6-connected foreground, 26-connected background) -------

struct VoxelSet {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<uint8_t> in; // 1 = foreground

    int64_t size() const { return int64_t(dims[0]) * dims[1] * dims[2]; }
    bool at(int i, int j, int k) const {
        if (i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2]) return false;
        return in[static_cast<size_t>(int64_t(i) + int64_t(dims[0]) * (int64_t(j) + int64_t(dims[1]) * k))] != 0;
    }
};

// Is adding the center voxel topology-preserving for the (6,26) pair?
// `neighborhood` holds the 27 occupancy flags of the 3x3x3 block in
// (dz*9 + dy*3 + dx) order with offsets in {0,1,2}; the center entry is ignored.
bool simple_point_6_26(const uint8_t neighborhood[27]);

struct DigitalTopology {
    int components_6 = 0;  // 6-connected foreground components
    int cavities_26 = 0;   // 26-connected background components not touching the border
    int64_t euler = 0;     // chi of the cubical complex (V - E + F - C)
    // For one component without cavities, handles = 1 - chi.
    int64_t handles() const { return components_6 - euler + cavities_26; }
};

DigitalTopology digital_topology(const VoxelSet& set);

// --- topology correction -------------------------------------------------------

// Greedy growth from the deepest above-level voxel, admitting simple points in
// decreasing field-value order. Admitted voxels keep their value; everything
// else above level is clamped to level - delta (delta = 1e-4 * value range).
// Output's above-level set is one 6-connected component of digital genus 0.
ImplicitVolume topology_correct(const ImplicitVolume& iv);

// --- marching cubes --------------------------------------------------------------

// Face-diagonal disambiguation rule. `asymptotic` follows the bilinear saddle;
// `separate` never joins diagonal positives, matching the (6,26) digital
// topology the correction step guarantees, so chi = 2 is provable after it.
enum class McFaceRule { asymptotic, separate };

// Closed, consistently oriented 2-manifold of the level set; vertices by
// linear interpolation along crossing edges (corner values equal to the level
// are nudged by +delta). Outward normals point toward lower field values.
TriangleMesh marching_cubes(const ImplicitVolume& iv, McFaceRule rule = McFaceRule::asymptotic);

// --- full pipeline ----------------------------------------------------------------

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct ReconstructionResult {
    SurfaceSet native;            // surfaces mapped back through the inverse transform
    SurfaceSet template_space;
    std::vector<StageTiming> timings;
    RegistrationResult registration; // identity when a transform was supplied
};

template <typename T>
struct ReconstructOptions {
    GridSpec grid;
    const Affine* native_to_template = nullptr; // bypasses registration when set
    const Volume* reference = nullptr;          // template-space volume to register against
    RegistrationConfig registration;
    McFaceRule face_rule = McFaceRule::separate; // post-correction extraction
};

// register (or accept) -> resample -> evaluate -> per-surface topology
// correction (concurrent) -> marching cubes -> inverse map to native space.
template <typename T>
ReconstructionResult reconstruct_all(FieldModel<T>& model, const Volume& native_volume,
                                     const ReconstructOptions<T>& opts);

} // namespace cf
