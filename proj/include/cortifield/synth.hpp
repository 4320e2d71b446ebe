// Deterministic generator of desk-scale cases: paired scalar volumes and
// ground-truth surface sets with brain-like layout (two hemispheres, inner and
// outer boundary each, smooth spherical-harmonic folding).
#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cortifield/geom.hpp"
#include "cortifield/mesh.hpp"
#include "cortifield/volume.hpp"

namespace cf {

struct SynthParams {
    uint64_t seed = 0;
    Vec3 semi_axes{28.0, 38.0, 34.0};  // per-hemisphere ellipsoid, mm
    double fold_amplitude_mm = 6.0;    // peak radial displacement
    int fold_max_degree = 6;           // spherical-harmonic band limit
    int subdivisions = 4;              // icosphere resolution
    double inner_offset_mm = 3.0;
    double hemisphere_gap_mm = 4.0;
    double intensity_background = 0.0;
    double intensity_csf = 0.2;
    double intensity_gm = 0.6;
    double intensity_wm = 1.0;
    double noise_sigma = 0.01;
    std::array<int, 3> dims{64, 64, 64};
    Vec3 spacing{3.0, 3.0, 3.0};
    // Random native-space perturbation (the returned transform undoes it);
    // zero ranges give the identity.
    double transform_translation_mm = 5.0;
    double transform_rotation_deg = 5.0;
    double transform_scale_lo = 0.95;
    double transform_scale_hi = 1.05;

    void validate() const;
};

struct SynthCase {
    Volume volume;             // native space
    SurfaceSet surfaces;       // template space
    Affine native_to_template; // registration ground truth
    SynthParams params;
};

// Deterministic per seed. Throws self_intersecting_inner when the inner offset
// violates the inner/outer probe ordering.
SynthCase synth_case(const SynthParams& params);

// Writes volume.cfvol, transform.txt, the four {hemi}_{boundary}.obj meshes,
// and params.json into dir (which must exist).
void synth_write_case(const SynthCase& c, const std::string& dir);

SynthParams synth_params_from_json_file(const std::string& path);

} // namespace cf
