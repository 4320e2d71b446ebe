// Scalar volumes on regular grids: representation, file I/O (minimal NIfTI-1
// reader plus the toolkit's own raw format), trilinear resampling, and
// intensity-based affine registration.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cortifield/geom.hpp"

namespace cf {

struct Volume {
    std::array<int, 3> dims{0, 0, 0};   // nx, ny, nz
    Vec3 spacing{1.0, 1.0, 1.0};        // mm per axis
    Affine affine;                      // voxel index -> world mm
    std::vector<float> data;            // x fastest, length nx*ny*nz

    int64_t size() const { return int64_t(dims[0]) * dims[1] * dims[2]; }
    int64_t index(int i, int j, int k) const {
        return int64_t(i) + int64_t(dims[0]) * (int64_t(j) + int64_t(dims[1]) * k);
    }
    float at(int i, int j, int k) const { return data[static_cast<size_t>(index(i, j, k))]; }
    float& at(int i, int j, int k) { return data[static_cast<size_t>(index(i, j, k))]; }
    Vec3 voxel_center(int i, int j, int k) const {
        return affine.apply({double(i), double(j), double(k)});
    }

    // Continuous voxel coordinates -> trilinear sample; 0 outside the grid.
    float sample_trilinear(const Vec3& voxel_coords) const;

    // Throws invalid_argument when an invariant fails (dims/spacing/affine/data length).
    void validate() const;
};

// Creates an empty (zero-filled) volume with a diagonal affine built from spacing
// and the given world origin of voxel (0,0,0).
Volume make_volume(std::array<int, 3> dims, Vec3 spacing, Vec3 origin = {0, 0, 0});

// Bounded box all template-space computation happens in.
struct TemplateSpace {
    Vec3 bbox_min{-96.0, -96.0, -96.0};
    Vec3 bbox_max{96.0, 96.0, 96.0};
    std::string name = "desk";

    Box3 box() const { return Box3{bbox_min, bbox_max}; }
};

// --- file I/O -------------------------------------------------------------

// Reads NIfTI-1 (.nii) or the raw CFVOL1 format, dispatching on content.
Volume load_volume(const std::string& path);

// CFVOL1: text header line then little-endian float32 payload.
void save_raw(const Volume& v, const std::string& path);

// 16 whitespace-separated decimals, row-major.
Affine load_transform(const std::string& path);
void save_transform(const Affine& t, const std::string& path);

// --- resampling -----------------------------------------------------------

// Fills the output grid by pulling trilinear samples from src. world_to_world
// maps src world coordinates onto output world coordinates; out-of-bounds
// samples are 0.
Volume resample(const Volume& src, const Affine& world_to_world, std::array<int, 3> out_dims,
                Vec3 out_spacing, const Affine& out_affine);

// Resamples a volume onto the n^3 grid spanning a template box (grid points
// include the box corners), given the native->template transform.
Volume resample_to_template(const Volume& native, const Affine& native_to_template,
                            const TemplateSpace& omega, int n);

// --- registration ----------------------------------------------------------

struct RegistrationConfig {
    int pyramid_levels = 3;
    int max_iterations = 60;       // Levenberg-Marquardt iterations per level
    double tolerance = 1e-8;       // relative MSE improvement stop
    int64_t max_samples = 40000;   // fixed-volume voxels sampled per level
    uint64_t seed = 0;
    double support_threshold = 1e-6; // |intensity| above this counts as support
};

struct RegistrationResult {
    Affine moving_to_fixed;  // world -> world
    double mse = 0.0;
    bool converged = false;  // false = best-so-far after hitting max_iterations
    int iterations = 0;
};

// 12-DOF affine by multi-resolution least squares on intensity, initialized
// from the centers of mass and second moments. Deterministic given cfg.seed.
// Throws no_overlap when the initialized transform leaves no joint support.
RegistrationResult register_affine(const Volume& moving, const Volume& fixed,
                                   const RegistrationConfig& cfg = {});

} // namespace cf
