// Surface and segmentation comparison: bidirectional sampled distances (AD,
// HD90, threshold exceedance), entropic-OT earth mover's distance, rigid ICP,
// cortical-ribbon segmentation construction, Dice and volume similarity.
#pragma once

#include <cstdint>

#include "cortifield/mesh.hpp"
#include "cortifield/volume.hpp"

namespace cf {

struct SurfaceDiscrepancy {
    double ad_mm = 0.0;        // mean of pooled bidirectional distances
    double hd90_mm = 0.0;      // nearest-rank 90th percentile, pooled
    double median_mm = 0.0;
    double pct_over_1mm = 0.0; // in percent
    double pct_over_2mm = 0.0;
    double emd = 0.0;          // entropic-OT transport cost on subsamples
    int64_t sample_count = 0;  // per direction
};

struct DiscrepancyConfig {
    int64_t samples = 100000;
    int emd_subsample = 2048;
    int sinkhorn_iterations = 500;
    double sinkhorn_epsilon_scale = 0.01; // of the joint bbox diagonal
    uint64_t seed = 0;
    bool compute_emd = true;
};

// Samples n points on each mesh and measures them against the opposite full
// mesh (never the opposite sample). Throws empty_mesh.
SurfaceDiscrepancy surface_discrepancy(const TriangleMesh& a, const TriangleMesh& b,
                                       const DiscrepancyConfig& cfg = {});

// Entropic optimal transport cost <pi, C> between two equal-weight point
// clouds (Euclidean ground cost), via Sinkhorn iterations in double.
double sinkhorn_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double epsilon,
                    int iterations);

struct IcpConfig {
    int max_iterations = 100;
    double tolerance = 1e-6; // relative RMS improvement
    int64_t samples = 5000;
    uint64_t seed = 0;
};

struct IcpResult {
    Affine transform; // source -> target, rigid
    double rms = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Alternates closest-point correspondences on sampled source points with a
// Horn quaternion rigid fit. Returns the best transform seen.
IcpResult icp_rigid(const TriangleMesh& source, const TriangleMesh& target, const IcpConfig& cfg = {});

// Binary-volume overlap scores; both are 1 when both volumes are empty.
double dice(const Volume& a, const Volume& b);
double volume_similarity(const Volume& a, const Volume& b);

// Voxelize the four surfaces at 1 mm^3, resample to the native grid (nearest
// neighbor at threshold 0.5), subtract the inner union from the outer union,
// then one 6-connected morphological opening and one dilation.
Volume ribbon_segmentation(const SurfaceSet& surfaces, std::array<int, 3> native_dims, Vec3 native_spacing,
                           const Affine& native_affine);

// 6-connected binary morphology helpers (exposed for tests).
Volume binary_erode6(const Volume& v);
Volume binary_dilate6(const Volume& v);

} // namespace cf
