// Independent oracles for the test suites. Everything here is deliberately
// brute force and kept apart from the implementation paths it checks.
#pragma once

#include <functional>
#include <vector>

#include "cortifield/geom.hpp"
#include "cortifield/mesh.hpp"
#include "cortifield/nn.hpp"

namespace cf::testing {

// Exhaustive all-triangle closest point scan (same tie rule: lowest index).
struct BruteClosest {
    Vec3 point;
    double distance;
    int face;
};
BruteClosest brute_force_closest(const TriangleMesh& mesh, const Vec3& p);

// Generalized winding number (sum of signed solid angles / 4 pi).
double winding_number(const TriangleMesh& mesh, const Vec3& p);
bool winding_inside(const TriangleMesh& mesh, const Vec3& p);

// Exact assignment-problem optimal transport between equal-size clouds with
// Euclidean costs (O(n^3) Hungarian), as the small-n EMD reference.
double exact_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Central finite difference of a scalar function with respect to x.
double central_difference(std::function<double()> eval, double& x, double h);

// Relative gradient error, guarded near zero: |a-f| / max(1, |a|, |f|).
double grad_rel_err(double analytic, double fd);

// Triangulated torus (major radius R, minor r) for genus tests.
TriangleMesh make_torus(double major, double minor, int segments_major, int segments_minor);

// A closed box mesh [lo, hi] with outward orientation.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

// Smooth random scalar field (sum of seeded Gaussian bumps) on an n^3 grid
// over [-1,1]^3, roughly zero-mean: a generic topology-correction workload.
Volume random_blob_field(int n, uint64_t seed, int bumps = 24);

// Sphere signed distance field (positive inside) on an n^3 grid spanning
// [-half, half]^3.
Volume sphere_sdf_volume(int n, double half, double radius, const Vec3& center = {0, 0, 0});

// Solid torus "inside-ness" field on an n^3 grid spanning [-half, half]^3.
Volume torus_field_volume(int n, double half, double major, double minor);

} // namespace cf::testing
