// Entropic optimal transport between equal-weight point clouds. Matrix-domain
// Sinkhorn with underflow guards; double precision keeps exp(-cost/eps) alive
// for epsilon down to ~1% of the cloud diameter.
#include <cmath>
#include <vector>

#include "cortifield/errors.hpp"
#include "cortifield/metrics.hpp"
#include "cortifield/parallel.hpp"

namespace cf {

double sinkhorn_emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double epsilon, int iterations) {
    require(!a.empty() && !b.empty(), errc::invalid_argument, "sinkhorn needs nonempty clouds");
    require(epsilon > 0.0 && iterations > 0, errc::invalid_argument, "bad sinkhorn parameters");
    const size_t n = a.size(), m = b.size();
    std::vector<double> cost(n * m), kernel(n * m);
    parallel_ranges(static_cast<int64_t>(n), 64, [&](int64_t lo, int64_t hi, int64_t) {
        for (int64_t i = lo; i < hi; ++i)
            for (size_t j = 0; j < m; ++j) {
                const double c = (a[static_cast<size_t>(i)] - b[j]).norm();
                cost[static_cast<size_t>(i) * m + j] = c;
                kernel[static_cast<size_t>(i) * m + j] = std::exp(-c / epsilon);
            }
    });

    const double wa = 1.0 / double(n), wb = 1.0 / double(m);
    std::vector<double> u(n, 1.0), v(m, 1.0);
    constexpr double kFloor = 1e-300;
    for (int it = 0; it < iterations; ++it) {
        parallel_ranges(static_cast<int64_t>(n), 64, [&](int64_t lo, int64_t hi, int64_t) {
            for (int64_t i = lo; i < hi; ++i) {
                const double* krow = kernel.data() + static_cast<size_t>(i) * m;
                double acc = 0.0;
                for (size_t j = 0; j < m; ++j) acc += krow[j] * v[j];
                u[static_cast<size_t>(i)] = wa / std::max(acc, kFloor);
            }
        });
        parallel_ranges(static_cast<int64_t>(m), 64, [&](int64_t lo, int64_t hi, int64_t) {
            for (int64_t j = lo; j < hi; ++j) {
                double acc = 0.0;
                for (size_t i = 0; i < n; ++i) acc += kernel[i * m + static_cast<size_t>(j)] * u[i];
                v[static_cast<size_t>(j)] = wb / std::max(acc, kFloor);
            }
        });
    }

    // Transport cost <pi, C> with pi_ij = u_i K_ij v_j.
    std::vector<double> partial((n + 63) / 64, 0.0);
    parallel_ranges(static_cast<int64_t>(n), 64, [&](int64_t lo, int64_t hi, int64_t chunk) {
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) {
            const size_t base = static_cast<size_t>(i) * m;
            for (size_t j = 0; j < m; ++j) acc += u[static_cast<size_t>(i)] * kernel[base + j] * v[j] * cost[base + j];
        }
        partial[static_cast<size_t>(chunk)] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace cf
