#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "knntest/family.hpp"

namespace knntest {

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;  // MC standard error, or the quadrature error estimate
    std::string method;      // "quadrature", "monte-carlo", "closed-form"
};

struct IntegratorConfig {
    std::size_t mc_samples = 1'000'000;
    std::uint64_t seed = 0x5eed;
    std::size_t max_quadrature_dim = 3;  // nested adaptive quadrature up to this dimension
    double quadrature_tolerance = 1e-11;
    // Monte-Carlo results whose standard error exceeds this fraction of
    // max(|value|, absolute_floor) raise ToleranceError.
    double max_relative_error = 0.05;
    double absolute_floor = 1e-12;
};

using Integrand = std::function<double(std::span<const double>)>;

// Region for nested quadrature: all of R^d (nodes placed around center with
// the given scale) or a box.
struct QuadratureRegion {
    Support support;
    std::vector<double> center;
    double scale = 1.0;
};

// Nested one-dimensional adaptive quadrature (double-exponential rules for
// infinite ranges, Gauss-Kronrod on finite ones).
Estimate integrate_quadrature(const Integrand& f, std::size_t dim, const QuadratureRegion& region,
                              const IntegratorConfig& config);

// Plain importance-sampling mean of weight(X), X drawn by `draw`, with a
// streamed (Welford) variance.
Estimate monte_carlo_mean(const std::function<void(Rng&, std::span<double>)>& draw,
                          const std::function<double(std::span<const double>)>& weight, std::size_t dim,
                          const IntegratorConfig& config);

// Throws ToleranceError when a Monte-Carlo estimate is too noisy.
void check_tolerance(const Estimate& e, const IntegratorConfig& config, const std::string& what);

}  // namespace knntest
