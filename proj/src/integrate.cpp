#include "knntest/integrate.hpp"

#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>

#include "knntest/error.hpp"

namespace knntest {

namespace {

struct Nested {
    const Integrand& f;
    const QuadratureRegion& region;
    const IntegratorConfig& config;
    std::size_t dim;
    std::vector<double> x;
    double outer_error = 0.0;

    double integrate_axis(std::size_t axis) {
        double error = 0.0;
        double value = 0.0;
        auto inner = [&](double t) {
            x[axis] = t;
            return axis + 1 == dim ? f(x) : integrate_axis(axis + 1);
        };
        if (region.support.kind == Support::Kind::AllSpace) {
            const double c = region.center[axis];
            const double s = region.scale;
            boost::math::quadrature::sinh_sinh<double> rule(12);
            value = s * rule.integrate([&](double u) { return inner(c + s * u); }, config.quadrature_tolerance, &error);
            error *= s;
        } else {
            value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                inner, region.support.lo[axis], region.support.hi[axis], 12, config.quadrature_tolerance, &error);
        }
        if (axis == 0) outer_error = error;
        return value;
    }
};

}  // namespace

Estimate integrate_quadrature(const Integrand& f, std::size_t dim, const QuadratureRegion& region,
                              const IntegratorConfig& config) {
    if (dim == 0) throw ValidationError("integration dimension must be positive");
    if (region.support.kind == Support::Kind::AllSpace && region.center.size() != dim) {
        throw ValidationError("quadrature center has wrong dimension");
    }
    if (region.support.kind == Support::Kind::Box && region.support.lo.size() != dim) {
        throw ValidationError("quadrature box has wrong dimension");
    }
    Nested nested{f, region, config, dim, std::vector<double>(dim, 0.0)};
    const double value = nested.integrate_axis(0);
    Estimate e{value, nested.outer_error, "quadrature"};
    if (!std::isfinite(value)) throw ToleranceError("quadrature produced a non-finite value", value, e.std_error);
    const double allowed = 1e-6 * std::max(std::abs(value), 1.0);
    if (!(e.std_error <= allowed)) {
        throw ToleranceError("quadrature error estimate " + std::to_string(e.std_error) + " exceeds tolerance",
                             value, e.std_error);
    }
    return e;
}

Estimate monte_carlo_mean(const std::function<void(Rng&, std::span<double>)>& draw,
                          const std::function<double(std::span<const double>)>& weight, std::size_t dim,
                          const IntegratorConfig& config) {
    if (config.mc_samples < 2) throw ValidationError("Monte-Carlo integration needs at least 2 samples");
    Rng rng = make_stream(config.seed, {0x6d63ULL});
    std::vector<double> x(dim);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < config.mc_samples; ++i) {
        draw(rng, x);
        const double w = weight(x);
        if (!std::isfinite(w)) {
            throw ToleranceError("Monte-Carlo integrand is not finite at a sampled point", mean, 0.0);
        }
        const double delta = w - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (w - mean);
    }
    const double n = static_cast<double>(config.mc_samples);
    return {mean, std::sqrt(m2 / (n - 1.0) / n), "monte-carlo"};
}

void check_tolerance(const Estimate& e, const IntegratorConfig& config, const std::string& what) {
    const double scale = std::max(std::abs(e.value), config.absolute_floor);
    if (e.std_error > config.max_relative_error * scale) {
        throw ToleranceError(what + ": standard error " + std::to_string(e.std_error) + " too large for estimate " +
                                 std::to_string(e.value),
                             e.value, e.std_error);
    }
}

}  // namespace knntest
