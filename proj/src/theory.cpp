#include "knntest/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "knntest/error.hpp"
#include "knntest/statistic.hpp"

namespace knntest {

namespace {

void check_proportion(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("proportion p must lie in (0, 1)");
}

void check_pair(const Density& f, const Density& g) {
    if (f.dim() != g.dim()) throw ValidationError("f and g must share the dimension");
}

// f/phi and g/phi at x, with phi = p f + q g, computed from log-densities.
struct MixtureRatios {
    double u = 0.0, v = 0.0, log_phi = -std::numeric_limits<double>::infinity();
};

MixtureRatios mixture_ratios(const Density& f, const Density& g, double p, std::span<const double> x) {
    const double lf = f.log_density(x);
    const double lg = g.log_density(x);
    const double q = 1.0 - p;
    MixtureRatios r;
    const double top = std::max(lf, lg);
    if (top == -std::numeric_limits<double>::infinity()) return r;
    r.log_phi = top + std::log(p * std::exp(lf - top) + q * std::exp(lg - top));
    r.u = std::exp(lf - r.log_phi);
    r.v = std::exp(lg - r.log_phi);
    return r;
}

QuadratureRegion region_for(const Density& f, const Density& g, double p) {
    const Support sf = f.support(), sg = g.support();
    QuadratureRegion region;
    if (sf.compact() && sg.compact()) {
        std::vector<double> lo(f.dim()), hi(f.dim());
        for (std::size_t j = 0; j < f.dim(); ++j) {
            lo[j] = std::min(sf.lo[j], sg.lo[j]);
            hi[j] = std::max(sf.hi[j], sg.hi[j]);
        }
        region.support = Support::box(std::move(lo), std::move(hi));
        return region;
    }
    const auto cf = f.location_hint(), cg = g.location_hint();
    region.center.resize(f.dim());
    for (std::size_t j = 0; j < f.dim(); ++j) region.center[j] = p * cf[j] + (1.0 - p) * cg[j];
    region.scale = std::max(f.scale_hint(), g.scale_hint());
    return region;
}

// integral of phi(x) * ratio(f/phi, g/phi) dx.
template <typename Ratio>
Estimate mixture_integral(const Density& f, const Density& g, double p, const IntegratorConfig& config,
                          const std::string& what, Ratio ratio) {
    check_pair(f, g);
    check_proportion(p);
    const std::size_t dim = f.dim();
    if (dim <= config.max_quadrature_dim) {
        auto integrand = [&](std::span<const double> x) {
            const auto r = mixture_ratios(f, g, p, x);
            if (r.log_phi == -std::numeric_limits<double>::infinity()) return 0.0;
            return std::exp(r.log_phi) * ratio(r.u, r.v);
        };
        return integrate_quadrature(integrand, dim, region_for(f, g, p), config);
    }
    std::bernoulli_distribution pick_f(p);
    auto draw = [&](Rng& rng, std::span<double> x) {
        if (pick_f(rng)) {
            f.sample(rng, x);
        } else {
            g.sample(rng, x);
        }
    };
    auto weight = [&](std::span<const double> x) {
        const auto r = mixture_ratios(f, g, p, x);
        return ratio(r.u, r.v);
    };
    Estimate e = monte_carlo_mean(draw, weight, dim, config);
    check_tolerance(e, config, what);
    return e;
}

void check_direction(const FamilyModel& family, const Params& theta1, const std::vector<double>& h) {
    family.validate(theta1);
    if (h.size() != family.param_dim()) throw ValidationError("direction h has the wrong length");
    if (std::all_of(h.begin(), h.end(), [](double v) { return v == 0.0; })) {
        throw ValidationError("direction h must be non-zero");
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// h . grad_theta (tr(H_x p) / p) at x, closed form when the family has one.
double hessian_ratio_directional(const FamilyModel& family, std::span<const double> x, const Params& theta,
                                 const std::vector<double>& h) {
    if (auto g = family.hessian_ratio_gradient(x, theta)) return dot(*g, h);
    auto ratio = [&](const Params& t) { return family.spatial_hessian_trace(x, t) / family.density(x, t); };
    Params t = theta;
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (h[i] == 0.0) continue;
        const double step = 1e-4 * (1.0 + std::abs(theta[i]));
        t[i] = theta[i] + step;
        const double up = ratio(t);
        t[i] = theta[i] - step;
        const double down = ratio(t);
        t[i] = theta[i];
        s += h[i] * (up - down) / (2.0 * step);
    }
    return s;
}

}  // namespace

Estimate hp_dissimilarity(const Density& f, const Density& g, double p, const IntegratorConfig& config) {
    const double pq = p * (1.0 - p);
    return mixture_integral(f, g, p, config, "HP dissimilarity", [pq](double u, double v) { return pq * u * v; });
}

Estimate asymptotic_variance_general(const Density& f, const Density& g, double p, const IntegratorConfig& config) {
    const double q = 1.0 - p;
    return mixture_integral(f, g, p, config, "unconditional variance", [p, q](double u, double v) {
        const double diff = p * u - q * v;
        return p * q * u * v * diff * diff + p * p * q * q * u * u * v * v;
    });
}

Estimate asymptotic_variance_conditional(const Density& f, const Density& g, double p,
                                         const IntegratorConfig& config) {
    const double q = 1.0 - p;
    return mixture_integral(f, g, p, config, "conditional variance", [p, q](double u, double v) {
        const double diff = p * u - q * v;
        return p * q * u * v * diff * diff;
    });
}

VarianceReport variance_report(const Density& f, const Density& g, double p, const IntegratorConfig& config) {
    VarianceReport r;
    r.sigma_sq = asymptotic_variance_general(f, g, p, config).value;
    r.sigma_cond_sq = asymptotic_variance_conditional(f, g, p, config).value;
    r.sigma0_sq = null_variance_sigma0(p);
    return r;
}

double unit_ball_volume(std::size_t dim) {
    if (dim == 0) throw ValidationError("dimension must be positive");
    const double half = 0.5 * static_cast<double>(dim);
    return std::exp(half * std::log(std::numbers::pi) - std::lgamma(half + 1.0));
}

Estimate coeff_a(const FamilyModel& family, const Params& theta1, const std::vector<double>& h, double p,
                 const IntegratorConfig& config) {
    check_proportion(p);
    check_direction(family, theta1, h);
    const double q = 1.0 - p;
    const double r = 2.0 * p * q;
    const double factor = r * r / (2.0 * std::sqrt(null_variance_sigma0(p)));

    Estimate e;
    if (auto exact = family.expected_squared_score(theta1, h)) {
        e = {*exact, 0.0, "closed-form"};
    } else {
        auto draw = [&](Rng& rng, std::span<double> x) { family.sample(theta1, rng, x); };
        auto weight = [&](std::span<const double> x) {
            const double s = dot(family.score(x, theta1), h) / family.density(x, theta1);
            return s * s;
        };
        e = monte_carlo_mean(draw, weight, family.dim(), config);
        check_tolerance(e, config, "coefficient a");
    }
    if (!(e.value > 0.0)) {
        throw ValidationError("E[(h . score / p)^2] is not positive; the direction carries no information");
    }
    return {factor * e.value, factor * e.std_error, e.method};
}

Estimate coeff_b(const FamilyModel& family, const Params& theta1, const std::vector<double>& h, double p,
                 const IntegratorConfig& config) {
    check_proportion(p);
    check_direction(family, theta1, h);
    const std::size_t dim = family.dim();
    const double d = static_cast<double>(dim);
    const double q = 1.0 - p;
    const double prefactor =
        p * p * q / (2.0 * (d + 2.0) * std::pow(unit_ball_volume(dim), 2.0 / d) * std::sqrt(null_variance_sigma0(p)));
    const double power = (d - 2.0) / d;
    const Support support = family.support(theta1);

    if (!support.compact() && power <= 0.0) {
        throw ToleranceError("gradient-term integrand has non-integrable tails on an unbounded support (d <= 2)",
                             std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity());
    }

    auto integrand = [&](std::span<const double> x) {
        const double w = std::exp(power * family.log_density(x, theta1));
        if (w == 0.0) return 0.0;  // far tails, where the ratio may overflow
        return hessian_ratio_directional(family, x, theta1, h) * w;
    };

    Estimate integral;
    if (dim <= config.max_quadrature_dim) {
        QuadratureRegion region;
        region.support = support;
        if (!support.compact()) {
            region.center = family.location_hint(theta1);
            region.scale = family.scale_hint(theta1) / std::sqrt(power);
        }
        integral = integrate_quadrature(integrand, dim, region, config);
    } else if (family.has_tempered_sampler()) {
        const double mass = std::exp(family.log_tempered_mass(theta1, power));
        auto draw = [&](Rng& rng, std::span<double> x) { family.sample_tempered(theta1, power, rng, x); };
        auto weight = [&](std::span<const double> x) { return hessian_ratio_directional(family, x, theta1, h); };
        integral = monte_carlo_mean(draw, weight, dim, config);
        integral.value *= mass;
        integral.std_error *= mass;
    } else if (support.compact()) {
        double volume = 1.0;
        for (std::size_t j = 0; j < dim; ++j) volume *= support.hi[j] - support.lo[j];
        auto draw = [&](Rng& rng, std::span<double> x) {
            for (std::size_t j = 0; j < dim; ++j) {
                x[j] = std::uniform_real_distribution<double>(support.lo[j], support.hi[j])(rng);
            }
        };
        integral = monte_carlo_mean(draw, integrand, dim, config);
        integral.value *= volume;
        integral.std_error *= volume;
    } else {
        auto draw = [&](Rng& rng, std::span<double> x) { family.sample(theta1, rng, x); };
        auto weight = [&](std::span<const double> x) {
            const double lp = family.log_density(x, theta1);
            return hessian_ratio_directional(family, x, theta1, h) * std::exp((power - 1.0) * lp);
        };
        integral = monte_carlo_mean(draw, weight, dim, config);
    }
    if (integral.method == "monte-carlo") check_tolerance(integral, config, "coefficient b");
    return {prefactor * integral.value, prefactor * integral.std_error, integral.method};
}

namespace {

double spherical_b_prefactor(std::size_t dim, double p) {
    const double d = static_cast<double>(dim);
    const double q = 1.0 - p;
    return p * p * q / (2.0 * (d + 2.0) * std::pow(unit_ball_volume(dim), 2.0 / d) * std::sqrt(null_variance_sigma0(p)));
}

double spherical_b_shape(std::size_t dim) {
    if (dim < 3) throw ValidationError("closed form of b needs d >= 3");
    const double d = static_cast<double>(dim);
    return std::pow(d / (d - 2.0), d / 2.0) * ((d + 2.0) / (d - 2.0));
}

}  // namespace

double spherical_normal_b_published(std::size_t dim, double theta1, double h, double p) {
    check_proportion(p);
    const double d = static_cast<double>(dim);
    return -(4.0 * h * d / (theta1 * theta1 * theta1)) * spherical_b_shape(dim) * spherical_b_prefactor(dim, p);
}

double spherical_normal_b_exact(std::size_t dim, double theta1, double h, double p) {
    check_proportion(p);
    const double d = static_cast<double>(dim);
    return -(4.0 * std::numbers::pi * h * d / theta1) * spherical_b_shape(dim) * spherical_b_prefactor(dim, p);
}

FamilyCoefficients family_coefficients(const FamilyModel& family, const Params& theta1, const std::vector<double>& h,
                                       double p, const IntegratorConfig& config) {
    FamilyCoefficients c;
    const Estimate a = coeff_a(family, theta1, h, p, config);
    const Estimate b = coeff_b(family, theta1, h, p, config);
    c.a = a.value;
    c.a_se = a.std_error;
    c.b = b.value;
    c.b_se = b.std_error;
    c.theta1 = theta1;
    c.h = h;
    c.p = p;
    return c;
}

double mean_shift_heuristic(double a, double b, double n, double k, std::size_t dim, double delta) {
    if (!(n > 0.0) || !(k > 0.0) || dim == 0 || delta < 0.0) {
        throw ValidationError("mean shift needs N > 0, k > 0, d >= 1 and delta >= 0");
    }
    const double root_n = std::sqrt(n);
    return -a * root_n * delta * delta + b * root_n * std::pow(k / n, 2.0 / static_cast<double>(dim)) * delta;
}

int compare_rates(const Rate& a, const Rate& b) {
    if (a.n_exp < b.n_exp - kRateTolerance) return -1;
    if (a.n_exp > b.n_exp + kRateTolerance) return 1;
    if (a.log_exp < b.log_exp - kRateTolerance) return -1;
    if (a.log_exp > b.log_exp + kRateTolerance) return 1;
    return 0;
}

void NeighborSchedule::validate() const {
    if (!std::isfinite(gamma) || !std::isfinite(log_power)) {
        throw UnsupportedScheduleError("neighbor schedule exponents must be finite");
    }
    if (gamma < 0.0 || gamma >= 1.0) {
        throw UnsupportedScheduleError("neighbor schedule k_N = N^gamma needs 0 <= gamma < 1");
    }
    if (gamma == 0.0 && log_power < 0.0) {
        throw UnsupportedScheduleError("neighbor schedule must not decay to zero");
    }
}

int phase_transition_dimension(const NeighborSchedule& schedule) {
    schedule.validate();
    const double bound = 8.0 * (1.0 - schedule.gamma);
    if (schedule.pure_power()) return static_cast<int>(std::ceil(bound - kRateTolerance));
    return static_cast<int>(std::floor(bound + kRateTolerance));
}

std::string to_string(DimensionCase c) {
    switch (c) {
        case DimensionCase::BelowTransition: return "below-transition";
        case DimensionCase::AtTransition: return "at-transition";
        case DimensionCase::AboveTransition: return "above-transition";
    }
    return "unknown";
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::BelowLower: return "below-lower";
        case Regime::AtLower: return "at-lower";
        case Regime::Between: return "between";
        case Regime::AtUpper: return "at-upper";
        case Regime::AboveUpper: return "above-upper";
        case Regime::AtQuarter: return "at-N^-1/4";
    }
    return "unknown";
}

std::string to_string(PowerKind kind) {
    switch (kind) {
        case PowerKind::Alpha: return "alpha";
        case PowerKind::Zero: return "0";
        case PowerKind::One: return "1";
        case PowerKind::Formula: return "formula";
    }
    return "unknown";
}

ThresholdReport classify_regime(std::size_t dim, const NeighborSchedule& schedule, double b_exponent) {
    if (dim == 0) throw ValidationError("dimension must be positive");
    if (!std::isfinite(b_exponent)) throw ValidationError("deviation exponent must be finite");
    schedule.validate();
    const double d = static_cast<double>(dim);

    ThresholdReport rep;
    rep.dim = dim;
    rep.schedule = schedule;
    rep.epsilon = {b_exponent, 0.0};
    rep.d_t = phase_transition_dimension(schedule);
    rep.w = {2.0 * (1.0 - schedule.gamma) / d, -2.0 * schedule.log_power / d};

    const Rate quarter{-0.25, 0.0};
    const int c = compare_rates(rep.w, Rate{0.25, 0.0});
    if (c >= 0) {
        rep.dimension_case = c > 0 ? DimensionCase::BelowTransition : DimensionCase::AtTransition;
        rep.lower_threshold = quarter;
        rep.upper_threshold = quarter;
        const int e = compare_rates(rep.epsilon, quarter);
        rep.regime = e < 0 ? Regime::BelowLower : (e == 0 ? Regime::AtQuarter : Regime::AboveUpper);
        return rep;
    }
    rep.dimension_case = DimensionCase::AboveTransition;
    rep.lower_threshold = {-0.5 + rep.w.n_exp, rep.w.log_exp};
    rep.upper_threshold = {-rep.w.n_exp, -rep.w.log_exp};
    const int lo = compare_rates(rep.epsilon, rep.lower_threshold);
    if (lo < 0) {
        rep.regime = Regime::BelowLower;
    } else if (lo == 0) {
        rep.regime = Regime::AtLower;
    } else {
        const int up = compare_rates(rep.epsilon, rep.upper_threshold);
        rep.regime = up < 0 ? Regime::Between : (up == 0 ? Regime::AtUpper : Regime::AboveUpper);
    }
    return rep;
}

namespace {

PowerPrediction base_prediction(double a, double b, const ThresholdReport& rep, double alpha,
                                std::optional<double> beta) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    PowerPrediction out;
    out.alpha = alpha;
    out.a = a;
    out.b = b;
    out.beta = beta;
    out.regime = rep.regime;
    out.dimension_case = rep.dimension_case;
    return out;
}

void set(PowerPrediction& out, PowerKind kind, double value, std::string formula) {
    out.kind = kind;
    out.value = value;
    out.formula = std::move(formula);
}

double require_beta(const std::optional<double>& beta) {
    if (!beta) throw ValidationError("the boundary dimension case needs the constant beta");
    return *beta;
}

void degenerate_direction(double a, double b) {
    if (a - b == 0.0) throw DegeneracyError("a - b = 0: degenerate direction at the upper threshold");
}

}  // namespace

PowerPrediction predicted_power_one_sided(double a, double b, const ThresholdReport& rep, double alpha,
                                          std::optional<double> beta) {
    PowerPrediction out = base_prediction(a, b, rep, alpha, beta);
    const double z = normal_quantile(alpha);
    switch (rep.regime) {
        case Regime::BelowLower: set(out, PowerKind::Alpha, alpha, "alpha"); break;
        case Regime::AboveUpper: set(out, PowerKind::One, 1.0, "1"); break;
        case Regime::AtQuarter:
            if (rep.dimension_case == DimensionCase::AtTransition) {
                const double bt = require_beta(beta);
                set(out, PowerKind::Formula, normal_cdf(z + a - bt * b), "Phi(z_alpha + a - beta*b)");
            } else {
                set(out, PowerKind::Formula, normal_cdf(z + a), "Phi(z_alpha + a)");
            }
            break;
        case Regime::AtLower: set(out, PowerKind::Formula, normal_cdf(z - b), "Phi(z_alpha - b)"); break;
        case Regime::Between:
            if (b > 0.0) {
                set(out, PowerKind::Zero, 0.0, "0 (b > 0)");
            } else {
                set(out, PowerKind::One, 1.0, "1 (b <= 0)");
            }
            break;
        case Regime::AtUpper:
            degenerate_direction(a, b);
            if (a - b > 0.0) {
                set(out, PowerKind::One, 1.0, "1 (a - b > 0)");
            } else {
                set(out, PowerKind::Zero, 0.0, "0 (a - b < 0)");
            }
            break;
    }
    return out;
}

PowerPrediction predicted_power_two_sided(double a, double b, const ThresholdReport& rep, double alpha,
                                          std::optional<double> beta) {
    PowerPrediction out = base_prediction(a, b, rep, alpha, beta);
    const double z = normal_quantile(alpha / 2.0);
    switch (rep.regime) {
        case Regime::BelowLower: set(out, PowerKind::Alpha, alpha, "alpha"); break;
        case Regime::AboveUpper: set(out, PowerKind::One, 1.0, "1"); break;
        case Regime::AtQuarter:
            if (rep.dimension_case == DimensionCase::AtTransition) {
                const double shift = a - require_beta(beta) * b;
                set(out, PowerKind::Formula, normal_cdf(z + shift) + normal_cdf(z - shift),
                    "Phi(z_alpha/2 + a - beta*b) + Phi(z_alpha/2 - a + beta*b)");
            } else {
                set(out, PowerKind::Formula, normal_cdf(z - a) + normal_cdf(z + a),
                    "Phi(z_alpha/2 - a) + Phi(z_alpha/2 + a)");
            }
            break;
        case Regime::AtLower:
            set(out, PowerKind::Formula, normal_cdf(z + b) + normal_cdf(z - b), "Phi(z_alpha/2 + b) + Phi(z_alpha/2 - b)");
            break;
        case Regime::Between: set(out, PowerKind::One, 1.0, "1"); break;
        case Regime::AtUpper:
            degenerate_direction(a, b);
            set(out, PowerKind::One, 1.0, "1 (a - b != 0)");
            break;
    }
    return out;
}

bool gamma_sum_identity_check(std::size_t K, std::size_t dim, double rel_tol) {
    if (K == 0 || dim == 0) throw ValidationError("gamma identity needs K >= 1 and d >= 1");
    const double e = 2.0 / static_cast<double>(dim);
    // log-sum-exp over the terms, largest term last
    std::vector<double> logs(K);
    for (std::size_t j = 0; j < K; ++j) {
        const double jj = static_cast<double>(j);
        logs[j] = std::lgamma(jj + e + 1.0) - std::lgamma(jj + 1.0);
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    long double acc = 0.0L;
    for (double l : logs) acc += std::exp(static_cast<long double>(l - top));
    const double lhs = top + static_cast<double>(std::log(acc));
    const double kk = static_cast<double>(K);
    const double d = static_cast<double>(dim);
    const double rhs = std::log(d / (d + 2.0)) + std::lgamma(kk + e + 1.0) - std::lgamma(kk);
    return std::abs(std::expm1(lhs - rhs)) <= rel_tol;
}

double normalized_gamma_sum(std::size_t K, std::size_t dim) {
    if (K == 0 || dim == 0) throw ValidationError("normalized gamma sum needs K >= 1 and d >= 1");
    const double e = 2.0 / static_cast<double>(dim);
    long double acc = 0.0L;
    const double kk = static_cast<double>(K);
    for (std::size_t j = 0; j < K; ++j) {
        const double jj = static_cast<double>(j);
        acc += std::exp(static_cast<long double>(std::lgamma(jj + e + 1.0) - std::lgamma(jj + 1.0) -
                                                 (1.0 + e) * std::log(kk)));
    }
    return static_cast<double>(acc);
}

}  // namespace knntest
