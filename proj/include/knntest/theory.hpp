#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "knntest/family.hpp"
#include "knntest/integrate.hpp"

namespace knntest {

// ---------------------------------------------------------------------------
// Limits of the statistic under general alternatives f, g with p = N1/N.

// Henze-Penrose dissimilarity pq * integral f g / (p f + q g).
Estimate hp_dissimilarity(const Density& f, const Density& g, double p, const IntegratorConfig& config = {});

// Limit of Var(T) / (N k^2):
// pq int f g (p f - q g)^2 / phi^3 + p^2 q^2 int f^2 g^2 / phi^3.
Estimate asymptotic_variance_general(const Density& f, const Density& g, double p,
                                     const IntegratorConfig& config = {});

// Limit of Var(T | locations) / (N k^2): pq int f g (p f - q g)^2 / phi^3.
Estimate asymptotic_variance_conditional(const Density& f, const Density& g, double p,
                                         const IntegratorConfig& config = {});

struct VarianceReport {
    double sigma_sq = 0.0;
    double sigma_cond_sq = 0.0;
    double sigma0_sq = 0.0;
};

VarianceReport variance_report(const Density& f, const Density& g, double p, const IntegratorConfig& config = {});

// ---------------------------------------------------------------------------
// Local alternatives theta_N = theta1 + h * delta_N in a parametric family.

double unit_ball_volume(std::size_t dim);

// (r^2 / 2 sigma0) E[(h . grad_theta p / p)^2], r = 2pq.
Estimate coeff_a(const FamilyModel& family, const Params& theta1, const std::vector<double>& h, double p,
                 const IntegratorConfig& config = {});

// p^2 q / (2 (d+2) V_d^{2/d} sigma0) * int h . grad_theta(tr(H_x p) / p) p^{(d-2)/d} dx.
Estimate coeff_b(const FamilyModel& family, const Params& theta1, const std::vector<double>& h, double p,
                 const IntegratorConfig& config = {});

// The published closed form of b for N(0, theta^2 I_d), d >= 3:
// -(4 h d / theta^3) (d/(d-2))^{d/2} ((d+2)/(d-2)) * p^2 q / (2 (d+2) V_d^{2/d} sigma0).
double spherical_normal_b_published(std::size_t dim, double theta1, double h, double p);

// Closed form obtained by evaluating the defining integral of b exactly for
// N(0, theta^2 I_d): the integral equals
// -(4 pi h d / theta) (d/(d-2))^{d/2} ((d+2)/(d-2)).
double spherical_normal_b_exact(std::size_t dim, double theta1, double h, double p);

struct FamilyCoefficients {
    double a = 0.0;
    double a_se = 0.0;
    double b = 0.0;
    double b_se = 0.0;
    Params theta1;
    std::vector<double> h;
    double p = 0.5;
};

FamilyCoefficients family_coefficients(const FamilyModel& family, const Params& theta1,
                                       const std::vector<double>& h, double p, const IntegratorConfig& config = {});

// -a sqrt(N) delta^2 + b sqrt(N) (k/N)^{2/d} delta.
double mean_shift_heuristic(double a, double b, double n, double k, std::size_t dim, double delta);

// ---------------------------------------------------------------------------
// Rates and regimes. A rate N^e (log N)^l is held as the pair (e, l) and
// compared lexicographically; exponents closer than kRateTolerance are equal.

inline constexpr double kRateTolerance = 1e-9;

struct Rate {
    double n_exp = 0.0;
    double log_exp = 0.0;
};

int compare_rates(const Rate& a, const Rate& b);  // -1: a << b, 0: same order, 1: a >> b

// k_N = N^gamma (log N)^lambda.
struct NeighborSchedule {
    double gamma = 0.0;
    double log_power = 0.0;

    void validate() const;  // UnsupportedScheduleError unless 0 <= gamma < 1 and k_N grows or stays bounded
    bool pure_power() const { return log_power == 0.0; }
};

// For pure powers: ceil(8 (1 - gamma)). Otherwise the largest d whose
// N-exponent 2(1-gamma)/d is at least 1/4 (log factors do not move it).
int phase_transition_dimension(const NeighborSchedule& schedule);

enum class DimensionCase {
    BelowTransition,  // (N/k)^{2/d} >> N^{1/4}
    AtTransition,     // N^{-1/4} (N/k)^{2/d} -> beta
    AboveTransition,  // (N/k)^{2/d} << N^{1/4}
};

enum class Regime { BelowLower, AtLower, Between, AtUpper, AboveUpper, AtQuarter };

std::string to_string(DimensionCase c);
std::string to_string(Regime r);

struct ThresholdReport {
    std::size_t dim = 0;
    NeighborSchedule schedule;
    Rate epsilon;  // the deviation ||theta_N - theta1|| = |h| N^b
    int d_t = 0;
    Rate w;  // (N/k)^{2/d}
    Rate lower_threshold;
    Rate upper_threshold;
    DimensionCase dimension_case = DimensionCase::BelowTransition;
    Regime regime = Regime::BelowLower;
};

// Which case of the limiting-power theorems applies to eps_N = h N^b.
ThresholdReport classify_regime(std::size_t dim, const NeighborSchedule& schedule, double b_exponent);

enum class PowerKind { Alpha, Zero, One, Formula };

struct PowerPrediction {
    double value = 0.0;
    PowerKind kind = PowerKind::Formula;
    std::string formula;  // which case fired
    double alpha = 0.0;
    double a = 0.0;
    double b = 0.0;
    std::optional<double> beta;
    Regime regime = Regime::BelowLower;
    DimensionCase dimension_case = DimensionCase::BelowTransition;
};

std::string to_string(PowerKind kind);

// z_alpha is the alpha-quantile of N(0,1) (negative for alpha < 1/2).
PowerPrediction predicted_power_one_sided(double a, double b, const ThresholdReport& regime, double alpha,
                                          std::optional<double> beta = std::nullopt);
PowerPrediction predicted_power_two_sided(double a, double b, const ThresholdReport& regime, double alpha,
                                          std::optional<double> beta = std::nullopt);

// ---------------------------------------------------------------------------

// sum_{j=0}^{K-1} Gamma(j + 2/d + 1) / Gamma(j + 1) against
// (d/(d+2)) Gamma(K + 2/d + 1) / Gamma(K), in log space.
bool gamma_sum_identity_check(std::size_t K, std::size_t dim, double rel_tol = 1e-10);

// K^{-(1+2/d)} sum_{j<K} Gamma(j + 1 + 2/d) / Gamma(j + 1); tends to d/(d+2).
double normalized_gamma_sum(std::size_t K, std::size_t dim);

}  // namespace knntest
