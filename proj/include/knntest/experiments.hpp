#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "knntest/family.hpp"
#include "knntest/sampling.hpp"
#include "knntest/statistic.hpp"
#include "knntest/theory.hpp"

namespace knntest {

struct ExperimentPlan {
    std::string family = "sph-normal";
    Params theta1 = {20.0};
    std::vector<double> h = {19.0};
    std::vector<double> b_values;
    // Either explicit k values or exponents delta with k = max(1, round(N^delta)).
    std::vector<std::size_t> k_values;
    std::vector<double> delta_values;
    SampleDesign design{12000, 8000};
    std::size_t dim = 6;
    double alpha = 0.1;
    std::vector<Side> sides = {Side::OneSided, Side::TwoSided};
    std::size_t replicates = 500;
    std::uint64_t seed = 1;

    void validate() const;
    bool uses_delta() const { return !delta_values.empty(); }
    std::size_t schedule_size() const;
    std::size_t k_at(std::size_t j) const;
    std::optional<double> delta_at(std::size_t j) const;
    Params theta_n(double b) const;  // theta1 + h N^b
};

// Plan with b values, k/delta values and sides sorted ascending.
ExperimentPlan canonical_plan(ExperimentPlan plan);

struct TrialResult {
    bool ok = true;
    std::vector<bool> reject;  // one per plan side
    std::string error;
};

// Replicate `replicate` of cell (schedule index j, b index i). Sampling and
// statistic errors are returned as failed trials.
TrialResult run_single_trial(const ExperimentPlan& plan, std::size_t j, std::size_t i, std::size_t replicate);

struct PowerEstimate {
    std::size_t rejects = 0;
    std::size_t replicates = 0;  // successful replicates
    std::size_t failures = 0;
    double power = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 1.0;
    double mean_runtime_s = 0.0;
};

// 95% Wilson score interval.
PowerEstimate wilson_estimate(std::size_t rejects, std::size_t replicates);

struct PowerSurface {
    ExperimentPlan plan;  // canonical
    std::vector<PowerEstimate> cells;  // [side][schedule][b]

    const PowerEstimate& at(std::size_t side, std::size_t j, std::size_t i) const;
    PowerEstimate& at(std::size_t side, std::size_t j, std::size_t i);
};

struct HarnessOptions {
    std::size_t threads = 0;  // 0: hardware concurrency
    std::ostream* progress = nullptr;
};

PowerSurface estimate_power(const ExperimentPlan& plan, const HarnessOptions& options = {});

struct PredictedCell {
    Side side = Side::OneSided;
    std::size_t k = 1;
    double b = 0.0;
    PowerPrediction prediction;
};

// Theory predictions for the one- and two-sided cells of the surface. The
// schedule exponent is delta, or log k / log N for explicit k.
std::vector<PredictedCell> predict_surface(const PowerSurface& surface, const FamilyCoefficients& coefficients,
                                           std::optional<double> beta = std::nullopt);

struct ComparisonRow {
    Side side = Side::OneSided;
    std::size_t k = 1;
    std::optional<double> delta;
    double b = 0.0;
    PowerEstimate empirical;
    double predicted = 0.0;
    double gap = 0.0;
    std::string regime;
    std::string kind;
    bool consistent = false;
};

// Slack for calling a finite-N cell consistent with its limit.
inline constexpr double kPowerOneFloor = 0.8;
inline constexpr double kPowerZeroCeiling = 0.2;
inline constexpr double kFormulaSlack = 0.1;

std::vector<ComparisonRow> compare_empirical_vs_predicted(const PowerSurface& surface,
                                                          const std::vector<PredictedCell>& predictions);

inline constexpr const char* kSurfaceCsvHeader =
    "side,d,N1,N2,k,delta,b,h,alpha,reps,rejects,power,ci_lo,ci_hi,seed";

std::string format_double(double v);
void emit_csv(std::ostream& out, const PowerSurface& surface);
void emit_csv(const std::string& path, const PowerSurface& surface);
void emit_csv(std::ostream& out, const PowerSurface& surface, const std::vector<ComparisonRow>& rows);
PowerSurface parse_surface_csv(std::istream& in);

}  // namespace knntest
