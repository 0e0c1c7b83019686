#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knntest/family.hpp"
#include "knntest/knn_graph.hpp"
#include "knntest/sampling.hpp"

namespace knntest {

enum class Side {
    OneSided,     // reject for too few cross edges: R < z_alpha
    TwoSided,     // reject when |R| > z_{1 - alpha/2}
    Conditional,  // one-sided, standardized by moments given the locations
};

std::string to_string(Side side);
Side parse_side(const std::string& text);  // "one", "two", "conditional" (and long forms)

struct TestConfig {
    double alpha = 0.05;
    std::size_t k = 1;
    Side side = Side::OneSided;

    void validate() const;
};

enum class OutcomeStatus {
    Ok,
    NoDecision,  // fewer than two points; nothing to test
};

struct TestOutcome {
    OutcomeStatus status = OutcomeStatus::Ok;
    std::uint64_t t_stat = 0;
    double null_mean = 0.0;  // centering constant used
    double sigma0 = 0.0;     // R = (T - null_mean) / (k sqrt(N) sigma0)
    double r_stat = 0.0;
    bool decision = false;  // true = reject
    double p_value = 1.0;
    std::size_t k_used = 0;
    bool degraded = false;  // k was clamped to L - 1
    std::optional<double> permutation_p_value;
};

struct ConditionalMoments {
    double cond_mean = 0.0;
    double cond_var = 0.0;
    double r_cond = 0.0;  // (T - cond_mean) / (k sqrt(N)), filled when T is known
};

// Number of edges x -> y with label(x) = 1 and label(y) = 2.
std::uint64_t cross_edge_count(const DirectedKnnGraph& graph, std::span<const std::uint8_t> labels);
std::uint64_t cross_edge_count(const DirectedKnnGraph& graph, const LabeledPointCloud& labeled);

// E_H0 T = N k N1 N2 / N^2.
double null_mean(const SampleDesign& design, std::size_t k);

// sigma0^2 = pq((p - q)^2 + pq); throws ValidationError unless 0 < p < 1.
double null_variance_sigma0(double p);

double normal_cdf(double x);
double normal_quantile(double prob);

// Builds the k-NN graph (indexed) and applies the normal-approximation test.
// With Side::Conditional the labels are treated as i.i.d. Bernoulli(N1/N)
// given the locations, i.e. the conditional null.
TestOutcome run_test(const LabeledPointCloud& labeled, const TestConfig& config);

// Same test on a prebuilt graph.
TestOutcome run_test(const DirectedKnnGraph& graph, const LabeledPointCloud& labeled, const TestConfig& config);

// Exact moments of T given locations from the per-vertex probabilities that
// the mark is 1. Edge (x, y) is a cross edge with probability
// h(x, y) = pi_x (1 - pi_y); marks are independent across vertices.
ConditionalMoments conditional_moments(const DirectedKnnGraph& graph, std::span<const double> prob_one);

double conditional_mean(const DirectedKnnGraph& graph, const PointCloud& locations, const Density& f,
                        const Density& g, const SampleDesign& design);
double conditional_variance_exact(const DirectedKnnGraph& graph, const PointCloud& locations, const Density& f,
                                  const Density& g, const SampleDesign& design);

struct PermutationOptions {
    std::size_t resamples = 0;  // 0 disables the resampling p-value
    std::uint64_t seed = 0;
};

// Standardizes T by E(T | locations) and sqrt(Var(T | locations)). With
// resamples > 0 the marks are redrawn from their conditional law on the
// fixed graph and p = (1 + #{T* <= T}) / (1 + B) (one-sided) or the
// analogous two-sided count on |T* - E|.
TestOutcome conditional_test(const LabeledPointCloud& labeled, const Density& f, const Density& g,
                             const TestConfig& config, const PermutationOptions& permutation = {});

// Same, on a prebuilt graph with given mark probabilities.
TestOutcome conditional_test(const DirectedKnnGraph& graph, std::span<const std::uint8_t> labels,
                             std::span<const double> prob_one, double n, const TestConfig& config,
                             const PermutationOptions& permutation = {});

}  // namespace knntest
