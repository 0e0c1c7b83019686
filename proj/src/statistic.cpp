#include "knntest/statistic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "knntest/error.hpp"

namespace knntest {

std::string to_string(Side side) {
    switch (side) {
        case Side::OneSided: return "one";
        case Side::TwoSided: return "two";
        case Side::Conditional: return "conditional";
    }
    return "unknown";
}

Side parse_side(const std::string& text) {
    if (text == "one" || text == "one-sided" || text == "1") return Side::OneSided;
    if (text == "two" || text == "two-sided" || text == "2") return Side::TwoSided;
    if (text == "conditional" || text == "cond") return Side::Conditional;
    throw ValidationError("unknown side '" + text + "' (expected one, two or conditional)");
}

void TestConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    if (k == 0) throw ValidationError("neighbor count k must be at least 1");
}

std::uint64_t cross_edge_count(const DirectedKnnGraph& graph, std::span<const std::uint8_t> labels) {
    if (labels.size() != graph.num_vertices()) {
        throw ValidationError("graph has " + std::to_string(graph.num_vertices()) + " vertices but " +
                              std::to_string(labels.size()) + " labels were given");
    }
    std::uint64_t t = 0;
    for (std::size_t x = 0; x < labels.size(); ++x) {
        if (labels[x] != 1) continue;
        for (VertexId y : graph.out_neighbors(x)) t += labels[y] == 2;
    }
    return t;
}

std::uint64_t cross_edge_count(const DirectedKnnGraph& graph, const LabeledPointCloud& labeled) {
    return cross_edge_count(graph, std::span<const std::uint8_t>(labeled.labels));
}

double null_mean(const SampleDesign& design, std::size_t k) {
    return design.n() * static_cast<double>(k) * design.p() * design.q();
}

double null_variance_sigma0(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("proportion p must lie in (0, 1)");
    const double q = 1.0 - p;
    return p * q * ((p - q) * (p - q) + p * q);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("normal quantile needs a probability in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

namespace {

void decide(TestOutcome& out, bool two_sided, double alpha) {
    if (two_sided) {
        out.decision = std::abs(out.r_stat) > normal_quantile(1.0 - alpha / 2.0);
        out.p_value = std::min(1.0, 2.0 * normal_cdf(-std::abs(out.r_stat)));
    } else {
        out.decision = out.r_stat < normal_quantile(alpha);
        out.p_value = normal_cdf(out.r_stat);
    }
}

// Sorted copies of the out-lists for O(log k) edge lookups.
std::vector<VertexId> sorted_out_lists(const DirectedKnnGraph& graph, std::vector<std::size_t>& offsets) {
    const std::size_t n = graph.num_vertices();
    offsets.assign(n + 1, 0);
    std::vector<VertexId> flat;
    flat.reserve(graph.num_edges());
    for (std::size_t v = 0; v < n; ++v) {
        auto out = graph.out_neighbors(v);
        flat.insert(flat.end(), out.begin(), out.end());
        std::sort(flat.begin() + static_cast<std::ptrdiff_t>(offsets[v]), flat.end());
        offsets[v + 1] = flat.size();
    }
    return flat;
}

}  // namespace

ConditionalMoments conditional_moments(const DirectedKnnGraph& graph, std::span<const double> prob_one) {
    const std::size_t n = graph.num_vertices();
    if (prob_one.size() != n) throw ValidationError("one mark probability per vertex is required");

    std::vector<std::size_t> offsets;
    const auto sorted = sorted_out_lists(graph, offsets);
    auto edge_exists = [&](VertexId from, VertexId to) {
        auto first = sorted.begin() + static_cast<std::ptrdiff_t>(offsets[from]);
        auto last = sorted.begin() + static_cast<std::ptrdiff_t>(offsets[from + 1]);
        return std::binary_search(first, last, to);
    };

    ConditionalMoments m;
    double var = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
        const double px = prob_one[x];
        const double vx = px * (1.0 - px);  // Var(1{c_x = 1})

        // Single edges and pairs sharing the tail x.
        double s1 = 0.0, s2 = 0.0;
        for (VertexId y : graph.out_neighbors(x)) {
            const double h = px * (1.0 - prob_one[y]);
            m.cond_mean += h;
            var += h * (1.0 - h);
            const double t = 1.0 - prob_one[y];
            s1 += t;
            s2 += t * t;
        }
        // Cov(V_xy, V_xz) = pi_x (1 - pi_x) (1 - pi_y)(1 - pi_z), ordered y != z.
        var += vx * (s1 * s1 - s2);

        // Pairs sharing the head x: Cov(V_yx, V_zx) = pi_x (1 - pi_x) pi_y pi_z.
        double u1 = 0.0, u2 = 0.0;
        for (VertexId y : graph.in_neighbors(x)) {
            u1 += prob_one[y];
            u2 += prob_one[y] * prob_one[y];
        }
        var += vx * (u1 * u1 - u2);

        // Head-to-tail pairs (y -> x, x -> z), z != y: V_yx V_xz = 0, so the
        // covariance is -h(y, x) h(x, z); both orders of the pair count.
        double mutual = 0.0;
        for (VertexId y : graph.in_neighbors(x)) {
            if (edge_exists(static_cast<VertexId>(x), y)) mutual += prob_one[y] * (1.0 - prob_one[y]);
        }
        var -= 2.0 * vx * (u1 * s1 - mutual);

        // Mutual pair (x -> y, y -> x): E[V_xy V_yx] = 0. Summed over ordered
        // (x, y) this adds both orders of each unordered pair.
        for (VertexId y : graph.out_neighbors(x)) {
            if (edge_exists(y, static_cast<VertexId>(x))) {
                var -= px * (1.0 - prob_one[y]) * prob_one[y] * (1.0 - px);
            }
        }
    }
    m.cond_var = std::max(var, 0.0);
    return m;
}

double conditional_mean(const DirectedKnnGraph& graph, const PointCloud& locations, const Density& f,
                        const Density& g, const SampleDesign& design) {
    if (graph.num_vertices() != locations.size()) throw ValidationError("graph and locations differ in size");
    const auto pi = label_probabilities(locations, f, g, design);
    return conditional_moments(graph, pi).cond_mean;
}

double conditional_variance_exact(const DirectedKnnGraph& graph, const PointCloud& locations, const Density& f,
                                  const Density& g, const SampleDesign& design) {
    if (graph.num_vertices() != locations.size()) throw ValidationError("graph and locations differ in size");
    const auto pi = label_probabilities(locations, f, g, design);
    return conditional_moments(graph, pi).cond_var;
}

TestOutcome conditional_test(const DirectedKnnGraph& graph, std::span<const std::uint8_t> labels,
                             std::span<const double> prob_one, double n, const TestConfig& config,
                             const PermutationOptions& permutation) {
    config.validate();
    TestOutcome out;
    out.k_used = graph.k();
    out.degraded = graph.k() < graph.requested_k();
    out.t_stat = cross_edge_count(graph, labels);
    const auto m = conditional_moments(graph, prob_one);
    if (!(m.cond_var > 0.0)) {
        throw DegeneracyError("conditional variance is zero; every mark is determined by its location");
    }
    const double t = static_cast<double>(out.t_stat);
    const double scale = static_cast<double>(graph.k()) * std::sqrt(n);
    out.null_mean = m.cond_mean;
    out.sigma0 = std::sqrt(m.cond_var) / scale;
    out.r_stat = (t - m.cond_mean) / std::sqrt(m.cond_var);
    const bool two_sided = config.side == Side::TwoSided;
    decide(out, two_sided, config.alpha);

    if (permutation.resamples > 0) {
        Rng rng = make_stream(permutation.seed, {0x7065726dULL});
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::uint8_t> resampled(labels.size());
        std::size_t hits = 0;
        const double observed_gap = std::abs(t - m.cond_mean);
        for (std::size_t b = 0; b < permutation.resamples; ++b) {
            for (std::size_t i = 0; i < resampled.size(); ++i) resampled[i] = unit(rng) < prob_one[i] ? 1 : 2;
            const double tb = static_cast<double>(cross_edge_count(graph, resampled));
            // Ties with the observed value count toward the p-value.
            hits += two_sided ? (std::abs(tb - m.cond_mean) >= observed_gap) : (tb <= t);
        }
        out.permutation_p_value =
            static_cast<double>(hits + 1) / static_cast<double>(permutation.resamples + 1);
    }
    return out;
}

TestOutcome conditional_test(const LabeledPointCloud& labeled, const Density& f, const Density& g,
                             const TestConfig& config, const PermutationOptions& permutation) {
    config.validate();
    labeled.validate();
    if (labeled.size() < 2) {
        TestOutcome out;
        out.status = OutcomeStatus::NoDecision;
        return out;
    }
    const auto graph = build_knn_graph_indexed(labeled.cloud, config.k);
    const auto pi = label_probabilities(labeled.cloud, f, g, labeled.design);
    return conditional_test(graph, labeled.labels, pi, labeled.design.n(), config, permutation);
}

TestOutcome run_test(const DirectedKnnGraph& graph, const LabeledPointCloud& labeled, const TestConfig& config) {
    config.validate();
    labeled.validate();
    if (graph.num_vertices() != labeled.size()) throw ValidationError("graph and labels differ in size");

    if (config.side == Side::Conditional) {
        const std::vector<double> pi(labeled.size(), labeled.design.p());
        return conditional_test(graph, labeled.labels, pi, labeled.design.n(), config);
    }

    TestOutcome out;
    out.k_used = graph.k();
    out.degraded = graph.k() < graph.requested_k();
    out.t_stat = cross_edge_count(graph, labeled);
    const SampleDesign& design = labeled.design;
    out.null_mean = null_mean(design, out.k_used);
    out.sigma0 = std::sqrt(null_variance_sigma0(design.p()));
    out.r_stat = (static_cast<double>(out.t_stat) - out.null_mean) /
                 (static_cast<double>(out.k_used) * std::sqrt(design.n()) * out.sigma0);
    decide(out, config.side == Side::TwoSided, config.alpha);
    return out;
}

TestOutcome run_test(const LabeledPointCloud& labeled, const TestConfig& config) {
    config.validate();
    labeled.validate();
    if (labeled.size() < 2) {
        TestOutcome out;
        out.status = OutcomeStatus::NoDecision;
        return out;
    }
    const auto graph = build_knn_graph_indexed(labeled.cloud, config.k);
    return run_test(graph, labeled, config);
}

}  // namespace knntest
