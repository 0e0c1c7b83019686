#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "knntest/error.hpp"
#include "knntest/statistic.hpp"
#include "oracles.hpp"

using namespace knntest;

namespace {

DirectedKnnGraph line_graph() { return build_knn_graph_brute(PointCloud(1, {0.0, 1.0, 3.0}), 1); }

std::vector<std::vector<VertexId>> random_out_lists(std::mt19937_64& rng, std::size_t n, std::size_t max_deg) {
    std::vector<std::vector<VertexId>> out(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::vector<VertexId> others;
        for (std::size_t u = 0; u < n; ++u) {
            if (u != v) others.push_back(static_cast<VertexId>(u));
        }
        std::shuffle(others.begin(), others.end(), rng);
        others.resize(std::min<std::size_t>(rng() % (max_deg + 1), others.size()));
        out[v] = others;
    }
    return out;
}

struct ResampleStats {
    double mean = 0.0;
    double var = 0.0;
};

ResampleStats resample_t(const DirectedKnnGraph& g, const std::vector<double>& pi, std::size_t reps,
                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    std::vector<std::uint8_t> labels(pi.size());
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < pi.size(); ++i) labels[i] = u(rng) < pi[i] ? 1 : 2;
        const double t = static_cast<double>(cross_edge_count(g, labels));
        s1 += t;
        s2 += t * t;
    }
    const double mean = s1 / reps;
    return {mean, (s2 - reps * mean * mean) / (reps - 1)};
}

}  // namespace

TEST(CrossEdgeCount, LineExample) {
    const std::vector<std::uint8_t> labels{1, 2, 1};
    EXPECT_EQ(cross_edge_count(line_graph(), labels), 2u);
}

TEST(CrossEdgeCount, UniformLabelsGiveZero) {
    const std::vector<std::uint8_t> ones{1, 1, 1}, twos{2, 2, 2};
    EXPECT_EQ(cross_edge_count(line_graph(), ones), 0u);
    EXPECT_EQ(cross_edge_count(line_graph(), twos), 0u);
}

TEST(CrossEdgeCount, CompleteDigraphCountsOrderedPairs) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    std::vector<double> c(12 * 2);
    for (auto& v : c) v = z(rng);
    const auto g = build_knn_graph_indexed(PointCloud(2, c), 11);
    const std::vector<std::uint8_t> labels{1, 1, 2, 1, 2, 2, 2, 1, 2, 2, 1, 2};
    EXPECT_EQ(cross_edge_count(g, labels), 5u * 7u);
}

TEST(CrossEdgeCount, SizeMismatch) {
    const std::vector<std::uint8_t> labels{1, 2};
    EXPECT_THROW(cross_edge_count(line_graph(), labels), ValidationError);
}

TEST(CrossEdgeCount, LabelSwapDualityAndBounds) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    const std::size_t n = 80, k = 6;
    std::vector<double> c(n * 3);
    for (auto& v : c) v = z(rng);
    const auto g = build_knn_graph_indexed(PointCloud(3, c), k);
    std::vector<std::uint8_t> labels(n), swapped(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = rng() % 2 ? 1 : 2;
        swapped[i] = labels[i] == 1 ? 2 : 1;
    }
    // Swapping labels counts 2 -> 1 edges; transposing turns them back into 1 -> 2 edges.
    std::vector<std::vector<VertexId>> transposed(n);
    for (std::size_t v = 0; v < n; ++v) {
        for (VertexId u : g.out_neighbors(v)) transposed[u].push_back(static_cast<VertexId>(v));
    }
    const auto gt = DirectedKnnGraph::from_out_lists(transposed);
    EXPECT_EQ(cross_edge_count(gt, swapped), cross_edge_count(g, labels));
    EXPECT_LE(cross_edge_count(g, labels), k * n);
    const auto complete = build_knn_graph_indexed(PointCloud(3, c), n - 1);
    const auto a = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
    EXPECT_EQ(cross_edge_count(complete, labels) + cross_edge_count(complete, swapped), 2 * a * (n - a));
}

TEST(NullMoments, ClosedForms) {
    EXPECT_DOUBLE_EQ(null_mean(SampleDesign(500, 500), 5), 1250.0);
    EXPECT_NEAR(null_mean(SampleDesign(12000, 8000), 200), 960000.0, 1e-6);
    EXPECT_DOUBLE_EQ(null_mean(SampleDesign(1, 1), 1), 0.5);
    EXPECT_EQ(null_variance_sigma0(0.5), 0.0625);
    EXPECT_NEAR(null_variance_sigma0(0.6), 0.0672, 1e-15);
    EXPECT_THROW(null_variance_sigma0(0.0), ValidationError);
    EXPECT_THROW(null_variance_sigma0(1.0), ValidationError);
}

TEST(NormalHelpers, QuantileAndCdf) {
    EXPECT_NEAR(normal_quantile(0.1), -1.2815515655446004, 1e-12);
    EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-12);
    EXPECT_NEAR(normal_cdf(normal_quantile(0.3)), 0.3, 1e-14);
    EXPECT_THROW(normal_quantile(1.0), ValidationError);
}

TEST(RunTest, StandardizationInvariant) {
    const auto fam = spherical_normal_family(2);
    const Density f(fam, {1.0});
    const Density g(fam, {1.4});
    const auto data = sample_poissonized(SampleDesign(300, 200), f, g, 17);
    for (Side side : {Side::OneSided, Side::TwoSided}) {
        const auto out = run_test(data, TestConfig{0.1, 7, side});
        const double expected = (static_cast<double>(out.t_stat) - out.null_mean) /
                                (7.0 * std::sqrt(data.design.n()) * out.sigma0);
        EXPECT_NEAR(out.r_stat, expected, 1e-12);
        EXPECT_NEAR(out.null_mean, null_mean(data.design, 7), 1e-9);
        EXPECT_GE(out.p_value, 0.0);
        EXPECT_LE(out.p_value, 1.0);
        const auto again = run_test(data, TestConfig{0.1, 7, side});
        EXPECT_EQ(again.t_stat, out.t_stat);
        EXPECT_EQ(again.r_stat, out.r_stat);
    }
}

TEST(RunTest, AllOnesRejectsOneSided) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    std::vector<double> c(400 * 2);
    for (auto& v : c) v = z(rng);
    LabeledPointCloud data{PointCloud(2, c), std::vector<std::uint8_t>(400, 1), SampleDesign(200, 200)};
    const auto out = run_test(data, TestConfig{0.05, 5, Side::OneSided});
    EXPECT_EQ(out.t_stat, 0u);
    EXPECT_LT(out.r_stat, -10.0);
    EXPECT_TRUE(out.decision);
}

TEST(RunTest, DecisionRules) {
    // Hand-built outcomes through a complete digraph with known T.
    const auto g = build_knn_graph_brute(PointCloud(1, {0.0, 1.0, 2.5, 4.0}), 3);
    LabeledPointCloud data{PointCloud(1, {0.0, 1.0, 2.5, 4.0}), {1, 1, 2, 2}, SampleDesign(2, 2)};
    // T = 4, mean = 4 * 3 / 4 = 3, R = 1 / (3 * 2 * 0.25) = 2/3.
    const auto one = run_test(g, data, TestConfig{0.1, 3, Side::OneSided});
    EXPECT_EQ(one.t_stat, 4u);
    EXPECT_NEAR(one.r_stat, 2.0 / 3.0, 1e-14);
    EXPECT_FALSE(one.decision);
    EXPECT_NEAR(one.p_value, normal_cdf(2.0 / 3.0), 1e-14);
    const auto two = run_test(g, data, TestConfig{0.6, 3, Side::TwoSided});
    EXPECT_TRUE(two.decision);  // |2/3| > z_{0.7} = 0.524
    EXPECT_NEAR(two.p_value, 2 * normal_cdf(-2.0 / 3.0), 1e-14);
}

TEST(RunTest, DegradedAndNoDecision) {
    LabeledPointCloud tiny{PointCloud(1, {0.0}), {1}, SampleDesign(1, 1)};
    EXPECT_EQ(run_test(tiny, TestConfig{0.1, 3, Side::OneSided}).status, OutcomeStatus::NoDecision);
    LabeledPointCloud few{PointCloud(1, {0.0, 1.0, 5.0}), {1, 2, 1}, SampleDesign(2, 1)};
    const auto out = run_test(few, TestConfig{0.1, 10, Side::OneSided});
    EXPECT_TRUE(out.degraded);
    EXPECT_EQ(out.k_used, 2u);
    EXPECT_THROW(run_test(few, TestConfig{1.5, 1, Side::OneSided}), ValidationError);
}

TEST(ConditionalMoments, NullReducesToPq) {
    std::mt19937_64 rng(4);
    const auto g = DirectedKnnGraph::from_out_lists(random_out_lists(rng, 30, 5));
    const std::vector<double> pi(30, 0.3);
    EXPECT_NEAR(conditional_moments(g, pi).cond_mean, static_cast<double>(g.num_edges()) * 0.3 * 0.7, 1e-10);
}

TEST(ConditionalMoments, LineExampleDirectSum) {
    const PointCloud cloud(1, {0.0, 1.0, 3.0});
    const Density f(spherical_normal_family(1), {1.0});
    const Density g(spherical_normal_family(1, {1.0}), {1.0});
    const SampleDesign design(10, 10);
    auto h = [&](double x, double y) {
        const double fx = oracle::normal_pdf({x}, {0.0}, 1.0), gx = oracle::normal_pdf({x}, {1.0}, 1.0);
        const double fy = oracle::normal_pdf({y}, {0.0}, 1.0), gy = oracle::normal_pdf({y}, {1.0}, 1.0);
        return 0.25 * fx * gy / ((0.5 * fx + 0.5 * gx) * (0.5 * fy + 0.5 * gy));
    };
    const double expected = h(0, 1) + h(1, 0) + h(3, 1);
    EXPECT_NEAR(conditional_mean(line_graph(), cloud, f, g, design), expected, 1e-14);
}

TEST(ConditionalMoments, SingleEdgeAndStar) {
    const auto edge = DirectedKnnGraph::from_out_lists({{1}, {}});
    const std::vector<double> pi{0.7, 0.2};
    const double h = 0.7 * 0.8;
    EXPECT_NEAR(conditional_moments(edge, pi).cond_var, h * (1 - h), 1e-15);
    const auto star = DirectedKnnGraph::from_out_lists({{1, 2}, {}, {}});
    EXPECT_NEAR(conditional_moments(star, std::vector<double>(3, 0.5)).cond_var, 0.5, 1e-15);
}

TEST(ConditionalMoments, MatchEnumerationOnRandomGraphs) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t n = 2 + rng() % 11;
        const auto lists = random_out_lists(rng, n, n - 1);
        std::vector<double> pi(n);
        for (auto& v : pi) v = u(rng);
        const auto m = conditional_moments(DirectedKnnGraph::from_out_lists(lists), pi);
        const auto e = oracle::enumerate(lists, pi);
        EXPECT_NEAR(m.cond_mean, e.mean, 1e-10 * std::max(1.0, e.mean));
        EXPECT_NEAR(m.cond_var, e.var, 1e-10 * std::max(1.0, e.var));
    }
}

TEST(ConditionalMoments, MatchLabelResampling) {
    const auto fam = spherical_normal_family(2);
    const Density f(fam, {1.0});
    const Density g(fam, {1.6});
    const auto data = sample_poissonized(SampleDesign(150, 100), f, g, 23);
    const auto graph = build_knn_graph_indexed(data.cloud, 4);
    const auto pi = label_probabilities(data.cloud, f, g, data.design);
    const auto m = conditional_moments(graph, pi);
    const auto mc = resample_t(graph, pi, 10000, 99);
    EXPECT_NEAR(m.cond_mean, mc.mean, 3 * std::sqrt(mc.var / 10000));
    EXPECT_NEAR(m.cond_var, mc.var, 0.05 * m.cond_var);
    EXPECT_NEAR(conditional_variance_exact(graph, data.cloud, f, g, data.design), m.cond_var, 1e-9);

    const std::vector<double> half(pi.size(), 0.5);
    const auto m0 = conditional_moments(graph, half);
    const auto mc0 = resample_t(graph, half, 10000, 7);
    EXPECT_NEAR(m0.cond_var, mc0.var, 0.05 * m0.cond_var);
}

TEST(ConditionalTest, SingleEdgeZScore) {
    const auto edge = DirectedKnnGraph::from_out_lists({{1}, {}});
    const std::vector<double> pi{0.5, 0.5};  // h = 1/4
    const std::vector<double> pi_h{1.0 / std::sqrt(2.0), 1.0 - 1.0 / std::sqrt(2.0)};  // h = 1/2
    for (const std::vector<std::uint8_t> labels : {std::vector<std::uint8_t>{1, 2}, std::vector<std::uint8_t>{2, 2}}) {
        const auto out = conditional_test(edge, labels, pi_h, 2.0, TestConfig{0.1, 1, Side::Conditional});
        EXPECT_NEAR(std::abs(out.r_stat), 1.0, 1e-12);
    }
    const std::vector<std::uint8_t> labels{1, 2};
    EXPECT_GT(conditional_test(edge, labels, pi, 2.0, TestConfig{0.1, 1, Side::Conditional}).r_stat, 0.0);
}

TEST(ConditionalTest, ZeroVarianceIsDegenerate) {
    const auto edge = DirectedKnnGraph::from_out_lists({{1}, {}});
    const std::vector<double> pi{1.0, 0.0};
    const std::vector<std::uint8_t> labels{1, 2};
    EXPECT_THROW(conditional_test(edge, labels, pi, 2.0, TestConfig{0.1, 1, Side::Conditional}), DegeneracyError);
}

TEST(ConditionalTest, PermutationPValueUniformUnderNull) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    const std::size_t n = 300;
    std::vector<double> c(n * 2);
    for (auto& v : c) v = z(rng);
    const auto graph = build_knn_graph_indexed(PointCloud(2, c), 8);
    const std::vector<double> pi(n, 0.5);
    std::uniform_real_distribution<double> u;
    std::vector<double> pvals;
    std::vector<std::uint8_t> labels(n);
    for (int rep = 0; rep < 10000; ++rep) {
        for (auto& l : labels) l = u(rng) < 0.5 ? 1 : 2;
        const auto out = conditional_test(graph, labels, pi, static_cast<double>(n), TestConfig{0.1, 8, Side::Conditional},
                                          PermutationOptions{99, static_cast<std::uint64_t>(rep)});
        ASSERT_TRUE(out.permutation_p_value.has_value());
        pvals.push_back(*out.permutation_p_value);
    }
    std::sort(pvals.begin(), pvals.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < pvals.size(); ++i) {
        const double hi = static_cast<double>(i + 1) / pvals.size();
        const double lo = static_cast<double>(i) / pvals.size();
        ks = std::max({ks, std::abs(hi - pvals[i]), std::abs(pvals[i] - lo)});
    }
    EXPECT_LT(ks, 0.05);
}

TEST(ConditionalTest, NullLevelComparableToUnconditional) {
    const auto fam = spherical_normal_family(2);
    const Density f(fam, {1.0});
    int rej_cond = 0, rej_plain = 0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        const auto data = sample_poissonized(SampleDesign(1000, 1000), f, f, 1000 + r);
        rej_cond += conditional_test(data, f, f, TestConfig{0.1, 5, Side::Conditional}).decision;
        rej_plain += run_test(data, TestConfig{0.1, 5, Side::OneSided}).decision;
    }
    // Exact binomial 99.9% band around 0.1 for 400 trials is roughly [22, 60].
    EXPECT_GE(rej_cond, 22);
    EXPECT_LE(rej_cond, 60);
    EXPECT_GE(rej_plain, 22);
    EXPECT_LE(rej_plain, 60);
}
