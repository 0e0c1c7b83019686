#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "knntest/error.hpp"
#include "knntest/experiments.hpp"

using namespace knntest;

namespace {

ExperimentPlan small_plan() {
    ExperimentPlan plan;
    plan.design = SampleDesign(300, 200);
    plan.dim = 3;
    plan.theta1 = {1.0};
    plan.h = {1.0};
    plan.b_values = {-0.2, -0.6};
    plan.k_values = {8, 3};
    plan.alpha = 0.1;
    plan.sides = {Side::TwoSided, Side::OneSided};
    plan.replicates = 6;
    plan.seed = 77;
    return plan;
}

std::string csv(const PowerSurface& s) {
    std::ostringstream out;
    emit_csv(out, s);
    return out.str();
}

// Smallest and largest counts with binomial tail mass below 0.5% each.
std::pair<int, int> binomial_band(int n, double p) {
    std::vector<double> pmf(n + 1);
    for (int x = 0; x <= n; ++x) {
        pmf[x] = std::exp(std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) + x * std::log(p) +
                          (n - x) * std::log1p(-p));
    }
    int lo = 0;
    double acc = 0.0;
    while (acc + pmf[lo] < 0.005) acc += pmf[lo++];
    int hi = n;
    acc = 0.0;
    while (acc + pmf[hi] < 0.005) acc += pmf[hi--];
    return {lo, hi};
}

}  // namespace

TEST(Plan, Validation) {
    EXPECT_NO_THROW(small_plan().validate());
    auto p = small_plan();
    p.replicates = 0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.b_values = {0.0};
    EXPECT_THROW(p.validate(), ValidationError);
    p.b_values = {-1.0};
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.k_values = {0};
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.delta_values = {0.2};
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.sides = {Side::OneSided, Side::OneSided};
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.h = {1.0, 2.0};
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.h = {-100.0};  // theta_N leaves the parameter space
    EXPECT_THROW(p.validate(), ValidationError);
    p = small_plan();
    p.family = "cauchy";
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Plan, DeltaSchedule) {
    ExperimentPlan p;
    p.design = SampleDesign(12000, 8000);
    p.delta_values = {0.0, 0.5, 0.6};
    EXPECT_EQ(p.k_at(0), 1u);
    EXPECT_EQ(p.k_at(1), 141u);
    EXPECT_EQ(p.k_at(2), 381u);
    EXPECT_DOUBLE_EQ(p.theta_n(-0.5)[0], 20.0 + 19.0 / std::sqrt(20000.0));
}

TEST(Trial, DeterministicPerCell) {
    const auto plan = canonical_plan(small_plan());
    const auto a = run_single_trial(plan, 1, 0, 3);
    const auto b = run_single_trial(plan, 1, 0, 3);
    EXPECT_TRUE(a.ok);
    EXPECT_EQ(a.reject, b.reject);
    EXPECT_EQ(a.reject.size(), 2u);
}

TEST(Trial, FailuresAreRecorded) {
    auto plan = canonical_plan(small_plan());
    plan.family = "unknown";
    const auto t = run_single_trial(plan, 0, 0, 0);
    EXPECT_FALSE(t.ok);
    EXPECT_FALSE(t.error.empty());
}

TEST(Wilson, Intervals) {
    auto e = wilson_estimate(5, 10);
    EXPECT_NEAR(e.ci_lo, 0.236593090512564, 1e-12);
    EXPECT_NEAR(e.ci_hi, 0.7634069094874361, 1e-12);
    e = wilson_estimate(37, 100);
    EXPECT_NEAR(e.ci_lo, 0.2818236053432453, 1e-12);
    EXPECT_NEAR(e.ci_hi, 0.46779470419057095, 1e-12);
    e = wilson_estimate(0, 1);
    EXPECT_EQ(e.power, 0.0);
    EXPECT_EQ(e.ci_lo, 0.0);
    EXPECT_NEAR(e.ci_hi, 0.7934506856227626, 1e-12);
    e = wilson_estimate(1, 1);
    EXPECT_EQ(e.power, 1.0);
    EXPECT_EQ(e.ci_hi, 1.0);
    EXPECT_NEAR(e.ci_lo, 0.20654931437723745, 1e-12);
    for (std::size_t n : {1, 7, 50}) {
        for (std::size_t x = 0; x <= n; ++x) {
            const auto w = wilson_estimate(x, n);
            EXPECT_LE(w.ci_lo, w.power);
            EXPECT_GE(w.ci_hi, w.power);
        }
    }
}

TEST(Harness, SingleReplicateSurface) {
    auto plan = small_plan();
    plan.replicates = 1;
    const auto s = estimate_power(plan, {1, nullptr});
    EXPECT_EQ(s.cells.size(), 2u * 2u * 2u);
    for (const auto& c : s.cells) {
        EXPECT_EQ(c.replicates, 1u);
        EXPECT_TRUE(c.power == 0.0 || c.power == 1.0);
        EXPECT_GT(c.ci_hi - c.ci_lo, 0.7);
        EXPECT_GE(c.mean_runtime_s, 0.0);
    }
}

TEST(Harness, ThreadCountDoesNotChangeResults) {
    const auto plan = small_plan();
    const auto one = estimate_power(plan, {1, nullptr});
    const auto three = estimate_power(plan, {3, nullptr});
    EXPECT_EQ(csv(one), csv(three));
}

TEST(Harness, NullCalibration) {
    auto plan = small_plan();
    plan.h = {0.0};
    plan.b_values = {-0.5};
    plan.k_values = {5};
    // The plain standardization is only asymptotic in k and over-rejects at k = 5;
    // the conditional one uses exact moments.
    plan.sides = {Side::Conditional};
    plan.replicates = 400;
    const auto s = estimate_power(plan, {1, nullptr});
    const auto [lo, hi] = binomial_band(400, 0.1);
    for (const auto& c : s.cells) {
        EXPECT_EQ(c.failures, 0u);
        EXPECT_GE(static_cast<int>(c.rejects), lo);
        EXPECT_LE(static_cast<int>(c.rejects), hi);
    }
}

TEST(Harness, VeryFastDecayBehavesLikeNull) {
    auto plan = small_plan();
    plan.theta1 = {20.0};
    plan.h = {19.0};
    plan.dim = 6;
    plan.b_values = {-0.9};
    plan.k_values = {5};
    plan.sides = {Side::Conditional};
    plan.replicates = 400;
    const auto s = estimate_power(plan, {1, nullptr});
    const auto [lo, hi] = binomial_band(400, 0.1);
    for (const auto& c : s.cells) {
        EXPECT_GE(static_cast<int>(c.rejects), lo);
        EXPECT_LE(static_cast<int>(c.rejects), hi);
    }
}

TEST(Harness, PowerRoughlyMonotoneInB) {
    ExperimentPlan plan;
    plan.design = SampleDesign(1200, 800);
    plan.dim = 6;
    plan.theta1 = {20.0};
    plan.h = {19.0};
    plan.b_values = {-0.5, -0.4, -0.3, -0.2, -0.1};
    plan.k_values = {10};
    plan.sides = {Side::OneSided};
    plan.replicates = 60;
    plan.seed = 5;
    const auto s = estimate_power(plan, {1, nullptr});
    for (std::size_t i = 1; i < plan.b_values.size(); ++i) {
        const auto& prev = s.at(0, 0, i - 1);
        const auto& cur = s.at(0, 0, i);
        EXPECT_GE(cur.power, prev.power - 2 * (prev.ci_hi - prev.ci_lo)) << i;
    }
}

TEST(Csv, HeaderOrderAndRoundTrip) {
    const auto s = estimate_power(small_plan(), {1, nullptr});
    const std::string text = csv(s);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "side,d,N1,N2,k,delta,b,h,alpha,reps,rejects,power,ci_lo,ci_hi,seed");
    std::istringstream all(text);
    std::vector<std::string> lines;
    while (std::getline(all, line)) lines.push_back(line);
    EXPECT_EQ(lines[1].rfind("one,3,300,200,3,,-0.6,1,0.1,6,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("one,3,300,200,3,,-0.2,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("one,3,300,200,8,,-0.6,", 0), 0u);
    EXPECT_EQ(lines[5].rfind("two,3,300,200,3,,-0.6,", 0), 0u);

    std::istringstream back(text);
    const auto parsed = parse_surface_csv(back);
    EXPECT_EQ(csv(parsed), text);
    ASSERT_EQ(parsed.cells.size(), s.cells.size());
    for (std::size_t i = 0; i < s.cells.size(); ++i) {
        EXPECT_EQ(parsed.cells[i].rejects, s.cells[i].rejects);
        EXPECT_EQ(parsed.cells[i].replicates, s.cells[i].replicates);
        EXPECT_EQ(parsed.cells[i].ci_lo, s.cells[i].ci_lo);
    }
}

TEST(Csv, DeltaColumnAndErrors) {
    auto plan = small_plan();
    plan.k_values.clear();
    plan.delta_values = {0.3, 0.1};
    plan.replicates = 2;
    const auto s = estimate_power(plan, {1, nullptr});
    const std::string text = csv(s);
    EXPECT_NE(text.find("one,3,300,200,2,0.1,-0.6,"), std::string::npos);  // round(500^0.1) = 2
    std::istringstream back(text);
    EXPECT_EQ(csv(parse_surface_csv(back)), text);

    std::istringstream truncated(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
    EXPECT_THROW(parse_surface_csv(truncated), ValidationError);
    std::istringstream bad_header("side,d\n");
    EXPECT_THROW(parse_surface_csv(bad_header), ValidationError);
}

TEST(Compare, JoinsPredictions) {
    ExperimentPlan plan;
    plan.design = SampleDesign(300, 200);
    plan.dim = 25;
    plan.theta1 = {20.0};
    plan.h = {-19.0};
    plan.delta_values = {0.25};
    plan.b_values = {-0.6, -0.3};
    plan.sides = {Side::OneSided, Side::TwoSided, Side::Conditional};
    plan.replicates = 3;
    const auto s = estimate_power(plan, {1, nullptr});
    FamilyCoefficients coeffs;
    coeffs.a = 1.0;
    coeffs.b = 2.0;
    const auto pred = predict_surface(s, coeffs);
    ASSERT_EQ(pred.size(), 4u);
    const auto rows = compare_empirical_vs_predicted(s, pred);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].kind, "alpha");
    EXPECT_EQ(rows[1].kind, "0");
    EXPECT_EQ(rows[1].regime, "between");
    EXPECT_EQ(rows[3].kind, "1");
    for (const auto& r : rows) EXPECT_NEAR(r.gap, std::abs(r.empirical.power - r.predicted), 1e-15);

    EXPECT_THROW(compare_empirical_vs_predicted(s, {}), ValidationError);
    auto missing = pred;
    missing.pop_back();
    EXPECT_THROW(compare_empirical_vs_predicted(s, missing), ValidationError);
    auto shifted = pred;
    shifted[0].b = -0.7;
    EXPECT_THROW(compare_empirical_vs_predicted(s, shifted), ValidationError);

    std::ostringstream out;
    emit_csv(out, s, rows);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
              "side,d,N1,N2,k,delta,b,h,alpha,reps,empirical,ci_lo,ci_hi,predicted,gap,regime,kind,consistent");
}
