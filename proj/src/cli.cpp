#include "knntest/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "knntest/error.hpp"
#include "knntest/experiments.hpp"
#include "knntest/knn_graph.hpp"
#include "knntest/plan_config.hpp"
#include "knntest/sampling.hpp"
#include "knntest/statistic.hpp"
#include "knntest/theory.hpp"

namespace knntest {

namespace {

struct Common {
    std::string config;
    std::uint64_t seed = 1;
};

// Shows list defaults as "a b" instead of "[a,b]", and nothing for empty lists.
void tidy_list_defaults(CLI::App* sub) {
    for (CLI::Option* opt : sub->get_options()) {
        std::string text = opt->get_default_str();
        if (text.size() < 2 || !((text.front() == '[' && text.back() == ']') || text == "{}")) continue;
        text = text.substr(1, text.size() - 2);
        std::replace(text.begin(), text.end(), ',', ' ');
        opt->default_str(text);
    }
}

void add_common(CLI::App* sub, Common& common) {
    sub->add_option("--config", common.config, "key = value file; flags given on the command line win");
    sub->add_option("--seed", common.seed,
                    std::string("Master seed (default from $") + kSeedEnvVar + ", else 1)");
    tidy_list_defaults(sub);
}

std::string option_key(const CLI::Option* opt) { return opt->get_single_name(); }

// Fills options absent from the command line from the config file, then
// from the seed environment variable.
void merge_sources(CLI::App* sub, const Common& common) {
    const CLI::Option* seed_opt = sub->get_option("--seed");
    const bool seed_on_cli = seed_opt->count() > 0;
    if (!common.config.empty()) {
        const ConfigFile cfg = ConfigFile::load(common.config);
        std::vector<std::string> allowed;
        for (CLI::Option* opt : sub->get_options()) {
            const std::string key = option_key(opt);
            if (key == "help" || key == "config") continue;
            allowed.push_back(key);
            if (opt->count() > 0 || !cfg.has(key)) continue;
            if (opt->get_type_size() == 0) {
                const std::string v = cfg.get_string(key);
                if (v == "true" || v == "1") opt->add_result(std::string("true"));
            } else {
                opt->add_result(cfg.raw(key));
            }
            opt->run_callback();
        }
        cfg.require_known(allowed);
    }
    CLI::Option* seed = sub->get_option("--seed");
    if (!seed_on_cli && seed->count() == 0) {
        if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
            seed->add_result(std::string(env));
            seed->run_callback();
        }
    }
}

void echo_config(const CLI::App* sub, std::ostream& err) {
    err << "# " << sub->get_name() << " configuration\n";
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string key = option_key(opt);
        if (key == "help") continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            for (std::size_t i = 0; i < res.size(); ++i) value += (i ? " " : "") + res[i];
        } else {
            value = opt->get_default_str();
        }
        err << "#   " << key << " = " << value << "\n";
    }
}

// ---------------------------------------------------------------- test

struct TestArgs {
    std::string input;
    std::optional<std::size_t> k;
    double alpha = 0.05;
    std::string side = "one";
    std::size_t permutations = 0;
};

int cmd_test(const TestArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    if (a.input.empty()) throw ValidationError("--input is required");
    if (!a.k) throw ValidationError("--k is required");
    const TestConfig config{a.alpha, *a.k, parse_side(a.side)};
    config.validate();
    const LabeledPointCloud data = read_labeled_csv(a.input);
    TestOutcome result;
    if (data.size() < 2) {
        result.status = OutcomeStatus::NoDecision;
    } else {
        const auto graph = build_knn_graph_indexed(data.cloud, config.k);
        if (config.side == Side::Conditional) {
            const std::vector<double> pi(data.size(), data.design.p());
            result = conditional_test(graph, data.labels, pi, data.design.n(), config,
                                      PermutationOptions{a.permutations, common.seed});
        } else {
            result = run_test(graph, data, config);
        }
    }
    if (result.degraded) err << "warning: k reduced to " << result.k_used << " (fewer points than k + 1)\n";
    if (result.status == OutcomeStatus::NoDecision) {
        out << "status=no-decision L=" << data.size() << " k=" << config.k << " alpha=" << format_double(config.alpha)
            << " side=" << to_string(config.side) << "\n";
        return 0;
    }
    out << "T=" << result.t_stat << " R=" << format_double(result.r_stat)
        << " p_value=" << format_double(result.p_value) << " decision=" << (result.decision ? "reject" : "accept")
        << " k=" << result.k_used << " alpha=" << format_double(config.alpha) << " side=" << to_string(config.side)
        << " L=" << data.size();
    if (result.permutation_p_value) out << " perm_p_value=" << format_double(*result.permutation_p_value);
    out << "\n";
    return 0;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    std::string family = "sph-normal";
    std::size_t d = 2;
    std::vector<double> theta = {1.0};
    std::vector<double> theta2;
    std::uint64_t n1 = 100;
    std::uint64_t n2 = 100;
    std::string output;
};

int cmd_sample(const SampleArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    const FamilyPtr fam = make_family(a.family, a.d);
    const Density f(fam, a.theta);
    const Density g(fam, a.theta2.empty() ? a.theta : a.theta2);
    const LabeledPointCloud data = sample_poissonized(SampleDesign(a.n1, a.n2), f, g, common.seed);
    err << "sampled L=" << data.size() << " points\n";
    if (a.output.empty()) {
        write_labeled_csv(out, data);
    } else {
        write_labeled_csv(a.output, data);
    }
    return 0;
}

// ---------------------------------------------------------------- theory

struct TheoryArgs {
    std::string family = "sph-normal";
    std::vector<double> theta = {20.0};
    std::vector<double> h = {19.0};
    std::size_t d = 6;
    double gamma = 0.1;
    double log_power = 0.0;
    double p = 0.5;
    std::optional<double> b;
    double alpha = 0.1;
    std::optional<double> beta;
    std::size_t mc_samples = 1'000'000;
};

std::string rate_string(const Rate& r) {
    std::string s = "N^" + format_double(r.n_exp);
    if (r.log_exp != 0.0) s += " (log N)^" + format_double(r.log_exp);
    return s;
}

int cmd_theory(const TheoryArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
    const FamilyPtr fam = make_family(a.family, a.d);
    const NeighborSchedule schedule{a.gamma, a.log_power};
    schedule.validate();
    IntegratorConfig integ;
    integ.mc_samples = a.mc_samples;
    integ.seed = common.seed;

    // Regime from a placeholder exponent when --b is absent.
    const ThresholdReport report = classify_regime(a.d, schedule, a.b.value_or(-0.5));
    const Estimate coeff_a_est = coeff_a(*fam, a.theta, a.h, a.p, integ);
    std::optional<Estimate> coeff_b_est;
    try {
        coeff_b_est = coeff_b(*fam, a.theta, a.h, a.p, integ);
    } catch (const ToleranceError& e) {
        if (report.dimension_case != DimensionCase::BelowTransition) throw;
        err << "note: coefficient b unavailable (" << e.what() << "); not needed below the transition\n";
    }

    out << "family=" << a.family << "\n";
    out << "d=" << a.d << "\n";
    out << "p=" << format_double(a.p) << "\n";
    out << "sigma0_sq=" << format_double(null_variance_sigma0(a.p)) << "\n";
    out << "coeff_a=" << format_double(coeff_a_est.value) << "\n";
    out << "coeff_a_se=" << format_double(coeff_a_est.std_error) << "\n";
    out << "coeff_a_method=" << coeff_a_est.method << "\n";
    const double b_value = coeff_b_est ? coeff_b_est->value : std::nan("");
    out << "coeff_b=" << format_double(b_value) << "\n";
    out << "coeff_b_se=" << format_double(coeff_b_est ? coeff_b_est->std_error : std::nan("")) << "\n";
    out << "coeff_b_method=" << (coeff_b_est ? coeff_b_est->method : std::string("unavailable")) << "\n";
    if (a.family.rfind("sph", 0) == 0 && a.d >= 3 && a.theta.size() == 1 && a.h.size() == 1) {
        out << "coeff_b_closed_form=" << format_double(spherical_normal_b_exact(a.d, a.theta[0], a.h[0], a.p)) << "\n";
        out << "coeff_b_published=" << format_double(spherical_normal_b_published(a.d, a.theta[0], a.h[0], a.p))
            << "\n";
    }
    out << "gamma=" << format_double(a.gamma) << "\n";
    out << "log_power=" << format_double(a.log_power) << "\n";
    out << "d_t=" << report.d_t << "\n";
    out << "dimension_case=" << to_string(report.dimension_case) << "\n";
    out << "lower_threshold=" << rate_string(report.lower_threshold) << "\n";
    out << "upper_threshold=" << rate_string(report.upper_threshold) << "\n";
    if (!a.b) {
        out << "regime=none\n";
        return 0;
    }
    out << "b_exponent=" << format_double(*a.b) << "\n";
    out << "regime=" << to_string(report.regime) << "\n";
    const PowerPrediction one = predicted_power_one_sided(coeff_a_est.value, b_value, report, a.alpha, a.beta);
    const PowerPrediction two = predicted_power_two_sided(coeff_a_est.value, b_value, report, a.alpha, a.beta);
    out << "alpha=" << format_double(a.alpha) << "\n";
    out << "power_one_sided=" << format_double(one.value) << "\n";
    out << "power_one_sided_case=" << one.formula << "\n";
    out << "power_two_sided=" << format_double(two.value) << "\n";
    out << "power_two_sided_case=" << two.formula << "\n";
    return 0;
}

// ---------------------------------------------------------------- experiments

struct PlanArgs {
    std::string family = "sph-normal";
    std::vector<double> theta = {20.0};
    std::vector<double> h = {19.0};
    std::size_t d = 6;
    std::uint64_t n1 = 12000;
    std::uint64_t n2 = 8000;
    std::vector<std::size_t> k;
    std::vector<double> delta;
    std::vector<double> b;
    double alpha = 0.1;
    std::vector<std::string> sides = {"one", "two"};
    std::size_t replicates = 500;
    std::size_t threads = 0;
    std::string output;
    std::string compare;
    std::optional<double> beta;
    std::size_t mc_samples = 1'000'000;
};

enum class GridKind { Cell, Curve, Heatmap };

void add_plan_options(CLI::App* sub, PlanArgs& a, GridKind kind) {
    sub->add_option("--family", a.family, "Density family (sph-normal)");
    sub->add_option("--theta", a.theta, "Base parameter theta1");
    sub->add_option("--h", a.h, "Direction h; theta_N = theta1 + h N^b");
    sub->add_option("--d", a.d, "Dimension");
    sub->add_option("--n1", a.n1, "Expected size N1 of the first sample");
    sub->add_option("--n2", a.n2, "Expected size N2 of the second sample");
    if (kind == GridKind::Heatmap) {
        sub->add_option("--delta", a.delta, "Neighbor exponents; k = max(1, round(N^delta))");
    } else {
        sub->add_option("--k", a.k, kind == GridKind::Cell ? "Number of neighbors" : "Neighbor counts");
        sub->add_option("--delta", a.delta, "Neighbor exponents instead of --k");
    }
    sub->add_option("--b", a.b, kind == GridKind::Cell ? "Deviation exponent in (-1, 0)" : "Deviation exponents in (-1, 0)");
    sub->add_option("--alpha", a.alpha, "Level");
    sub->add_option("--sides", a.sides, "Tests to run: one, two, conditional");
    sub->add_option("--replicates", a.replicates, "Monte-Carlo replicates per cell");
    sub->add_option("--threads", a.threads, "Worker threads (0: all available)");
    sub->add_option("--output", a.output, "CSV output path (default stdout)");
    sub->add_option("--compare", a.compare, "Also write empirical-vs-predicted CSV here");
    sub->add_option("--beta", a.beta, "Limit of N^(-1/4) (N/k)^(2/d) when it is finite and positive");
    sub->add_option("--mc-samples", a.mc_samples, "Samples for Monte-Carlo coefficients (with --compare)");
}

int cmd_grid(const PlanArgs& a, GridKind kind, const Common& common, std::ostream& out, std::ostream& err) {
    ExperimentPlan plan;
    plan.family = a.family;
    plan.theta1 = a.theta;
    plan.h = a.h;
    plan.dim = a.d;
    plan.design = SampleDesign(a.n1, a.n2);
    plan.k_values = a.k;
    plan.delta_values = a.delta;
    plan.b_values = a.b;
    plan.alpha = a.alpha;
    plan.sides.clear();
    for (const auto& s : a.sides) plan.sides.push_back(parse_side(s));
    plan.replicates = a.replicates;
    plan.seed = common.seed;
    if (kind == GridKind::Cell && (plan.b_values.size() != 1 || plan.schedule_size() != 1)) {
        throw ValidationError("power runs a single cell: give one --b and one --k or --delta");
    }
    if (kind == GridKind::Heatmap && plan.delta_values.empty()) throw ValidationError("heatmap needs --delta values");
    plan.validate();

    HarnessOptions options;
    options.threads = a.threads;
    options.progress = &err;
    const PowerSurface surface = estimate_power(plan, options);
    for (const PowerEstimate& cell : surface.cells) {
        if (cell.failures) err << "warning: " << cell.failures << " failed replicates excluded\n";
    }
    if (a.output.empty()) {
        emit_csv(out, surface);
    } else {
        emit_csv(a.output, surface);
    }
    if (!a.compare.empty()) {
        IntegratorConfig integ;
        integ.mc_samples = a.mc_samples;
        integ.seed = common.seed;
        const FamilyPtr fam = make_family(plan.family, plan.dim);
        const FamilyCoefficients coefficients =
            family_coefficients(*fam, plan.theta1, plan.h, plan.design.p(), integ);
        const auto rows = compare_empirical_vs_predicted(surface, predict_surface(surface, coefficients, a.beta));
        std::ofstream cmp(a.compare, std::ios::binary);
        if (!cmp) throw ValidationError("cannot open '" + a.compare + "' for writing");
        emit_csv(cmp, surface, rows);
    }
    return 0;
}

// ---------------------------------------------------------------- selftest

// Exhaustive mean and variance of T over all 2^L labelings.
std::pair<double, double> enumerate_moments(const DirectedKnnGraph& graph, const std::vector<double>& pi) {
    const std::size_t n = graph.num_vertices();
    double mean = 0.0, second = 0.0;
    std::vector<std::uint8_t> labels(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double prob = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool one = (mask >> i) & 1u;
            labels[i] = one ? 1 : 2;
            prob *= one ? pi[i] : 1.0 - pi[i];
        }
        const double t = static_cast<double>(cross_edge_count(graph, labels));
        mean += prob * t;
        second += prob * t * t;
    }
    return {mean, second - mean * mean};
}

int cmd_selftest(const Common& common, std::ostream& out) {
    bool all = true;
    auto report = [&](const std::string& name, bool ok) {
        out << name << ": " << (ok ? "PASS" : "FAIL") << "\n";
        all = all && ok;
    };

    report("sigma0_sq(0.5) = 0.0625", null_variance_sigma0(0.5) == 0.0625);

    bool gamma_ok = true;
    for (std::size_t d : {2, 6, 25}) {
        for (std::size_t K = 1; K <= 50; ++K) gamma_ok = gamma_ok && gamma_sum_identity_check(K, d);
    }
    report("gamma sum identity", gamma_ok);

    Rng rng = make_stream(common.seed, {0x5e1f});
    bool graph_ok = true;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t d = std::size_t{1} + rng() % 6;
        const std::size_t n = 2 + rng() % 200;
        const std::size_t k = 1 + rng() % 12;
        std::vector<double> coords(n * d);
        std::normal_distribution<double> z;
        for (auto& c : coords) c = z(rng);
        const PointCloud cloud(d, coords);
        const auto brute = build_knn_graph_brute(cloud, k);
        const auto fast = build_knn_graph_indexed(cloud, k);
        graph_ok = graph_ok && brute == fast &&
                   static_cast<double>(max_in_degree(fast)) <= cone_covering_constant(d) * static_cast<double>(k);
    }
    report("indexed graph matches brute force", graph_ok);

    bool moments_ok = true;
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 3 + rng() % 8;
        const std::size_t k = 1 + rng() % (n - 1);
        std::vector<double> coords(n * 2);
        std::normal_distribution<double> z;
        for (auto& c : coords) c = z(rng);
        const auto graph = build_knn_graph_brute(PointCloud(2, coords), k);
        std::vector<double> pi(n);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (auto& v : pi) v = u(rng);
        const auto [mean, var] = enumerate_moments(graph, pi);
        const ConditionalMoments m = conditional_moments(graph, pi);
        moments_ok = moments_ok && std::abs(m.cond_mean - mean) <= 1e-10 * std::max(1.0, std::abs(mean)) &&
                     std::abs(m.cond_var - var) <= 1e-10 * std::max(1.0, std::abs(var));
    }
    report("conditional moments match enumeration", moments_ok);

    bool var_ok = true;
    const FamilyPtr normal2 = spherical_normal_family(2);
    const Density f(normal2, {1.0});
    for (double p : {0.3, 0.5, 0.6}) {
        const double v = asymptotic_variance_general(f, f, p).value;
        var_ok = var_ok && std::abs(v - null_variance_sigma0(p)) <= 1e-10;
    }
    report("variance limit under the null equals sigma0_sq", var_ok);

    return all ? 0 : 3;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"k-nearest-neighbor two-sample tests: data, theory and power studies", "knntest"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.get_formatter()->column_width(34);

    Common common;

    TestArgs test_args;
    CLI::App* test = app.add_subcommand("test", "Run a two-sample test on a labeled CSV dataset");
    test->add_option("--input", test_args.input, "CSV with columns x1..xd,label (labels 1 and 2)");
    test->add_option("--k", test_args.k, "Number of neighbors (required)");
    test->add_option("--alpha", test_args.alpha, "Level");
    test->add_option("--side", test_args.side, "one, two or conditional");
    test->add_option("--permutations", test_args.permutations,
                     "Label permutations for a resampling p-value (conditional side)");
    add_common(test, common);

    SampleArgs sample_args;
    CLI::App* sample = app.add_subcommand("sample", "Draw a Poissonized two-sample dataset");
    sample->add_option("--family", sample_args.family, "Density family (sph-normal)");
    sample->add_option("--d", sample_args.d, "Dimension");
    sample->add_option("--theta", sample_args.theta, "Parameter of f");
    sample->add_option("--theta2", sample_args.theta2, "Parameter of g (default: same as f)");
    sample->add_option("--n1", sample_args.n1, "Expected size N1");
    sample->add_option("--n2", sample_args.n2, "Expected size N2");
    sample->add_option("--output", sample_args.output, "CSV output path (default stdout)");
    add_common(sample, common);

    TheoryArgs theory_args;
    CLI::App* theory = app.add_subcommand("theory", "Coefficients, thresholds and predicted power");
    theory->add_option("--family", theory_args.family, "Density family (sph-normal)");
    theory->add_option("--theta", theory_args.theta, "Base parameter theta1");
    theory->add_option("--h", theory_args.h, "Direction h");
    theory->add_option("--d", theory_args.d, "Dimension");
    theory->add_option("--gamma", theory_args.gamma, "k_N = N^gamma (log N)^lambda");
    theory->add_option("--log-power", theory_args.log_power, "lambda in k_N = N^gamma (log N)^lambda");
    theory->add_option("--p", theory_args.p, "Sample proportion N1/N");
    theory->add_option("--b", theory_args.b, "Deviation exponent: ||theta_N - theta1|| ~ N^b");
    theory->add_option("--alpha", theory_args.alpha, "Level");
    theory->add_option("--beta", theory_args.beta, "Limit of N^(-1/4) (N/k)^(2/d) at the transition");
    theory->add_option("--mc-samples", theory_args.mc_samples, "Samples for Monte-Carlo integrals");
    add_common(theory, common);

    PlanArgs power_args;
    CLI::App* power = app.add_subcommand("power", "Monte-Carlo power of a single (k, b) cell");
    add_plan_options(power, power_args, GridKind::Cell);
    add_common(power, common);

    PlanArgs curve_args;
    CLI::App* curve = app.add_subcommand("curve", "Power curves over b for each k");
    add_plan_options(curve, curve_args, GridKind::Curve);
    add_common(curve, common);

    PlanArgs heatmap_args;
    CLI::App* heatmap = app.add_subcommand("heatmap", "Power over the (b, delta) grid with k = round(N^delta)");
    add_plan_options(heatmap, heatmap_args, GridKind::Heatmap);
    add_common(heatmap, common);

    CLI::App* selftest = app.add_subcommand("selftest", "Run built-in oracle checks");
    add_common(selftest, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        merge_sources(sub, common);
        echo_config(sub, err);
        if (sub == test) return cmd_test(test_args, common, out, err);
        if (sub == sample) return cmd_sample(sample_args, common, out, err);
        if (sub == theory) return cmd_theory(theory_args, common, out, err);
        if (sub == power) return cmd_grid(power_args, GridKind::Cell, common, out, err);
        if (sub == curve) return cmd_grid(curve_args, GridKind::Curve, common, out, err);
        if (sub == heatmap) return cmd_grid(heatmap_args, GridKind::Heatmap, common, out, err);
        if (sub == selftest) return cmd_selftest(common, out);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ToleranceError& e) {
        err << "numerical error: " << e.what() << " (partial estimate " << e.partial_estimate << ", std error "
            << e.partial_std_error << ")\n";
        return 3;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}

}  // namespace knntest
