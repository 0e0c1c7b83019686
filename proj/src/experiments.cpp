#include "knntest/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "knntest/error.hpp"
#include "knntest/knn_graph.hpp"

namespace knntest {

void ExperimentPlan::validate() const {
    if (replicates < 1) throw ValidationError("replicates must be at least 1");
    if (dim == 0) throw ValidationError("dimension must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    if (b_values.empty()) throw ValidationError("plan needs at least one b value");
    for (double b : b_values) {
        if (!(b > -1.0 && b < 0.0)) throw ValidationError("b values must lie in (-1, 0)");
    }
    if (k_values.empty() == delta_values.empty()) {
        throw ValidationError("plan needs exactly one of a k list and a delta list");
    }
    for (std::size_t k : k_values) {
        if (k < 1) throw ValidationError("k values must be at least 1");
    }
    for (double delta : delta_values) {
        if (!(delta >= 0.0 && delta < 1.0)) throw ValidationError("delta values must lie in [0, 1)");
    }
    if (sides.empty()) throw ValidationError("plan needs at least one side");
    auto sorted = sides;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("sides must not repeat");
    }
    const FamilyPtr fam = make_family(family, dim);
    if (h.size() != fam->param_dim()) throw ValidationError("direction h has the wrong length");
    fam->validate(theta1);
    for (double b : b_values) fam->validate(theta_n(b));
}

std::size_t ExperimentPlan::schedule_size() const {
    return uses_delta() ? delta_values.size() : k_values.size();
}

std::size_t ExperimentPlan::k_at(std::size_t j) const {
    if (!uses_delta()) return k_values.at(j);
    const double k = std::round(std::pow(design.n(), delta_values.at(j)));
    return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

std::optional<double> ExperimentPlan::delta_at(std::size_t j) const {
    if (!uses_delta()) return std::nullopt;
    return delta_values.at(j);
}

Params ExperimentPlan::theta_n(double b) const {
    Params t = theta1;
    const double scale = std::pow(design.n(), b);
    for (std::size_t i = 0; i < t.size() && i < h.size(); ++i) t[i] += h[i] * scale;
    return t;
}

ExperimentPlan canonical_plan(ExperimentPlan plan) {
    std::sort(plan.b_values.begin(), plan.b_values.end());
    std::sort(plan.k_values.begin(), plan.k_values.end());
    std::sort(plan.delta_values.begin(), plan.delta_values.end());
    std::sort(plan.sides.begin(), plan.sides.end());
    return plan;
}

TrialResult run_single_trial(const ExperimentPlan& plan, std::size_t j, std::size_t i, std::size_t replicate) {
    TrialResult out;
    out.reject.assign(plan.sides.size(), false);
    try {
        const double b = plan.b_values.at(i);
        const std::size_t k = plan.k_at(j);
        const FamilyPtr fam = make_family(plan.family, plan.dim);
        const Density f(fam, plan.theta1);
        const Density g(fam, plan.theta_n(b));
        Rng rng = make_stream(plan.seed, {j, i, replicate});
        const LabeledPointCloud data = sample_poissonized(plan.design, f, g, rng);
        if (data.size() < 2) throw DegeneracyError("fewer than two points sampled");
        const DirectedKnnGraph graph = build_knn_graph_indexed(data.cloud, k);
        std::vector<double> pi;
        for (std::size_t s = 0; s < plan.sides.size(); ++s) {
            const TestConfig config{plan.alpha, k, plan.sides[s]};
            TestOutcome outcome;
            if (plan.sides[s] == Side::Conditional) {
                if (pi.empty()) pi = label_probabilities(data.cloud, f, g, plan.design);
                outcome = conditional_test(graph, data.labels, pi, plan.design.n(), config);
            } else {
                outcome = run_test(graph, data, config);
            }
            out.reject[s] = outcome.decision;
        }
    } catch (const Error& e) {
        out.ok = false;
        out.error = e.what();
        std::fill(out.reject.begin(), out.reject.end(), false);
    }
    return out;
}

PowerEstimate wilson_estimate(std::size_t rejects, std::size_t replicates) {
    PowerEstimate e;
    e.rejects = rejects;
    e.replicates = replicates;
    if (replicates == 0) return e;
    constexpr double z = 1.959963984540054;
    const double n = static_cast<double>(replicates);
    const double phat = static_cast<double>(rejects) / n;
    const double denom = 1.0 + z * z / n;
    const double center = (phat + z * z / (2.0 * n)) / denom;
    const double half = z * std::sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom;
    e.power = phat;
    e.ci_lo = std::clamp(std::min(center - half, phat), 0.0, 1.0);
    e.ci_hi = std::clamp(std::max(center + half, phat), 0.0, 1.0);
    return e;
}

const PowerEstimate& PowerSurface::at(std::size_t side, std::size_t j, std::size_t i) const {
    return cells.at((side * plan.schedule_size() + j) * plan.b_values.size() + i);
}

PowerEstimate& PowerSurface::at(std::size_t side, std::size_t j, std::size_t i) {
    return cells.at((side * plan.schedule_size() + j) * plan.b_values.size() + i);
}

PowerSurface estimate_power(const ExperimentPlan& input, const HarnessOptions& options) {
    input.validate();
    PowerSurface surface;
    surface.plan = canonical_plan(input);
    const ExperimentPlan& plan = surface.plan;
    const std::size_t n_sched = plan.schedule_size();
    const std::size_t n_b = plan.b_values.size();
    const std::size_t n_rep = plan.replicates;
    const std::size_t total = n_sched * n_b * n_rep;

    std::vector<TrialResult> results(total);
    std::vector<double> seconds(total, 0.0);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t item = next.fetch_add(1);
            if (item >= total) return;
            const std::size_t r = item % n_rep;
            const std::size_t i = (item / n_rep) % n_b;
            const std::size_t j = item / (n_rep * n_b);
            const auto start = std::chrono::steady_clock::now();
            results[item] = run_single_trial(plan, j, i, r);
            seconds[item] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            const std::size_t finished = done.fetch_add(1) + 1;
            if (options.progress && (finished * 10 / total != (finished - 1) * 10 / total || finished == total)) {
                std::lock_guard lock(progress_mutex);
                *options.progress << "progress: " << finished << "/" << total << " trials\n";
            }
        }
    };

    std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(total, 1));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    surface.cells.assign(plan.sides.size() * n_sched * n_b, PowerEstimate{});
    for (std::size_t j = 0; j < n_sched; ++j) {
        for (std::size_t i = 0; i < n_b; ++i) {
            const std::size_t base = (j * n_b + i) * n_rep;
            std::size_t failures = 0;
            double time = 0.0;
            std::vector<std::size_t> rejects(plan.sides.size(), 0);
            for (std::size_t r = 0; r < n_rep; ++r) {
                const TrialResult& t = results[base + r];
                time += seconds[base + r];
                if (!t.ok) {
                    ++failures;
                    if (options.progress) {
                        *options.progress << "failed replicate k=" << plan.k_at(j) << " b=" << plan.b_values[i]
                                          << " rep=" << r << ": " << t.error << "\n";
                    }
                    continue;
                }
                for (std::size_t s = 0; s < plan.sides.size(); ++s) rejects[s] += t.reject[s] ? 1 : 0;
            }
            for (std::size_t s = 0; s < plan.sides.size(); ++s) {
                PowerEstimate& cell = surface.at(s, j, i);
                cell = wilson_estimate(rejects[s], n_rep - failures);
                cell.failures = failures;
                cell.mean_runtime_s = time / static_cast<double>(n_rep);
            }
        }
    }
    return surface;
}

std::vector<PredictedCell> predict_surface(const PowerSurface& surface, const FamilyCoefficients& coefficients,
                                           std::optional<double> beta) {
    const ExperimentPlan& plan = surface.plan;
    const double log_n = std::log(plan.design.n());
    std::vector<PredictedCell> out;
    for (Side side : plan.sides) {
        if (side == Side::Conditional) continue;
        for (std::size_t j = 0; j < plan.schedule_size(); ++j) {
            const std::size_t k = plan.k_at(j);
            const double gamma = plan.uses_delta() ? *plan.delta_at(j) : std::log(static_cast<double>(k)) / log_n;
            const NeighborSchedule schedule{gamma, 0.0};
            for (double b : plan.b_values) {
                const ThresholdReport report = classify_regime(plan.dim, schedule, b);
                PredictedCell cell;
                cell.side = side;
                cell.k = k;
                cell.b = b;
                cell.prediction =
                    side == Side::OneSided
                        ? predicted_power_one_sided(coefficients.a, coefficients.b, report, plan.alpha, beta)
                        : predicted_power_two_sided(coefficients.a, coefficients.b, report, plan.alpha, beta);
                out.push_back(std::move(cell));
            }
        }
    }
    return out;
}

std::vector<ComparisonRow> compare_empirical_vs_predicted(const PowerSurface& surface,
                                                          const std::vector<PredictedCell>& predictions) {
    if (predictions.empty()) throw ValidationError("no theory predictions to compare against");
    const ExperimentPlan& plan = surface.plan;
    std::vector<ComparisonRow> rows;
    std::size_t matched = 0;
    for (std::size_t s = 0; s < plan.sides.size(); ++s) {
        if (plan.sides[s] == Side::Conditional) continue;
        for (std::size_t j = 0; j < plan.schedule_size(); ++j) {
            for (std::size_t i = 0; i < plan.b_values.size(); ++i) {
                const std::size_t k = plan.k_at(j);
                const double b = plan.b_values[i];
                auto it = std::find_if(predictions.begin(), predictions.end(), [&](const PredictedCell& p) {
                    return p.side == plan.sides[s] && p.k == k && p.b == b;
                });
                if (it == predictions.end()) throw ValidationError("prediction grid does not match the surface");
                ++matched;
                ComparisonRow row;
                row.side = plan.sides[s];
                row.k = k;
                row.delta = plan.delta_at(j);
                row.b = b;
                row.empirical = surface.at(s, j, i);
                row.predicted = it->prediction.value;
                row.gap = std::abs(row.empirical.power - row.predicted);
                row.regime = to_string(it->prediction.regime);
                row.kind = to_string(it->prediction.kind);
                switch (it->prediction.kind) {
                    case PowerKind::Alpha:
                        row.consistent = row.empirical.ci_lo <= plan.alpha && plan.alpha <= row.empirical.ci_hi;
                        break;
                    case PowerKind::One: row.consistent = row.empirical.power >= kPowerOneFloor; break;
                    case PowerKind::Zero: row.consistent = row.empirical.power <= kPowerZeroCeiling; break;
                    case PowerKind::Formula:
                        row.consistent = row.predicted >= row.empirical.ci_lo - kFormulaSlack &&
                                         row.predicted <= row.empirical.ci_hi + kFormulaSlack;
                        break;
                }
                rows.push_back(std::move(row));
            }
        }
    }
    if (matched != predictions.size()) throw ValidationError("prediction grid does not match the surface");
    return rows;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string format_h(const std::vector<double>& h) {
    std::string out;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (i) out += ';';
        out += format_double(h[i]);
    }
    return out;
}

void write_prefix(std::ostream& out, const ExperimentPlan& plan, Side side, std::size_t j, double b) {
    const auto delta = plan.delta_at(j);
    out << to_string(side) << ',' << plan.dim << ',' << plan.design.n1() << ',' << plan.design.n2() << ','
        << plan.k_at(j) << ',' << (delta ? format_double(*delta) : std::string()) << ',' << format_double(b) << ','
        << format_h(plan.h) << ',' << format_double(plan.alpha);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& text) {
    T v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ValidationError("bad number '" + text + "' in surface CSV");
    }
    return v;
}

}  // namespace

void emit_csv(std::ostream& out, const PowerSurface& surface) {
    const ExperimentPlan& plan = surface.plan;
    out << kSurfaceCsvHeader << '\n';
    for (std::size_t s = 0; s < plan.sides.size(); ++s) {
        for (std::size_t j = 0; j < plan.schedule_size(); ++j) {
            for (std::size_t i = 0; i < plan.b_values.size(); ++i) {
                const PowerEstimate& e = surface.at(s, j, i);
                write_prefix(out, plan, plan.sides[s], j, plan.b_values[i]);
                out << ',' << e.replicates << ',' << e.rejects << ',' << format_double(e.power) << ','
                    << format_double(e.ci_lo) << ',' << format_double(e.ci_hi) << ',' << plan.seed << '\n';
            }
        }
    }
}

void emit_csv(const std::string& path, const PowerSurface& surface) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    emit_csv(out, surface);
    if (!out) throw ValidationError("failed writing '" + path + "'");
}

void emit_csv(std::ostream& out, const PowerSurface& surface, const std::vector<ComparisonRow>& rows) {
    const ExperimentPlan& plan = surface.plan;
    out << "side,d,N1,N2,k,delta,b,h,alpha,reps,empirical,ci_lo,ci_hi,predicted,gap,regime,kind,consistent\n";
    for (const ComparisonRow& row : rows) {
        out << to_string(row.side) << ',' << plan.dim << ',' << plan.design.n1() << ',' << plan.design.n2() << ','
            << row.k << ',' << (row.delta ? format_double(*row.delta) : std::string()) << ','
            << format_double(row.b) << ',' << format_h(plan.h) << ',' << format_double(plan.alpha) << ','
            << row.empirical.replicates << ',' << format_double(row.empirical.power) << ','
            << format_double(row.empirical.ci_lo) << ',' << format_double(row.empirical.ci_hi) << ','
            << format_double(row.predicted) << ',' << format_double(row.gap) << ',' << row.regime << ','
            << row.kind << ',' << (row.consistent ? "yes" : "no") << '\n';
    }
}

PowerSurface parse_surface_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kSurfaceCsvHeader) throw ValidationError("surface CSV header mismatch");

    struct Row {
        Side side;
        std::size_t k;
        std::optional<double> delta;
        double b;
        std::size_t reps, rejects;
        double power, lo, hi;
    };
    std::vector<Row> rows;
    ExperimentPlan plan;
    plan.sides.clear();
    std::vector<std::pair<std::size_t, std::optional<double>>> schedule;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 15) throw ValidationError("surface CSV row has the wrong number of fields");
        Row r{parse_side(f[0]),
              parse_number<std::size_t>(f[4]),
              f[5].empty() ? std::nullopt : std::optional<double>(parse_number<double>(f[5])),
              parse_number<double>(f[6]),
              parse_number<std::size_t>(f[9]),
              parse_number<std::size_t>(f[10]),
              parse_number<double>(f[11]),
              parse_number<double>(f[12]),
              parse_number<double>(f[13])};
        if (rows.empty()) {
            plan.dim = parse_number<std::size_t>(f[1]);
            plan.design = SampleDesign(parse_number<std::uint64_t>(f[2]), parse_number<std::uint64_t>(f[3]));
            plan.h.clear();
            for (const auto& part : split(f[7], ';')) plan.h.push_back(parse_number<double>(part));
            plan.alpha = parse_number<double>(f[8]);
            plan.seed = parse_number<std::uint64_t>(f[14]);
        }
        if (std::find(plan.sides.begin(), plan.sides.end(), r.side) == plan.sides.end()) plan.sides.push_back(r.side);
        const std::pair<std::size_t, std::optional<double>> key{r.k, r.delta};
        if (std::find(schedule.begin(), schedule.end(), key) == schedule.end()) schedule.push_back(key);
        if (std::find(plan.b_values.begin(), plan.b_values.end(), r.b) == plan.b_values.end()) {
            plan.b_values.push_back(r.b);
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw ValidationError("surface CSV has no rows");
    for (const auto& [k, delta] : schedule) {
        if (delta) {
            plan.delta_values.push_back(*delta);
        } else {
            plan.k_values.push_back(k);
        }
    }
    if (!plan.k_values.empty() && !plan.delta_values.empty()) {
        throw ValidationError("surface CSV mixes k and delta schedules");
    }
    plan.replicates = 1;
    for (const Row& r : rows) plan.replicates = std::max(plan.replicates, r.reps);

    PowerSurface surface;
    surface.plan = canonical_plan(plan);
    const std::size_t n_cells = surface.plan.sides.size() * surface.plan.schedule_size() * surface.plan.b_values.size();
    if (rows.size() != n_cells) throw ValidationError("surface CSV grid is incomplete");
    surface.cells.assign(n_cells, PowerEstimate{});
    std::vector<bool> seen(n_cells, false);
    const ExperimentPlan& p = surface.plan;
    for (const Row& r : rows) {
        const std::size_t s = std::find(p.sides.begin(), p.sides.end(), r.side) - p.sides.begin();
        std::size_t j = 0;
        while (j < p.schedule_size() && !(p.delta_at(j) == r.delta && (r.delta || p.k_at(j) == r.k))) ++j;
        const std::size_t i = std::find(p.b_values.begin(), p.b_values.end(), r.b) - p.b_values.begin();
        if (j == p.schedule_size()) throw ValidationError("surface CSV schedule is inconsistent");
        const std::size_t idx = (s * p.schedule_size() + j) * p.b_values.size() + i;
        if (seen[idx]) throw ValidationError("surface CSV repeats a cell");
        seen[idx] = true;
        PowerEstimate& e = surface.cells[idx];
        e.replicates = r.reps;
        e.rejects = r.rejects;
        e.power = r.power;
        e.ci_lo = r.lo;
        e.ci_hi = r.hi;
    }
    return surface;
}

}  // namespace knntest
