#include "knntest/sampling.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "knntest/error.hpp"

namespace knntest {

SampleDesign::SampleDesign(std::uint64_t n1, std::uint64_t n2) : n1_(n1), n2_(n2) {
    if (n1 == 0 || n2 == 0) throw ValidationError("sample design needs n1 > 0 and n2 > 0");
}

void LabeledPointCloud::validate() const {
    if (labels.size() != cloud.size()) {
        throw ValidationError("label count " + std::to_string(labels.size()) + " does not match point count " +
                              std::to_string(cloud.size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1 && labels[i] != 2) {
            throw ValidationError("label at point " + std::to_string(i) + " is not 1 or 2");
        }
    }
}

std::uint64_t sample_count(double mean, Rng& rng) {
    if (!(mean > 0.0) || !std::isfinite(mean)) throw ValidationError("Poisson mean must be positive and finite");
    std::poisson_distribution<std::uint64_t> poisson(mean);
    return poisson(rng);
}

std::uint64_t sample_count(double mean, std::uint64_t seed) {
    Rng rng = make_stream(seed, {0x636f756e74ULL});
    return sample_count(mean, rng);
}

namespace {

double label_one_probability(double log_f, double log_g, double ratio21) {
    if (log_f == -std::numeric_limits<double>::infinity() &&
        log_g == -std::numeric_limits<double>::infinity()) {
        throw DegeneracyError("both densities vanish at a sampled point");
    }
    if (std::isnan(log_f) || std::isnan(log_g)) throw DegeneracyError("density evaluated to NaN");
    // n1 f / (n1 f + n2 g) = 1 / (1 + (n2/n1) exp(log g - log f))
    return 1.0 / (1.0 + ratio21 * std::exp(log_g - log_f));
}

}  // namespace

std::vector<double> label_probabilities(const PointCloud& cloud, const Density& f, const Density& g,
                                        const SampleDesign& design) {
    if (f.dim() != cloud.dim() || g.dim() != cloud.dim()) {
        throw ValidationError("density dimension does not match point cloud");
    }
    const double ratio21 = static_cast<double>(design.n2()) / static_cast<double>(design.n1());
    std::vector<double> pi(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto x = cloud.point(i);
        pi[i] = label_one_probability(f.log_density(x), g.log_density(x), ratio21);
    }
    return pi;
}

LabeledPointCloud sample_poissonized(const SampleDesign& design, const Density& f, const Density& g, Rng& rng) {
    if (f.dim() != g.dim()) throw ValidationError("f and g must share the dimension");
    const std::size_t dim = f.dim();
    const std::uint64_t count = sample_count(design.n(), rng);
    const double ratio21 = static_cast<double>(design.n2()) / static_cast<double>(design.n1());
    const bool same = f.family_ptr() == g.family_ptr() && f.theta() == g.theta();

    std::vector<double> coords(count * dim);
    std::vector<std::uint8_t> labels(count);
    std::bernoulli_distribution pick_f(design.p());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::span<double> x(coords.data() + i * dim, dim);
        if (pick_f(rng)) {
            f.sample(rng, x);
        } else {
            g.sample(rng, x);
        }
        const double prob_one = same ? design.p() : label_one_probability(f.log_density(x), g.log_density(x), ratio21);
        labels[i] = unit(rng) < prob_one ? 1 : 2;
    }
    return {PointCloud(dim, std::move(coords)), std::move(labels), design};
}

LabeledPointCloud sample_poissonized(const SampleDesign& design, const Density& f, const Density& g,
                                     std::uint64_t seed) {
    Rng rng = make_stream(seed);
    return sample_poissonized(design, f, g, rng);
}

void write_labeled_csv(std::ostream& out, const LabeledPointCloud& data) {
    data.validate();
    const std::size_t dim = data.cloud.dim();
    for (std::size_t j = 0; j < dim; ++j) out << 'x' << (j + 1) << ',';
    out << "label\n";
    char buf[40];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.cloud.point(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << static_cast<int>(data.labels[i]) << '\n';
    }
}

void write_labeled_csv(const std::string& path, const LabeledPointCloud& data) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open " + path + " for writing");
    write_labeled_csv(out, data);
    if (!out) throw ValidationError("write to " + path + " failed");
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ValidationError("line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
    }
    return v;
}

}  // namespace

LabeledPointCloud read_labeled_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty CSV input");
    const auto header = split_commas(line);
    if (header.size() < 2 || header.back() != "label") {
        throw ValidationError("CSV header must be x1,...,xd,label");
    }
    const std::size_t dim = header.size() - 1;
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[j] != "x" + std::to_string(j + 1)) {
            throw ValidationError("CSV header column " + std::to_string(j + 1) + " should be x" + std::to_string(j + 1));
        }
    }
    std::vector<double> coords;
    std::vector<std::uint8_t> labels;
    std::uint64_t ones = 0, twos = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_commas(line);
        if (cells.size() != dim + 1) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                                  " fields, got " + std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < dim; ++j) coords.push_back(parse_double(cells[j], line_no));
        if (cells[dim] == "1") {
            labels.push_back(1);
            ++ones;
        } else if (cells[dim] == "2") {
            labels.push_back(2);
            ++twos;
        } else {
            throw ValidationError("line " + std::to_string(line_no) + ": label must be 1 or 2");
        }
    }
    LabeledPointCloud data;
    data.cloud = PointCloud(dim, std::move(coords));
    data.labels = std::move(labels);
    if (ones > 0 && twos > 0) data.design = SampleDesign(ones, twos);
    return data;
}

LabeledPointCloud read_labeled_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return read_labeled_csv(in);
}

}  // namespace knntest
