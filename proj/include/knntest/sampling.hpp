#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "knntest/family.hpp"
#include "knntest/point_cloud.hpp"
#include "knntest/rng.hpp"

namespace knntest {

// Nominal sample sizes of the two populations. The Poissonized point count
// has mean n() = n1 + n2.
class SampleDesign {
public:
    SampleDesign() = default;
    SampleDesign(std::uint64_t n1, std::uint64_t n2);  // both must be positive

    std::uint64_t n1() const { return n1_; }
    std::uint64_t n2() const { return n2_; }
    double n() const { return static_cast<double>(n1_) + static_cast<double>(n2_); }
    double p() const { return static_cast<double>(n1_) / n(); }
    double q() const { return static_cast<double>(n2_) / n(); }

    bool operator==(const SampleDesign&) const = default;

private:
    std::uint64_t n1_ = 1;
    std::uint64_t n2_ = 1;
};

// Points with their sample marks (1 or 2) and the design that produced them.
struct LabeledPointCloud {
    PointCloud cloud;
    std::vector<std::uint8_t> labels;
    SampleDesign design;

    std::size_t size() const { return cloud.size(); }
    void validate() const;  // one label per point, each in {1, 2}
    bool operator==(const LabeledPointCloud&) const = default;
};

// Poisson(mean) draw.
std::uint64_t sample_count(double mean, Rng& rng);
std::uint64_t sample_count(double mean, std::uint64_t seed);

// Probability that the mark at each location is 1:
// n1 f(z) / (n1 f(z) + n2 g(z)). Throws DegeneracyError where both vanish.
std::vector<double> label_probabilities(const PointCloud& cloud, const Density& f, const Density& g,
                                        const SampleDesign& design);

// Realization of the marked Poisson process with intensity n1 f + n2 g.
LabeledPointCloud sample_poissonized(const SampleDesign& design, const Density& f, const Density& g, Rng& rng);
LabeledPointCloud sample_poissonized(const SampleDesign& design, const Density& f, const Density& g,
                                     std::uint64_t seed);

// CSV with header x1,...,xd,label; 17 significant digits.
void write_labeled_csv(std::ostream& out, const LabeledPointCloud& data);
void write_labeled_csv(const std::string& path, const LabeledPointCloud& data);

// The design is not stored in the file; it is taken from the label counts.
LabeledPointCloud read_labeled_csv(std::istream& in);
LabeledPointCloud read_labeled_csv(const std::string& path);

}  // namespace knntest
