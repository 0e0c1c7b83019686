#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace knntest {

// Points in R^d stored row-major. Index identity is stable: everything
// downstream (graphs, labels) refers to points by position.
class PointCloud {
public:
    PointCloud() = default;

    // Throws ValidationError if dim == 0, coords.size() is not a multiple of
    // dim, or any coordinate is non-finite.
    PointCloud(std::size_t dim, std::vector<double> coords);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
    bool empty() const { return size() == 0; }

    std::span<const double> point(std::size_t i) const {
        return {coords_.data() + i * dim_, dim_};
    }
    const std::vector<double>& coords() const { return coords_; }

    bool operator==(const PointCloud&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> coords_;
};

// Squared Euclidean distance, summed over coordinates in index order. Both
// graph builders go through this so their comparisons agree bit for bit.
inline double squared_distance(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double t = a[j] - b[j];
        s += t * t;
    }
    return s;
}

}  // namespace knntest
