#include "knntest/point_cloud.hpp"

#include <cmath>
#include <string>

#include "knntest/error.hpp"

namespace knntest {

PointCloud::PointCloud(std::size_t dim, std::vector<double> coords)
    : dim_(dim), coords_(std::move(coords)) {
    if (dim_ == 0) {
        throw ValidationError("point cloud dimension must be positive");
    }
    if (coords_.size() % dim_ != 0) {
        throw ValidationError("coordinate count " + std::to_string(coords_.size()) +
                              " is not a multiple of dimension " + std::to_string(dim_));
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        if (!std::isfinite(coords_[i])) {
            throw ValidationError("non-finite coordinate at point " + std::to_string(i / dim_) +
                                  ", axis " + std::to_string(i % dim_));
        }
    }
}

}  // namespace knntest
