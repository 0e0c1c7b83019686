#include "knntest/family.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "knntest/error.hpp"

namespace knntest {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

// log(Phi(b) - Phi(a)) for a < b, accurate in both tails.
double log_normal_interval(double a, double b) {
    if (a > 0.0) {  // reflect into the lower tail where erfc is accurate
        const double t = a;
        a = -b;
        b = -t;
    }
    const double pb = 0.5 * std::erfc(-b / std::numbers::sqrt2);
    const double pa = 0.5 * std::erfc(-a / std::numbers::sqrt2);
    return std::log(pb - pa);
}

class SphericalNormal final : public FamilyModel {
public:
    SphericalNormal(std::size_t dim, std::vector<double> center) : dim_(dim), center_(std::move(center)) {
        if (dim_ == 0) throw ValidationError("spherical normal: dimension must be positive");
        if (center_.empty()) center_.assign(dim_, 0.0);
        if (center_.size() != dim_) throw ValidationError("spherical normal: center has wrong dimension");
    }

    std::string name() const override { return "sph-normal"; }
    std::size_t dim() const override { return dim_; }
    std::size_t param_dim() const override { return 1; }

    void validate(std::span<const double> theta) const override {
        if (theta.size() != 1) throw ParameterDomainError("spherical normal takes one parameter");
        if (!(theta[0] > 0.0) || !std::isfinite(theta[0])) {
            throw ParameterDomainError("spherical normal scale must be positive, got " + std::to_string(theta[0]));
        }
    }

    double log_density(std::span<const double> x, std::span<const double> theta) const override {
        const double s = theta[0];
        return -0.5 * static_cast<double>(dim_) * (kLog2Pi + 2.0 * std::log(s)) - 0.5 * r2(x) / (s * s);
    }

    std::vector<double> score(std::span<const double> x, std::span<const double> theta) const override {
        const double s = theta[0];
        const double d = static_cast<double>(dim_);
        return {density(x, theta) * (-d / s + r2(x) / (s * s * s))};
    }

    double spatial_hessian_trace(std::span<const double> x, std::span<const double> theta) const override {
        const double s2 = theta[0] * theta[0];
        const double d = static_cast<double>(dim_);
        return density(x, theta) * (r2(x) / (s2 * s2) - d / s2);
    }

    void sample(std::span<const double> theta, Rng& rng, std::span<double> out) const override {
        draw(theta[0], rng, out);
    }

    Support support(std::span<const double>) const override { return Support::all_space(); }

    std::optional<std::vector<double>> hessian_ratio_gradient(std::span<const double> x,
                                                              std::span<const double> theta) const override {
        // tr(H p)/p = r^2/theta^4 - d/theta^2
        const double s = theta[0];
        const double d = static_cast<double>(dim_);
        return std::vector<double>{-4.0 * r2(x) / std::pow(s, 5) + 2.0 * d / (s * s * s)};
    }

    std::optional<double> expected_squared_score(std::span<const double> theta,
                                                 std::span<const double> h) const override {
        // score / p = (chi2_d - d) / theta with ||X - c||^2 / theta^2 ~ chi2_d
        return h[0] * h[0] * 2.0 * static_cast<double>(dim_) / (theta[0] * theta[0]);
    }

    bool has_tempered_sampler() const override { return true; }

    void sample_tempered(std::span<const double> theta, double power, Rng& rng,
                         std::span<double> out) const override {
        if (!(power > 0.0)) throw ValidationError("tempering power must be positive");
        draw(theta[0] / std::sqrt(power), rng, out);
    }

    double log_tempered_mass(std::span<const double> theta, double power) const override {
        if (!(power > 0.0)) throw ValidationError("tempering power must be positive");
        const double d = static_cast<double>(dim_);
        const double log_var = 2.0 * std::log(theta[0]);
        return -0.5 * power * d * (kLog2Pi + log_var) + 0.5 * d * (kLog2Pi + log_var - std::log(power));
    }

    std::optional<double> log_box_mass(std::span<const double> lo, std::span<const double> hi,
                                       std::span<const double> theta) const override {
        double total = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            total += log_normal_interval((lo[j] - center_[j]) / theta[0], (hi[j] - center_[j]) / theta[0]);
        }
        return total;
    }

    std::vector<double> location_hint(std::span<const double>) const override { return center_; }
    double scale_hint(std::span<const double> theta) const override { return theta[0]; }

private:
    double r2(std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double t = x[j] - center_[j];
            s += t * t;
        }
        return s;
    }

    void draw(double scale, Rng& rng, std::span<double> out) const {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t j = 0; j < dim_; ++j) out[j] = center_[j] + scale * normal(rng);
    }

    std::size_t dim_;
    std::vector<double> center_;
};

class Truncated final : public FamilyModel {
public:
    Truncated(FamilyPtr base, std::vector<double> lo, std::vector<double> hi)
        : base_(std::move(base)), box_(Support::box(std::move(lo), std::move(hi))) {
        if (!base_) throw ValidationError("truncated family needs a base family");
        if (box_.lo.size() != base_->dim()) throw ValidationError("truncation box has wrong dimension");
    }

    std::string name() const override { return "truncated-" + base_->name(); }
    std::size_t dim() const override { return base_->dim(); }
    std::size_t param_dim() const override { return base_->param_dim(); }

    void validate(std::span<const double> theta) const override {
        base_->validate(theta);
        if (!std::isfinite(log_mass(theta))) {
            throw ParameterDomainError("truncation box carries no mass at this parameter");
        }
    }

    double log_density(std::span<const double> x, std::span<const double> theta) const override {
        if (!box_.contains(x)) return -std::numeric_limits<double>::infinity();
        return base_->log_density(x, theta) - log_mass(theta);
    }

    std::vector<double> score(std::span<const double> x, std::span<const double> theta) const override {
        std::vector<double> g(param_dim(), 0.0);
        if (!box_.contains(x)) return g;
        // grad (p / M) = (grad p - p grad log M) / M
        const double log_m = log_mass(theta);
        const double m = std::exp(log_m);
        const double p = base_->density(x, theta);
        const auto base_score = base_->score(x, theta);
        Params t(theta.begin(), theta.end());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double step = 1e-5 * (1.0 + std::abs(t[i]));
            const double keep = t[i];
            t[i] = keep + step;
            const double up = log_mass(t);
            t[i] = keep - step;
            const double down = log_mass(t);
            t[i] = keep;
            g[i] = (base_score[i] - p * (up - down) / (2.0 * step)) / m;
        }
        return g;
    }

    double spatial_hessian_trace(std::span<const double> x, std::span<const double> theta) const override {
        if (!box_.contains(x)) return 0.0;
        return base_->spatial_hessian_trace(x, theta) / std::exp(log_mass(theta));
    }

    void sample(std::span<const double> theta, Rng& rng, std::span<double> out) const override {
        for (int attempt = 0; attempt < 1'000'000; ++attempt) {
            base_->sample(theta, rng, out);
            if (box_.contains(out)) return;
        }
        throw DegeneracyError("rejection sampler for truncated family made no progress");
    }

    Support support(std::span<const double>) const override { return box_; }

    std::optional<std::vector<double>> hessian_ratio_gradient(std::span<const double> x,
                                                              std::span<const double> theta) const override {
        // The normalizing constant cancels in tr(H p) / p.
        return base_->hessian_ratio_gradient(x, theta);
    }

    std::vector<double> location_hint(std::span<const double> theta) const override {
        auto c = base_->location_hint(theta);
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = std::clamp(c[j], box_.lo[j], box_.hi[j]);
        return c;
    }
    double scale_hint(std::span<const double> theta) const override { return base_->scale_hint(theta); }

private:
    double log_mass(std::span<const double> theta) const {
        auto m = base_->log_box_mass(box_.lo, box_.hi, theta);
        if (!m) throw ValidationError("base family " + base_->name() + " cannot compute box mass");
        return *m;
    }

    FamilyPtr base_;
    Support box_;
};

}  // namespace

Support Support::box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty()) throw ValidationError("box bounds must have equal, positive length");
    for (std::size_t j = 0; j < lo.size(); ++j) {
        if (!(lo[j] < hi[j]) || !std::isfinite(lo[j]) || !std::isfinite(hi[j])) {
            throw ValidationError("box must satisfy lo < hi with finite bounds");
        }
    }
    Support s;
    s.kind = Kind::Box;
    s.lo = std::move(lo);
    s.hi = std::move(hi);
    return s;
}

bool Support::contains(std::span<const double> x) const {
    if (kind == Kind::AllSpace) return true;
    for (std::size_t j = 0; j < lo.size(); ++j) {
        if (x[j] < lo[j] || x[j] > hi[j]) return false;
    }
    return true;
}

double FamilyModel::density(std::span<const double> x, std::span<const double> theta) const {
    return std::exp(log_density(x, theta));
}

std::optional<std::vector<double>> FamilyModel::hessian_ratio_gradient(std::span<const double>,
                                                                       std::span<const double>) const {
    return std::nullopt;
}

std::optional<double> FamilyModel::expected_squared_score(std::span<const double>, std::span<const double>) const {
    return std::nullopt;
}

void FamilyModel::sample_tempered(std::span<const double>, double, Rng&, std::span<double>) const {
    throw ValidationError(name() + " has no tempered sampler");
}

double FamilyModel::log_tempered_mass(std::span<const double>, double) const {
    throw ValidationError(name() + " has no tempered sampler");
}

std::optional<double> FamilyModel::log_box_mass(std::span<const double>, std::span<const double>,
                                                std::span<const double>) const {
    return std::nullopt;
}

std::vector<double> FamilyModel::location_hint(std::span<const double>) const {
    return std::vector<double>(dim(), 0.0);
}

FamilyPtr spherical_normal_family(std::size_t dim, std::vector<double> center) {
    return std::make_shared<SphericalNormal>(dim, std::move(center));
}

FamilyPtr truncated_family(FamilyPtr base, std::vector<double> lo, std::vector<double> hi) {
    return std::make_shared<Truncated>(std::move(base), std::move(lo), std::move(hi));
}

Density::Density(FamilyPtr family, Params theta) : family_(std::move(family)), theta_(std::move(theta)) {
    if (!family_) throw ValidationError("density needs a family");
    family_->validate(theta_);
}

FamilyPtr make_family(const std::string& id, std::size_t dim) {
    if (id == "sph-normal" || id == "spherical-normal") return spherical_normal_family(dim);
    throw ValidationError("unknown family '" + id + "'");
}

}  // namespace knntest
