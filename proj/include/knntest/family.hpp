#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "knntest/rng.hpp"

namespace knntest {

using Params = std::vector<double>;

// Where a family puts its mass.
struct Support {
    enum class Kind { AllSpace, Box };
    Kind kind = Kind::AllSpace;
    std::vector<double> lo, hi;  // only for Box

    static Support all_space() { return {}; }
    static Support box(std::vector<double> lo, std::vector<double> hi);
    bool compact() const { return kind == Kind::Box; }
    bool contains(std::span<const double> x) const;
};

// A parametric density family p(x | theta) on R^d.
//
// Required: log-density, the theta-gradient of the density (the "score" in the
// unnormalized sense, grad_theta p), the trace of the spatial Hessian of p,
// an exact sampler and the support. Families may additionally expose closed
// forms that the theory routines prefer over numerical fallbacks.
class FamilyModel {
public:
    virtual ~FamilyModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t param_dim() const = 0;

    // Throws ParameterDomainError when theta is outside the parameter space.
    virtual void validate(std::span<const double> theta) const = 0;

    virtual double log_density(std::span<const double> x, std::span<const double> theta) const = 0;
    double density(std::span<const double> x, std::span<const double> theta) const;

    virtual std::vector<double> score(std::span<const double> x, std::span<const double> theta) const = 0;
    virtual double spatial_hessian_trace(std::span<const double> x, std::span<const double> theta) const = 0;
    virtual void sample(std::span<const double> theta, Rng& rng, std::span<double> out) const = 0;
    virtual Support support(std::span<const double> theta) const = 0;

    // grad_theta of tr(H_x p) / p, when available in closed form.
    virtual std::optional<std::vector<double>> hessian_ratio_gradient(std::span<const double> x,
                                                                      std::span<const double> theta) const;

    // E[(h . grad_theta p(X|theta) / p(X|theta))^2] for X ~ p(.|theta), when known.
    virtual std::optional<double> expected_squared_score(std::span<const double> theta,
                                                         std::span<const double> h) const;

    // Sampling from the normalized density proportional to p^power, together
    // with log of integral p^power dx. Not every family can do this.
    virtual bool has_tempered_sampler() const { return false; }
    virtual void sample_tempered(std::span<const double> theta, double power, Rng& rng,
                                 std::span<double> out) const;
    virtual double log_tempered_mass(std::span<const double> theta, double power) const;

    // log of P(X in [lo, hi]) for X ~ p(.|theta); used by truncation.
    virtual std::optional<double> log_box_mass(std::span<const double> lo, std::span<const double> hi,
                                               std::span<const double> theta) const;

    // Rough location and spread, used to place quadrature nodes.
    virtual std::vector<double> location_hint(std::span<const double> theta) const;
    virtual double scale_hint(std::span<const double> theta) const = 0;
};

using FamilyPtr = std::shared_ptr<const FamilyModel>;

// N(center, theta^2 I_d), theta > 0. The center is fixed, not a parameter.
FamilyPtr spherical_normal_family(std::size_t dim, std::vector<double> center = {});

// The base family restricted to the box [lo, hi] and renormalized; sampling
// by rejection from the base family.
FamilyPtr truncated_family(FamilyPtr base, std::vector<double> lo, std::vector<double> hi);

// Families by name: "sph-normal" (alias "spherical-normal").
FamilyPtr make_family(const std::string& id, std::size_t dim);

// A family member at a fixed parameter: the densities f and g of a test.
class Density {
public:
    Density(FamilyPtr family, Params theta);

    std::size_t dim() const { return family_->dim(); }
    const FamilyModel& family() const { return *family_; }
    const FamilyPtr& family_ptr() const { return family_; }
    const Params& theta() const { return theta_; }

    double log_density(std::span<const double> x) const { return family_->log_density(x, theta_); }
    double operator()(std::span<const double> x) const { return family_->density(x, theta_); }
    void sample(Rng& rng, std::span<double> out) const { family_->sample(theta_, rng, out); }
    Support support() const { return family_->support(theta_); }
    std::vector<double> location_hint() const { return family_->location_hint(theta_); }
    double scale_hint() const { return family_->scale_hint(theta_); }

private:
    FamilyPtr family_;
    Params theta_;
};

}  // namespace knntest
