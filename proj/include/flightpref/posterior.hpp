#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "flightpref/domain.hpp"

namespace flightpref {

/// Grid levels of every reward vector, indexed by grid index.
const std::vector<std::array<std::uint8_t, kNumFeatures>>& grid_levels();

using Marginals = std::array<std::array<double, kGridLevels>, kNumFeatures>;

/// Weighted reward distribution. Exact posteriors are dense over the full
/// 5^8 grid; sampled posteriors hold the drawn grid points (duplicates allowed).
class RewardPosterior {
public:
    enum class Mode { Exact, Importance };

    /// Uniform over the full grid.
    static RewardPosterior uniform();
    static RewardPosterior point_mass(const RewardVector& theta);
    /// Dense weights over the grid (normalized on construction).
    static RewardPosterior dense(std::vector<double> weights);
    /// Weighted sample (normalized on construction).
    static RewardPosterior sampled(std::vector<std::uint32_t> points, std::vector<double> weights);

    Mode mode() const { return points_.empty() ? Mode::Exact : Mode::Importance; }
    bool is_dense() const { return points_.empty(); }
    std::size_t size() const { return weights_.size(); }
    std::uint32_t point(std::size_t i) const { return points_.empty() ? static_cast<std::uint32_t>(i) : points_[i]; }
    std::span<const double> weights() const { return weights_; }
    double weight(std::size_t i) const { return weights_[i]; }
    /// Total mass on grid index `g`.
    double mass_at(std::uint32_t g) const;

    /// Effective sample size (sum w)^2 / sum w^2.
    double ess() const;
    /// Set when an update had zero likelihood everywhere and returned the prior.
    bool degenerate_update() const { return degenerate_; }
    void set_degenerate_update(bool v) { degenerate_ = v; }

    FeatureVector mean() const;
    Marginals marginals() const;

    /// {"mean", "marginals", "mode", "ess" (importance mode only)}
    json snapshot() const;

private:
    friend RewardPosterior reweight(const RewardPosterior&, std::span<const double>);
    RewardPosterior() = default;
    void normalize();

    std::vector<std::uint32_t> points_;  // empty = dense
    std::vector<double> weights_;
    bool degenerate_ = false;
};

/// Posterior proportional to prior weight times `likelihood` (one entry per
/// support point), computed in log space. A likelihood that is zero on the
/// whole support returns the prior with degenerate_update() set.
RewardPosterior reweight(const RewardPosterior& prior, std::span<const double> likelihood);

FeatureVector posterior_mean(const RewardPosterior& p);
Marginals posterior_marginals(const RewardPosterior& p);

}  // namespace flightpref
