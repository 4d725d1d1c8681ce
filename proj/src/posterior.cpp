#include "flightpref/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace flightpref {

const std::vector<std::array<std::uint8_t, kNumFeatures>>& grid_levels() {
    static const auto table = [] {
        std::vector<std::array<std::uint8_t, kNumFeatures>> t(kGridSize);
        for (std::uint32_t g = 0; g < kGridSize; ++g) t[g] = RewardVector::from_grid_index(g).levels();
        return t;
    }();
    return table;
}

RewardPosterior RewardPosterior::uniform() {
    RewardPosterior p;
    p.weights_.assign(kGridSize, 1.0 / static_cast<double>(kGridSize));
    return p;
}

RewardPosterior RewardPosterior::point_mass(const RewardVector& theta) {
    RewardPosterior p;
    p.weights_.assign(kGridSize, 0.0);
    p.weights_[theta.grid_index()] = 1.0;
    return p;
}

RewardPosterior RewardPosterior::dense(std::vector<double> weights) {
    if (weights.size() != kGridSize) throw std::invalid_argument("dense posterior needs one weight per grid point");
    RewardPosterior p;
    p.weights_ = std::move(weights);
    p.normalize();
    return p;
}

RewardPosterior RewardPosterior::sampled(std::vector<std::uint32_t> points, std::vector<double> weights) {
    if (points.empty() || points.size() != weights.size())
        throw std::invalid_argument("sampled posterior needs matching nonempty points and weights");
    for (auto g : points)
        if (g >= kGridSize) throw std::invalid_argument("sampled posterior: grid index out of range");
    RewardPosterior p;
    p.points_ = std::move(points);
    p.weights_ = std::move(weights);
    p.normalize();
    return p;
}

void RewardPosterior::normalize() {
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("posterior weights must be finite and nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("posterior has zero total mass");
    for (double& w : weights_) w /= total;
}

double RewardPosterior::mass_at(std::uint32_t g) const {
    if (points_.empty()) return g < kGridSize ? weights_[g] : 0.0;
    double m = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i] == g) m += weights_[i];
    return m;
}

double RewardPosterior::ess() const {
    double s = 0.0, s2 = 0.0;
    for (double w : weights_) {
        s += w;
        s2 += w * w;
    }
    return s2 > 0.0 ? s * s / s2 : 0.0;
}

FeatureVector RewardPosterior::mean() const {
    const auto m = marginals();
    FeatureVector mu{};
    for (std::size_t i = 0; i < kNumFeatures; ++i)
        for (std::size_t l = 0; l < kGridLevels; ++l)
            mu[i] += m[i][l] * RewardVector::level_value(static_cast<std::uint8_t>(l));
    return mu;
}

Marginals RewardPosterior::marginals() const {
    const auto& levels = grid_levels();
    Marginals m{};
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        const double w = weights_[k];
        if (w == 0.0) continue;
        const auto& lv = levels[point(k)];
        for (std::size_t i = 0; i < kNumFeatures; ++i) m[i][lv[i]] += w;
    }
    return m;
}

json RewardPosterior::snapshot() const {
    json j;
    j["mean"] = mean();
    j["marginals"] = marginals();
    j["mode"] = mode() == Mode::Exact ? "exact" : "importance";
    if (mode() == Mode::Importance) j["ess"] = ess();
    return j;
}

RewardPosterior reweight(const RewardPosterior& prior, std::span<const double> likelihood) {
    if (likelihood.size() != prior.size()) throw std::invalid_argument("reweight: one likelihood per support point");
    std::vector<double> logw(prior.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prior.size(); ++k) {
        const double w = prior.weight(k), l = likelihood[k];
        if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("reweight: likelihood must be finite and nonnegative");
        logw[k] = w > 0.0 && l > 0.0 ? std::log(w) + std::log(l) : -std::numeric_limits<double>::infinity();
        mx = std::max(mx, logw[k]);
    }
    if (!std::isfinite(mx)) {
        RewardPosterior same = prior;
        same.set_degenerate_update(true);
        return same;
    }
    for (auto& x : logw) x = std::exp(x - mx);
    if (prior.is_dense()) return RewardPosterior::dense(std::move(logw));
    return RewardPosterior::sampled(std::vector<std::uint32_t>(prior.points_), std::move(logw));
}

FeatureVector posterior_mean(const RewardPosterior& p) { return p.mean(); }
Marginals posterior_marginals(const RewardPosterior& p) { return p.marginals(); }

}  // namespace flightpref
