#include "flightpref/pragmatics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Dense>

#include "flightpref/parallel.hpp"

namespace flightpref {

namespace {

constexpr std::size_t kHalfFeatures = kNumFeatures / 2;
constexpr std::size_t kHalfGrid = 625;  // 5^4

// Per-option reward contribution of each (feature, level) pair.
using RewardContrib = std::array<std::array<std::array<double, kGridLevels>, kNumFeatures>, kNumOptions>;

RewardContrib reward_contrib(const OptionSet& options) {
    RewardContrib c{};
    for (std::size_t j = 0; j < kNumOptions; ++j) {
        const auto phi = options[j].features();
        for (std::size_t i = 0; i < kNumFeatures; ++i)
            for (std::size_t l = 0; l < kGridLevels; ++l)
                c[j][i][l] = RewardVector::level_value(static_cast<std::uint8_t>(l)) * phi[i];
    }
    return c;
}

std::array<double, kNumOptions> rewards_at(const RewardContrib& c, const std::array<std::uint8_t, kNumFeatures>& lv) {
    std::array<double, kNumOptions> r{};
    for (std::size_t j = 0; j < kNumOptions; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < kNumFeatures; ++i) s += c[j][i][lv[i]];
        r[j] = s;
    }
    return r;
}

}  // namespace

void PragmaticsConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be nonnegative");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be at least 1");
}

OptionDistribution p_opt(const std::array<double, kNumOptions>& rewards, double beta) {
    OptionDistribution p{};
    if (std::isinf(beta)) {
        const auto best = optimal_option(rewards);
        for (auto i : best.ties) p[i] = 1.0 / static_cast<double>(best.ties.size());
        return p;
    }
    for (std::size_t i = 0; i < kNumOptions; ++i) p[i] = beta * rewards[i];
    softmax_inplace(p);
    return p;
}

OptionDistribution p_opt(const RewardVector& theta, const OptionSet& options, double beta) {
    std::array<double, kNumOptions> r{};
    for (std::size_t i = 0; i < kNumOptions; ++i) r[i] = reward(theta, options[i]);
    return p_opt(r, beta);
}

// ------------------------------------------------------------ RewardSpeakerGrid

RewardSpeakerGrid::RewardSpeakerGrid(std::vector<std::shared_ptr<const LinearRewardSpeaker>> members,
                                     UtteranceSet support)
    : members_(std::move(members)), support_(std::move(support)) {
    if (members_.empty()) throw std::invalid_argument("reward speaker grid needs at least one model");
    if (support_.empty()) throw std::invalid_argument("reward speaker grid: empty utterance support");
    const std::size_t n_u = support_.size();
    for (const auto& m : members_) {
        std::vector<Table> tables(n_u);
        for (std::size_t u = 0; u < n_u; ++u) tables[u] = m->logit_table(support_[u]);

        // Z(theta) = sum_u exp(bias_u + front_u(theta_0..3) + back_u(theta_4..7)),
        // a 625 x 625 matrix product after splitting the grid digits in half.
        Eigen::MatrixXd front(kHalfGrid, n_u), back(kHalfGrid, n_u);
        Eigen::VectorXd log_scale(n_u);
        for (std::size_t u = 0; u < n_u; ++u) {
            const auto& t = tables[u];
            double max_front = 0.0, max_back = 0.0;
            for (std::size_t i = 0; i < kNumFeatures; ++i) {
                double mx = t[i * kGridLevels];
                for (std::size_t l = 1; l < kGridLevels; ++l) mx = std::max(mx, t[i * kGridLevels + l]);
                (i < kHalfFeatures ? max_front : max_back) += mx;
            }
            for (std::size_t a = 0; a < kHalfGrid; ++a) {
                std::size_t rest = a;
                double sf = 0.0, sb = 0.0;
                for (std::size_t i = kHalfFeatures; i-- > 0;) {
                    const std::size_t level = rest % kGridLevels;
                    rest /= kGridLevels;
                    sf += t[i * kGridLevels + level];
                    sb += t[(i + kHalfFeatures) * kGridLevels + level];
                }
                front(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u)) = std::exp(sf - max_front);
                back(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(u)) = std::exp(sb - max_back);
            }
            log_scale(static_cast<Eigen::Index>(u)) = t[kRewardCodeDim - 1] + max_front + max_back;
        }
        const double shift = log_scale.maxCoeff();
        const Eigen::VectorXd scale = (log_scale.array() - shift).exp();
        const Eigen::MatrixXd z = (front * scale.asDiagonal()) * back.transpose();
        std::vector<double> log_z(kGridSize);
        for (std::size_t a = 0; a < kHalfGrid; ++a)
            for (std::size_t b = 0; b < kHalfGrid; ++b)
                log_z[a * kHalfGrid + b] = shift + std::log(z(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        support_tables_.push_back(std::move(tables));
        log_z_.push_back(std::move(log_z));
    }
}

std::vector<RewardSpeakerGrid::Table> RewardSpeakerGrid::tables_for(const Utterance& u) const {
    std::vector<Table> out;
    out.reserve(members_.size());
    if (auto idx = support_.find(u)) {
        for (const auto& t : support_tables_) out.push_back(t[*idx]);
    } else {
        for (const auto& m : members_) out.push_back(m->logit_table(u));
    }
    return out;
}

void RewardSpeakerGrid::prob_points(const Utterance& u, std::span<const std::uint32_t> points,
                                    std::span<double> out) const {
    if (points.size() != out.size()) throw std::invalid_argument("prob_points: size mismatch");
    const auto tables = tables_for(u);
    const auto& levels = grid_levels();
    const double inv_k = 1.0 / static_cast<double>(members_.size());
    parallel_for_chunks(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto g = points[k];
            const auto& lv = levels[g];
            double p = 0.0;
            for (std::size_t m = 0; m < tables.size(); ++m) {
                const auto& t = tables[m];
                double s = t[kRewardCodeDim - 1];
                for (std::size_t i = 0; i < kNumFeatures; ++i) s += t[i * kGridLevels + lv[i]];
                p += std::exp(s - log_z_[m][g]);
            }
            out[k] = tables.size() == 1 ? p : p * inv_k;
        }
    });
}

void RewardSpeakerGrid::prob_grid(const Utterance& u, std::span<double> out) const {
    if (out.size() != kGridSize) throw std::invalid_argument("prob_grid: output must cover the grid");
    std::vector<std::uint32_t> all(kGridSize);
    for (std::uint32_t g = 0; g < kGridSize; ++g) all[g] = g;
    prob_points(u, all, out);
}

double RewardSpeakerGrid::prob(const Utterance& u, const RewardVector& theta) const {
    const std::uint32_t g = theta.grid_index();
    double out = 0.0;
    prob_points(u, std::span<const std::uint32_t>(&g, 1), std::span<double>(&out, 1));
    return out;
}

std::vector<double> RewardSpeakerGrid::distribution(const RewardVector& theta) const {
    const auto code = reward_code_indices(theta);
    std::vector<std::vector<double>> per_member;
    for (const auto& tables : support_tables_) {
        std::vector<double> logits(tables.size());
        for (std::size_t u = 0; u < tables.size(); ++u) {
            double s = 0.0;
            for (auto idx : code) s += tables[u][idx];
            logits[u] = s;
        }
        softmax_inplace(logits);
        per_member.push_back(std::move(logits));
    }
    return ensemble_average(per_member);
}

// ------------------------------------------------------------ PragmaticModel

PragmaticModel::PragmaticModel(std::shared_ptr<const Listener> listener, std::shared_ptr<const RewardSpeakerGrid> speaker)
    : listener_(std::move(listener)), speaker_(std::move(speaker)) {
    if (!listener_ || !speaker_) throw std::invalid_argument("pragmatic model needs a listener and a reward speaker");
}

ReferContext PragmaticModel::refer_context(const OptionSet& options) const {
    const auto& support = speaker_->support();
    if (support.empty()) throw std::invalid_argument("p_refer: empty utterance support");
    ReferContext ctx;
    ctx.listener.reserve(support.size());
    for (const auto& u : support) {
        ctx.listener.push_back(listener_->prob(u, options));
        for (std::size_t j = 0; j < kNumOptions; ++j) ctx.normalizer[j] += ctx.listener.back()[j];
    }
    return ctx;
}

std::array<double, kNumOptions> PragmaticModel::p_refer(const Utterance& u, const OptionSet& options,
                                                        const ReferContext& ctx) const {
    const auto idx = speaker_->support().find(u);
    const OptionDistribution l = idx ? ctx.listener[*idx] : listener_->prob(u, options);
    std::array<double, kNumOptions> out{};
    for (std::size_t j = 0; j < kNumOptions; ++j) out[j] = ctx.normalizer[j] > 0.0 ? l[j] / ctx.normalizer[j] : 0.0;
    return out;
}

std::array<double, kNumOptions> PragmaticModel::p_refer(const Utterance& u, const OptionSet& options) const {
    return p_refer(u, options, refer_context(options));
}

double PragmaticModel::p_refer(const Utterance& u, std::size_t xi, const OptionSet& options) const {
    if (xi >= kNumOptions) throw std::invalid_argument("p_refer: option index out of range");
    return p_refer(u, options)[xi];
}

double PragmaticModel::p_action(const Utterance& u, const RewardVector& theta, const OptionSet& options,
                                const PragmaticsConfig& cfg) const {
    const auto refer = p_refer(u, options);
    const auto opt = p_opt(theta, options, cfg.beta);
    double s = 0.0;
    for (std::size_t j = 0; j < kNumOptions; ++j) s += refer[j] * opt[j];
    return s;
}

double PragmaticModel::s1_prob(const Utterance& u, const RewardVector& theta, const OptionSet& options,
                               const PragmaticsConfig& cfg) const {
    cfg.validate();
    const double pa = p_action(u, theta, options, cfg);
    const double pr = speaker_->prob(u, theta);
    return cfg.alpha * pa + (1.0 - cfg.alpha) * pr;
}

std::vector<double> PragmaticModel::s1_distribution(const RewardVector& theta, const OptionSet& options,
                                                    const PragmaticsConfig& cfg) const {
    cfg.validate();
    const auto ctx = refer_context(options);
    const auto opt = p_opt(theta, options, cfg.beta);
    const auto pr = speaker_->distribution(theta);
    std::vector<double> out(pr.size());
    for (std::size_t u = 0; u < out.size(); ++u) {
        double pa = 0.0;
        for (std::size_t j = 0; j < kNumOptions; ++j) pa += ctx.listener[u][j] / ctx.normalizer[j] * opt[j];
        out[u] = cfg.alpha * pa + (1.0 - cfg.alpha) * pr[u];
    }
    return out;
}

double PragmaticModel::marginalization_identity_check(const RewardVector& theta, const OptionSet& options,
                                                      const PragmaticsConfig& cfg) const {
    cfg.validate();
    const auto ctx = refer_context(options);
    const auto opt = p_opt(theta, options, cfg.beta);
    const auto pr_support = speaker_->distribution(theta);
    double worst = 0.0;
    for (std::size_t u = 0; u < support().size(); ++u) {
        const auto refer = p_refer(support()[u], options, ctx);
        // xi-level model: p(u | xi, theta, M) = alpha p(u | xi, M) + (1 - alpha) p(u | theta)
        double factorized = 0.0;
        for (std::size_t j = 0; j < kNumOptions; ++j)
            factorized += (cfg.alpha * refer[j] + (1.0 - cfg.alpha) * pr_support[u]) * opt[j];
        double pa = 0.0;
        for (std::size_t j = 0; j < kNumOptions; ++j) pa += refer[j] * opt[j];
        const double s1 = cfg.alpha * pa + (1.0 - cfg.alpha) * speaker_->prob(support()[u], theta);
        worst = std::max(worst, std::abs(factorized - s1));
    }
    return worst;
}

std::vector<double> PragmaticModel::likelihood(const Utterance& u, const OptionSet& options,
                                               const PragmaticsConfig& cfg, std::span<const std::uint32_t> points,
                                               Likelihood kind) const {
    cfg.validate();
    std::vector<std::uint32_t> all;
    if (points.empty()) {
        all.resize(kGridSize);
        for (std::uint32_t g = 0; g < kGridSize; ++g) all[g] = g;
        points = all;
    }
    std::vector<double> pr;
    if (kind != Likelihood::ActionOnly) {
        pr.resize(points.size());
        speaker_->prob_points(u, points, pr);
    }
    std::vector<double> out(points.size());
    if (kind == Likelihood::RewardOnly) {
        out = std::move(pr);
        return out;
    }
    const auto refer = p_refer(u, options);
    const auto contrib = reward_contrib(options);
    const auto& levels = grid_levels();
    const double alpha = cfg.alpha;
    parallel_for_chunks(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto opt = p_opt(rewards_at(contrib, levels[points[k]]), cfg.beta);
            double pa = 0.0;
            for (std::size_t j = 0; j < kNumOptions; ++j) pa += refer[j] * opt[j];
            out[k] = kind == Likelihood::ActionOnly ? pa : alpha * pa + (1.0 - alpha) * pr[k];
        }
    });
    return out;
}

RewardPosterior PragmaticModel::update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                                       const PragmaticsConfig& cfg, Likelihood kind) const {
    cfg.validate();
    if (cfg.inference == InferenceMode::Exact) {
        std::vector<std::uint32_t> points;
        if (!prior.is_dense()) {
            points.resize(prior.size());
            for (std::size_t k = 0; k < prior.size(); ++k) points[k] = prior.point(k);
        }
        return reweight(prior, likelihood(u, options, cfg, points, kind));
    }

    // Importance sampling: draw grid points from the proposal and weight by
    // prior / proposal times the likelihood.
    Rng rng(cfg.seed);
    std::vector<std::uint32_t> draws(cfg.n_samples);
    std::vector<double> weights(cfg.n_samples, 1.0);
    if (cfg.proposal == Proposal::Prior) {
        std::vector<double> cumulative(prior.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < prior.size(); ++k) cumulative[k] = (acc += prior.weight(k));
        for (auto& d : draws) {
            const double target = rng.uniform01() * acc;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
            if (it == cumulative.end()) --it;
            d = prior.point(static_cast<std::size_t>(it - cumulative.begin()));
        }
    } else {
        std::unordered_map<std::uint32_t, double> mass;
        if (!prior.is_dense())
            for (std::size_t k = 0; k < prior.size(); ++k) mass[prior.point(k)] += prior.weight(k);
        for (std::size_t k = 0; k < draws.size(); ++k) {
            draws[k] = static_cast<std::uint32_t>(rng.uniform_int(kGridSize));
            if (prior.is_dense()) {
                weights[k] = prior.weight(draws[k]);
            } else {
                auto it = mass.find(draws[k]);
                weights[k] = it == mass.end() ? 0.0 : it->second;
            }
        }
    }
    const auto lik = likelihood(u, options, cfg, draws, kind);
    double total = 0.0;
    for (std::size_t k = 0; k < draws.size(); ++k) total += (weights[k] *= lik[k]);
    if (!(total > 0.0)) {
        RewardPosterior same = prior;
        same.set_degenerate_update(true);
        return same;
    }
    return RewardPosterior::sampled(std::move(draws), std::move(weights));
}

RewardPosterior PragmaticModel::l2_update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                                          const PragmaticsConfig& cfg) const {
    return update(prior, u, options, cfg, Likelihood::S1);
}

RewardPosterior PragmaticModel::action_only_update(const RewardPosterior& prior, const Utterance& u,
                                                   const OptionSet& options, const PragmaticsConfig& cfg) const {
    return update(prior, u, options, cfg, Likelihood::ActionOnly);
}

RewardPosterior PragmaticModel::reward_only_update(const RewardPosterior& prior, const Utterance& u,
                                                   const OptionSet& options, const PragmaticsConfig& cfg) const {
    return update(prior, u, options, cfg, Likelihood::RewardOnly);
}

RewardPosterior PragmaticModel::sequential_update(const RewardPosterior& prior, std::span<const Round> rounds,
                                                  const PragmaticsConfig& cfg) const {
    RewardPosterior p = prior;
    PragmaticsConfig step = cfg;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        step.seed = derive_seed(cfg.seed, i);
        p = l2_update(p, rounds[i].utterance, rounds[i].options, step);
    }
    return p;
}

RewardPosterior demonstration_update(const RewardPosterior& prior, const OptionSet& options, std::size_t chosen,
                                     double beta) {
    if (chosen >= kNumOptions) throw std::invalid_argument("demonstration: option index out of range");
    const auto contrib = reward_contrib(options);
    const auto& levels = grid_levels();
    std::vector<double> lik(prior.size());
    for (std::size_t k = 0; k < prior.size(); ++k)
        lik[k] = p_opt(rewards_at(contrib, levels[prior.point(k)]), beta)[chosen];
    return reweight(prior, lik);
}

std::shared_ptr<PragmaticModel> make_pragmatic_model(std::span<const ModelBundle> bundles, UtteranceSet support) {
    if (bundles.empty()) throw std::invalid_argument("make_pragmatic_model: no model bundles");
    std::vector<std::shared_ptr<const Listener>> listeners;
    std::vector<std::shared_ptr<const LinearRewardSpeaker>> speakers;
    for (const auto& b : bundles) {
        if (!b.listener || !b.speaker) throw std::invalid_argument("make_pragmatic_model: incomplete bundle");
        listeners.push_back(b.listener);
        speakers.push_back(b.speaker);
    }
    std::shared_ptr<const Listener> listener =
        listeners.size() == 1 ? listeners[0] : std::make_shared<EnsembleListener>(std::move(listeners));
    auto grid = std::make_shared<RewardSpeakerGrid>(std::move(speakers), std::move(support));
    return std::make_shared<PragmaticModel>(std::move(listener), std::move(grid));
}

double max_marginal_tv(const Marginals& a, const Marginals& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        double tv = 0.0;
        for (std::size_t l = 0; l < kGridLevels; ++l) tv += std::abs(a[i][l] - b[i][l]);
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

}  // namespace flightpref
