#pragma once

// Pragmatic speaker S1 and listener L2:
//   p_S1(u | theta, M)  = alpha p_action(u | theta, M) + (1 - alpha) p_reward(u | theta)
//   p_action(u | theta, M) = sum_xi p_refer(u | xi, M) p_opt(xi | theta, M)
//   p_refer(u | xi, M)  proportional to p_Lbase(xi | u, M) over the utterance support
//   p_opt(xi | theta, M) proportional to exp(beta r_theta(xi))
//   p_L2(theta | u, M)  proportional to p_S1(u | theta, M) p(theta)

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "flightpref/base_models.hpp"
#include "flightpref/posterior.hpp"

namespace flightpref {

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

enum class InferenceMode { Exact, Importance };
enum class Proposal { Prior, Uniform };

struct PragmaticsConfig {
    double alpha = 0.5;
    double beta = kInfiniteBeta;
    InferenceMode inference = InferenceMode::Exact;
    std::size_t n_samples = 200000;
    Proposal proposal = Proposal::Prior;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument unless alpha in [0,1], beta >= 0, n_samples >= 1.
    void validate() const;
};

/// p_opt over the options given their rewards. beta = +inf gives uniform
/// mass on the argmax tie-set.
OptionDistribution p_opt(const std::array<double, kNumOptions>& rewards, double beta);
OptionDistribution p_opt(const RewardVector& theta, const OptionSet& options, double beta);

/// p_reward(u | theta) = ensemble mean of reward speakers, each normalized
/// over a fixed utterance support. Log-normalizers for every grid point are
/// computed once at construction.
class RewardSpeakerGrid {
public:
    RewardSpeakerGrid(std::vector<std::shared_ptr<const LinearRewardSpeaker>> members, UtteranceSet support);

    const UtteranceSet& support() const { return support_; }
    std::size_t members() const { return members_.size(); }
    double log_normalizer(std::size_t member, std::uint32_t grid_index) const { return log_z_[member][grid_index]; }

    double prob(const Utterance& u, const RewardVector& theta) const;
    /// p_reward(u | theta) for each grid index in `points`.
    void prob_points(const Utterance& u, std::span<const std::uint32_t> points, std::span<double> out) const;
    /// p_reward(u | theta) for every grid point, indexed by grid index.
    void prob_grid(const Utterance& u, std::span<double> out) const;
    /// Distribution over the support.
    std::vector<double> distribution(const RewardVector& theta) const;

private:
    using Table = std::array<double, kRewardCodeDim>;
    std::vector<Table> tables_for(const Utterance& u) const;

    std::vector<std::shared_ptr<const LinearRewardSpeaker>> members_;
    UtteranceSet support_;
    std::vector<std::vector<Table>> support_tables_;  // [member][utterance]
    std::vector<std::vector<double>> log_z_;          // [member][grid index]
};

/// Listener outputs over the support for one option set; the p_refer normalizers.
struct ReferContext {
    std::vector<OptionDistribution> listener;  // per support utterance
    std::array<double, kNumOptions> normalizer{};
};

class PragmaticModel {
public:
    PragmaticModel(std::shared_ptr<const Listener> listener, std::shared_ptr<const RewardSpeakerGrid> speaker);

    const UtteranceSet& support() const { return speaker_->support(); }
    const Listener& listener() const { return *listener_; }
    const RewardSpeakerGrid& reward_speaker() const { return *speaker_; }

    ReferContext refer_context(const OptionSet& options) const;

    /// p_refer(u | xi, M) for all three xi. Throws on an empty support.
    std::array<double, kNumOptions> p_refer(const Utterance& u, const OptionSet& options) const;
    std::array<double, kNumOptions> p_refer(const Utterance& u, const OptionSet& options, const ReferContext& ctx) const;
    double p_refer(const Utterance& u, std::size_t xi, const OptionSet& options) const;

    double p_action(const Utterance& u, const RewardVector& theta, const OptionSet& options,
                    const PragmaticsConfig& cfg) const;
    double p_reward(const Utterance& u, const RewardVector& theta) const { return speaker_->prob(u, theta); }
    double s1_prob(const Utterance& u, const RewardVector& theta, const OptionSet& options,
                   const PragmaticsConfig& cfg) const;
    /// S1 over the support.
    std::vector<double> s1_distribution(const RewardVector& theta, const OptionSet& options,
                                        const PragmaticsConfig& cfg) const;

    /// Max over the support of |p(u | theta, M) via the xi-level factorization
    /// sum_xi [alpha p(u|xi,M) + (1-alpha) p(u|theta)] p_opt(xi) minus s1_prob|.
    double marginalization_identity_check(const RewardVector& theta, const OptionSet& options,
                                          const PragmaticsConfig& cfg) const;

    /// Which likelihood an update multiplies in.
    enum class Likelihood { S1, ActionOnly, RewardOnly };

    /// Likelihood values at the given grid points (all points when empty).
    std::vector<double> likelihood(const Utterance& u, const OptionSet& options, const PragmaticsConfig& cfg,
                                   std::span<const std::uint32_t> points, Likelihood kind = Likelihood::S1) const;

    /// Posterior update with p_S1. A likelihood that is zero on the whole
    /// prior support returns the prior with degenerate_update() set.
    RewardPosterior l2_update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                              const PragmaticsConfig& cfg) const;
    /// Same update with p_action (resp. p_reward) alone.
    RewardPosterior action_only_update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                                       const PragmaticsConfig& cfg) const;
    RewardPosterior reward_only_update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                                       const PragmaticsConfig& cfg) const;

    struct Round {
        Utterance utterance;
        OptionSet options;
    };
    RewardPosterior sequential_update(const RewardPosterior& prior, std::span<const Round> rounds,
                                      const PragmaticsConfig& cfg) const;

private:
    RewardPosterior update(const RewardPosterior& prior, const Utterance& u, const OptionSet& options,
                           const PragmaticsConfig& cfg, Likelihood kind) const;

    std::shared_ptr<const Listener> listener_;
    std::shared_ptr<const RewardSpeakerGrid> speaker_;
};

/// Multiplies a posterior by p_opt(chosen | theta, M): the update from an
/// observed (demonstrated) choice.
RewardPosterior demonstration_update(const RewardPosterior& prior, const OptionSet& options, std::size_t chosen,
                                     double beta);

/// Pragmatic model over `support` from one or more trained bundles; the
/// listeners and reward speakers of several bundles are ensembled.
std::shared_ptr<PragmaticModel> make_pragmatic_model(std::span<const ModelBundle> bundles, UtteranceSet support);

/// Total variation distance between two marginal tables, max over features.
double max_marginal_tv(const Marginals& a, const Marginals& b);

}  // namespace flightpref
