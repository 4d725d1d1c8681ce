#pragma once

// Held-out accuracy, reward L2, multi-turn curves, oracle baselines and
// paired bootstrap tests over recorded or synthetic games.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flightpref/corpus.hpp"
#include "flightpref/pragmatics.hpp"

namespace flightpref {

/// Fraction of `n_sets` sampled option sets on which theta_hat and
/// theta_star pick the same option (lowest-index tie-break under both).
double held_out_accuracy(const FeatureVector& theta_hat, const RewardVector& theta_star, std::size_t n_sets, Rng& rng);

double l2_distance(const FeatureVector& a, const FeatureVector& b);

/// theta_star on k uniformly chosen components, 0 (the uniform mean) elsewhere.
FeatureVector oracle_k_baseline(const RewardVector& theta_star, int k, Rng& rng);

/// Two-sided paired bootstrap p-value for mean(a - b) != 0. The
/// differences are centered to impose the null and resampled with
/// replacement; p = (#{|resampled mean| >= |observed mean|} + 1) / (n + 1).
double paired_bootstrap(std::span<const double> a, std::span<const double> b, std::size_t n_resamples, Rng& rng);

/// Listener wrapper that, for a deterministic pseudo-random fraction of
/// (utterance, option set) pairs, rotates the output distribution so its
/// mass lands on other options.
class PerturbedListener final : public Listener {
public:
    PerturbedListener(std::shared_ptr<const Listener> base, double flip_rate, std::uint64_t seed);
    OptionDistribution prob(const Utterance& u, const OptionSet& options) const override;
    bool perturbed(const Utterance& u, const OptionSet& options) const;

private:
    std::uint64_t key(const Utterance& u, const OptionSet& options) const;

    std::shared_ptr<const Listener> base_;
    double flip_rate_;
    std::uint64_t seed_;
};

struct EvalModel {
    std::string name;
    PragmaticsConfig cfg;
    PragmaticModel::Likelihood likelihood = PragmaticModel::Likelihood::S1;
};

/// full (alpha = 0.5), action_only (alpha = 1), reward_only (alpha = 0).
std::vector<EvalModel> default_eval_models(const PragmaticsConfig& base);

struct EvalOptions {
    std::size_t held_out_sets = 1000;
    std::uint64_t seed = 0;
    /// Skip updates whose utterance the base listener maps to a
    /// non-optimal option under the true reward.
    bool skip_listener_errors = false;
};

/// One evaluation point: the end of a round.
struct EvalPoint {
    std::size_t game = 0;
    std::size_t round = 0;
    std::size_t utterances = 0;  // observed so far
    double accuracy = 0.0;
    double l2 = 0.0;
};

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
};

MeanStderr mean_stderr(std::span<const double> xs);

/// Utterance counts of five or more share the last bin.
inline constexpr std::size_t kCurveBins = 5;

struct CurvePoint {
    std::size_t utterances = 0;  // 1..kCurveBins
    std::size_t count = 0;
    MeanStderr accuracy;
    MeanStderr l2;
};

struct ModelResult {
    std::string name;
    std::vector<EvalPoint> points;
    MeanStderr accuracy;
    MeanStderr l2;
    std::vector<CurvePoint> curve;
    std::size_t skipped_updates = 0;

    std::vector<double> accuracies() const;
    std::vector<double> l2s() const;
};

/// Fills the aggregates and the curve from `points`.
void summarize(ModelResult& result);

struct Comparison {
    std::string a;
    std::string b;
    double mean_difference = 0.0;
    double p_value = 1.0;
};

struct EvalReport {
    std::vector<ModelResult> models;
    std::vector<Comparison> comparisons;
    json metadata = json::object();

    const ModelResult& model(const std::string& name) const;
};

/// Observes each game's rounds in order, updating a posterior per model,
/// and scores the posterior mean at the end of every round.
ModelResult run_model(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& spec,
                      const EvalOptions& options);
EvalReport run_models(std::span<const GameRecord> games, const PragmaticModel& model, std::span<const EvalModel> specs,
                      const EvalOptions& options);

/// Per evaluation point, the better of the two by held-out accuracy.
ModelResult switch_results(const ModelResult& a, const ModelResult& b, std::string name = "oracle_switch");
/// Runs both ablations and the switch. Without a reward-only model the
/// switch equals the action-only run.
EvalReport oracle_switch(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& action_only,
                         const std::optional<EvalModel>& reward_only, const EvalOptions& options);
/// The full model with and without updates on base-listener errors.
EvalReport known_action_ablation(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& full,
                                 const EvalOptions& options);

/// Paired bootstrap of accuracies of `a` against each other model.
void add_comparisons(EvalReport& report, const std::string& a, std::size_t n_resamples, std::uint64_t seed);

/// Mean held-out accuracy of oracle_k_baseline for k = 0..8 over `n_thetas` sampled rewards.
std::vector<MeanStderr> oracle_k_accuracies(std::size_t n_thetas, std::size_t n_sets, std::uint64_t seed);

json to_json(const EvalReport& report);
/// Plain-text table: one row per model, accuracy (%) and L2 with standard errors.
std::string format_table(const EvalReport& report, std::span<const MeanStderr> oracle_k = {});
/// round_index,model,accuracy,l2,stderr
std::string curves_csv(const EvalReport& report);

/// FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const json& j);

}  // namespace flightpref
