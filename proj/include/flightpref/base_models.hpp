#pragma once

// Base listener L_base, reward speaker S_base and action speaker S_act.
// Each scores by an inner product between a fixed code of the
// action/reward side and a learned linear projection of utterance
// features, normalized with a softmax.

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flightpref/domain.hpp"
#include "flightpref/encoding.hpp"
#include "flightpref/grammar.hpp"

namespace flightpref {

using OptionDistribution = std::array<double, kNumOptions>;

/// p(xi | u, M) over the three options.
class Listener {
public:
    virtual ~Listener() = default;
    virtual OptionDistribution prob(const Utterance& u, const OptionSet& options) const = 0;
};

class LinearListener final : public Listener {
public:
    LinearListener(std::shared_ptr<const UtteranceEncoder> encoder);
    LinearListener(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights);

    OptionDistribution prob(const Utterance& u, const OptionSet& options) const override;
    OptionDistribution prob_encoded(const SparseFeatures& e, const OptionSet& options) const;

    const Eigen::MatrixXd& weights() const { return weights_; }  // kListenerCodeDim x encoder dim
    Eigen::MatrixXd& weights() { return weights_; }
    const UtteranceEncoder& encoder() const { return *encoder_; }
    std::shared_ptr<const UtteranceEncoder> encoder_ptr() const { return encoder_; }

private:
    std::shared_ptr<const UtteranceEncoder> encoder_;
    Eigen::MatrixXd weights_;
};

/// Averages member listener probabilities.
class EnsembleListener final : public Listener {
public:
    explicit EnsembleListener(std::vector<std::shared_ptr<const Listener>> members);
    OptionDistribution prob(const Utterance& u, const OptionSet& options) const override;
    std::size_t size() const { return members_.size(); }

private:
    std::vector<std::shared_ptr<const Listener>> members_;
};

/// p_Sbase(u | theta) proportional to exp(code(theta) . W e(u) / tau).
class LinearRewardSpeaker {
public:
    static constexpr double kDefaultTemperature = 3.0;

    LinearRewardSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, double tau = kDefaultTemperature);
    LinearRewardSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights,
                        double tau = kDefaultTemperature);

    /// W e(u) / tau: the logit of u under theta is the sum of the 8 entries
    /// selected by theta's grid levels plus the trailing bias entry.
    std::array<double, kRewardCodeDim> logit_table(const Utterance& u) const;
    double logit(const RewardVector& theta, const Utterance& u) const;

    /// Distribution over `support`. Throws std::invalid_argument on an empty support.
    std::vector<double> prob(const RewardVector& theta, const UtteranceSet& support) const;

    double tau() const { return tau_; }
    const Eigen::MatrixXd& weights() const { return weights_; }  // kRewardCodeDim x encoder dim
    Eigen::MatrixXd& weights() { return weights_; }
    const UtteranceEncoder& encoder() const { return *encoder_; }

private:
    std::shared_ptr<const UtteranceEncoder> encoder_;
    Eigen::MatrixXd weights_;
    double tau_;
};

/// p_Sact(u | xi*, M) proportional to exp(code(xi*, M) . A e(u)). Training only.
class LinearActionSpeaker {
public:
    LinearActionSpeaker(std::shared_ptr<const UtteranceEncoder> encoder);
    LinearActionSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights);

    double logit(const OptionSet& options, std::size_t chosen, const Utterance& u) const;
    std::vector<double> prob(const OptionSet& options, std::size_t chosen, const UtteranceSet& support) const;

    const Eigen::MatrixXd& weights() const { return weights_; }  // kActionCodeDim x encoder dim
    Eigen::MatrixXd& weights() { return weights_; }

private:
    std::shared_ptr<const UtteranceEncoder> encoder_;
    Eigen::MatrixXd weights_;
};

OptionDistribution lbase_prob(const Listener& listener, const Utterance& u, const OptionSet& options);
std::vector<double> sbase_prob(const LinearRewardSpeaker& speaker, const RewardVector& theta, const UtteranceSet& support);
std::vector<double> sact_prob(const LinearActionSpeaker& speaker, const OptionSet& options, std::size_t chosen,
                              const UtteranceSet& support);

/// Softmax in place; returns log-sum-exp of the inputs.
double softmax_inplace(std::span<double> logits);

/// Arithmetic mean of distributions of equal length, renormalized to absorb
/// rounding. Throws std::invalid_argument if empty or lengths differ.
std::vector<double> ensemble_average(std::span<const std::vector<double>> distributions);

/// Attribute mentions swapped for distractors of the same category
/// (carrier names; "zero stops" / "one stop" / "two stops"). Up to k <= 4
/// distinct outputs, each differing from u in exactly one mention.
std::vector<Utterance> hard_negatives(const Utterance& u, std::size_t k, Rng& rng);

/// Trained artifact: encoder plus the three base models and the mixture logit.
struct ModelBundle {
    std::shared_ptr<const UtteranceEncoder> encoder;
    std::shared_ptr<LinearListener> listener;
    std::shared_ptr<LinearRewardSpeaker> speaker;
    std::shared_ptr<LinearActionSpeaker> action_speaker;
    double mixture_logit = 0.0;
    json metadata = json::object();

    static ModelBundle zeros(std::shared_ptr<const UtteranceEncoder> encoder);

    json to_json() const;
    static ModelBundle from_json(const json& j);
    void save(const std::filesystem::path& path) const;
    static ModelBundle load(const std::filesystem::path& path);
};

}  // namespace flightpref
