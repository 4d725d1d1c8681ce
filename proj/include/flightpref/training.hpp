#pragma once

// Gradient-descent training of the base models: listener cross-entropy and
// the latent-variable speaker objective
//   L = -log( sigma(l) p_Sbase(u | theta) + (1 - sigma(l)) p_Sact(u | xi*, M) ).

#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flightpref/base_models.hpp"
#include "flightpref/corpus.hpp"

namespace flightpref {

struct TrainConfig {
    double listener_learning_rate = 2.0;
    double speaker_learning_rate = 2.0;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int max_epochs = 400;
    int patience = 25;
    double validation_fraction = 0.1;
    /// 0 = full batch.
    std::size_t batch_size = 0;
    double tau = LinearRewardSpeaker::kDefaultTemperature;
    std::size_t hard_negatives = 4;
    double initial_mixture_logit = 0.0;
    std::uint64_t seed = 0;
};

/// key = value lines; '#' starts a comment. Unknown keys throw.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainReport {
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    double final_validation_loss = 0.0;
    int epochs = 0;
    bool early_stopped = false;
    std::size_t train_examples = 0;
    std::size_t validation_examples = 0;
};

// ------------------------------------------------------------ listener loss

struct ListenerExample {
    SparseFeatures utterance;
    OptionSet options;
    std::size_t target = 0;
};

struct ListenerLoss {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // same shape as the weights
};

/// Mean of -log p_Lbase(target | u, M) plus (weight_decay / 2) ||V||^2.
ListenerLoss listener_loss(const Eigen::MatrixXd& weights, std::span<const ListenerExample> examples,
                           double weight_decay);

// ------------------------------------------------------------ speaker loss

struct SpeakerExample {
    std::size_t utterance = 0;          // index into SpeakerBatch::pool
    std::vector<std::size_t> extra;     // hard negatives not already in the shared set
    RewardVector theta;
    std::array<double, kActionCodeDim> action{};
};

/// Each example normalizes over `shared` plus its own extras.
struct SpeakerBatch {
    std::vector<SparseFeatures> pool;
    std::vector<std::size_t> shared;
    std::vector<SpeakerExample> examples;
};

struct SpeakerLoss {
    double loss = 0.0;
    Eigen::MatrixXd grad_reward;
    Eigen::MatrixXd grad_action;
    double grad_logit = 0.0;
    double mean_responsibility = 0.0;  // mean posterior p(lambda = 1 | u)
};

SpeakerLoss speaker_latent_loss(const Eigen::MatrixXd& reward_weights, const Eigen::MatrixXd& action_weights,
                                double mixture_logit, const SpeakerBatch& batch, double tau, double weight_decay);

/// Builds speaker examples for `rows`, with in-batch normalization plus up
/// to `hard_negative_count` hard negatives per example (seeded per row).
SpeakerBatch make_speaker_batch(std::span<const CorpusRound* const> rows, const UtteranceEncoder& encoder,
                                std::size_t hard_negative_count, std::uint64_t seed);

// ------------------------------------------------------------ training

/// Deterministic, order-independent validation membership of a row.
bool is_validation_row(const CorpusRound& row, double fraction, std::uint64_t seed);

struct ListenerTraining {
    std::shared_ptr<LinearListener> model;
    TrainReport report;
};

/// Throws std::invalid_argument on an empty corpus and std::runtime_error
/// if the loss becomes non-finite.
ListenerTraining train_listener(const Corpus& corpus, std::shared_ptr<const UtteranceEncoder> encoder,
                                const TrainConfig& config);

struct SpeakerTraining {
    std::shared_ptr<LinearRewardSpeaker> speaker;
    std::shared_ptr<LinearActionSpeaker> action_speaker;
    double mixture_logit = 0.0;
    TrainReport report;
};

SpeakerTraining train_speaker_latent(const Corpus& corpus, std::shared_ptr<const UtteranceEncoder> encoder,
                                     const TrainConfig& config);

/// Encoder from the corpus vocabulary, then both trainings.
ModelBundle train_bundle(const Corpus& corpus, const TrainConfig& config);

/// Top-1 accuracy of a listener against xi_star.
double listener_accuracy(const Listener& listener, const Corpus& corpus);

}  // namespace flightpref
