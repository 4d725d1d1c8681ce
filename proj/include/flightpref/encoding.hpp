#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flightpref/domain.hpp"
#include "flightpref/grammar.hpp"

namespace flightpref {

/// Sparse binary-valued feature vector, indices strictly increasing.
struct SparseFeatures {
    std::vector<std::uint32_t> index;
    std::vector<double> value;
};

/// Utterance features: token unigram indicators (with a shared UNK slot),
/// parsed clause indicators and a bias.
class UtteranceEncoder {
public:
    UtteranceEncoder() : UtteranceEncoder(std::vector<std::string>{}) {}
    explicit UtteranceEncoder(std::vector<std::string> vocabulary, const Grammar& grammar = Grammar::builtin());

    /// Vocabulary = sorted distinct tokens of `utterances`.
    static UtteranceEncoder build(std::span<const Utterance> utterances, const Grammar& grammar = Grammar::builtin());

    std::size_t dim() const { return vocab_.size() + 1 + kNumClauses + 1; }
    std::size_t unk_index() const { return vocab_.size(); }
    std::size_t clause_offset() const { return vocab_.size() + 1; }
    std::size_t bias_index() const { return dim() - 1; }

    SparseFeatures encode(const Utterance& u) const;

    const std::vector<std::string>& vocabulary() const { return vocab_; }
    const Grammar& grammar() const { return *grammar_; }

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::uint32_t> lookup_;
    const Grammar* grammar_;
};

/// Action-side code for the base listener: phi(flight).
inline constexpr std::size_t kListenerCodeDim = kNumFeatures;
/// Reward-side code: one-hot grid level per component plus bias.
inline constexpr std::size_t kRewardCodeDim = kNumFeatures * kGridLevels + 1;
/// Action-speaker code: phi(xi*), phi(xi*) - mean over the option set, bias.
inline constexpr std::size_t kActionCodeDim = 2 * kNumFeatures + 1;

/// Active indices of the reward code (9 entries, all with value 1).
std::array<std::uint32_t, kNumFeatures + 1> reward_code_indices(const RewardVector& theta);
std::array<double, kActionCodeDim> action_code(const OptionSet& options, std::size_t chosen);

}  // namespace flightpref
