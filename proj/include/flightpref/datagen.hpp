#pragma once

// Rule-based speaker for synthetic training corpora. A nearsighted
// utterance singles out the optimal flight; a farsighted one also
// describes the reward, preferring its heaviest components.

#include <cstdint>
#include <vector>

#include "flightpref/corpus.hpp"
#include "flightpref/grammar.hpp"

namespace flightpref {

enum class SpeakerMode { Nearsighted, Farsighted };

class SemanticSpeaker {
public:
    explicit SemanticSpeaker(const Grammar& grammar = Grammar::builtin(), int max_clauses = 2);

    /// An enumerated utterance whose reading picks out the optimal option.
    /// Falls back to any reward-consistent utterance, then to a uniform draw.
    Utterance speak(const RewardVector& theta, const OptionSet& options, SpeakerMode mode, Rng& rng) const;

    const UtteranceSet& support() const { return support_; }

private:
    struct FormGroup {
        SemanticForm form;
        std::vector<std::size_t> utterances;
    };
    std::size_t pick_form(std::span<const double> weights, Rng& rng) const;

    UtteranceSet support_;
    std::vector<FormGroup> groups_;
};

struct DatagenConfig {
    std::size_t games = 300;
    int rounds = 6;
    /// Probability that an utterance is farsighted.
    double farsighted_prob = 0.5;
    int max_clauses = 2;
    std::uint64_t seed = 0;
};

/// Games with one utterance per round; game ids are "g<seed>-<n>".
Corpus generate_corpus(const DatagenConfig& config, const Grammar& grammar = Grammar::builtin());

}  // namespace flightpref
