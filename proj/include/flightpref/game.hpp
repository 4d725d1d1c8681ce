#pragma once

// FlightPref game engine: six rounds of three options, choose-or-ask
// assistant policy, scoring, synthetic speakers and an event log that
// replays a game exactly.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flightpref/corpus.hpp"
#include "flightpref/pragmatics.hpp"

namespace flightpref {

inline constexpr std::size_t kRoundsPerGame = 6;
inline constexpr int kCorrectPoints = 25;
inline constexpr int kIncorrectPoints = -100;
inline constexpr int kAskPoints = -20;

enum class Phase { AwaitingUtterance, AwaitingAction, Finished };
enum class ActionKind { Choose, Ask };
enum class Outcome { NotApplicable, Correct, Incorrect };

std::string_view phase_name(Phase p);
std::string_view outcome_name(Outcome o);

/// Raised when a request does not fit the current phase of the game.
class PhaseError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct AssistantAction {
    ActionKind kind = ActionKind::Ask;
    std::size_t index = 0;  // chosen option
    OptionDistribution confidence{};
};

struct RoundRecord {
    OptionSet options;
    std::vector<Utterance> utterances;
    std::optional<AssistantAction> action;
    Outcome outcome = Outcome::NotApplicable;
    int points_delta = 0;
};

struct AssistantPolicy {
    /// Choose when the best option's optimality probability reaches this;
    /// values >= 1 never choose.
    double confidence_threshold = 0.8;
    PragmaticsConfig cfg;
    /// On a wrong choice, also condition on the correct option being optimal.
    bool demonstration = false;
};

json to_json(const AssistantPolicy& policy);
AssistantPolicy policy_from_json(const json& j);

struct GameSetup {
    std::string game_id;
    std::uint64_t seed = 0;
    RewardVector theta_star;
    std::array<OptionSet, kRoundsPerGame> options{};
};

/// Options for all rounds from `seed`; theta_star too unless given.
GameSetup make_game_setup(std::string game_id, std::uint64_t seed, std::optional<RewardVector> theta = std::nullopt);

struct GameState {
    GameSetup setup;
    std::vector<RoundRecord> rounds;
    int score = 0;
    std::size_t round_index = 0;
    Phase phase = Phase::AwaitingUtterance;
    RewardPosterior posterior = RewardPosterior::uniform();
    std::size_t updates = 0;

    bool finished() const { return phase == Phase::Finished; }
    const RoundRecord& current() const { return rounds.back(); }
    std::size_t count(Outcome o) const;
    std::size_t asks() const;
};

GameState start_game(GameSetup setup);

/// P(option i is optimal) under the posterior, lowest-index tie-break.
OptionDistribution option_optimality_prob(const RewardPosterior& posterior, const OptionSet& options);

/// Records a user utterance and updates the posterior. The first utterance
/// of the game hands the turn to the assistant; an utterance after an ask
/// or a wrong choice closes the round. Throws PhaseError otherwise.
void observe_utterance(GameState& state, const Utterance& u, const PragmaticModel& model, const AssistantPolicy& policy);

/// The assistant's move: choose the most probable optimal option when
/// confident enough, otherwise ask. Throws PhaseError unless awaiting one.
AssistantAction assistant_act(GameState& state, const AssistantPolicy& policy);

/// Samples utterances for a reward and option set.
class SyntheticSpeaker {
public:
    /// u ~ p_S1(u | theta, M) over the model's support.
    static SyntheticSpeaker s1_sampler(std::shared_ptr<const PragmaticModel> model, PragmaticsConfig cfg,
                                       std::uint64_t seed);
    /// Realizes the clause for the component with the largest |theta_i|.
    static SyntheticSpeaker scripted(const Grammar& grammar, std::uint64_t seed);

    Utterance speak(const RewardVector& theta, const OptionSet& options);
    /// The scripted speaker's clause, or nullopt for the zero reward.
    static std::optional<Clause> scripted_clause(const RewardVector& theta);

private:
    SyntheticSpeaker(std::uint64_t seed) : rng_(seed) {}

    std::shared_ptr<const PragmaticModel> model_;
    PragmaticsConfig cfg_;
    const Grammar* grammar_ = nullptr;
    Rng rng_;
};

/// Plays one round: the opening utterance if pending, the assistant's
/// action, and the follow-up utterance after an ask or a wrong choice.
void step_round(GameState& state, const PragmaticModel& model, const AssistantPolicy& policy, SyntheticSpeaker& speaker);
GameState simulate_game(GameSetup setup, const PragmaticModel& model, const AssistantPolicy& policy,
                        SyntheticSpeaker& speaker);

/// `games` six-round games with one speaker utterance per round.
Corpus synthetic_corpus(std::size_t games, SyntheticSpeaker& speaker, std::uint64_t seed,
                        std::size_t rounds = kRoundsPerGame);

/// Full state; serialization is deterministic.
json state_json(const GameState& state);

// Event log: one JSON object per line.
json create_event(const GameSetup& setup, const AssistantPolicy& policy);
json utterance_event(const std::string& text);
json action_event();

/// Rebuilds a game from its events. Throws std::invalid_argument on a log
/// that does not start with a create event.
GameState replay(std::span<const json> events, const PragmaticModel& model, AssistantPolicy* policy = nullptr);
std::vector<json> read_event_log(const std::filesystem::path& path);

}  // namespace flightpref
