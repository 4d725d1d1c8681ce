#include "flightpref/game.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace flightpref {

namespace {

json beta_json(double beta) { return std::isinf(beta) ? json("inf") : json(beta); }

double beta_from_json(const json& j) {
    if (j.is_string() && j.get<std::string>() == "inf") return kInfiniteBeta;
    return j.get<double>();
}

void advance_round(GameState& state) {
    if (state.round_index + 1 == kRoundsPerGame) {
        state.phase = Phase::Finished;
        return;
    }
    ++state.round_index;
    state.rounds.push_back(RoundRecord{state.setup.options[state.round_index], {}, std::nullopt, Outcome::NotApplicable, 0});
    state.phase = Phase::AwaitingAction;
}

}  // namespace

std::string_view phase_name(Phase p) {
    switch (p) {
        case Phase::AwaitingUtterance: return "awaiting_utterance";
        case Phase::AwaitingAction: return "awaiting_action";
        case Phase::Finished: return "finished";
    }
    return "finished";
}

std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Correct: return "correct";
        case Outcome::Incorrect: return "incorrect";
        case Outcome::NotApplicable: return "n/a";
    }
    return "n/a";
}

json to_json(const AssistantPolicy& policy) {
    const auto& c = policy.cfg;
    return json{{"confidence_threshold", policy.confidence_threshold},
                {"alpha", c.alpha},
                {"beta", beta_json(c.beta)},
                {"inference", c.inference == InferenceMode::Exact ? "exact" : "importance"},
                {"n_samples", c.n_samples},
                {"proposal", c.proposal == Proposal::Prior ? "prior" : "uniform"},
                {"seed", c.seed},
                {"demonstration", policy.demonstration}};
}

AssistantPolicy policy_from_json(const json& j) {
    AssistantPolicy p;
    p.confidence_threshold = j.at("confidence_threshold").get<double>();
    p.cfg.alpha = j.at("alpha").get<double>();
    p.cfg.beta = beta_from_json(j.at("beta"));
    p.cfg.inference = j.at("inference").get<std::string>() == "exact" ? InferenceMode::Exact : InferenceMode::Importance;
    p.cfg.n_samples = j.at("n_samples").get<std::size_t>();
    p.cfg.proposal = j.at("proposal").get<std::string>() == "prior" ? Proposal::Prior : Proposal::Uniform;
    p.cfg.seed = j.at("seed").get<std::uint64_t>();
    p.demonstration = j.at("demonstration").get<bool>();
    p.cfg.validate();
    return p;
}

GameSetup make_game_setup(std::string game_id, std::uint64_t seed, std::optional<RewardVector> theta) {
    GameSetup s;
    s.game_id = std::move(game_id);
    s.seed = seed;
    Rng rng(seed);
    const auto sampled = sample_reward(rng);
    s.theta_star = theta.value_or(sampled);
    for (auto& m : s.options) m = sample_option_set(rng);
    return s;
}

std::size_t GameState::count(Outcome o) const {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.outcome == o ? 1 : 0;
    return n;
}

std::size_t GameState::asks() const {
    std::size_t n = 0;
    for (const auto& r : rounds) n += r.action && r.action->kind == ActionKind::Ask ? 1 : 0;
    return n;
}

GameState start_game(GameSetup setup) {
    GameState s;
    s.rounds.push_back(RoundRecord{setup.options[0], {}, std::nullopt, Outcome::NotApplicable, 0});
    s.setup = std::move(setup);
    return s;
}

OptionDistribution option_optimality_prob(const RewardPosterior& posterior, const OptionSet& options) {
    std::array<std::array<std::array<double, kGridLevels>, kNumFeatures>, kNumOptions> contrib{};
    for (std::size_t j = 0; j < kNumOptions; ++j) {
        const auto phi = options[j].features();
        for (std::size_t i = 0; i < kNumFeatures; ++i)
            for (std::size_t l = 0; l < kGridLevels; ++l)
                contrib[j][i][l] = RewardVector::level_value(static_cast<std::uint8_t>(l)) * phi[i];
    }
    const auto& levels = grid_levels();
    OptionDistribution p{};
    for (std::size_t k = 0; k < posterior.size(); ++k) {
        const double w = posterior.weight(k);
        if (w == 0.0) continue;
        const auto& lv = levels[posterior.point(k)];
        std::array<double, kNumOptions> r{};
        for (std::size_t j = 0; j < kNumOptions; ++j)
            for (std::size_t i = 0; i < kNumFeatures; ++i) r[j] += contrib[j][i][lv[i]];
        p[optimal_option(r).index] += w;
    }
    return p;
}

void observe_utterance(GameState& state, const Utterance& u, const PragmaticModel& model, const AssistantPolicy& policy) {
    if (state.phase != Phase::AwaitingUtterance)
        throw PhaseError("an utterance is not expected now (phase " + std::string(phase_name(state.phase)) + ")");
    auto& round = state.rounds.back();
    PragmaticsConfig cfg = policy.cfg;
    cfg.seed = derive_seed(policy.cfg.seed ^ state.setup.seed, state.updates);
    state.posterior = model.l2_update(state.posterior, u, round.options, cfg);
    ++state.updates;
    round.utterances.push_back(u);
    if (!round.action)
        state.phase = Phase::AwaitingAction;
    else
        advance_round(state);
}

AssistantAction assistant_act(GameState& state, const AssistantPolicy& policy) {
    if (state.phase != Phase::AwaitingAction)
        throw PhaseError("the assistant cannot act now (phase " + std::string(phase_name(state.phase)) + ")");
    auto& round = state.rounds.back();
    AssistantAction action;
    action.confidence = option_optimality_prob(state.posterior, round.options);
    const auto best = optimal_option(action.confidence).index;
    if (policy.confidence_threshold < 1.0 && action.confidence[best] >= policy.confidence_threshold) {
        action.kind = ActionKind::Choose;
        action.index = best;
        const auto truth = optimal_option(state.setup.theta_star, round.options);
        const bool correct = std::find(truth.ties.begin(), truth.ties.end(), best) != truth.ties.end();
        round.action = action;
        round.outcome = correct ? Outcome::Correct : Outcome::Incorrect;
        round.points_delta = correct ? kCorrectPoints : kIncorrectPoints;
        state.score += round.points_delta;
        if (correct) {
            advance_round(state);
        } else {
            if (policy.demonstration)
                state.posterior = demonstration_update(state.posterior, round.options, truth.index, policy.cfg.beta);
            state.phase = Phase::AwaitingUtterance;
        }
    } else {
        action.kind = ActionKind::Ask;
        round.action = action;
        round.points_delta = kAskPoints;
        state.score += kAskPoints;
        state.phase = Phase::AwaitingUtterance;
    }
    return action;
}

// ------------------------------------------------------------ speakers

SyntheticSpeaker SyntheticSpeaker::s1_sampler(std::shared_ptr<const PragmaticModel> model, PragmaticsConfig cfg,
                                              std::uint64_t seed) {
    if (!model) throw std::invalid_argument("s1 sampler needs a pragmatic model");
    cfg.validate();
    SyntheticSpeaker s(seed);
    s.model_ = std::move(model);
    s.cfg_ = cfg;
    return s;
}

SyntheticSpeaker SyntheticSpeaker::scripted(const Grammar& grammar, std::uint64_t seed) {
    SyntheticSpeaker s(seed);
    s.grammar_ = &grammar;
    return s;
}

std::optional<Clause> SyntheticSpeaker::scripted_clause(const RewardVector& theta) {
    std::size_t top = 0;
    for (std::size_t i = 1; i < kNumFeatures; ++i)
        if (std::abs(theta.weight(i)) > std::abs(theta.weight(top))) top = i;
    const double w = theta.weight(top);
    if (w == 0.0) return std::nullopt;
    const auto f = static_cast<Feature>(top);
    Clause c;
    c.target = f;
    c.polarity = w * feature_orientation(f) > 0 ? Polarity::Positive : Polarity::Negative;
    c.degree = std::abs(w) == 1.0 ? Degree::Strong : Degree::Weak;
    return c;
}

Utterance SyntheticSpeaker::speak(const RewardVector& theta, const OptionSet& options) {
    if (model_) {
        const auto dist = model_->s1_distribution(theta, options, cfg_);
        return model_->support()[rng_.categorical(dist)];
    }
    const auto clause = scripted_clause(theta);
    if (!clause) return Utterance::from_text("any flight is fine");
    return grammar_->realize(SemanticForm{{*clause}, false}, rng_);
}

void step_round(GameState& state, const PragmaticModel& model, const AssistantPolicy& policy, SyntheticSpeaker& speaker) {
    if (state.finished()) throw PhaseError("the game is over");
    const std::size_t round = state.round_index;
    if (state.phase == Phase::AwaitingUtterance)
        observe_utterance(state, speaker.speak(state.setup.theta_star, state.current().options), model, policy);
    assistant_act(state, policy);
    if (state.phase == Phase::AwaitingUtterance && state.round_index == round)
        observe_utterance(state, speaker.speak(state.setup.theta_star, state.current().options), model, policy);
}

GameState simulate_game(GameSetup setup, const PragmaticModel& model, const AssistantPolicy& policy,
                        SyntheticSpeaker& speaker) {
    auto state = start_game(std::move(setup));
    while (!state.finished()) step_round(state, model, policy, speaker);
    return state;
}

Corpus synthetic_corpus(std::size_t games, SyntheticSpeaker& speaker, std::uint64_t seed, std::size_t rounds) {
    Corpus corpus;
    for (std::size_t g = 0; g < games; ++g) {
        Rng rng(derive_seed(seed, g));
        const auto theta = sample_reward(rng);
        const std::string id = "s" + std::to_string(seed) + "-" + std::to_string(g);
        for (std::size_t r = 0; r < rounds; ++r) {
            CorpusRound row;
            row.game_id = id;
            row.round = static_cast<int>(r);
            row.theta = theta;
            row.options = sample_option_set(rng);
            row.xi_star = optimal_option(theta, row.options).index;
            row.utterance = speaker.speak(theta, row.options);
            corpus.push_back(std::move(row));
        }
    }
    return corpus;
}

// ------------------------------------------------------------ serialization and replay

json state_json(const GameState& state) {
    json rounds = json::array();
    for (const auto& r : state.rounds) {
        json utts = json::array();
        for (const auto& u : r.utterances) utts.push_back(u.text());
        json action = nullptr;
        if (r.action) {
            action = json{{"kind", r.action->kind == ActionKind::Choose ? "choose" : "ask"}};
            if (r.action->kind == ActionKind::Choose) action["index"] = r.action->index;
            action["confidence"] = r.action->confidence;
        }
        rounds.push_back({{"options", option_features_json(r.options)},
                          {"utterances", utts},
                          {"action", action},
                          {"outcome", outcome_name(r.outcome)},
                          {"points_delta", r.points_delta}});
    }
    return json{{"v", kSchemaVersion},
                {"game_id", state.setup.game_id},
                {"seed", state.setup.seed},
                {"phase", phase_name(state.phase)},
                {"round_index", state.round_index},
                {"score", state.score},
                {"theta_star", state.setup.theta_star.weights()},
                {"counts", {{"correct", state.count(Outcome::Correct)},
                            {"incorrect", state.count(Outcome::Incorrect)},
                            {"asks", state.asks()}}},
                {"rounds", rounds},
                {"posterior", state.posterior.snapshot()}};
}

json create_event(const GameSetup& setup, const AssistantPolicy& policy) {
    json options = json::array();
    for (const auto& m : setup.options) options.push_back(option_features_json(m));
    return json{{"type", "create"},
                {"game_id", setup.game_id},
                {"seed", setup.seed},
                {"theta", setup.theta_star.weights()},
                {"options", options},
                {"policy", to_json(policy)}};
}

json utterance_event(const std::string& text) { return json{{"type", "utterance"}, {"text", text}}; }

json action_event() { return json{{"type", "action"}}; }

GameState replay(std::span<const json> events, const PragmaticModel& model, AssistantPolicy* policy_out) {
    if (events.empty() || events[0].value("type", "") != "create")
        throw std::invalid_argument("event log must start with a create event");
    const auto& c = events[0];
    GameSetup setup;
    setup.game_id = c.at("game_id").get<std::string>();
    setup.seed = c.at("seed").get<std::uint64_t>();
    setup.theta_star = RewardVector::from_weights(c.at("theta").get<FeatureVector>());
    const auto& options = c.at("options");
    if (!options.is_array() || options.size() != kRoundsPerGame)
        throw std::invalid_argument("create event needs one option set per round");
    for (std::size_t r = 0; r < kRoundsPerGame; ++r) setup.options[r] = option_set_from_features_json(options[r]);
    const auto policy = policy_from_json(c.at("policy"));
    auto state = start_game(std::move(setup));
    for (std::size_t i = 1; i < events.size(); ++i) {
        const auto type = events[i].value("type", "");
        if (type == "utterance")
            observe_utterance(state, Utterance::from_text(events[i].at("text").get<std::string>()), model, policy);
        else if (type == "action")
            assistant_act(state, policy);
        else
            throw std::invalid_argument("unknown event type at entry " + std::to_string(i));
    }
    if (policy_out) *policy_out = policy;
    return state;
}

std::vector<json> read_event_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read event log " + path.string());
    std::vector<json> events;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) events.push_back(json::parse(line));
    return events;
}

}  // namespace flightpref
