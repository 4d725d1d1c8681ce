#include "flightpref/datagen.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace flightpref {

SemanticSpeaker::SemanticSpeaker(const Grammar& grammar, int max_clauses) : support_(grammar.enumerate(max_clauses)) {
    std::map<std::vector<std::size_t>, std::size_t> by_form;
    for (std::size_t u = 0; u < support_.size(); ++u) {
        const auto form = grammar.parse(support_[u]);
        if (form.oov || form.empty()) continue;
        std::vector<std::size_t> key;
        for (const auto& c : form.clauses) key.push_back(c.id());
        auto [it, inserted] = by_form.try_emplace(key, groups_.size());
        if (inserted) groups_.push_back({form, {}});
        groups_[it->second].utterances.push_back(u);
    }
    if (groups_.empty()) throw std::invalid_argument("semantic speaker: grammar produced no utterances");
}

std::size_t SemanticSpeaker::pick_form(std::span<const double> weights, Rng& rng) const {
    return rng.categorical(weights);
}

Utterance SemanticSpeaker::speak(const RewardVector& theta, const OptionSet& options, SpeakerMode mode,
                                 Rng& rng) const {
    const std::size_t target = optimal_option(theta, options).index;
    std::vector<double> identifying(groups_.size()), describing(groups_.size()), consistent(groups_.size());
    double total_identifying = 0.0, total_describing = 0.0, total_consistent = 0.0;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        const auto& form = groups_[g].form;
        const bool identifies = semantic_choice(form, options) == target;
        const bool fits = clause_reward_consistency(form, theta) == 1.0;
        double importance = 0.0;
        for (const auto& c : form.clauses) importance += std::abs(theta.weight(static_cast<std::size_t>(c.target)));
        // Single clauses and pairs get equal total mass.
        const double size_weight = 1.0 / static_cast<double>(form.clauses.size() * form.clauses.size());
        identifying[g] = identifies ? size_weight : 0.0;
        describing[g] = identifies && fits ? importance * importance * size_weight : 0.0;
        consistent[g] = fits ? importance * importance * size_weight : 0.0;
        total_identifying += identifying[g];
        total_describing += describing[g];
        total_consistent += consistent[g];
    }
    std::size_t g;
    if (mode == SpeakerMode::Farsighted && total_describing > 0.0) {
        g = pick_form(describing, rng);
    } else if (total_identifying > 0.0) {
        g = pick_form(identifying, rng);
    } else if (total_consistent > 0.0) {
        g = pick_form(consistent, rng);
    } else {
        return support_[static_cast<std::size_t>(rng.uniform_int(support_.size()))];
    }
    const auto& members = groups_[g].utterances;
    return support_[members[static_cast<std::size_t>(rng.uniform_int(members.size()))]];
}

Corpus generate_corpus(const DatagenConfig& config, const Grammar& grammar) {
    if (config.rounds < 1) throw std::invalid_argument("datagen: rounds must be positive");
    if (!(config.farsighted_prob >= 0.0 && config.farsighted_prob <= 1.0))
        throw std::invalid_argument("datagen: farsighted_prob must lie in [0, 1]");
    const SemanticSpeaker speaker(grammar, config.max_clauses);
    Corpus corpus;
    corpus.reserve(config.games * static_cast<std::size_t>(config.rounds));
    for (std::size_t game = 0; game < config.games; ++game) {
        Rng rng(derive_seed(config.seed, game));
        const auto theta = sample_reward(rng);
        const std::string id = "g" + std::to_string(config.seed) + "-" + std::to_string(game);
        for (int r = 0; r < config.rounds; ++r) {
            CorpusRound row;
            row.game_id = id;
            row.round = r;
            row.theta = theta;
            do {
                row.options = sample_option_set(rng);
            } while (row.options.has_duplicates());
            row.xi_star = optimal_option(theta, row.options).index;
            const auto mode = rng.bernoulli(config.farsighted_prob) ? SpeakerMode::Farsighted : SpeakerMode::Nearsighted;
            row.utterance = speaker.speak(theta, row.options, mode, rng);
            corpus.push_back(std::move(row));
        }
    }
    return corpus;
}

}  // namespace flightpref
