#include "flightpref/corpus.hpp"

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace flightpref {

json corpus_row_json(const CorpusRound& row, const Grammar& grammar) {
    json j;
    j["v"] = kSchemaVersion;
    j["game_id"] = row.game_id;
    j["round"] = row.round;
    j["theta"] = row.theta.weights();
    j["options"] = option_features_json(row.options);
    j["utterance"] = row.utterance.text();
    j["tokens"] = row.utterance.tokens;
    j["form"] = to_json(grammar.parse(row.utterance));
    j["xi_star"] = row.xi_star;
    return j;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& row : corpus) out << corpus_row_json(row).dump() << '\n';
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus " + path.string());
    write_corpus(out, corpus);
}

void write_utterance_corpus(std::ostream& out, const UtteranceSet& set, const Grammar& grammar) {
    for (const auto& u : set) {
        json j;
        j["tokens"] = u.tokens;
        j["form"] = to_json(grammar.parse(u));
        out << j.dump() << '\n';
    }
}

IngestResult ingest_corpus(std::istream& in) {
    IngestResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            result.rejected.push_back({line_no, std::string("malformed JSON: ") + e.what()});
            continue;
        }
        if (!j.is_object()) {
            result.rejected.push_back({line_no, "row is not an object"});
            continue;
        }
        if (!j.contains("v")) {
            result.rejected.push_back({line_no, "missing schema version"});
            continue;
        }
        if (j.at("v") != kSchemaVersion) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": schema version mismatch " + j.at("v").dump());
        }
        try {
            CorpusRound row;
            row.game_id = j.at("game_id").get<std::string>();
            row.round = j.at("round").get<int>();
            if (row.round < 0) throw std::invalid_argument("round must be nonnegative");
            const auto& theta = j.at("theta");
            if (!theta.is_array() || theta.size() != kNumFeatures) throw std::invalid_argument("theta must have 8 weights");
            row.theta = RewardVector::from_weights(theta.get<FeatureVector>());
            row.options = option_set_from_features_json(j.at("options"));
            row.utterance = Utterance::from_text(j.at("utterance").get<std::string>());
            const auto xi = j.at("xi_star").get<long long>();
            if (xi < 0 || xi >= static_cast<long long>(kNumOptions)) throw std::invalid_argument("xi_star out of range");
            row.xi_star = static_cast<std::size_t>(xi);
            if (row.xi_star != optimal_option(row.theta, row.options).index)
                throw std::invalid_argument("xi_star is not the lowest-index optimal option");
            result.corpus.push_back(std::move(row));
        } catch (const std::exception& e) {
            result.rejected.push_back({line_no, e.what()});
        }
    }
    return result;
}

IngestResult ingest_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus " + path.string());
    return ingest_corpus(in);
}

std::vector<GameRecord> group_games(const Corpus& corpus) {
    std::vector<GameRecord> games;
    std::map<std::string, std::size_t> index;
    for (const auto& row : corpus) {
        auto [it, inserted] = index.emplace(row.game_id, games.size());
        if (inserted) {
            GameRecord g;
            g.game_id = row.game_id;
            g.theta = row.theta;
            games.push_back(std::move(g));
        }
        auto& g = games[it->second];
        if (static_cast<std::size_t>(row.round) >= g.rounds.size()) g.rounds.resize(static_cast<std::size_t>(row.round) + 1);
        g.rounds[static_cast<std::size_t>(row.round)].push_back(row);
    }
    return games;
}

}  // namespace flightpref
