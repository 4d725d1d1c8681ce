#pragma once

// Corpus rows (utterance, option set, reward, optimal option) and the v1
// JSONL schema shared by datagen, training, evaluation and ingestion.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "flightpref/domain.hpp"
#include "flightpref/grammar.hpp"

namespace flightpref {

struct CorpusRound {
    std::string game_id;
    int round = 0;
    RewardVector theta;
    OptionSet options;
    Utterance utterance;
    std::size_t xi_star = 0;
};

using Corpus = std::vector<CorpusRound>;

/// {"v","game_id","round","theta","options","utterance","tokens","form","xi_star"}
json corpus_row_json(const CorpusRound& row, const Grammar& grammar = Grammar::builtin());
void write_corpus(std::ostream& out, const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// {"tokens": [...], "form": {...}} per utterance.
void write_utterance_corpus(std::ostream& out, const UtteranceSet& set, const Grammar& grammar = Grammar::builtin());

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    Corpus corpus;
    std::vector<RejectedRow> rejected;
};

/// Rows failing validation (bad JSON, wrong shapes, off-grid theta,
/// xi_star out of range or not the lowest-index optimum) are skipped and
/// reported with their 1-based line number. Throws std::runtime_error if
/// the file is unreadable and std::invalid_argument on a "v" other than v1.
IngestResult ingest_corpus(const std::filesystem::path& path);
IngestResult ingest_corpus(std::istream& in);

/// Rounds grouped by game_id in first-appearance order.
struct GameRecord {
    std::string game_id;
    RewardVector theta;
    /// One entry per round index; each holds the utterances observed in it.
    std::vector<std::vector<CorpusRound>> rounds;
};

std::vector<GameRecord> group_games(const Corpus& corpus);

}  // namespace flightpref
