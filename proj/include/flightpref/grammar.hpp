#pragma once

// Controlled utterance language: clause fragments loaded from a template
// file, a longest-match parser, a realizer and corpus enumeration.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flightpref/domain.hpp"
#include "flightpref/rng.hpp"

namespace flightpref {

enum class Polarity : std::uint8_t { Positive = 0, Negative = 1 };
enum class Degree : std::uint8_t { Weak = 0, Strong = 1, Superlative = 2 };

/// Number of distinct clauses: carriers take weak/strong, scalars also superlative.
inline constexpr std::size_t kNumClauses = kNumCarriers * 4 + (kNumFeatures - kNumCarriers) * 6;

struct Clause {
    Polarity polarity = Polarity::Positive;
    Feature target = Feature::American;
    Degree degree = Degree::Weak;

    /// Dense id in [0, kNumClauses). Throws for a superlative carrier clause.
    std::size_t id() const;
    static Clause from_id(std::size_t id);
    bool valid() const { return !(is_carrier(target) && degree == Degree::Superlative); }
    std::string describe() const;

    friend bool operator==(const Clause&, const Clause&) = default;
};

/// Sign of theta_i that a positive-polarity clause on `f` asserts.
/// Carriers and arrival slack are +1; price, stops and longest stop are -1.
int feature_orientation(Feature f);

struct SemanticForm {
    std::vector<Clause> clauses;  // sorted by target, at most one per target
    bool oov = false;

    bool empty() const { return clauses.empty(); }
    friend bool operator==(const SemanticForm&, const SemanticForm&) = default;
};

json to_json(const SemanticForm& form);
SemanticForm semantic_form_from_json(const json& j);

struct Utterance {
    std::vector<std::string> tokens;
    std::string raw;

    /// Lowercases, strips , . ! ? and splits on whitespace.
    static Utterance from_text(std::string_view text);
    static Utterance from_tokens(std::vector<std::string> tokens);
    /// Tokens joined by single spaces.
    std::string text() const;

    friend bool operator==(const Utterance& a, const Utterance& b) { return a.tokens == b.tokens; }
};

/// Deduplicated utterances in lexicographic order of their text.
class UtteranceSet {
public:
    UtteranceSet() = default;
    explicit UtteranceSet(std::vector<Utterance> utterances);

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const Utterance& operator[](std::size_t i) const { return items_[i]; }
    std::span<const Utterance> items() const { return items_; }
    std::optional<std::size_t> find(const Utterance& u) const;
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    friend bool operator==(const UtteranceSet& a, const UtteranceSet& b) { return a.items_ == b.items_; }

private:
    std::vector<Utterance> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Fragment {
    Clause clause;
    std::vector<std::string> tokens;
};

class Grammar {
public:
    /// Parses template-file text. Throws std::invalid_argument with a line number on bad input.
    static Grammar from_text(std::string_view text);
    static Grammar load(const std::filesystem::path& path);
    /// The grammar shipped with the library (identical to data/grammar_v1.tsv).
    static const Grammar& builtin();
    static std::string_view builtin_text();

    int version() const { return version_; }
    std::span<const Fragment> fragments() const { return fragments_; }
    std::vector<const Fragment*> fragments_for(const Clause& c) const;
    bool is_filler(const std::string& token) const;

    /// Total: unknown tokens give an empty form with oov set.
    SemanticForm parse(const Utterance& u) const;

    /// Uniform over the template realizations of each clause; clauses are
    /// joined with "and" in feature order. Throws on an empty or invalid form.
    Utterance realize(const SemanticForm& form, Rng& rng) const;

    /// All grammar strings with <= max_clauses clauses and fewer than
    /// kMaxUtteranceTokens tokens. max_clauses must be 1 or 2.
    UtteranceSet enumerate(int max_clauses) const;

    static constexpr std::size_t kMaxUtteranceTokens = 8;

private:
    int version_ = 0;
    std::vector<Fragment> fragments_;
    std::vector<std::string> fillers_;
    // first token -> fragment indices, longest first
    std::unordered_map<std::string, std::vector<std::size_t>> by_first_token_;
};

/// Fraction of clauses whose polarity matches the sign of theta on their
/// target (strong needs |theta_i| = 1, weak and superlative |theta_i| >= 0.5).
/// Empty form -> 0.
double clause_reward_consistency(const SemanticForm& form, const RewardVector& theta);
bool clause_consistent(const Clause& c, const RewardVector& theta);

/// Rule-based reading of a form against an option set: carrier clauses
/// reward matching flights, scalar clauses reward the asserted direction,
/// weighted 1/2/4 for weak/strong/superlative.
std::array<double, kNumOptions> semantic_scores(const SemanticForm& form, const OptionSet& options);
/// Unique argmax of semantic_scores, if any.
std::optional<std::size_t> semantic_choice(const SemanticForm& form, const OptionSet& options);

}  // namespace flightpref
