#include <doctest.h>

#include <cctype>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "flightpref/grammar.hpp"

using namespace flightpref;

namespace {

SemanticForm form(std::initializer_list<Clause> clauses) { return SemanticForm{clauses, false}; }

Clause clause(Polarity p, Feature f, Degree d) { return Clause{p, f, d}; }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Counts grammar strings straight from the template file: every clause
// template, and every pair of templates on distinct targets in feature
// order joined by "and", keeping fewer than 8 tokens.
std::set<std::string> oracle_strings(const std::string& text, int max_clauses) {
    const std::vector<std::string> carriers{"american", "delta", "jetblue", "southwest"};
    const std::vector<std::string> scalars{"price", "stops", "longest_stop", "arrival_slack"};
    std::vector<std::pair<int, std::string>> templates;  // (target rank, surface)
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        const std::string lhs = line.substr(0, tab), rhs = line.substr(tab + 1);
        std::istringstream head(lhs);
        std::string pol, target;
        head >> pol >> target;
        if (pol != "+" && pol != "-") continue;
        if (target == "{carrier}") {
            for (int c = 0; c < 4; ++c) {
                std::string s = rhs;
                s.replace(s.find("{carrier}"), 9, carriers[c]);
                templates.emplace_back(c, s);
            }
        } else {
            for (int k = 0; k < 4; ++k)
                if (scalars[k] == target) templates.emplace_back(4 + k, rhs);
        }
    }
    auto tokens = [](const std::string& s) {
        std::istringstream in(s);
        int n = 0;
        std::string w;
        while (in >> w) ++n;
        return n;
    };
    std::set<std::string> out;
    std::function<void(int, std::string, int, int)> rec = [&](int last, std::string acc, int ntok, int depth) {
        if (depth > 0 && ntok < 8) out.insert(acc);
        if (depth == max_clauses) return;
        for (const auto& [rank, surface] : templates) {
            if (rank <= last) continue;
            const int extra = tokens(surface) + (depth > 0 ? 1 : 0);
            if (ntok + extra >= 8) continue;
            rec(rank, depth > 0 ? acc + " and " + surface : surface, ntok + extra, depth + 1);
        }
    };
    rec(-1, "", 0, 0);
    return out;
}

}  // namespace

TEST_CASE("paper examples parse") {
    const auto& g = Grammar::builtin();
    CHECK(g.parse(Utterance::from_text("the jetblue flight")) ==
          form({clause(Polarity::Positive, Feature::JetBlue, Degree::Weak)}));
    const auto cheapest = g.parse(Utterance::from_text("cheapest one please"));
    CHECK(cheapest == form({clause(Polarity::Positive, Feature::Price, Degree::Superlative)}));
    // positive price clauses point toward lower prices
    CHECK(feature_orientation(Feature::Price) == -1);
    CHECK(g.parse(Utterance::from_text("anything but american")) ==
          form({clause(Polarity::Negative, Feature::American, Degree::Strong)}));
}

TEST_CASE("parse is total and flags out-of-vocabulary input") {
    const auto& g = Grammar::builtin();
    for (const char* s : {"", "zzz", "cheap zzz", "123 flights", "and and", "the the the"}) {
        const auto f = g.parse(Utterance::from_text(s));
        CHECK(f.clauses.empty());
    }
    CHECK(g.parse(Utterance::from_text("qwerty")).oov);
    CHECK(g.parse(Utterance::from_text("Cheap, please!")) ==
          form({clause(Polarity::Positive, Feature::Price, Degree::Weak)}));
}

TEST_CASE("tokenizer lowercases and strips punctuation") {
    const auto u = Utterance::from_text("  The JetBlue flight, please! ");
    CHECK(u.tokens == std::vector<std::string>{"the", "jetblue", "flight", "please"});
    CHECK(u.text() == "the jetblue flight please");
}

TEST_CASE("realize samples templates and round-trips") {
    const auto& g = Grammar::builtin();
    Rng rng(4);
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i)
        seen.insert(g.realize(form({clause(Polarity::Positive, Feature::Delta, Degree::Weak)}), rng).text());
    CHECK(seen == std::set<std::string>{"delta", "the delta flight", "i like delta"});

    Rng a(8), b(8);
    const auto f = form({clause(Polarity::Negative, Feature::Stops, Degree::Strong),
                         clause(Polarity::Positive, Feature::ArrivalSlack, Degree::Weak)});
    CHECK(g.realize(f, a) == g.realize(f, b));
    CHECK_THROWS_AS(g.realize(SemanticForm{}, a), std::invalid_argument);
}

TEST_CASE("round trip on every enumerated utterance") {
    const auto& g = Grammar::builtin();
    Rng rng(10);
    for (const auto& u : g.enumerate(2)) {
        const auto f = g.parse(u);
        REQUIRE_FALSE(f.oov);
        REQUIRE_FALSE(f.clauses.empty());
        CHECK(g.parse(g.realize(f, rng)) == f);
    }
}

TEST_CASE("enumeration matches an independent template counter") {
    const auto text = read_file(FLIGHTPREF_SOURCE_DIR "/data/grammar_v1.tsv");
    CHECK(text == std::string(Grammar::builtin_text()));
    for (int k : {1, 2}) {
        const auto set = Grammar::builtin().enumerate(k);
        const auto oracle = oracle_strings(text, k);
        CHECK(set.size() == oracle.size());
        std::set<std::string> got;
        for (const auto& u : set) got.insert(u.text());
        CHECK(got == oracle);
    }
}

TEST_CASE("enumerated utterances are short, digit-free, unique and sorted") {
    const auto set = Grammar::builtin().enumerate(2);
    std::string prev;
    for (const auto& u : set) {
        CHECK(u.tokens.size() < 8);
        for (const auto& t : u.tokens)
            for (char c : t) CHECK_FALSE(std::isdigit(static_cast<unsigned char>(c)));
        CHECK(prev < u.text());
        prev = u.text();
    }
}

TEST_CASE("single-clause enumeration covers every clause") {
    const auto& g = Grammar::builtin();
    std::set<std::size_t> ids;
    for (const auto& u : g.enumerate(1)) {
        const auto f = g.parse(u);
        REQUIRE(f.clauses.size() == 1);
        ids.insert(f.clauses[0].id());
    }
    CHECK(ids.size() == kNumClauses);
    for (std::size_t id = 0; id < kNumClauses; ++id) {
        const auto c = Clause::from_id(id);
        CHECK(c.id() == id);
        CHECK_FALSE(g.fragments_for(c).empty());
    }
}

TEST_CASE("clause reward consistency") {
    auto theta_with = [](Feature f, double w) {
        FeatureVector v{};
        v[static_cast<std::size_t>(f)] = w;
        return RewardVector::from_weights(v);
    };
    const auto love_jetblue = form({clause(Polarity::Positive, Feature::JetBlue, Degree::Strong)});
    CHECK(clause_reward_consistency(love_jetblue, theta_with(Feature::JetBlue, 1)) == 1.0);
    CHECK(clause_reward_consistency(love_jetblue, theta_with(Feature::JetBlue, -1)) == 0.0);
    CHECK(clause_reward_consistency(love_jetblue, theta_with(Feature::JetBlue, 0.5)) == 0.0);
    CHECK(clause_reward_consistency(SemanticForm{}, theta_with(Feature::JetBlue, 1)) == 0.0);

    const auto mixed = form({clause(Polarity::Positive, Feature::JetBlue, Degree::Weak),
                             clause(Polarity::Positive, Feature::Price, Degree::Weak)});
    // cheap asserts a negative price weight
    CHECK(clause_reward_consistency(mixed, RewardVector::from_weights({0, 0, 0.5, 0, 0.5, 0, 0, 0})) == 0.5);
    CHECK(clause_reward_consistency(mixed, RewardVector::from_weights({0, 0, 0.5, 0, -0.5, 0, 0, 0})) == 1.0);
}

TEST_CASE("semantic choice picks the described option") {
    OptionSet m;
    m.flights = {Flight{Carrier::Delta, 0.1, 0, 0.5, 0.5}, Flight{Carrier::JetBlue, 0.9, 0.5, 0.5, 0.5},
                 Flight{Carrier::Delta, 0.5, 1, 0.5, 0.5}};
    const auto& g = Grammar::builtin();
    CHECK(semantic_choice(g.parse(Utterance::from_text("cheapest")), m) == 0u);
    CHECK(semantic_choice(g.parse(Utterance::from_text("jetblue")), m) == 1u);
    CHECK(semantic_choice(g.parse(Utterance::from_text("most stops")), m) == 2u);
    CHECK_FALSE(semantic_choice(g.parse(Utterance::from_text("short layovers")), m).has_value());
}

TEST_CASE("grammar loading reports line numbers") {
    try {
        Grammar::from_text("version\t1\n+ price weak\tcheap\n+ nowhere weak\tfoo\n");
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    const auto g = Grammar::from_text("version\t1\n+ price weak\tcheap\n");
    CHECK(g.enumerate(1).size() == 1);
}

TEST_CASE("utterance set deduplicates") {
    UtteranceSet set({Utterance::from_text("b"), Utterance::from_text("a"), Utterance::from_text("b")});
    CHECK(set.size() == 2);
    CHECK(set[0].text() == "a");
    CHECK(set.find(Utterance::from_text("b")) == 1u);
    CHECK_FALSE(set.find(Utterance::from_text("c")).has_value());
}

TEST_CASE("semantic form json round trip") {
    const auto f = form({clause(Polarity::Negative, Feature::Southwest, Degree::Strong),
                         clause(Polarity::Positive, Feature::LongestStop, Degree::Superlative)});
    CHECK(semantic_form_from_json(to_json(f)) == f);
}
