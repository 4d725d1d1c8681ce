#include "flightpref/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flightpref {

namespace {

#include "grammar_text.inc"  // defines kBuiltinGrammarText

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::optional<Feature> feature_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        if (feature_name(static_cast<Feature>(i)) == name) return static_cast<Feature>(i);
    }
    return std::nullopt;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------- Clause

std::size_t Clause::id() const {
    if (!valid()) throw std::invalid_argument("superlative carrier clause has no id");
    const auto t = static_cast<std::size_t>(target);
    const auto p = static_cast<std::size_t>(polarity);
    const auto d = static_cast<std::size_t>(degree);
    if (is_carrier(target)) return t * 4 + p * 2 + d;
    return kNumCarriers * 4 + (t - kNumCarriers) * 6 + p * 3 + d;
}

Clause Clause::from_id(std::size_t id) {
    if (id >= kNumClauses) throw std::invalid_argument("clause id out of range");
    Clause c;
    if (id < kNumCarriers * 4) {
        c.target = static_cast<Feature>(id / 4);
        c.polarity = static_cast<Polarity>((id % 4) / 2);
        c.degree = static_cast<Degree>(id % 2);
    } else {
        id -= kNumCarriers * 4;
        c.target = static_cast<Feature>(kNumCarriers + id / 6);
        c.polarity = static_cast<Polarity>((id % 6) / 3);
        c.degree = static_cast<Degree>(id % 3);
    }
    return c;
}

std::string Clause::describe() const {
    static constexpr std::array<std::string_view, 3> kDegrees = {"weak", "strong", "sup"};
    std::string s = polarity == Polarity::Positive ? "+" : "-";
    s += " ";
    s += feature_name(target);
    s += " ";
    s += kDegrees[static_cast<std::size_t>(degree)];
    return s;
}

int feature_orientation(Feature f) {
    switch (f) {
        case Feature::Price:
        case Feature::Stops:
        case Feature::LongestStop:
            return -1;
        default:
            return 1;
    }
}

json to_json(const SemanticForm& form) {
    json j;
    j["clauses"] = json::array();
    for (const auto& c : form.clauses) {
        json cj;
        cj["polarity"] = c.polarity == Polarity::Positive ? "+" : "-";
        cj["target"] = feature_name(c.target);
        cj["degree"] = c.degree == Degree::Weak ? "weak" : c.degree == Degree::Strong ? "strong" : "sup";
        j["clauses"].push_back(cj);
    }
    j["oov"] = form.oov;
    return j;
}

SemanticForm semantic_form_from_json(const json& j) {
    SemanticForm form;
    for (const auto& cj : j.at("clauses")) {
        Clause c;
        const auto pol = cj.at("polarity").get<std::string>();
        if (pol != "+" && pol != "-") throw std::invalid_argument("bad clause polarity: " + pol);
        c.polarity = pol == "+" ? Polarity::Positive : Polarity::Negative;
        auto target = feature_from_name(cj.at("target").get<std::string>());
        if (!target) throw std::invalid_argument("bad clause target");
        c.target = *target;
        const auto deg = cj.at("degree").get<std::string>();
        if (deg == "weak") c.degree = Degree::Weak;
        else if (deg == "strong") c.degree = Degree::Strong;
        else if (deg == "sup") c.degree = Degree::Superlative;
        else throw std::invalid_argument("bad clause degree: " + deg);
        form.clauses.push_back(c);
    }
    form.oov = j.value("oov", false);
    return form;
}

// ---------------------------------------------------------------- Utterance

Utterance Utterance::from_text(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char ch : text) {
        if (ch == ',' || ch == '.' || ch == '!' || ch == '?') {
            cleaned.push_back(' ');
        } else {
            cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    Utterance u;
    u.tokens = split_ws(cleaned);
    u.raw = std::string(text);
    return u;
}

Utterance Utterance::from_tokens(std::vector<std::string> tokens) {
    Utterance u;
    u.tokens = std::move(tokens);
    u.raw = join(u.tokens);
    return u;
}

std::string Utterance::text() const { return join(tokens); }

UtteranceSet::UtteranceSet(std::vector<Utterance> utterances) {
    std::map<std::string, Utterance> unique;
    for (auto& u : utterances) {
        auto key = u.text();
        unique.emplace(std::move(key), std::move(u));
    }
    items_.reserve(unique.size());
    for (auto& [key, u] : unique) {
        index_.emplace(key, items_.size());
        items_.push_back(std::move(u));
    }
}

std::optional<std::size_t> UtteranceSet::find(const Utterance& u) const {
    auto it = index_.find(u.text());
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------- Grammar

Grammar Grammar::from_text(std::string_view text) {
    Grammar g;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("grammar line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) fail("expected a TAB-separated pair");
        const std::string lhs = line.substr(0, tab);
        const std::string rhs = line.substr(tab + 1);
        if (lhs == "version") {
            g.version_ = std::stoi(rhs);
            continue;
        }
        if (lhs == "filler") {
            for (auto& w : split_ws(rhs)) g.fillers_.push_back(w);
            continue;
        }
        const auto parts = split_ws(lhs);
        if (parts.size() != 3) fail("form pattern needs polarity, target and degree");
        Clause proto;
        if (parts[0] == "+") proto.polarity = Polarity::Positive;
        else if (parts[0] == "-") proto.polarity = Polarity::Negative;
        else fail("polarity must be + or -");
        if (parts[2] == "weak") proto.degree = Degree::Weak;
        else if (parts[2] == "strong") proto.degree = Degree::Strong;
        else if (parts[2] == "sup") proto.degree = Degree::Superlative;
        else fail("degree must be weak, strong or sup");

        std::vector<std::pair<Feature, std::string>> expansions;
        if (parts[1] == "{carrier}") {
            if (rhs.find("{carrier}") == std::string::npos) fail("carrier template without {carrier}");
            for (std::size_t c = 0; c < kNumCarriers; ++c) {
                const auto carrier = static_cast<Carrier>(c);
                expansions.emplace_back(carrier_feature(carrier),
                                        replace_all(rhs, "{carrier}", carrier_name(carrier)));
            }
        } else {
            auto f = feature_from_name(parts[1]);
            if (!f) fail("unknown target " + parts[1]);
            expansions.emplace_back(*f, rhs);
        }
        for (auto& [feature, surface] : expansions) {
            Clause c = proto;
            c.target = feature;
            if (!c.valid()) fail("carriers take no superlative");
            Fragment frag{c, split_ws(surface)};
            if (frag.tokens.empty()) fail("empty surface pattern");
            for (const auto& t : frag.tokens) {
                if (t == "and") fail("fragments may not contain the joiner 'and'");
                if (std::any_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
                    fail("fragments may not contain digits");
            }
            for (const auto& existing : g.fragments_) {
                if (existing.tokens == frag.tokens) fail("duplicate surface pattern: " + surface);
            }
            g.fragments_.push_back(std::move(frag));
        }
    }
    if (g.version_ != 1) throw std::invalid_argument("grammar: missing or unsupported version");
    for (std::size_t i = 0; i < g.fragments_.size(); ++i) {
        g.by_first_token_[g.fragments_[i].tokens.front()].push_back(i);
    }
    for (auto& [tok, idxs] : g.by_first_token_) {
        std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
            return g.fragments_[a].tokens.size() > g.fragments_[b].tokens.size();
        });
    }
    return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read grammar file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

std::string_view Grammar::builtin_text() { return kBuiltinGrammarText; }

const Grammar& Grammar::builtin() {
    static const Grammar g = from_text(kBuiltinGrammarText);
    return g;
}

std::vector<const Fragment*> Grammar::fragments_for(const Clause& c) const {
    std::vector<const Fragment*> out;
    for (const auto& f : fragments_) {
        if (f.clause == c) out.push_back(&f);
    }
    return out;
}

bool Grammar::is_filler(const std::string& token) const {
    return std::find(fillers_.begin(), fillers_.end(), token) != fillers_.end();
}

SemanticForm Grammar::parse(const Utterance& u) const {
    SemanticForm form;
    const auto& toks = u.tokens;
    std::size_t pos = 0;
    while (pos < toks.size()) {
        const Fragment* match = nullptr;
        if (auto it = by_first_token_.find(toks[pos]); it != by_first_token_.end()) {
            for (std::size_t idx : it->second) {
                const auto& ft = fragments_[idx].tokens;
                if (pos + ft.size() <= toks.size() && std::equal(ft.begin(), ft.end(), toks.begin() + pos)) {
                    match = &fragments_[idx];
                    break;
                }
            }
        }
        if (match) {
            form.clauses.push_back(match->clause);
            pos += match->tokens.size();
        } else if (is_filler(toks[pos])) {
            ++pos;
        } else {
            return SemanticForm{{}, true};
        }
    }
    std::sort(form.clauses.begin(), form.clauses.end(),
              [](const Clause& a, const Clause& b) { return a.target < b.target; });
    for (std::size_t i = 1; i < form.clauses.size(); ++i) {
        if (form.clauses[i].target == form.clauses[i - 1].target) return SemanticForm{{}, true};
    }
    return form;
}

Utterance Grammar::realize(const SemanticForm& form, Rng& rng) const {
    if (form.clauses.empty()) throw std::invalid_argument("realize: empty semantic form");
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < form.clauses.size(); ++i) {
        const auto& c = form.clauses[i];
        if (i > 0 && !(form.clauses[i - 1].target < c.target))
            throw std::invalid_argument("realize: clauses must have distinct targets in feature order");
        auto options = fragments_for(c);
        if (options.empty()) throw std::invalid_argument("realize: no template for clause " + c.describe());
        const auto* frag = options[rng.uniform_int(options.size())];
        if (i > 0) tokens.emplace_back("and");
        tokens.insert(tokens.end(), frag->tokens.begin(), frag->tokens.end());
    }
    return Utterance::from_tokens(std::move(tokens));
}

UtteranceSet Grammar::enumerate(int max_clauses) const {
    if (max_clauses < 1 || max_clauses > 2) throw std::invalid_argument("enumerate: max_clauses must be 1 or 2");
    std::vector<Utterance> out;
    for (const auto& f : fragments_) {
        if (f.tokens.size() < kMaxUtteranceTokens) out.push_back(Utterance::from_tokens(f.tokens));
    }
    if (max_clauses == 2) {
        for (const auto& a : fragments_) {
            for (const auto& b : fragments_) {
                if (!(a.clause.target < b.clause.target)) continue;
                if (a.tokens.size() + b.tokens.size() + 1 >= kMaxUtteranceTokens) continue;
                std::vector<std::string> toks = a.tokens;
                toks.emplace_back("and");
                toks.insert(toks.end(), b.tokens.begin(), b.tokens.end());
                out.push_back(Utterance::from_tokens(std::move(toks)));
            }
        }
    }
    return UtteranceSet(std::move(out));
}

// ---------------------------------------------------------------- semantics

bool clause_consistent(const Clause& c, const RewardVector& theta) {
    const double w = theta.weight(static_cast<std::size_t>(c.target));
    const int asserted = (c.polarity == Polarity::Positive ? 1 : -1) * feature_orientation(c.target);
    if (w * asserted <= 0.0) return false;
    const double need = c.degree == Degree::Strong ? 1.0 : 0.5;
    return std::abs(w) >= need;
}

double clause_reward_consistency(const SemanticForm& form, const RewardVector& theta) {
    if (form.clauses.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& c : form.clauses) hits += clause_consistent(c, theta) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(form.clauses.size());
}

std::array<double, kNumOptions> semantic_scores(const SemanticForm& form, const OptionSet& options) {
    std::array<double, kNumOptions> s{};
    for (const auto& c : form.clauses) {
        const double weight = c.degree == Degree::Weak ? 1.0 : c.degree == Degree::Strong ? 2.0 : 4.0;
        const double sign = c.polarity == Polarity::Positive ? 1.0 : -1.0;
        const auto t = static_cast<std::size_t>(c.target);
        for (std::size_t i = 0; i < kNumOptions; ++i) {
            const double x = options[i].features()[t];
            s[i] += weight * sign * feature_orientation(c.target) * x;
        }
    }
    return s;
}

std::optional<std::size_t> semantic_choice(const SemanticForm& form, const OptionSet& options) {
    if (form.clauses.empty()) return std::nullopt;
    auto best = optimal_option(semantic_scores(form, options));
    if (best.ties.size() != 1) return std::nullopt;
    return best.index;
}

}  // namespace flightpref
