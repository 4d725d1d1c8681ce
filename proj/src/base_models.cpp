#include "flightpref/base_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace flightpref {

namespace {

double sparse_dot_row(const Eigen::MatrixXd& m, Eigen::Index row, const SparseFeatures& e) {
    double s = 0.0;
    for (std::size_t k = 0; k < e.index.size(); ++k) s += m(row, e.index[k]) * e.value[k];
    return s;
}

void check_shape(const Eigen::MatrixXd& m, std::size_t rows, const UtteranceEncoder& enc, const char* what) {
    if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != enc.dim())
        throw std::invalid_argument(std::string(what) + ": weight shape does not match encoder");
    if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite weights");
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = std::move(data);
    return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
        throw std::invalid_argument("matrix shape header does not match data length");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

// Attribute lexicon for hard negatives. Each category lists alternative
// token sequences that may replace one another.
const std::vector<std::vector<std::vector<std::string>>>& attribute_categories() {
    static const std::vector<std::vector<std::vector<std::string>>> cats = {
        {{"jetblue"}, {"southwest"}, {"american"}, {"delta"}},
        {{"zero", "stops"}, {"one", "stop"}, {"two", "stops"}},
    };
    return cats;
}

}  // namespace

double softmax_inplace(std::span<double> logits) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : logits) mx = std::max(mx, x);
    double z = 0.0;
    for (double& x : logits) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : logits) x /= z;
    return mx + std::log(z);
}

// ---------------------------------------------------------------- listener

LinearListener::LinearListener(std::shared_ptr<const UtteranceEncoder> encoder)
    : encoder_(std::move(encoder)),
      weights_(Eigen::MatrixXd::Zero(kListenerCodeDim, static_cast<Eigen::Index>(encoder_->dim()))) {}

LinearListener::LinearListener(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights)
    : encoder_(std::move(encoder)), weights_(std::move(weights)) {
    check_shape(weights_, kListenerCodeDim, *encoder_, "listener");
}

OptionDistribution LinearListener::prob_encoded(const SparseFeatures& e, const OptionSet& options) const {
    FeatureVector proj{};
    for (std::size_t k = 0; k < kNumFeatures; ++k) proj[k] = sparse_dot_row(weights_, static_cast<Eigen::Index>(k), e);
    OptionDistribution p{};
    for (std::size_t i = 0; i < kNumOptions; ++i) p[i] = dot(proj, options[i].features());
    softmax_inplace(p);
    return p;
}

OptionDistribution LinearListener::prob(const Utterance& u, const OptionSet& options) const {
    return prob_encoded(encoder_->encode(u), options);
}

EnsembleListener::EnsembleListener(std::vector<std::shared_ptr<const Listener>> members) : members_(std::move(members)) {
    if (members_.empty()) throw std::invalid_argument("ensemble needs at least one member");
}

OptionDistribution EnsembleListener::prob(const Utterance& u, const OptionSet& options) const {
    if (members_.size() == 1) return members_.front()->prob(u, options);
    std::vector<std::vector<double>> dists;
    dists.reserve(members_.size());
    for (const auto& m : members_) {
        auto p = m->prob(u, options);
        dists.emplace_back(p.begin(), p.end());
    }
    auto avg = ensemble_average(dists);
    return {avg[0], avg[1], avg[2]};
}

// ---------------------------------------------------------------- speakers

LinearRewardSpeaker::LinearRewardSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, double tau)
    : encoder_(std::move(encoder)),
      weights_(Eigen::MatrixXd::Zero(kRewardCodeDim, static_cast<Eigen::Index>(encoder_->dim()))),
      tau_(tau) {
    if (!(tau_ > 0.0)) throw std::invalid_argument("temperature must be positive");
}

LinearRewardSpeaker::LinearRewardSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights,
                                         double tau)
    : encoder_(std::move(encoder)), weights_(std::move(weights)), tau_(tau) {
    if (!(tau_ > 0.0)) throw std::invalid_argument("temperature must be positive");
    check_shape(weights_, kRewardCodeDim, *encoder_, "reward speaker");
}

std::array<double, kRewardCodeDim> LinearRewardSpeaker::logit_table(const Utterance& u) const {
    const auto e = encoder_->encode(u);
    std::array<double, kRewardCodeDim> t{};
    for (std::size_t r = 0; r < kRewardCodeDim; ++r) t[r] = sparse_dot_row(weights_, static_cast<Eigen::Index>(r), e) / tau_;
    return t;
}

double LinearRewardSpeaker::logit(const RewardVector& theta, const Utterance& u) const {
    const auto t = logit_table(u);
    double s = 0.0;
    for (auto idx : reward_code_indices(theta)) s += t[idx];
    return s;
}

std::vector<double> LinearRewardSpeaker::prob(const RewardVector& theta, const UtteranceSet& support) const {
    if (support.empty()) throw std::invalid_argument("reward speaker: empty utterance support");
    std::vector<double> p(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) p[i] = logit(theta, support[i]);
    softmax_inplace(p);
    return p;
}

LinearActionSpeaker::LinearActionSpeaker(std::shared_ptr<const UtteranceEncoder> encoder)
    : encoder_(std::move(encoder)),
      weights_(Eigen::MatrixXd::Zero(kActionCodeDim, static_cast<Eigen::Index>(encoder_->dim()))) {}

LinearActionSpeaker::LinearActionSpeaker(std::shared_ptr<const UtteranceEncoder> encoder, Eigen::MatrixXd weights)
    : encoder_(std::move(encoder)), weights_(std::move(weights)) {
    check_shape(weights_, kActionCodeDim, *encoder_, "action speaker");
}

double LinearActionSpeaker::logit(const OptionSet& options, std::size_t chosen, const Utterance& u) const {
    const auto e = encoder_->encode(u);
    const auto code = action_code(options, chosen);
    double s = 0.0;
    for (std::size_t r = 0; r < kActionCodeDim; ++r) s += code[r] * sparse_dot_row(weights_, static_cast<Eigen::Index>(r), e);
    return s;
}

std::vector<double> LinearActionSpeaker::prob(const OptionSet& options, std::size_t chosen,
                                              const UtteranceSet& support) const {
    if (support.empty()) throw std::invalid_argument("action speaker: empty utterance support");
    std::vector<double> p(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) p[i] = logit(options, chosen, support[i]);
    softmax_inplace(p);
    return p;
}

OptionDistribution lbase_prob(const Listener& listener, const Utterance& u, const OptionSet& options) {
    return listener.prob(u, options);
}

std::vector<double> sbase_prob(const LinearRewardSpeaker& speaker, const RewardVector& theta,
                               const UtteranceSet& support) {
    return speaker.prob(theta, support);
}

std::vector<double> sact_prob(const LinearActionSpeaker& speaker, const OptionSet& options, std::size_t chosen,
                              const UtteranceSet& support) {
    return speaker.prob(options, chosen, support);
}

std::vector<double> ensemble_average(std::span<const std::vector<double>> distributions) {
    if (distributions.empty()) throw std::invalid_argument("ensemble: no members");
    const std::size_t n = distributions.front().size();
    std::vector<double> out(n, 0.0);
    for (const auto& d : distributions) {
        if (d.size() != n) throw std::invalid_argument("ensemble: members have mismatched supports");
        for (std::size_t i = 0; i < n; ++i) out[i] += d[i];
    }
    if (distributions.size() == 1) return distributions.front();
    double total = 0.0;
    for (double& x : out) {
        x /= static_cast<double>(distributions.size());
        total += x;
    }
    for (double& x : out) x /= total;
    return out;
}

// ---------------------------------------------------------------- hard negatives

std::vector<Utterance> hard_negatives(const Utterance& u, std::size_t k, Rng& rng) {
    if (k > 4) throw std::invalid_argument("hard_negatives: k must be at most 4");
    const auto& grammar = Grammar::builtin();
    const auto original = grammar.parse(u);
    const auto& toks = u.tokens;

    std::set<std::vector<std::string>> seen;
    std::vector<Utterance> candidates;
    for (const auto& category : attribute_categories()) {
        for (std::size_t pos = 0; pos < toks.size(); ++pos) {
            for (const auto& mention : category) {
                if (pos + mention.size() > toks.size() ||
                    !std::equal(mention.begin(), mention.end(), toks.begin() + static_cast<std::ptrdiff_t>(pos)))
                    continue;
                for (const auto& alt : category) {
                    if (alt == mention) continue;
                    std::vector<std::string> out(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(pos));
                    out.insert(out.end(), alt.begin(), alt.end());
                    out.insert(out.end(), toks.begin() + static_cast<std::ptrdiff_t>(pos + mention.size()), toks.end());
                    if (!seen.insert(out).second) continue;
                    auto cand = Utterance::from_tokens(std::move(out));
                    if (!original.oov) {
                        // Keep only swaps that remain in-language and change exactly one clause.
                        const auto form = grammar.parse(cand);
                        if (form.oov || form.clauses.size() != original.clauses.size()) continue;
                        std::size_t diff = 0;
                        for (std::size_t c = 0; c < form.clauses.size(); ++c) diff += form.clauses[c] == original.clauses[c] ? 0 : 1;
                        if (diff != 1) continue;
                    }
                    candidates.push_back(std::move(cand));
                }
            }
        }
    }
    rng.shuffle(candidates);
    if (candidates.size() > k) candidates.resize(k);
    return candidates;
}

// ---------------------------------------------------------------- bundle

ModelBundle ModelBundle::zeros(std::shared_ptr<const UtteranceEncoder> encoder) {
    ModelBundle b;
    b.encoder = encoder;
    b.listener = std::make_shared<LinearListener>(encoder);
    b.speaker = std::make_shared<LinearRewardSpeaker>(encoder);
    b.action_speaker = std::make_shared<LinearActionSpeaker>(encoder);
    return b;
}

json ModelBundle::to_json() const {
    json j;
    j["v"] = kSchemaVersion;
    j["kind"] = "flightpref-model";
    j["vocabulary"] = encoder->vocabulary();
    j["tau"] = speaker->tau();
    j["mixture_logit"] = mixture_logit;
    j["listener"] = matrix_to_json(listener->weights());
    j["speaker"] = matrix_to_json(speaker->weights());
    j["action_speaker"] = matrix_to_json(action_speaker->weights());
    j["metadata"] = metadata;
    return j;
}

ModelBundle ModelBundle::from_json(const json& j) {
    if (j.value("v", std::string{}) != kSchemaVersion) throw std::invalid_argument("model file: unsupported schema version");
    if (j.value("kind", std::string{}) != "flightpref-model") throw std::invalid_argument("model file: wrong kind");
    ModelBundle b;
    b.encoder = std::make_shared<UtteranceEncoder>(j.at("vocabulary").get<std::vector<std::string>>());
    b.listener = std::make_shared<LinearListener>(b.encoder, matrix_from_json(j.at("listener")));
    b.speaker = std::make_shared<LinearRewardSpeaker>(b.encoder, matrix_from_json(j.at("speaker")), j.at("tau").get<double>());
    b.action_speaker = std::make_shared<LinearActionSpeaker>(b.encoder, matrix_from_json(j.at("action_speaker")));
    b.mixture_logit = j.at("mixture_logit").get<double>();
    b.metadata = j.value("metadata", json::object());
    return b;
}

void ModelBundle::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out << to_json().dump() << '\n';
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model file " + path.string());
    return from_json(json::parse(in));
}

}  // namespace flightpref
