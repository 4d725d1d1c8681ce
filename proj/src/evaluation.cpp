#include "flightpref/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace flightpref {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

const char* likelihood_name(PragmaticModel::Likelihood k) {
    switch (k) {
        case PragmaticModel::Likelihood::S1: return "s1";
        case PragmaticModel::Likelihood::ActionOnly: return "action_only";
        case PragmaticModel::Likelihood::RewardOnly: return "reward_only";
    }
    return "s1";
}

bool listener_error(const PragmaticModel& model, const CorpusRound& row) {
    const auto predicted = optimal_option(model.listener().prob(row.utterance, row.options)).index;
    const auto truth = optimal_option(row.theta, row.options).ties;
    return std::find(truth.begin(), truth.end(), predicted) == truth.end();
}

json mean_stderr_json(const MeanStderr& m) { return json{{"mean", m.mean}, {"stderr", m.se}}; }

}  // namespace

double held_out_accuracy(const FeatureVector& theta_hat, const RewardVector& theta_star, std::size_t n_sets, Rng& rng) {
    if (n_sets == 0) throw std::invalid_argument("held_out_accuracy: n_sets must be positive");
    std::size_t agree = 0;
    for (std::size_t s = 0; s < n_sets; ++s) {
        const auto m = sample_option_set(rng);
        agree += optimal_option(theta_hat, m).index == optimal_option(theta_star, m).index ? 1 : 0;
    }
    return static_cast<double>(agree) / static_cast<double>(n_sets);
}

double l2_distance(const FeatureVector& a, const FeatureVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

FeatureVector oracle_k_baseline(const RewardVector& theta_star, int k, Rng& rng) {
    if (k < 0 || k > static_cast<int>(kNumFeatures)) throw std::invalid_argument("oracle_k_baseline: k must lie in [0, 8]");
    std::vector<std::size_t> order(kNumFeatures);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    FeatureVector est{};
    for (int i = 0; i < k; ++i) est[order[static_cast<std::size_t>(i)]] = theta_star.weight(order[static_cast<std::size_t>(i)]);
    return est;
}

double paired_bootstrap(std::span<const double> a, std::span<const double> b, std::size_t n_resamples, Rng& rng) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_bootstrap: score lists differ in length");
    if (a.empty()) throw std::invalid_argument("paired_bootstrap: empty score lists");
    if (n_resamples < 1000) throw std::invalid_argument("paired_bootstrap: need at least 1000 resamples");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double observed = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    for (auto& x : d) x -= observed;
    std::size_t extreme = 0;
    for (std::size_t r = 0; r < n_resamples; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += d[static_cast<std::size_t>(rng.uniform_int(n))];
        if (std::abs(s / static_cast<double>(n)) >= std::abs(observed)) ++extreme;
    }
    return static_cast<double>(extreme + 1) / static_cast<double>(n_resamples + 1);
}

// ------------------------------------------------------------ PerturbedListener

PerturbedListener::PerturbedListener(std::shared_ptr<const Listener> base, double flip_rate, std::uint64_t seed)
    : base_(std::move(base)), flip_rate_(flip_rate), seed_(seed) {
    if (!base_) throw std::invalid_argument("perturbed listener needs a base listener");
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw std::invalid_argument("flip_rate must lie in [0, 1]");
}

std::uint64_t PerturbedListener::key(const Utterance& u, const OptionSet& options) const {
    std::uint64_t h = fnv1a(u.text());
    for (const auto& f : options.flights)
        for (double x : f.features()) {
            const auto bits = std::bit_cast<std::uint64_t>(x);
            h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof bits), h);
        }
    return splitmix64(h ^ seed_);
}

bool PerturbedListener::perturbed(const Utterance& u, const OptionSet& options) const {
    const double r = static_cast<double>(key(u, options) >> 11) * 0x1.0p-53;
    return r < flip_rate_;
}

OptionDistribution PerturbedListener::prob(const Utterance& u, const OptionSet& options) const {
    const auto p = base_->prob(u, options);
    if (!perturbed(u, options)) return p;
    const std::size_t shift = 1 + (splitmix64(key(u, options)) & 1);
    OptionDistribution out{};
    for (std::size_t j = 0; j < kNumOptions; ++j) out[(j + shift) % kNumOptions] = p[j];
    return out;
}

// ------------------------------------------------------------ aggregation

std::vector<EvalModel> default_eval_models(const PragmaticsConfig& base) {
    std::vector<EvalModel> out;
    for (auto [name, alpha] : {std::pair{"full", 0.5}, std::pair{"action_only", 1.0}, std::pair{"reward_only", 0.0}}) {
        EvalModel m{name, base};
        m.cfg.alpha = alpha;
        out.push_back(m);
    }
    return out;
}

MeanStderr mean_stderr(std::span<const double> xs) {
    MeanStderr out;
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return out;
}

std::vector<double> ModelResult::accuracies() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.accuracy);
    return v;
}

std::vector<double> ModelResult::l2s() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.l2);
    return v;
}

void summarize(ModelResult& result) {
    result.accuracy = mean_stderr(result.accuracies());
    result.l2 = mean_stderr(result.l2s());
    result.curve.clear();
    for (std::size_t bin = 1; bin <= kCurveBins; ++bin) {
        std::vector<double> acc, l2;
        for (const auto& p : result.points) {
            if (std::min(p.utterances, kCurveBins) != bin) continue;
            acc.push_back(p.accuracy);
            l2.push_back(p.l2);
        }
        if (acc.empty()) continue;
        result.curve.push_back({bin, acc.size(), mean_stderr(acc), mean_stderr(l2)});
    }
}

const ModelResult& EvalReport::model(const std::string& name) const {
    for (const auto& m : models)
        if (m.name == name) return m;
    throw std::out_of_range("no model named " + name + " in report");
}

ModelResult run_model(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& spec,
                      const EvalOptions& options) {
    ModelResult result;
    result.name = spec.name;
    for (std::size_t gi = 0; gi < games.size(); ++gi) {
        const auto& game = games[gi];
        auto posterior = RewardPosterior::uniform();
        std::size_t observed = 0;
        for (std::size_t r = 0; r < game.rounds.size(); ++r) {
            for (const auto& row : game.rounds[r]) {
                ++observed;
                if (options.skip_listener_errors && listener_error(model, row)) {
                    ++result.skipped_updates;
                    continue;
                }
                PragmaticsConfig cfg = spec.cfg;
                cfg.seed = derive_seed(spec.cfg.seed, gi * 4096 + observed);
                switch (spec.likelihood) {
                    case PragmaticModel::Likelihood::S1:
                        posterior = model.l2_update(posterior, row.utterance, row.options, cfg);
                        break;
                    case PragmaticModel::Likelihood::ActionOnly:
                        posterior = model.action_only_update(posterior, row.utterance, row.options, cfg);
                        break;
                    case PragmaticModel::Likelihood::RewardOnly:
                        posterior = model.reward_only_update(posterior, row.utterance, row.options, cfg);
                        break;
                }
            }
            if (observed == 0) continue;
            const auto estimate = posterior.mean();
            // Same held-out sets for every model at a given point.
            Rng rng(derive_seed(options.seed, gi * 64 + r));
            result.points.push_back({gi, r, observed, held_out_accuracy(estimate, game.theta, options.held_out_sets, rng),
                                     l2_distance(estimate, game.theta.weights())});
        }
    }
    summarize(result);
    return result;
}

EvalReport run_models(std::span<const GameRecord> games, const PragmaticModel& model, std::span<const EvalModel> specs,
                      const EvalOptions& options) {
    EvalReport report;
    json models = json::array();
    for (const auto& spec : specs) {
        report.models.push_back(run_model(games, model, spec, options));
        models.push_back({{"name", spec.name},
                          {"alpha", spec.cfg.alpha},
                          {"beta", std::isinf(spec.cfg.beta) ? json("inf") : json(spec.cfg.beta)},
                          {"likelihood", likelihood_name(spec.likelihood)},
                          {"inference", spec.cfg.inference == InferenceMode::Exact ? "exact" : "importance"},
                          {"n_samples", spec.cfg.n_samples},
                          {"seed", spec.cfg.seed}});
    }
    json config{{"models", models},
                {"held_out_sets", options.held_out_sets},
                {"skip_listener_errors", options.skip_listener_errors},
                {"games", games.size()}};
    report.metadata["seed"] = options.seed;
    report.metadata["config"] = config;
    report.metadata["config_hash"] = config_hash(config);
    return report;
}

ModelResult switch_results(const ModelResult& a, const ModelResult& b, std::string name) {
    if (a.points.size() != b.points.size()) throw std::invalid_argument("switch_results: runs cover different points");
    ModelResult out;
    out.name = std::move(name);
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].game != b.points[i].game || a.points[i].round != b.points[i].round)
            throw std::invalid_argument("switch_results: runs cover different points");
        out.points.push_back(b.points[i].accuracy > a.points[i].accuracy ? b.points[i] : a.points[i]);
    }
    summarize(out);
    return out;
}

EvalReport oracle_switch(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& action_only,
                         const std::optional<EvalModel>& reward_only, const EvalOptions& options) {
    std::vector<EvalModel> specs{action_only};
    if (reward_only) specs.push_back(*reward_only);
    auto report = run_models(games, model, specs, options);
    report.models.push_back(reward_only ? switch_results(report.models[0], report.models[1])
                                        : switch_results(report.models[0], report.models[0]));
    return report;
}

EvalReport known_action_ablation(std::span<const GameRecord> games, const PragmaticModel& model, const EvalModel& full,
                                 const EvalOptions& options) {
    EvalOptions skip = options;
    skip.skip_listener_errors = true;
    auto report = run_models(games, model, std::span<const EvalModel>(&full, 1), options);
    auto skipped = run_model(games, model, full, skip);
    skipped.name = full.name + "_known_action";
    report.models.push_back(std::move(skipped));
    return report;
}

void add_comparisons(EvalReport& report, const std::string& a, std::size_t n_resamples, std::uint64_t seed) {
    const auto base = report.model(a).accuracies();
    std::uint64_t stream = 0;
    for (const auto& m : report.models) {
        if (m.name == a) continue;
        Rng rng(derive_seed(seed, stream++));
        const auto other = m.accuracies();
        Comparison c{a, m.name, mean_stderr(base).mean - mean_stderr(other).mean,
                     paired_bootstrap(base, other, n_resamples, rng)};
        report.comparisons.push_back(c);
    }
}

std::vector<MeanStderr> oracle_k_accuracies(std::size_t n_thetas, std::size_t n_sets, std::uint64_t seed) {
    std::vector<std::vector<double>> acc(kNumFeatures + 1);
    for (std::size_t t = 0; t < n_thetas; ++t) {
        const std::uint64_t s = derive_seed(seed, t);
        Rng theta_rng(derive_seed(s, 0));
        const auto theta = sample_reward(theta_rng);
        for (int k = 0; k <= static_cast<int>(kNumFeatures); ++k) {
            Rng pick(derive_seed(s, 2 + static_cast<std::uint64_t>(k)));
            Rng sets(derive_seed(s, 1));
            acc[static_cast<std::size_t>(k)].push_back(held_out_accuracy(oracle_k_baseline(theta, k, pick), theta, n_sets, sets));
        }
    }
    std::vector<MeanStderr> out;
    for (const auto& a : acc) out.push_back(mean_stderr(a));
    return out;
}

// ------------------------------------------------------------ output

json to_json(const EvalReport& report) {
    json models = json::array();
    for (const auto& m : report.models) {
        json curve = json::array();
        for (const auto& c : m.curve)
            curve.push_back({{"utterances", c.utterances},
                             {"count", c.count},
                             {"accuracy", mean_stderr_json(c.accuracy)},
                             {"l2", mean_stderr_json(c.l2)}});
        models.push_back({{"name", m.name},
                          {"held_out_accuracy", mean_stderr_json(m.accuracy)},
                          {"l2_distance", mean_stderr_json(m.l2)},
                          {"points", m.points.size()},
                          {"skipped_updates", m.skipped_updates},
                          {"curve", curve}});
    }
    json comparisons = json::array();
    for (const auto& c : report.comparisons)
        comparisons.push_back({{"a", c.a}, {"b", c.b}, {"mean_difference", c.mean_difference}, {"p_value", c.p_value}});
    return json{{"v", kSchemaVersion}, {"models", models}, {"comparisons", comparisons}, {"metadata", report.metadata}};
}

std::string format_table(const EvalReport& report, std::span<const MeanStderr> oracle_k) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %-22s %s\n", "Model", "Held-out acc. (%)", "Reward L2");
    out << line << std::string(66, '-') << "\n";
    for (const auto& m : report.models) {
        std::snprintf(line, sizeof line, "%-28s %-22s %s\n", m.name.c_str(),
                      (fixed(100 * m.accuracy.mean, 1) + " +/- " + fixed(100 * m.accuracy.se, 1)).c_str(),
                      (fixed(m.l2.mean, 3) + " +/- " + fixed(m.l2.se, 3)).c_str());
        out << line;
    }
    if (!oracle_k.empty()) {
        out << std::string(66, '-') << "\n";
        for (std::size_t k = 0; k < oracle_k.size(); ++k) {
            const std::string name = "oracle (k=" + std::to_string(k) + ")";
            std::snprintf(line, sizeof line, "%-28s %-22s\n", name.c_str(),
                          (fixed(100 * oracle_k[k].mean, 1) + " +/- " + fixed(100 * oracle_k[k].se, 1)).c_str());
            out << line;
        }
    }
    if (!report.comparisons.empty()) {
        out << std::string(66, '-') << "\n";
        for (const auto& c : report.comparisons)
            out << c.a << " vs " << c.b << ": " << (c.mean_difference >= 0 ? "+" : "")
                << fixed(100 * c.mean_difference, 1) << " points, paired bootstrap p = " << fixed(c.p_value, 4) << "\n";
    }
    return out.str();
}

std::string curves_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "round_index,model,accuracy,l2,stderr\n";
    for (const auto& m : report.models)
        for (const auto& c : m.curve)
            out << c.utterances << "," << m.name << "," << fixed(c.accuracy.mean, 6) << "," << fixed(c.l2.mean, 6) << ","
                << fixed(c.accuracy.se, 6) << "\n";
    return out.str();
}

std::string config_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

}  // namespace flightpref
