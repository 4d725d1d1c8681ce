#include "flightpref/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace flightpref {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t row_hash(const CorpusRound& row) {
    std::ostringstream key;
    key.precision(17);
    key << row.utterance.text() << '|' << row.theta.grid_index() << '|' << row.xi_star;
    for (const auto& f : row.options.flights)
        for (double x : f.features()) key << ',' << x;
    return fnv1a(key.str());
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double log_add_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Adds G * E^T into `grad`, where column u of G multiplies sparse pool[u].
void accumulate_sparse(Eigen::MatrixXd& grad, const Eigen::MatrixXd& g, const std::vector<SparseFeatures>& pool,
                       double scale) {
    for (std::size_t u = 0; u < pool.size(); ++u) {
        const auto col = g.col(static_cast<Eigen::Index>(u));
        if (col.isZero(0.0)) continue;
        for (std::size_t k = 0; k < pool[u].index.size(); ++k)
            grad.col(pool[u].index[k]) += col * (pool[u].value[k] * scale);
    }
}

Eigen::MatrixXd project_pool(const Eigen::MatrixXd& w, const std::vector<SparseFeatures>& pool) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(w.rows(), static_cast<Eigen::Index>(pool.size()));
    for (std::size_t u = 0; u < pool.size(); ++u)
        for (std::size_t k = 0; k < pool[u].index.size(); ++k)
            p.col(static_cast<Eigen::Index>(u)) += w.col(pool[u].index[k]) * pool[u].value[k];
    return p;
}

struct Objective {
    double loss;
    std::vector<Eigen::MatrixXd> grads;
};

// Momentum gradient descent with validation early stopping. Params are
// updated in place and left at the best-validation iterate.
TrainReport descend(std::vector<Eigen::MatrixXd>& params, const std::vector<double>& learning_rates,
                    const TrainConfig& cfg, const std::function<Objective(const std::vector<Eigen::MatrixXd>&, int)>& train_obj,
                    const std::function<double(const std::vector<Eigen::MatrixXd>&)>& val_loss, bool have_validation,
                    const char* what) {
    TrainReport report;
    std::vector<Eigen::MatrixXd> velocity;
    for (const auto& p : params) velocity.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    auto best = params;
    double best_val = have_validation ? val_loss(params) : std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Objective obj = train_obj(params, epoch);
        if (!std::isfinite(obj.loss))
            throw std::runtime_error(std::string(what) + " training diverged at epoch " + std::to_string(epoch) +
                                     " (loss " + std::to_string(obj.loss) + "); lower the learning rate");
        if (epoch == 0) report.initial_train_loss = obj.loss;
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity[i] = cfg.momentum * velocity[i] - learning_rates[i] * obj.grads[i];
            params[i] += velocity[i];
        }
        report.epochs = epoch + 1;
        if (have_validation) {
            const double v = val_loss(params);
            if (!std::isfinite(v)) throw std::runtime_error(std::string(what) + " validation loss is non-finite");
            if (v < best_val) {
                best_val = v;
                best = params;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                report.early_stopped = true;
                break;
            }
        }
    }
    if (have_validation) {
        params = best;
        report.final_validation_loss = best_val;
    }
    return report;
}

}  // namespace

// ------------------------------------------------------------ config

TrainConfig parse_train_config(std::string_view text) {
    TrainConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "listener_learning_rate") cfg.listener_learning_rate = std::stod(value);
            else if (key == "speaker_learning_rate") cfg.speaker_learning_rate = std::stod(value);
            else if (key == "momentum") cfg.momentum = std::stod(value);
            else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
            else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
            else if (key == "patience") cfg.patience = std::stoi(value);
            else if (key == "validation_fraction") cfg.validation_fraction = std::stod(value);
            else if (key == "batch_size") cfg.batch_size = std::stoul(value);
            else if (key == "tau") cfg.tau = std::stod(value);
            else if (key == "hard_negatives") cfg.hard_negatives = std::stoul(value);
            else if (key == "initial_mixture_logit") cfg.initial_mixture_logit = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else throw std::invalid_argument("unknown key");
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + " (" + key + "): " + e.what());
        }
    }
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (cfg.hard_negatives > 4) throw std::invalid_argument("config: hard_negatives must be at most 4");
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

// ------------------------------------------------------------ listener

ListenerLoss listener_loss(const Eigen::MatrixXd& weights, std::span<const ListenerExample> examples,
                           double weight_decay) {
    ListenerLoss out;
    out.grad = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
    if (examples.empty()) return out;
    const double inv_n = 1.0 / static_cast<double>(examples.size());
    double total = 0.0;
    for (const auto& ex : examples) {
        FeatureVector proj{};
        for (std::size_t r = 0; r < kNumFeatures; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < ex.utterance.index.size(); ++k)
                s += weights(static_cast<Eigen::Index>(r), ex.utterance.index[k]) * ex.utterance.value[k];
            proj[r] = s;
        }
        std::array<double, kNumOptions> logits{};
        std::array<FeatureVector, kNumOptions> phi{};
        for (std::size_t i = 0; i < kNumOptions; ++i) {
            phi[i] = ex.options[i].features();
            logits[i] = dot(proj, phi[i]);
        }
        auto p = logits;
        const double lse = softmax_inplace(p);
        total += lse - logits[ex.target];
        // d loss / d proj = sum_i (p_i - y_i) phi_i
        FeatureVector g{};
        for (std::size_t i = 0; i < kNumOptions; ++i) {
            const double coef = p[i] - (i == ex.target ? 1.0 : 0.0);
            for (std::size_t r = 0; r < kNumFeatures; ++r) g[r] += coef * phi[i][r];
        }
        for (std::size_t k = 0; k < ex.utterance.index.size(); ++k) {
            const double v = ex.utterance.value[k] * inv_n;
            for (std::size_t r = 0; r < kNumFeatures; ++r)
                out.grad(static_cast<Eigen::Index>(r), ex.utterance.index[k]) += g[r] * v;
        }
    }
    out.loss = total * inv_n + 0.5 * weight_decay * weights.squaredNorm();
    out.grad += weight_decay * weights;
    return out;
}

// ------------------------------------------------------------ speaker

SpeakerLoss speaker_latent_loss(const Eigen::MatrixXd& reward_weights, const Eigen::MatrixXd& action_weights,
                                double mixture_logit, const SpeakerBatch& batch, double tau, double weight_decay) {
    SpeakerLoss out;
    out.grad_reward = Eigen::MatrixXd::Zero(reward_weights.rows(), reward_weights.cols());
    out.grad_action = Eigen::MatrixXd::Zero(action_weights.rows(), action_weights.cols());
    if (batch.examples.empty()) return out;

    const Eigen::MatrixXd proj_reward = project_pool(reward_weights, batch.pool);
    const Eigen::MatrixXd proj_action = project_pool(action_weights, batch.pool);
    Eigen::MatrixXd g_reward = Eigen::MatrixXd::Zero(proj_reward.rows(), proj_reward.cols());
    Eigen::MatrixXd g_action = Eigen::MatrixXd::Zero(proj_action.rows(), proj_action.cols());

    const double log_pi = log_sigmoid(mixture_logit);
    const double log_one_minus_pi = log_sigmoid(-mixture_logit);
    const double pi = std::exp(log_pi);
    const double inv_n = 1.0 / static_cast<double>(batch.examples.size());

    std::vector<std::size_t> norm;
    std::vector<double> ls, la;
    double total = 0.0;
    for (const auto& ex : batch.examples) {
        norm = batch.shared;
        norm.insert(norm.end(), ex.extra.begin(), ex.extra.end());
        const auto code = reward_code_indices(ex.theta);
        ls.resize(norm.size());
        la.resize(norm.size());
        std::size_t target_pos = norm.size();
        for (std::size_t j = 0; j < norm.size(); ++j) {
            const auto u = static_cast<Eigen::Index>(norm[j]);
            double s = 0.0;
            for (auto idx : code) s += proj_reward(idx, u);
            ls[j] = s / tau;
            double a = 0.0;
            for (std::size_t r = 0; r < kActionCodeDim; ++r) a += ex.action[r] * proj_action(static_cast<Eigen::Index>(r), u);
            la[j] = a;
            if (norm[j] == ex.utterance) target_pos = j;
        }
        if (target_pos == norm.size()) throw std::invalid_argument("speaker batch: utterance missing from its normalizer");
        const double t_s = ls[target_pos], t_a = la[target_pos];
        const double log_ps = t_s - softmax_inplace(ls);  // ls now holds p_S
        const double log_pa = t_a - softmax_inplace(la);  // la now holds p_A
        const double log_mix = log_add_exp(log_pi + log_ps, log_one_minus_pi + log_pa);
        total -= log_mix;
        const double resp = std::exp(log_pi + log_ps - log_mix);
        out.mean_responsibility += resp * inv_n;
        out.grad_logit += -(std::exp(log_ps) - std::exp(log_pa)) * pi * (1.0 - pi) * std::exp(-log_mix) * inv_n;

        for (std::size_t j = 0; j < norm.size(); ++j) {
            const double y = j == target_pos ? 1.0 : 0.0;
            const double ds = -resp * (y - ls[j]) / tau;
            const double da = -(1.0 - resp) * (y - la[j]);
            const auto u = static_cast<Eigen::Index>(norm[j]);
            for (auto idx : code) g_reward(idx, u) += ds;
            for (std::size_t r = 0; r < kActionCodeDim; ++r) g_action(static_cast<Eigen::Index>(r), u) += da * ex.action[r];
        }
    }
    accumulate_sparse(out.grad_reward, g_reward, batch.pool, inv_n);
    accumulate_sparse(out.grad_action, g_action, batch.pool, inv_n);
    out.loss = total * inv_n + 0.5 * weight_decay * (reward_weights.squaredNorm() + action_weights.squaredNorm());
    out.grad_reward += weight_decay * reward_weights;
    out.grad_action += weight_decay * action_weights;
    return out;
}

SpeakerBatch make_speaker_batch(std::span<const CorpusRound* const> rows, const UtteranceEncoder& encoder,
                                std::size_t hard_negative_count, std::uint64_t seed) {
    SpeakerBatch batch;
    std::unordered_map<std::string, std::size_t> pool_index;
    auto intern = [&](const Utterance& u) {
        auto [it, inserted] = pool_index.emplace(u.text(), batch.pool.size());
        if (inserted) batch.pool.push_back(encoder.encode(u));
        return it->second;
    };
    for (const auto* row : rows) intern(row->utterance);
    batch.shared.resize(batch.pool.size());
    for (std::size_t i = 0; i < batch.shared.size(); ++i) batch.shared[i] = i;
    const std::size_t shared_count = batch.shared.size();

    for (const auto* row : rows) {
        SpeakerExample ex;
        ex.utterance = pool_index.at(row->utterance.text());
        ex.theta = row->theta;
        ex.action = action_code(row->options, row->xi_star);
        Rng rng(derive_seed(seed, row_hash(*row)));
        for (const auto& neg : hard_negatives(row->utterance, hard_negative_count, rng)) {
            const std::size_t idx = intern(neg);
            if (idx >= shared_count && std::find(ex.extra.begin(), ex.extra.end(), idx) == ex.extra.end())
                ex.extra.push_back(idx);
        }
        batch.examples.push_back(std::move(ex));
    }
    return batch;
}

// ------------------------------------------------------------ training loops

bool is_validation_row(const CorpusRound& row, double fraction, std::uint64_t seed) {
    if (fraction <= 0.0) return false;
    const std::uint64_t h = splitmix64(row_hash(row) ^ splitmix64(seed));
    return static_cast<double>(h % 1000000) < fraction * 1000000.0;
}

ListenerTraining train_listener(const Corpus& corpus, std::shared_ptr<const UtteranceEncoder> encoder,
                                const TrainConfig& config) {
    if (corpus.empty()) throw std::invalid_argument("train_listener: empty corpus");
    std::vector<ListenerExample> train, val;
    for (const auto& row : corpus) {
        ListenerExample ex{encoder->encode(row.utterance), row.options, row.xi_star};
        (is_validation_row(row, config.validation_fraction, config.seed) ? val : train).push_back(std::move(ex));
    }
    if (train.empty()) std::swap(train, val);

    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd::Zero(kListenerCodeDim, static_cast<Eigen::Index>(encoder->dim()))};
    Rng order(derive_seed(config.seed, 1));
    std::vector<std::size_t> perm(train.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    auto objective = [&](const std::vector<Eigen::MatrixXd>& p, int) {
        if (config.batch_size == 0 || config.batch_size >= train.size()) {
            auto l = listener_loss(p[0], train, config.weight_decay);
            return Objective{l.loss, {std::move(l.grad)}};
        }
        order.shuffle(perm);
        std::vector<ListenerExample> mb;
        for (std::size_t i = 0; i < config.batch_size; ++i) mb.push_back(train[perm[i]]);
        auto l = listener_loss(p[0], mb, config.weight_decay);
        return Objective{l.loss, {std::move(l.grad)}};
    };
    auto validation = [&](const std::vector<Eigen::MatrixXd>& p) { return listener_loss(p[0], val, 0.0).loss; };

    TrainReport report = descend(params, {config.listener_learning_rate}, config, objective, validation, !val.empty(), "listener");
    report.final_train_loss = listener_loss(params[0], train, config.weight_decay).loss;
    report.train_examples = train.size();
    report.validation_examples = val.size();
    return {std::make_shared<LinearListener>(encoder, params[0]), report};
}

SpeakerTraining train_speaker_latent(const Corpus& corpus, std::shared_ptr<const UtteranceEncoder> encoder,
                                     const TrainConfig& config) {
    if (corpus.empty()) throw std::invalid_argument("train_speaker_latent: empty corpus");
    std::vector<const CorpusRound*> train_rows, val_rows;
    for (const auto& row : corpus)
        (is_validation_row(row, config.validation_fraction, config.seed) ? val_rows : train_rows).push_back(&row);
    if (train_rows.empty()) std::swap(train_rows, val_rows);

    const auto full = make_speaker_batch(train_rows, *encoder, config.hard_negatives, config.seed);
    const auto val = make_speaker_batch(val_rows, *encoder, config.hard_negatives, config.seed);
    const bool full_batch = config.batch_size == 0 || config.batch_size >= train_rows.size();
    Rng order(derive_seed(config.seed, 2));

    const auto dim = static_cast<Eigen::Index>(encoder->dim());
    std::vector<Eigen::MatrixXd> params{Eigen::MatrixXd::Zero(kRewardCodeDim, dim),
                                        Eigen::MatrixXd::Zero(kActionCodeDim, dim),
                                        Eigen::MatrixXd::Constant(1, 1, config.initial_mixture_logit)};
    auto run = [&](const std::vector<Eigen::MatrixXd>& p, const SpeakerBatch& b) {
        auto l = speaker_latent_loss(p[0], p[1], p[2](0, 0), b, config.tau, config.weight_decay);
        return Objective{l.loss, {std::move(l.grad_reward), std::move(l.grad_action), Eigen::MatrixXd::Constant(1, 1, l.grad_logit)}};
    };
    auto objective = [&](const std::vector<Eigen::MatrixXd>& p, int) {
        if (full_batch) return run(p, full);
        auto rows = train_rows;
        order.shuffle(rows);
        rows.resize(config.batch_size);
        return run(p, make_speaker_batch(rows, *encoder, config.hard_negatives, config.seed));
    };
    auto validation = [&](const std::vector<Eigen::MatrixXd>& p) {
        return speaker_latent_loss(p[0], p[1], p[2](0, 0), val, config.tau, 0.0).loss;
    };
    const double lr = config.speaker_learning_rate;
    TrainReport report = descend(params, {lr, lr, lr}, config, objective, validation, !val_rows.empty(), "speaker");
    report.final_train_loss = speaker_latent_loss(params[0], params[1], params[2](0, 0), full, config.tau, config.weight_decay).loss;
    report.train_examples = train_rows.size();
    report.validation_examples = val_rows.size();
    SpeakerTraining out;
    out.speaker = std::make_shared<LinearRewardSpeaker>(encoder, params[0], config.tau);
    out.action_speaker = std::make_shared<LinearActionSpeaker>(encoder, params[1]);
    out.mixture_logit = params[2](0, 0);
    out.report = report;
    return out;
}

ModelBundle train_bundle(const Corpus& corpus, const TrainConfig& config) {
    std::vector<Utterance> utterances;
    for (const auto& row : corpus) utterances.push_back(row.utterance);
    auto encoder = std::make_shared<const UtteranceEncoder>(UtteranceEncoder::build(utterances));
    auto listener = train_listener(corpus, encoder, config);
    auto speaker = train_speaker_latent(corpus, encoder, config);
    ModelBundle b;
    b.encoder = encoder;
    b.listener = listener.model;
    b.speaker = speaker.speaker;
    b.action_speaker = speaker.action_speaker;
    b.mixture_logit = speaker.mixture_logit;
    auto report_json = [](const TrainReport& r) {
        json j;
        j["initial_train_loss"] = r.initial_train_loss;
        j["final_train_loss"] = r.final_train_loss;
        j["final_validation_loss"] = r.final_validation_loss;
        j["epochs"] = r.epochs;
        j["early_stopped"] = r.early_stopped;
        j["train_examples"] = r.train_examples;
        j["validation_examples"] = r.validation_examples;
        return j;
    };
    b.metadata["seed"] = config.seed;
    b.metadata["listener"] = report_json(listener.report);
    b.metadata["speaker"] = report_json(speaker.report);
    return b;
}

double listener_accuracy(const Listener& listener, const Corpus& corpus) {
    if (corpus.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& row : corpus) {
        const auto p = listener.prob(row.utterance, row.options);
        hits += optimal_option(p).index == row.xi_star ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(corpus.size());
}

}  // namespace flightpref
