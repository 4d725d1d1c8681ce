#include <doctest.h>

#include <cmath>

#include "flightpref/datagen.hpp"
#include "flightpref/training.hpp"
#include "helpers.hpp"

using namespace flightpref;
using fp_test::encoder_for;
using fp_test::options_from;
using fp_test::random_matrix;

namespace {

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-4, std::abs(a), std::abs(b)}); }

// Independent listener objective from dense features.
double oracle_listener_loss(const Eigen::MatrixXd& w, std::span<const ListenerExample> examples, double wd) {
    double total = 0.0;
    for (const auto& ex : examples) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(w.cols());
        for (std::size_t k = 0; k < ex.utterance.index.size(); ++k) e(ex.utterance.index[k]) = ex.utterance.value[k];
        const Eigen::VectorXd proj = w * e;
        double logits[kNumOptions], mx = -1e300;
        for (std::size_t i = 0; i < kNumOptions; ++i) {
            const auto phi = ex.options[i].features();
            logits[i] = 0.0;
            for (std::size_t r = 0; r < kNumFeatures; ++r) logits[i] += proj(static_cast<Eigen::Index>(r)) * phi[r];
            mx = std::max(mx, logits[i]);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        total += -(logits[ex.target] - mx - std::log(z));
    }
    return total / static_cast<double>(examples.size()) + 0.5 * wd * w.squaredNorm();
}

// Independent latent speaker objective.
double oracle_speaker_loss(const Eigen::MatrixXd& wr, const Eigen::MatrixXd& wa, double logit, const SpeakerBatch& b,
                           double tau, double wd) {
    auto dense = [&](std::size_t u) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(wr.cols());
        for (std::size_t k = 0; k < b.pool[u].index.size(); ++k) e(b.pool[u].index[k]) = b.pool[u].value[k];
        return e;
    };
    const double pi = 1.0 / (1.0 + std::exp(-logit));
    double total = 0.0;
    for (const auto& ex : b.examples) {
        std::vector<std::size_t> norm = b.shared;
        norm.insert(norm.end(), ex.extra.begin(), ex.extra.end());
        Eigen::VectorXd code = Eigen::VectorXd::Zero(kRewardCodeDim);
        for (std::size_t i = 0; i < kNumFeatures; ++i) code(static_cast<Eigen::Index>(i * kGridLevels + ex.theta.level(i))) = 1.0;
        code(kRewardCodeDim - 1) = 1.0;
        Eigen::VectorXd acode(kActionCodeDim);
        for (std::size_t r = 0; r < kActionCodeDim; ++r) acode(static_cast<Eigen::Index>(r)) = ex.action[r];
        double zs = 0.0, za = 0.0, ts = 0.0, ta = 0.0;
        for (auto u : norm) {
            const Eigen::VectorXd e = dense(u);
            const double s = code.dot(wr * e) / tau, a = acode.dot(wa * e);
            zs += std::exp(s);
            za += std::exp(a);
            if (u == ex.utterance) ts = std::exp(s), ta = std::exp(a);
        }
        total += -std::log(pi * ts / zs + (1.0 - pi) * ta / za);
    }
    return total / static_cast<double>(b.examples.size()) + 0.5 * wd * (wr.squaredNorm() + wa.squaredNorm());
}

const Corpus& shared_corpus() {
    static const Corpus c = generate_corpus(DatagenConfig{.games = 300, .seed = 11});
    return c;
}

const ModelBundle& shared_bundle() {
    static const ModelBundle b = [] {
        TrainConfig cfg;
        cfg.seed = 3;
        return train_bundle(shared_corpus(), cfg);
    }();
    return b;
}

Corpus small_corpus(std::size_t games, std::uint64_t seed) { return generate_corpus(DatagenConfig{.games = games, .seed = seed}); }

}  // namespace

TEST_CASE("listener loss matches an independent objective and its finite differences") {
    const auto corpus = small_corpus(4, 21);
    std::vector<Utterance> us;
    for (const auto& r : corpus) us.push_back(r.utterance);
    auto enc = std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(us));
    std::vector<ListenerExample> ex;
    for (const auto& r : corpus) ex.push_back({enc->encode(r.utterance), r.options, r.xi_star});
    Rng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        const auto w = random_matrix(kListenerCodeDim, static_cast<Eigen::Index>(enc->dim()), 0.7, rng);
        const auto l = listener_loss(w, ex, 1e-3);
        CHECK(l.loss == doctest::Approx(oracle_listener_loss(w, ex, 1e-3)).epsilon(1e-12));
        for (int k = 0; k < 20; ++k) {
            const auto r = static_cast<Eigen::Index>(rng.uniform_int(w.rows()));
            const auto c = static_cast<Eigen::Index>(rng.uniform_int(w.cols()));
            const double h = 1e-6;
            auto wp = w, wm = w;
            wp(r, c) += h;
            wm(r, c) -= h;
            const double fd = (listener_loss(wp, ex, 1e-3).loss - listener_loss(wm, ex, 1e-3).loss) / (2 * h);
            CHECK(relative_error(fd, l.grad(r, c)) < 1e-5);
        }
    }
}

TEST_CASE("speaker latent loss matches an independent objective and its finite differences") {
    const auto corpus = small_corpus(3, 22);
    std::vector<Utterance> us;
    for (const auto& r : corpus) us.push_back(r.utterance);
    Rng rng0(0);
    for (const auto& r : corpus)
        for (const auto& h : hard_negatives(r.utterance, 4, rng0)) us.push_back(h);
    auto enc = std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(us));
    std::vector<const CorpusRound*> rows;
    for (const auto& r : corpus) rows.push_back(&r);
    const auto batch = make_speaker_batch(rows, *enc, 4, 9);
    Rng rng(2);
    const auto d = static_cast<Eigen::Index>(enc->dim());
    for (int trial = 0; trial < 5; ++trial) {
        const auto wr = random_matrix(kRewardCodeDim, d, 0.5, rng);
        const auto wa = random_matrix(kActionCodeDim, d, 0.5, rng);
        const double logit = rng.normal();
        const auto l = speaker_latent_loss(wr, wa, logit, batch, 3.0, 1e-3);
        CHECK(l.loss == doctest::Approx(oracle_speaker_loss(wr, wa, logit, batch, 3.0, 1e-3)).epsilon(1e-11));
        const double h = 1e-6;
        for (int k = 0; k < 15; ++k) {
            const auto r = static_cast<Eigen::Index>(rng.uniform_int(wr.rows()));
            const auto c = static_cast<Eigen::Index>(rng.uniform_int(d));
            auto p = wr, m = wr;
            p(r, c) += h;
            m(r, c) -= h;
            const double fd = (speaker_latent_loss(p, wa, logit, batch, 3.0, 1e-3).loss -
                               speaker_latent_loss(m, wa, logit, batch, 3.0, 1e-3).loss) / (2 * h);
            CHECK(relative_error(fd, l.grad_reward(r, c)) < 1e-5);
        }
        for (int k = 0; k < 15; ++k) {
            const auto r = static_cast<Eigen::Index>(rng.uniform_int(wa.rows()));
            const auto c = static_cast<Eigen::Index>(rng.uniform_int(d));
            auto p = wa, m = wa;
            p(r, c) += h;
            m(r, c) -= h;
            const double fd = (speaker_latent_loss(wr, p, logit, batch, 3.0, 1e-3).loss -
                               speaker_latent_loss(wr, m, logit, batch, 3.0, 1e-3).loss) / (2 * h);
            CHECK(relative_error(fd, l.grad_action(r, c)) < 1e-5);
        }
        const double fd = (speaker_latent_loss(wr, wa, logit + h, batch, 3.0, 1e-3).loss -
                           speaker_latent_loss(wr, wa, logit - h, batch, 3.0, 1e-3).loss) / (2 * h);
        CHECK(relative_error(fd, l.grad_logit) < 1e-5);
    }
}

TEST_CASE("speaker batches normalize over shared utterances plus hard negatives") {
    const auto corpus = small_corpus(2, 23);
    std::vector<Utterance> us;
    for (const auto& r : corpus) us.push_back(r.utterance);
    auto enc = std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(us));
    std::vector<const CorpusRound*> rows;
    for (const auto& r : corpus) rows.push_back(&r);
    const auto b = make_speaker_batch(rows, *enc, 4, 1);
    CHECK(b.examples.size() == corpus.size());
    for (const auto& ex : b.examples) {
        CHECK(ex.utterance < b.shared.size());
        CHECK(ex.extra.size() <= 4);
        for (auto x : ex.extra) CHECK(x >= b.shared.size());
    }
    const auto again = make_speaker_batch(rows, *enc, 4, 1);
    for (std::size_t i = 0; i < b.examples.size(); ++i) CHECK(b.examples[i].extra == again.examples[i].extra);
}

TEST_CASE("a one-example corpus is memorized") {
    CorpusRound row;
    row.game_id = "m";
    row.options = options_from({{0, 1, 0, 0, 0.2, 0.5, 0.3, 0.4}, {1, 0, 0, 0, 0.8, 0.0, 0.1, 0.9}, {0, 0, 0, 1, 0.5, 1.0, 0.7, 0.1}});
    row.utterance = Utterance::from_text("cheapest");
    row.theta = RewardVector::from_weights({0, 0, 0, 0, -1, 0, 0, 0});
    row.xi_star = 0;
    TrainConfig cfg;
    cfg.validation_fraction = 0.0;
    cfg.weight_decay = 0.0;
    cfg.max_epochs = 300;
    const auto b = train_bundle(Corpus{row}, cfg);
    CHECK(b.listener->prob(row.utterance, row.options)[0] > 0.99);
    CHECK(b.metadata["listener"]["final_train_loss"].get<double>() < b.metadata["listener"]["initial_train_loss"].get<double>());
    CHECK(b.metadata["speaker"]["final_train_loss"].get<double>() <= b.metadata["speaker"]["initial_train_loss"].get<double>());
}

TEST_CASE("empty corpora and bad configs are rejected") {
    auto enc = std::make_shared<UtteranceEncoder>();
    CHECK_THROWS_AS(train_listener(Corpus{}, enc, TrainConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(train_speaker_latent(Corpus{}, enc, TrainConfig{}), std::invalid_argument);
    const auto cfg = parse_train_config("# c\nlistener_learning_rate = 0.5\n\n[speaker]\ntau=2 # inline\nseed = 7\n");
    CHECK(cfg.listener_learning_rate == 0.5);
    CHECK(cfg.tau == 2.0);
    CHECK(cfg.seed == 7);
    CHECK(cfg.max_epochs == TrainConfig{}.max_epochs);
    CHECK_THROWS_WITH_AS(parse_train_config("momentum = 0.9\nbogus = 1\n"), doctest::Contains("line 2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_train_config("tau = 0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_train_config("hard_negatives = 5"), std::invalid_argument);
    CHECK_THROWS_AS(parse_train_config("tau"), std::invalid_argument);
    const auto shipped = load_train_config(FLIGHTPREF_SOURCE_DIR "/data/train.cfg");
    CHECK(shipped.tau == 3.0);
}

TEST_CASE("validation membership does not depend on row order") {
    auto corpus = small_corpus(20, 24);
    std::vector<bool> before;
    for (const auto& r : corpus) before.push_back(is_validation_row(r, 0.1, 5));
    const auto n = std::count(before.begin(), before.end(), true);
    CHECK(n > 0);
    CHECK(n < static_cast<long>(corpus.size()) / 4);

    std::vector<Utterance> us;
    for (const auto& r : corpus) us.push_back(r.utterance);
    auto enc = std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(us));
    TrainConfig cfg;
    cfg.max_epochs = 30;
    const auto a = train_listener(corpus, enc, cfg);
    std::reverse(corpus.begin(), corpus.end());
    const auto b = train_listener(corpus, enc, cfg);
    CHECK(a.report.train_examples == b.report.train_examples);
    CHECK((a.model->weights() - b.model->weights()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("trained base models behave sensibly") {
    const auto& b = shared_bundle();
    const auto held_out = small_corpus(60, 99);
    CHECK(listener_accuracy(*b.listener, held_out) > 0.85);

    // option 0 is the cheapest, otherwise identical carriers and stops
    const auto m = options_from({{1, 0, 0, 0, 0.1, 0.5, 0.5, 0.5}, {1, 0, 0, 0, 0.6, 0.5, 0.5, 0.5}, {1, 0, 0, 0, 0.9, 0.5, 0.5, 0.5}});
    const auto p = b.listener->prob(Utterance::from_text("cheapest one"), m);
    CHECK(p[0] > p[1]);
    CHECK(p[0] > p[2]);

    const auto& g = Grammar::builtin();
    const auto support = g.enumerate(1);
    const auto theta = RewardVector::from_weights({0, 0, 1, 0, 0, 0, 0, 0});
    const auto s = b.speaker->prob(theta, support);
    double consistent = 0.0, flipped = 0.0, other = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        const auto f = g.parse(support[i]);
        if (f.clauses.size() != 1 || !is_carrier(f.clauses[0].target)) continue;
        if (f.clauses[0].target != Feature::JetBlue) {
            if (f.clauses[0].polarity == Polarity::Positive) other += s[i];
            continue;
        }
        (f.clauses[0].polarity == Polarity::Positive ? consistent : flipped) += s[i];
    }
    CHECK(consistent > flipped);
    CHECK(consistent > 2.0 * other / 3.0);

    const auto no_jetblue = options_from({{1, 0, 0, 0, 0.05, 0.5, 0.5, 0.5}, {0, 1, 0, 0, 0.7, 0.5, 0.5, 0.5}, {0, 0, 0, 1, 0.9, 0.5, 0.5, 0.5}});
    const auto a = b.action_speaker->prob(no_jetblue, 0, support);
    CHECK(a[*support.find(Utterance::from_text("cheapest"))] > a[*support.find(Utterance::from_text("jetblue"))]);
}

TEST_CASE("mixture weight tracks how reward-descriptive the corpus is") {
    // utterances name theta's heaviest component whatever the options
    Rng rng(31);
    const auto& g = Grammar::builtin();
    Corpus corpus;
    for (int i = 0; i < 400; ++i) {
        CorpusRound row;
        row.game_id = "r" + std::to_string(i / 6);
        row.round = i % 6;
        row.theta = sample_reward(rng);
        do row.options = sample_option_set(rng); while (row.options.has_duplicates());
        row.xi_star = optimal_option(row.theta, row.options).index;
        std::size_t top = 0;
        for (std::size_t f = 1; f < kNumFeatures; ++f)
            if (std::abs(row.theta.weight(f)) > std::abs(row.theta.weight(top))) top = f;
        const double w = row.theta.weight(top);
        Clause c{w > 0 ? Polarity::Positive : Polarity::Negative, static_cast<Feature>(top), std::abs(w) >= 1.0 ? Degree::Strong : Degree::Weak};
        if (w == 0.0) continue;
        // price and stops read with the opposite sign: "cheap" asserts a negative weight
        bool ok = clause_consistent(c, row.theta);
        if (!ok) c.polarity = c.polarity == Polarity::Positive ? Polarity::Negative : Polarity::Positive;
        REQUIRE(clause_consistent(c, row.theta));
        row.utterance = g.realize(SemanticForm{{c}}, rng);
        corpus.push_back(row);
    }
    TrainConfig cfg;
    cfg.max_epochs = 200;
    std::vector<Utterance> us;
    for (const auto& r : corpus) us.push_back(r.utterance);
    auto enc = std::make_shared<UtteranceEncoder>(UtteranceEncoder::build(us));
    const auto s = train_speaker_latent(corpus, enc, cfg);
    CHECK(1.0 / (1.0 + std::exp(-s.mixture_logit)) > 0.5);
}
