#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "flightpref/base_models.hpp"
#include "helpers.hpp"

using namespace flightpref;
using fp_test::encoder_for;
using fp_test::random_matrix;

namespace {

const UtteranceSet& small_support() {
    static const UtteranceSet s = Grammar::builtin().enumerate(1);
    return s;
}

double sum(std::span<const double> p) {
    double s = 0.0;
    for (double x : p) s += x;
    return s;
}

}  // namespace

TEST_CASE("zero-initialized models are uniform") {
    auto enc = encoder_for(small_support());
    const auto b = ModelBundle::zeros(enc);
    Rng rng(1);
    const auto m = sample_option_set(rng);
    const auto l = lbase_prob(*b.listener, Utterance::from_text("cheapest"), m);
    for (double p : l) CHECK(p == 1.0 / 3.0);

    const auto s = sbase_prob(*b.speaker, sample_reward(rng), small_support());
    for (double p : s) CHECK(p == doctest::Approx(1.0 / small_support().size()).epsilon(1e-14));
    const auto a = sact_prob(*b.action_speaker, m, 1, small_support());
    for (double p : a) CHECK(p == doctest::Approx(1.0 / small_support().size()).epsilon(1e-14));
}

TEST_CASE("random models give normalized positive distributions") {
    auto enc = encoder_for(small_support());
    Rng rng(2);
    const auto d = static_cast<Eigen::Index>(enc->dim());
    for (int t = 0; t < 20; ++t) {
        LinearListener listener(enc, random_matrix(kListenerCodeDim, d, 2.0, rng));
        LinearRewardSpeaker speaker(enc, random_matrix(kRewardCodeDim, d, 2.0, rng));
        LinearActionSpeaker action(enc, random_matrix(kActionCodeDim, d, 2.0, rng));
        const auto m = sample_option_set(rng);
        const auto& u = small_support()[static_cast<std::size_t>(rng.uniform_int(small_support().size()))];
        const auto l = listener.prob(u, m);
        CHECK(sum(l) == doctest::Approx(1.0).epsilon(1e-12));
        for (double p : l) CHECK(p > 0.0);
        CHECK(sum(speaker.prob(sample_reward(rng), small_support())) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sum(action.prob(m, 2, small_support())) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("reward speaker logit is code(theta) . W e(u) / tau") {
    auto enc = encoder_for(small_support());
    Rng rng(3);
    const auto w = random_matrix(kRewardCodeDim, static_cast<Eigen::Index>(enc->dim()), 1.0, rng);
    LinearRewardSpeaker speaker(enc, w, 3.0);
    const auto theta = sample_reward(rng);
    const auto u = Utterance::from_text("i love delta");
    const auto e = enc->encode(u);
    double expected = 0.0;
    for (std::size_t k = 0; k < e.index.size(); ++k) {
        double row = w(kRewardCodeDim - 1, e.index[k]);
        for (std::size_t i = 0; i < kNumFeatures; ++i) row += w(static_cast<Eigen::Index>(i * kGridLevels + theta.level(i)), e.index[k]);
        expected += row * e.value[k];
    }
    CHECK(speaker.logit(theta, u) == doctest::Approx(expected / 3.0).epsilon(1e-13));
}

TEST_CASE("temperature flattens the reward speaker") {
    auto enc = encoder_for(small_support());
    Rng rng(4);
    const auto w = random_matrix(kRewardCodeDim, static_cast<Eigen::Index>(enc->dim()), 2.0, rng);
    const auto theta = sample_reward(rng);
    double prev = 1.0;
    for (double tau : {0.5, 1.0, 3.0, 10.0, 100.0}) {
        const auto p = LinearRewardSpeaker(enc, w, tau).prob(theta, small_support());
        const double mx = *std::max_element(p.begin(), p.end());
        CHECK(mx <= prev + 1e-15);
        prev = mx;
    }
    const auto flat = LinearRewardSpeaker(enc, w, 1e9).prob(theta, small_support());
    for (double p : flat) CHECK(p == doctest::Approx(1.0 / small_support().size()).epsilon(1e-6));
    CHECK_THROWS_AS(LinearRewardSpeaker(enc, w, 3.0).prob(theta, UtteranceSet{}), std::invalid_argument);
}

TEST_CASE("ensembles average member probabilities") {
    std::vector<std::vector<double>> two{{0.2, 0.8}, {0.6, 0.4}};
    const auto avg = ensemble_average(two);
    CHECK(avg[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(avg[1] == doctest::Approx(0.6).epsilon(1e-15));
    std::vector<std::vector<double>> mismatched{{0.5, 0.5}, {0.2, 0.3, 0.5}};
    CHECK_THROWS_AS(ensemble_average(mismatched), std::invalid_argument);
    CHECK_THROWS_AS(ensemble_average(std::span<const std::vector<double>>{}), std::invalid_argument);

    auto enc = encoder_for(small_support());
    Rng rng(5);
    auto member = std::make_shared<LinearListener>(enc, random_matrix(kListenerCodeDim, static_cast<Eigen::Index>(enc->dim()), 1.0, rng));
    const auto m = sample_option_set(rng);
    const auto u = Utterance::from_text("never jetblue");
    const EnsembleListener single({member});
    CHECK(single.prob(u, m) == member->prob(u, m));
    const EnsembleListener copies({member, member, member, member, member});
    for (std::size_t i = 0; i < kNumOptions; ++i) CHECK(std::abs(copies.prob(u, m)[i] - member->prob(u, m)[i]) < 1e-12);
}

TEST_CASE("hard negatives swap one attribute mention") {
    Rng rng(6);
    const auto jb = hard_negatives(Utterance::from_text("jetblue one"), 1, rng);
    REQUIRE(jb.size() == 1);
    CHECK(std::set<std::string>{"southwest one", "american one", "delta one"}.count(jb[0].text()) == 1);

    const auto original = Utterance::from_text("one stop that is short");
    const auto stops = hard_negatives(original, 4, rng);
    CHECK_FALSE(stops.empty());
    const auto& g = Grammar::builtin();
    const auto form = g.parse(original);
    for (const auto& h : stops) {
        CHECK(h.text().find("that is short") != std::string::npos);
        CHECK(h.text().find("one stop") == std::string::npos);
        const auto hf = g.parse(h);
        REQUIRE(hf.clauses.size() == form.clauses.size());
        int diff = 0;
        for (std::size_t c = 0; c < hf.clauses.size(); ++c) diff += hf.clauses[c] == form.clauses[c] ? 0 : 1;
        CHECK(diff == 1);
    }
    CHECK(hard_negatives(Utterance::from_text("cheapest please"), 4, rng).empty());
    CHECK_THROWS_AS(hard_negatives(original, 5, rng), std::invalid_argument);
}

TEST_CASE("every hard negative of an enumerated utterance changes one clause") {
    const auto& g = Grammar::builtin();
    Rng rng(7);
    for (const auto& u : g.enumerate(2)) {
        const auto form = g.parse(u);
        for (const auto& h : hard_negatives(u, 4, rng)) {
            const auto hf = g.parse(h);
            REQUIRE(hf.clauses.size() == form.clauses.size());
            int diff = 0;
            for (std::size_t c = 0; c < hf.clauses.size(); ++c) diff += hf.clauses[c] == form.clauses[c] ? 0 : 1;
            CHECK(diff == 1);
        }
    }
}

TEST_CASE("encoder features") {
    auto enc = encoder_for(small_support());
    const auto e = enc->encode(Utterance::from_text("cheapest zzz"));
    CHECK(std::is_sorted(e.index.begin(), e.index.end()));
    CHECK(std::adjacent_find(e.index.begin(), e.index.end()) == e.index.end());
    CHECK(std::find(e.index.begin(), e.index.end(), enc->unk_index()) != e.index.end());
    CHECK(e.index.back() == enc->bias_index());
    // "zzz" makes the parse OOV, so no clause indicator fires
    for (auto i : e.index) CHECK_FALSE((i >= enc->clause_offset() && i < enc->clause_offset() + kNumClauses));
    const auto c = enc->encode(Utterance::from_text("cheapest"));
    const Clause cheapest{Polarity::Positive, Feature::Price, Degree::Superlative};
    CHECK(std::find(c.index.begin(), c.index.end(), enc->clause_offset() + cheapest.id()) != c.index.end());
}

TEST_CASE("model bundle round trip") {
    auto enc = encoder_for(small_support());
    Rng rng(8);
    auto b = ModelBundle::zeros(enc);
    b.listener->weights() = random_matrix(kListenerCodeDim, static_cast<Eigen::Index>(enc->dim()), 1.0, rng);
    b.speaker->weights() = random_matrix(kRewardCodeDim, static_cast<Eigen::Index>(enc->dim()), 1.0, rng);
    b.action_speaker->weights() = random_matrix(kActionCodeDim, static_cast<Eigen::Index>(enc->dim()), 1.0, rng);
    b.mixture_logit = 0.25;
    const auto path = std::filesystem::temp_directory_path() / "flightpref_bundle_test.json";
    b.save(path);
    const auto c = ModelBundle::load(path);
    std::filesystem::remove(path);
    CHECK(c.mixture_logit == 0.25);
    CHECK(c.listener->weights() == b.listener->weights());
    CHECK(c.speaker->weights() == b.speaker->weights());
    CHECK(c.action_speaker->weights() == b.action_speaker->weights());
    CHECK(c.encoder->vocabulary() == enc->vocabulary());

    auto j = b.to_json();
    j["kind"] = "something-else";
    CHECK_THROWS(ModelBundle::from_json(j));
    j = b.to_json();
    j["listener"]["rows"] = 3;
    CHECK_THROWS(ModelBundle::from_json(j));
}
