#include <doctest.h>

#include <cmath>
#include <regex>

#include "flightpref/datagen.hpp"
#include "flightpref/evaluation.hpp"
#include "helpers.hpp"

using namespace flightpref;

namespace {

const UtteranceSet& support() {
    static const UtteranceSet s = Grammar::builtin().enumerate(1);
    return s;
}

std::vector<GameRecord> games(std::size_t n, std::uint64_t seed) {
    return group_games(generate_corpus(DatagenConfig{.games = n, .rounds = 3, .max_clauses = 1, .seed = seed}));
}

// Listener that knows the answer for every recorded round, shifted by `offset`.
class AnswerListener final : public Listener {
public:
    AnswerListener(std::span<const GameRecord> gs, std::size_t offset) : offset_(offset) {
        for (const auto& g : gs)
            for (const auto& r : g.rounds)
                for (const auto& row : r) rows_.push_back(row);
    }
    OptionDistribution prob(const Utterance& u, const OptionSet& m) const override {
        for (const auto& row : rows_)
            if (row.options == m && row.utterance == u) {
                OptionDistribution p{};
                p[(row.xi_star + offset_) % kNumOptions] = 1.0;
                return p;
            }
        return {1.0 / 3, 1.0 / 3, 1.0 / 3};
    }

private:
    std::vector<CorpusRound> rows_;
    std::size_t offset_;
};

std::shared_ptr<PragmaticModel> model_with(std::shared_ptr<const Listener> listener) {
    auto speaker = std::make_shared<LinearRewardSpeaker>(fp_test::encoder_for(support()));
    auto grid = std::make_shared<RewardSpeakerGrid>(std::vector<std::shared_ptr<const LinearRewardSpeaker>>{speaker}, support());
    return std::make_shared<PragmaticModel>(std::move(listener), grid);
}

}  // namespace

TEST_CASE("held-out accuracy") {
    Rng a(1);
    const auto theta = RewardVector::from_weights({1, -0.5, 0, 0.5, -1, 0.5, -0.5, 1});
    CHECK(held_out_accuracy(theta.weights(), theta, 500, a) == 1.0);

    FeatureVector guess{0, 0, 1, 0, -1, 0, 0, 0};
    Rng c(2), oracle(2);
    const double got = held_out_accuracy(guess, theta, 2000, c);
    std::size_t agree = 0;
    for (int s = 0; s < 2000; ++s) {
        const auto m = sample_option_set(oracle);
        std::size_t bh = 0, bs = 0;
        for (std::size_t i = 1; i < 3; ++i) {
            if (fp_test::naive_reward(guess, m[i].features()) > fp_test::naive_reward(guess, m[bh].features()) + 1e-12) bh = i;
            if (fp_test::naive_reward(theta.weights(), m[i].features()) > fp_test::naive_reward(theta.weights(), m[bs].features()) + 1e-12) bs = i;
        }
        agree += bh == bs ? 1 : 0;
    }
    CHECK(got == doctest::Approx(agree / 2000.0).epsilon(1e-15));

    Rng d(3);
    FeatureVector neg{};
    for (std::size_t i = 0; i < 8; ++i) neg[i] = -theta.weight(i);
    CHECK(held_out_accuracy(neg, theta, 1000, d) < 0.2);
    CHECK_THROWS_AS(held_out_accuracy(guess, theta, 0, d), std::invalid_argument);
}

TEST_CASE("reward L2 distance") {
    FeatureVector ones{};
    ones.fill(1.0);
    CHECK(l2_distance(ones, FeatureVector{}) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-15));
    CHECK(l2_distance(ones, ones) == 0.0);
}

TEST_CASE("oracle-k baseline") {
    const auto theta = RewardVector::from_weights({1, -0.5, 1, 0.5, -1, 0.5, -0.5, 1});
    Rng rng(4);
    CHECK(oracle_k_baseline(theta, 0, rng) == FeatureVector{});
    CHECK(oracle_k_baseline(theta, 8, rng) == theta.weights());
    for (int k = 1; k < 8; ++k) {
        const auto est = oracle_k_baseline(theta, k, rng);
        int revealed = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            if (est[i] != 0.0) {
                CHECK(est[i] == theta.weight(i));
                ++revealed;
            }
        }
        CHECK(revealed == k);
    }
    CHECK_THROWS_AS(oracle_k_baseline(theta, 9, rng), std::invalid_argument);
    const auto table = oracle_k_accuracies(60, 300, 5);
    REQUIRE(table.size() == 9);
    CHECK(table[8].mean == 1.0);
    CHECK(table[0].mean < table[4].mean);
    CHECK(table[4].mean < table[8].mean);
}

TEST_CASE("paired bootstrap") {
    Rng rng(6);
    const std::vector<double> a{0.1, 0.5, 0.9, 0.4, 0.7};
    CHECK(paired_bootstrap(a, a, 2000, rng) == 1.0);
    std::vector<double> noisy_a, noisy_b;
    for (int i = 0; i < 40; ++i) {
        noisy_a.push_back(rng.uniform01());
        noisy_b.push_back(noisy_a.back() - 0.05 - 0.01 * rng.uniform01());
    }
    CHECK(paired_bootstrap(noisy_a, noisy_b, 2000, rng) < 0.01);
    CHECK_THROWS_AS(paired_bootstrap(a, std::vector<double>{1.0}, 2000, rng), std::invalid_argument);
    CHECK_THROWS_AS(paired_bootstrap(std::vector<double>{}, std::vector<double>{}, 2000, rng), std::invalid_argument);
    CHECK_THROWS_AS(paired_bootstrap(a, a, 999, rng), std::invalid_argument);
}

TEST_CASE("paired bootstrap rejects about 5% of true nulls") {
    Rng rng(7);
    int rejected = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> x(40), y(40);
        for (int i = 0; i < 40; ++i) {
            x[static_cast<std::size_t>(i)] = rng.normal();
            y[static_cast<std::size_t>(i)] = rng.normal();
        }
        rejected += paired_bootstrap(x, y, 1000, rng) < 0.05 ? 1 : 0;
    }
    const double rate = rejected / static_cast<double>(trials);
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);
}

TEST_CASE("mean and standard error") {
    const std::vector<double> xs{1, 2, 3, 4};
    const auto m = mean_stderr(xs);
    CHECK(m.mean == 2.5);
    CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-15));
    CHECK(mean_stderr(std::vector<double>{7}).se == 0.0);
}

TEST_CASE("perturbed listener") {
    auto base = fp_test::random_model(support(), 8);
    auto shared = std::shared_ptr<const Listener>(base, &base->listener());
    const PerturbedListener none(shared, 0.0, 1), all(shared, 1.0, 1), some(shared, 0.3, 1);
    Rng rng(9);
    int flipped = 0;
    for (int t = 0; t < 2000; ++t) {
        const auto m = sample_option_set(rng);
        const auto& u = support()[static_cast<std::size_t>(rng.uniform_int(support().size()))];
        const auto p = shared->prob(u, m);
        CHECK(none.prob(u, m) == p);
        auto q = all.prob(u, m);
        CHECK(q != p);
        std::sort(q.begin(), q.end());
        auto ps = p;
        std::sort(ps.begin(), ps.end());
        CHECK(q == ps);
        flipped += some.perturbed(u, m) ? 1 : 0;
        CHECK(some.prob(u, m) == some.prob(u, m));
    }
    CHECK(std::abs(flipped / 2000.0 - 0.3) < 0.04);
    CHECK_THROWS_AS(PerturbedListener(shared, 1.5, 0), std::invalid_argument);
}

TEST_CASE("evaluation runs") {
    const auto gs = games(3, 10);
    auto model = fp_test::random_model(support(), 11);
    PragmaticsConfig base;
    const auto specs = default_eval_models(base);
    REQUIRE(specs.size() == 3);
    CHECK(specs[0].name == "full");
    CHECK(specs[0].cfg.alpha == 0.5);
    CHECK(specs[1].cfg.alpha == 1.0);
    CHECK(specs[2].cfg.alpha == 0.0);
    EvalOptions opts;
    opts.held_out_sets = 200;
    auto report = run_models(gs, *model, specs, opts);
    REQUIRE(report.models.size() == 3);
    for (const auto& m : report.models) {
        CHECK(m.points.size() == 9);
        CHECK(m.curve.size() == 3);
        CHECK(m.points[2].utterances == 3);
    }

    SUBCASE("alpha = 1 equals the action-only likelihood") {
        EvalModel a{"s1_alpha1", base, PragmaticModel::Likelihood::S1};
        a.cfg.alpha = 1.0;
        EvalModel b{"action", base, PragmaticModel::Likelihood::ActionOnly};
        const auto ra = run_model(gs, *model, a, opts), rb = run_model(gs, *model, b, opts);
        for (std::size_t i = 0; i < ra.points.size(); ++i) {
            CHECK(ra.points[i].accuracy == rb.points[i].accuracy);
            CHECK(ra.points[i].l2 == rb.points[i].l2);
        }
        CHECK(ra.points[0].accuracy == report.model("action_only").points[0].accuracy);
    }

    SUBCASE("the oracle switch dominates both ablations") {
        const auto sw = switch_results(report.model("action_only"), report.model("reward_only"));
        CHECK(sw.accuracy.mean >= report.model("action_only").accuracy.mean);
        CHECK(sw.accuracy.mean >= report.model("reward_only").accuracy.mean);
        for (std::size_t i = 0; i < sw.points.size(); ++i)
            CHECK(sw.points[i].accuracy == std::max(report.model("action_only").points[i].accuracy, report.model("reward_only").points[i].accuracy));
        const auto r = oracle_switch(gs, *model, specs[1], specs[2], opts);
        CHECK(r.models.back().name == "oracle_switch");
        const auto only = oracle_switch(gs, *model, specs[1], std::nullopt, opts);
        CHECK(only.models.back().accuracy.mean == only.models[0].accuracy.mean);
    }

    SUBCASE("outputs") {
        add_comparisons(report, "full", 1000, 3);
        CHECK(report.comparisons.size() == 2);
        const auto j = to_json(report);
        CHECK(j["v"] == "v1");
        CHECK(j["models"].size() == 3);
        CHECK(j["comparisons"][0]["a"] == "full");
        CHECK(j["metadata"]["config_hash"].get<std::string>().size() == 16);
        CHECK(std::regex_match(j["metadata"]["config_hash"].get<std::string>(), std::regex("[0-9a-f]{16}")));
        const auto table = format_table(report, oracle_k_accuracies(5, 50, 1));
        CHECK(table.find("action_only") != std::string::npos);
        CHECK(table.find("oracle (k=8)") != std::string::npos);
        CHECK(table.find("paired bootstrap p") != std::string::npos);
        const auto csv = curves_csv(report);
        CHECK(csv.rfind("round_index,model,accuracy,l2,stderr\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3);
        CHECK_THROWS_AS(report.model("missing"), std::out_of_range);
    }
    CHECK(config_hash(json{{"a", 1}}) == config_hash(json{{"a", 1}}));
    CHECK(config_hash(json{{"a", 1}}) != config_hash(json{{"a", 2}}));
}

TEST_CASE("known-action ablation") {
    const auto gs = games(3, 12);
    PragmaticsConfig base;
    EvalOptions opts;
    opts.held_out_sets = 200;
    const EvalModel full{"full", base};

    const auto perfect = model_with(std::make_shared<AnswerListener>(gs, 0));
    const auto r = known_action_ablation(gs, *perfect, full, opts);
    REQUIRE(r.models.size() == 2);
    CHECK(r.models[1].name == "full_known_action");
    CHECK(r.models[1].skipped_updates == 0);
    for (std::size_t i = 0; i < r.models[0].points.size(); ++i) CHECK(r.models[0].points[i].l2 == r.models[1].points[i].l2);

    const auto wrong = model_with(std::make_shared<AnswerListener>(gs, 1));
    const auto w = known_action_ablation(gs, *wrong, full, opts);
    std::size_t expected_skips = 0;
    std::vector<bool> all_skipped(gs.size(), true);
    for (std::size_t g = 0; g < gs.size(); ++g)
        for (const auto& round : gs[g].rounds)
            for (const auto& row : round) {
                const auto ties = optimal_option(row.theta, row.options).ties;
                const bool err = std::find(ties.begin(), ties.end(), (row.xi_star + 1) % 3) == ties.end();
                expected_skips += err ? 1 : 0;
                if (!err) all_skipped[g] = false;
            }
    CHECK(w.models[1].skipped_updates == expected_skips);
    for (const auto& p : w.models[1].points)
        if (all_skipped[p.game]) CHECK(p.l2 == doctest::Approx(l2_distance(FeatureVector{}, gs[p.game].theta.weights())).epsilon(1e-12));
}
