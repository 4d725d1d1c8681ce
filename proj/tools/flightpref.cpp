// flightpref: synthetic data, training, evaluation, simulation and play.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flightpref/datagen.hpp"
#include "flightpref/evaluation.hpp"
#include "flightpref/game.hpp"
#include "flightpref/service.hpp"
#include "flightpref/training.hpp"

namespace fs = std::filesystem;
using namespace flightpref;

namespace {

struct ModelOptions {
    std::vector<std::string> paths;
    int max_clauses = 2;
};

struct InferenceOptions {
    double alpha = 0.5;
    double beta = kInfiniteBeta;
    std::string inference = "exact";
    std::size_t samples = 200000;
    std::string proposal = "prior";
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
    cmd->add_option("--model", m.paths, "Trained model file; repeat to ensemble")->required();
    cmd->add_option("--max-clauses", m.max_clauses, "Clauses per utterance in the speaker support (1 or 2)")
        ->capture_default_str()
        ->check(CLI::Range(1, 2));
}

void add_inference_options(CLI::App* cmd, InferenceOptions& o) {
    cmd->add_option("--alpha", o.alpha, "Nearsightedness of the pragmatic speaker")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--beta", o.beta, "Speaker rationality; inf for argmax")->capture_default_str();
    cmd->add_option("--inference", o.inference, "exact or importance")
        ->capture_default_str()
        ->check(CLI::IsMember({"exact", "importance"}));
    cmd->add_option("--samples", o.samples, "Importance samples per update")->capture_default_str();
    cmd->add_option("--proposal", o.proposal, "Importance proposal: prior or uniform")
        ->capture_default_str()
        ->check(CLI::IsMember({"prior", "uniform"}));
}

PragmaticsConfig pragmatics_config(const InferenceOptions& o, std::uint64_t seed) {
    PragmaticsConfig cfg;
    cfg.alpha = o.alpha;
    cfg.beta = o.beta;
    cfg.inference = o.inference == "exact" ? InferenceMode::Exact : InferenceMode::Importance;
    cfg.n_samples = o.samples;
    cfg.proposal = o.proposal == "prior" ? Proposal::Prior : Proposal::Uniform;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

std::vector<ModelBundle> load_bundles(const ModelOptions& m) {
    std::vector<ModelBundle> bundles;
    for (const auto& p : m.paths) bundles.push_back(ModelBundle::load(p));
    return bundles;
}

std::shared_ptr<PragmaticModel> load_model(const ModelOptions& m) {
    const auto bundles = load_bundles(m);
    return make_pragmatic_model(bundles, Grammar::builtin().enumerate(m.max_clauses));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void print_round(const GameState& state) {
    const auto& r = state.current();
    std::cout << "\nRound " << state.round_index + 1 << " of " << kRoundsPerGame << "  (score " << state.score << ")\n";
    for (std::size_t i = 0; i < kNumOptions; ++i) {
        const auto& f = r.options[i];
        std::printf("  [%zu] %-10s price %.2f  stops %.1f  longest stop %.2f  arrival slack %.2f\n", i,
                    std::string(carrier_name(f.carrier)).c_str(), f.price_norm, f.stops_norm, f.longest_stop_norm,
                    f.arrival_slack_norm);
    }
}

void print_action(const AssistantAction& a, const RoundRecord& r) {
    if (a.kind == ActionKind::Ask) {
        std::cout << "Assistant asks for more information (" << kAskPoints << ").\n";
        return;
    }
    std::cout << "Assistant chooses option " << a.index << ": " << outcome_name(r.outcome) << " (" << r.points_delta
              << ").\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pragmatic reward inference in the FlightPref game"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Master random seed")->capture_default_str();

    // datagen
    auto* datagen = app.add_subcommand("datagen", "Generate a synthetic training corpus");
    DatagenConfig dg;
    std::string dg_out = "corpus.jsonl";
    std::string dg_utterances;
    datagen->add_option("--out", dg_out, "Output corpus (JSONL)")->capture_default_str();
    datagen->add_option("--games", dg.games, "Number of games")->capture_default_str();
    datagen->add_option("--rounds", dg.rounds, "Rounds per game")->capture_default_str();
    datagen->add_option("--farsighted-prob", dg.farsighted_prob, "Probability of a reward-describing utterance")
        ->capture_default_str();
    datagen->add_option("--max-clauses", dg.max_clauses, "Clauses per utterance (1 or 2)")->capture_default_str();
    datagen->add_option("--utterances-out", dg_utterances, "Also write the enumerated utterance set (JSONL)");

    // train
    auto* train = app.add_subcommand("train", "Train the base listener and speakers");
    std::string tr_corpus, tr_config, tr_out = "model.json";
    train->add_option("--corpus", tr_corpus, "Training corpus (JSONL)")->required();
    train->add_option("--config", tr_config, "Training config (key = value lines)");
    train->add_option("--out", tr_out, "Output model file")->capture_default_str();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score the full model and its ablations");
    ModelOptions ev_model;
    InferenceOptions ev_inf;
    std::string ev_corpus, ev_out_dir = "eval";
    std::size_t ev_games = 91, ev_sets = 1000, ev_bootstrap = 10000, ev_oracle_thetas = 500;
    double ev_gen_alpha = 0.5, ev_flip = 0.0;
    add_model_options(evaluate, ev_model);
    add_inference_options(evaluate, ev_inf);
    evaluate->add_option("--corpus", ev_corpus, "Evaluation games (JSONL); synthetic games when omitted");
    evaluate->add_option("--games", ev_games, "Synthetic games to generate")->capture_default_str();
    evaluate->add_option("--gen-alpha", ev_gen_alpha, "Nearsightedness of the synthetic speaker")->capture_default_str();
    evaluate->add_option("--held-out-sets", ev_sets, "Option sets per held-out accuracy")->capture_default_str();
    evaluate->add_option("--bootstrap", ev_bootstrap, "Paired bootstrap resamples")->capture_default_str();
    evaluate->add_option("--oracle-thetas", ev_oracle_thetas, "Rewards sampled for the oracle-k rows (0 skips)")
        ->capture_default_str();
    evaluate->add_option("--listener-flip-rate", ev_flip,
                         "Fraction of listener outputs rotated to wrong options during inference")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    evaluate->add_option("--out-dir", ev_out_dir, "Directory for report.json, table.txt, curves.csv")
        ->capture_default_str();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Closed-loop games against a synthetic user");
    ModelOptions sim_model;
    InferenceOptions sim_inf;
    std::size_t sim_games = 100;
    double sim_threshold = 0.8, sim_speaker_alpha = 0.5;
    std::string sim_speaker = "s1", sim_log_dir;
    bool sim_demo = false;
    add_model_options(simulate, sim_model);
    add_inference_options(simulate, sim_inf);
    simulate->add_option("--games", sim_games, "Number of games")->capture_default_str();
    simulate->add_option("--threshold", sim_threshold, "Assistant confidence threshold")->capture_default_str();
    simulate->add_option("--speaker", sim_speaker, "s1 or scripted")
        ->capture_default_str()
        ->check(CLI::IsMember({"s1", "scripted"}));
    simulate->add_option("--speaker-alpha", sim_speaker_alpha, "Nearsightedness of the s1 user")->capture_default_str();
    simulate->add_flag("--demonstration", sim_demo, "Condition on the correct option after a wrong choice");
    simulate->add_option("--log-dir", sim_log_dir, "Write one event log per game here");

    // play
    auto* play = app.add_subcommand("play", "Play a game in the terminal as the user");
    ModelOptions play_model;
    InferenceOptions play_inf;
    double play_threshold = 0.8;
    add_model_options(play, play_model);
    add_inference_options(play, play_inf);
    play->add_option("--threshold", play_threshold, "Assistant confidence threshold")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP service for interactive sessions");
    ModelOptions srv_model;
    InferenceOptions srv_inf;
    std::string srv_host = "127.0.0.1", srv_log_dir = "sessions", srv_web_dir;
    int srv_port = 8080;
    double srv_threshold = 0.8;
    add_model_options(serve, srv_model);
    add_inference_options(serve, srv_inf);
    serve->add_option("--host", srv_host, "Bind address")->capture_default_str();
    serve->add_option("--port", srv_port, "Port")->capture_default_str();
    serve->add_option("--log-dir", srv_log_dir, "Session event logs")->capture_default_str();
    serve->add_option("--web-dir", srv_web_dir, "Static UI assets to serve at /");
    serve->add_option("--threshold", srv_threshold, "Assistant confidence threshold")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (datagen->parsed()) {
            dg.seed = seed;
            const auto corpus = generate_corpus(dg);
            write_corpus(fs::path(dg_out), corpus);
            if (!dg_utterances.empty()) {
                std::ofstream out(dg_utterances);
                write_utterance_corpus(out, Grammar::builtin().enumerate(dg.max_clauses));
            }
            std::cout << "wrote " << corpus.size() << " rows to " << dg_out << "\n";
        } else if (train->parsed()) {
            auto config = tr_config.empty() ? TrainConfig{} : load_train_config(tr_config);
            if (app.get_option("--seed")->count() > 0) config.seed = seed;
            const auto ingested = ingest_corpus(fs::path(tr_corpus));
            for (const auto& r : ingested.rejected) std::cerr << "line " << r.line << ": " << r.reason << "\n";
            const auto bundle = train_bundle(ingested.corpus, config);
            bundle.save(tr_out);
            std::cout << bundle.metadata.dump(2) << "\nlistener training accuracy "
                      << listener_accuracy(*bundle.listener, ingested.corpus) << "\nsaved " << tr_out << "\n";
        } else if (evaluate->parsed()) {
            const auto bundles = load_bundles(ev_model);
            const auto support = Grammar::builtin().enumerate(ev_model.max_clauses);
            auto model = make_pragmatic_model(bundles, support);
            Corpus corpus;
            if (!ev_corpus.empty()) {
                const auto ingested = ingest_corpus(fs::path(ev_corpus));
                for (const auto& r : ingested.rejected) std::cerr << "line " << r.line << ": " << r.reason << "\n";
                corpus = ingested.corpus;
            } else {
                auto gen = pragmatics_config(ev_inf, derive_seed(seed, 1));
                gen.alpha = ev_gen_alpha;
                auto speaker = SyntheticSpeaker::s1_sampler(model, gen, derive_seed(seed, 2));
                corpus = synthetic_corpus(ev_games, speaker, derive_seed(seed, 3));
            }
            const auto games = group_games(corpus);
            if (ev_flip > 0.0) {
                auto noisy = std::make_shared<PerturbedListener>(std::shared_ptr<const Listener>(model, &model->listener()),
                                                                 ev_flip, derive_seed(seed, 4));
                auto grid = std::shared_ptr<const RewardSpeakerGrid>(model, &model->reward_speaker());
                model = std::make_shared<PragmaticModel>(noisy, grid);
            }
            const auto specs = default_eval_models(pragmatics_config(ev_inf, derive_seed(seed, 5)));
            EvalOptions options;
            options.held_out_sets = ev_sets;
            options.seed = derive_seed(seed, 6);
            auto report = run_models(games, *model, specs, options);
            report.models.push_back(switch_results(report.model("action_only"), report.model("reward_only")));
            auto known = run_model(games, *model, specs[0], EvalOptions{ev_sets, options.seed, true});
            known.name = "full_known_action";
            report.models.push_back(std::move(known));
            add_comparisons(report, "full", ev_bootstrap, derive_seed(seed, 7));
            std::vector<MeanStderr> oracle;
            if (ev_oracle_thetas > 0) oracle = oracle_k_accuracies(ev_oracle_thetas, ev_sets, derive_seed(seed, 8));
            report.metadata["seed"] = seed;
            report.metadata["eval_games"] = games.size();
            report.metadata["listener_flip_rate"] = ev_flip;
            report.metadata["listener_accuracy"] = listener_accuracy(model->listener(), corpus);
            if (!oracle.empty()) {
                json ok = json::array();
                for (const auto& o : oracle) ok.push_back({{"mean", o.mean}, {"stderr", o.se}});
                report.metadata["oracle_k"] = ok;
            }
            const auto table = format_table(report, oracle);
            write_text(fs::path(ev_out_dir) / "report.json", to_json(report).dump(2) + "\n");
            write_text(fs::path(ev_out_dir) / "table.txt", table);
            write_text(fs::path(ev_out_dir) / "curves.csv", curves_csv(report));
            std::cout << table;
        } else if (simulate->parsed()) {
            auto model = load_model(sim_model);
            AssistantPolicy policy;
            policy.confidence_threshold = sim_threshold;
            policy.cfg = pragmatics_config(sim_inf, derive_seed(seed, 1));
            policy.demonstration = sim_demo;
            auto gen = policy.cfg;
            gen.alpha = sim_speaker_alpha;
            auto speaker = sim_speaker == "s1" ? SyntheticSpeaker::s1_sampler(model, gen, derive_seed(seed, 2))
                                               : SyntheticSpeaker::scripted(Grammar::builtin(), derive_seed(seed, 2));
            std::vector<double> scores;
            std::size_t correct = 0, incorrect = 0, asks = 0;
            if (!sim_log_dir.empty()) fs::create_directories(sim_log_dir);
            for (std::size_t g = 0; g < sim_games; ++g) {
                const std::string id = "sim" + std::to_string(g);
                auto state = start_game(make_game_setup(id, derive_seed(seed, 100 + g)));
                std::vector<json> events{create_event(state.setup, policy)};
                while (!state.finished()) {
                    if (state.phase == Phase::AwaitingUtterance) {
                        const auto u = speaker.speak(state.setup.theta_star, state.current().options);
                        observe_utterance(state, u, *model, policy);
                        events.push_back(utterance_event(u.text()));
                    } else {
                        assistant_act(state, policy);
                        events.push_back(action_event());
                    }
                }
                if (!sim_log_dir.empty()) {
                    std::ofstream out(fs::path(sim_log_dir) / (id + ".jsonl"));
                    for (const auto& e : events) out << e.dump() << "\n";
                }
                scores.push_back(state.score);
                correct += state.count(Outcome::Correct);
                incorrect += state.count(Outcome::Incorrect);
                asks += state.asks();
            }
            const auto s = mean_stderr(scores);
            std::cout << json{{"games", sim_games},
                              {"mean_score", s.mean},
                              {"stderr", s.se},
                              {"correct", correct},
                              {"incorrect", incorrect},
                              {"asks", asks}}
                             .dump(2)
                      << "\n";
        } else if (play->parsed()) {
            auto model = load_model(play_model);
            AssistantPolicy policy;
            policy.confidence_threshold = play_threshold;
            policy.cfg = pragmatics_config(play_inf, derive_seed(seed, 1));
            auto state = start_game(make_game_setup("play", seed));
            std::cout << "Your reward weights (carriers, price, stops, longest stop, arrival slack):\n ";
            for (double w : state.setup.theta_star.weights()) std::cout << " " << w;
            std::cout << "\nDescribe what you want; the assistant chooses or asks.\n";
            std::size_t shown = kRoundsPerGame;
            while (!state.finished()) {
                if (state.round_index != shown) {
                    print_round(state);
                    shown = state.round_index;
                }
                if (state.phase == Phase::AwaitingAction) {
                    const std::size_t acted = state.rounds.size() - 1;
                    const auto a = assistant_act(state, policy);
                    print_action(a, state.rounds[acted]);
                    continue;
                }
                std::cout << "> " << std::flush;
                std::string line;
                if (!std::getline(std::cin, line)) break;
                const auto u = Utterance::from_text(line);
                if (u.tokens.empty()) continue;
                observe_utterance(state, u, *model, policy);
                std::cout << "  posterior mean:";
                for (double w : state.posterior.mean()) std::printf(" %+.2f", w);
                std::cout << "\n";
            }
            std::cout << "\nFinal score " << state.score << "\n";
        } else if (serve->parsed()) {
            auto model = load_model(srv_model);
            ServiceConfig config;
            config.log_dir = srv_log_dir;
            config.seed = seed;
            config.policy.confidence_threshold = srv_threshold;
            config.policy.cfg = pragmatics_config(srv_inf, derive_seed(seed, 1));
            GameService service(model, config);
            std::optional<fs::path> web;
            if (!srv_web_dir.empty()) web = fs::path(srv_web_dir);
            HttpServer server(service, web);
            if (!server.bind(srv_host, srv_port)) {
                std::cerr << "cannot bind " << srv_host << ":" << srv_port << "\n";
                return 1;
            }
            std::cout << "serving on http://" << srv_host << ":" << srv_port << " (" << service.session_ids().size()
                      << " sessions resumed)\n";
            server.listen_after_bind();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
