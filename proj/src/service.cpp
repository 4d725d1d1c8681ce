#include "flightpref/service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <httplib.h>

namespace flightpref {

struct GameService::Session {
    std::mutex mutex;
    GameState state;
    AssistantPolicy policy;
    std::ofstream log;

    void append(const json& event) {
        log << event.dump() << '\n';
        log.flush();
    }
};

namespace {

json action_json(const AssistantAction& a) {
    json j{{"kind", a.kind == ActionKind::Choose ? "choose" : "ask"}};
    if (a.kind == ActionKind::Choose) j["index"] = a.index;
    j["confidence"] = a.confidence;
    return j;
}

std::optional<std::uint64_t> session_number(const std::string& id) {
    if (id.size() < 2 || id[0] != 's') return std::nullopt;
    if (!std::all_of(id.begin() + 1, id.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    return std::stoull(id.substr(1));
}

}  // namespace

GameService::GameService(std::shared_ptr<const PragmaticModel> model, ServiceConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
    if (!model_) throw std::invalid_argument("game service needs a pragmatic model");
    config_.policy.cfg.validate();
    std::filesystem::create_directories(config_.log_dir);
    std::vector<std::filesystem::path> logs;
    for (const auto& entry : std::filesystem::directory_iterator(config_.log_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
        const auto events = read_event_log(path);
        auto s = std::make_unique<Session>();
        s->state = replay(events, *model_, &s->policy);
        s->log.open(path, std::ios::app);
        const std::string id = s->state.setup.game_id;
        if (auto n = session_number(id)) next_id_ = std::max(next_id_, *n + 1);
        sessions_.emplace(id, std::move(s));
    }
}

GameService::~GameService() = default;

GameService::Session& GameService::session(const std::string& id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionNotFound("unknown session " + id);
    return *it->second;
}

std::vector<std::string> GameService::session_ids() const {
    std::lock_guard lock(sessions_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
}

json GameService::create_session(const json& request) {
    if (!request.is_object()) throw std::invalid_argument("session request must be a JSON object");
    std::optional<RewardVector> theta;
    if (request.contains("theta")) theta = RewardVector::from_weights(request.at("theta").get<FeatureVector>());
    std::string id;
    std::uint64_t number;
    {
        std::lock_guard lock(sessions_mutex_);
        number = next_id_++;
        char buf[32];
        std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(number));
        id = buf;
    }
    const std::uint64_t seed =
        request.contains("seed") ? request.at("seed").get<std::uint64_t>() : derive_seed(config_.seed, number);
    auto s = std::make_unique<Session>();
    s->policy = config_.policy;
    s->state = start_game(make_game_setup(id, seed, theta));
    s->log.open(config_.log_dir / (id + ".jsonl"), std::ios::app);
    if (!s->log) throw std::runtime_error("cannot open session log in " + config_.log_dir.string());
    s->append(create_event(s->state.setup, s->policy));
    json out{{"session_id", id}, {"state", state_json(s->state)}};
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(id, std::move(s));
    return out;
}

json GameService::state(const std::string& id) const {
    auto& s = session(id);
    std::lock_guard lock(s.mutex);
    return state_json(s.state);
}

json GameService::posterior(const std::string& id) const {
    auto& s = session(id);
    std::lock_guard lock(s.mutex);
    return s.state.posterior.snapshot();
}

json GameService::act_locked(Session& s) {
    const std::size_t acted = s.state.rounds.size() - 1;
    const auto action = assistant_act(s.state, s.policy);
    s.append(action_event());
    const auto& round = s.state.rounds[acted];
    return json{{"action", action_json(action)},
                {"outcome", outcome_name(round.outcome)},
                {"points_delta", round.points_delta},
                {"posterior", s.state.posterior.snapshot()},
                {"state", state_json(s.state)}};
}

json GameService::submit_utterance(const std::string& id, const std::string& text) {
    auto& s = session(id);
    std::lock_guard lock(s.mutex);
    const auto u = Utterance::from_text(text);
    if (u.tokens.empty()) throw std::invalid_argument("utterance text is empty");
    observe_utterance(s.state, u, *model_, s.policy);
    s.append(utterance_event(text));
    json action = nullptr;
    if (s.state.phase == Phase::AwaitingAction) {
        const auto acted = act_locked(s);
        action = acted.at("action");
        action["outcome"] = acted.at("outcome");
        action["points_delta"] = acted.at("points_delta");
    }
    return json{{"state", state_json(s.state)}, {"posterior", s.state.posterior.snapshot()}, {"action", action}};
}

json GameService::assistant_action(const std::string& id) {
    auto& s = session(id);
    std::lock_guard lock(s.mutex);
    return act_locked(s);
}

// ------------------------------------------------------------ HTTP

struct HttpServer::Impl {
    GameService& service;
    httplib::Server server;

    explicit Impl(GameService& s) : service(s) {}
};

namespace {

template <typename Fn>
void respond(httplib::Response& res, Fn&& fn) {
    auto fail = [&res](int status, const std::string& message) {
        res.status = status;
        res.set_content(json{{"error", message}}.dump(), "application/json");
    };
    try {
        res.set_content(fn().dump(), "application/json");
    } catch (const SessionNotFound& e) {
        fail(404, e.what());
    } catch (const PhaseError& e) {
        fail(409, e.what());
    } catch (const json::exception& e) {
        fail(400, e.what());
    } catch (const std::invalid_argument& e) {
        fail(400, e.what());
    } catch (const std::exception& e) {
        fail(500, e.what());
    }
}

json body_json(const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); }

}  // namespace

HttpServer::HttpServer(GameService& service, std::optional<std::filesystem::path> web_dir)
    : impl_(std::make_unique<Impl>(service)) {
    auto& svr = impl_->server;
    GameService* svc = &service;
    svr.Post("/session", [svc](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return svc->create_session(body_json(req)); });
    });
    svr.Get(R"(/session/([^/]+)/state)", [svc](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return svc->state(req.matches[1]); });
    });
    svr.Get(R"(/session/([^/]+)/posterior)", [svc](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return svc->posterior(req.matches[1]); });
    });
    svr.Post(R"(/session/([^/]+)/utterance)", [svc](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return svc->submit_utterance(req.matches[1], body_json(req).at("text").get<std::string>()); });
    });
    svr.Post(R"(/session/([^/]+)/assistant_action)", [svc](const httplib::Request& req, httplib::Response& res) {
        respond(res, [&] { return svc->assistant_action(req.matches[1]); });
    });
    if (web_dir) svr.set_mount_point("/", web_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace flightpref
