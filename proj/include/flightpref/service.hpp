#pragma once

// Session store behind the HTTP interface. Every session writes an
// append-only event log; on startup all logs in the directory are
// replayed, so a restarted service resumes its games.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flightpref/game.hpp"

namespace flightpref {

/// Unknown session id.
class SessionNotFound : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct ServiceConfig {
    std::filesystem::path log_dir = "sessions";
    AssistantPolicy policy;
    std::uint64_t seed = 0;
};

class GameService {
public:
    GameService(std::shared_ptr<const PragmaticModel> model, ServiceConfig config);
    ~GameService();

    /// Body may carry "seed" (integer) and "theta" (8 grid weights).
    /// Returns {"session_id", "state"}.
    json create_session(const json& request);
    json state(const std::string& id) const;
    /// Records the utterance; if the assistant then holds the turn it acts.
    /// Returns {"state", "posterior", "action"}; action is null if the
    /// assistant did not act, else {"kind", "index"?, "confidence", "outcome", "points_delta"}.
    json submit_utterance(const std::string& id, const std::string& text);
    /// Returns {"action", "outcome", "points_delta", "posterior", "state"}.
    json assistant_action(const std::string& id);
    json posterior(const std::string& id) const;

    std::vector<std::string> session_ids() const;
    const std::filesystem::path& log_dir() const { return config_.log_dir; }

private:
    struct Session;
    Session& session(const std::string& id) const;
    json act_locked(Session& s);

    std::shared_ptr<const PragmaticModel> model_;
    ServiceConfig config_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// JSON over HTTP:
///   POST /session, GET /session/{id}/state, POST /session/{id}/utterance,
///   POST /session/{id}/assistant_action, GET /session/{id}/posterior.
/// Static files are served from `web_dir` when given.
class HttpServer {
public:
    HttpServer(GameService& service, std::optional<std::filesystem::path> web_dir = std::nullopt);
    ~HttpServer();
    /// Binds an ephemeral port and returns it, or -1.
    int bind_any_port(const std::string& host);
    bool bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace flightpref
