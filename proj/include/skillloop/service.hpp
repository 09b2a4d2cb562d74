#pragma once

#include "skillloop/config.hpp"
#include "skillloop/error.hpp"
#include "skillloop/provider.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>

namespace skillloop {

/// HTTP status for a module error: 400 validation, 404 missing, 409 wrong
/// phase, 422 turn without skill, 502 provider, 500 otherwise.
int http_status(ErrorCode code);

nlohmann::json skill_summary_json(const Skill& skill);

/// HTTP/SSE front end. Endpoints:
///
///   POST   /v1/sessions                     {"user_id"}
///   POST   /v1/sessions/{id}/messages       {"text"}  -> text/event-stream
///   POST   /v1/sessions/{id}/end
///   POST   /v1/sessions/{id}/evolve         (manual mode)
///   POST   /v1/sessions/{id}/feedback       {"turn_index","positive"}
///   GET    /v1/skills?user_id=
///   GET    /v1/skills/{name}?user_id=
///   PUT    /v1/skills/{name}?user_id=       raw SKILL.md body
///   DELETE /v1/skills/{name}?user_id=
///   GET    /v1/users/{id}/memory
///   GET    /v1/users/{id}/suggestions
///   POST   /v1/suggestions/{sid}/confirm    {"user_id","accept"}
///   GET    /v1/users/{id}/rewards
///
/// Sessions live in memory; every write goes through the owning module.
/// Turns of one session are serialized, and all writes to one user's
/// workspace (turns, feedback, skill edits, evolution) share a lock.
class Service {
public:
    explicit Service(ApiConfig config);
    Service(ApiConfig config, std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbeddingProvider> embed);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port;
    /// the bound port is returned.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    /// Blocks until queued evolution jobs have finished.
    void wait_for_evolutions();

    const ApiConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace skillloop
