#include "skillloop/service.hpp"

#include "skillloop/evolution.hpp"
#include "skillloop/runtime.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/util.hpp"
#include "skillloop/workspace.hpp"

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

namespace skillloop {

namespace fs = std::filesystem;
using json = nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidUserId:
        case ErrorCode::MalformedSkill:
        case ErrorCode::InvalidArgument:
        case ErrorCode::DimensionMismatch:
            return 400;
        case ErrorCode::SkillNotFound:
        case ErrorCode::SessionNotFound:
        case ErrorCode::TurnNotFound:
        case ErrorCode::SuggestionNotFound:
        case ErrorCode::UserNotFound:
            return 404;
        case ErrorCode::IllegalPhase:
        case ErrorCode::ConfirmationRequired:
            return 409;
        case ErrorCode::TurnWithoutSkill:
            return 422;
        case ErrorCode::ProviderError:
            return 502;
        default:
            return 500;
    }
}

json skill_summary_json(const Skill& s) {
    return {{"name", s.name},
            {"description", s.description},
            {"triggers", s.triggers},
            {"requires_sub_agent", s.requires_sub_agent},
            {"usage_count", s.meta.usage_count},
            {"success_count", s.meta.success_count},
            {"success_rate", s.meta.success_rate()},
            {"maturity", maturity_name(classify_maturity(s.meta))},
            {"created_at", format_iso8601(s.meta.created_at)},
            {"updated_at", format_iso8601(s.meta.updated_at)}};
}

namespace {

struct UserContext {
    std::mutex mu;
    Workspace workspace;
    SkillStore store;
    EmbeddingCache cache;

    UserContext(Workspace ws, SkillStore st)
        : workspace(std::move(ws)), store(std::move(st)),
          cache(workspace.root() / "configs" / "embedding_cache.json") {}
};

struct SessionEntry {
    std::mutex mu;
    std::shared_ptr<UserContext> user;
    SessionState state;
};

std::string new_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return std::string("s-") + buf;
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    return j;
}

template <typename T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw Error(ErrorCode::InvalidArgument, std::string("missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + name + "' has the wrong type");
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string sse_frame(const std::string& type, const json& data) {
    json payload = data.is_object() ? data : json{{"value", data}};
    payload["type"] = type;
    return "data: " + payload.dump() + "\n\n";
}

}  // namespace

struct Service::Impl : EvolutionScheduler {
    ApiConfig config;
    std::shared_ptr<ChatProvider> chat;
    std::shared_ptr<EmbeddingProvider> embed;
    ToolRegistry tools;
    httplib::Server server;
    std::thread server_thread;

    std::mutex mu;  // guards users and sessions maps
    std::map<std::string, std::shared_ptr<UserContext>> users;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions;

    std::mutex job_mu;
    std::condition_variable job_cv;
    std::condition_variable idle_cv;
    std::deque<std::pair<std::string, std::string>> jobs;
    std::size_t running = 0;
    bool stopping = false;
    std::vector<std::thread> workers;

    Impl(ApiConfig cfg, std::shared_ptr<ChatProvider> c, std::shared_ptr<EmbeddingProvider> e)
        : config(std::move(cfg)), chat(std::move(c)), embed(std::move(e)), tools(make_tool_registry(config)) {
        validate_config(config);
        fs::create_directories(config.data_root);
        for (std::size_t i = 0; i < std::max<std::size_t>(1, config.evolution_workers); ++i) {
            workers.emplace_back([this] { worker_loop(); });
        }
        routes();
    }

    ~Impl() override {
        server.stop();
        if (server_thread.joinable()) server_thread.join();
        {
            std::lock_guard lock(job_mu);
            stopping = true;
        }
        job_cv.notify_all();
        for (auto& w : workers) w.join();
    }

    // ---- evolution pool ----

    void schedule(const std::string& user_id, const std::string& session_id) override {
        {
            std::lock_guard lock(job_mu);
            jobs.emplace_back(user_id, session_id);
        }
        job_cv.notify_one();
    }

    void worker_loop() {
        for (;;) {
            std::pair<std::string, std::string> job;
            {
                std::unique_lock lock(job_mu);
                job_cv.wait(lock, [&] { return stopping || !jobs.empty(); });
                if (jobs.empty()) return;  // stopping with an empty queue
                job = jobs.front();
                jobs.pop_front();
                ++running;
            }
            try {
                evolve(job.first, job.second);
            } catch (const std::exception& e) {
                std::cerr << "evolution of " << job.second << " failed: " << e.what() << "\n";
            }
            {
                std::lock_guard lock(job_mu);
                --running;
            }
            idle_cv.notify_all();
        }
    }

    void wait_idle() {
        std::unique_lock lock(job_mu);
        idle_cv.wait(lock, [&] { return jobs.empty() && running == 0; });
    }

    EvolutionOutcome evolve(const std::string& user_id, const std::string& session_id) {
        auto user = user_context(user_id, false);
        EvolutionOutcome outcome;
        {
            std::lock_guard lock(user->mu);
            outcome = run_evolution(user->workspace, user->store, session_id, *chat, &user->cache, embed.get(),
                                    config.evolution());
        }
        if (auto s = find_session(session_id)) {
            std::lock_guard lock(s->mu);
            if (s->state.phase == SessionPhase::Ended) s->state.phase = SessionPhase::Evolved;
        }
        return outcome;
    }

    // ---- lookups ----

    std::shared_ptr<UserContext> user_context(const std::string& user_id, bool create) {
        if (!is_valid_user_id(user_id)) throw Error(ErrorCode::InvalidUserId, "invalid user id '" + user_id + "'");
        std::lock_guard lock(mu);
        if (auto it = users.find(user_id); it != users.end()) return it->second;
        if (!create && !fs::is_directory(config.data_root / user_id)) {
            throw Error(ErrorCode::UserNotFound, "unknown user '" + user_id + "'");
        }
        WorkspaceOptions opts;
        opts.default_skills_dir = config.default_skills_dir;
        auto ws = Workspace::init(config.data_root, user_id, opts);
        auto store = SkillStore::load(ws.root());
        for (const auto& w : store.warnings()) std::cerr << "skill store (" << user_id << "): " << w << "\n";
        auto ctx = std::make_shared<UserContext>(std::move(ws), std::move(store));
        users.emplace(user_id, ctx);
        return ctx;
    }

    std::shared_ptr<SessionEntry> find_session(const std::string& id) {
        std::lock_guard lock(mu);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    std::shared_ptr<SessionEntry> session(const std::string& id) {
        auto s = find_session(id);
        if (!s) throw Error(ErrorCode::SessionNotFound, "unknown session '" + id + "'");
        return s;
    }

    RuntimeDeps deps(UserContext& user, EventSink events = {}) {
        return RuntimeDeps{user.workspace, user.store, user.cache, *chat, embed.get(), tools,
                           config.runtime(), heuristic_message_tokens, std::move(events), this};
    }

    std::string query_user(const httplib::Request& req) {
        if (!req.has_param("user_id")) throw Error(ErrorCode::InvalidArgument, "missing user_id query parameter");
        return req.get_param_value("user_id");
    }

    // ---- routes ----

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    Handler guarded(Handler h) {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                h(req, res);
            } catch (const Error& e) {
                send_json(res, http_status(e.code()), {{"error", error_code_name(e.code())}, {"message", e.what()}});
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
            }
        };
    }

    void routes() {
        auto token = config.auth_token_env.empty() ? std::string{} : [&] {
            const char* v = std::getenv(config.auth_token_env.c_str());
            return std::string(v ? v : "");
        }();
        if (!token.empty()) {
            server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
                if (!req.path.starts_with("/v1/")) return httplib::Server::HandlerResponse::Unhandled;
                if (req.get_header_value("Authorization") == "Bearer " + token) {
                    return httplib::Server::HandlerResponse::Unhandled;
                }
                send_json(res, 401, {{"error", "Unauthorized"}, {"message", "missing or wrong bearer token"}});
                return httplib::Server::HandlerResponse::Handled;
            });
        }
        if (config.console_dir && fs::is_directory(*config.console_dir)) {
            server.set_mount_point("/console", config.console_dir->string());
        }

        server.Post("/v1/sessions", guarded([this](const auto& req, auto& res) {
            auto body = parse_body(req);
            auto user_id = field<std::string>(body, "user_id");
            auto user = user_context(user_id, true);
            auto entry = std::make_shared<SessionEntry>();
            entry->user = user;
            auto id = new_session_id();
            {
                std::lock_guard lock(user->mu);
                auto d = deps(*user);
                entry->state = open_session(d, id);
            }
            {
                std::lock_guard lock(mu);
                sessions.emplace(id, entry);
            }
            send_json(res, 201, {{"session_id", id}, {"user_id", user_id}, {"phase", "open"},
                                 {"evolution_mode", evolution_mode_name(config.evolution_mode)}});
        }));

        server.Post(R"(/v1/sessions/([^/]+)/messages)", guarded([this](const auto& req, auto& res) {
            auto entry = session(req.matches[1]);
            auto body = parse_body(req);
            std::string text = body.contains("text") ? field<std::string>(body, "text") : field<std::string>(body, "content");
            {
                std::lock_guard lock(entry->mu);
                if (entry->state.phase != SessionPhase::Open) {
                    throw Error(ErrorCode::IllegalPhase,
                                std::string("session is ") + phase_name(entry->state.phase));
                }
            }
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, entry, text](std::size_t, httplib::DataSink& sink) {
                    auto write = [&](const std::string& type, const json& data) {
                        auto frame = sse_frame(type, data);
                        sink.write(frame.data(), frame.size());
                    };
                    std::lock_guard slock(entry->mu);
                    std::lock_guard ulock(entry->user->mu);
                    try {
                        auto d = deps(*entry->user, [&](const TurnEvent& ev) { write(ev.type, ev.data); });
                        auto [next, result] = run_turn(entry->state, text, d);
                        entry->state = std::move(next);
                    } catch (const Error& e) {
                        write("error", {{"code", error_code_name(e.code())}, {"message", e.what()}});
                        write("turn_summary", {{"turn_index", nullptr}, {"skill_used", nullptr}, {"success", false},
                                               {"token_estimate", 0},
                                               {"compression_level", entry->state.c.level}});
                    } catch (const std::exception& e) {
                        write("error", {{"code", "Internal"}, {"message", e.what()}});
                        write("turn_summary", {{"turn_index", nullptr}, {"skill_used", nullptr}, {"success", false},
                                               {"token_estimate", 0},
                                               {"compression_level", entry->state.c.level}});
                    }
                    sink.done();
                    return true;
                });
        }));

        server.Post(R"(/v1/sessions/([^/]+)/end)", guarded([this](const auto& req, auto& res) {
            auto entry = session(req.matches[1]);
            std::lock_guard slock(entry->mu);
            {
                std::lock_guard ulock(entry->user->mu);
                auto d = deps(*entry->user);
                entry->state = end_session(entry->state, d);
            }
            send_json(res, 200, {{"session_id", entry->state.session_id}, {"phase", phase_name(entry->state.phase)},
                                 {"evolution_mode", evolution_mode_name(config.evolution_mode)},
                                 {"evolution_scheduled", config.evolution_mode == EvolutionMode::Auto}});
        }));

        server.Post(R"(/v1/sessions/([^/]+)/evolve)", guarded([this](const auto& req, auto& res) {
            auto entry = session(req.matches[1]);
            std::string user_id;
            {
                std::lock_guard lock(entry->mu);
                if (entry->state.phase == SessionPhase::Open) {
                    throw Error(ErrorCode::IllegalPhase, "session is still open");
                }
                user_id = entry->state.user_id;
            }
            if (config.evolution_mode != EvolutionMode::Manual) {
                throw Error(ErrorCode::IllegalPhase, "evolution runs automatically in auto mode");
            }
            auto outcome = evolve(user_id, req.matches[1]);
            json decisions = json::array();
            for (const auto& g : outcome.delta.gate_decisions) {
                decisions.push_back({{"skill", g.skill_name}, {"accepted", g.accepted}, {"reason", g.reason}});
            }
            send_json(res, 200, {{"session_id", std::string(req.matches[1])},
                                 {"performed", outcome.performed},
                                 {"phase", "evolved"},
                                 {"gate_decisions", decisions},
                                 {"reward", outcome.performed ? to_json(outcome.reward) : json(nullptr)}});
        }));

        server.Post(R"(/v1/sessions/([^/]+)/feedback)", guarded([this](const auto& req, auto& res) {
            auto entry = session(req.matches[1]);
            auto body = parse_body(req);
            auto turn = field<std::uint64_t>(body, "turn_index");
            auto positive = field<bool>(body, "positive");
            std::lock_guard slock(entry->mu);
            std::lock_guard ulock(entry->user->mu);
            auto d = deps(*entry->user);
            entry->state = apply_feedback(entry->state, turn, positive, d);
            json out{{"session_id", entry->state.session_id}, {"turn_index", turn}, {"positive", positive}};
            for (const auto& t : entry->state.turns) {
                if (t.user_turn_index == turn && t.skill) {
                    out["skill"] = *t.skill;
                    out["success"] = t.success;
                    out["meta"] = skill_summary_json(entry->user->store.get(*t.skill));
                }
            }
            send_json(res, 200, out);
        }));

        server.Get("/v1/skills", guarded([this](const auto& req, auto& res) {
            auto user = user_context(query_user(req), false);
            std::lock_guard lock(user->mu);
            json list = json::array();
            for (const auto& [_, s] : user->store.skills()) list.push_back(skill_summary_json(s));
            send_json(res, 200, {{"skills", list}});
        }));

        server.Get(R"(/v1/skills/([^/]+))", guarded([this](const auto& req, auto& res) {
            auto user = user_context(query_user(req), false);
            std::lock_guard lock(user->mu);
            const auto& s = user->store.get(req.matches[1]);
            auto out = skill_summary_json(s);
            out["instructions"] = s.instructions;
            json refs = json::array();
            for (const auto& [file, _] : s.refs) refs.push_back(file);
            out["references"] = refs;
            if (s.requires_sub_agent) {
                out["sub_agent"] = {{"name", s.sub_agent.name}, {"instructions", s.sub_agent.instructions},
                                    {"tools", s.sub_agent.tool_names}};
            }
            out["skill_md"] = render_skill_md(s);
            send_json(res, 200, out);
        }));

        server.Put(R"(/v1/skills/([^/]+))", guarded([this](const auto& req, auto& res) {
            auto user = user_context(query_user(req), false);
            std::string name = req.matches[1];
            if (!is_slug(name)) throw Error(ErrorCode::MalformedSkill, "invalid skill name '" + name + "'");
            std::lock_guard lock(user->mu);
            // Parse through a staging directory so the store only sees valid skills.
            auto staging = user->workspace.root() / ".staging" / new_session_id();
            fs::create_directories(staging / name);
            Skill skill;
            try {
                io::write_atomic(staging / name / "SKILL.md", req.body);
                skill = parse_skill(staging / name, [&] { return user->store.now(); });
                fs::remove_all(staging);
            } catch (...) {
                fs::remove_all(staging);
                throw;
            }
            if (auto bad = validate_skill(skill)) throw Error(ErrorCode::MalformedSkill, *bad);
            bool existed = user->store.find(name) != nullptr;
            user->store.save(skill);
            send_json(res, existed ? 200 : 201, skill_summary_json(user->store.get(name)));
        }));

        server.Delete(R"(/v1/skills/([^/]+))", guarded([this](const auto& req, auto& res) {
            auto user = user_context(query_user(req), false);
            std::lock_guard lock(user->mu);
            user->store.remove(req.matches[1]);
            send_json(res, 200, {{"deleted", std::string(req.matches[1])}});
        }));

        server.Get(R"(/v1/users/([^/]+)/memory)", guarded([this](const auto& req, auto& res) {
            auto user = user_context(req.matches[1], false);
            std::lock_guard lock(user->mu);
            const auto& ws = user->workspace;
            send_json(res, 200, {{"user_id", ws.user_id()}, {"soul", ws.soul()}, {"user_profile", ws.user_profile()},
                                 {"memory", ws.memory()}});
        }));

        server.Get(R"(/v1/users/([^/]+)/suggestions)", guarded([this](const auto& req, auto& res) {
            auto user = user_context(req.matches[1], false);
            std::lock_guard lock(user->mu);
            json list = json::array();
            for (const auto& s : list_suggestions(user->workspace)) {
                list.push_back({{"id", s.id}, {"session_id", s.session_id}, {"delta", to_json(s.delta)}});
            }
            send_json(res, 200, {{"suggestions", list}});
        }));

        server.Post(R"(/v1/suggestions/([^/]+)/confirm)", guarded([this](const auto& req, auto& res) {
            auto body = parse_body(req);
            auto user = user_context(field<std::string>(body, "user_id"), false);
            auto accept = field<bool>(body, "accept");
            std::lock_guard lock(user->mu);
            confirm_suggestion(user->workspace, req.matches[1], accept);
            send_json(res, 200, {{"id", std::string(req.matches[1])}, {"accepted", accept}});
        }));

        server.Get(R"(/v1/users/([^/]+)/rewards)", guarded([this](const auto& req, auto& res) {
            auto user = user_context(req.matches[1], false);
            std::lock_guard lock(user->mu);
            auto records = load_rewards(user->workspace);
            json list = json::array();
            for (const auto& r : records) list.push_back(to_json(r));
            send_json(res, 200, {{"records", list}, {"gamma", config.gamma},
                                 {"cumulative", cumulative_reward(records, config.gamma)}});
        }));
    }
};

Service::Service(ApiConfig config)
    : Service(config, std::shared_ptr<ChatProvider>(make_chat_provider(config.chat)),
              std::shared_ptr<EmbeddingProvider>(make_embedding_provider(config.embedding))) {}

Service::Service(ApiConfig config, std::shared_ptr<ChatProvider> chat, std::shared_ptr<EmbeddingProvider> embed)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(chat), std::move(embed))) {}

Service::~Service() = default;

int Service::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Service::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) {
        throw Error(ErrorCode::InvalidArgument, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void Service::stop() {
    impl_->server.stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::wait_for_evolutions() { impl_->wait_idle(); }

const ApiConfig& Service::config() const { return impl_->config; }

}  // namespace skillloop
