#include "skillloop/chat_client.hpp"
#include "skillloop/config.hpp"
#include "skillloop/error.hpp"
#include "skillloop/evolution.hpp"
#include "skillloop/service.hpp"
#include "skillloop/session_log.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/soak.hpp"
#include "skillloop/workspace.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace skillloop;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

struct Globals {
    std::string config_path;
    std::string user_id = "default";
    bool json_out = false;
    std::string provider;
    std::string data_root;
};

ApiConfig resolve_config(const Globals& g) {
    auto cfg = load_config(g.config_path.empty() ? std::nullopt : std::optional<fs::path>(g.config_path));
    if (!g.provider.empty()) cfg.chat.kind = cfg.embedding.kind = g.provider;
    if (!g.data_root.empty()) cfg.data_root = g.data_root;
    validate_config(cfg);
    return cfg;
}

struct UserHandle {
    Workspace ws;
    SkillStore store;
};

UserHandle open_user(const ApiConfig& cfg, const std::string& user_id) {
    WorkspaceOptions opts;
    opts.default_skills_dir = cfg.default_skills_dir;
    auto ws = Workspace::init(cfg.data_root, user_id, opts);
    auto store = SkillStore::load(ws.root());
    for (const auto& w : store.warnings()) std::cerr << "warning: " << w << "\n";
    return {std::move(ws), std::move(store)};
}

json skill_line(const Skill& s) { return skill_summary_json(s); }

void print_soak(const SoakReport& r, bool as_json) {
    if (as_json) {
        for (const auto& t : r.per_turn) {
            json line{{"type", "turn"},
                      {"turn", t.turn},
                      {"skill", t.skill ? json(*t.skill) : json(nullptr)},
                      {"stage", t.stage},
                      {"success", t.success},
                      {"compressed", t.compressed},
                      {"token_estimate", t.token_estimate},
                      {"error", t.error ? json(*t.error) : json(nullptr)}};
            std::cout << line.dump() << "\n";
        }
        auto report = to_json(r);
        report.erase("token_estimates");
        report["type"] = "report";
        std::cout << report.dump() << "\n";
        return;
    }
    std::cout << "turns completed: " << r.turns_completed << "/" << r.turns_requested << "\n"
              << "compressions:    " << r.compressions << " (final level " << r.final_level << ")\n"
              << "errors:          " << r.errors << "\n"
              << "early skill refs conserved: " << (r.assets_conserved() ? "yes" : "NO") << " ("
              << r.early_skill_references.size() << " tracked)\n";
    if (!r.per_turn.empty()) {
        std::size_t peak = 0;
        for (const auto& t : r.per_turn) peak = std::max(peak, t.token_estimate);
        std::cout << "token estimate:  last " << r.per_turn.back().token_estimate << ", peak " << peak << "\n";
    }
    std::cout << "maturity:\n";
    for (const auto& [name, m] : r.final_skills) {
        std::printf("  %-20s %-10s usage %3llu  success %.2f\n", name.c_str(),
                    maturity_name(classify_maturity(m)), static_cast<unsigned long long>(m.usage_count),
                    m.success_rate());
    }
    for (const auto& t : r.per_turn) {
        if (t.error) std::cout << "turn " << t.turn << " error: " << *t.error << "\n";
    }
    std::cout << "session log: " << r.log_path.string() << "\n";
    std::cout << std::flush;
}

Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skillloop: skill-matching agent harness with offline evolution"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--user", g.user_id, "User id");
    app.add_flag("--json", g.json_out, "Line-delimited JSON output");
    app.add_option("--provider", g.provider, "Provider kind")->check(CLI::IsMember({"mock", "live"}));
    app.add_option("--data-root", g.data_root, "Workspace root directory");

    std::function<int()> action;

    // chat
    auto* chat = app.add_subcommand("chat", "Interactive session against a running or in-process service");
    std::string url;
    chat->add_option("--url", url, "Service base URL; an in-process service is started when omitted");
    chat->callback([&] {
        action = [&] {
            auto cfg = resolve_config(g);
            std::unique_ptr<Service> local;
            ChatOptions opts;
            opts.user_id = g.user_id;
            if (!cfg.auth_token_env.empty()) {
                if (const char* t = std::getenv(cfg.auth_token_env.c_str())) opts.token = t;
            }
            if (url.empty()) {
                local = std::make_unique<Service>(cfg);
                int port = local->start("127.0.0.1", 0);
                opts.base_url = "http://127.0.0.1:" + std::to_string(port);
            } else {
                opts.base_url = url;
            }
            int rc = run_chat(opts, std::cin, std::cout, std::cerr);
            if (local) {
                local->wait_for_evolutions();
                local->stop();
            }
            return rc;
        };
    });

    // skills
    auto* skills = app.add_subcommand("skills", "Skill administration");
    skills->require_subcommand(1);
    auto* s_list = skills->add_subcommand("list", "List skills with maturity");
    s_list->callback([&] {
        action = [&] {
            auto u = open_user(resolve_config(g), g.user_id);
            for (const auto& [name, s] : u.store.skills()) {
                if (g.json_out) {
                    std::cout << skill_line(s).dump() << "\n";
                } else {
                    std::printf("%-24s %-10s usage %3llu  success %.2f  %s\n", name.c_str(),
                                maturity_name(classify_maturity(s.meta)),
                                static_cast<unsigned long long>(s.meta.usage_count), s.meta.success_rate(),
                                s.description.c_str());
                }
            }
            return int(kOk);
        };
    });
    std::string skill_name;
    auto* s_show = skills->add_subcommand("show", "Print a skill");
    s_show->add_option("name", skill_name)->required();
    s_show->callback([&] {
        action = [&] {
            auto u = open_user(resolve_config(g), g.user_id);
            const auto& s = u.store.get(skill_name);
            if (g.json_out) {
                auto j = skill_line(s);
                j["instructions"] = s.instructions;
                std::cout << j.dump() << "\n";
            } else {
                std::cout << render_skill_md(s);
            }
            return int(kOk);
        };
    });
    std::string skill_path;
    auto* s_add = skills->add_subcommand("add", "Install a skill directory (SKILL.md plus references/)");
    s_add->add_option("path", skill_path)->required()->check(CLI::ExistingDirectory);
    s_add->callback([&] {
        action = [&] {
            auto u = open_user(resolve_config(g), g.user_id);
            auto src = fs::path(skill_path);
            auto skill = parse_skill(src);
            if (auto bad = validate_skill(skill)) throw Error(ErrorCode::MalformedSkill, *bad);
            u.store.save(skill);
            if (fs::is_directory(src / "references")) {
                fs::copy(src / "references", u.store.skill_dir(skill.name) / "references",
                         fs::copy_options::recursive | fs::copy_options::overwrite_existing);
            }
            std::cout << (g.json_out ? json{{"installed", skill.name}}.dump() : "installed " + skill.name) << "\n";
            return int(kOk);
        };
    });
    auto* s_rm = skills->add_subcommand("rm", "Remove a skill");
    s_rm->add_option("name", skill_name)->required();
    s_rm->callback([&] {
        action = [&] {
            auto u = open_user(resolve_config(g), g.user_id);
            u.store.remove(skill_name);
            std::cout << (g.json_out ? json{{"removed", skill_name}}.dump() : "removed " + skill_name) << "\n";
            return int(kOk);
        };
    });

    // memory
    auto* memory = app.add_subcommand("memory", "Memory documents");
    memory->require_subcommand(1);
    auto* m_show = memory->add_subcommand("show", "Print SOUL.md, USER.md and MEMORY.md");
    m_show->callback([&] {
        action = [&] {
            auto u = open_user(resolve_config(g), g.user_id);
            if (g.json_out) {
                std::cout << json{{"user_id", g.user_id}, {"soul", u.ws.soul()}, {"user_profile", u.ws.user_profile()},
                                  {"memory", u.ws.memory()}}
                                 .dump()
                          << "\n";
            } else {
                std::cout << "==> SOUL.md\n" << u.ws.soul() << "\n==> USER.md\n" << u.ws.user_profile()
                          << "\n==> MEMORY.md\n" << u.ws.memory();
            }
            return int(kOk);
        };
    });

    // evolve
    std::string session_id;
    auto* evolve = app.add_subcommand("evolve", "Run the offline evolution pass for an ended session");
    evolve->add_option("session", session_id)->required();
    evolve->callback([&] {
        action = [&] {
            auto cfg = resolve_config(g);
            auto u = open_user(cfg, g.user_id);
            auto chat_provider = make_chat_provider(cfg.chat);
            auto embed_provider = make_embedding_provider(cfg.embedding);
            EmbeddingCache cache(u.ws.root() / "configs" / "embedding_cache.json");
            auto outcome = run_evolution(u.ws, u.store, session_id, *chat_provider, &cache, embed_provider.get(),
                                         cfg.evolution());
            json out{{"session_id", session_id},
                     {"performed", outcome.performed},
                     {"profile_sections", outcome.delta.profile_delta.additions.size() +
                                              outcome.delta.profile_delta.replacements.size()},
                     {"memory_sections", outcome.delta.memory_delta.additions.size() +
                                             outcome.delta.memory_delta.replacements.size()},
                     {"suggestions", outcome.delta.suggestions.size()}};
            auto gates = json::array();
            for (const auto& d : outcome.delta.gate_decisions) {
                gates.push_back({{"skill", d.skill_name}, {"accepted", d.accepted}, {"reason", d.reason}});
            }
            out["gate_decisions"] = gates;
            if (outcome.performed) out["reward"] = to_json(outcome.reward);
            std::cout << (g.json_out ? out.dump() : out.dump(2)) << "\n";
            return int(kOk);
        };
    });

    // replay
    std::string log_path;
    auto* replay = app.add_subcommand("replay", "Verify a session log by re-applying its transitions");
    replay->add_option("log", log_path)->required();
    replay->callback([&] {
        action = [&] {
            if (!fs::exists(log_path)) throw Error(ErrorCode::SessionNotFound, "no such log " + log_path);
            ReplayReport r;
            try {
                r = replay_session_log(log_path);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::ReplayError) throw;
                std::cout << (g.json_out ? json{{"consistent", false}, {"error", e.what()}}.dump()
                                         : std::string("replay error: ") + e.what())
                          << "\n";
                return int(kVerification);
            }
            if (g.json_out) {
                auto divs = json::array();
                for (const auto& d : r.divergences) divs.push_back({{"line", d.line}, {"what", d.what}});
                std::cout << json{{"consistent", r.consistent()},
                                  {"records", r.records},
                                  {"turns", r.turns},
                                  {"compression_level", r.compression_level},
                                  {"final_history_len", r.final_history_len},
                                  {"divergences", divs}}
                                 .dump()
                          << "\n";
            } else {
                std::cout << "records " << r.records << ", turns " << r.turns << ", compression level "
                          << r.compression_level << ", history " << r.final_history_len << " messages\n";
                for (const auto& d : r.divergences) std::cout << "line " << d.line << ": " << d.what << "\n";
                std::cout << (r.consistent() ? "consistent" : "DIVERGED") << "\n";
            }
            return r.consistent() ? int(kOk) : int(kVerification);
        };
    });

    // soak
    SoakOptions soak_opts;
    std::size_t budget = soak_opts.budget.max_tokens;
    std::string transcript;
    auto* soak = app.add_subcommand("soak", "Run synthetic turns against an in-process runtime (mock provider)");
    soak->add_option("--turns", soak_opts.turns, "Number of turns")->capture_default_str();
    soak->add_option("--budget", budget, "Context budget in tokens")->capture_default_str()->check(CLI::Range(1024, 100000000));
    soak->add_option("--seed", soak_opts.seed, "Generator seed")->capture_default_str();
    soak->add_option("--transcript", transcript, "Mock chat transcript (JSONL)");
    soak->callback([&] {
        action = [&] {
            soak_opts.budget.max_tokens = budget;
            if (!g.data_root.empty()) soak_opts.data_root = fs::path(g.data_root);
            if (!transcript.empty()) soak_opts.transcript = fs::path(transcript);
            if (g.user_id != "default") soak_opts.user_id = g.user_id;
            auto r = run_soak(soak_opts);
            print_soak(r, g.json_out);
            return r.errors == 0 ? int(kOk) : int(kRuntime);
        };
    });

    // serve
    std::string bind;
    auto* serve = app.add_subcommand("serve", "Host the HTTP service");
    serve->add_option("--bind", bind, "host:port (overrides config)");
    serve->callback([&] {
        action = [&] {
            auto cfg = resolve_config(g);
            if (!bind.empty()) cfg.bind_address = bind;
            validate_config(cfg);
            Service service(cfg);
            g_service = &service;
            std::signal(SIGINT, [](int) {
                if (g_service) g_service->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_service) g_service->stop();
            });
            std::cerr << "listening on " << cfg.bind_address << "\n";
            service.listen(cfg.host(), cfg.port());
            g_service = nullptr;
            return int(kOk);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (!action) return kUsage;
    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
        return e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::InvalidUserId ? kUsage : kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
}
