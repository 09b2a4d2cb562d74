#include "skillloop/evolution.hpp"

#include "skillloop/error.hpp"
#include "skillloop/runtime.hpp"
#include "skillloop/session_log.hpp"
#include "skillloop/tools.hpp"
#include "skillloop/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace skillloop {

double maturity_term(MaturityLevel level) { return static_cast<double>(static_cast<int>(level)) / 3.0; }

RewardRecord compute_reward(const std::string& session_id, const std::optional<SkillMeta>& active_skill,
                            std::size_t profile_chars, std::size_t memory_chars, const RewardWeights& weights,
                            double scale_chars) {
    RewardRecord r;
    r.session_id = session_id;
    r.weights = weights;
    r.maturity_term = active_skill ? maturity_term(classify_maturity(*active_skill)) : 0.0;
    auto norm = [&](std::size_t chars) {
        if (scale_chars <= 0.0) return chars > 0 ? 1.0 : 0.0;
        return std::clamp(static_cast<double>(chars) / scale_chars, 0.0, 1.0);
    };
    r.profile_term = norm(profile_chars);
    r.memory_term = norm(memory_chars);
    r.reward = weights.maturity * r.maturity_term + weights.profile * r.profile_term + weights.memory * r.memory_term;
    return r;
}

double cumulative_reward(std::span<const RewardRecord> records, double gamma) {
    double total = 0.0;
    double discount = 1.0;
    for (const auto& r : records) {
        discount *= gamma;
        total += discount * r.reward;
    }
    return total;
}

nlohmann::json to_json(const RewardRecord& r) {
    return {{"session_id", r.session_id},
            {"maturity_term", r.maturity_term},
            {"profile_term", r.profile_term},
            {"memory_term", r.memory_term},
            {"weights", {r.weights.maturity, r.weights.profile, r.weights.memory}},
            {"reward", r.reward}};
}

RewardRecord reward_from_json(const nlohmann::json& j) {
    RewardRecord r;
    r.session_id = j.value("session_id", "");
    r.maturity_term = j.value("maturity_term", 0.0);
    r.profile_term = j.value("profile_term", 0.0);
    r.memory_term = j.value("memory_term", 0.0);
    if (auto w = j.find("weights"); w != j.end() && w->is_array() && w->size() == 3) {
        r.weights = {(*w)[0].get<double>(), (*w)[1].get<double>(), (*w)[2].get<double>()};
    }
    r.reward = j.value("reward", 0.0);
    return r;
}

GateDecision gate_skill_candidate(const Skill& candidate, const SkillStore& store, EmbeddingCache* cache,
                                  EmbeddingProvider* embed, double dedup_threshold) {
    GateDecision d{candidate.name, false, ""};
    auto reject = [&](const char* reason) {
        d.reason = reason;
        return d;
    };
    if (!is_slug(candidate.name)) return reject("invalid_name");
    if (store.find(candidate.name)) return reject("name_collision");
    if (trim(candidate.description).empty()) return reject("empty_desc");
    if (candidate.triggers.empty()) return reject("no_triggers");
    std::set<std::string> seen;
    for (const auto& t : candidate.triggers) {
        if (trim(t).empty() || !seen.insert(to_lower(t)).second) return reject("invalid_triggers");
    }
    if (trim(candidate.instructions).empty()) return reject("empty_instr");
    if (validate_skill(candidate)) return reject("invalid_skill");

    if (embed && !store.empty()) {
        try {
            auto vec = embed->embed(candidate.description);
            for (const auto& [name, existing] : store.skills()) {
                auto other = cache ? cache->get_or_compute(existing, *embed) : embed->embed(existing.description);
                if (cosine_similarity(vec, other) >= dedup_threshold) {
                    return reject("near_duplicate");
                }
            }
        } catch (const Error&) {
            // Provider down: the name-collision check above is all we can do.
        }
    }
    d.accepted = true;
    d.reason = "accepted";
    return d;
}

nlohmann::json to_json(const ProfileDelta& d) {
    auto edits = [](const std::vector<SectionEdit>& v) {
        auto a = nlohmann::json::array();
        for (const auto& e : v) a.push_back({{"heading", e.heading}, {"fragment", e.fragment}});
        return a;
    };
    return {{"additions", edits(d.additions)},
            {"replacements", edits(d.replacements)},
            {"provenance", provenance_name(d.provenance)},
            {"confirmed", d.confirmed}};
}

ProfileDelta profile_delta_from_json(const nlohmann::json& j) {
    ProfileDelta d;
    auto edits = [](const nlohmann::json& a) {
        std::vector<SectionEdit> v;
        for (const auto& e : a) v.push_back({e.at("heading").get<std::string>(), e.at("fragment").get<std::string>()});
        return v;
    };
    if (j.contains("additions")) d.additions = edits(j["additions"]);
    if (j.contains("replacements")) d.replacements = edits(j["replacements"]);
    d.provenance = parse_provenance(j.value("provenance", "real_time"));
    d.confirmed = j.value("confirmed", false);
    return d;
}

namespace {

fs::path suggestions_path(const Workspace& ws) { return ws.root() / "suggestions.json"; }
fs::path observations_path(const Workspace& ws) { return ws.root() / "observations.json"; }
fs::path rewards_path(const Workspace& ws) { return ws.root() / "rewards.jsonl"; }

nlohmann::json read_json_or(const fs::path& p, nlohmann::json fallback) {
    if (!fs::exists(p)) return fallback;
    auto j = nlohmann::json::parse(io::read_text(p), nullptr, false);
    return j.is_discarded() ? fallback : j;
}

// Lower-case with runs of whitespace collapsed, for evidence matching.
std::string normalize_text(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

struct ReviewCollector {
    ProfileDelta profile;
    ProfileDelta memory;
    std::vector<ProfileDelta> observations;  // implicit patterns, not applied
    std::vector<Skill> candidates;
    std::vector<RejectedFragment> rejected;
    std::vector<std::string> user_texts;  // normalised user messages
};

void add_edit(ProfileDelta& delta, const nlohmann::json& args) {
    SectionEdit edit{args.at("section").get<std::string>(), args.at("content").get<std::string>()};
    if (args.value("mode", std::string("add")) == "replace") delta.replacements.push_back(std::move(edit));
    else delta.additions.push_back(std::move(edit));
}

std::vector<ToolParameter> profile_params() {
    return {{"section", "string", true, "Section heading in USER.md"},
            {"content", "string", true, "Markdown fragment to record"},
            {"evidence", "string", true, "Verbatim quote of the user's own words supporting the fact"},
            {"mode", "string", false, "'add' (default) or 'replace'"},
            {"explicit", "boolean", false,
             "false when the fact is only suggested by behaviour; it then becomes a suggestion for the user to confirm"}};
}

std::vector<ToolParameter> memory_params() {
    return {{"section", "string", true, "Section heading in MEMORY.md"},
            {"content", "string", true, "Markdown fragment to record"},
            {"mode", "string", false, "'add' (default) or 'replace'"}};
}

std::vector<ToolParameter> skill_params() {
    return {{"name", "string", true, "Lowercase slug"},
            {"description", "string", true, "What the skill does and when to use it"},
            {"triggers", "array", true, "Keywords that should select the skill"},
            {"instructions", "string", true, "Markdown execution instructions"},
            {"requires_sub_agent", "boolean", false, ""},
            {"sub_agent", "object", false, "{name, instructions, tools}"}};
}

ToolRegistry review_registry(ReviewCollector& c) {
    ToolRegistry reg;
    reg.add({"UpdateUserProfileTool", "Record a fact the user explicitly stated about themselves or their business.",
             profile_params(), ToolEffect::WorkspaceWrite},
            [&c](const nlohmann::json& args, ToolContext&) -> ToolOutput {
                bool is_explicit = args.value("explicit", true);
                if (!is_explicit) {
                    ProfileDelta obs;
                    obs.provenance = Provenance::BehaviorSuggestion;
                    add_edit(obs, args);
                    c.observations.push_back(std::move(obs));
                    return {"recorded as a suggestion candidate", false, {}};
                }
                auto evidence = normalize_text(args.at("evidence").get<std::string>());
                bool traced = !evidence.empty() &&
                              std::any_of(c.user_texts.begin(), c.user_texts.end(),
                                          [&](const std::string& u) { return u.find(evidence) != std::string::npos; });
                if (!traced) {
                    c.rejected.push_back({args.at("section").get<std::string>(), args.at("content").get<std::string>(),
                                          "evidence is not a quote of the user's messages"});
                    return {tool_error_json("UpdateUserProfileTool", "untraceable",
                                            "evidence must quote the user's own words"),
                            true, {}};
                }
                add_edit(c.profile, args);
                return {"profile change recorded", false, {}};
            });
    reg.add({"UpdateMemoryTool", "Record a long-term note worth keeping across sessions.", memory_params(),
             ToolEffect::WorkspaceWrite},
            [&c](const nlohmann::json& args, ToolContext&) -> ToolOutput {
                add_edit(c.memory, args);
                return {"memory change recorded", false, {}};
            });
    reg.add({"ExtractSkillTool", "Propose a reusable skill distilled from this session.", skill_params(),
             ToolEffect::WorkspaceWrite},
            [&c](const nlohmann::json& args, ToolContext&) -> ToolOutput {
                Skill s;
                s.name = args.at("name").get<std::string>();
                s.description = args.at("description").get<std::string>();
                for (const auto& t : args.at("triggers")) s.triggers.push_back(t.get<std::string>());
                s.instructions = args.at("instructions").get<std::string>();
                s.requires_sub_agent = args.value("requires_sub_agent", false);
                if (auto sa = args.find("sub_agent"); sa != args.end() && sa->is_object()) {
                    s.sub_agent.name = sa->value("name", "");
                    s.sub_agent.instructions = sa->value("instructions", "");
                    if (sa->contains("tools")) s.sub_agent.tool_names = (*sa)["tools"].get<std::vector<std::string>>();
                }
                c.candidates.push_back(std::move(s));
                return {"skill candidate recorded", false, {}};
            });
    return reg;
}

std::string render_for_review(const History& transcript) {
    std::string out = "Session transcript:\n";
    for (const auto& m : transcript) {
        if (m.role == Role::Tool) continue;
        if (m.content.empty()) continue;
        out += "[" + std::to_string(m.turn_index) + "] " + role_name(m.role) + ": " + m.content + "\n";
    }
    return out;
}

std::string observation_key(const ProfileDelta& d) {
    std::string key;
    for (const auto* edits : {&d.additions, &d.replacements}) {
        for (const auto& e : *edits) key += to_lower(normalize_heading(e.heading)) + "|" + normalize_text(e.fragment) + "\n";
    }
    return key;
}

void append_suggestions(const Workspace& ws, const std::vector<PendingSuggestion>& add) {
    auto all = read_json_or(suggestions_path(ws), nlohmann::json::array());
    for (const auto& s : add) all.push_back({{"id", s.id}, {"session_id", s.session_id}, {"delta", to_json(s.delta)}});
    io::write_atomic(suggestions_path(ws), all.dump(2));
}

}  // namespace

std::vector<ToolSchema> review_tool_schemas() {
    ReviewCollector c;
    return review_registry(c).schemas();
}

bool is_evolved(const Workspace& ws, const std::string& session_id) {
    return fs::exists(ws.evolution_path(session_id));
}

EvolutionOutcome run_evolution(Workspace& ws, SkillStore& store, const std::string& session_id, ChatProvider& chat,
                               EmbeddingCache* cache, EmbeddingProvider* embed, const EvolutionConfig& config) {
    EvolutionOutcome outcome;
    outcome.delta.session_id = session_id;
    if (is_evolved(ws, session_id)) return outcome;

    auto log_path = ws.session_log_path(session_id);
    if (!fs::exists(log_path)) throw Error(ErrorCode::SessionNotFound, "no log for session " + session_id);
    auto records = SessionLog::read(log_path);
    bool ended = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.at("type") == "end"; });
    if (!ended) throw Error(ErrorCode::IllegalPhase, "session " + session_id + " has not ended");

    auto transcript = SessionLog::full_transcript(records);
    std::optional<std::string> last_skill;
    for (const auto& r : records) {
        if (r.at("type") == "turn" && !r.at("skill_used").is_null()) last_skill = r["skill_used"].get<std::string>();
    }

    // Review first: a provider failure here leaves the workspace untouched.
    ReviewCollector collected;
    for (const auto& m : transcript) {
        if (m.role == Role::User) collected.user_texts.push_back(normalize_text(m.content));
    }
    auto tools = review_registry(collected);
    History input{{Role::User, render_for_review(transcript), {}, std::nullopt, 0, {}}};
    ReactOptions opts;
    opts.max_steps = config.max_review_steps;
    opts.purpose = ChatPurpose::Review;
    auto review = react_loop(kReviewInstructions, input, tools, chat, opts);

    auto& delta = outcome.delta;
    delta.profile_delta = collected.profile;
    delta.profile_delta.provenance = Provenance::PostSession;
    delta.memory_delta = collected.memory;
    delta.memory_delta.provenance = Provenance::PostSession;
    delta.rejected = collected.rejected;

    ws.apply_profile_delta(delta.profile_delta);
    ws.apply_memory_delta(delta.memory_delta);

    // Implicit patterns become suggestions once flagged in enough sessions.
    if (!collected.observations.empty()) {
        auto obs = read_json_or(observations_path(ws), nlohmann::json::object());
        std::vector<PendingSuggestion> fresh;
        for (const auto& o : collected.observations) {
            auto key = observation_key(o);
            auto& entry = obs[key];
            if (!entry.contains("sessions")) entry["sessions"] = nlohmann::json::array();
            auto& sessions = entry["sessions"];
            if (std::find(sessions.begin(), sessions.end(), session_id) == sessions.end()) sessions.push_back(session_id);
            if (!entry.value("suggested", false) && sessions.size() >= config.suggestion_threshold) {
                entry["suggested"] = true;
                PendingSuggestion s{"sg-" + sha256_hex(key + session_id).substr(0, 12), session_id, o};
                s.delta.confirmed = false;
                fresh.push_back(s);
                delta.suggestions.push_back(s.delta);
            }
        }
        io::write_atomic(observations_path(ws), obs.dump(2));
        if (!fresh.empty()) append_suggestions(ws, fresh);
    }

    for (auto candidate : collected.candidates) {
        auto now = store.now();
        candidate.meta = SkillMeta{0, 0, now, now};
        candidate.refs.clear();
        auto decision = gate_skill_candidate(candidate, store, cache, embed, config.dedup_threshold);
        if (decision.accepted) {
            store.save(candidate);
            delta.new_skills.push_back(candidate);
        }
        delta.gate_decisions.push_back(std::move(decision));
    }

    std::optional<SkillMeta> active;
    if (last_skill) {
        if (const auto* s = store.find(*last_skill)) active = s->meta;
    }
    outcome.reward = compute_reward(session_id, active, delta.profile_delta.size_chars(),
                                    delta.memory_delta.size_chars(), config.weights, config.delta_scale_chars);
    io::append_line(rewards_path(ws), to_json(outcome.reward).dump());

    nlohmann::json artifact;
    artifact["session_id"] = session_id;
    artifact["profile_delta"] = to_json(delta.profile_delta);
    artifact["memory_delta"] = to_json(delta.memory_delta);
    artifact["new_skills"] = nlohmann::json::array();
    for (const auto& s : delta.new_skills) artifact["new_skills"].push_back(s.name);
    artifact["suggestions"] = nlohmann::json::array();
    for (const auto& s : delta.suggestions) artifact["suggestions"].push_back(to_json(s));
    artifact["gate_decisions"] = nlohmann::json::array();
    for (const auto& g : delta.gate_decisions) {
        artifact["gate_decisions"].push_back({{"skill", g.skill_name}, {"accepted", g.accepted}, {"reason", g.reason}});
    }
    artifact["rejected_fragments"] = nlohmann::json::array();
    for (const auto& r : delta.rejected) {
        artifact["rejected_fragments"].push_back({{"section", r.section}, {"content", r.content}, {"reason", r.reason}});
    }
    artifact["reward"] = to_json(outcome.reward);
    artifact["review_text"] = review.messages.empty() ? "" : review.messages.back().content;
    io::write_atomic(ws.evolution_path(session_id), artifact.dump(2));

    outcome.performed = true;
    return outcome;
}

std::vector<PendingSuggestion> list_suggestions(const Workspace& ws) {
    std::vector<PendingSuggestion> out;
    for (const auto& j : read_json_or(suggestions_path(ws), nlohmann::json::array())) {
        out.push_back({j.at("id").get<std::string>(), j.value("session_id", ""), profile_delta_from_json(j.at("delta"))});
    }
    return out;
}

void confirm_suggestion(Workspace& ws, const std::string& suggestion_id, bool accept) {
    auto all = read_json_or(suggestions_path(ws), nlohmann::json::array());
    auto it = std::find_if(all.begin(), all.end(), [&](const auto& j) { return j.value("id", "") == suggestion_id; });
    if (it == all.end()) throw Error(ErrorCode::SuggestionNotFound, "no pending suggestion " + suggestion_id);
    if (accept) {
        auto delta = profile_delta_from_json((*it)["delta"]);
        delta.provenance = Provenance::BehaviorSuggestion;
        delta.confirmed = true;
        ws.apply_profile_delta(delta);
    }
    all.erase(it);
    io::write_atomic(suggestions_path(ws), all.dump(2));
}

std::vector<RewardRecord> load_rewards(const Workspace& ws) {
    std::vector<RewardRecord> out;
    if (!fs::exists(rewards_path(ws))) return out;
    std::ifstream in(rewards_path(ws));
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded()) out.push_back(reward_from_json(j));
    }
    return out;
}

}  // namespace skillloop
