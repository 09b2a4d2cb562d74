#pragma once

#include "skillloop/context_engine.hpp"
#include "skillloop/matcher.hpp"
#include "skillloop/message.hpp"
#include "skillloop/provider.hpp"
#include "skillloop/session_log.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/tools.hpp"
#include "skillloop/workspace.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skillloop {

enum class SessionPhase { Open, Ended, Evolved };
enum class EvolutionMode { Auto, Manual };

const char* phase_name(SessionPhase p);
const char* evolution_mode_name(EvolutionMode m);
EvolutionMode parse_evolution_mode(const std::string& name);

struct ProfileView {
    std::string user_profile;
    std::string memory;

    bool operator==(const ProfileView&) const = default;
};

using SkillsView = std::map<std::string, SkillMeta>;

ProfileView profile_view(const Workspace& ws);
SkillsView skills_view(const SkillStore& store);

struct TurnRecord {
    std::uint64_t user_turn_index = 0;
    std::optional<std::string> skill;
    bool heuristic_success = true;
    bool success = true;  // after explicit feedback
};

/// (history, profile, skill repository view, compression state) plus
/// lifecycle bookkeeping.
struct SessionState {
    std::string session_id;
    std::string user_id;
    History h;
    ProfileView u;
    SkillsView skills_view;
    CompressionState c;
    std::optional<std::string> active_skill;
    SessionPhase phase = SessionPhase::Open;
    std::vector<TurnRecord> turns;
};

struct TurnEvent {
    std::string type;  // match_result, tool_started, tool_finished, delta, compression, turn_summary, error
    nlohmann::json data;
};

using EventSink = std::function<void(const TurnEvent&)>;

struct TurnResult {
    std::vector<Message> messages_appended;
    std::vector<std::pair<std::string, std::string>> tool_errors;
    bool success = true;
    std::optional<std::string> skill_used;
    std::optional<MatchResult> match;
    bool degraded = false;
    bool provider_failed = false;
    bool compressed = false;
    std::optional<std::string> compression_error;
    std::uint64_t user_turn_index = 0;
    std::size_t token_estimate = 0;
};

struct RuntimeConfig {
    MatcherConfig matcher;
    ContextBudget budget;
    std::size_t max_steps = 8;
    EvolutionMode evolution_mode = EvolutionMode::Manual;
};

class EvolutionScheduler {
public:
    virtual ~EvolutionScheduler() = default;
    virtual void schedule(const std::string& user_id, const std::string& session_id) = 0;
};

struct RuntimeDeps {
    Workspace& workspace;
    SkillStore& store;
    EmbeddingCache& cache;
    ChatProvider& chat;
    EmbeddingProvider* embed = nullptr;
    const ToolRegistry& tools;
    RuntimeConfig config{};
    TokenEstimator estimator = heuristic_message_tokens;
    EventSink events{};
    EvolutionScheduler* scheduler = nullptr;
};

struct ReactOptions {
    std::size_t max_steps = 8;
    ChatPurpose purpose = ChatPurpose::Chat;
    ToolContext* context = nullptr;
    EventSink events{};
};

struct ReactOutcome {
    std::vector<Message> messages;
    std::vector<std::pair<std::string, std::string>> tool_errors;
    std::size_t provider_calls = 0;
    bool truncated = false;
};

/// Think/act/observe until the model answers without tool calls or
/// `max_steps` provider calls have been made. Unknown tools produce error
/// tool messages; provider failures propagate as Error{ProviderError}.
ReactOutcome react_loop(const std::string& instructions, const History& history, const ToolRegistry& tools,
                        ChatProvider& chat, const ReactOptions& options);

/// Runs the skill's sub-agent over the current history with only its
/// declared tools. Only the sub-agent's final answer is returned; its
/// intermediate tool traffic is discarded. Throws SubAgentConfigError before
/// any provider call when a declared tool is not registered.
ReactOutcome delegate_to_sub_agent(const SessionState& state, const Skill& skill, RuntimeDeps& deps,
                                   ToolContext& ctx);

struct TransitionInput {
    std::vector<Message> appended;
    bool profile_tool_ran = false;
    bool skill_mutation_ran = false;
    std::optional<std::string> active_skill;
};

/// h' = h ++ appended; u' and skills_view' are refreshed only when the turn
/// touched them. Compression is applied separately at the turn boundary.
SessionState apply_transition(SessionState state, const TransitionInput& input, const ProfileView& current_profile,
                              const SkillsView& current_skills);

SessionState open_session(RuntimeDeps& deps, const std::string& session_id);

/// One online-loop turn: match, inject, execute (or delegate), transition,
/// compress.
std::pair<SessionState, TurnResult> run_turn(SessionState state, const std::string& user_input, RuntimeDeps& deps);

/// Overrides the heuristic verdict of an earlier skill turn.
SessionState apply_feedback(SessionState state, std::uint64_t user_turn_index, bool positive, RuntimeDeps& deps);

SessionState end_session(SessionState state, RuntimeDeps& deps);

std::map<std::string, SkillTally> session_tallies(const SessionState& state);

}  // namespace skillloop
