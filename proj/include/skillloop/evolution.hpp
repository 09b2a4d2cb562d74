#pragma once

#include "skillloop/matcher.hpp"
#include "skillloop/message.hpp"
#include "skillloop/provider.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/workspace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace skillloop {

struct RewardWeights {
    double maturity = 1.0 / 3.0;
    double profile = 1.0 / 3.0;
    double memory = 1.0 / 3.0;
};

/// Telemetry only: never read back by matching or gating.
struct RewardRecord {
    std::string session_id;
    double maturity_term = 0.0;
    double profile_term = 0.0;
    double memory_term = 0.0;
    RewardWeights weights;
    double reward = 0.0;
};

/// Maturity level as {0,1,2,3}/3.
double maturity_term(MaturityLevel level);

/// `profile_chars` / `memory_chars` are applied-delta sizes, normalised by
/// `scale_chars` and clamped to [0,1].
RewardRecord compute_reward(const std::string& session_id, const std::optional<SkillMeta>& active_skill,
                            std::size_t profile_chars, std::size_t memory_chars,
                            const RewardWeights& weights = {}, double scale_chars = 2000.0);

/// sum_{t=1..T} gamma^t * reward_t.
double cumulative_reward(std::span<const RewardRecord> records, double gamma);

nlohmann::json to_json(const RewardRecord& r);
RewardRecord reward_from_json(const nlohmann::json& j);

struct GateDecision {
    std::string skill_name;
    bool accepted = false;
    /// accepted, invalid_name, name_collision, empty_desc, no_triggers,
    /// invalid_triggers, empty_instr, near_duplicate, invalid_skill
    std::string reason;
};

/// Quality gate for a candidate skill. When `embed` is null or fails only
/// the structural checks and the name-collision check apply.
GateDecision gate_skill_candidate(const Skill& candidate, const SkillStore& store, EmbeddingCache* cache,
                                  EmbeddingProvider* embed, double dedup_threshold = 0.9);

struct EvolutionConfig {
    double dedup_threshold = 0.9;
    /// Sessions in which the same unrecorded fact pattern must be flagged
    /// before it becomes a behaviour suggestion.
    std::size_t suggestion_threshold = 2;
    RewardWeights weights;
    double delta_scale_chars = 2000.0;
    std::size_t max_review_steps = 8;
};

/// Profile fragment the review agent proposed but the safety boundary refused.
struct RejectedFragment {
    std::string section;
    std::string content;
    std::string reason;
};

struct EvolutionDelta {
    std::string session_id;
    ProfileDelta profile_delta;
    ProfileDelta memory_delta;
    std::vector<Skill> new_skills;
    std::vector<ProfileDelta> suggestions;
    std::vector<GateDecision> gate_decisions;
    std::vector<RejectedFragment> rejected;
};

struct EvolutionOutcome {
    bool performed = false;  // false for the no-op re-run on an evolved session
    EvolutionDelta delta;
    RewardRecord reward;
};

inline constexpr const char* kReviewInstructions =
    "You are an offline analyst extracting profile/memory changes and reusable skills.";

/// The review agent's three tools, in the shape they are offered to the model.
std::vector<ToolSchema> review_tool_schemas();

/// Offline pass over an ended session: runs the review agent, applies the
/// profile and memory deltas, queues behaviour suggestions, gates and
/// installs new skills, records reward telemetry and writes
/// sessions/{id}.evolution.json. Nothing is written if the provider fails.
EvolutionOutcome run_evolution(Workspace& ws, SkillStore& store, const std::string& session_id, ChatProvider& chat,
                               EmbeddingCache* cache, EmbeddingProvider* embed, const EvolutionConfig& config = {});

bool is_evolved(const Workspace& ws, const std::string& session_id);

struct PendingSuggestion {
    std::string id;
    std::string session_id;
    ProfileDelta delta;
};

std::vector<PendingSuggestion> list_suggestions(const Workspace& ws);
void confirm_suggestion(Workspace& ws, const std::string& suggestion_id, bool accept);

std::vector<RewardRecord> load_rewards(const Workspace& ws);

nlohmann::json to_json(const ProfileDelta& d);
ProfileDelta profile_delta_from_json(const nlohmann::json& j);

}  // namespace skillloop
