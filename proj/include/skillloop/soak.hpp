#pragma once

#include "skillloop/context_engine.hpp"
#include "skillloop/skill_store.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillloop {

struct SoakOptions {
    std::size_t turns = 420;
    ContextBudget budget{};
    std::uint64_t seed = 7;
    /// Parent of the soak workspace; a fresh temporary directory when unset.
    std::optional<std::filesystem::path> data_root;
    std::string user_id = "soak";
    /// Canned chat replies; the default offline replies are used when unset.
    std::optional<std::filesystem::path> transcript;
    /// Lower bound on the length of each generated user turn.
    std::size_t min_turn_chars = 1400;
    /// Turns whose skill_reference assets must survive to the final context.
    std::size_t early_turns = 20;
};

struct SoakTurn {
    std::size_t turn = 0;
    std::optional<std::string> skill;
    std::string stage;  // keyword, embedding, llm or none
    bool success = true;
    bool compressed = false;
    std::size_t token_estimate = 0;
    std::optional<std::string> error;
};

struct SoakReport {
    std::size_t turns_requested = 0;
    std::size_t turns_completed = 0;
    std::size_t compressions = 0;
    std::size_t errors = 0;
    std::uint64_t final_level = 0;
    std::vector<SoakTurn> per_turn;
    std::map<std::string, SkillMeta> final_skills;
    std::vector<std::string> early_skill_references;
    std::vector<std::string> missing_skill_references;
    std::filesystem::path workspace_root;
    std::filesystem::path log_path;
    double seconds = 0.0;

    bool assets_conserved() const { return missing_skill_references.empty(); }
};

/// Synthetic foreign-trade skills whose triggers appear in generated turns.
std::vector<Skill> soak_skills(Timestamp now);

/// Deterministic user turn `index` for `seed`: a product x market x scenario
/// combination padded with catalogue notes, links and image references.
std::string soak_turn_text(std::uint64_t seed, std::size_t index, std::size_t min_chars);

/// Runs `turns` sequential turns against an in-process runtime with the mock
/// providers, then ends the session.
SoakReport run_soak(const SoakOptions& options);

nlohmann::json to_json(const SoakReport& report);

}  // namespace skillloop
