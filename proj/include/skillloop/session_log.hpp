#pragma once

#include "skillloop/context_engine.hpp"
#include "skillloop/message.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillloop {

/// Per-skill usage tally for one session: (uses, successes after feedback).
struct SkillTally {
    std::uint64_t uses = 0;
    std::uint64_t successes = 0;

    bool operator==(const SkillTally&) const = default;
};

/// Append-only JSON Lines log at sessions/{id}.jsonl. Record types:
///
///   {"type":"session","session_id":..,"user_id":..}
///   {"type":"message","message":{..}}
///   {"type":"compression","level":..,"retained_from":..,"summary":..,"assets":[..],"summary_message":{..}}
///   {"type":"turn","user_turn_index":..,"skill_used":..|null,"success":..,"history_len":..,
///    "history_digest":..,"level":..}
///   {"type":"feedback","user_turn_index":..,"skill":..,"positive":..,"success":..}
///   {"type":"end","history_len":..,"history_digest":..,"level":..,"skills":{name:{"uses":..,"successes":..}},
///    "evolution":"auto"|"manual"}
class SessionLog {
public:
    explicit SessionLog(std::filesystem::path path) : path_(std::move(path)) {}

    const std::filesystem::path& path() const { return path_; }

    void write_header(const std::string& session_id, const std::string& user_id);
    void write_message(const Message& m);
    void write_compression(const CompressionState& state, const Message& summary_message);
    void write_turn(std::uint64_t user_turn_index, const std::optional<std::string>& skill, bool success,
                    const History& history, std::uint64_t level);
    void write_feedback(std::uint64_t user_turn_index, const std::string& skill, bool positive, bool success);
    void write_end(const History& history, std::uint64_t level, const std::map<std::string, SkillTally>& skills,
                   const std::string& evolution_mode);

    /// Parsed records; throws ReplayError naming the offending line.
    static std::vector<nlohmann::json> read(const std::filesystem::path& path);

    /// Every message ever appended, in order (compression does not remove them).
    static History full_transcript(const std::vector<nlohmann::json>& records);

private:
    void append(const nlohmann::json& record);
    std::filesystem::path path_;
};

struct ReplayDivergence {
    std::size_t line = 0;
    std::string what;
};

struct ReplayReport {
    std::size_t records = 0;
    std::size_t turns = 0;
    std::uint64_t compression_level = 0;
    std::size_t final_history_len = 0;
    std::map<std::string, SkillTally> skills;
    std::vector<ReplayDivergence> divergences;

    bool consistent() const { return divergences.empty(); }
};

/// Re-applies every recorded transition and checks each recorded checkpoint
/// (history digest, length, compression level, skill tallies).
ReplayReport replay_session_log(const std::filesystem::path& path);
ReplayReport replay_records(const std::vector<nlohmann::json>& records);

}  // namespace skillloop
