#include "skillloop/session_log.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

#include <fstream>

namespace skillloop {

void SessionLog::append(const nlohmann::json& record) { io::append_line(path_, record.dump()); }

void SessionLog::write_header(const std::string& session_id, const std::string& user_id) {
    append({{"type", "session"}, {"session_id", session_id}, {"user_id", user_id}});
}

void SessionLog::write_message(const Message& m) { append({{"type", "message"}, {"message", to_json(m)}}); }

void SessionLog::write_compression(const CompressionState& state, const Message& summary_message) {
    auto assets = nlohmann::json::array();
    for (const auto& a : state.asset_index) {
        assets.push_back({{"kind", asset_kind_name(a.kind)}, {"value", a.value}, {"source_turn", a.source_turn}});
    }
    append({{"type", "compression"},
            {"level", state.level},
            {"retained_from", state.retained_from},
            {"summary", state.summary.value_or("")},
            {"assets", assets},
            {"summary_message", to_json(summary_message)}});
}

void SessionLog::write_turn(std::uint64_t user_turn_index, const std::optional<std::string>& skill, bool success,
                            const History& history, std::uint64_t level) {
    append({{"type", "turn"},
            {"user_turn_index", user_turn_index},
            {"skill_used", skill ? nlohmann::json(*skill) : nlohmann::json(nullptr)},
            {"success", success},
            {"history_len", history.size()},
            {"history_digest", history_digest(history)},
            {"level", level}});
}

void SessionLog::write_feedback(std::uint64_t user_turn_index, const std::string& skill, bool positive, bool success) {
    append({{"type", "feedback"},
            {"user_turn_index", user_turn_index},
            {"skill", skill},
            {"positive", positive},
            {"success", success}});
}

void SessionLog::write_end(const History& history, std::uint64_t level, const std::map<std::string, SkillTally>& skills,
                           const std::string& evolution_mode) {
    nlohmann::json tallies = nlohmann::json::object();
    for (const auto& [name, t] : skills) tallies[name] = {{"uses", t.uses}, {"successes", t.successes}};
    append({{"type", "end"},
            {"history_len", history.size()},
            {"history_digest", history_digest(history)},
            {"level", level},
            {"skills", tallies},
            {"evolution", evolution_mode}});
}

std::vector<nlohmann::json> SessionLog::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ReplayError, "cannot open session log " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
            throw Error(ErrorCode::ReplayError, path.string() + ":" + std::to_string(n) + ": corrupt record");
        }
        j["_line"] = n;
        out.push_back(std::move(j));
    }
    return out;
}

History SessionLog::full_transcript(const std::vector<nlohmann::json>& records) {
    History h;
    for (const auto& r : records) {
        if (r.at("type") == "message") h.push_back(message_from_json(r.at("message")));
    }
    return h;
}

ReplayReport replay_session_log(const std::filesystem::path& path) { return replay_records(SessionLog::read(path)); }

ReplayReport replay_records(const std::vector<nlohmann::json>& records) {
    ReplayReport report;
    History h;
    std::map<std::uint64_t, std::pair<std::string, bool>> turn_verdicts;  // user turn -> (skill, success)

    auto line_of = [](const nlohmann::json& r) { return r.value("_line", std::size_t{0}); };
    auto diverge = [&](const nlohmann::json& r, std::string what) {
        report.divergences.push_back({line_of(r), std::move(what)});
    };

    for (const auto& r : records) {
        ++report.records;
        const auto type = r.at("type").get<std::string>();
        try {
            if (type == "message") {
                auto m = message_from_json(r.at("message"));
                if (!h.empty() && m.turn_index <= h.back().turn_index) {
                    diverge(r, "turn_index " + std::to_string(m.turn_index) + " does not increase");
                }
                h.push_back(std::move(m));
            } else if (type == "compression") {
                auto level = r.at("level").get<std::uint64_t>();
                if (level != report.compression_level + 1) {
                    diverge(r, "compression level " + std::to_string(level) + " after " +
                                   std::to_string(report.compression_level));
                }
                report.compression_level = level;
                auto retained_from = r.at("retained_from").get<std::uint64_t>();
                History next;
                next.push_back(message_from_json(r.at("summary_message")));
                for (auto& m : h) {
                    if (m.turn_index >= retained_from) next.push_back(std::move(m));
                }
                h = std::move(next);
            } else if (type == "turn") {
                ++report.turns;
                auto idx = r.at("user_turn_index").get<std::uint64_t>();
                if (r.at("history_len").get<std::size_t>() != h.size()) {
                    diverge(r, "turn " + std::to_string(idx) + ": history length " + std::to_string(h.size()) +
                                   " != recorded " + std::to_string(r.at("history_len").get<std::size_t>()));
                } else if (r.at("history_digest").get<std::string>() != history_digest(h)) {
                    diverge(r, "turn " + std::to_string(idx) + ": history digest differs");
                }
                if (r.at("level").get<std::uint64_t>() != report.compression_level) {
                    diverge(r, "turn " + std::to_string(idx) + ": compression level differs");
                }
                if (!r.at("skill_used").is_null()) {
                    auto skill = r.at("skill_used").get<std::string>();
                    bool success = r.at("success").get<bool>();
                    turn_verdicts[idx] = {skill, success};
                    auto& t = report.skills[skill];
                    ++t.uses;
                    t.successes += success;
                }
            } else if (type == "feedback") {
                auto idx = r.at("user_turn_index").get<std::uint64_t>();
                auto it = turn_verdicts.find(idx);
                if (it == turn_verdicts.end()) {
                    diverge(r, "feedback for unknown skill turn " + std::to_string(idx));
                    continue;
                }
                bool now = r.at("success").get<bool>();
                if (now != it->second.second) {
                    auto& t = report.skills[it->second.first];
                    if (now) ++t.successes;
                    else if (t.successes > 0) --t.successes;
                    it->second.second = now;
                }
            } else if (type == "end") {
                if (r.at("history_len").get<std::size_t>() != h.size() ||
                    r.at("history_digest").get<std::string>() != history_digest(h)) {
                    diverge(r, "final history differs");
                }
                if (r.at("level").get<std::uint64_t>() != report.compression_level) {
                    diverge(r, "final compression level differs");
                }
                std::map<std::string, SkillTally> recorded;
                for (const auto& [name, t] : r.at("skills").items()) {
                    recorded[name] = {t.at("uses").get<std::uint64_t>(), t.at("successes").get<std::uint64_t>()};
                }
                if (recorded != report.skills) diverge(r, "skill usage tallies differ");
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ReplayError, "line " + std::to_string(line_of(r)) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::ReplayError, "line " + std::to_string(line_of(r)) + ": " + e.what());
        }
    }
    report.final_history_len = h.size();
    return report;
}

}  // namespace skillloop
