#include "skillloop/message.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

namespace skillloop {

const char* role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

Role parse_role(const std::string& name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    if (name == "tool") return Role::Tool;
    throw Error(ErrorCode::InvalidArgument, "unknown role '" + name + "'");
}

nlohmann::json to_json(const Message& m) {
    nlohmann::json j;
    j["role"] = role_name(m.role);
    j["content"] = m.content;
    j["turn_index"] = m.turn_index;
    if (!m.tool_calls.empty()) {
        auto calls = nlohmann::json::array();
        for (const auto& c : m.tool_calls) {
            calls.push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
        }
        j["tool_calls"] = std::move(calls);
    }
    if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
    if (!m.key_data.empty()) j["key_data"] = m.key_data;
    return j;
}

Message message_from_json(const nlohmann::json& j) {
    Message m;
    m.role = parse_role(j.at("role").get<std::string>());
    m.content = j.value("content", "");
    m.turn_index = j.value("turn_index", std::uint64_t{0});
    if (auto it = j.find("tool_calls"); it != j.end()) {
        for (const auto& c : *it) {
            m.tool_calls.push_back({c.at("id").get<std::string>(), c.at("name").get<std::string>(),
                                    c.value("arguments", "")});
        }
    }
    if (auto it = j.find("tool_call_id"); it != j.end()) m.tool_call_id = it->get<std::string>();
    if (auto it = j.find("key_data"); it != j.end()) m.key_data = it->get<std::vector<std::string>>();
    return m;
}

std::string serialize(const Message& m) { return to_json(m).dump(); }

std::string history_digest(const History& h) {
    std::string buf;
    for (const auto& m : h) {
        buf += serialize(m);
        buf += '\n';
    }
    return sha256_hex(buf);
}

}  // namespace skillloop
