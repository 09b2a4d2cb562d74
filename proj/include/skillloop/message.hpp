#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace skillloop {

enum class Role { System, User, Assistant, Tool };

const char* role_name(Role role);
Role parse_role(const std::string& name);

struct ToolCall {
    std::string id;
    std::string name;
    std::string arguments;  // JSON text

    bool operator==(const ToolCall&) const = default;
};

struct Message {
    Role role = Role::User;
    std::string content;
    std::vector<ToolCall> tool_calls;
    std::optional<std::string> tool_call_id;
    std::uint64_t turn_index = 0;
    /// Data items a tool explicitly marked as worth keeping across compression.
    std::vector<std::string> key_data;

    bool operator==(const Message&) const = default;
};

using History = std::vector<Message>;

nlohmann::json to_json(const Message& m);
Message message_from_json(const nlohmann::json& j);

/// Canonical one-line JSON encoding (sorted keys), used for logs and digests.
std::string serialize(const Message& m);
std::string history_digest(const History& h);

}  // namespace skillloop
