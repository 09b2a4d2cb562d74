#pragma once

#include "skillloop/provider.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace skillloop {

class Workspace;
class SkillStore;

enum class ToolEffect { ReadOnly, WorkspaceWrite, ExternalCall };

const char* tool_effect_name(ToolEffect e);
ToolEffect parse_tool_effect(const std::string& name);

struct ToolParameter {
    std::string name;
    std::string type = "string";  // JSON Schema type
    bool required = true;
    std::string description;
};

struct ToolDefinition {
    std::string name;
    std::string description;
    std::vector<ToolParameter> parameters;
    ToolEffect effect = ToolEffect::ReadOnly;

    ToolSchema schema() const;
};

struct ToolOutput {
    std::string content;
    bool is_error = false;
    /// Values the tool marks as data worth keeping across compression.
    std::vector<std::string> key_data;
};

/// Mutable per-turn state handed to tool handlers. Flags record which
/// session-state components a tool touched.
struct ToolContext {
    Workspace* workspace = nullptr;
    SkillStore* store = nullptr;
    bool profile_changed = false;
    bool memory_changed = false;
    bool skills_changed = false;
};

using ToolHandler = std::function<ToolOutput(const nlohmann::json& args, ToolContext& ctx)>;

class ToolRegistry {
public:
    /// Throws InvalidArgument on a duplicate name.
    void add(ToolDefinition def, ToolHandler handler);

    bool contains(const std::string& name) const { return tools_.count(name) > 0; }
    const ToolDefinition* find(const std::string& name) const;
    std::vector<std::string> names() const;
    std::vector<ToolSchema> schemas() const;
    std::size_t size() const { return tools_.size(); }

    /// Registry restricted to `names`; throws SubAgentConfigError when one is missing.
    ToolRegistry subset(const std::vector<std::string>& names) const;

    /// Never throws: unknown tools, malformed arguments and handler failures
    /// come back as structured error outputs the model can read.
    ToolOutput invoke(const std::string& name, const std::string& arguments, ToolContext& ctx) const;

private:
    struct Entry {
        ToolDefinition def;
        ToolHandler handler;
    };
    std::map<std::string, Entry> tools_;
};

std::string tool_error_json(const std::string& tool, const std::string& kind, const std::string& detail);

/// update_user_profile and update_memory (real-time profile collection).
void register_builtin_tools(ToolRegistry& registry);

/// Handler POSTing the call arguments as JSON to `url` and returning the body.
ToolHandler http_tool_handler(const std::string& url, std::map<std::string, std::string> headers = {});

}  // namespace skillloop
