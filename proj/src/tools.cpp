#include "skillloop/tools.hpp"

#include "skillloop/error.hpp"
#include "skillloop/workspace.hpp"

#include <httplib.h>

namespace skillloop {

const char* tool_effect_name(ToolEffect e) {
    switch (e) {
        case ToolEffect::ReadOnly: return "read_only";
        case ToolEffect::WorkspaceWrite: return "workspace_write";
        case ToolEffect::ExternalCall: return "external_call";
    }
    return "read_only";
}

ToolEffect parse_tool_effect(const std::string& name) {
    if (name == "read_only") return ToolEffect::ReadOnly;
    if (name == "workspace_write") return ToolEffect::WorkspaceWrite;
    if (name == "external_call") return ToolEffect::ExternalCall;
    throw Error(ErrorCode::InvalidArgument, "unknown tool effect '" + name + "'");
}

ToolSchema ToolDefinition::schema() const {
    nlohmann::json props = nlohmann::json::object();
    auto required = nlohmann::json::array();
    for (const auto& p : parameters) {
        props[p.name] = {{"type", p.type}, {"description", p.description}};
        if (p.required) required.push_back(p.name);
    }
    return {name, description, {{"type", "object"}, {"properties", props}, {"required", required}}};
}

void ToolRegistry::add(ToolDefinition def, ToolHandler handler) {
    if (tools_.count(def.name)) throw Error(ErrorCode::InvalidArgument, "duplicate tool '" + def.name + "'");
    auto name = def.name;
    tools_.emplace(std::move(name), Entry{std::move(def), std::move(handler)});
}

const ToolDefinition* ToolRegistry::find(const std::string& name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second.def;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tools_) out.push_back(name);
    return out;
}

std::vector<ToolSchema> ToolRegistry::schemas() const {
    std::vector<ToolSchema> out;
    for (const auto& [_, e] : tools_) out.push_back(e.def.schema());
    return out;
}

ToolRegistry ToolRegistry::subset(const std::vector<std::string>& names) const {
    ToolRegistry out;
    for (const auto& n : names) {
        auto it = tools_.find(n);
        if (it == tools_.end()) throw Error(ErrorCode::SubAgentConfigError, "sub-agent tool '" + n + "' is not registered");
        if (!out.contains(n)) out.tools_.emplace(n, it->second);
    }
    return out;
}

std::string tool_error_json(const std::string& tool, const std::string& kind, const std::string& detail) {
    return nlohmann::json{{"error", {{"tool", tool}, {"kind", kind}, {"detail", detail}}}}.dump();
}

ToolOutput ToolRegistry::invoke(const std::string& name, const std::string& arguments, ToolContext& ctx) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) {
        return {tool_error_json(name, "unknown_tool", "no tool named '" + name + "' is available"), true, {}};
    }
    nlohmann::json args = nlohmann::json::object();
    if (!arguments.empty()) {
        args = nlohmann::json::parse(arguments, nullptr, false);
        if (args.is_discarded() || !args.is_object()) {
            return {tool_error_json(name, "invalid_arguments", "arguments must be a JSON object"), true, {}};
        }
    }
    for (const auto& p : it->second.def.parameters) {
        if (p.required && !args.contains(p.name)) {
            return {tool_error_json(name, "invalid_arguments", "missing parameter '" + p.name + "'"), true, {}};
        }
    }
    try {
        return it->second.handler(args, ctx);
    } catch (const std::exception& e) {
        return {tool_error_json(name, "tool_failed", e.what()), true, {}};
    }
}

namespace {

ProfileDelta delta_from_args(const nlohmann::json& args) {
    ProfileDelta delta;
    delta.provenance = Provenance::RealTime;
    SectionEdit edit{args.at("section").get<std::string>(), args.at("content").get<std::string>()};
    if (args.value("mode", std::string("add")) == "replace") {
        delta.replacements.push_back(std::move(edit));
    } else {
        delta.additions.push_back(std::move(edit));
    }
    return delta;
}

std::vector<ToolParameter> section_params() {
    return {{"section", "string", true, "Markdown section heading, e.g. 'Target Markets'"},
            {"content", "string", true, "Markdown text to record"},
            {"mode", "string", false, "'add' (default) appends, 'replace' overwrites the section"}};
}

}  // namespace

void register_builtin_tools(ToolRegistry& registry) {
    registry.add({"update_user_profile",
                  "Record business facts the user has explicitly stated (products, markets, preferences) in "
                  "their profile.",
                  section_params(), ToolEffect::WorkspaceWrite},
                 [](const nlohmann::json& args, ToolContext& ctx) -> ToolOutput {
                     if (!ctx.workspace) return {tool_error_json("update_user_profile", "unavailable", "no workspace"), true, {}};
                     ctx.workspace->apply_profile_delta(delta_from_args(args));
                     ctx.profile_changed = true;
                     return {"profile updated", false, {}};
                 });
    registry.add({"update_memory", "Store a long-term note worth remembering across sessions.", section_params(),
                  ToolEffect::WorkspaceWrite},
                 [](const nlohmann::json& args, ToolContext& ctx) -> ToolOutput {
                     if (!ctx.workspace) return {tool_error_json("update_memory", "unavailable", "no workspace"), true, {}};
                     ctx.workspace->apply_memory_delta(delta_from_args(args));
                     ctx.memory_changed = true;
                     return {"memory updated", false, {}};
                 });
}

ToolHandler http_tool_handler(const std::string& url, std::map<std::string, std::string> headers) {
    return [url, headers = std::move(headers)](const nlohmann::json& args, ToolContext&) -> ToolOutput {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "tool url lacks a scheme: " + url);
        auto path_start = url.find('/', scheme_end + 3);
        std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
        httplib::Client client(base);
        client.set_connection_timeout(10);
        client.set_read_timeout(60);
        httplib::Headers hdrs;
        for (const auto& [k, v] : headers) hdrs.emplace(k, v);
        auto res = client.Post(path, hdrs, args.dump(), "application/json");
        if (!res) throw Error(ErrorCode::ProviderError, "request to " + url + " failed: " + httplib::to_string(res.error()));
        if (res->status >= 400) {
            return {tool_error_json("http", "http_status", std::to_string(res->status) + " " + res->body), true, {}};
        }
        ToolOutput out{res->body, false, {}};
        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("key_data") && j["key_data"].is_array()) {
            for (const auto& d : j["key_data"]) {
                if (d.is_string()) out.key_data.push_back(d.get<std::string>());
            }
        }
        return out;
    };
}

}  // namespace skillloop
