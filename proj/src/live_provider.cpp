#include "skillloop/live_provider.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

#include <httplib.h>

#include <map>

namespace skillloop {

namespace {

std::unique_ptr<httplib::Client> make_client(const EndpointSettings& s) {
    auto client = std::make_unique<httplib::Client>(s.base_url);
    if (!client->is_valid()) throw Error(ErrorCode::ProviderError, "invalid provider base url '" + s.base_url + "'");
    client->set_connection_timeout(15);
    client->set_read_timeout(s.timeout_seconds);
    client->set_write_timeout(s.timeout_seconds);
    return client;
}

httplib::Headers auth_headers(const EndpointSettings& s) {
    httplib::Headers h;
    if (!s.api_key.empty()) h.emplace("Authorization", "Bearer " + s.api_key);
    return h;
}

}  // namespace

nlohmann::json chat_request_body(const ChatRequest& request, const std::string& model, bool stream) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json j{{"role", role_name(m.role)}, {"content", m.content}};
        if (!m.tool_calls.empty()) {
            auto calls = nlohmann::json::array();
            for (const auto& c : m.tool_calls) {
                calls.push_back({{"id", c.id}, {"type", "function"},
                                 {"function", {{"name", c.name}, {"arguments", c.arguments}}}});
            }
            j["tool_calls"] = calls;
        }
        if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
        messages.push_back(std::move(j));
    }
    nlohmann::json body{{"model", model}, {"messages", messages}, {"stream", stream}};
    if (!request.tools.empty()) {
        auto tools = nlohmann::json::array();
        for (const auto& t : request.tools) {
            tools.push_back({{"type", "function"},
                             {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
        }
        body["tools"] = tools;
    }
    return body;
}

Message OpenAiChatProvider::complete(const ChatRequest& request, const DeltaSink& on_delta) {
    auto client = make_client(settings_);
    httplib::Request req;
    req.method = "POST";
    req.path = "/v1/chat/completions";
    req.headers = auth_headers(settings_);
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    req.body = chat_request_body(request, settings_.model, true).dump();

    Message reply;
    reply.role = Role::Assistant;
    std::map<int, ToolCall> calls;
    std::string buffer;
    std::string raw;
    bool saw_event = false;

    auto handle_line = [&](const std::string& line) {
        if (!line.starts_with("data:")) return;
        auto payload = trim(std::string_view(line).substr(5));
        if (payload == "[DONE]" || payload.empty()) return;
        auto j = nlohmann::json::parse(payload, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) return;
        saw_event = true;
        const auto& delta = j["choices"][0].value("delta", nlohmann::json::object());
        if (delta.contains("content") && delta["content"].is_string()) {
            auto text = delta["content"].get<std::string>();
            reply.content += text;
            if (on_delta && !text.empty()) on_delta(text);
        }
        if (delta.contains("tool_calls")) {
            for (const auto& tc : delta["tool_calls"]) {
                auto& call = calls[tc.value("index", 0)];
                if (tc.contains("id") && tc["id"].is_string()) call.id = tc["id"].get<std::string>();
                if (tc.contains("function")) {
                    const auto& fn = tc["function"];
                    if (fn.contains("name") && fn["name"].is_string()) call.name += fn["name"].get<std::string>();
                    if (fn.contains("arguments") && fn["arguments"].is_string()) {
                        call.arguments += fn["arguments"].get<std::string>();
                    }
                }
            }
        }
    };

    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        raw.append(data, len);
        buffer.append(data, len);
        for (auto nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n')) {
            auto line = buffer.substr(0, nl);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            buffer.erase(0, nl + 1);
            handle_line(line);
        }
        return true;
    };

    auto res = client->send(req);
    if (!res) throw Error(ErrorCode::ProviderError, "chat request failed: " + httplib::to_string(res.error()));
    if (res->status >= 400) {
        throw Error(ErrorCode::ProviderError, "chat provider returned HTTP " + std::to_string(res->status) + ": " + raw);
    }
    if (!buffer.empty()) handle_line(trim(buffer));
    if (!saw_event) {
        // Non-streaming servers answer with one JSON document.
        auto j = nlohmann::json::parse(raw, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            throw Error(ErrorCode::ProviderError, "unexpected chat response: " + raw.substr(0, 200));
        }
        const auto& msg = j["choices"][0].at("message");
        if (msg.contains("content") && msg["content"].is_string()) {
            reply.content = msg["content"].get<std::string>();
            if (on_delta && !reply.content.empty()) on_delta(reply.content);
        }
        if (msg.contains("tool_calls")) {
            int i = 0;
            for (const auto& tc : msg["tool_calls"]) {
                calls[i++] = {tc.value("id", ""), tc.at("function").value("name", ""),
                              tc.at("function").value("arguments", "")};
            }
        }
    }
    for (auto& [_, call] : calls) reply.tool_calls.push_back(std::move(call));
    return reply;
}

std::vector<double> OpenAiEmbeddingProvider::embed(const std::string& text) {
    auto client = make_client(settings_);
    nlohmann::json body{{"model", settings_.model}, {"input", text}};
    auto res = client->Post("/v1/embeddings", auth_headers(settings_), body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::ProviderError, "embedding request failed: " + httplib::to_string(res.error()));
    if (res->status >= 400) {
        throw Error(ErrorCode::ProviderError, "embedding provider returned HTTP " + std::to_string(res->status));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("data") || j["data"].empty()) {
        throw Error(ErrorCode::ProviderError, "unexpected embedding response");
    }
    return j["data"][0].at("embedding").get<std::vector<double>>();
}

}  // namespace skillloop
