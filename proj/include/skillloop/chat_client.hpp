#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace skillloop {

/// Inline rendering of one stream event, e.g. "[skill: X via keyword 1.00]".
/// Deltas render as their raw text.
std::string render_event(const nlohmann::json& event);

struct HttpReply {
    int status = 0;
    nlohmann::json body;
};

/// Thin JSON/SSE client for the service endpoints.
class ApiClient {
public:
    explicit ApiClient(std::string base_url, std::string token = {});

    HttpReply get(const std::string& path) const;
    HttpReply post(const std::string& path, const nlohmann::json& body) const;
    HttpReply put(const std::string& path, const std::string& body, const std::string& content_type) const;
    HttpReply del(const std::string& path) const;

    /// POSTs {"text"} and calls `on_event` for each SSE event. Returns the
    /// HTTP status; non-2xx bodies are parsed into `error`.
    int stream_message(const std::string& session_id, const std::string& text,
                       const std::function<void(const nlohmann::json&)>& on_event,
                       nlohmann::json* error = nullptr) const;

private:
    std::string base_url_;
    std::string token_;
};

/// Splits an SSE byte stream into "data:" payloads.
class SseParser {
public:
    template <typename F>
    void feed(std::string_view bytes, F&& on_data) {
        buffer_.append(bytes);
        for (auto end = buffer_.find("\n\n"); end != std::string::npos; end = buffer_.find("\n\n")) {
            auto frame = buffer_.substr(0, end);
            buffer_.erase(0, end + 2);
            std::string data;
            std::size_t pos = 0;
            while (pos <= frame.size()) {
                auto nl = frame.find('\n', pos);
                auto line = frame.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
                if (line.rfind("data:", 0) == 0) {
                    auto payload = line.substr(5);
                    if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
                    if (!data.empty()) data += '\n';
                    data += payload;
                }
                if (nl == std::string::npos) break;
                pos = nl + 1;
            }
            if (!data.empty()) on_data(data);
        }
    }

private:
    std::string buffer_;
};

struct ChatOptions {
    std::string base_url = "http://127.0.0.1:8080";
    std::string user_id;
    std::string token;
};

/// Interactive loop. Commands: /end, /evolve, /feedback +|- [turn], /quit.
/// Returns a process exit code (0 ok, 2 connection or server failure).
int run_chat(const ChatOptions& options, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace skillloop
