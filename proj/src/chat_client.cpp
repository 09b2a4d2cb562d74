#include "skillloop/chat_client.hpp"

#include "skillloop/util.hpp"

#include <httplib.h>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace skillloop {

using json = nlohmann::json;

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

httplib::Client make_client(const std::string& base_url, const std::string& token) {
    httplib::Client c(base_url);
    c.set_read_timeout(300);
    if (!token.empty()) c.set_bearer_token_auth(token);
    return c;
}

HttpReply to_reply(const httplib::Result& res) {
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    HttpReply r;
    r.status = res->status;
    r.body = json::parse(res->body, nullptr, false);
    if (r.body.is_discarded()) r.body = res->body;
    return r;
}

}  // namespace

std::string render_event(const json& ev) {
    auto type = ev.value("type", "");
    if (type == "delta") return ev.value("text", "");
    if (type == "match_result") {
        if (ev.contains("skill") && ev["skill"].is_string()) {
            return "[skill: " + ev["skill"].get<std::string>() + " via " + ev.value("stage", "?") + " " +
                   fixed2(ev.value("confidence", 0.0)) + "]" + (ev.value("degraded", false) ? " (degraded)" : "");
        }
        return std::string("[no skill]") + (ev.value("degraded", false) ? " (degraded)" : "");
    }
    if (type == "tool_started") return "[tool: " + ev.value("tool", "?") + "]";
    if (type == "tool_finished") {
        return "[tool " + ev.value("tool", "?") + (ev.value("is_error", false) ? " failed]" : " done]");
    }
    if (type == "compression") {
        return "[context compressed: level " + std::to_string(ev.value("level", 0)) + ", " +
               std::to_string(ev.value("assets", 0)) + " assets kept]";
    }
    if (type == "error") return "[error: " + ev.value("code", "?") + ": " + ev.value("message", "") + "]";
    if (type == "turn_summary") {
        std::string idx = ev.contains("turn_index") && ev["turn_index"].is_number()
                              ? std::to_string(ev["turn_index"].get<std::uint64_t>())
                              : "-";
        return "[turn " + idx + ": " + (ev.value("success", false) ? "ok" : "failed") + ", ~" +
               std::to_string(ev.value("token_estimate", 0)) + " tokens]";
    }
    return "[" + type + "]";
}

ApiClient::ApiClient(std::string base_url, std::string token)
    : base_url_(std::move(base_url)), token_(std::move(token)) {}

HttpReply ApiClient::get(const std::string& path) const {
    auto c = make_client(base_url_, token_);
    return to_reply(c.Get(path));
}

HttpReply ApiClient::post(const std::string& path, const json& body) const {
    auto c = make_client(base_url_, token_);
    return to_reply(c.Post(path, body.dump(), "application/json"));
}

HttpReply ApiClient::put(const std::string& path, const std::string& body, const std::string& content_type) const {
    auto c = make_client(base_url_, token_);
    return to_reply(c.Put(path, body, content_type));
}

HttpReply ApiClient::del(const std::string& path) const {
    auto c = make_client(base_url_, token_);
    return to_reply(c.Delete(path));
}

int ApiClient::stream_message(const std::string& session_id, const std::string& text,
                              const std::function<void(const json&)>& on_event, json* error) const {
    auto c = make_client(base_url_, token_);
    httplib::Request req;
    req.method = "POST";
    req.path = "/v1/sessions/" + session_id + "/messages";
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    if (!token_.empty()) req.set_header("Authorization", "Bearer " + token_);
    req.body = json{{"text", text}}.dump();
    SseParser parser;
    std::string raw;
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        raw.append(data, len);
        parser.feed(std::string_view(data, len), [&](const std::string& payload) {
            auto ev = json::parse(payload, nullptr, false);
            if (!ev.is_discarded()) on_event(ev);
        });
        return true;
    };
    auto res = c.send(req);
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    if (res->status >= 300 && error) {
        *error = json::parse(raw, nullptr, false);
        if (error->is_discarded()) *error = raw;
    }
    return res->status;
}

int run_chat(const ChatOptions& options, std::istream& in, std::ostream& out, std::ostream& err) {
    ApiClient api(options.base_url, options.token);
    std::string session_id;
    try {
        auto created = api.post("/v1/sessions", {{"user_id", options.user_id}});
        if (created.status != 201) {
            err << "cannot open session: " << created.body.dump() << "\n";
            return 2;
        }
        session_id = created.body.at("session_id").get<std::string>();
        out << "session " << session_id << " (user " << options.user_id << ", evolution "
            << created.body.value("evolution_mode", "manual") << ")\n";
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return 2;
    }

    std::optional<std::uint64_t> last_turn;
    std::string line;
    try {
        while (out << "> " << std::flush, std::getline(in, line)) {
            auto cmd = trim(line);
            if (cmd.empty()) continue;
            if (cmd == "/quit") break;
            if (cmd == "/end") {
                auto r = api.post("/v1/sessions/" + session_id + "/end", json::object());
                if (r.status != 200) {
                    out << "[error: " << r.body.dump() << "]\n";
                    continue;
                }
                out << "[session ended; evolution "
                    << (r.body.value("evolution_scheduled", false) ? "scheduled" : "pending, use /evolve") << "]\n";
                continue;
            }
            if (cmd == "/evolve") {
                auto r = api.post("/v1/sessions/" + session_id + "/evolve", json::object());
                out << (r.status == 200 ? "[evolution complete]" : "[error: " + r.body.dump() + "]") << "\n";
                continue;
            }
            if (cmd.rfind("/feedback", 0) == 0) {
                std::istringstream args(cmd.substr(9));
                std::string sign;
                args >> sign;
                std::uint64_t turn = 0;
                bool explicit_turn = static_cast<bool>(args >> turn);
                if ((sign != "+" && sign != "-") || (!explicit_turn && !last_turn)) {
                    out << "usage: /feedback +|- [turn_index]\n";
                    continue;
                }
                if (!explicit_turn) turn = *last_turn;
                auto r = api.post("/v1/sessions/" + session_id + "/feedback",
                                  {{"turn_index", turn}, {"positive", sign == "+"}});
                out << (r.status == 200 ? "[feedback recorded for turn " + std::to_string(turn) + "]"
                                        : "[error: " + r.body.dump() + "]")
                    << "\n";
                continue;
            }
            bool mid_text = false;
            json error;
            int status = api.stream_message(
                session_id, cmd,
                [&](const json& ev) {
                    auto type = ev.value("type", "");
                    if (type == "delta") {
                        out << render_event(ev) << std::flush;
                        mid_text = true;
                        return;
                    }
                    if (mid_text) out << "\n";
                    mid_text = false;
                    out << render_event(ev) << "\n";
                    if (type == "turn_summary" && ev.contains("turn_index") && ev["turn_index"].is_number()) {
                        last_turn = ev["turn_index"].get<std::uint64_t>();
                    }
                },
                &error);
            if (status != 200) out << "[error: " << error.dump() << "]\n";
        }
    } catch (const std::exception& e) {
        err << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace skillloop
