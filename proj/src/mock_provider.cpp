#include "skillloop/mock_provider.hpp"

#include "skillloop/context_engine.hpp"
#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

namespace skillloop {

const char* purpose_name(ChatPurpose p) {
    switch (p) {
        case ChatPurpose::Chat: return "chat";
        case ChatPurpose::IntentClassification: return "intent";
        case ChatPurpose::Summary: return "summary";
        case ChatPurpose::Review: return "review";
        case ChatPurpose::SubAgent: return "sub_agent";
    }
    return "chat";
}

ChatPurpose parse_purpose(const std::string& name) {
    if (name == "chat") return ChatPurpose::Chat;
    if (name == "intent") return ChatPurpose::IntentClassification;
    if (name == "summary") return ChatPurpose::Summary;
    if (name == "review") return ChatPurpose::Review;
    if (name == "sub_agent") return ChatPurpose::SubAgent;
    throw Error(ErrorCode::InvalidArgument, "unknown chat purpose '" + name + "'");
}

namespace {

const Message* last_with_role(const ChatRequest& req, Role role) {
    for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
        if (it->role == role) return &*it;
    }
    return nullptr;
}

std::string clip(std::string_view s, std::size_t n) {
    if (s.size() <= n) return std::string(s);
    return std::string(s.substr(0, n)) + "...";
}

}  // namespace

Message default_mock_reply(const ChatRequest& request) {
    Message reply;
    reply.role = Role::Assistant;
    switch (request.purpose) {
        case ChatPurpose::Summary: {
            const auto* transcript = last_with_role(request, Role::User);
            std::size_t lines = 0;
            if (transcript) {
                for (char c : transcript->content) lines += c == '\n';
            }
            const auto& h = summary_headings();
            std::string body;
            for (std::size_t k = 0; k < h.size(); ++k) {
                body += "## " + std::to_string(k + 1) + ". " + h[k] + "\n";
                body += k == 0 ? "- Earlier conversation of " + std::to_string(lines) + " transcript lines.\n"
                               : "- (none)\n";
                body += "\n";
            }
            reply.content = body;
            break;
        }
        case ChatPurpose::IntentClassification:
            reply.content = "NONE";
            break;
        case ChatPurpose::Review:
            reply.content = "No durable profile, memory or skill changes found.";
            break;
        case ChatPurpose::Chat:
        case ChatPurpose::SubAgent: {
            const auto* user = last_with_role(request, Role::User);
            std::string said = user ? user->content : std::string();
            reply.content = "Noted. Working on: " + clip(said, 240) +
                            "\n\nSuggestions:\n1. Tell me your main products so I can tailor the answer.\n"
                            "2. Let me know which markets you are targeting.";
            break;
        }
    }
    return reply;
}

void MockChatProvider::load_transcript(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open transcript " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw Error(ErrorCode::InvalidArgument,
                        path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
        if (!j.contains("message")) continue;
        auto msg = message_from_json(j["message"]);
        if (j.contains("purpose")) {
            enqueue(parse_purpose(j["purpose"].get<std::string>()), std::move(msg));
        } else {
            enqueue(std::move(msg));
        }
    }
}

void MockChatProvider::enqueue(Message reply) {
    std::lock_guard lock(mu_);
    any_.push_back(std::move(reply));
}

void MockChatProvider::enqueue(ChatPurpose purpose, Message reply) {
    std::lock_guard lock(mu_);
    by_purpose_[purpose].push_back(std::move(reply));
}

void MockChatProvider::set_responder(Responder responder) {
    std::lock_guard lock(mu_);
    responder_ = std::move(responder);
}

void MockChatProvider::fail_next(int n) {
    std::lock_guard lock(mu_);
    fail_next_ = n;
}

void MockChatProvider::set_always_fail(bool fail) {
    std::lock_guard lock(mu_);
    always_fail_ = fail;
}

Message MockChatProvider::complete(const ChatRequest& request, const DeltaSink& on_delta) {
    Message reply;
    std::size_t chunk;
    {
        std::lock_guard lock(mu_);
        ++counts_[request.purpose];
        if (record_) requests_.push_back(request);
        if (always_fail_ || fail_next_ > 0) {
            if (fail_next_ > 0) --fail_next_;
            throw Error(ErrorCode::ProviderError, "mock provider failure");
        }
        chunk = chunk_;
        if (auto it = by_purpose_.find(request.purpose); it != by_purpose_.end() && !it->second.empty()) {
            reply = std::move(it->second.front());
            it->second.pop_front();
        } else if (!any_.empty()) {
            reply = std::move(any_.front());
            any_.pop_front();
        } else if (responder_) {
            reply = responder_(request);
        } else {
            reply = default_mock_reply(request);
        }
    }
    reply.role = Role::Assistant;
    if (on_delta) {
        for (std::size_t i = 0; i < reply.content.size(); i += chunk) {
            on_delta(std::string_view(reply.content).substr(i, chunk));
        }
    }
    return reply;
}

std::size_t MockChatProvider::calls() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [_, c] : counts_) n += c;
    return n;
}

std::size_t MockChatProvider::calls(ChatPurpose purpose) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(purpose);
    return it == counts_.end() ? 0 : it->second;
}

std::vector<ChatRequest> MockChatProvider::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

std::vector<double> hashed_embedding(const std::string& text, std::size_t dimension) {
    std::vector<double> v(dimension, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        auto h = std::hash<std::string>{}(token);
        v[h % dimension] += (h >> 32) & 1 ? 1.0 : -1.0;
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

void MockEmbeddingProvider::load_transcript(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open transcript " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("embedding")) continue;
        set_vector(j["embedding"].at("text").get<std::string>(),
                   j["embedding"].at("vector").get<std::vector<double>>());
    }
}

void MockEmbeddingProvider::set_vector(const std::string& text, std::vector<double> vec) {
    std::lock_guard lock(mu_);
    table_[text] = std::move(vec);
}

void MockEmbeddingProvider::set_failing(bool fail) {
    std::lock_guard lock(mu_);
    failing_ = fail;
}

std::vector<double> MockEmbeddingProvider::embed(const std::string& text) {
    std::lock_guard lock(mu_);
    ++calls_;
    ++per_text_[text];
    if (failing_) throw Error(ErrorCode::ProviderError, "mock embedding provider failure");
    if (auto it = table_.find(text); it != table_.end()) return it->second;
    return hashed_embedding(text, dimension_);
}

std::size_t MockEmbeddingProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::size_t MockEmbeddingProvider::calls_for(const std::string& text) const {
    std::lock_guard lock(mu_);
    auto it = per_text_.find(text);
    return it == per_text_.end() ? 0 : it->second;
}

}  // namespace skillloop
