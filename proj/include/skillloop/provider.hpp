#pragma once

#include "skillloop/message.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace skillloop {

/// Why the harness is calling the model. Live providers ignore it; the mock
/// provider uses it to pick a canned reply.
enum class ChatPurpose { Chat, IntentClassification, Summary, Review, SubAgent };

const char* purpose_name(ChatPurpose p);
ChatPurpose parse_purpose(const std::string& name);

struct ToolSchema {
    std::string name;
    std::string description;
    nlohmann::json parameters;  // JSON Schema object
};

struct ChatRequest {
    std::vector<Message> messages;
    std::vector<ToolSchema> tools;
    ChatPurpose purpose = ChatPurpose::Chat;
};

using DeltaSink = std::function<void(std::string_view)>;

/// (message list, tool schemas) -> assistant message. Throws
/// Error{ProviderError} on transport or protocol failure.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual Message complete(const ChatRequest& request, const DeltaSink& on_delta = {}) = 0;
};

/// (text) -> fixed-dimension vector. Throws Error{ProviderError}.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

}  // namespace skillloop
