#pragma once

#include "skillloop/provider.hpp"

#include <string>

namespace skillloop {

struct EndpointSettings {
    std::string base_url;  // e.g. "https://api.openai.com" (paths below are appended)
    std::string model;
    std::string api_key;   // resolved from the environment by the caller
    int timeout_seconds = 120;
};

/// OpenAI-compatible POST {base_url}/v1/chat/completions with stream=true.
/// Text deltas are forwarded as they arrive; tool-call fragments are
/// accumulated per index.
class OpenAiChatProvider : public ChatProvider {
public:
    explicit OpenAiChatProvider(EndpointSettings settings) : settings_(std::move(settings)) {}
    Message complete(const ChatRequest& request, const DeltaSink& on_delta = {}) override;

private:
    EndpointSettings settings_;
};

/// OpenAI-compatible POST {base_url}/v1/embeddings.
class OpenAiEmbeddingProvider : public EmbeddingProvider {
public:
    explicit OpenAiEmbeddingProvider(EndpointSettings settings) : settings_(std::move(settings)) {}
    std::vector<double> embed(const std::string& text) override;

private:
    EndpointSettings settings_;
};

nlohmann::json chat_request_body(const ChatRequest& request, const std::string& model, bool stream);

}  // namespace skillloop
