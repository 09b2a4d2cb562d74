#pragma once

#include "skillloop/provider.hpp"

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>

namespace skillloop {

/// Deterministic offline reply for a request: a nine-section summary for
/// Summary requests, "NONE" for intent classification, no tool calls for
/// review, and an acknowledgement with two follow-up suggestions otherwise.
Message default_mock_reply(const ChatRequest& request);

/// Chat provider replaying canned responses.
///
/// Transcript files are JSON Lines. Chat entries look like
///   {"purpose": "chat", "message": {"role": "assistant", "content": "..."}}
/// where "purpose" is optional (entries without it serve any request).
/// Embedding entries, consumed by MockEmbeddingProvider, look like
///   {"embedding": {"text": "...", "vector": [..]}}
/// Once the queues for a purpose run dry the provider falls back to
/// default_mock_reply().
class MockChatProvider : public ChatProvider {
public:
    using Responder = std::function<Message(const ChatRequest&)>;

    MockChatProvider() = default;
    void load_transcript(const std::filesystem::path& path);

    void enqueue(Message reply);
    void enqueue(ChatPurpose purpose, Message reply);
    void set_responder(Responder responder);
    /// The next `n` calls throw ProviderError.
    void fail_next(int n);
    void set_always_fail(bool fail);
    /// Chunk size used when streaming content deltas.
    void set_stream_chunk(std::size_t n) { chunk_ = n == 0 ? 1 : n; }
    /// Keep full copies of requests for requests(); off for long soak runs.
    void set_record_requests(bool record) { record_ = record; }

    Message complete(const ChatRequest& request, const DeltaSink& on_delta = {}) override;

    std::size_t calls() const;
    std::size_t calls(ChatPurpose purpose) const;
    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mu_;
    std::deque<Message> any_;
    std::map<ChatPurpose, std::deque<Message>> by_purpose_;
    Responder responder_;
    int fail_next_ = 0;
    bool always_fail_ = false;
    std::size_t chunk_ = 24;
    bool record_ = true;
    std::map<ChatPurpose, std::size_t> counts_;
    std::vector<ChatRequest> requests_;
};

/// Embedding provider with an exact-text lookup table and a hashed
/// bag-of-words fallback, so related texts land near each other.
class MockEmbeddingProvider : public EmbeddingProvider {
public:
    explicit MockEmbeddingProvider(std::size_t dimension = 64) : dimension_(dimension) {}
    void load_transcript(const std::filesystem::path& path);

    void set_vector(const std::string& text, std::vector<double> vec);
    void set_failing(bool fail);
    std::vector<double> embed(const std::string& text) override;

    std::size_t calls() const;
    std::size_t calls_for(const std::string& text) const;
    std::size_t dimension() const { return dimension_; }

private:
    mutable std::mutex mu_;
    std::size_t dimension_;
    std::map<std::string, std::vector<double>> table_;
    std::map<std::string, std::size_t> per_text_;
    std::size_t calls_ = 0;
    bool failing_ = false;
};

/// Hashed bag-of-words vector (lower-cased alphanumeric tokens), L2-normalised.
std::vector<double> hashed_embedding(const std::string& text, std::size_t dimension);

}  // namespace skillloop
