#pragma once

#include "skillloop/provider.hpp"
#include "skillloop/skill_store.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skillloop {

enum class MatchType { Keyword, Embedding, Llm };

const char* match_type_name(MatchType t);

struct MatchResult {
    std::string skill_name;
    MatchType type = MatchType::Keyword;
    double confidence = 1.0;

    bool operator==(const MatchResult&) const = default;
};

inline constexpr double kLlmMatchConfidence = 0.7;

struct MatcherConfig {
    double theta = 0.6;
    /// Off by default: triggers match as plain case-insensitive substrings.
    bool word_boundary = false;
};

/// Result of one matching stage or of the whole cascade. `degraded` is set
/// when a provider failed and its stage was treated as a miss.
struct MatchOutcome {
    std::optional<MatchResult> result;
    bool degraded = false;
    std::vector<std::string> degradations;
};

/// dot(a,b) / (|a||b|); 0 when either norm is zero. Throws DimensionMismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Per-skill description embeddings keyed by (skill name, SHA-256 of the
/// description). Optionally persisted to a JSON sidecar file.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path sidecar);

    /// Cached vector when the digest still matches, else embeds and stores.
    std::vector<double> get_or_compute(const Skill& skill, EmbeddingProvider& provider);
    bool has_fresh(const Skill& skill) const;
    std::size_t size() const;
    void save() const;

private:
    struct Entry {
        std::string desc_digest;
        std::vector<double> vector;
    };
    void load();

    std::filesystem::path sidecar_;
    mutable std::shared_mutex mu_;
    std::map<std::string, Entry> entries_;
};

std::optional<MatchResult> keyword_match(std::string_view user_input, const SkillStore& store,
                                         bool word_boundary = false);

MatchOutcome embedding_match(std::string_view user_input, const SkillStore& store, const MatcherConfig& config,
                             EmbeddingCache& cache, EmbeddingProvider& provider);

/// The classification request sent in the LLM stage.
ChatRequest intent_request(std::string_view user_input, const SkillStore& store);

MatchOutcome llm_match(std::string_view user_input, const SkillStore& store, ChatProvider& chat);

/// keyword -> embedding -> llm; the first stage that succeeds wins.
/// Null providers skip their stage.
MatchOutcome match_skill(std::string_view user_input, const SkillStore& store, const MatcherConfig& config,
                         EmbeddingCache& cache, EmbeddingProvider* embed, ChatProvider* chat);

}  // namespace skillloop
