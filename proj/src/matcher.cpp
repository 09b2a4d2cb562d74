#include "skillloop/matcher.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <mutex>

namespace skillloop {

const char* match_type_name(MatchType t) {
    switch (t) {
        case MatchType::Keyword: return "keyword";
        case MatchType::Embedding: return "embedding";
        case MatchType::Llm: return "llm";
    }
    return "keyword";
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch, "vector lengths " + std::to_string(a.size()) + " and " +
                                                      std::to_string(b.size()) + " differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

EmbeddingCache::EmbeddingCache(std::filesystem::path sidecar) : sidecar_(std::move(sidecar)) { load(); }

void EmbeddingCache::load() {
    if (sidecar_.empty() || !std::filesystem::exists(sidecar_)) return;
    auto j = nlohmann::json::parse(io::read_text(sidecar_), nullptr, false);
    if (j.is_discarded() || !j.contains("entries")) return;
    for (const auto& e : j["entries"]) {
        entries_[e.at("skill_name").get<std::string>()] = {e.at("desc_digest").get<std::string>(),
                                                          e.at("vector").get<std::vector<double>>()};
    }
}

void EmbeddingCache::save() const {
    if (sidecar_.empty()) return;
    nlohmann::json j;
    j["entries"] = nlohmann::json::array();
    {
        std::shared_lock lock(mu_);
        for (const auto& [name, e] : entries_) {
            j["entries"].push_back({{"skill_name", name}, {"desc_digest", e.desc_digest}, {"vector", e.vector}});
        }
    }
    io::write_atomic(sidecar_, j.dump());
}

bool EmbeddingCache::has_fresh(const Skill& skill) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(skill.name);
    return it != entries_.end() && it->second.desc_digest == sha256_hex(skill.description);
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

std::vector<double> EmbeddingCache::get_or_compute(const Skill& skill, EmbeddingProvider& provider) {
    auto digest = sha256_hex(skill.description);
    {
        std::shared_lock lock(mu_);
        auto it = entries_.find(skill.name);
        if (it != entries_.end() && it->second.desc_digest == digest) return it->second.vector;
    }
    auto vec = provider.embed(skill.description);
    {
        std::unique_lock lock(mu_);
        entries_[skill.name] = {digest, vec};
    }
    save();
    return vec;
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_at_word_boundary(const std::string& haystack, const std::string& needle) {
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
        bool left = pos == 0 || !is_word_char(haystack[pos - 1]);
        auto end = pos + needle.size();
        bool right = end >= haystack.size() || !is_word_char(haystack[end]);
        if (left && right) return true;
    }
    return false;
}

}  // namespace

std::optional<MatchResult> keyword_match(std::string_view user_input, const SkillStore& store, bool word_boundary) {
    auto input = to_lower(user_input);
    for (const auto& [name, skill] : store.skills()) {
        for (const auto& trigger : skill.triggers) {
            auto t = to_lower(trigger);
            if (t.empty()) continue;
            bool hit = word_boundary ? contains_at_word_boundary(input, t) : input.find(t) != std::string::npos;
            if (hit) return MatchResult{name, MatchType::Keyword, 1.0};
        }
    }
    return std::nullopt;
}

MatchOutcome embedding_match(std::string_view user_input, const SkillStore& store, const MatcherConfig& config,
                             EmbeddingCache& cache, EmbeddingProvider& provider) {
    MatchOutcome out;
    if (store.empty()) return out;
    try {
        auto query = provider.embed(std::string(user_input));
        // Strict ">" over ascending names keeps the earliest name on ties;
        // a best score that never rises above 0 selects nothing.
        double best = 0.0;
        const Skill* chosen = nullptr;
        for (const auto& [name, skill] : store.skills()) {
            auto vec = cache.get_or_compute(skill, provider);
            double score = cosine_similarity(query, vec);
            if (score > best) {
                best = score;
                chosen = &skill;
            }
        }
        if (chosen && best >= config.theta) {
            out.result = MatchResult{chosen->name, MatchType::Embedding, best};
        }
    } catch (const Error& e) {
        out.degraded = true;
        out.degradations.push_back(std::string("embedding stage skipped: ") + e.what());
    }
    return out;
}

ChatRequest intent_request(std::string_view user_input, const SkillStore& store) {
    ChatRequest req;
    req.purpose = ChatPurpose::IntentClassification;
    req.messages.push_back({Role::System,
                            "You classify user requests. Pick the single skill below that best fits the request. "
                            "Answer with exactly one skill name from the list, or NONE if no skill fits. Reply "
                            "with the name only.",
                            {}, std::nullopt, 0, {}});
    std::string listing = "Skills:\n";
    for (const auto& [name, skill] : store.skills()) listing += "- " + name + ": " + skill.description + "\n";
    listing += "\nRequest:\n";
    listing += user_input;
    req.messages.push_back({Role::User, listing, {}, std::nullopt, 0, {}});
    return req;
}

MatchOutcome llm_match(std::string_view user_input, const SkillStore& store, ChatProvider& chat) {
    MatchOutcome out;
    if (store.empty()) return out;
    try {
        auto reply = chat.complete(intent_request(user_input, store));
        auto answer = trim(reply.content);
        if (answer != "NONE" && store.find(answer)) {
            out.result = MatchResult{answer, MatchType::Llm, kLlmMatchConfidence};
        }
    } catch (const Error& e) {
        out.degraded = true;
        out.degradations.push_back(std::string("llm stage skipped: ") + e.what());
    }
    return out;
}

MatchOutcome match_skill(std::string_view user_input, const SkillStore& store, const MatcherConfig& config,
                         EmbeddingCache& cache, EmbeddingProvider* embed, ChatProvider* chat) {
    MatchOutcome out;
    if (store.empty() || trim(user_input).empty()) return out;
    if (auto hit = keyword_match(user_input, store, config.word_boundary)) {
        out.result = hit;
        return out;
    }
    if (embed) {
        auto stage = embedding_match(user_input, store, config, cache, *embed);
        out.degraded |= stage.degraded;
        out.degradations.insert(out.degradations.end(), stage.degradations.begin(), stage.degradations.end());
        if (stage.result) {
            out.result = stage.result;
            return out;
        }
    }
    if (chat) {
        auto stage = llm_match(user_input, store, *chat);
        out.degraded |= stage.degraded;
        out.degradations.insert(out.degradations.end(), stage.degradations.begin(), stage.degradations.end());
        out.result = stage.result;
    }
    return out;
}

}  // namespace skillloop
