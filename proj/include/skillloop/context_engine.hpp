#pragma once

#include "skillloop/message.hpp"
#include "skillloop/provider.hpp"
#include "skillloop/skill_store.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skillloop {

class Workspace;

struct Asset {
    enum class Kind { SkillReference, ExternalUrl, ImageReference, KeyData };
    Kind kind = Kind::ExternalUrl;
    std::string value;
    std::uint64_t source_turn = 0;

    bool operator==(const Asset&) const = default;
};

const char* asset_kind_name(Asset::Kind k);
Asset::Kind parse_asset_kind(const std::string& name);

struct CompressionState {
    std::uint64_t level = 0;
    std::optional<std::string> summary;
    std::vector<Asset> asset_index;
    std::uint64_t retained_from = 0;

    bool operator==(const CompressionState&) const = default;
};

struct ContextBudget {
    std::size_t max_tokens = 64000;
    std::size_t retain_recent = 10;
};

/// Fixed headings of the structured summary, in order.
const std::array<std::string, 9>& summary_headings();

inline constexpr std::string_view kSkillLoaderTool = "skill_loader";
inline constexpr std::string_view kSkillLoadCallId = "skill_load";

std::string format_skill_content(const Skill& skill);

/// Appends the synthetic skill_loader call and its tool result.
History inject_skill(History history, const Skill& skill);

/// SOUL, USER and MEMORY layers, the active skill (if any) and the standing
/// response-guidance directive, in that order. `initial_guidance` adds the
/// onboarding directive used until the profile holds user content.
std::string build_instructions(const Workspace& ws, const Skill* skill, bool initial_guidance = false);
std::string build_instructions(std::string_view soul, std::string_view user_profile,
                               std::string_view memory, const Skill* skill, bool initial_guidance);

using TokenEstimator = std::function<std::size_t(const Message&)>;

/// ceil(chars / 4).
std::size_t estimate_tokens(std::string_view text);
/// ceil(chars / 4) + 4, chars counting content and tool-call payloads.
std::size_t heuristic_message_tokens(const Message& m);
std::size_t estimate_tokens(const History& history, const TokenEstimator& estimator = heuristic_message_tokens);

bool should_compress(const History& history, const ContextBudget& budget,
                     const TokenEstimator& estimator = heuristic_message_tokens);

/// Skill loads, URLs, images and tool-tagged key data, deduplicated by
/// (kind, value) and ordered by first occurrence. A compressed-context
/// system message contributes the asset index it carries.
///
/// Grammars (ECMAScript regex):
///   markdown image  !\[[^\]]*\]\(([^)\s]+)[^)]*\)
///   URL             [A-Za-z][A-Za-z0-9+.-]*://[^\s<>()\[\]{}"'`]+   (trailing .,;:!? stripped)
///   image path      URL or bare path ending in .png .jpg .jpeg .gif .webp .svg .bmp
std::vector<Asset> extract_asset_index(const History& history);
std::vector<Asset> extract_assets(std::string_view text, std::uint64_t turn);

/// Nine-section summary with every contract heading present exactly once.
/// Text under unknown headings or before the first heading lands in
/// "Session Intent"; deeper headings inside bodies are demoted.
std::string normalize_summary(std::string_view raw);

std::string render_compressed_context(const std::string& summary, std::uint64_t level,
                                      const std::vector<Asset>& assets);

struct CompressionResult {
    History history;
    CompressionState state;
};

/// Index where the retained tail starts, or 0 when nothing can be compressed.
std::size_t compression_split(const History& history, const ContextBudget& budget);

/// All-or-nothing: throws CompressionFailed and leaves inputs untouched on
/// provider failure or when the result would not shrink the context.
CompressionResult compress_history(const History& history, const CompressionState& state,
                                   const ContextBudget& budget, ChatProvider& provider,
                                   const TokenEstimator& estimator = heuristic_message_tokens);

}  // namespace skillloop
