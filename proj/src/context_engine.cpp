#include "skillloop/context_engine.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"
#include "skillloop/workspace.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

namespace skillloop {

const char* asset_kind_name(Asset::Kind k) {
    switch (k) {
        case Asset::Kind::SkillReference: return "skill_reference";
        case Asset::Kind::ExternalUrl: return "external_url";
        case Asset::Kind::ImageReference: return "image_reference";
        case Asset::Kind::KeyData: return "key_data";
    }
    return "external_url";
}

Asset::Kind parse_asset_kind(const std::string& name) {
    if (name == "skill_reference") return Asset::Kind::SkillReference;
    if (name == "external_url") return Asset::Kind::ExternalUrl;
    if (name == "image_reference") return Asset::Kind::ImageReference;
    if (name == "key_data") return Asset::Kind::KeyData;
    throw Error(ErrorCode::InvalidArgument, "unknown asset kind '" + name + "'");
}

const std::array<std::string, 9>& summary_headings() {
    static const std::array<std::string, 9> kHeadings = {
        "Session Intent",   "Key Facts & Data",           "Decisions Made",
        "Actions Taken",    "Tool & Skill Usage",         "Open Tasks",
        "User Preferences Observed", "Errors & Corrections", "Asset References",
    };
    return kHeadings;
}

std::string format_skill_content(const Skill& skill) {
    std::string out = "# Skill: " + skill.name + "\n\n" + skill.description + "\n\n## Instructions\n\n" +
                      skill.instructions;
    if (!out.empty() && out.back() != '\n') out += '\n';
    if (!skill.refs.empty()) {
        out += "\n## References (load on demand)\n\n";
        for (const auto& [name, path] : skill.refs) out += "- " + name + " (" + path + ")\n";
    }
    return out;
}

History inject_skill(History history, const Skill& skill) {
    std::set<std::string> used_ids;
    std::size_t loads = 0;
    for (const auto& m : history) {
        for (const auto& c : m.tool_calls) {
            used_ids.insert(c.id);
            if (c.name == kSkillLoaderTool) ++loads;
        }
    }
    std::string id(kSkillLoadCallId);
    if (loads > 0 || used_ids.count(id)) {
        for (std::size_t n = std::max<std::size_t>(2, loads + 1);; ++n) {
            id = std::string(kSkillLoadCallId) + "_" + std::to_string(n);
            if (!used_ids.count(id)) break;
        }
    }

    std::uint64_t next = history.empty() ? 0 : history.back().turn_index + 1;
    Message call;
    call.role = Role::Assistant;
    call.turn_index = next;
    call.tool_calls.push_back({id, std::string(kSkillLoaderTool), nlohmann::json{{"skill", skill.name}}.dump()});
    Message result;
    result.role = Role::Tool;
    result.tool_call_id = id;
    result.content = format_skill_content(skill);
    result.turn_index = next + 1;
    history.push_back(std::move(call));
    history.push_back(std::move(result));
    return history;
}

std::string build_instructions(std::string_view soul, std::string_view user_profile, std::string_view memory,
                               const Skill* skill, bool initial_guidance) {
    std::string out;
    auto block = [&](std::string_view label, std::string_view body) {
        out += "=== ";
        out += label;
        out += " ===\n";
        out += body;
        if (!body.empty() && body.back() != '\n') out += '\n';
        out += '\n';
    };
    block("SOUL", soul);
    block("USER PROFILE", user_profile);
    block("MEMORY", memory);
    if (skill) {
        block("ACTIVE SKILL", "name: " + skill->name + "\ndescription: " + skill->description +
                                  "\nThe full skill instructions were loaded by the skill_loader tool result above.");
    }
    if (initial_guidance) {
        block("ONBOARDING",
              "This is an early conversation and the user profile is still empty. Besides answering, ask the "
              "user for their main products and their target markets.");
    }
    block("RESPONSE GUIDANCE",
          "After completing each task, append 1-2 short guiding suggestions that help the user share missing "
          "details about their business or take the next step.");
    return out;
}

std::string build_instructions(const Workspace& ws, const Skill* skill, bool initial_guidance) {
    return build_instructions(ws.soul(), ws.user_profile(), ws.memory(), skill, initial_guidance);
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t heuristic_message_tokens(const Message& m) {
    std::size_t chars = m.content.size();
    for (const auto& c : m.tool_calls) chars += c.name.size() + c.arguments.size();
    return (chars + 3) / 4 + 4;
}

std::size_t estimate_tokens(const History& history, const TokenEstimator& estimator) {
    std::size_t total = 0;
    for (const auto& m : history) total += estimator(m);
    return total;
}

bool should_compress(const History& history, const ContextBudget& budget, const TokenEstimator& estimator) {
    return estimate_tokens(history, estimator) > budget.max_tokens;
}

namespace {

constexpr std::string_view kAssetOpen = "<asset_index>\n";
constexpr std::string_view kAssetClose = "</asset_index>";
constexpr std::string_view kCompressedHeader = "[compressed context";

const std::regex& image_md_re() {
    static const std::regex re(R"(!\[[^\]]*\]\(([^)\s]+)[^)]*\))");
    return re;
}
const std::regex& url_re() {
    static const std::regex re(R"([A-Za-z][A-Za-z0-9+.-]*://[^\s<>()\[\]{}"'`]+)");
    return re;
}
const std::regex& image_path_re() {
    static const std::regex re(R"((^|[\s(])((?:\.{0,2}/)?[A-Za-z0-9_./-]*[A-Za-z0-9_-]\.(?:png|jpe?g|gif|webp|svg|bmp))(?=$|[\s),.;:!?]))",
                               std::regex::icase);
    return re;
}

bool has_image_extension(std::string_view v) {
    auto lower = to_lower(v);
    auto q = lower.find_first_of("?#");
    if (q != std::string::npos) lower.resize(q);
    for (const char* ext : {".png", ".jpg", ".jpeg", ".gif", ".webp", ".svg", ".bmp"}) {
        if (lower.ends_with(ext)) return true;
    }
    return false;
}

struct Found {
    std::size_t pos;
    Asset asset;
};

void scan_text(std::string_view text, std::uint64_t turn, std::vector<Found>& out) {
    std::string s(text);
    // Markdown images first; blank them out so their URLs are not re-counted.
    for (std::sregex_iterator it(s.begin(), s.end(), image_md_re()), end; it != end; ++it) {
        out.push_back({static_cast<std::size_t>(it->position(0)),
                       {Asset::Kind::ImageReference, (*it)[1].str(), turn}});
    }
    // Blank matched spans (rather than erase them) so positions stay aligned.
    std::string masked = s;
    for (std::sregex_iterator it(s.begin(), s.end(), image_md_re()), end; it != end; ++it) {
        std::fill(masked.begin() + it->position(0), masked.begin() + it->position(0) + it->length(0), ' ');
    }
    for (std::sregex_iterator it(masked.begin(), masked.end(), url_re()), end; it != end; ++it) {
        std::string url = it->str();
        while (!url.empty() && std::string_view(".,;:!?").find(url.back()) != std::string_view::npos) url.pop_back();
        if (url.find("://") + 3 >= url.size()) continue;
        auto kind = has_image_extension(url) ? Asset::Kind::ImageReference : Asset::Kind::ExternalUrl;
        out.push_back({static_cast<std::size_t>(it->position(0)), {kind, url, turn}});
        std::fill(masked.begin() + it->position(0), masked.begin() + it->position(0) + it->length(0), ' ');
    }
    for (std::sregex_iterator it(masked.begin(), masked.end(), image_path_re()), end; it != end; ++it) {
        out.push_back({static_cast<std::size_t>(it->position(2)), {Asset::Kind::ImageReference, (*it)[2].str(), turn}});
    }
}

// Splits a compressed-context message into (text outside the asset block, assets inside it).
bool split_asset_block(std::string_view content, std::string& outside, std::vector<Asset>& assets) {
    if (!content.starts_with(kCompressedHeader)) return false;
    auto open = content.rfind(kAssetOpen);
    if (open == std::string_view::npos) return false;
    auto close = content.find(kAssetClose, open);
    if (close == std::string_view::npos) return false;
    outside = std::string(content.substr(0, open)) + std::string(content.substr(close + kAssetClose.size()));
    auto body = content.substr(open + kAssetOpen.size(), close - open - kAssetOpen.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto nl = body.find('\n', pos);
        auto line = body.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? body.size() : nl + 1;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            assets.push_back({parse_asset_kind(j.at("kind").get<std::string>()), j.at("value").get<std::string>(),
                              j.value("source_turn", std::uint64_t{0})});
        } catch (const std::exception&) {
            // A corrupted index line is dropped; the rest of the block still counts.
        }
    }
    return true;
}

}  // namespace

std::vector<Asset> extract_assets(std::string_view text, std::uint64_t turn) {
    std::vector<Found> found;
    scan_text(text, turn, found);
    std::stable_sort(found.begin(), found.end(), [](const Found& a, const Found& b) { return a.pos < b.pos; });
    std::vector<Asset> out;
    for (auto& f : found) out.push_back(std::move(f.asset));
    return out;
}

std::vector<Asset> extract_asset_index(const History& history) {
    std::vector<Asset> out;
    std::set<std::pair<Asset::Kind, std::string>> seen;
    auto add = [&](Asset a) {
        if (a.value.empty()) return;
        if (seen.insert({a.kind, a.value}).second) out.push_back(std::move(a));
    };
    for (const auto& m : history) {
        for (const auto& c : m.tool_calls) {
            if (c.name != kSkillLoaderTool) continue;
            try {
                auto args = nlohmann::json::parse(c.arguments);
                if (args.contains("skill") && args["skill"].is_string()) {
                    add({Asset::Kind::SkillReference, args["skill"].get<std::string>(), m.turn_index});
                }
            } catch (const std::exception&) {
            }
        }
        std::string outside;
        std::vector<Asset> carried;
        if (m.role == Role::System && split_asset_block(m.content, outside, carried)) {
            for (auto& a : carried) add(std::move(a));
            for (auto& a : extract_assets(outside, m.turn_index)) add(std::move(a));
        } else {
            for (auto& a : extract_assets(m.content, m.turn_index)) add(std::move(a));
        }
        if (m.role == Role::Tool) {
            for (const auto& d : m.key_data) add({Asset::Kind::KeyData, d, m.turn_index});
        }
    }
    return out;
}

std::string normalize_summary(std::string_view raw) {
    const auto& headings = summary_headings();
    std::array<std::string, 9> bodies;
    std::size_t current = 0;
    auto match_heading = [&](std::string_view line) -> int {
        std::size_t i = 0;
        while (i < line.size() && line[i] == '#') ++i;
        if (i == 0) return -1;
        auto title = trim(line.substr(i));
        // Optional "N." or "N)" numbering.
        std::size_t j = 0;
        while (j < title.size() && std::isdigit(static_cast<unsigned char>(title[j]))) ++j;
        if (j > 0 && j < title.size() && (title[j] == '.' || title[j] == ')')) title = trim(std::string_view(title).substr(j + 1));
        auto lower = to_lower(title);
        for (std::size_t k = 0; k < headings.size(); ++k) {
            if (lower == to_lower(headings[k])) return static_cast<int>(k);
        }
        return -1;
    };
    std::size_t pos = 0;
    while (pos < raw.size()) {
        auto nl = raw.find('\n', pos);
        auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? raw.size() : nl + 1;
        if (int k = match_heading(line); k >= 0) {
            current = static_cast<std::size_t>(k);
            continue;
        }
        std::string l(line);
        if (!l.empty() && l.back() == '\r') l.pop_back();
        if (l.starts_with("#")) {
            std::size_t level = 0;
            while (level < l.size() && l[level] == '#') ++level;
            if (level < 3) l.insert(0, 3 - level, '#');
        }
        bodies[current] += l;
        bodies[current] += '\n';
    }
    std::string out;
    for (std::size_t k = 0; k < headings.size(); ++k) {
        auto body = trim(bodies[k]);
        out += "## " + std::to_string(k + 1) + ". " + headings[k] + "\n";
        out += body.empty() ? "(none)" : body;
        out += k + 1 < headings.size() ? "\n\n" : "\n";
    }
    return out;
}

std::string render_compressed_context(const std::string& summary, std::uint64_t level,
                                      const std::vector<Asset>& assets) {
    std::string out = std::string(kCompressedHeader) + " level " + std::to_string(level) + "]\n\n" + summary;
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "\n";
    out += kAssetOpen;
    for (const auto& a : assets) {
        nlohmann::json j{{"kind", asset_kind_name(a.kind)}, {"value", a.value}, {"source_turn", a.source_turn}};
        out += j.dump();
        out += '\n';
    }
    out += kAssetClose;
    out += '\n';
    return out;
}

std::size_t compression_split(const History& history, const ContextBudget& budget) {
    std::size_t keep = std::max<std::size_t>(1, budget.retain_recent);
    if (history.size() <= keep) return 0;
    std::size_t split = history.size() - keep;
    // Never orphan a tool result from the call that produced it.
    while (split > 0 && history[split].role == Role::Tool) --split;
    return split;
}

namespace {

std::string render_transcript(const History& prefix) {
    std::string out;
    for (const auto& m : prefix) {
        out += "[" + std::to_string(m.turn_index) + "] " + role_name(m.role) + ": " + m.content;
        for (const auto& c : m.tool_calls) out += "\n  -> call " + c.name + " " + c.arguments;
        out += "\n";
    }
    return out;
}

}  // namespace

CompressionResult compress_history(const History& history, const CompressionState& state,
                                   const ContextBudget& budget, ChatProvider& provider,
                                   const TokenEstimator& estimator) {
    auto split = compression_split(history, budget);
    if (split == 0) throw Error(ErrorCode::CompressionFailed, "nothing older than the retained tail to compress");

    History prefix(history.begin(), history.begin() + static_cast<std::ptrdiff_t>(split));
    auto assets = extract_asset_index(prefix);

    std::string headings;
    for (std::size_t k = 0; k < summary_headings().size(); ++k) {
        headings += "## " + std::to_string(k + 1) + ". " + summary_headings()[k] + "\n";
    }
    ChatRequest req;
    req.purpose = ChatPurpose::Summary;
    req.messages.push_back({Role::System,
                            "Summarise the conversation below for an assistant that will continue it. Use exactly "
                            "these nine Markdown sections, in this order, and keep every product name, figure, "
                            "decision, link and file reference:\n" + headings,
                            {}, std::nullopt, 0, {}});
    req.messages.push_back({Role::User, render_transcript(prefix), {}, std::nullopt, 0, {}});

    Message reply;
    try {
        reply = provider.complete(req);
    } catch (const Error& e) {
        throw Error(ErrorCode::CompressionFailed, std::string("summary provider failed: ") + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::CompressionFailed, std::string("summary provider failed: ") + e.what());
    }

    CompressionResult result;
    result.state = state;
    result.state.level = state.level + 1;
    result.state.summary = normalize_summary(reply.content);
    result.state.asset_index = assets;
    result.state.retained_from = history[split].turn_index;

    Message summary_msg;
    summary_msg.role = Role::System;
    summary_msg.turn_index = prefix.front().turn_index;
    summary_msg.content = render_compressed_context(*result.state.summary, result.state.level, assets);
    result.history.reserve(history.size() - split + 1);
    result.history.push_back(std::move(summary_msg));
    result.history.insert(result.history.end(), history.begin() + static_cast<std::ptrdiff_t>(split), history.end());

    if (estimate_tokens(result.history, estimator) >= estimate_tokens(history, estimator)) {
        throw Error(ErrorCode::CompressionFailed, "summary would not shrink the context");
    }
    return result;
}

}  // namespace skillloop
