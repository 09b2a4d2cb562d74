#include "skillloop/workspace.hpp"

#include "skillloop/error.hpp"
#include "skillloop/util.hpp"

namespace fs = std::filesystem;

namespace skillloop {

namespace {

constexpr std::string_view kDefaultSoul =
    "# Soul\n"
    "\n"
    "You are a dependable business assistant. Work from the user's stated facts,\n"
    "keep answers concrete, and say plainly when information is missing.\n"
    "\n"
    "## Persona\n"
    "An experienced foreign-trade specialist: quotations, HS codes, logistics,\n"
    "market research and customer correspondence.\n"
    "\n"
    "## Boundaries\n"
    "Only record profile facts the user states explicitly. Never guess business data.\n";

std::string user_template() {
    return "# User Profile\n" + std::string(kTemplateMarker) +
           "\n\nFacts the user has explicitly shared about themselves and their business.\n";
}

constexpr std::string_view kMemoryTemplate =
    "# Memory\n"
    "\n"
    "Long-term notes carried across sessions.\n";

bool is_heading_line(std::string_view line) {
    return line.size() >= 3 && line.substr(0, 3) == "## ";
}

std::size_t trailing_newlines(std::string_view s) {
    std::size_t n = 0;
    while (n < s.size() && s[s.size() - 1 - n] == '\n') ++n;
    return n;
}

// Demotes "#"/"##" lines so a fragment can never open a new section.
std::string sanitize_fragment(std::string_view fragment) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= fragment.size()) {
        auto nl = fragment.find('\n', pos);
        auto line = fragment.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (line.starts_with("## ") || line.starts_with("# ") || line == "#" || line == "##") {
            out += "#";
            if (line.starts_with("# ") || line == "#") out += "#";
        }
        out += line;
        if (nl == std::string_view::npos) break;
        out += '\n';
        pos = nl + 1;
    }
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

void write_doc(const fs::path& path, const std::string& content) { io::write_atomic(path, content); }

void write_if_absent(const fs::path& path, std::string_view content) {
    if (!fs::exists(path)) io::write_atomic(path, content);
}

}  // namespace

const MarkdownDoc::Section* MarkdownDoc::find(std::string_view title) const {
    for (const auto& s : sections) {
        if (s.title == title) return &s;
    }
    return nullptr;
}

std::string MarkdownDoc::render() const {
    std::string out = preamble;
    for (const auto& s : sections) out += s.raw;
    return out;
}

MarkdownDoc parse_markdown_sections(std::string_view text) {
    MarkdownDoc doc;
    std::string* current = &doc.preamble;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::size_t end = nl == std::string_view::npos ? text.size() : nl + 1;
        auto line = text.substr(pos, end - pos);
        if (is_heading_line(line)) {
            auto title_view = line.substr(3);
            doc.sections.push_back({trim(title_view), std::string()});
            current = &doc.sections.back().raw;
        }
        current->append(line);
        pos = end;
    }
    return doc;
}

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::RealTime: return "real_time";
        case Provenance::InitialGuidance: return "initial_guidance";
        case Provenance::PostSession: return "post_session";
        case Provenance::BehaviorSuggestion: return "behavior_suggestion";
    }
    return "real_time";
}

Provenance parse_provenance(const std::string& name) {
    if (name == "real_time") return Provenance::RealTime;
    if (name == "initial_guidance") return Provenance::InitialGuidance;
    if (name == "post_session") return Provenance::PostSession;
    if (name == "behavior_suggestion") return Provenance::BehaviorSuggestion;
    throw Error(ErrorCode::InvalidArgument, "unknown provenance '" + name + "'");
}

std::size_t ProfileDelta::size_chars() const {
    std::size_t n = 0;
    for (const auto& e : additions) n += e.fragment.size();
    for (const auto& e : replacements) n += e.fragment.size();
    return n;
}

std::string normalize_heading(std::string_view heading) {
    std::size_t i = 0;
    while (i < heading.size() && heading[i] == '#') ++i;
    auto t = trim(heading.substr(i));
    for (auto& c : t) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return t;
}

std::string merge_delta(std::string_view document, const ProfileDelta& delta) {
    if (delta.empty()) return std::string(document);
    auto doc = parse_markdown_sections(document);

    auto find_section = [&](const std::string& title) -> MarkdownDoc::Section* {
        for (auto& s : doc.sections) {
            if (s.title == title) return &s;
        }
        return nullptr;
    };
    auto append_section = [&](const std::string& title, const std::string& body) {
        std::string* last = doc.sections.empty() ? &doc.preamble : &doc.sections.back().raw;
        if (!last->empty()) {
            auto tn = trailing_newlines(*last);
            if (tn == 0) *last += "\n\n";
            else if (tn == 1) *last += "\n";
        }
        doc.sections.push_back({title, "## " + title + "\n" + body + "\n"});
    };

    for (const auto& edit : delta.replacements) {
        auto title = normalize_heading(edit.heading);
        auto body = sanitize_fragment(edit.fragment);
        if (title.empty()) continue;
        if (auto* s = find_section(title)) {
            auto tn = trailing_newlines(s->raw);
            auto head_end = s->raw.find('\n');
            std::string heading_line = head_end == std::string::npos ? s->raw + "\n" : s->raw.substr(0, head_end + 1);
            s->raw = heading_line + body + "\n" + std::string(tn > 1 ? tn - 1 : 0, '\n');
        } else {
            append_section(title, body);
        }
    }
    for (const auto& edit : delta.additions) {
        auto title = normalize_heading(edit.heading);
        auto body = sanitize_fragment(edit.fragment);
        if (title.empty()) continue;
        if (auto* s = find_section(title)) {
            auto tn = trailing_newlines(s->raw);
            std::string stripped = s->raw.substr(0, s->raw.size() - tn);
            s->raw = stripped + "\n" + body + "\n" + std::string(tn > 1 ? tn - 1 : 0, '\n');
        } else {
            append_section(title, body);
        }
    }
    return doc.render();
}

bool is_valid_user_id(std::string_view user_id) {
    if (user_id.empty() || user_id.size() > 64) return false;
    for (char c : user_id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

Workspace Workspace::init(const fs::path& data_root, const std::string& user_id, const WorkspaceOptions& options) {
    if (!is_valid_user_id(user_id)) {
        throw Error(ErrorCode::InvalidUserId, "invalid user id '" + user_id + "'");
    }
    Workspace ws;
    ws.user_id_ = user_id;
    ws.root_ = data_root / user_id;
    std::error_code ec;
    bool fresh = !fs::exists(ws.root_ / "configs" / "skills", ec);
    fs::create_directories(ws.root_ / "configs" / "skills", ec);
    if (!ec) fs::create_directories(ws.sessions_dir(), ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot create workspace " + ws.root_.string() + ": " + ec.message());

    write_if_absent(ws.root_ / "SOUL.md", options.soul_template ? *options.soul_template : std::string(kDefaultSoul));
    write_if_absent(ws.root_ / "USER.md", user_template());
    write_if_absent(ws.root_ / "MEMORY.md", kMemoryTemplate);

    if (fresh && options.default_skills_dir && fs::is_directory(*options.default_skills_dir)) {
        fs::copy(*options.default_skills_dir, ws.root_ / "configs" / "skills",
                 fs::copy_options::recursive | fs::copy_options::skip_existing, ec);
        if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot copy default skills: " + ec.message());
    }
    ws.reload();
    return ws;
}

void Workspace::reload() {
    soul_ = io::read_text(root_ / "SOUL.md");
    user_profile_ = io::read_text(root_ / "USER.md");
    memory_ = io::read_text(root_ / "MEMORY.md");
}

void Workspace::apply_profile_delta(const ProfileDelta& delta) {
    if (delta.provenance == Provenance::BehaviorSuggestion && !delta.confirmed) {
        throw Error(ErrorCode::ConfirmationRequired, "behaviour suggestion must be confirmed before it is applied");
    }
    if (delta.empty()) return;
    auto merged = merge_delta(user_profile_, delta);
    if (auto at = merged.find(kTemplateMarker); at != std::string::npos) {
        auto end = at + kTemplateMarker.size();
        if (end < merged.size() && merged[end] == '\n') ++end;
        merged.erase(at, end - at);
    }
    write_doc(root_ / "USER.md", merged);
    user_profile_ = std::move(merged);
}

void Workspace::apply_memory_delta(const ProfileDelta& delta) {
    if (delta.provenance == Provenance::BehaviorSuggestion && !delta.confirmed) {
        throw Error(ErrorCode::ConfirmationRequired, "behaviour suggestion must be confirmed before it is applied");
    }
    if (delta.empty()) return;
    auto merged = merge_delta(memory_, delta);
    write_doc(root_ / "MEMORY.md", merged);
    memory_ = std::move(merged);
}

bool Workspace::needs_initial_guidance() const {
    return user_profile_.find(kTemplateMarker) != std::string::npos;
}

fs::path Workspace::session_log_path(const std::string& session_id) const {
    return sessions_dir() / (session_id + ".jsonl");
}

fs::path Workspace::evolution_path(const std::string& session_id) const {
    return sessions_dir() / (session_id + ".evolution.json");
}

}  // namespace skillloop
