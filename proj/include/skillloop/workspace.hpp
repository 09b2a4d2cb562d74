#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skillloop {

/// Level-2 ("## ") sectioned view of a Markdown document. Rendering the
/// parsed form reproduces the input byte for byte.
struct MarkdownDoc {
    struct Section {
        std::string title;  // heading text without the "## " prefix
        std::string raw;    // heading line through the end of the body
    };
    std::string preamble;
    std::vector<Section> sections;

    const Section* find(std::string_view title) const;
    std::string render() const;
};

MarkdownDoc parse_markdown_sections(std::string_view text);

enum class Provenance { RealTime, InitialGuidance, PostSession, BehaviorSuggestion };

const char* provenance_name(Provenance p);
Provenance parse_provenance(const std::string& name);

struct SectionEdit {
    std::string heading;
    std::string fragment;

    bool operator==(const SectionEdit&) const = default;
};

/// Section-level edit of USER.md or MEMORY.md.
struct ProfileDelta {
    std::vector<SectionEdit> additions;
    std::vector<SectionEdit> replacements;
    Provenance provenance = Provenance::RealTime;
    bool confirmed = false;

    bool empty() const { return additions.empty() && replacements.empty(); }
    /// Characters of fragment text carried by the delta.
    std::size_t size_chars() const;

    bool operator==(const ProfileDelta&) const = default;
};

/// Pure merge: additions append under their heading (created at the end if
/// absent), replacements overwrite the section body. Sections the delta does
/// not name are left byte-identical.
std::string merge_delta(std::string_view document, const ProfileDelta& delta);

/// Normalises "## Title" / "Title" to "Title".
std::string normalize_heading(std::string_view heading);

inline constexpr std::string_view kTemplateMarker = "<!-- skillloop:template -->";

bool is_valid_user_id(std::string_view user_id);

struct WorkspaceOptions {
    /// Skills copied into configs/skills/ when a workspace is created.
    std::optional<std::filesystem::path> default_skills_dir;
    /// Overrides the built-in SOUL.md template.
    std::optional<std::string> soul_template;
};

/// Per-user workspace holding the three memory layers, the skill store and
/// session logs:
///
///   {data_root}/{user_id}/SOUL.md, USER.md, MEMORY.md
///   {data_root}/{user_id}/configs/skills/{name}/SKILL.md
///   {data_root}/{user_id}/sessions/{session_id}.jsonl
class Workspace {
public:
    /// Creates the workspace if needed. Existing files are never touched.
    static Workspace init(const std::filesystem::path& data_root, const std::string& user_id,
                          const WorkspaceOptions& options = {});

    const std::string& user_id() const { return user_id_; }
    const std::filesystem::path& root() const { return root_; }

    const std::string& soul() const { return soul_; }
    const std::string& user_profile() const { return user_profile_; }
    const std::string& memory() const { return memory_; }

    void reload();

    /// Throws ConfirmationRequired for an unconfirmed behaviour suggestion.
    void apply_profile_delta(const ProfileDelta& delta);
    void apply_memory_delta(const ProfileDelta& delta);

    /// True while USER.md still carries the template marker.
    bool needs_initial_guidance() const;

    std::filesystem::path sessions_dir() const { return root_ / "sessions"; }
    std::filesystem::path session_log_path(const std::string& session_id) const;
    std::filesystem::path evolution_path(const std::string& session_id) const;

private:
    std::string user_id_;
    std::filesystem::path root_;
    std::string soul_;
    std::string user_profile_;
    std::string memory_;
};

}  // namespace skillloop
