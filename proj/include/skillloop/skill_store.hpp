#pragma once

#include "skillloop/util.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillloop {

struct SkillMeta {
    std::uint64_t usage_count = 0;
    std::uint64_t success_count = 0;
    Timestamp created_at{};
    Timestamp updated_at{};

    /// success_count / usage_count, or 1.0 for an unused skill.
    double success_rate() const {
        return usage_count == 0 ? 1.0
                                : static_cast<double>(success_count) / static_cast<double>(usage_count);
    }

    bool operator==(const SkillMeta&) const = default;
};

struct SubAgentSpec {
    std::string name;
    std::string instructions;
    std::vector<std::string> tool_names;

    bool operator==(const SubAgentSpec&) const = default;
};

/// A packaged capability: `configs/skills/{name}/SKILL.md` plus optional
/// `references/*` files that are only listed here, never read eagerly.
struct Skill {
    std::string name;
    std::string description;
    std::vector<std::string> triggers;
    std::string instructions;
    std::map<std::string, std::string> refs;  // file name -> "references/<file>"
    bool requires_sub_agent = false;
    SubAgentSpec sub_agent;
    SkillMeta meta;

    bool operator==(const Skill&) const = default;
};

enum class MaturityLevel { Budding = 0, Growing = 1, Mature = 2, Proficient = 3 };

const char* maturity_name(MaturityLevel level);

MaturityLevel classify_maturity(std::uint64_t usage_count, double success_rate);
inline MaturityLevel classify_maturity(const SkillMeta& meta) {
    return classify_maturity(meta.usage_count, meta.success_rate());
}

/// One entry of the usage ledger. `Use` is a fresh invocation; `Revise`
/// flips the verdict of an earlier invocation (explicit user feedback).
struct UsageEvent {
    enum class Kind { Use, Revise };
    Kind kind = Kind::Use;
    bool success = true;
    Timestamp at{};
};

SkillMeta apply_usage_event(SkillMeta meta, const UsageEvent& event);

/// Returns a description of the first violated invariant, if any.
std::optional<std::string> validate_skill(const Skill& skill);

/// SKILL.md text for `skill` (front matter + instructions body).
std::string render_skill_md(const Skill& skill);

Skill parse_skill(const std::filesystem::path& skill_dir, const Clock& clock = system_now);
void save_skill(const std::filesystem::path& skill_dir, const Skill& skill,
                const io::WriteHooks* hooks = nullptr);

/// Reads one reference file on demand.
std::string load_reference(const std::filesystem::path& skill_dir, const Skill& skill,
                           const std::string& ref_name);

class SkillStore {
public:
    /// Loads `<workspace_root>/configs/skills`. Unparseable skill directories
    /// are skipped and reported through warnings().
    static SkillStore load(const std::filesystem::path& workspace_root, Clock clock = system_now);

    const std::filesystem::path& skills_dir() const { return skills_dir_; }
    std::filesystem::path skill_dir(const std::string& name) const { return skills_dir_ / name; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Ascending name order.
    const std::map<std::string, Skill>& skills() const { return skills_; }
    std::size_t size() const { return skills_.size(); }
    bool empty() const { return skills_.empty(); }

    const Skill* find(const std::string& name) const;
    const Skill& get(const std::string& name) const;

    void save(const Skill& skill, const io::WriteHooks* hooks = nullptr);
    void remove(const std::string& name);

    SkillMeta record_usage(const std::string& name, bool success);
    SkillMeta revise_usage(const std::string& name, bool success);

    Timestamp now() const { return clock_(); }

private:
    SkillMeta apply_event(const std::string& name, UsageEvent::Kind kind, bool success);

    std::filesystem::path skills_dir_;
    std::map<std::string, Skill> skills_;
    std::vector<std::string> warnings_;
    Clock clock_;
};

}  // namespace skillloop
