#include "skillloop/skill_store.hpp"

#include "skillloop/error.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <set>

namespace fs = std::filesystem;

namespace skillloop {

const char* maturity_name(MaturityLevel level) {
    switch (level) {
        case MaturityLevel::Budding: return "Budding";
        case MaturityLevel::Growing: return "Growing";
        case MaturityLevel::Mature: return "Mature";
        case MaturityLevel::Proficient: return "Proficient";
    }
    return "Budding";
}

MaturityLevel classify_maturity(std::uint64_t usage_count, double success_rate) {
    if (usage_count >= 10 && success_rate >= 0.85) return MaturityLevel::Proficient;
    if (usage_count >= 4 && success_rate >= 0.7) return MaturityLevel::Mature;
    if (usage_count >= 1) return MaturityLevel::Growing;
    return MaturityLevel::Budding;
}

SkillMeta apply_usage_event(SkillMeta meta, const UsageEvent& event) {
    if (event.kind == UsageEvent::Kind::Use) {
        ++meta.usage_count;
        if (event.success) ++meta.success_count;
    } else if (event.success) {
        if (meta.success_count < meta.usage_count) ++meta.success_count;
    } else if (meta.success_count > 0) {
        --meta.success_count;
    }
    meta.updated_at = std::max(event.at, meta.created_at);
    return meta;
}

namespace {

bool ref_path_contained(const std::string& rel) {
    fs::path p(rel);
    if (p.empty() || p.is_absolute() || p.has_root_name()) return false;
    auto it = p.begin();
    if (it == p.end() || *it != "references") return false;
    int depth = 0;
    for (const auto& part : p) {
        if (part == "..") {
            if (--depth < 0) return false;
        } else if (part != ".") {
            ++depth;
        }
    }
    return depth >= 2;
}

}  // namespace

std::optional<std::string> validate_skill(const Skill& skill) {
    if (!is_slug(skill.name)) return "name '" + skill.name + "' is not a slug";
    if (trim(skill.description).empty()) return "description is empty";
    std::set<std::string> seen;
    for (const auto& t : skill.triggers) {
        if (trim(t).empty()) return "empty trigger";
        if (!seen.insert(to_lower(t)).second) return "duplicate trigger '" + t + "'";
    }
    for (const auto& [ref, rel] : skill.refs) {
        if (ref.empty() || !ref_path_contained(rel)) return "reference '" + ref + "' escapes the skill directory";
    }
    if (skill.meta.success_count > skill.meta.usage_count) return "success_count exceeds usage_count";
    if (skill.meta.updated_at < skill.meta.created_at) return "updated_at precedes created_at";
    if (skill.requires_sub_agent && trim(skill.sub_agent.name).empty()) return "sub-agent skill without sub_agent.name";
    return std::nullopt;
}

std::string render_skill_md(const Skill& skill) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << skill.name;
    out << YAML::Key << "description" << YAML::Value << YAML::DoubleQuoted << skill.description;
    out << YAML::Key << "triggers" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : skill.triggers) out << YAML::DoubleQuoted << t;
    out << YAML::EndSeq;
    if (skill.requires_sub_agent) {
        out << YAML::Key << "requires_sub_agent" << YAML::Value << true;
        out << YAML::Key << "sub_agent" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << skill.sub_agent.name;
        out << YAML::Key << "instructions" << YAML::Value << YAML::DoubleQuoted
            << skill.sub_agent.instructions;
        out << YAML::Key << "tools" << YAML::Value << YAML::Flow << YAML::BeginSeq;
        for (const auto& t : skill.sub_agent.tool_names) out << YAML::DoubleQuoted << t;
        out << YAML::EndSeq << YAML::EndMap;
    }
    out << YAML::Key << "metadata" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "usage_count" << YAML::Value << skill.meta.usage_count;
    out << YAML::Key << "success_count" << YAML::Value << skill.meta.success_count;
    out << YAML::Key << "created_at" << YAML::Value << format_iso8601(skill.meta.created_at);
    out << YAML::Key << "updated_at" << YAML::Value << format_iso8601(skill.meta.updated_at);
    out << YAML::EndMap;
    out << YAML::EndMap;

    std::string text = "---\n";
    text += out.c_str();
    text += "\n---\n";
    text += skill.instructions;
    return text;
}

namespace {

[[noreturn]] void malformed(const fs::path& dir, const std::string& why) {
    throw Error(ErrorCode::MalformedSkill, dir.filename().string() + ": " + why);
}

std::uint64_t read_count_field(const YAML::Node& node, const char* key, const fs::path& dir) {
    if (!node[key]) return 0;
    long long v = 0;
    try {
        v = node[key].as<long long>();
    } catch (const YAML::Exception&) {
        malformed(dir, std::string(key) + " is not an integer");
    }
    if (v < 0) malformed(dir, std::string(key) + " is negative");
    return static_cast<std::uint64_t>(v);
}

std::string as_string(const YAML::Node& node, const char* key, const fs::path& dir) {
    try {
        return node[key].as<std::string>();
    } catch (const YAML::Exception&) {
        malformed(dir, std::string(key) + " is not a string");
    }
}

std::string scalar(const YAML::Node& node, const char* what, const fs::path& dir) {
    if (!node.IsScalar()) malformed(dir, std::string(what) + " entries must be strings");
    return node.as<std::string>();
}

// Splits "---\n<yaml>\n---\n<body>". Returns {yaml, body}.
std::pair<std::string, std::string> split_front_matter(const std::string& text, const fs::path& dir) {
    auto line_end = [&](std::size_t pos) {
        auto nl = text.find('\n', pos);
        return nl == std::string::npos ? text.size() : nl;
    };
    auto strip_cr = [](std::string_view s) {
        if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
        return s;
    };
    std::size_t first_end = line_end(0);
    if (strip_cr(std::string_view(text).substr(0, first_end)) != "---") {
        malformed(dir, "SKILL.md does not open with a front-matter fence");
    }
    std::size_t pos = first_end + 1;
    while (pos <= text.size()) {
        std::size_t end = line_end(pos);
        if (strip_cr(std::string_view(text).substr(pos, end - pos)) == "---") {
            std::string yaml = text.substr(first_end + 1, pos - first_end - 1);
            std::string body = end < text.size() ? text.substr(end + 1) : std::string();
            return {yaml, body};
        }
        if (end >= text.size()) break;
        pos = end + 1;
    }
    malformed(dir, "unclosed front matter");
}

}  // namespace

Skill parse_skill(const fs::path& skill_dir, const Clock& clock) {
    auto md = skill_dir / "SKILL.md";
    if (!fs::is_regular_file(md)) {
        throw Error(ErrorCode::SkillNotFound, "no SKILL.md in " + skill_dir.string());
    }
    auto [yaml, body] = split_front_matter(io::read_text(md), skill_dir);

    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        malformed(skill_dir, std::string("front matter: ") + e.what());
    }
    if (!root.IsMap()) malformed(skill_dir, "front matter is not a map");
    if (!root["name"] || !root["description"]) malformed(skill_dir, "missing name or description");

    Skill skill;
    skill.name = as_string(root, "name", skill_dir);
    skill.description = as_string(root, "description", skill_dir);
    if (auto t = root["triggers"]) {
        if (!t.IsSequence()) malformed(skill_dir, "triggers is not a list");
        for (const auto& item : t) skill.triggers.push_back(scalar(item, "triggers", skill_dir));
    }
    skill.instructions = body;
    if (auto r = root["requires_sub_agent"]) {
        try {
            skill.requires_sub_agent = r.as<bool>();
        } catch (const YAML::Exception&) {
            malformed(skill_dir, "requires_sub_agent is not a boolean");
        }
    }
    if (auto sa = root["sub_agent"]; sa && sa.IsMap()) {
        if (sa["name"]) skill.sub_agent.name = scalar(sa["name"], "sub_agent.name", skill_dir);
        if (sa["instructions"]) skill.sub_agent.instructions = scalar(sa["instructions"], "sub_agent.instructions", skill_dir);
        if (auto tools = sa["tools"]; tools && tools.IsSequence()) {
            for (const auto& item : tools) skill.sub_agent.tool_names.push_back(scalar(item, "sub_agent.tools", skill_dir));
        }
    }

    auto meta = root["metadata"];
    auto now = clock();
    skill.meta.created_at = now;
    skill.meta.updated_at = now;
    if (meta && meta.IsMap()) {
        skill.meta.usage_count = read_count_field(meta, "usage_count", skill_dir);
        skill.meta.success_count = read_count_field(meta, "success_count", skill_dir);
        for (auto [key, slot] : {std::pair{"created_at", &skill.meta.created_at},
                                 std::pair{"updated_at", &skill.meta.updated_at}}) {
            if (!meta[key]) continue;
            auto ts = parse_iso8601(as_string(meta, key, skill_dir));
            if (!ts) malformed(skill_dir, std::string("invalid timestamp in ") + key);
            *slot = *ts;
        }
        if (meta["created_at"] && !meta["updated_at"]) skill.meta.updated_at = skill.meta.created_at;
    }

    std::error_code ec;
    auto refs_dir = skill_dir / "references";
    if (fs::is_directory(refs_dir, ec)) {
        for (const auto& entry : fs::directory_iterator(refs_dir)) {
            if (!entry.is_regular_file()) continue;
            auto file = entry.path().filename().string();
            skill.refs[file] = "references/" + file;
        }
    }

    if (skill.name != skill_dir.filename().string()) {
        malformed(skill_dir, "name '" + skill.name + "' does not match its directory");
    }
    if (auto why = validate_skill(skill)) malformed(skill_dir, *why);
    return skill;
}

void save_skill(const fs::path& skill_dir, const Skill& skill, const io::WriteHooks* hooks) {
    if (auto why = validate_skill(skill)) throw Error(ErrorCode::MalformedSkill, *why);
    if (skill.name != skill_dir.filename().string()) {
        throw Error(ErrorCode::MalformedSkill,
                    "skill '" + skill.name + "' cannot be saved into directory " + skill_dir.string());
    }
    std::error_code ec;
    fs::create_directories(skill_dir, ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot create " + skill_dir.string());
    io::write_atomic(skill_dir / "SKILL.md", render_skill_md(skill), hooks);
}

std::string load_reference(const fs::path& skill_dir, const Skill& skill, const std::string& ref_name) {
    auto it = skill.refs.find(ref_name);
    if (it == skill.refs.end()) {
        throw Error(ErrorCode::SkillNotFound, "skill '" + skill.name + "' has no reference " + ref_name);
    }
    return io::read_text(skill_dir / it->second);
}

SkillStore SkillStore::load(const fs::path& workspace_root, Clock clock) {
    SkillStore store;
    store.clock_ = std::move(clock);
    store.skills_dir_ = workspace_root / "configs" / "skills";
    std::error_code ec;
    if (!fs::is_directory(workspace_root, ec)) {
        throw Error(ErrorCode::StoreUnavailable, "workspace root missing: " + workspace_root.string());
    }
    fs::create_directories(store.skills_dir_, ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot open " + store.skills_dir_.string());

    std::vector<fs::path> dirs;
    for (fs::directory_iterator it(store.skills_dir_, ec), end; !ec && it != end; it.increment(ec)) {
        if (it->is_directory()) dirs.push_back(it->path());
    }
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot list " + store.skills_dir_.string());
    std::sort(dirs.begin(), dirs.end());

    for (const auto& dir : dirs) {
        try {
            auto skill = parse_skill(dir, store.clock_);
            store.skills_.emplace(skill.name, std::move(skill));
        } catch (const Error& e) {
            store.warnings_.push_back(std::string(error_code_name(e.code())) + ": " + e.what());
        }
    }
    return store;
}

const Skill* SkillStore::find(const std::string& name) const {
    auto it = skills_.find(name);
    return it == skills_.end() ? nullptr : &it->second;
}

const Skill& SkillStore::get(const std::string& name) const {
    if (auto* s = find(name)) return *s;
    throw Error(ErrorCode::SkillNotFound, "unknown skill '" + name + "'");
}

void SkillStore::save(const Skill& skill, const io::WriteHooks* hooks) {
    save_skill(skill_dir(skill.name), skill, hooks);
    auto saved = skill;
    // refs reflect what is on disk.
    saved.refs.clear();
    std::error_code ec;
    auto refs_dir = skill_dir(skill.name) / "references";
    if (fs::is_directory(refs_dir, ec)) {
        for (const auto& entry : fs::directory_iterator(refs_dir)) {
            if (entry.is_regular_file()) {
                auto file = entry.path().filename().string();
                saved.refs[file] = "references/" + file;
            }
        }
    }
    skills_[skill.name] = std::move(saved);
}

void SkillStore::remove(const std::string& name) {
    if (!find(name)) throw Error(ErrorCode::SkillNotFound, "unknown skill '" + name + "'");
    std::error_code ec;
    fs::remove_all(skill_dir(name), ec);
    if (ec) throw Error(ErrorCode::StoreUnavailable, "cannot remove skill " + name);
    skills_.erase(name);
}

SkillMeta SkillStore::apply_event(const std::string& name, UsageEvent::Kind kind, bool success) {
    auto skill = get(name);
    skill.meta = apply_usage_event(skill.meta, UsageEvent{kind, success, clock_()});
    save(skill);
    return skill.meta;
}

SkillMeta SkillStore::record_usage(const std::string& name, bool success) {
    return apply_event(name, UsageEvent::Kind::Use, success);
}

SkillMeta SkillStore::revise_usage(const std::string& name, bool success) {
    return apply_event(name, UsageEvent::Kind::Revise, success);
}

}  // namespace skillloop
