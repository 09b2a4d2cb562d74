#pragma once

#include "skillloop/context_engine.hpp"
#include "skillloop/message.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/util.hpp"
#include "skillloop/workspace.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;
using namespace skillloop;

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& part) const { return path_ / part; }

private:
    fs::path path_;
};

Timestamp fixed_time(long long offset_seconds = 0);
Clock fixed_clock(long long offset_seconds = 0);

Skill make_skill(const std::string& name, const std::string& desc, std::vector<std::string> triggers,
                 const std::string& instructions = "Do the thing.\n");

/// Writes `skills` under `<root>/configs/skills` and loads the store.
SkillStore store_with(const fs::path& workspace_root, const std::vector<Skill>& skills);

void write_file(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);

// ---- matcher reference ---------------------------------------------------

struct RefSkill {
    std::string name;
    std::string desc;
    std::vector<std::string> triggers;
};

struct RefMatch {
    std::string name;
    std::string stage;  // keyword | embedding | llm
    double confidence = 0.0;
};

/// Three-stage cascade evaluated literally: exhaustive trigger scan in
/// ascending name order, full scan with "best starts at 0 and only a
/// strictly larger score replaces it" then accept at >= theta, then the LLM
/// answer if it names a known skill exactly. Vectors are supplied per text.
std::optional<RefMatch> reference_match(const std::string& input, std::vector<RefSkill> skills,
                                        const std::function<std::vector<double>(const std::string&)>& embed,
                                        double theta, const std::function<std::string()>& llm_answer);

double reference_cosine(const std::vector<double>& a, const std::vector<double>& b);

// ---- maturity, reward ----------------------------------------------------

/// Threshold cascade read straight off the level table.
std::string reference_maturity(std::uint64_t usage, double success_rate);

double reference_reward(int maturity_level, std::size_t profile_chars, std::size_t memory_chars, double w1,
                        double w2, double w3, double scale = 2000.0);
double reference_cumulative(const std::vector<double>& rewards, double gamma);

// ---- vectors with exact cosines -----------------------------------------

/// Non-negative integers whose squares sum to n (Lagrange: at most four).
std::vector<int> four_squares(int n);

/// Vector of norm exactly 100 whose first component is `first` (0..100),
/// padded with zeros to `dim`.
std::vector<double> norm100_vector(int first, std::size_t dim);

// ---- generators ----------------------------------------------------------

std::string random_slug(std::mt19937_64& rng, std::size_t min_len = 3, std::size_t max_len = 20);
std::string random_text(std::mt19937_64& rng, std::size_t words, bool punctuation = true);

/// Valid skill with random metadata; references are not set.
Skill random_skill(std::mt19937_64& rng, Timestamp base);

/// Independent model of a level-2 sectioned Markdown document.
struct DocModel {
    std::string preamble;
    std::vector<std::pair<std::string, std::string>> sections;  // title, raw (heading line included)

    std::string render() const;
};

DocModel random_doc(std::mt19937_64& rng);
ProfileDelta random_delta(std::mt19937_64& rng, const DocModel& doc);

/// Fragment as it must appear after merging: "#"/"##" heading lines demoted
/// to "###", trailing newlines dropped.
std::string reference_sanitize(const std::string& fragment);

/// Checks `merged` against the model and the delta. Returns the first
/// mismatch, if any.
std::optional<std::string> check_merge(const DocModel& before, const ProfileDelta& delta, const std::string& merged);

/// Random history with consistent tool pairing, skill loads, URLs and images.
History random_history(std::mt19937_64& rng, std::size_t messages, std::size_t min_chars);

// ---- processes -----------------------------------------------------------

struct CommandResult {
    int exit_code = -1;
    std::string out;  // stdout only
};

/// Runs `command` through the shell and captures its standard output.
CommandResult run_command(const std::string& command);

/// Single-quoted for the shell.
std::string shell_quote(const std::string& s);

}  // namespace testsupport
