#include "test_support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace testsupport;
using json = nlohmann::json;

namespace {

CommandResult cli(const TempDir& data, const std::string& args) {
    return run_command(std::string(SKILLLOOP_CLI_PATH) + " --data-root " + shell_quote(data.path().string()) + " " +
                       args + " 2>/dev/null");
}

std::vector<json> json_lines(const std::string& out) {
    std::vector<json> lines;
    std::istringstream in(out);
    for (std::string l; std::getline(in, l);) {
        if (!l.empty()) lines.push_back(json::parse(l));
    }
    return lines;
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
    TempDir d;
    EXPECT_EQ(cli(d, "").exit_code, 1);
    EXPECT_EQ(cli(d, "frobnicate").exit_code, 1);
    EXPECT_EQ(cli(d, "soak --budget 10").exit_code, 1);
    EXPECT_EQ(cli(d, "--provider nope skills list").exit_code, 1);
    EXPECT_EQ(cli(d, "--user ../x skills list").exit_code, 1);
    EXPECT_EQ(run_command(std::string(SKILLLOOP_CLI_PATH) + " --help >/dev/null").exit_code, 0);
}

TEST(Cli, SkillAdministration) {
    TempDir d, src;
    write_file(src / "freight-quote/SKILL.md",
               "---\nname: freight-quote\ndescription: Quote freight\ntriggers: [freight]\n---\nSteps.\n");
    write_file(src / "freight-quote/references/rates.md", "rates");
    auto add = cli(d, "--json skills add " + shell_quote((src / "freight-quote").string()));
    ASSERT_EQ(add.exit_code, 0) << add.out;
    EXPECT_EQ(json::parse(add.out)["installed"], "freight-quote");
    EXPECT_TRUE(std::filesystem::exists(d / "default/configs/skills/freight-quote/references/rates.md"));

    auto list = cli(d, "--json skills list");
    ASSERT_EQ(list.exit_code, 0);
    auto lines = json_lines(list.out);
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(lines[0]["name"], "freight-quote");
    EXPECT_EQ(lines[0]["maturity"], "Budding");

    auto show = cli(d, "skills show freight-quote");
    EXPECT_NE(show.out.find("name: freight-quote"), std::string::npos);
    EXPECT_EQ(cli(d, "skills show ghost").exit_code, 2);
    EXPECT_EQ(cli(d, "skills rm freight-quote").exit_code, 0);
    EXPECT_EQ(cli(d, "--json skills list").out, "");

    write_file(src / "broken/SKILL.md", "no front matter");
    EXPECT_EQ(cli(d, "skills add " + shell_quote((src / "broken").string())).exit_code, 2);
}

TEST(Cli, MemoryShowJson) {
    TempDir d;
    auto r = cli(d, "--json --user zed memory show");
    ASSERT_EQ(r.exit_code, 0);
    auto j = json::parse(r.out);
    EXPECT_EQ(j["user_id"], "zed");
    EXPECT_NE(j["user_profile"].get<std::string>().find("skillloop:template"), std::string::npos);
}

TEST(Cli, SoakThenReplay) {
    TempDir d;
    auto r = cli(d, "--json soak --turns 12 --budget 4096 --seed 3");
    ASSERT_EQ(r.exit_code, 0) << r.out;
    auto lines = json_lines(r.out);
    ASSERT_EQ(lines.size(), 13u);
    EXPECT_EQ(lines[0]["type"], "turn");
    const auto& report = lines.back();
    EXPECT_EQ(report["type"], "report");
    EXPECT_EQ(report["errors"], 0);
    EXPECT_EQ(report["turns_completed"], 12);
    auto log = report["log_path"].get<std::string>();

    auto replay = run_command(std::string(SKILLLOOP_CLI_PATH) + " --json replay " + shell_quote(log));
    ASSERT_EQ(replay.exit_code, 0) << replay.out;
    EXPECT_EQ(json::parse(replay.out)["consistent"], true);

    // A second soak into the same root refuses to reuse the workspace.
    EXPECT_EQ(cli(d, "soak --turns 2").exit_code, 2);
    EXPECT_EQ(run_command(std::string(SKILLLOOP_CLI_PATH) + " replay /nonexistent/x.jsonl 2>/dev/null").exit_code, 2);
}

TEST(Cli, ReplayDetectsTampering) {
    TempDir d;
    auto r = cli(d, "--json soak --turns 6 --budget 2048");
    ASSERT_EQ(r.exit_code, 0);
    auto log = json_lines(r.out).back()["log_path"].get<std::string>();
    auto text = read_file(log);
    auto pos = text.find("Noted.");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 6, "Edited");
    write_file(log, text);
    auto replay = run_command(std::string(SKILLLOOP_CLI_PATH) + " --json replay " + shell_quote(log));
    EXPECT_EQ(replay.exit_code, 3);
    EXPECT_EQ(json::parse(replay.out)["consistent"], false);
}

TEST(Cli, EvolveEndedSession) {
    TempDir d;
    auto r = cli(d, "--json --user ev soak --turns 3");
    ASSERT_EQ(r.exit_code, 0);
    auto log = std::filesystem::path(json_lines(r.out).back()["log_path"].get<std::string>());
    auto session = log.stem().string();
    auto evo = cli(d, "--json --user ev evolve " + session);
    ASSERT_EQ(evo.exit_code, 0) << evo.out;
    EXPECT_EQ(json::parse(evo.out)["performed"], true);
    EXPECT_EQ(json::parse(cli(d, "--json --user ev evolve " + session).out)["performed"], false);
    EXPECT_EQ(cli(d, "--user ev evolve s-missing").exit_code, 2);
}
