// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Exit status is non-zero when any criterion fails.

#include "test_support.hpp"

#include "skillloop/config.hpp"
#include "skillloop/context_engine.hpp"
#include "skillloop/evolution.hpp"
#include "skillloop/matcher.hpp"
#include "skillloop/mock_provider.hpp"
#include "skillloop/runtime.hpp"
#include "skillloop/service.hpp"
#include "skillloop/session_log.hpp"
#include "skillloop/skill_store.hpp"
#include "skillloop/soak.hpp"
#include "skillloop/workspace.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

using namespace skillloop;
using namespace testsupport;
using json = nlohmann::json;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

/// Collects the first failure and keeps a short success note.
class Check {
public:
    void expect(bool cond, const std::string& what) {
        if (!cond && ok_) {
            ok_ = false;
            first_failure_ = what;
        }
    }
    Verdict verdict(const std::string& note) const { return {ok_, ok_ ? note : first_failure_}; }

private:
    bool ok_ = true;
    std::string first_failure_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Message say(const std::string& text, std::vector<ToolCall> calls = {}) {
    Message m;
    m.role = Role::Assistant;
    m.content = text;
    m.tool_calls = std::move(calls);
    return m;
}

std::string fmt(double v, int precision = 2) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(precision);
    o << v;
    return o.str();
}

// ---- 1. matcher oracle -----------------------------------------------------

const std::vector<std::string> kVocab = {
    "quotation", "freight",  "shipping", "market",   "brazil",   "germany", "lamps",    "solar",
    "pumps",     "textile",  "invoice",  "customs",  "tariff",   "exhibit", "buyer",    "sample",
    "discount",  "container", "payment", "letter",   "credit",   "insurance", "label",  "catalog"};

std::string pick_words(std::mt19937_64& rng, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += kVocab[rng() % kVocab.size()];
    }
    return out;
}

/// Answers an intent request with the skill named by a "want:<name>" token, else NONE.
Message want_responder(const ChatRequest& req) {
    const auto& body = req.messages.back().content;
    auto at = body.find("want:");
    if (at == std::string::npos) return say("NONE");
    auto end = body.find_first_of(" \n", at);
    return say(body.substr(at + 5, end == std::string::npos ? std::string::npos : end - at - 5));
}

std::string want_answer(const std::string& input) {
    auto at = input.find("want:");
    if (at == std::string::npos) return "NONE";
    auto end = input.find_first_of(" \n", at);
    return input.substr(at + 5, end == std::string::npos ? std::string::npos : end - at - 5);
}

Verdict matcher_oracle() {
    std::mt19937_64 rng(20260131);
    Check c;
    std::map<std::string, int> stages;
    int agree = 0, total = 0;
    auto t0 = std::chrono::steady_clock::now();
    for (int store_no = 0; store_no < 25; ++store_no) {
        TempDir ws;
        std::vector<Skill> skills;
        std::vector<RefSkill> ref;
        std::size_t n = 1 + rng() % 8;
        for (std::size_t i = 0; i < n; ++i) {
            auto name = "skill-" + std::to_string(store_no) + "-" + std::to_string(i);
            auto desc = pick_words(rng, 2 + rng() % 4);
            std::vector<std::string> triggers;
            std::size_t nt = rng() % 3;
            for (std::size_t k = 0; k < nt; ++k) {
                auto t = "kw" + std::to_string(rng() % 40) + "x";
                if (std::find(triggers.begin(), triggers.end(), t) == triggers.end()) triggers.push_back(t);
            }
            skills.push_back(make_skill(name, desc, triggers));
            ref.push_back({name, desc, triggers});
        }
        auto store = store_with(ws.path(), skills);
        MockEmbeddingProvider embed(64);
        MockChatProvider chat;
        chat.set_record_requests(false);
        chat.set_responder(want_responder);
        EmbeddingCache cache;
        for (int q = 0; q < 8; ++q) {
            std::string input;
            switch (rng() % 4) {
                case 0: {
                    const auto& owner = ref[rng() % ref.size()];
                    auto trig = owner.triggers.empty() || rng() % 4 == 0
                                    ? "kw" + std::to_string(rng() % 40) + "x"
                                    : owner.triggers[rng() % owner.triggers.size()];
                    input = "please help with " + trig + " today";
                    break;
                }
                case 1: input = ref[rng() % ref.size()].desc + " " + pick_words(rng, rng() % 2); break;
                case 2: input = pick_words(rng, 3) + " want:" + ref[rng() % ref.size()].name; break;
                default: input = pick_words(rng, 1 + rng() % 5); break;
            }
            if (rng() % 3 == 0) {
                for (auto& ch : input) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            }
            auto got = match_skill(input, store, {}, cache, &embed, &chat);
            auto want = reference_match(input, ref, [](const std::string& t) { return hashed_embedding(t, 64); }, 0.6,
                                        [&] { return want_answer(input); });
            ++total;
            bool same = got.result.has_value() == want.has_value();
            if (same && want) {
                same = got.result->skill_name == want->name && match_type_name(got.result->type) == want->stage &&
                       std::abs(got.result->confidence - want->confidence) <= 1e-12;
            }
            stages[want ? want->stage : "none"]++;
            if (same) ++agree;
            c.expect(same, "disagreement on input '" + input + "'");
        }
    }
    double secs = seconds_since(t0);
    c.expect(total == 200, "expected 200 cases, ran " + std::to_string(total));
    c.expect(secs < 5.0, "runtime " + fmt(secs) + " s exceeds 5 s");
    for (const char* s : {"keyword", "embedding", "llm", "none"}) {
        c.expect(stages[s] > 0, std::string("generator never exercised outcome ") + s);
    }
    return c.verdict(std::to_string(agree) + "/" + std::to_string(total) + " agree; keyword " +
                     std::to_string(stages["keyword"]) + ", embedding " + std::to_string(stages["embedding"]) +
                     ", llm " + std::to_string(stages["llm"]) + ", none " + std::to_string(stages["none"]) + "; " +
                     fmt(secs) + " s");
}

// ---- 2. threshold fidelity -------------------------------------------------

Verdict threshold_fidelity() {
    Check c;
    std::string summary;
    for (int first : {59, 60, 61}) {
        TempDir ws;
        auto store = store_with(ws.path(), {make_skill("candidate", "candidate description", {"never-typed"})});
        MockEmbeddingProvider embed(8);
        std::vector<double> q(8, 0.0);
        q[0] = 1.0;
        embed.set_vector("query text", q);
        embed.set_vector("candidate description", norm100_vector(first, 8));
        MockChatProvider chat;
        EmbeddingCache cache;
        auto out = match_skill("query text", store, {}, cache, &embed, &chat);
        bool accepted = out.result && out.result->type == MatchType::Embedding;
        bool fell_through = !out.result && chat.calls(ChatPurpose::IntentClassification) == 1;
        if (first == 59) {
            c.expect(fell_through, "score 0.59 did not fall through to the LLM stage");
        } else {
            c.expect(accepted, "score 0." + std::to_string(first) + " was not accepted");
            if (accepted) {
                c.expect(out.result->confidence == first / 100.0, "confidence differs from score");
                c.expect(chat.calls() == 0, "LLM stage ran after an embedding accept");
            }
        }
        summary += std::string(summary.empty() ? "" : ", ") + "0." + std::to_string(first) + " -> " +
                   (accepted ? "accept" : fell_through ? "fallthrough" : "?");
    }
    return c.verdict(summary);
}

// ---- 3. maturity grid ------------------------------------------------------

Verdict maturity_grid() {
    Check c;
    const std::vector<double> rates = {0.0, 0.5, 0.69, 0.7, 0.84, 0.85, 1.0};
    const std::map<std::string, int> rank = {{"Budding", 0}, {"Growing", 1}, {"Mature", 2}, {"Proficient", 3}};
    int points = 0, pairs = 0;
    std::vector<std::tuple<std::uint64_t, double, int>> grid;
    for (std::uint64_t u = 0; u <= 12; ++u) {
        for (double r : rates) {
            auto got = classify_maturity(u, r);
            auto want = reference_maturity(u, r);
            c.expect(maturity_name(got) == want,
                     "u=" + std::to_string(u) + " sr=" + fmt(r) + ": " + maturity_name(got) + " != " + want);
            grid.emplace_back(u, r, static_cast<int>(got));
            ++points;
        }
    }
    for (const auto& [u1, r1, l1] : grid) {
        for (const auto& [u2, r2, l2] : grid) {
            if (u1 <= u2 && r1 <= r2) {
                ++pairs;
                c.expect(l1 <= l2, "monotonicity broken between (" + std::to_string(u1) + "," + fmt(r1) + ") and (" +
                                       std::to_string(u2) + "," + fmt(r2) + ")");
            }
        }
    }
    c.expect(points == 91, "grid has " + std::to_string(points) + " points");
    return c.verdict(std::to_string(points) + " points match, " + std::to_string(pairs) + " ordered pairs monotone");
}

// ---- 4. soak -----------------------------------------------------------------

/// Skill references visible in the final context, rebuilt from the log alone.
std::set<std::string> final_context_skills(const std::vector<json>& records) {
    std::uint64_t retained_from = 0;
    std::string summary;
    for (const auto& r : records) {
        if (r["type"] == "compression") {
            retained_from = r["retained_from"].get<std::uint64_t>();
            summary = r["summary_message"]["content"].get<std::string>();
        }
    }
    std::set<std::string> out;
    auto open = summary.rfind("<asset_index>\n");
    auto close = summary.find("</asset_index>", open == std::string::npos ? 0 : open);
    if (open != std::string::npos && close != std::string::npos) {
        std::istringstream lines(summary.substr(open + 14, close - open - 14));
        for (std::string l; std::getline(lines, l);) {
            auto j = json::parse(l, nullptr, false);
            if (!j.is_discarded() && j.value("kind", "") == "skill_reference") out.insert(j["value"].get<std::string>());
        }
    }
    for (const auto& r : records) {
        if (r["type"] != "message") continue;
        const auto& m = r["message"];
        if (m["turn_index"].get<std::uint64_t>() < retained_from) continue;
        for (const auto& call : m.value("tool_calls", json::array())) {
            if (call["name"] == "skill_loader") out.insert(json::parse(call["arguments"].get<std::string>())["skill"].get<std::string>());
        }
    }
    return out;
}

std::set<std::string> early_skills(const std::vector<json>& records, std::size_t user_turns) {
    std::set<std::string> out;
    std::size_t seen_users = 0;
    for (const auto& r : records) {
        if (r["type"] != "message") continue;
        const auto& m = r["message"];
        if (m["role"] == "user" && ++seen_users > user_turns) break;
        for (const auto& call : m.value("tool_calls", json::array())) {
            if (call["name"] == "skill_loader") out.insert(json::parse(call["arguments"].get<std::string>())["skill"].get<std::string>());
        }
    }
    return out;
}

std::filesystem::path g_soak_log;

Verdict soak(const TempDir& root) {
    Check c;
    SoakOptions opts;
    opts.turns = 420;
    opts.budget = {64000, 10};
    opts.data_root = root.path();
    auto t0 = std::chrono::steady_clock::now();
    auto report = run_soak(opts);
    double secs = seconds_since(t0);
    g_soak_log = report.log_path;
    c.expect(report.turns_completed == 420, "completed " + std::to_string(report.turns_completed) + " turns");
    c.expect(report.errors == 0, std::to_string(report.errors) + " runtime errors");
    c.expect(report.compressions >= 1, "no compression events");
    c.expect(secs < 120.0, "runtime " + fmt(secs) + " s exceeds 2 min");

    auto records = SessionLog::read(report.log_path);
    auto early = early_skills(records, 20);
    auto final_refs = final_context_skills(records);
    c.expect(!early.empty(), "no skill_reference assets in the first 20 turns");
    std::size_t kept = 0;
    for (const auto& name : early) {
        bool found = final_refs.count(name) > 0;
        kept += found;
        c.expect(found, "early skill reference '" + name + "' lost from the final context");
    }
    c.expect(report.assets_conserved(), "soak report lists missing skill references");
    return c.verdict("420 turns, 0 errors, " + std::to_string(report.compressions) + " compressions, " +
                     std::to_string(kept) + "/" + std::to_string(early.size()) + " early skill refs conserved, " +
                     fmt(secs, 1) + " s");
}

// ---- 5. compression invariants ---------------------------------------------

const std::array<std::string, 9> kContractHeadings = {
    "Session Intent", "Key Facts & Data", "Decisions Made", "Actions Taken", "Tool & Skill Usage",
    "Open Tasks", "User Preferences Observed", "Errors & Corrections", "Asset References"};

/// Messy model output: headings dropped, reordered, numbered or unknown.
Message messy_summary(std::mt19937_64& rng) {
    std::string s = rng() % 2 ? "Overview before any heading.\n" : "";
    for (std::size_t k = 0; k < kContractHeadings.size(); ++k) {
        if (rng() % 4 == 0) continue;
        s += (rng() % 2 ? "## " + std::to_string(k + 1) + ". " : std::string("# ")) + kContractHeadings[k] + "\n";
        s += random_text(rng, 3 + rng() % 12) + "\n";
        if (rng() % 5 == 0) s += "## Extra Notes\n# stray\n";
    }
    return say(s);
}

std::vector<std::string> level2_headings(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) {
        if (l.rfind("## ", 0) == 0) out.push_back(l.substr(3));
    }
    return out;
}

Verdict compression_invariants() {
    Check c;
    std::mt19937_64 rng(424242);
    std::size_t faults = 0;
    for (int i = 0; i < 100; ++i) {
        ContextBudget budget{1024 + rng() % 3072, 2 + rng() % 11};
        History h = random_history(rng, budget.retain_recent + 4, 60);
        while (estimate_tokens(h) <= budget.max_tokens) {
            auto more = random_history(rng, 6, 200);
            std::uint64_t base = h.back().turn_index + 1;
            for (auto& m : more) m.turn_index += base;
            h.insert(h.end(), more.begin(), more.end());
        }
        c.expect(should_compress(h, budget), "history " + std::to_string(i) + " not over budget");
        std::vector<std::string> before_bytes;
        for (const auto& m : h) before_bytes.push_back(serialize(m));

        MockChatProvider chat;
        chat.set_record_requests(false);
        chat.enqueue(ChatPurpose::Summary, messy_summary(rng));
        CompressionState st;
        auto r = compress_history(h, st, budget, chat);

        c.expect(estimate_tokens(r.history) < estimate_tokens(h), "estimate did not decrease on history " + std::to_string(i));
        for (std::size_t k = 1; k <= budget.retain_recent; ++k) {
            c.expect(serialize(r.history[r.history.size() - k]) == before_bytes[h.size() - k],
                     "recent message " + std::to_string(k) + " altered on history " + std::to_string(i));
        }
        auto heads = level2_headings(*r.state.summary);
        std::vector<std::string> expected;
        for (std::size_t k = 0; k < kContractHeadings.size(); ++k) {
            expected.push_back(std::to_string(k + 1) + ". " + kContractHeadings[k]);
        }
        c.expect(heads == expected, "summary headings differ from the contract on history " + std::to_string(i));
        c.expect(r.history.front().content.find(*r.state.summary) != std::string::npos,
                 "summary missing from the compressed context message");

        // Fault injection: provider failure must leave the history bit-identical.
        MockChatProvider broken;
        broken.fail_next(1);
        bool threw = false;
        try {
            compress_history(h, st, budget, broken);
        } catch (const Error& e) {
            threw = e.code() == ErrorCode::CompressionFailed;
        }
        c.expect(threw, "fault-injected compression did not fail with CompressionFailed");
        bool identical = h.size() == before_bytes.size();
        for (std::size_t k = 0; identical && k < h.size(); ++k) identical = serialize(h[k]) == before_bytes[k];
        c.expect(identical, "history changed after a failed compression");
        faults += threw && identical;
    }
    return c.verdict("100 histories: tokens decrease, tails intact, 9 headings; " + std::to_string(faults) +
                     "/100 fault injections left history bit-identical");
}

// ---- 6. persistence --------------------------------------------------------

Verdict persistence(const TempDir& scratch) {
    Check c;
    std::mt19937_64 rng(777);
    int skill_ok = 0, delta_ok = 0;
    auto ws = Workspace::init(scratch.path(), "persist");
    for (int i = 0; i < 500; ++i) {
        auto s = random_skill(rng, fixed_time());
        auto dir = scratch / ("skills/" + std::to_string(i) + "/" + s.name);
        save_skill(dir, s);
        auto back = parse_skill(dir);
        bool same = back == s && render_skill_md(back) == read_file(dir / "SKILL.md");
        skill_ok += same;
        c.expect(same, "skill round trip mismatch for '" + s.name + "'");
    }
    for (int i = 0; i < 500; ++i) {
        auto doc = random_doc(rng);
        auto delta = random_delta(rng, doc);
        write_file(ws.root() / "MEMORY.md", doc.render());
        ws.reload();
        ws.apply_memory_delta(delta);
        auto on_disk = read_file(ws.root() / "MEMORY.md");
        auto problem = check_merge(doc, delta, on_disk);
        bool reparse = parse_markdown_sections(on_disk).render() == on_disk;
        Workspace again = Workspace::init(scratch.path(), "persist");
        bool same = !problem && reparse && again.memory() == on_disk;
        delta_ok += same;
        c.expect(same, "delta round trip mismatch: " + (problem ? *problem : std::string("reparse")));
    }

    std::size_t logs = 0, divergences = 0;
    std::vector<std::filesystem::path> to_replay;
    if (!g_soak_log.empty()) to_replay.push_back(g_soak_log);
    for (std::uint64_t seed : {1u, 2u}) {
        SoakOptions o;
        o.turns = 60;
        o.budget = {4096, 6};
        o.seed = seed;
        o.data_root = scratch / ("soak" + std::to_string(seed));
        to_replay.push_back(run_soak(o).log_path);
    }
    for (const auto& p : to_replay) {
        auto rep = replay_session_log(p);
        ++logs;
        divergences += rep.divergences.size();
        c.expect(rep.consistent(), "replay of " + p.filename().string() + " diverged: " +
                                       (rep.divergences.empty() ? "" : rep.divergences.front().what));
    }
    return c.verdict(std::to_string(skill_ok) + "/500 skill round trips, " + std::to_string(delta_ok) +
                     "/500 delta round trips, " + std::to_string(logs) + " soak logs replayed with " +
                     std::to_string(divergences) + " divergences");
}

// ---- 7. evolution pipeline -------------------------------------------------

std::size_t section_count(const std::string& doc) { return parse_markdown_sections(doc).sections.size(); }

Verdict evolution_pipeline(const TempDir& scratch) {
    Check c;
    auto ws = Workspace::init(scratch.path(), "evo");
    auto store = SkillStore::load(ws.root(), fixed_clock(120));
    EmbeddingCache cache;
    MockEmbeddingProvider embed(16);
    MockChatProvider chat;
    ToolRegistry tools;
    register_builtin_tools(tools);
    RuntimeDeps deps{ws, store, cache, chat, &embed, tools};
    auto state = open_session(deps, "evo-1");
    state = run_turn(state, "Our company makes bamboo furniture for hotels", deps).first;
    state = run_turn(state, "Remember that sample orders ship from Xiamen", deps).first;
    end_session(state, deps);

    auto user_before = ws.user_profile();
    auto memory_before = ws.memory();
    auto tool = [](const std::string& id, const std::string& name, const json& args) {
        return ToolCall{id, name, args.dump()};
    };
    chat.enqueue(ChatPurpose::Review,
                 say("", {tool("r1", "UpdateUserProfileTool",
                               {{"section", "Products"}, {"content", "- Bamboo furniture for hotels"},
                                {"evidence", "our company makes bamboo furniture for hotels"}}),
                          tool("r2", "UpdateMemoryTool", {{"section", "Logistics"}, {"content", "Samples ship from Xiamen"}}),
                          tool("r3", "ExtractSkillTool",
                               {{"name", "hotel-furniture-quote"},
                                {"description", "Quote bamboo furniture packages for hotel projects"},
                                {"triggers", {"hotel project", "furniture package"}},
                                {"instructions", "1. Ask for room count.\n2. Price per room set.\n"}})}));
    chat.enqueue(ChatPurpose::Review, say("Review finished."));
    auto out = run_evolution(ws, store, "evo-1", chat, &cache, &embed);

    c.expect(out.performed, "first evolution run not performed");
    c.expect(section_count(ws.user_profile()) == section_count(user_before) + 1, "USER.md did not gain exactly one section");
    c.expect(ws.user_profile().find("## Products\n- Bamboo furniture for hotels") != std::string::npos,
             "profile fact missing");
    c.expect(section_count(ws.memory()) == section_count(memory_before) + 1, "MEMORY.md did not gain exactly one section");
    c.expect(out.delta.new_skills.size() == 1, "expected one installed skill");
    auto reloaded = SkillStore::load(ws.root());
    const Skill* installed = reloaded.find("hotel-furniture-quote");
    c.expect(installed != nullptr, "skill not on disk");
    if (installed) {
        c.expect(!validate_skill(*installed), "installed skill violates an invariant");
        c.expect(installed->meta.usage_count == 0 && installed->meta.success_count == 0, "installed skill has usage");
        c.expect(installed->meta.created_at == installed->meta.updated_at, "timestamps differ on a new skill");
    }
    c.expect(reloaded.size() == 1, "unexpected skills in the store");

    auto user_after = read_file(ws.root() / "USER.md");
    auto memory_after = read_file(ws.root() / "MEMORY.md");
    auto skill_md = read_file(ws.root() / "configs/skills/hotel-furniture-quote/SKILL.md");
    auto calls = chat.calls();
    auto second = run_evolution(ws, store, "evo-1", chat, &cache, &embed);
    c.expect(!second.performed, "second run was not a no-op");
    c.expect(chat.calls() == calls, "second run called the provider");
    c.expect(read_file(ws.root() / "USER.md") == user_after && read_file(ws.root() / "MEMORY.md") == memory_after &&
                 read_file(ws.root() / "configs/skills/hotel-furniture-quote/SKILL.md") == skill_md,
             "second run changed files");
    c.expect(load_rewards(ws).size() == 1, "second run recorded reward");

    // Adversarial candidate stream.
    auto adv_ws = Workspace::init(scratch.path(), "adversary");
    auto adv_store = store_with(adv_ws.root(), {make_skill("freight-quote", "Quote sea freight", {"freight"})});
    MockEmbeddingProvider adv_embed(16);
    adv_embed.set_vector("Quote sea freight", norm100_vector(100, 16));
    adv_embed.set_vector("Quote ocean freight rates", norm100_vector(95, 16));
    adv_embed.set_vector("Plan trade show booths", norm100_vector(0, 16));
    EmbeddingCache adv_cache;
    MockChatProvider adv_chat;
    RuntimeDeps adv_deps{adv_ws, adv_store, adv_cache, adv_chat, &adv_embed, tools};
    end_session(open_session(adv_deps, "adv-1"), adv_deps);
    auto candidate = [&](const std::string& id, const std::string& name, const std::string& desc,
                         std::vector<std::string> triggers) {
        return tool(id, "ExtractSkillTool",
                    {{"name", name}, {"description", desc}, {"triggers", triggers}, {"instructions", "Steps.\n"}});
    };
    adv_chat.enqueue(ChatPurpose::Review,
                     say("", {candidate("a1", "freight-quote", "Different text", {"other"}),
                              candidate("a2", "triggerless", "Something new", {}),
                              candidate("a3", "ocean-quote", "Quote ocean freight rates", {"ocean"}),
                              candidate("a4", "trade-show", "Plan trade show booths", {"trade show"})}));
    auto adv = run_evolution(adv_ws, adv_store, "adv-1", adv_chat, &adv_cache, &adv_embed);
    std::vector<std::string> reasons;
    for (const auto& g : adv.delta.gate_decisions) reasons.push_back(g.reason);
    c.expect(reasons == std::vector<std::string>{"name_collision", "no_triggers", "near_duplicate", "accepted"},
             "adversarial gate reasons were wrong");
    c.expect(adv_store.size() == 2 && adv_store.find("trade-show"), "adversarial stream changed the store wrongly");
    c.expect(adv_store.get("freight-quote").description == "Quote sea freight", "colliding candidate overwrote a skill");

    std::string joined;
    for (const auto& r : reasons) joined += (joined.empty() ? "" : ", ") + r;
    return c.verdict("1 profile section, 1 memory section, 1 skill installed; rerun idempotent; adversarial: " + joined);
}

// ---- 8. reward arithmetic --------------------------------------------------

Verdict reward_arithmetic() {
    Check c;
    std::mt19937_64 rng(6006);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double a = expo(rng), b = expo(rng), d = expo(rng), sum = a + b + d;
        RewardWeights w{a / sum, b / sum, d / sum};
        std::optional<SkillMeta> meta;
        int level = 0;
        if (rng() % 5) {
            SkillMeta m;
            m.usage_count = rng() % 15;
            m.success_count = m.usage_count ? rng() % (m.usage_count + 1) : 0;
            meta = m;
            level = std::map<std::string, int>{{"Budding", 0}, {"Growing", 1}, {"Mature", 2}, {"Proficient", 3}}.at(
                reference_maturity(m.usage_count, m.success_rate()));
        }
        std::size_t pc = rng() % 4000, mc = rng() % 4000;
        double scale = 500.0 + 3000.0 * unit(rng);
        auto got = compute_reward("s", meta, pc, mc, w, scale).reward;
        auto want = reference_reward(level, pc, mc, w.maturity, w.profile, w.memory, scale);
        worst = std::max(worst, std::abs(got - want));
        c.expect(std::abs(got - want) <= 1e-9, "reward mismatch at sample " + std::to_string(i));
    }
    int sequences = 0;
    for (double gamma : {0.5, 0.9, 1.0}) {
        for (int s = 0; s < 50; ++s) {
            std::vector<RewardRecord> recs(1 + rng() % 60);
            std::vector<double> values;
            for (auto& r : recs) {
                r.reward = unit(rng);
                values.push_back(r.reward);
            }
            double got = cumulative_reward(recs, gamma);
            double want = reference_cumulative(values, gamma);
            worst = std::max(worst, std::abs(got - want));
            c.expect(std::abs(got - want) <= 1e-9, "cumulative mismatch at gamma " + fmt(gamma, 1));
            ++sequences;
        }
    }
    std::ostringstream w;
    w << worst;
    return c.verdict("1000 weight vectors and " + std::to_string(sequences) + " sequences, max error " + w.str());
}

// ---- 9. offline stack ------------------------------------------------------

Verdict offline_stack(const TempDir& scratch) {
    Check c;
    auto cmd = std::string(SKILLLOOP_CLI_PATH) + " --provider mock --json --data-root " +
               shell_quote((scratch / "cli").string()) + " soak --turns 50 2>/dev/null";
    auto run = run_command(cmd);
    c.expect(run.exit_code == 0, "cli soak exited " + std::to_string(run.exit_code));
    std::istringstream lines(run.out);
    std::size_t turn_lines = 0;
    json report;
    for (std::string l; std::getline(lines, l);) {
        auto j = json::parse(l, nullptr, false);
        if (j.is_discarded()) continue;
        if (j["type"] == "turn") ++turn_lines;
        if (j["type"] == "report") report = j;
    }
    c.expect(turn_lines == 50, "cli soak printed " + std::to_string(turn_lines) + " turn lines");
    c.expect(report.value("errors", -1) == 0, "cli soak reported errors");

    // Endpoint suite over loopback against the mock-backed service.
    ApiConfig cfg;
    cfg.data_root = scratch / "service";
    cfg.chat.kind = cfg.embedding.kind = "mock";
    auto chat = std::make_shared<MockChatProvider>();
    auto embed = std::make_shared<MockEmbeddingProvider>(32);
    Service service(cfg, chat, embed);
    int port = service.start("127.0.0.1", 0);
    httplib::Client http("127.0.0.1", port);
    int endpoints = 0;
    auto expect_status = [&](const httplib::Result& res, int status, const std::string& what) {
        ++endpoints;
        c.expect(res && res->status == status,
                 what + " returned " + (res ? std::to_string(res->status) + " " + res->body : std::string("no response")));
        return res ? json::parse(res->body, nullptr, false) : json();
    };

    auto created = expect_status(http.Post("/v1/sessions", R"({"user_id":"acme"})", "application/json"), 201,
                                 "POST /v1/sessions");
    std::string sid = created.value("session_id", "");
    expect_status(http.Put("/v1/skills/lc-check?user_id=acme",
                           "---\nname: lc-check\ndescription: Check letters of credit\ntriggers: [letter of credit]\n---\n"
                           "1. Compare documents.\n",
                           "text/markdown"),
                  201, "PUT /v1/skills/{name}");
    auto listed = expect_status(http.Get("/v1/skills?user_id=acme"), 200, "GET /v1/skills");
    c.expect(listed["skills"].size() == 1, "skill list size");
    auto shown = expect_status(http.Get("/v1/skills/lc-check?user_id=acme"), 200, "GET /v1/skills/{name}");
    c.expect(shown.value("instructions", "") == "1. Compare documents.\n", "skill detail instructions");

    auto stream = http.Post("/v1/sessions/" + sid + "/messages", R"({"text":"Please review this letter of credit"})",
                            "application/json");
    ++endpoints;
    c.expect(stream && stream->status == 200, "POST messages failed");
    std::vector<json> events;
    if (stream) {
        std::istringstream frames(stream->body);
        for (std::string l; std::getline(frames, l);) {
            if (l.rfind("data: ", 0) == 0) events.push_back(json::parse(l.substr(6)));
        }
    }
    c.expect(!events.empty() && events.front()["type"] == "match_result" && events.front()["skill"] == "lc-check",
             "stream did not open with the keyword match");
    c.expect(!events.empty() && events.back()["type"] == "turn_summary", "stream did not end with turn_summary");
    std::uint64_t turn = events.empty() ? 0 : events.back().value("turn_index", 0);

    auto fb = expect_status(http.Post("/v1/sessions/" + sid + "/feedback",
                                      json{{"turn_index", turn}, {"positive", false}}.dump(), "application/json"),
                            200, "POST feedback");
    c.expect(fb.value("success", true) == false, "feedback did not flip the verdict");
    expect_status(http.Post("/v1/sessions/" + sid + "/end", "{}", "application/json"), 200, "POST end");

    auto implicit = ToolCall{"o1", "UpdateUserProfileTool",
                             json{{"section", "Style"}, {"content", "Prefers concise checklists"}, {"evidence", ""},
                                  {"explicit", false}}.dump()};
    chat->enqueue(ChatPurpose::Review, say("", {implicit}));
    expect_status(http.Post("/v1/sessions/" + sid + "/evolve", "{}", "application/json"), 200, "POST evolve");
    expect_status(http.Get("/v1/users/acme/memory"), 200, "GET memory");
    expect_status(http.Get("/v1/users/acme/rewards"), 200, "GET rewards");

    // A second session flags the same pattern, producing a suggestion to confirm.
    auto second = json::parse(http.Post("/v1/sessions", R"({"user_id":"acme"})", "application/json")->body);
    std::string sid2 = second.value("session_id", "");
    http.Post("/v1/sessions/" + sid2 + "/end", "{}", "application/json");
    chat->enqueue(ChatPurpose::Review, say("", {implicit}));
    http.Post("/v1/sessions/" + sid2 + "/evolve", "{}", "application/json");
    auto sugg = expect_status(http.Get("/v1/users/acme/suggestions"), 200, "GET suggestions");
    std::string sg = sugg["suggestions"].empty() ? "missing" : sugg["suggestions"][0].value("id", "");
    c.expect(sg != "missing", "no suggestion after two sessions");
    expect_status(http.Post("/v1/suggestions/" + sg + "/confirm", R"({"user_id":"acme","accept":true})",
                            "application/json"),
                  200, "POST confirm");
    auto mem = json::parse(http.Get("/v1/users/acme/memory")->body);
    c.expect(mem.value("user_profile", "").find("Prefers concise checklists") != std::string::npos,
             "confirmed suggestion not in USER.md");
    expect_status(http.Delete("/v1/skills/lc-check?user_id=acme"), 200, "DELETE skill");
    expect_status(http.Get("/v1/skills/lc-check?user_id=acme"), 404, "GET deleted skill");
    expect_status(http.Post("/v1/sessions/s-unknown/end", "{}", "application/json"), 404, "unknown session");
    service.stop();

    return c.verdict("cli soak 50 turns, 0 errors; " + std::to_string(endpoints) + " endpoint calls as expected");
}

}  // namespace

int main() {
    TempDir root;
    struct Criterion {
        const char* name;
        std::function<Verdict()> run;
    };
    std::vector<Criterion> criteria = {
        {"matcher-oracle-equivalence", matcher_oracle},
        {"threshold-fidelity", threshold_fidelity},
        {"maturity-state-machine", maturity_grid},
        {"soak-420-turns", [&] { return soak(root); }},
        {"compression-invariants", compression_invariants},
        {"persistence-round-trips", [&] { return persistence(root); }},
        {"evolution-pipeline", [&] { return evolution_pipeline(root); }},
        {"reward-arithmetic", reward_arithmetic},
        {"full-offline-stack", [&] { return offline_stack(root); }},
    };
    int failures = 0;
    for (const auto& crit : criteria) {
        Verdict v;
        try {
            v = crit.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << crit.name << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
