#include "skillloop/soak.hpp"

#include "skillloop/error.hpp"
#include "skillloop/matcher.hpp"
#include "skillloop/mock_provider.hpp"
#include "skillloop/runtime.hpp"
#include "skillloop/tools.hpp"
#include "skillloop/util.hpp"
#include "skillloop/workspace.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <random>
#include <set>

namespace skillloop {

namespace fs = std::filesystem;

namespace {

constexpr std::array kProducts = {
    "LED panel lights",     "stainless steel cookware", "solar inverters",   "cotton bath towels",
    "bamboo cutting boards", "bluetooth earbuds",       "ceramic floor tiles", "hydraulic hose fittings",
    "yoga mats",            "PET bottle preforms",
};

constexpr std::array kMarkets = {
    "Germany", "Brazil", "Saudi Arabia", "Vietnam", "Kenya", "Mexico", "Poland", "Australia", "Chile", "Canada",
};

// {scenario template, has trigger}. "{p}" is the product, "{m}" the market.
constexpr std::array<const char*, 12> kScenarios = {
    "Please prepare a quotation for {p} to a distributor in {m}, FOB and CIF variants.",
    "We need a market entry assessment for {p} in {m}: demand, competitors and channels.",
    "Plan the shipping for a 40ft container of {p} bound for {m}, compare sea and rail freight.",
    "Check the compliance and certification requirements for selling {p} in {m}.",
    "Draft a follow-up email to the {m} buyer who asked about {p} last week.",
    "We will attend a trade show in {m} next quarter with {p}; plan the booth and leads.",
    "Summarise what we know so far about {p} demand in {m}.",
    "The buyer from {m} says our {p} sample arrived damaged, what should we tell them?",
    "Give me a price quote for {p} with a 5% discount for a repeat customer in {m}.",
    "Do a quick market research pass on {p} importers in {m}.",
    "Which freight forwarder options exist for {p} shipments to {m}?",
    "Thinking aloud about {p} for {m}; nothing specific yet, just collecting notes.",
};

constexpr std::array kNotes = {
    "Unit cost moved after the last raw material update, so margins need a fresh look.",
    "The buyer prefers payment by letter of credit at sight and asked about lead time.",
    "Packaging is 12 units per carton, cartons are palletised with corner protectors.",
    "Our factory capacity is roughly 20,000 units per month with a 25 day production cycle.",
    "Last season the competitor undercut us by about 4% but with weaker warranty terms.",
    "Exchange rate exposure matters here, quote in USD and mention the validity window.",
    "The importer mentioned a tender that closes at the end of next month.",
    "Sample approval took two rounds previously, mostly about colour consistency.",
    "They asked whether private label printing is possible for the next order.",
    "Port congestion added ten days last quarter, worth flagging in the timeline.",
    "Keep the tone friendly but precise, the contact is a procurement manager.",
    "A distributor network covers three regions, each with separate stock points.",
};

std::string slug(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!out.empty() && out.back() != '-') {
            out.push_back('-');
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

std::string fill(std::string tmpl, const std::string& product, const std::string& market) {
    for (auto [key, value] : {std::pair<std::string, std::string>{"{p}", product}, {"{m}", market}}) {
        for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
            tmpl.replace(pos, key.size(), value);
        }
    }
    return tmpl;
}

Skill make_skill(std::string name, std::string desc, std::vector<std::string> triggers, std::string instructions,
                 Timestamp now) {
    Skill s;
    s.name = std::move(name);
    s.description = std::move(desc);
    s.triggers = std::move(triggers);
    s.instructions = std::move(instructions);
    s.meta.created_at = s.meta.updated_at = now;
    return s;
}

}  // namespace

std::vector<Skill> soak_skills(Timestamp now) {
    return {
        make_skill("export-quotation", "Prepare export price quotations with Incoterms, margins and currency terms",
                   {"quotation", "price quote"},
                   "1. Confirm product, quantity and Incoterm.\n2. Build cost, margin and currency lines.\n"
                   "3. State validity, payment terms and lead time.\n",
                   now),
        make_skill("market-entry", "Assess a target market: demand, competitors, regulation and sales channels",
                   {"market entry", "market research"},
                   "1. Size demand.\n2. List competitors and price bands.\n3. Recommend a channel.\n", now),
        make_skill("logistics-plan", "Plan shipping routes, freight modes, transit times and export documents",
                   {"shipping", "freight"},
                   "1. Compare modes and transit times.\n2. List documents.\n3. Flag port risks.\n", now),
        make_skill("compliance-check", "Check certification and import compliance requirements for a product",
                   {"compliance", "certification"},
                   "1. Identify the applicable standards.\n2. List test reports and labels.\n", now),
        make_skill("buyer-followup", "Draft follow-up emails to overseas buyers after inquiries or samples",
                   {"follow-up email", "follow up"},
                   "1. Reference the last contact.\n2. Add one concrete next step.\n", now),
        make_skill("trade-show-plan", "Plan trade show participation: booth, samples, lead capture and follow-up",
                   {"trade show", "exhibition"},
                   "1. Pick samples.\n2. Prepare lead capture.\n3. Schedule follow-ups.\n", now),
    };
}

std::string soak_turn_text(std::uint64_t seed, std::size_t index, std::size_t min_chars) {
    std::mt19937_64 rng(seed * 1000003ULL + index);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    std::string product = kProducts[pick(kProducts.size())];
    std::string market = kMarkets[pick(kMarkets.size())];
    std::string text = fill(kScenarios[pick(kScenarios.size())], product, market);
    auto ps = slug(product);
    text += "\n\nCatalogue page: https://catalog.example.com/products/" + ps + "/spec-sheet";
    if (pick(3) == 0) text += "\nSample photo: ![sample](images/" + ps + "-sample.png)";
    text += "\n\nNotes:";
    while (text.size() < min_chars) {
        text += "\n- ";
        text += kNotes[pick(kNotes.size())];
        text += " (ref " + std::to_string(index) + "-" + std::to_string(pick(1000)) + ")";
    }
    return text;
}

SoakReport run_soak(const SoakOptions& options) {
    auto started = std::chrono::steady_clock::now();
    SoakReport report;
    report.turns_requested = options.turns;

    fs::path data_root;
    if (options.data_root) {
        data_root = *options.data_root;
    } else {
        std::random_device rd;
        data_root = fs::temp_directory_path() / ("skillloop-soak-" + std::to_string(rd()) + std::to_string(rd()));
    }
    if (fs::exists(data_root / options.user_id)) {
        throw Error(ErrorCode::StoreUnavailable,
                    "soak workspace " + (data_root / options.user_id).string() + " already exists");
    }
    auto ws = Workspace::init(data_root, options.user_id);
    auto store = SkillStore::load(ws.root());
    for (const auto& s : soak_skills(store.now())) store.save(s);
    report.workspace_root = ws.root();

    MockChatProvider chat;
    chat.set_record_requests(false);
    if (options.transcript) chat.load_transcript(*options.transcript);
    MockEmbeddingProvider embed;
    EmbeddingCache cache(ws.root() / "configs" / "embedding_cache.json");
    ToolRegistry tools;
    register_builtin_tools(tools);

    RuntimeConfig rc;
    rc.budget = options.budget;
    RuntimeDeps deps{ws, store, cache, chat, &embed, tools, rc};

    auto session_id = "soak-" + std::to_string(options.seed);
    auto state = open_session(deps, session_id);
    report.log_path = ws.session_log_path(session_id);

    std::set<std::string> early;
    for (std::size_t i = 0; i < options.turns; ++i) {
        SoakTurn turn;
        turn.turn = i;
        try {
            auto [next, result] = run_turn(std::move(state), soak_turn_text(options.seed, i, options.min_turn_chars), deps);
            state = std::move(next);
            turn.skill = result.skill_used;
            turn.stage = result.match ? match_type_name(result.match->type) : "none";
            turn.success = result.success;
            turn.compressed = result.compressed;
            turn.token_estimate = result.token_estimate;
            if (result.provider_failed) {
                turn.error = "provider failure";
            } else if (!result.tool_errors.empty()) {
                turn.error = "tool error: " + result.tool_errors.front().second;
            } else if (result.compression_error) {
                turn.error = "compression failed: " + *result.compression_error;
            }
        } catch (const std::exception& e) {
            turn.error = e.what();
            turn.success = false;
        }
        if (turn.compressed) ++report.compressions;
        if (turn.error) ++report.errors;
        ++report.turns_completed;
        report.per_turn.push_back(std::move(turn));
        if (i < options.early_turns) {
            for (const auto& a : extract_asset_index(state.h)) {
                if (a.kind == Asset::Kind::SkillReference) early.insert(a.value);
            }
        }
    }
    state = end_session(std::move(state), deps);

    std::set<std::string> final_refs;
    for (const auto& a : extract_asset_index(state.h)) {
        if (a.kind == Asset::Kind::SkillReference) final_refs.insert(a.value);
    }
    report.early_skill_references.assign(early.begin(), early.end());
    std::set_difference(early.begin(), early.end(), final_refs.begin(), final_refs.end(),
                        std::back_inserter(report.missing_skill_references));
    report.final_level = state.c.level;
    for (const auto& [name, s] : store.skills()) report.final_skills[name] = s.meta;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

nlohmann::json to_json(const SoakReport& r) {
    auto estimates = nlohmann::json::array();
    for (const auto& t : r.per_turn) estimates.push_back(t.token_estimate);
    auto errors = nlohmann::json::array();
    for (const auto& t : r.per_turn) {
        if (t.error) errors.push_back({{"turn", t.turn}, {"error", *t.error}});
    }
    auto skills = nlohmann::json::object();
    for (const auto& [name, m] : r.final_skills) {
        skills[name] = {{"usage_count", m.usage_count},
                        {"success_count", m.success_count},
                        {"success_rate", m.success_rate()},
                        {"maturity", maturity_name(classify_maturity(m))}};
    }
    return {{"turns_requested", r.turns_requested},
            {"turns_completed", r.turns_completed},
            {"compressions", r.compressions},
            {"errors", r.errors},
            {"error_details", errors},
            {"final_compression_level", r.final_level},
            {"token_estimates", estimates},
            {"maturity", skills},
            {"early_skill_references", r.early_skill_references},
            {"missing_skill_references", r.missing_skill_references},
            {"assets_conserved", r.assets_conserved()},
            {"workspace", r.workspace_root.string()},
            {"log_path", r.log_path.string()},
            {"seconds", r.seconds}};
}

}  // namespace skillloop
