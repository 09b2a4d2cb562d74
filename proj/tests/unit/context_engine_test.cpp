#include "test_support.hpp"
#include "unit_helpers.hpp"

#include "skillloop/context_engine.hpp"
#include "skillloop/mock_provider.hpp"

using namespace skillloop;
using namespace testsupport;

namespace {

Message msg(Role role, std::string content, std::uint64_t turn = 0) {
    Message m;
    m.role = role;
    m.content = std::move(content);
    m.turn_index = turn;
    return m;
}

History chatter(std::size_t n, std::size_t chars) {
    History h;
    for (std::size_t i = 0; i < n; ++i) {
        h.push_back(msg(i % 2 ? Role::Assistant : Role::User, std::string(chars, 'a' + static_cast<char>(i % 26)), i));
    }
    return h;
}

}  // namespace

TEST(TokenEstimate, HeuristicValues) {
    EXPECT_EQ(estimate_tokens(std::string_view(std::string(400, 'x'))), 100u);
    EXPECT_EQ(heuristic_message_tokens(msg(Role::User, std::string(400, 'x'))), 104u);
    EXPECT_EQ(heuristic_message_tokens(msg(Role::User, "")), 4u);
    EXPECT_EQ(heuristic_message_tokens(msg(Role::User, "abcde")), 6u);
    Message call = msg(Role::Assistant, "");
    call.tool_calls.push_back({"c1", "abcd", "{\"a\":1}"});  // 4 + 7 chars
    EXPECT_EQ(heuristic_message_tokens(call), 3u + 4u);
}

TEST(TokenEstimate, AdditiveOverMessages) {
    std::mt19937_64 rng(1);
    auto h = random_history(rng, 40, 50);
    std::size_t sum = 0;
    for (const auto& m : h) sum += heuristic_message_tokens(m);
    EXPECT_EQ(estimate_tokens(h), sum);
    History a(h.begin(), h.begin() + 17), b(h.begin() + 17, h.end());
    EXPECT_EQ(estimate_tokens(a) + estimate_tokens(b), estimate_tokens(h));
}

TEST(ShouldCompress, StrictlyAboveBudget) {
    ContextBudget budget;
    History h;
    for (int i = 0; i < 640; ++i) h.push_back(msg(Role::User, std::string(384, 'x'), i));  // 100 tokens each
    ASSERT_EQ(estimate_tokens(h), 64000u);
    EXPECT_FALSE(should_compress(h, budget));
    h.back().content += "y";
    ASSERT_EQ(estimate_tokens(h), 64001u);
    EXPECT_TRUE(should_compress(h, budget));
}

TEST(Assets, ExtractsKindsInOrder) {
    auto a = extract_assets("See https://example.com/cat.pdf, and ![chart](https://x.io/c.png \"t\") plus ./img/photo.JPG.", 3);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0], (Asset{Asset::Kind::ExternalUrl, "https://example.com/cat.pdf", 3}));
    EXPECT_EQ(a[1], (Asset{Asset::Kind::ImageReference, "https://x.io/c.png", 3}));
    EXPECT_EQ(a[2].kind, Asset::Kind::ImageReference);
    EXPECT_EQ(a[2].value, "./img/photo.JPG");
}

TEST(Assets, IndexDeduplicatesAndCollectsSkillLoadsAndKeyData) {
    History h;
    h.push_back(msg(Role::User, "catalog https://a.com/x and https://a.com/x again", 0));
    h = inject_skill(h, make_skill("export-quotation", "quotes", {"q"}));
    Message tool = msg(Role::Tool, "rate table", 3);
    tool.tool_call_id = "t1";
    tool.key_data = {"FOB Ningbo 12.40 USD", "FOB Ningbo 12.40 USD"};
    h.push_back(tool);
    auto idx = extract_asset_index(h);
    ASSERT_EQ(idx.size(), 3u);
    EXPECT_EQ(idx[0], (Asset{Asset::Kind::ExternalUrl, "https://a.com/x", 0}));
    EXPECT_EQ(idx[1], (Asset{Asset::Kind::SkillReference, "export-quotation", 1}));
    EXPECT_EQ(idx[2], (Asset{Asset::Kind::KeyData, "FOB Ningbo 12.40 USD", 3}));
}

TEST(InjectSkill, CallIdsAreUniqueAndPaired) {
    auto skill = make_skill("s", "d", {"x"}, "Step one.\n");
    skill.refs["rates.md"] = "references/rates.md";
    auto h = inject_skill({}, skill);
    ASSERT_EQ(h.size(), 2u);
    EXPECT_EQ(h[0].tool_calls.at(0).id, "skill_load");
    EXPECT_EQ(h[0].tool_calls.at(0).name, "skill_loader");
    EXPECT_EQ(h[1].tool_call_id, "skill_load");
    EXPECT_NE(h[1].content.find("Step one."), std::string::npos);
    EXPECT_NE(h[1].content.find("rates.md"), std::string::npos);
    h = inject_skill(h, skill);
    EXPECT_EQ(h[2].tool_calls.at(0).id, "skill_load_2");
    EXPECT_EQ(h[3].tool_call_id, "skill_load_2");
    h = inject_skill(h, skill);
    EXPECT_EQ(h[4].tool_calls.at(0).id, "skill_load_3");
}

TEST(Instructions, LayerOrderAndDirectives) {
    auto skill = make_skill("quote", "Build quotes", {"q"});
    auto text = build_instructions("SOULTEXT", "USERTEXT", "MEMTEXT", &skill, true);
    auto s = text.find("SOULTEXT"), u = text.find("USERTEXT"), m = text.find("MEMTEXT");
    auto k = text.find("name: quote"), o = text.find("ONBOARDING"), g = text.find("RESPONSE GUIDANCE");
    ASSERT_NE(g, std::string::npos);
    EXPECT_TRUE(s < u && u < m && m < k && k < o && o < g);
    auto plain = build_instructions("S", "U", "M", nullptr, false);
    EXPECT_EQ(plain.find("ACTIVE SKILL"), std::string::npos);
    EXPECT_EQ(plain.find("ONBOARDING"), std::string::npos);
    EXPECT_NE(plain.find("1-2"), std::string::npos);
}

TEST(Summary, NormalizesToNineHeadings) {
    auto out = normalize_summary("preface\n# 3) decisions made\nship FOB\n## Rogue\n#### deep\n");
    for (const auto& h : summary_headings()) {
        auto first = out.find(h);
        ASSERT_NE(first, std::string::npos) << h;
        EXPECT_EQ(out.find(h, first + 1), std::string::npos) << h;
    }
    EXPECT_NE(out.find("## 1. Session Intent\npreface"), std::string::npos);
    EXPECT_NE(out.find("## 3. Decisions Made\nship FOB\n### Rogue\n#### deep"), std::string::npos);
    EXPECT_NE(out.find("## 9. Asset References\n(none)\n"), std::string::npos);
}

TEST(CompressionSplit, KeepsRecentAndNeverOrphansToolResults) {
    ContextBudget b;
    b.retain_recent = 3;
    auto h = chatter(8, 10);
    EXPECT_EQ(compression_split(h, b), 5u);
    h[5].role = Role::Tool;
    h[4].role = Role::Tool;
    EXPECT_EQ(compression_split(h, b), 3u);
    EXPECT_EQ(compression_split(chatter(3, 10), b), 0u);
    auto all_tools = chatter(5, 10);
    for (auto& m : all_tools) m.role = Role::Tool;
    EXPECT_EQ(compression_split(all_tools, b), 0u);
}

TEST(Compress, ProducesSummaryPlusTailAndCarriesAssets) {
    std::mt19937_64 rng(9);
    auto h = random_history(rng, 60, 300);
    ContextBudget b;
    b.max_tokens = 2048;
    MockChatProvider chat;
    auto before = extract_asset_index(h);
    auto r = compress_history(h, {}, b, chat);
    EXPECT_EQ(r.state.level, 1u);
    EXPECT_LT(estimate_tokens(r.history), estimate_tokens(h));
    EXPECT_EQ(r.history.front().role, Role::System);
    auto split = compression_split(h, b);
    EXPECT_TRUE(std::equal(h.begin() + static_cast<std::ptrdiff_t>(split), h.end(), r.history.begin() + 1,
                           r.history.end()));
    EXPECT_EQ(r.state.retained_from, h[split].turn_index);
    auto after = extract_asset_index(r.history);
    for (const auto& a : before) {
        EXPECT_TRUE(std::any_of(after.begin(), after.end(),
                                [&](const Asset& x) { return x.kind == a.kind && x.value == a.value; }))
            << asset_kind_name(a.kind) << " " << a.value;
    }
    // Second pass folds the first summary in and raises the level.
    h = r.history;
    for (int i = 0; i < 30; ++i) h.push_back(msg(Role::User, std::string(300, 'z'), 1000 + i));
    auto r2 = compress_history(h, r.state, b, chat);
    EXPECT_EQ(r2.state.level, 2u);
    auto after2 = extract_asset_index(r2.history);
    for (const auto& a : before) {
        EXPECT_TRUE(std::any_of(after2.begin(), after2.end(),
                                [&](const Asset& x) { return x.kind == a.kind && x.value == a.value; }));
    }
}

TEST(Compress, ProviderFailureLeavesInputsUntouched) {
    std::mt19937_64 rng(4);
    auto h = random_history(rng, 40, 200);
    auto digest = history_digest(h);
    CompressionState st;
    st.level = 2;
    st.summary = "old";
    auto st_copy = st;
    MockChatProvider chat;
    chat.fail_next(1);
    expect_error(ErrorCode::CompressionFailed, [&] { compress_history(h, st, {}, chat); });
    EXPECT_EQ(history_digest(h), digest);
    EXPECT_EQ(st, st_copy);
}

TEST(Compress, RefusesWhenSummaryWouldNotShrink) {
    auto h = chatter(12, 4);
    ContextBudget b;
    b.retain_recent = 10;
    MockChatProvider chat;
    chat.enqueue(ChatPurpose::Summary, msg(Role::Assistant, std::string(5000, 's')));
    expect_error(ErrorCode::CompressionFailed, [&] { compress_history(h, {}, b, chat); });
    expect_error(ErrorCode::CompressionFailed, [&] { compress_history(chatter(5, 4), {}, b, chat); });
}
