#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "twinforge/synthesis.hpp"

using namespace twinforge;
using namespace twinforge::synthesis;

namespace {

std::unique_ptr<llm::ChatClient> scripted(std::vector<std::string> replies) {
    auto idx = std::make_shared<std::atomic<std::size_t>>(0);
    auto t = std::make_shared<llm::FunctionTransport>([replies, idx](const std::string&, const std::string&) {
        const auto i = idx->fetch_add(1);
        return llm::HttpResponse{200, llm::chat_completion_body(replies.at(std::min(i, replies.size() - 1)))};
    });
    return std::make_unique<llm::ChatClient>(llm::ClientOptions{}, t, std::make_shared<llm::FakeSleeper>());
}

SynthesisOptions options() {
    SynthesisOptions o;
    o.model = {"gen", "stub://gen", Variant::pretrain};
    o.source_document = "doc:test.md";
    o.timestamp = parse_timestamp("2024-06-01T00:00:00Z");
    return o;
}

nlohmann::json qa(const std::string& instruction, const std::string& output) {
    return {{"instruction", instruction}, {"input", ""}, {"output", output}};
}

nlohmann::json debug_item(const std::string& buggy, const std::string& fixed, const std::string& why,
                          std::optional<std::string> tag = std::nullopt) {
    nlohmann::json j = {{"instruction", "My script misbehaves:\n```python\n" + buggy + "\n```"},
                        {"input", ""},
                        {"output", why + "\n```python\n" + fixed + "\n```"}};
    if (tag) j["bug_category"] = *tag;
    return j;
}

}  // namespace

TEST(Template, RendersContextualPrompt) {
    const auto tpl = load_template(TemplateKind::contextual_qa);
    EXPECT_EQ(tpl.placeholders, (std::vector<std::string>{"num_pairs", "markdown_content"}));
    const auto p = render_prompt_template(tpl, {{"num_pairs", "3"}, {"markdown_content", "X"}});
    EXPECT_NE(p.find("Generate 3 Q&A pairs"), std::string::npos);
    EXPECT_NE(p.find("X"), std::string::npos);
    EXPECT_EQ(p.find("{num_pairs}"), std::string::npos);
    EXPECT_EQ(p.find("{markdown_content}"), std::string::npos);
}

TEST(Template, BindingsAreLiteral) {
    const auto tpl = PromptTemplate::from_text(TemplateKind::contextual_qa, "t", "A {x} B {y}");
    EXPECT_EQ(render_prompt_template(tpl, {{"x", "{y}"}, {"y", "$1 \\n"}}), "A {y} B $1 \\n");
}

TEST(Template, EscapedBracesAndStrayBraces) {
    const auto tpl = PromptTemplate::from_text(TemplateKind::contextual_qa, "t", "{{\"k\": {v}}} { not } {");
    EXPECT_EQ(tpl.placeholders, (std::vector<std::string>{"v"}));
    EXPECT_EQ(render_prompt_template(tpl, {{"v", "1"}}), "{\"k\": 1} { not } {");
}

TEST(Template, MissingBindingNamesPlaceholder) {
    const auto tpl = load_template(TemplateKind::expert_qa);
    try {
        render_prompt_template(tpl, {{"num_pairs", "2"}});
        FAIL() << "expected UnboundPlaceholder";
    } catch (const UnboundPlaceholder& e) {
        EXPECT_STREQ(e.what(), "unbound: markdown_content");
    }
}

TEST(ParseJson, AcceptsArrayFenceAndConcatenation) {
    EXPECT_EQ(parse_json_objects("[{\"a\":1},{\"a\":2}]").size(), 2u);
    EXPECT_EQ(parse_json_objects("```json\n{\"a\":1}\n```").size(), 1u);
    EXPECT_EQ(parse_json_objects("{\"a\":1}\n{\"a\":2}\n{\"a\":3}").size(), 3u);
    EXPECT_TRUE(parse_json_objects("Sure, here you go.").empty());
}

TEST(QaSynthesis, TwoValidObjects) {
    auto client = scripted({nlohmann::json::array({qa("How do I add a body?", "Call sys.Add(body)."),
                                                   qa("How do I set gravity?", "Use SetGravitationalAcceleration.")})
                                .dump()});
    const auto r = synthesize_qa_pairs("# doc", 2, TemplateKind::expert_qa, *client, options());
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_FALSE(r.failure);
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.category, Category::nl2api);
        EXPECT_EQ(rec.provenance.origin, Origin::llm_generated);
        EXPECT_EQ(rec.provenance.generator_model, "gen");
        EXPECT_EQ(rec.provenance.source_document, "doc:test.md");
        EXPECT_TRUE(validate_record(rec).ok());
    }
}

TEST(QaSynthesis, ContextualKindIsSim) {
    auto client = scripted({qa("q", "a").dump()});
    const auto r = synthesize_qa_pairs("# doc", 1, TemplateKind::contextual_qa, *client, options());
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].category, Category::sim);
}

TEST(QaSynthesis, ProseOnEveryRetryIsFailure) {
    auto client = scripted({"I am sorry, I cannot help with that."});
    auto o = options();
    o.retries = 2;
    const auto r = synthesize_qa_pairs("# doc", 2, TemplateKind::contextual_qa, *client, o);
    EXPECT_TRUE(r.records.empty());
    ASSERT_TRUE(r.failure);
    EXPECT_EQ(r.failure->attempts, 3);
    EXPECT_EQ(r.failure->source_document, "doc:test.md");
    EXPECT_EQ(client->upstream_calls(), 3u);
}

TEST(QaSynthesis, RetryRecoversAfterProse) {
    auto client = scripted({"no json here", qa("q", "a").dump()});
    const auto r = synthesize_qa_pairs("# doc", 1, TemplateKind::contextual_qa, *client, options());
    EXPECT_EQ(r.records.size(), 1u);
    EXPECT_FALSE(r.failure);
}

TEST(QaSynthesis, InvalidObjectDroppedWithReason) {
    auto client = scripted(
        {nlohmann::json::array({qa("q1", "a1"), qa("q2", ""), qa("q3", "a3")}).dump()});
    const auto r = synthesize_qa_pairs("# doc", 3, TemplateKind::contextual_qa, *client, options());
    EXPECT_EQ(r.records.size(), 2u);
    ASSERT_EQ(r.dropped.size(), 1u);
    EXPECT_FALSE(r.dropped[0].reason.empty());
}

TEST(QaSynthesis, AtMostNumPairs) {
    auto client = scripted({nlohmann::json::array({qa("q1", "a1"), qa("q2", "a2"), qa("q3", "a3")}).dump()});
    EXPECT_EQ(synthesize_qa_pairs("# doc", 2, TemplateKind::contextual_qa, *client, options()).records.size(), 2u);
}

TEST(DebugSynthesis, MisspelledSystemExample) {
    const nlohmann::json item = {
        {"instruction",
         "This code isn't working correctly, and I can't figure out why:\npython\n# Create Chrono system\n"
         "system = chrono.ChSystemNCS()\n\nsystem.SetCollisionSystemType(chrono.ChCollisionSystem.Type_BULLET)\n\n"
         "system.SetGravitationalAcceleration(chrono.ChVector3d(0, 0, -9.81))\n\n"},
        {"input", ""},
        {"output",
         "The error here is a typo in the system initialization function. The correct function is "
         "'ChSystemNSC()' (Non-Smooth Contacts), not 'ChSystemNCS()'. Here's the corrected code:\n\npython\n"
         "system = chrono.ChSystemNSC()\n\nsystem.SetCollisionSystemType(chrono.ChCollisionSystem.Type_BULLET)\n\n"
         "system.SetGravitationalAcceleration(chrono.ChVector3d(0, 0, -9.81))\n\n"
         "The corrected code now initializes the system properly for non-smooth contacts."}};
    auto client = scripted({item.dump()});
    const auto r = synthesize_debug_pairs("# script", 1, *client, options());
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].category, Category::debug);
    EXPECT_EQ(r.records[0].metadata.at("bug_category"), "misspelled_api");
}

TEST(DebugSynthesis, IdenticalCodeDropped) {
    auto client = scripted({debug_item("sys = chrono.ChSystemNSC()", "sys = chrono.ChSystemNSC()", "Looks fine.").dump()});
    const auto r = synthesize_debug_pairs("# script", 1, *client, options());
    EXPECT_TRUE(r.records.empty());
    ASSERT_EQ(r.dropped.size(), 1u);
    EXPECT_EQ(r.dropped[0].reason, "buggy code equals corrected code");
}

TEST(DebugSynthesis, SevenCategoriesCovered) {
    const std::vector<nlohmann::json> items = {
        debug_item("sys.SetStep(0.01)\nsys = chrono.ChSystemNSC()", "sys = chrono.ChSystemNSC()\nsys.SetStep(0.01)",
                   "You call SetStep before the system exists, which is API misuse."),
        debug_item("sys = chrono.ChSystemNCS()", "sys = chrono.ChSystemNSC()", "A typo in the class name."),
        debug_item("body.SetMass('1.0')", "body.SetMass(1.0)", "You pass a string instead of a float."),
        debug_item("body = chrono.ChBody()", "body = chrono.ChBody()\nbody.SetPos(chrono.ChVector3d(0, 1, 0))",
                   "The body position is never set."),
        debug_item("joint.SetFixed(True)", "joint.SetFixed(False)", "Every joint is fixed so nothing moves."),
        debug_item("body.SetMass(-5)", "body.SetMass(5)", "A negative mass is physically meaningless."),
        debug_item("sys.DoStepDynamics(1.0)", "sys.DoStepDynamics(0.01)", "The time step is far too large."),
    };
    auto client = scripted({nlohmann::json(items).dump()});
    const auto r = synthesize_debug_pairs("# script", 7, *client, options());
    ASSERT_EQ(r.records.size(), 7u);
    std::set<std::string> seen;
    for (const auto& rec : r.records) seen.insert(rec.metadata.at("bug_category"));
    EXPECT_EQ(seen.size(), 7u);
    for (auto b : kAllBugCategories) EXPECT_TRUE(seen.count(std::string(to_string(b)))) << to_string(b);
}

TEST(DebugSynthesis, ExplicitTagWins) {
    EXPECT_EQ(classify_bug(debug_item("a = 1", "a = 2", "A typo.", "Unreasonable Time Step")),
              BugCategory::unreasonable_time_step);
    EXPECT_EQ(parse_bug_label("Misspelled API Names"), BugCategory::misspelled_api);
    EXPECT_FALSE(parse_bug_label("weather"));
}

TEST(Migration, TableRows) {
    const auto table = MigrationTable::load_default();
    auto r = migrate_api_identifiers("chrono.ChVectorD(1,2,3)", table, Direction::old_to_new);
    EXPECT_EQ(r.code, "chrono.ChVector3d(1,2,3)");
    ASSERT_EQ(r.rewrites.size(), 1u);
    EXPECT_EQ(r.rewrites[0].offset, 0u);
    r = migrate_api_identifiers("ground.SetBodyFixed(True)", table, Direction::old_to_new);
    EXPECT_EQ(r.code, "ground.SetFixed(True)");
    r = migrate_api_identifiers("x = my_func(2)\n", table, Direction::old_to_new);
    EXPECT_EQ(r.code, "x = my_func(2)\n");
    EXPECT_TRUE(r.rewrites.empty());
}

TEST(Migration, NoPartialIdentifierMatch) {
    const auto table = MigrationTable::load_default();
    const auto r = migrate_api_identifiers("chrono.ChVectorDX(1)\nmychrono.ChVectorD(1)\n", table, Direction::old_to_new);
    EXPECT_TRUE(r.rewrites.empty());
}

TEST(Migration, InvolutionAndNoOldLeft) {
    const auto table = MigrationTable::load_default();
    std::string code;
    for (const auto& rule : table.rules()) code += "v = " + rule.old_pattern + "(1)\n";
    code += "w = " + table.rules()[0].old_pattern + "(" + table.rules()[1].old_pattern + "(0))\n";
    const auto fwd = migrate_api_identifiers(code, table, Direction::old_to_new);
    EXPECT_EQ(fwd.rewrites.size(), table.rules().size() + 2);
    const auto back = migrate_api_identifiers(fwd.code, table, Direction::new_to_old);
    EXPECT_EQ(back.code, code);
    const auto again = migrate_api_identifiers(fwd.code, table, Direction::old_to_new);
    EXPECT_TRUE(again.rewrites.empty());
}

TEST(Migration, DuplicatePatternRejected) {
    EXPECT_THROW(MigrationTable({{"a.B", "a.C"}, {"a.B", "a.D"}}), ConfigError);
}

TEST(Icl, EmptySectionsGiveTaskPrompt) {
    IclContextPack pack;
    EXPECT_EQ(build_icl_context(pack, "Write a pendulum.").prompt, "Write a pendulum.");
}

TEST(Icl, SectionsInFixedOrder) {
    IclContextPack pack;
    for (auto s : kIclOrder) pack.sections[s] = "example for " + std::string(to_string(s));
    const auto out = build_icl_context(pack, "TASK");
    EXPECT_TRUE(out.dropped.empty());
    std::size_t last = 0;
    for (auto s : kIclOrder) {
        const auto pos = out.prompt.find(section_title(s));
        ASSERT_NE(pos, std::string::npos) << section_title(s);
        EXPECT_GT(pos, last);
        last = pos;
    }
    EXPECT_GT(out.prompt.rfind("TASK"), last);
}

TEST(Icl, TightBudgetDropsSimulationLoopFirst) {
    IclContextPack pack;
    for (auto s : kIclOrder) pack.sections[s] = std::string(200, 'x');
    const auto full = build_icl_context(pack, "TASK");
    // 200 characters is 50 tokens; 10 below the full size forces exactly one drop.
    pack.token_budget = full.estimated_tokens - 10;
    const auto out = build_icl_context(pack, "TASK");
    EXPECT_EQ(out.dropped, (std::vector<IclSection>{IclSection::simulation_loop}));
    EXPECT_EQ(out.prompt.find(section_title(IclSection::simulation_loop)), std::string::npos);
    EXPECT_NE(out.prompt.find(section_title(IclSection::joints)), std::string::npos);
    EXPECT_LE(out.estimated_tokens, pack.token_budget);
}

TEST(Icl, BudgetBelowTaskThrows) {
    IclContextPack pack;
    pack.token_budget = 1;
    EXPECT_THROW(build_icl_context(pack, "a much longer task prompt"), Error);
}

TEST(Icl, TokenEstimate) {
    EXPECT_EQ(estimate_tokens(""), 0u);
    EXPECT_EQ(estimate_tokens("abcd"), 1u);
    EXPECT_EQ(estimate_tokens("abcde"), 2u);
    EXPECT_EQ(estimate_tokens("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9"), 1u);
}
