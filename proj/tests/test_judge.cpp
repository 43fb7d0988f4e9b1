#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>

#include "twinforge/judge.hpp"

using namespace twinforge;
using namespace twinforge::judge;

namespace {

// Client whose transport replays `replies` in order.
std::unique_ptr<llm::ChatClient> scripted(std::vector<std::string> replies) {
    auto idx = std::make_shared<std::atomic<std::size_t>>(0);
    auto t = std::make_shared<llm::FunctionTransport>([replies, idx](const std::string&, const std::string&) {
        const auto i = idx->fetch_add(1);
        return llm::HttpResponse{200, llm::chat_completion_body(replies.at(std::min(i, replies.size() - 1)))};
    });
    return std::make_unique<llm::ChatClient>(llm::ClientOptions{}, t, std::make_shared<llm::FakeSleeper>());
}

TaskContext context() {
    return {"t1", std::string("x = 1\n"), std::string("https://api.example/doc"), "model-a", Variant::sft};
}

JudgeConfig config(int repeats = 1, JudgeMode mode = JudgeMode::ref_doc) {
    JudgeConfig c;
    c.mode = mode;
    c.judge_model = {"judge", "stub://judge", Variant::pretrain};
    c.repeats = repeats;
    return c;
}

}  // namespace

TEST(Rubric, DefaultSumsToHundred) {
    const auto r = RubricSpec::load_default();
    ASSERT_EQ(r.categories.size(), 6u);
    EXPECT_EQ(r.total(), 100);
    const int expected[] = {40, 30, 10, 10, 5, 5};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.categories[i].max_points, expected[i]);
}

TEST(Rubric, RenderListsCategoryTotals) {
    const auto text = RubricSpec::load_default().render();
    EXPECT_NE(text.find("(40 points total)"), std::string::npos);
    EXPECT_NE(text.find("5 to 10 points"), std::string::npos);
    EXPECT_EQ(text.find("{points}"), std::string::npos);
}

TEST(Rubric, BadSumRejected) {
    const nlohmann::json j = {{"categories", {{{"name", "a"}, {"max_points", 90}, {"rules", nlohmann::json::array()}}}}};
    EXPECT_THROW(RubricSpec::from_json(j), ConfigError);
}

TEST(Prompt, RefDocHasBothBlocks) {
    const auto p = build_judge_prompt("y = 2\n", std::string("x = 1\n"), std::string("doc-link"),
                                      RubricSpec::load_default(), JudgeMode::ref_doc);
    EXPECT_NE(p.find("[The Start of Assistant's Answer]"), std::string::npos);
    EXPECT_NE(p.find("[The Start of Reference Answer]"), std::string::npos);
    EXPECT_NE(p.find("doc-link"), std::string::npos);
    EXPECT_NE(p.find("y = 2"), std::string::npos);
}

TEST(Prompt, DocModeHasNoReferenceBlock) {
    const auto p = build_judge_prompt("y = 2\n", std::nullopt, std::string("doc-link"), RubricSpec::load_default(),
                                      JudgeMode::doc);
    EXPECT_EQ(p.find("[The Start of Reference Answer]"), std::string::npos);
}

TEST(Prompt, RefModeWithoutReferenceThrows) {
    EXPECT_THROW(build_judge_prompt("y", std::nullopt, std::nullopt, RubricSpec::load_default(), JudgeMode::ref),
                 MissingInput);
}

TEST(Extract, Examples) {
    EXPECT_EQ(extract_judge_score("deductions ... Final: [[87]]"), 87);
    EXPECT_EQ(extract_judge_score("[[40]] revised to [[55]]"), 55);
    EXPECT_THROW(extract_judge_score("score is 87"), ExtractionError);
    EXPECT_THROW(extract_judge_score("[[101]]"), ExtractionError);
}

TEST(Extract, RoundTripsEveryScore) {
    for (int v = 0; v <= 100; ++v) {
        ASSERT_EQ(extract_judge_score("Final score: [[" + std::to_string(v) + "]]"), v);
    }
}

TEST(JudgeCandidate, SingleRepeat) {
    auto client = scripted({"fine [[70]]"});
    const auto o = judge_candidate("y = 2\n", context(), config(), *client, RubricSpec::load_default());
    EXPECT_DOUBLE_EQ(o.report.value, 70.0);
    EXPECT_EQ(o.report.config, JudgeMode::ref_doc);
    EXPECT_EQ(o.report.metric_name, "judge");
}

TEST(JudgeCandidate, MeanOfRepeats) {
    auto client = scripted({"[[60]]", "[[80]]"});
    const auto o = judge_candidate("y = 2\n", context(), config(2), *client, RubricSpec::load_default());
    EXPECT_DOUBLE_EQ(o.report.value, 70.0);
    EXPECT_EQ(o.report.repeat_scores, (std::vector<double>{60, 80}));
}

TEST(JudgeCandidate, UnscoredRepeatExcluded) {
    auto client = scripted({"I cannot decide.", "[[50]]"});
    const auto o = judge_candidate("y = 2\n", context(), config(2), *client, RubricSpec::load_default());
    EXPECT_DOUBLE_EQ(o.report.value, 50.0);
    EXPECT_EQ(o.report.unscored, 1);
    EXPECT_EQ(o.raw_responses.size(), 2u);
}

TEST(JudgeCandidate, NoScoreAtAllFails) {
    auto client = scripted({"no marker"});
    EXPECT_THROW(judge_candidate("y", context(), config(), *client, RubricSpec::load_default()), JudgingFailure);
}

TEST(JudgeCandidate, StubEightySevenFormatsAsTwoDecimals) {
    auto client = scripted({"[[87]]"});
    const auto o = judge_candidate("y = 2\n", context(), config(), *client, RubricSpec::load_default());
    EXPECT_EQ(format_2dp(o.report.value), "87.00");
}

TEST(Aggregate, Examples) {
    ScoreReport r;
    r.model_id = "m";
    r.variant = Variant::sft;
    r.metric_name = "judge";
    r.config = JudgeMode::ref_doc;
    r.value = 68.03;
    r.sample_count = 1;
    auto rows = aggregate_scores({r});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(format_2dp(rows[0].mean), "68.03");

    ScoreReport a = r, b = r;
    a.value = 40;
    b.value = 60;
    rows = aggregate_scores({a, b});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(format_2dp(rows[0].mean), "50.00");
    EXPECT_EQ(rows[0].sample_count, 2);

    EXPECT_TRUE(aggregate_scores({}).empty());
}

TEST(Aggregate, ModesKeptApart) {
    ScoreReport a;
    a.model_id = "m";
    a.metric_name = "judge";
    a.config = JudgeMode::ref;
    a.value = 10;
    ScoreReport b = a;
    b.config = JudgeMode::doc;
    b.value = 20;
    EXPECT_EQ(aggregate_scores({a, b}).size(), 2u);
}
