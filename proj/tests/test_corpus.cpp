#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "twinforge/corpus.hpp"

using namespace twinforge;
using namespace twinforge::corpus;

namespace {

const StopWords& stop_words() {
    static const StopWords s = StopWords::load_default();
    return s;
}

ForumThread thread_of(std::size_t posts) {
    ForumThread t;
    t.subject = "Pendulum falls through floor";
    t.posts.push_back({"alice", "My pendulum falls through the ground body. What am I missing?"});
    for (std::size_t i = 1; i < posts; ++i) {
        t.posts.push_back({"user" + std::to_string(i),
                           "Enable collision on the ground body and give it a contact material, reply " +
                               std::to_string(i)});
    }
    return t;
}

std::size_t count_fences(const std::string& md) {
    std::size_t n = 0;
    std::istringstream in(md);
    for (std::string line; std::getline(in, line);) n += line.starts_with("```") ? 1 : 0;
    return n;
}

}  // namespace

TEST(ScriptToMarkdown, OneLineScript) {
    const RawDocument d{"print('hi')\n", DocKind::script, "demo.py"};
    const auto md = script_to_markdown(d);
    EXPECT_NE(md.find("demo.py"), std::string::npos);
    EXPECT_NE(md.find("script"), std::string::npos);
    EXPECT_EQ(count_fences(md), 2u);
    EXPECT_EQ(extract_fenced_block(md), d.body);
}

TEST(ScriptToMarkdown, FenceWidenedAroundBackticks) {
    const RawDocument d{"doc = '''\n```python\nx = 1\n```\n''' + '````'\n", DocKind::script, "tricky.py"};
    const auto md = script_to_markdown(d);
    EXPECT_NE(md.find("`````"), std::string::npos);
    EXPECT_EQ(extract_fenced_block(md), d.body);
}

TEST(ScriptToMarkdown, NoTrailingNewlineSurvives) {
    const RawDocument d{"a = 1", DocKind::script, "x.py"};
    EXPECT_EQ(extract_fenced_block(script_to_markdown(d)), "a = 1");
}

TEST(ScriptToMarkdown, WrongKindThrows) {
    EXPECT_THROW(script_to_markdown({"# page", DocKind::doc_page, "p.md"}), Error);
}

TEST(Forum, PairingRule) {
    EXPECT_EQ(ingest_forum_thread(thread_of(2), stop_words()).size(), 1u);
    EXPECT_TRUE(ingest_forum_thread(thread_of(1), stop_words()).empty());
    const auto pairs = ingest_forum_thread(thread_of(4), stop_words());
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& p : pairs) {
        EXPECT_EQ(p.question, thread_of(1).posts[0].body);
        EXPECT_TRUE(p.logic_valid);
    }
}

TEST(Forum, ShortOrSymbolOnlyAnswerIsInvalid) {
    ForumThread t = thread_of(1);
    t.posts.push_back({"bob", "thanks!"});
    t.posts.push_back({"carol", "?!?!?!?!?!?!?!?!?!?!?!?!?!"});
    const auto pairs = ingest_forum_thread(t, stop_words());
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_FALSE(pairs[0].logic_valid);
    EXPECT_FALSE(pairs[1].logic_valid);
}

TEST(Forum, PrivacyAppliedToAnswers) {
    ForumThread t = thread_of(1);
    t.posts.push_back({"bob", "Write to bob@example.com and I will send a working collision example."});
    const auto pairs = ingest_forum_thread(t, stop_words());
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_NE(pairs[0].answer.find("[EMAIL]"), std::string::npos);
    EXPECT_EQ(pairs[0].answer.find("bob@example.com"), std::string::npos);
    EXPECT_GE(pairs[0].redactions, 1u);
}

TEST(Keywords, Examples) {
    EXPECT_EQ(extract_keywords("the solver fails solver crash", 1, stop_words()), (std::vector<std::string>{"solver"}));
    EXPECT_TRUE(extract_keywords("", 3, stop_words()).empty());
    EXPECT_TRUE(extract_keywords("the and of a to", 3, stop_words()).empty());
    EXPECT_THROW(extract_keywords("x", 0, stop_words()), Error);
}

TEST(Keywords, TiesBrokenLexicographically) {
    EXPECT_EQ(extract_keywords("zeta alpha Beta beta alpha", 3, stop_words()),
              (std::vector<std::string>{"alpha", "beta", "zeta"}));
}

TEST(Redact, Examples) {
    const auto r = redact_private_info("mail me at a@b.com");
    EXPECT_EQ(r.text, "mail me at [EMAIL]");
    EXPECT_EQ(r.count, 1u);
    const auto clean = redact_private_info("set the time step to 0.01 and run 1000 steps");
    EXPECT_EQ(clean.text, "set the time step to 0.01 and run 1000 steps");
    EXPECT_EQ(clean.count, 0u);
    const auto three = redact_private_info("ping x.y@uni.edu or z@lab.org, or call +1 (608) 555-0199");
    EXPECT_EQ(three.count, 3u);
    EXPECT_NE(three.text.find("[PHONE]"), std::string::npos);
}

TEST(Redact, UrlWithUserQuery) {
    const auto r = redact_private_info("see https://forum.example.com/profile?user=jdoe for details");
    EXPECT_EQ(r.count, 1u);
    EXPECT_NE(r.text.find("[URL]"), std::string::npos);
    EXPECT_EQ(redact_private_info("docs at https://api.projectchrono.org/classes.html").count, 0u);
}

TEST(Redact, Idempotent) {
    const char* samples[] = {"mail a@b.com", "call 555-123-4567 now", "https://x.org/?email=q@r.s", "plain",
                             "[EMAIL] [PHONE] [URL]", "a@b.com,c@d.org;+44 20 7946 0958"};
    for (const char* s : samples) {
        const auto once = redact_private_info(s);
        const auto twice = redact_private_info(once.text);
        EXPECT_EQ(twice.text, once.text) << s;
        EXPECT_EQ(twice.count, 0u) << s;
    }
}

TEST(Shingles, HandEnumeratedJaccard) {
    EXPECT_EQ(shingle_strings("a b c d e", 2), (std::vector<std::string>{"a b", "b c", "c d", "d e"}));
    const auto a = make_shingles("a b c d e", 2), b = make_shingles("a b c d f", 2);
    EXPECT_NEAR(jaccard(a, b), 0.6, 1e-12);
    EXPECT_NEAR(jaccard(b, a), 0.6, 1e-12);
    EXPECT_EQ(jaccard(a, a), 1.0);
    EXPECT_EQ(jaccard(make_shingles("p q r", 2), make_shingles("x y z", 2)), 0.0);
}

TEST(Shingles, ShortTextIsOneShingle) {
    EXPECT_EQ(shingle_strings("Hello   World", 5), (std::vector<std::string>{"hello world"}));
}

TEST(Dedup, ThresholdBoundary) {
    const std::vector<RawDocument> docs = {{"a b c d e", DocKind::doc_page, "1"}, {"a b c d f", DocKind::doc_page, "2"}};
    DedupOptions o;
    o.shingle_width = 2;
    for (double t : {0.5, 0.6}) {
        o.threshold = t;
        const auto r = dedup_corpus(docs, o);
        ASSERT_EQ(r.kept.size(), 1u) << t;
        EXPECT_EQ(r.kept[0].id, "1");
        ASSERT_EQ(r.removals.size(), 1u);
        EXPECT_EQ(r.removals[0].removed_id, "2");
        EXPECT_EQ(r.removals[0].witness_id, "1");
        EXPECT_NEAR(r.removals[0].similarity, 0.6, 1e-12);
        EXPECT_EQ(r.removals[0].reason, "near_duplicate");
    }
    o.threshold = 0.61;
    EXPECT_EQ(dedup_corpus(docs, o).kept.size(), 2u);
}

TEST(Dedup, ExactDuplicateAlwaysRemoved) {
    const std::vector<RawDocument> docs = {{"x  y z", DocKind::script, "b"}, {"x y\n z", DocKind::script, "a"}};
    DedupOptions o;
    o.threshold = 1.0;
    const auto r = dedup_corpus(docs, o);
    ASSERT_EQ(r.kept.size(), 1u);
    EXPECT_EQ(r.kept[0].id, "a");
    EXPECT_EQ(r.removals[0].reason, "exact_duplicate");
}

TEST(Dedup, NoSurvivingPairAtOrAboveThreshold) {
    std::mt19937_64 rng(11);
    const char* vocab[] = {"a", "b", "c", "d", "e", "f"};
    std::vector<RawDocument> docs;
    for (int i = 0; i < 40; ++i) {
        std::string body;
        const int len = std::uniform_int_distribution<int>(3, 8)(rng);
        for (int j = 0; j < len; ++j) body += std::string(vocab[std::uniform_int_distribution<int>(0, 5)(rng)]) + " ";
        docs.push_back({body, DocKind::doc_page, "d" + std::to_string(100 + i)});
    }
    DedupOptions o;
    o.shingle_width = 2;
    o.threshold = 0.5;
    const auto r = dedup_corpus(docs, o);
    EXPECT_EQ(r.kept.size() + r.removals.size(), docs.size());
    for (std::size_t i = 0; i < r.kept.size(); ++i)
        for (std::size_t j = i + 1; j < r.kept.size(); ++j)
            ASSERT_LT(jaccard(make_shingles(r.kept[i].body, 2), make_shingles(r.kept[j].body, 2)), 0.5);
}

TEST(Dedup, InvalidOptionsThrow) {
    DedupOptions o;
    o.shingle_width = 0;
    EXPECT_THROW(dedup_corpus({}, o), Error);
    o.shingle_width = 2;
    o.threshold = 0.0;
    EXPECT_THROW(dedup_corpus({}, o), Error);
    o.threshold = 1.5;
    EXPECT_THROW(dedup_corpus({}, o), Error);
}

TEST(MinHash, EstimatesJaccard) {
    const auto a = make_shingles("the quick brown fox jumps over the lazy dog near the river bank", 2);
    const auto b = make_shingles("the quick brown fox jumps over the lazy cat near the river bank", 2);
    const double est = minhash_similarity(minhash_signature(a, 256), minhash_signature(b, 256));
    EXPECT_NEAR(est, jaccard(a, b), 0.15);
}

TEST(Loading, FixtureCorpus) {
    const std::filesystem::path root = TWINFORGE_FIXTURES;
    const auto scripts = load_documents(root / "corpus" / "scripts", DocKind::script, {".py"});
    ASSERT_EQ(scripts.size(), 12u);
    EXPECT_EQ(scripts[0].id, "00_pendulum.py");
    const auto threads = load_forum_export(root / "corpus" / "forum.json");
    EXPECT_EQ(threads.size(), 3u);
    EXPECT_THROW(load_forum_export(root / "missing.json"), IoError);
}
