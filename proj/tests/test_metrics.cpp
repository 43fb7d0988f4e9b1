#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "twinforge/metrics.hpp"
#include "twinforge/text.hpp"

using namespace twinforge;
using namespace twinforge::metrics;

namespace {
const syntax::PythonGrammar& grammar() {
    static const syntax::PythonGrammar g;
    return g;
}
}  // namespace

TEST(Rouge, HandComputedCases) {
    for (const auto& c : oracle::rouge_cases()) {
        const auto s = rouge_score(c.candidate, c.reference, parse_rouge_variant(c.variant));
        EXPECT_NEAR(s.f1, c.f1, 1e-9) << c.variant << " '" << c.candidate << "' vs '" << c.reference << "'";
    }
}

TEST(Rouge, LcsMatchesSubsetOracleUpToTwelveTokens) {
    std::mt19937_64 rng(7);
    for (std::size_t la = 0; la <= 12; ++la) {
        for (std::size_t lb = 0; lb <= 12; ++lb) {
            for (int rep = 0; rep < 6; ++rep) {
                const auto a = oracle::random_tokens(rng, la, 3);
                const auto b = oracle::random_tokens(rng, lb, 3);
                ASSERT_EQ(lcs_length(a, b), oracle::lcs_by_subsets(a, b));
            }
        }
    }
}

TEST(Rouge, LcsExhaustiveBinaryShort) {
    for (std::size_t la = 0; la <= 5; ++la) {
        for (std::uint32_t ma = 0; ma < (1u << la); ++ma) {
            std::vector<std::string> a;
            for (std::size_t i = 0; i < la; ++i) a.push_back((ma >> i) & 1 ? "x" : "y");
            for (std::size_t lb = 0; lb <= 5; ++lb) {
                for (std::uint32_t mb = 0; mb < (1u << lb); ++mb) {
                    std::vector<std::string> b;
                    for (std::size_t i = 0; i < lb; ++i) b.push_back((mb >> i) & 1 ? "x" : "y");
                    ASSERT_EQ(lcs_length(a, b), oracle::lcs_by_subsets(a, b));
                }
            }
        }
    }
}

TEST(Rouge, EmptyCandidateScoresZero) {
    EXPECT_EQ(rouge_score("", "the cat", RougeVariant::rouge1).f1, 0.0);
}

TEST(Rouge, UnknownVariantThrows) { EXPECT_THROW(parse_rouge_variant("rouge9"), Error); }

TEST(Bleu, IdentityIsExactlyOne) {
    EXPECT_EQ(bleu_score("the quick brown fox jumps over the lazy dog", "the quick brown fox jumps over the lazy dog"),
              1.0);
    const auto toks = text::split_whitespace(oracle::kRenameReference);
    EXPECT_EQ(bleu_tokens(toks, toks), 1.0);
}

TEST(Bleu, DisjointIsNearZero) { EXPECT_LT(bleu_score("a b c d e", "v w x y z"), 1e-6); }

TEST(Bleu, BrevityPenaltyApplies) {
    // Candidate is a prefix: all precisions 1, BP = exp(1 - 8/6).
    const Tokens ref = {"a", "b", "c", "d", "e", "f", "g", "h"};
    const Tokens cand = {"a", "b", "c", "d", "e", "f"};
    EXPECT_NEAR(bleu_tokens(cand, ref), std::exp(1.0 - 8.0 / 6.0), 1e-12);
}

TEST(Bleu, WeightedEqualsPlainWithoutKeywords) {
    const Tokens ref = {"x", "=", "f", "(", "y", ")"};
    const Tokens cand = {"x", "=", "g", "(", "y", ")"};
    EXPECT_NEAR(weighted_bleu_tokens(cand, ref, {}), bleu_tokens(cand, ref), 1e-12);
}

TEST(Ngram, ProfileCounts) {
    const NgramProfile p({"a", "b", "a", "b"}, 2);
    EXPECT_EQ(p.count({"a"}), 2);
    EXPECT_EQ(p.count({"a", "b"}), 2);
    EXPECT_EQ(p.count({"b", "a"}), 1);
    EXPECT_EQ(p.total(2), 3);
}

TEST(SyntaxMatch, AgreesWithStringOracle) {
    const char* programs[] = {
        "x = 1\n",
        "x = f(a)\n",
        "y = g(b, c)\nprint(y)\n",
        "for i in range(3):\n    total += i\n",
        "def f(a, b=2):\n    return a + b\n",
        "if x > 1:\n    y = [i for i in z]\nelse:\n    y = {}\n",
        oracle::kRenameReference,
    };
    for (const char* a : programs) {
        for (const char* b : programs) {
            const auto ta = syntax::parse_python(a);
            const auto tb = syntax::parse_python(b);
            EXPECT_NEAR(syntax_match(ta, tb), oracle::syntax_match_by_strings(ta, tb), 1e-12) << a << " vs " << b;
        }
    }
}

TEST(SyntaxMatch, SubtreesListEveryInternalNode) {
    const auto t = syntax::parse_python("x = f(a)\n");
    std::multiset<std::string> expected;
    oracle::subtree_strings(t, expected);
    const auto got = internal_subtrees(t);
    EXPECT_EQ(std::multiset<std::string>(got.begin(), got.end()), expected);
}

TEST(Dataflow, NoEdgesIsNotApplicable) {
    const auto t = syntax::parse_python("print(1)\n");
    EXPECT_FALSE(dataflow_match(grammar().dataflow(t), grammar().dataflow(t)).has_value());
}

TEST(Dataflow, MultisetMatch) {
    syntax::DataflowGraph ref{{{0, 0, 1}, {0, 0, 1}, {1, 0, 2}}};
    syntax::DataflowGraph cand{{{0, 0, 1}, {1, 0, 2}}};
    EXPECT_NEAR(*dataflow_match(cand, ref), 2.0 / 3.0, 1e-12);
}

TEST(CodeBleu, IdentityIsExactlyOne) {
    const auto r = codebleu_score(oracle::kRenameReference, oracle::kRenameReference, grammar());
    EXPECT_EQ(r.total, 1.0);
    EXPECT_EQ(r.bleu, 1.0);
    EXPECT_EQ(r.weighted_bleu, 1.0);
    EXPECT_EQ(r.syntax, 1.0);
    ASSERT_TRUE(r.dataflow);
    EXPECT_EQ(*r.dataflow, 1.0);
}

TEST(CodeBleu, RenamedVariablesKeepStructure) {
    const auto r = codebleu_score(oracle::kRenameCandidate, oracle::kRenameReference, grammar());
    EXPECT_EQ(r.syntax, 1.0);
    ASSERT_TRUE(r.dataflow);
    EXPECT_EQ(*r.dataflow, 1.0);
    EXPECT_LT(r.bleu, 1.0);
    EXPECT_LT(r.weighted_bleu, 1.0);
}

TEST(CodeBleu, ComponentsSumToTotal) {
    const char* cands[] = {oracle::kRenameCandidate, "import pychrono as chrono\nsys = chrono.ChSystemNSC()\n",
                           "x = (\n"};
    for (const char* c : cands) {
        const auto r = codebleu_score(c, oracle::kRenameReference, grammar());
        const double sum = r.weights.bleu * r.bleu + r.weights.weighted_bleu * r.weighted_bleu +
                           r.weights.syntax * r.syntax + r.weights.dataflow * r.dataflow.value_or(0.0);
        EXPECT_NEAR(sum, r.total, 1e-12);
    }
}

TEST(CodeBleu, UnparseableCandidateScoresZeroStructure) {
    const auto r = codebleu_score("x = (\n", oracle::kRenameReference, grammar());
    ASSERT_TRUE(r.candidate_error);
    EXPECT_EQ(r.syntax, 0.0);
}

TEST(CodeBleu, DataflowWeightRenormalizedWhenAbsent) {
    const auto r = codebleu_score("print(1)\n", "print(2)\n", grammar());
    EXPECT_FALSE(r.dataflow);
    EXPECT_EQ(r.weights.dataflow, 0.0);
    EXPECT_NEAR(r.weights.bleu + r.weights.weighted_bleu + r.weights.syntax, 1.0, 1e-15);
}

TEST(CodeBleu, UnparseableReferenceThrows) {
    EXPECT_THROW(codebleu_score("x = 1\n", "def (:\n", grammar()), MetricError);
}

TEST(Bleu, RepeatedWordIsClippedToEpsilonScale) {
    // p1 = 1/4 after clipping, p2..p4 have no matches and fall to the epsilon floor.
    const double s = bleu_score("the the the the", "the cat");
    EXPECT_LT(s, 1e-5);
    EXPECT_GT(s, 0.0);
}

TEST(Bleu, EmptyCandidateIsZero) { EXPECT_EQ(bleu_score("", "the cat sat"), 0.0); }

TEST(Rouge, IdenticalTextsScoreOneForEveryVariant) {
    for (auto v : {RougeVariant::rouge1, RougeVariant::rouge2, RougeVariant::rougeL, RougeVariant::rougeLsum}) {
        EXPECT_EQ(rouge_score("a quick test\nof rouge", "a quick test\nof rouge", v).f1, 1.0);
    }
}

TEST(Rouge, LcsOfSwappedPair) {
    const auto s = rouge_score("a b c d", "a c b d", RougeVariant::rougeL);
    EXPECT_NEAR(s.recall, 0.75, 1e-12);
    EXPECT_NEAR(s.precision, 0.75, 1e-12);
    EXPECT_NEAR(s.f1, 0.75, 1e-12);
}

TEST(SyntaxMatch, ToyTreesThreeOfFour) {
    using syntax::leaf;
    using syntax::node;
    // Reference internal subtrees: root, (p x), (q y), (r (q y)) -> 4.
    const auto ref = node("root", {node("p", {leaf("x")}), node("r", {node("q", {leaf("y")})})});
    // Candidate keeps (p x), (q y), (r (q y)) under a different root.
    const auto cand = node("other", {node("p", {leaf("x")}), node("r", {node("q", {leaf("y")})})});
    EXPECT_EQ(internal_subtrees(ref).size(), 4u);
    EXPECT_NEAR(syntax_match(cand, ref), 0.75, 1e-12);
    EXPECT_NEAR(oracle::syntax_match_by_strings(cand, ref), 0.75, 1e-12);
    EXPECT_EQ(syntax_match(ref, ref), 1.0);
    const auto disjoint = node("s", {node("t", {leaf("z")})});
    EXPECT_EQ(syntax_match(disjoint, ref), 0.0);
}

TEST(Dataflow, HalfOfTwoEdges) {
    const syntax::DataflowGraph ref{{{0, 1, 2}, {0, 1, 3}}};
    const syntax::DataflowGraph cand{{{0, 1, 2}}};
    EXPECT_NEAR(*dataflow_match(cand, ref), 0.5, 1e-12);
    EXPECT_EQ(*dataflow_match(ref, ref), 1.0);
}

TEST(Dataflow, RenamedVariableIsInvisible) {
    const auto a = grammar().dataflow(syntax::parse_python("x = 1\ny = x + 2\nprint(y, x)\n"));
    const auto b = grammar().dataflow(syntax::parse_python("q = 1\nw = q + 2\nprint(w, q)\n"));
    EXPECT_EQ(a, b);
    EXPECT_EQ(*dataflow_match(b, a), 1.0);
}
