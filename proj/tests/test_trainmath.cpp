#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "twinforge/trainmath.hpp"

using namespace twinforge;
using namespace twinforge::trainmath;

namespace {

TokenLogProbSequence<double> seq(std::vector<double> lp, std::vector<bool> mask = {}) {
    TokenLogProbSequence<double> s;
    s.logprobs.resize(static_cast<Eigen::Index>(lp.size()));
    s.output_mask.resize(static_cast<Eigen::Index>(lp.size()));
    for (std::size_t i = 0; i < lp.size(); ++i) {
        s.logprobs(static_cast<Eigen::Index>(i)) = lp[i];
        s.output_mask(static_cast<Eigen::Index>(i)) = mask.empty() || mask[i];
    }
    return s;
}

// Plain triple loop, no Eigen products.
Matrix<double> dense_oracle(const Matrix<double>& w0, const Matrix<double>& b, const Matrix<double>& a, double s) {
    Matrix<double> out = w0;
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            double acc = 0.0;
            for (Eigen::Index t = 0; t < b.cols(); ++t) acc += b(i, t) * a(t, j);
            out(i, j) += s * acc;
        }
    }
    return out;
}

}  // namespace

TEST(ClmLoss, Examples) {
    auto l = clm_loss(seq({0.0, 0.0}));
    EXPECT_EQ(l.sum, 0.0);
    EXPECT_EQ(l.mean, 0.0);
    l = clm_loss(seq({-1, -1, -1}));
    EXPECT_DOUBLE_EQ(l.sum, 3.0);
    EXPECT_DOUBLE_EQ(l.mean, 1.0);
    l = clm_loss(seq({-0.5, -1.5}));
    EXPECT_DOUBLE_EQ(l.sum, 2.0);
    EXPECT_DOUBLE_EQ(l.mean, 1.0);
}

TEST(ClmLoss, RejectsPositiveLogProb) { EXPECT_THROW(clm_loss(seq({0.1})), Error); }

TEST(SftLoss, MaskedSpanOnly) {
    const auto l = sft_loss(seq({-9, -9, -1, -2}, {false, false, true, true}));
    EXPECT_DOUBLE_EQ(l.sum, 3.0);
    EXPECT_DOUBLE_EQ(l.mean, 1.5);
    EXPECT_EQ(l.count, 2);
}

TEST(SftLoss, AllFalseMaskThrows) {
    EXPECT_THROW(sft_loss(seq({-1, -2}, {false, false})), DegenerateMask);
}

TEST(SftLoss, AllTrueMaskEqualsClmOnRandomSequences) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> len(1, 64);
    std::exponential_distribution<double> nll(0.7);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> lp(static_cast<std::size_t>(len(rng)));
        for (auto& x : lp) x = -nll(rng);
        const auto s = seq(lp);
        const auto a = sft_loss(s), b = clm_loss(s);
        ASSERT_NEAR(a.sum, b.sum, 1e-12);
        ASSERT_NEAR(a.mean, b.mean, 1e-12);
    }
}

TEST(SftLoss, FloatScalar) {
    TokenLogProbSequence<float> s;
    s.logprobs = Vector<float>::Constant(4, -0.5f);
    s.output_mask = Mask::Constant(4, true);
    EXPECT_FLOAT_EQ(sft_loss(s).sum, 2.0f);
}

TEST(CorpusLoss, TokenAndSequenceMeans) {
    const std::vector<TokenLogProbSequence<double>> seqs = {seq({-1, -1}), seq({-4})};
    const auto c = corpus_loss(seqs, [](const auto& s) { return clm_loss(s); });
    EXPECT_DOUBLE_EQ(c.token_mean, 2.0);     // 6 / 3
    EXPECT_DOUBLE_EQ(c.sequence_mean, 2.5);  // (1 + 4) / 2
}

TEST(Lora, ZeroBLeavesWeightsUnchanged) {
    const Matrix<double> w0 = Matrix<double>::Random(5, 4);
    const LoraAdapter<double> ad(Matrix<double>::Zero(5, 2), Matrix<double>::Random(2, 4));
    EXPECT_EQ(lora_merge(w0, ad), w0);
}

TEST(Lora, TwoByTwoExample) {
    Matrix<double> w0 = Matrix<double>::Identity(2, 2);
    Matrix<double> b(2, 1), a(1, 2);
    b << 1, 0;
    a << 0, 1;
    Matrix<double> expected(2, 2);
    expected << 1, 1, 0, 1;
    EXPECT_EQ(lora_merge(w0, LoraAdapter<double>(b, a)), expected);
}

TEST(Lora, RankAtLeastMinDimensionRejected) {
    EXPECT_THROW(LoraAdapter<double>(Matrix<double>::Zero(2, 2), Matrix<double>::Zero(2, 2)), ShapeError);
    EXPECT_THROW(LoraAdapter<double>(Matrix<double>::Zero(3, 2), Matrix<double>::Zero(1, 4)), ShapeError);
}

TEST(Lora, ShapeMismatchRejected) {
    const LoraAdapter<double> ad(Matrix<double>::Zero(4, 1), Matrix<double>::Zero(1, 3));
    const Matrix<double> w0 = Matrix<double>::Zero(3, 4);
    EXPECT_THROW(lora_merge(w0, ad), ShapeError);
}

TEST(Lora, MatchesDenseOracleOnRandomShapes) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dim(2, 32);
    std::normal_distribution<double> g(0.0, 1.0);
    auto rand_matrix = [&](Eigen::Index r, Eigen::Index c) {
        Matrix<double> m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
        return m;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const int d = dim(rng), k = dim(rng);
        const int r = std::uniform_int_distribution<int>(1, std::min(d, k) - 1)(rng);
        const double scale = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
        const auto w0 = rand_matrix(d, k), b = rand_matrix(d, r), a = rand_matrix(r, k);
        const Matrix<double> w0_copy = w0;
        const auto merged = lora_merge(w0, LoraAdapter<double>(b, a, scale));
        ASSERT_LT((merged - dense_oracle(w0, b, a, scale)).cwiseAbs().maxCoeff(), 1e-12);
        ASSERT_EQ(w0, w0_copy);
    }
}

TEST(LoraStats, Examples) {
    const auto s = lora_stats(4, 4, 1);
    EXPECT_EQ(s.trainable, 8);
    EXPECT_EQ(s.dense, 16);
    EXPECT_DOUBLE_EQ(s.ratio, 0.5);
    const auto big = lora_stats(1000, 1000, 8);
    EXPECT_EQ(big.trainable, 16000);
    EXPECT_EQ(big.dense, 1000000);
    EXPECT_DOUBLE_EQ(big.ratio, 0.016);
    EXPECT_THROW(lora_stats(4, 4, 4), ShapeError);
}

TEST(Warmup, Endpoints) {
    const WarmupSchedule<double> s{100, 10, 2e-4, 0.1};
    EXPECT_EQ(warmup_lr(s, 0), 0.0);
    EXPECT_DOUBLE_EQ(warmup_lr(s, 10), 2e-4);
    EXPECT_NEAR(warmup_lr(s, 100), 0.1 * 2e-4, 1e-18);
}

TEST(Warmup, MidpointIsFiftyFivePercent) {
    const WarmupSchedule<double> s{110, 10, 1.0, 0.1};
    // cos^2(pi/4) = 1/2, so 0.1 + 0.9 * 0.5.
    const double c = std::cos(std::numbers::pi / 4);
    EXPECT_NEAR(warmup_lr(s, 60), 0.1 + 0.9 * c * c, 1e-12);
    EXPECT_NEAR(warmup_lr(s, 60), 0.55, 1e-12);
}

TEST(Warmup, CurveIsMonotoneAfterPeak) {
    const WarmupSchedule<double> s{50, 5, 1.0, 0.0};
    const auto v = warmup_curve(s);
    ASSERT_EQ(v.size(), 51);
    for (Eigen::Index i = 1; i <= 5; ++i) EXPECT_GT(v(i), v(i - 1));
    for (Eigen::Index i = 6; i <= 50; ++i) EXPECT_LE(v(i), v(i - 1));
}

TEST(Warmup, InvalidScheduleThrows) {
    EXPECT_THROW(warmup_lr(WarmupSchedule<double>{10, 0, 1.0, 0.0}, 0), Error);
    EXPECT_THROW(warmup_lr(WarmupSchedule<double>{10, 5, 1.0, 0.0}, 11), Error);
}

TEST(Io, MatrixRoundTrip) {
    Matrix<double> m(2, 3);
    m << 1.5, -2, 3e-7, 0, 1.0 / 3.0, 7;
    EXPECT_EQ(parse_matrix(format_matrix(m)), m);
    EXPECT_THROW(parse_matrix("2 2\n1 2 3\n"), ShapeError);
}

TEST(Io, LogProbJsonlForms) {
    const auto whole = parse_logprob_jsonl(R"({"logprobs": [-1, -2], "mask": [false, true]}
{"logprobs": [-3]}
)");
    ASSERT_EQ(whole.size(), 2u);
    EXPECT_DOUBLE_EQ(sft_loss(whole[0]).sum, 2.0);
    const auto tokens = parse_logprob_jsonl(R"({"seq": 1, "logprob": -1}
{"seq": 2, "logprob": -2}
{"seq": 1, "logprob": -3, "mask": false}
)");
    ASSERT_EQ(tokens.size(), 2u);
    EXPECT_EQ(tokens[0].size(), 2);
    EXPECT_DOUBLE_EQ(sft_loss(tokens[0]).sum, 1.0);
    EXPECT_THROW(parse_logprob_jsonl("{bad"), ParseError);
}

TEST(Io, TrainingConfigJson) {
    TrainingConfig c;
    c.schedule = {1000, 100, 1e-5, 0.1};
    c.lora_rank = 8;
    const auto j = training_config_json(c);
    EXPECT_EQ(j["lora"]["rank"], 8);
    EXPECT_EQ(j["schedule"]["warmup"], "linear");
}
