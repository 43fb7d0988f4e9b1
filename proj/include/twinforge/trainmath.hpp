#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "twinforge/error.hpp"

namespace twinforge::trainmath {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

class ShapeError : public Error {
public:
    using Error::Error;
};

class DegenerateMask : public Error {
public:
    using Error::Error;
};

/// Per-token natural-log probabilities and the output-span mask.
template <typename Scalar>
struct TokenLogProbSequence {
    Vector<Scalar> logprobs;
    Mask output_mask;

    Eigen::Index size() const noexcept { return logprobs.size(); }

    void validate() const {
        if (logprobs.size() != output_mask.size()) throw ShapeError("logprobs and mask lengths differ");
        if ((logprobs > Scalar(0)).any()) throw Error("log-probabilities must be <= 0");
        if (!logprobs.allFinite()) throw Error("log-probabilities must be finite");
    }
};

template <typename Scalar>
struct Loss {
    Scalar sum{};
    Scalar mean{};
    std::int64_t count = 0;
};

/// Negative log-likelihood over every token.
template <typename Scalar>
Loss<Scalar> clm_loss(const TokenLogProbSequence<Scalar>& seq) {
    seq.validate();
    if (seq.size() == 0) throw Error("clm_loss of an empty sequence");
    Scalar sum{};
    for (Eigen::Index i = 0; i < seq.size(); ++i) sum -= seq.logprobs(i);
    return {sum, sum / static_cast<Scalar>(seq.size()), static_cast<std::int64_t>(seq.size())};
}

/// Negative log-likelihood over the output span only.
template <typename Scalar>
Loss<Scalar> sft_loss(const TokenLogProbSequence<Scalar>& seq) {
    seq.validate();
    const auto count = seq.output_mask.count();
    if (count == 0) throw DegenerateMask("sft_loss needs at least one output token");
    // Same summation order as clm_loss, so an all-true mask agrees exactly.
    Scalar sum{};
    for (Eigen::Index i = 0; i < seq.size(); ++i) {
        if (seq.output_mask(i)) sum -= seq.logprobs(i);
    }
    return {sum, sum / static_cast<Scalar>(count), static_cast<std::int64_t>(count)};
}

template <typename Scalar>
struct CorpusLoss {
    std::vector<Loss<Scalar>> per_sequence;
    /// Total NLL over total counted tokens.
    Scalar token_mean{};
    /// Unweighted mean of the per-sequence means.
    Scalar sequence_mean{};
};

template <typename Scalar, typename LossFn>
CorpusLoss<Scalar> corpus_loss(const std::vector<TokenLogProbSequence<Scalar>>& seqs, LossFn fn) {
    if (seqs.empty()) throw Error("corpus loss of no sequences");
    CorpusLoss<Scalar> out;
    Scalar total{}, means{};
    std::int64_t tokens = 0;
    for (const auto& s : seqs) {
        const auto l = fn(s);
        out.per_sequence.push_back(l);
        total += l.sum;
        tokens += l.count;
        means += l.mean;
    }
    out.token_mean = total / static_cast<Scalar>(tokens);
    out.sequence_mean = means / static_cast<Scalar>(seqs.size());
    return out;
}

/// Low-rank update ΔW = scale · B · A with 1 <= r < min(d, k).
template <typename Scalar>
class LoraAdapter {
public:
    LoraAdapter(Matrix<Scalar> b, Matrix<Scalar> a, Scalar scale = Scalar(1))
        : b_(std::move(b)), a_(std::move(a)), scale_(scale) {
        if (b_.cols() != a_.rows()) throw ShapeError("B columns must equal A rows");
        const auto r = b_.cols();
        if (r < 1) throw ShapeError("LoRA rank must be at least 1");
        if (r >= std::min(b_.rows(), a_.cols())) {
            throw ShapeError("LoRA rank " + std::to_string(r) + " must be below min(d, k) = " +
                             std::to_string(std::min(b_.rows(), a_.cols())));
        }
        if (!b_.allFinite() || !a_.allFinite()) throw Error("LoRA factors must be finite");
    }

    const Matrix<Scalar>& b() const noexcept { return b_; }
    const Matrix<Scalar>& a() const noexcept { return a_; }
    Scalar scale() const noexcept { return scale_; }
    Eigen::Index rank() const noexcept { return b_.cols(); }
    Eigen::Index rows() const noexcept { return b_.rows(); }
    Eigen::Index cols() const noexcept { return a_.cols(); }

    auto delta() const { return scale_ * (b_ * a_); }

private:
    Matrix<Scalar> b_;
    Matrix<Scalar> a_;
    Scalar scale_;
};

/// W0 + scale · B · A. W0 is taken by const reference and never modified.
template <typename Scalar>
Matrix<Scalar> lora_merge(const Matrix<Scalar>& w0, const LoraAdapter<Scalar>& adapter) {
    if (w0.rows() != adapter.rows() || w0.cols() != adapter.cols()) {
        throw ShapeError("W0 is " + std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()) +
                         " but the adapter is " + std::to_string(adapter.rows()) + "x" +
                         std::to_string(adapter.cols()));
    }
    Matrix<Scalar> merged = w0;
    merged.noalias() += adapter.scale() * (adapter.b() * adapter.a());
    return merged;
}

struct LoraStats {
    std::int64_t trainable = 0;
    std::int64_t dense = 0;
    double ratio = 0.0;
};

inline LoraStats lora_stats(std::int64_t d, std::int64_t k, std::int64_t r) {
    if (d < 1 || k < 1) throw ShapeError("LoRA target dimensions must be positive");
    if (r < 1 || r >= std::min(d, k)) throw ShapeError("LoRA rank must satisfy 1 <= r < min(d, k)");
    LoraStats s;
    s.trainable = r * (d + k);
    s.dense = d * k;
    s.ratio = static_cast<double>(s.trainable) / static_cast<double>(s.dense);
    return s;
}

/// Linear ramp from 0 to peak over warmup_steps, then cosine decay to
/// floor_fraction · peak at total_steps.
template <typename Scalar>
struct WarmupSchedule {
    std::int64_t total_steps = 1;
    std::int64_t warmup_steps = 1;
    Scalar peak_lr = Scalar(1e-4);
    Scalar floor_fraction = Scalar(0);

    void validate() const {
        if (warmup_steps <= 0 || warmup_steps > total_steps) throw Error("need 0 < warmup_steps <= total_steps");
        if (!(peak_lr > Scalar(0))) throw Error("peak_lr must be positive");
        if (floor_fraction < Scalar(0) || floor_fraction >= Scalar(1)) throw Error("floor_fraction must lie in [0, 1)");
    }
};

template <typename Scalar>
Scalar warmup_lr(const WarmupSchedule<Scalar>& s, std::int64_t step) {
    s.validate();
    if (step < 0 || step > s.total_steps) throw Error("step outside [0, total_steps]");
    if (step <= s.warmup_steps) return s.peak_lr * static_cast<Scalar>(step) / static_cast<Scalar>(s.warmup_steps);
    const Scalar progress =
        static_cast<Scalar>(step - s.warmup_steps) / static_cast<Scalar>(s.total_steps - s.warmup_steps);
    const Scalar cosine = Scalar(0.5) * (Scalar(1) + std::cos(std::numbers::pi_v<Scalar> * progress));
    return s.peak_lr * (s.floor_fraction + (Scalar(1) - s.floor_fraction) * cosine);
}

template <typename Scalar>
Vector<Scalar> warmup_curve(const WarmupSchedule<Scalar>& s) {
    Vector<Scalar> v(s.total_steps + 1);
    for (std::int64_t i = 0; i <= s.total_steps; ++i) v(i) = warmup_lr(s, i);
    return v;
}

// --- file formats (double precision) ----------------------------------------

using LogProbSequence = TokenLogProbSequence<double>;

/// JSON lines. Either one sequence per line ({"logprobs": [...], "mask": [...]}),
/// or one token per line ({"seq": id, "logprob": x, "mask": bool}) grouped by
/// "seq" in order of first appearance. A missing mask means all true.
std::vector<LogProbSequence> read_logprob_jsonl(const std::filesystem::path& path);
std::vector<LogProbSequence> parse_logprob_jsonl(std::string_view text);

/// Text matrix: a "rows cols" header line then one whitespace-separated row per line.
Matrix<double> read_matrix(const std::filesystem::path& path);
Matrix<double> parse_matrix(std::string_view text);
std::string format_matrix(const Matrix<double>& m);
void write_matrix(const std::filesystem::path& path, const Matrix<double>& m);

struct TrainingConfig {
    WarmupSchedule<double> schedule;
    std::optional<std::int64_t> lora_rank;
    double lora_scale = 1.0;
    std::string objective = "sft";
};

nlohmann::json training_config_json(const TrainingConfig& c);

}  // namespace twinforge::trainmath
