#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "twinforge/error.hpp"
#include "twinforge/syntax.hpp"

namespace twinforge::metrics {

using Tokens = std::vector<std::string>;
using Ngram = std::vector<std::string>;

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kKeywordWeight = 5.0;

class MetricError : public Error {
public:
    using Error::Error;
};

/// Multiset of n-grams for n = 1..max_n.
class NgramProfile {
public:
    NgramProfile(const Tokens& tokens, int max_n);

    int max_n() const noexcept { return max_n_; }
    /// Count of `gram` (its length selects n); 0 when absent.
    int count(const Ngram& gram) const;
    const std::map<Ngram, int>& grams(int n) const { return by_n_.at(n - 1); }
    /// Number of n-gram positions, i.e. max(0, len - n + 1).
    int total(int n) const;

private:
    int max_n_;
    std::vector<std::map<Ngram, int>> by_n_;
};

/// Text BLEU over the lowercase word/punctuation tokenizer.
double bleu_score(std::string_view candidate, std::string_view reference);
double bleu_tokens(const Tokens& candidate, const Tokens& reference, int max_n = 4);

/// BLEU where each n-gram counts with the mean weight of its tokens
/// (`keyword_weight` for keywords, 1 otherwise).
double weighted_bleu_tokens(const Tokens& candidate, const Tokens& reference,
                            const std::set<std::string>& keywords,
                            double keyword_weight = kKeywordWeight, int max_n = 4);

enum class RougeVariant { rouge1, rouge2, rougeL, rougeLsum };

std::string_view to_string(RougeVariant v);
RougeVariant parse_rouge_variant(std::string_view s);

struct RougeScore {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

RougeScore rouge_score(std::string_view candidate, std::string_view reference, RougeVariant variant);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// Fraction of the reference's internal-rooted subtrees that also occur in the
/// candidate. Throws MetricError on an empty reference.
double syntax_match(const syntax::SyntaxTree& candidate, const syntax::SyntaxTree& reference);

/// Canonical s-expressions of every subtree rooted at an internal node, pre-order.
std::vector<std::string> internal_subtrees(const syntax::SyntaxTree& tree);

/// Fraction of reference edges present in the candidate, as a multiset match.
/// std::nullopt when the reference has no edges.
std::optional<double> dataflow_match(const syntax::DataflowGraph& candidate,
                                     const syntax::DataflowGraph& reference);

struct CodeBleuWeights {
    double bleu = 0.25;
    double weighted_bleu = 0.25;
    double syntax = 0.25;
    double dataflow = 0.25;
};

struct CodeBleuResult {
    double total = 0.0;
    double bleu = 0.0;
    double weighted_bleu = 0.0;
    double syntax = 0.0;
    /// Empty when the reference has no def-use edges.
    std::optional<double> dataflow;
    /// Weights actually applied, after renormalization.
    CodeBleuWeights weights;
    std::optional<syntax::Diagnostic> candidate_error;
};

/// Throws MetricError when the reference does not parse.
CodeBleuResult codebleu_score(std::string_view candidate, std::string_view reference,
                              const syntax::Grammar& grammar, CodeBleuWeights weights = {});

}  // namespace twinforge::metrics
