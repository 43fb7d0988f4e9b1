#include "twinforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "twinforge/text.hpp"

namespace twinforge::metrics {

NgramProfile::NgramProfile(const Tokens& tokens, int max_n) : max_n_(max_n), by_n_(max_n) {
    for (int n = 1; n <= max_n; ++n) {
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            ++by_n_[n - 1][Ngram(tokens.begin() + i, tokens.begin() + i + n)];
        }
    }
}

int NgramProfile::count(const Ngram& gram) const {
    if (gram.empty() || static_cast<int>(gram.size()) > max_n_) return 0;
    const auto& m = by_n_[gram.size() - 1];
    auto it = m.find(gram);
    return it == m.end() ? 0 : it->second;
}

int NgramProfile::total(int n) const {
    int t = 0;
    for (const auto& [g, c] : by_n_.at(n - 1)) t += c;
    return t;
}

namespace {

double brevity_penalty(std::size_t c, std::size_t r) {
    return std::exp(std::min(0.0, 1.0 - static_cast<double>(r) / static_cast<double>(c)));
}

template <typename Weight>
double generic_bleu(const Tokens& candidate, const Tokens& reference, int max_n, Weight weight) {
    if (candidate.empty()) return 0.0;
    const NgramProfile cand(candidate, max_n);
    const NgramProfile ref(reference, max_n);
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        double matched = 0.0, total = 0.0;
        for (const auto& [gram, c] : cand.grams(n)) {
            const double w = weight(gram);
            matched += w * std::min(c, ref.count(gram));
            total += w * c;
        }
        const double p = total > 0.0 ? matched / total : 0.0;
        log_sum += std::log(std::max(p, kBleuEpsilon));
    }
    const double score = brevity_penalty(candidate.size(), reference.size()) * std::exp(log_sum / max_n);
    return std::clamp(score, 0.0, 1.0);
}

double f1_of(double r, double p) { return r + p > 0.0 ? 2.0 * r * p / (r + p) : 0.0; }

RougeScore make_score(double hits, double ref_len, double cand_len) {
    RougeScore s;
    s.recall = ref_len > 0 ? hits / ref_len : 0.0;
    s.precision = cand_len > 0 ? hits / cand_len : 0.0;
    s.f1 = f1_of(s.recall, s.precision);
    return s;
}

RougeScore rouge_n(const Tokens& cand, const Tokens& ref, int n) {
    const NgramProfile c(cand, n), r(ref, n);
    double hits = 0;
    for (const auto& [gram, count] : r.grams(n)) hits += std::min(count, c.count(gram));
    return make_score(hits, r.total(n), c.total(n));
}

std::vector<std::vector<int>> lcs_table(const Tokens& a, const Tokens& b) {
    std::vector<std::vector<int>> t(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
        }
    }
    return t;
}

// Indices into `ref` of one LCS with `cand`.
std::vector<std::size_t> lcs_indices(const Tokens& ref, const Tokens& cand) {
    const auto t = lcs_table(ref, cand);
    std::vector<std::size_t> idx;
    std::size_t i = ref.size(), j = cand.size();
    while (i > 0 && j > 0) {
        if (ref[i - 1] == cand[j - 1]) {
            idx.push_back(i - 1);
            --i;
            --j;
        } else if (t[i - 1][j] > t[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(idx.begin(), idx.end());
    return idx;
}

std::vector<Tokens> tokenized_lines(std::string_view s) {
    std::vector<Tokens> out;
    for (const auto& line : text::split_lines(s)) {
        Tokens t = text::tokenize(line);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

// Summary-level LCS: union LCS of each reference line against all candidate
// lines, with hits clipped by token counts.
RougeScore rouge_lsum(std::string_view candidate, std::string_view reference) {
    const auto ref_lines = tokenized_lines(reference);
    const auto cand_lines = tokenized_lines(candidate);
    std::map<std::string, int> ref_counts, cand_counts;
    std::size_t ref_len = 0, cand_len = 0;
    for (const auto& l : ref_lines) {
        ref_len += l.size();
        for (const auto& t : l) ++ref_counts[t];
    }
    for (const auto& l : cand_lines) {
        cand_len += l.size();
        for (const auto& t : l) ++cand_counts[t];
    }
    double hits = 0;
    for (const auto& r : ref_lines) {
        std::set<std::size_t> uni;
        for (const auto& c : cand_lines) {
            for (std::size_t i : lcs_indices(r, c)) uni.insert(i);
        }
        for (std::size_t i : uni) {
            const std::string& tok = r[i];
            if (ref_counts[tok] > 0 && cand_counts[tok] > 0) {
                ++hits;
                --ref_counts[tok];
                --cand_counts[tok];
            }
        }
    }
    return make_score(hits, static_cast<double>(ref_len), static_cast<double>(cand_len));
}

void collect_subtrees(const syntax::SyntaxNode& n, std::vector<std::string>& out) {
    if (n.is_leaf()) return;
    out.push_back(syntax::sexp(n));
    for (const auto& c : n.children) collect_subtrees(c, out);
}

Tokens code_tokens(const syntax::Grammar& grammar, std::string_view code) {
    Tokens out;
    for (auto& t : grammar.tokenize(code)) out.push_back(std::move(t.text));
    return out;
}

}  // namespace

double bleu_tokens(const Tokens& candidate, const Tokens& reference, int max_n) {
    return generic_bleu(candidate, reference, max_n, [](const Ngram&) { return 1.0; });
}

double bleu_score(std::string_view candidate, std::string_view reference) {
    return bleu_tokens(text::tokenize(candidate), text::tokenize(reference));
}

double weighted_bleu_tokens(const Tokens& candidate, const Tokens& reference,
                            const std::set<std::string>& keywords, double keyword_weight, int max_n) {
    return generic_bleu(candidate, reference, max_n, [&](const Ngram& g) {
        double w = 0.0;
        for (const auto& t : g) w += keywords.count(t) ? keyword_weight : 1.0;
        return w / static_cast<double>(g.size());
    });
}

std::string_view to_string(RougeVariant v) {
    switch (v) {
        case RougeVariant::rouge1: return "rouge1";
        case RougeVariant::rouge2: return "rouge2";
        case RougeVariant::rougeL: return "rougeL";
        case RougeVariant::rougeLsum: return "rougeLsum";
    }
    return "";
}

RougeVariant parse_rouge_variant(std::string_view s) {
    for (auto v : {RougeVariant::rouge1, RougeVariant::rouge2, RougeVariant::rougeL, RougeVariant::rougeLsum}) {
        if (to_string(v) == s) return v;
    }
    throw Error("unknown ROUGE variant: " + std::string(s));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    return static_cast<std::size_t>(lcs_table(a, b)[a.size()][b.size()]);
}

RougeScore rouge_score(std::string_view candidate, std::string_view reference, RougeVariant variant) {
    if (variant == RougeVariant::rougeLsum) return rouge_lsum(candidate, reference);
    const Tokens cand = text::tokenize(candidate);
    const Tokens ref = text::tokenize(reference);
    switch (variant) {
        case RougeVariant::rouge1: return rouge_n(cand, ref, 1);
        case RougeVariant::rouge2: return rouge_n(cand, ref, 2);
        default: break;
    }
    return make_score(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(ref.size()),
                      static_cast<double>(cand.size()));
}

std::vector<std::string> internal_subtrees(const syntax::SyntaxTree& tree) {
    std::vector<std::string> out;
    collect_subtrees(tree, out);
    return out;
}

double syntax_match(const syntax::SyntaxTree& candidate, const syntax::SyntaxTree& reference) {
    const auto ref = internal_subtrees(reference);
    if (ref.empty()) throw MetricError("syntax_match: reference tree has no internal nodes");
    std::unordered_set<std::size_t> cand;
    for (const auto& s : internal_subtrees(candidate)) cand.insert(std::hash<std::string>{}(s));
    std::size_t hits = 0;
    for (const auto& s : ref) hits += cand.count(std::hash<std::string>{}(s));
    return static_cast<double>(hits) / static_cast<double>(ref.size());
}

std::optional<double> dataflow_match(const syntax::DataflowGraph& candidate,
                                     const syntax::DataflowGraph& reference) {
    if (reference.edges.empty()) return std::nullopt;
    std::map<syntax::DataflowEdge, int> avail;
    for (const auto& e : candidate.edges) ++avail[e];
    std::size_t hits = 0;
    for (const auto& e : reference.edges) {
        auto it = avail.find(e);
        if (it != avail.end() && it->second > 0) {
            --it->second;
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(reference.edges.size());
}

CodeBleuResult codebleu_score(std::string_view candidate, std::string_view reference,
                              const syntax::Grammar& grammar, CodeBleuWeights weights) {
    const auto ref_parse = grammar.parse(reference);
    if (!ref_parse.ok()) {
        const auto& d = *ref_parse.error;
        throw MetricError("reference does not parse: line " + std::to_string(d.line) + ": " + d.message);
    }
    const Tokens ref_tokens = code_tokens(grammar, reference);
    Tokens cand_tokens;
    try {
        cand_tokens = code_tokens(grammar, candidate);
    } catch (const syntax::SyntaxError&) {
        cand_tokens = text::split_whitespace(candidate);
    }

    CodeBleuResult r;
    r.bleu = bleu_tokens(cand_tokens, ref_tokens);
    r.weighted_bleu = weighted_bleu_tokens(cand_tokens, ref_tokens, grammar.keywords());

    const auto cand_parse = grammar.parse(candidate);
    const auto ref_flow = grammar.dataflow(*ref_parse.tree);
    if (cand_parse.ok()) {
        r.syntax = syntax_match(*cand_parse.tree, *ref_parse.tree);
        r.dataflow = dataflow_match(grammar.dataflow(*cand_parse.tree), ref_flow);
    } else {
        r.candidate_error = cand_parse.error;
        r.syntax = 0.0;
        if (!ref_flow.edges.empty()) r.dataflow = 0.0;
    }

    if (!r.dataflow) weights.dataflow = 0.0;
    const double sum = weights.bleu + weights.weighted_bleu + weights.syntax + weights.dataflow;
    if (sum <= 0.0) throw MetricError("codebleu weights sum to zero");
    weights.bleu /= sum;
    weights.weighted_bleu /= sum;
    weights.syntax /= sum;
    weights.dataflow /= sum;
    r.weights = weights;
    r.total = weights.bleu * r.bleu + weights.weighted_bleu * r.weighted_bleu + weights.syntax * r.syntax +
              weights.dataflow * r.dataflow.value_or(0.0);
    r.total = std::clamp(r.total, 0.0, 1.0);
    return r;
}

}  // namespace twinforge::metrics
