#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/error.hpp"

namespace twinforge::corpus {

enum class DocKind { script, doc_page, forum_thread };

std::string_view to_string(DocKind k);
DocKind parse_doc_kind(std::string_view s);

struct RawDocument {
    std::string body;
    DocKind kind = DocKind::script;
    std::string id;
};

struct ForumPost {
    std::string author;
    std::string body;
};

struct ForumThread {
    std::string subject;
    std::vector<ForumPost> posts;
};

/// Wraps a script in a markdown file: a heading, an id/kind header and the
/// script verbatim inside one fenced block. The fence is widened past the
/// longest backtick run in the script. Throws Error unless kind == script.
std::string script_to_markdown(const RawDocument& script, std::string_view language = "python");

/// Body of the first fenced block in `markdown`, byte-exact.
std::string extract_fenced_block(std::string_view markdown);

struct QaCandidate {
    std::string subject;
    std::string question;
    std::string answer;
    std::string answer_author;
    std::vector<std::string> keywords;
    std::size_t redactions = 0;
    bool logic_valid = false;
};

struct ForumOptions {
    /// Answers shorter than this (after trimming) are flagged logic-invalid.
    std::size_t min_answer_chars = 20;
    bool redact = true;
    /// Treat author handles as personal data and mask them as "[USER]".
    bool redact_author_handles = true;
    std::size_t keywords_per_pair = 5;
};

class StopWords {
public:
    StopWords() = default;
    explicit StopWords(std::set<std::string> words) : words_(std::move(words)) {}

    /// One word per line; '#' starts a comment.
    static StopWords load(const std::filesystem::path& path);
    /// Loads stopwords.txt from the data directory.
    static StopWords load_default();

    bool contains(const std::string& w) const { return words_.count(w) != 0; }
    std::size_t size() const { return words_.size(); }

private:
    std::set<std::string> words_;
};

/// First post is the question; each reply becomes one candidate answer.
std::vector<QaCandidate> ingest_forum_thread(const ForumThread& thread, const StopWords& stop_words,
                                             const ForumOptions& options = {});

/// Lowercased, stop-word-free words ranked by frequency, ties broken
/// lexicographically. At most k are returned. Throws Error when k == 0.
std::vector<std::string> extract_keywords(std::string_view text, std::size_t k, const StopWords& stop_words);

struct Redaction {
    std::string text;
    std::size_t count = 0;
};

/// Masks e-mail addresses, URLs whose query string carries user-identifying
/// keys, and phone numbers. Idempotent.
Redaction redact_private_info(std::string_view text);

/// Sorted set of hashed w-word shingles over whitespace-normalized,
/// lowercased words. Texts shorter than w words form one shingle.
struct ShingleSet {
    std::vector<std::uint64_t> hashes;
    bool operator==(const ShingleSet&) const = default;
};

ShingleSet make_shingles(std::string_view text, std::size_t w);
/// Human-readable shingles ("a b"), sorted; mainly for inspection.
std::vector<std::string> shingle_strings(std::string_view text, std::size_t w);
/// |A ∩ B| / |A ∪ B|; two empty sets score 1.
double jaccard(const ShingleSet& a, const ShingleSet& b);

/// Minimum-hash signature; the fraction of agreeing slots estimates Jaccard.
std::vector<std::uint64_t> minhash_signature(const ShingleSet& s, std::size_t num_hashes, std::uint64_t seed = 0);
double minhash_similarity(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b);

struct DedupOptions {
    std::size_t shingle_width = 5;
    double threshold = 0.8;
    /// Corpora larger than this use MinHash banding to find candidate pairs.
    std::size_t minhash_above = 10000;
    std::size_t num_hashes = 128;
    std::size_t bands = 32;
};

struct DedupRemoval {
    std::string removed_id;
    std::string witness_id;
    double similarity = 0.0;
    std::string reason;  // "exact_duplicate" or "near_duplicate"
};

struct DedupResult {
    std::vector<RawDocument> kept;
    std::vector<DedupRemoval> removals;
};

/// Greedy clustering in id order: a document is removed when it duplicates,
/// or reaches `threshold` Jaccard with, an already kept one. Kept documents
/// are returned in input order. Throws Error on w == 0 or threshold ∉ (0,1].
DedupResult dedup_corpus(const std::vector<RawDocument>& documents, const DedupOptions& options = {});

nlohmann::json dedup_report_json(const DedupResult& result);

/// Regular files under `dir` (recursive) with one of `extensions`, sorted by
/// path; ids are paths relative to `dir`.
std::vector<RawDocument> load_documents(const std::filesystem::path& dir, DocKind kind,
                                        const std::vector<std::string>& extensions);

/// Forum export: a JSON array of {"subject", "posts": [{"author", "body"}]}.
std::vector<ForumThread> load_forum_export(const std::filesystem::path& path);

}  // namespace twinforge::corpus
