#include "twinforge/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <regex>
#include <unordered_map>

#include "twinforge/digest.hpp"
#include "twinforge/error.hpp"
#include "twinforge/paths.hpp"
#include "twinforge/text.hpp"

namespace twinforge::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DocKind k) {
    switch (k) {
        case DocKind::script: return "script";
        case DocKind::doc_page: return "doc_page";
        case DocKind::forum_thread: return "forum_thread";
    }
    return "?";
}

DocKind parse_doc_kind(std::string_view s) {
    if (s == "script") return DocKind::script;
    if (s == "doc_page") return DocKind::doc_page;
    if (s == "forum_thread") return DocKind::forum_thread;
    throw Error("unknown document kind: '" + std::string(s) + "'");
}

// --- markdown ------------------------------------------------------------------

namespace {

std::size_t longest_backtick_run(std::string_view s) {
    std::size_t best = 0, run = 0;
    for (char c : s) {
        run = (c == '`') ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best;
}

}  // namespace

std::string script_to_markdown(const RawDocument& script, std::string_view language) {
    if (script.kind != DocKind::script) {
        throw Error("script_to_markdown: document '" + script.id + "' has kind " +
                    std::string(to_string(script.kind)) + ", expected script");
    }
    const std::string fence(std::max<std::size_t>(3, longest_backtick_run(script.body) + 1), '`');
    std::string md;
    md += "# " + script.id + "\n\n";
    md += "- id: " + script.id + "\n";
    md += "- kind: script\n\n";
    md += fence + std::string(language) + "\n";
    md += script.body;
    md += "\n" + fence + "\n";
    return md;
}

std::string extract_fenced_block(std::string_view md) {
    std::size_t pos = 0;
    while (pos < md.size()) {
        std::size_t eol = md.find('\n', pos);
        if (eol == std::string_view::npos) eol = md.size();
        std::string_view line = md.substr(pos, eol - pos);
        std::size_t ticks = 0;
        while (ticks < line.size() && line[ticks] == '`') ++ticks;
        if (ticks >= 3) {
            const std::string closing = "\n" + std::string(ticks, '`') + "\n";
            const std::size_t body_start = eol + 1;
            // The closing fence is the last exact-width fence line; searching
            // from the back keeps shorter runs inside the body intact.
            std::size_t close = md.rfind(closing);
            if (close == std::string_view::npos || close + 1 < body_start) {
                throw Error("unterminated fenced block");
            }
            if (close < body_start) return {};
            return std::string(md.substr(body_start, close - body_start));
        }
        pos = eol + 1;
    }
    throw Error("no fenced block found");
}

// --- stop words / keywords --------------------------------------------------------

StopWords StopWords::load(const fs::path& path) {
    std::set<std::string> words;
    for (const auto& line : text::split_lines(read_file(path))) {
        std::string w = text::trim(line.substr(0, line.find('#')));
        if (!w.empty()) words.insert(text::to_lower(w));
    }
    return StopWords(std::move(words));
}

StopWords StopWords::load_default() { return load(data_dir() / "stopwords.txt"); }

std::vector<std::string> extract_keywords(std::string_view text, std::size_t k, const StopWords& stop_words) {
    if (k == 0) throw Error("extract_keywords: k must be >= 1");
    std::map<std::string, std::size_t> freq;
    for (auto& w : text::words(text)) {
        if (!stop_words.contains(w)) ++freq[w];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    // freq is already lexicographic; a stable sort on count keeps that as the tie-break.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
    return out;
}

// --- privacy ------------------------------------------------------------------------

namespace {

bool is_word_byte(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_';
}

template <typename Accept>
std::size_t replace_regex(std::string& s, const std::regex& re, std::string_view token, Accept accept) {
    std::string out;
    std::size_t count = 0;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        const std::size_t b = static_cast<std::size_t>(m.position(0));
        const std::size_t e = b + static_cast<std::size_t>(m.length(0));
        if (b < last || !accept(s, b, e)) continue;
        out.append(s, last, b - last);
        out += token;
        last = e;
        ++count;
    }
    if (count) {
        out.append(s, last, std::string::npos);
        s = std::move(out);
    }
    return count;
}

const std::set<std::string>& identifying_query_keys() {
    static const std::set<std::string> keys = {
        "user",  "username", "user_id", "userid", "uid",    "email",   "mail",  "e-mail",  "token",
        "access_token", "session", "sessionid", "sid", "key",  "api_key", "apikey", "auth", "account",
        "login", "name",     "phone",   "id"};
    return keys;
}

bool url_is_identifying(std::string_view url) {
    const std::size_t q = url.find('?');
    if (q == std::string_view::npos) return false;
    std::string_view query = url.substr(q + 1);
    if (auto h = query.find('#'); h != std::string_view::npos) query = query.substr(0, h);
    std::size_t pos = 0;
    while (pos <= query.size()) {
        std::size_t amp = query.find('&', pos);
        if (amp == std::string_view::npos) amp = query.size();
        std::string_view pair = query.substr(pos, amp - pos);
        std::string_view key = pair.substr(0, pair.find('='));
        if (identifying_query_keys().count(text::to_lower(key))) return true;
        pos = amp + 1;
    }
    return false;
}

}  // namespace

Redaction redact_private_info(std::string_view input) {
    static const std::regex url_re(R"(https?://[^\s<>"'()\[\]]+)", std::regex::icase);
    static const std::regex email_re(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,})");
    static const std::regex phone_re(R"((\+\d{1,3}[ .\-]?)?(\(\d{3}\) ?|\d{3}[ .\-])\d{3}[ .\-]\d{4})");

    Redaction r;
    r.text = std::string(input);
    r.count += replace_regex(r.text, url_re, "[URL]", [](const std::string& s, std::size_t b, std::size_t e) {
        return url_is_identifying(std::string_view(s).substr(b, e - b));
    });
    r.count += replace_regex(r.text, email_re, "[EMAIL]", [](const std::string&, std::size_t, std::size_t) {
        return true;
    });
    r.count += replace_regex(r.text, phone_re, "[PHONE]", [](const std::string& s, std::size_t b, std::size_t e) {
        const bool left_ok = b == 0 || (!is_word_byte(s[b - 1]) && s[b - 1] != '+' && s[b - 1] != '.');
        const bool right_ok = e >= s.size() || !std::isdigit(static_cast<unsigned char>(s[e]));
        return left_ok && right_ok;
    });
    return r;
}

// --- forum ----------------------------------------------------------------------------

namespace {

std::size_t mask_handle(std::string& s, const std::string& handle) {
    if (handle.empty()) return 0;
    std::size_t count = 0, pos = 0;
    while ((pos = s.find(handle, pos)) != std::string::npos) {
        const std::size_t end = pos + handle.size();
        const bool left = pos == 0 || !is_word_byte(s[pos - 1]);
        const bool right = end >= s.size() || !is_word_byte(s[end]);
        if (left && right) {
            s.replace(pos, handle.size(), "[USER]");
            pos += 6;
            ++count;
        } else {
            pos = end;
        }
    }
    return count;
}

bool has_alnum(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c); });
}

}  // namespace

std::vector<QaCandidate> ingest_forum_thread(const ForumThread& thread, const StopWords& stop_words,
                                             const ForumOptions& options) {
    std::vector<QaCandidate> out;
    if (thread.posts.size() < 2) return out;

    std::vector<std::string> handles;
    if (options.redact && options.redact_author_handles) {
        for (const auto& p : thread.posts) {
            if (!p.author.empty() && std::find(handles.begin(), handles.end(), p.author) == handles.end()) {
                handles.push_back(p.author);
            }
        }
        // Longer handles first so one handle containing another is masked whole.
        std::sort(handles.begin(), handles.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    }

    auto clean = [&](std::string s, std::size_t& count) {
        if (!options.redact) return s;
        // PII first; a handle masked inside an address would hide the address.
        Redaction r = redact_private_info(s);
        count += r.count;
        for (const auto& h : handles) count += mask_handle(r.text, h);
        return std::move(r.text);
    };

    for (std::size_t i = 1; i < thread.posts.size(); ++i) {
        QaCandidate c;
        c.subject = clean(thread.subject, c.redactions);
        c.question = clean(thread.posts.front().body, c.redactions);
        c.answer = clean(thread.posts[i].body, c.redactions);
        c.answer_author = (options.redact && options.redact_author_handles && !thread.posts[i].author.empty())
                              ? "[USER]"
                              : thread.posts[i].author;
        const std::string trimmed = text::trim(c.answer);
        c.logic_valid = trimmed.size() >= options.min_answer_chars && has_alnum(trimmed);
        if (options.keywords_per_pair > 0) {
            c.keywords = extract_keywords(c.question + "\n" + c.answer, options.keywords_per_pair, stop_words);
        }
        out.push_back(std::move(c));
    }
    return out;
}

// --- shingles / dedup -------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::vector<std::string> shingle_list(std::string_view text, std::size_t w) {
    if (w == 0) throw Error("shingle width must be >= 1");
    const auto toks = text::split_whitespace(text::to_lower(text));
    std::vector<std::string> out;
    if (toks.empty()) return out;
    if (toks.size() < w) {
        out.push_back(text::join(toks, " "));
        return out;
    }
    for (std::size_t i = 0; i + w <= toks.size(); ++i) {
        std::vector<std::string> window(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                        toks.begin() + static_cast<std::ptrdiff_t>(i + w));
        out.push_back(text::join(window, " "));
    }
    return out;
}

}  // namespace

std::vector<std::string> shingle_strings(std::string_view text, std::size_t w) {
    auto v = shingle_list(text, w);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

ShingleSet make_shingles(std::string_view text, std::size_t w) {
    ShingleSet s;
    for (const auto& sh : shingle_list(text, w)) s.hashes.push_back(fnv1a(sh));
    std::sort(s.hashes.begin(), s.hashes.end());
    s.hashes.erase(std::unique(s.hashes.begin(), s.hashes.end()), s.hashes.end());
    return s;
}

double jaccard(const ShingleSet& a, const ShingleSet& b) {
    if (a.hashes.empty() && b.hashes.empty()) return 1.0;
    std::size_t inter = 0, i = 0, j = 0;
    while (i < a.hashes.size() && j < b.hashes.size()) {
        if (a.hashes[i] == b.hashes[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (a.hashes[i] < b.hashes[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = a.hashes.size() + b.hashes.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint64_t> minhash_signature(const ShingleSet& s, std::size_t num_hashes, std::uint64_t seed) {
    std::vector<std::uint64_t> sig(num_hashes, ~0ULL);
    for (std::size_t k = 0; k < num_hashes; ++k) {
        const std::uint64_t salt = mix64(seed + 0x9e3779b97f4a7c15ULL * (k + 1));
        for (std::uint64_t h : s.hashes) sig[k] = std::min(sig[k], mix64(h ^ salt));
    }
    return sig;
}

double minhash_similarity(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    if (a.size() != b.size() || a.empty()) throw Error("minhash signatures differ in length");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
    return static_cast<double>(agree) / static_cast<double>(a.size());
}

DedupResult dedup_corpus(const std::vector<RawDocument>& documents, const DedupOptions& options) {
    if (options.shingle_width == 0) throw Error("dedup: shingle width must be >= 1");
    if (!(options.threshold > 0.0 && options.threshold <= 1.0)) throw Error("dedup: threshold must be in (0, 1]");

    const std::size_t n = documents.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return documents[a].id < documents[b].id; });

    std::vector<std::string> normalized(n);
    std::vector<ShingleSet> shingles(n);
    for (std::size_t i = 0; i < n; ++i) {
        normalized[i] = text::normalize_whitespace(documents[i].body);
        shingles[i] = make_shingles(documents[i].body, options.shingle_width);
    }

    const bool use_minhash = n > options.minhash_above;
    std::vector<std::vector<std::uint64_t>> sigs;
    std::size_t rows = 0;
    std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> buckets;
    if (use_minhash) {
        if (options.bands == 0 || options.num_hashes % options.bands != 0) {
            throw Error("dedup: num_hashes must be a multiple of bands");
        }
        rows = options.num_hashes / options.bands;
        sigs.resize(n);
        for (std::size_t i = 0; i < n; ++i) sigs[i] = minhash_signature(shingles[i], options.num_hashes);
        buckets.resize(options.bands);
    }
    auto band_key = [&](std::size_t doc, std::size_t band) {
        std::uint64_t h = 0x84222325cbf29ce4ULL;
        for (std::size_t r = 0; r < rows; ++r) h = mix64(h ^ sigs[doc][band * rows + r]);
        return h;
    };

    std::unordered_map<std::string, std::size_t> exact;  // normalized body -> kept doc
    std::vector<std::size_t> kept_docs;
    std::vector<bool> keep(n, false);
    DedupResult result;

    for (std::size_t doc : order) {
        if (auto it = exact.find(normalized[doc]); it != exact.end()) {
            result.removals.push_back({documents[doc].id, documents[it->second].id, 1.0, "exact_duplicate"});
            continue;
        }
        std::vector<std::size_t> candidates;
        if (use_minhash) {
            std::set<std::size_t> seen;
            for (std::size_t b = 0; b < options.bands; ++b) {
                auto it = buckets[b].find(band_key(doc, b));
                if (it != buckets[b].end()) seen.insert(it->second.begin(), it->second.end());
            }
            candidates.assign(seen.begin(), seen.end());
        } else {
            candidates = kept_docs;
        }
        double best = -1.0;
        std::size_t witness = 0;
        for (std::size_t other : candidates) {
            const double sim = jaccard(shingles[doc], shingles[other]);
            if (sim > best) {
                best = sim;
                witness = other;
            }
        }
        if (best >= options.threshold) {
            result.removals.push_back({documents[doc].id, documents[witness].id, best, "near_duplicate"});
            continue;
        }
        keep[doc] = true;
        kept_docs.push_back(doc);
        exact.emplace(normalized[doc], doc);
        if (use_minhash) {
            for (std::size_t b = 0; b < options.bands; ++b) buckets[b][band_key(doc, b)].push_back(doc);
        }
    }
    // Candidates above come from kept_docs in id order, so ties resolve to the earliest id.
    for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) result.kept.push_back(documents[i]);
    }
    return result;
}

json dedup_report_json(const DedupResult& result) {
    json removals = json::array();
    for (const auto& r : result.removals) {
        removals.push_back({{"removed", r.removed_id},
                            {"witness", r.witness_id},
                            {"similarity", r.similarity},
                            {"reason", r.reason}});
    }
    json kept = json::array();
    for (const auto& d : result.kept) kept.push_back(d.id);
    return {{"kept", kept}, {"removals", removals}};
}

// --- loading ------------------------------------------------------------------------

std::vector<RawDocument> load_documents(const fs::path& dir, DocKind kind, const std::vector<std::string>& extensions) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (extensions.empty() || std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<RawDocument> docs;
    for (const auto& f : files) {
        RawDocument d;
        d.body = read_file(f);
        d.kind = kind;
        d.id = fs::relative(f, dir).generic_string();
        if (!text::trim(d.body).empty()) docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<ForumThread> load_forum_export(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), e.byte);
    }
    if (!doc.is_array()) throw Error(path.string() + ": forum export must be a JSON array");
    std::vector<ForumThread> threads;
    for (const auto& t : doc) {
        ForumThread th;
        th.subject = t.value("subject", "");
        for (const auto& p : t.at("posts")) th.posts.push_back({p.value("author", ""), p.at("body").get<std::string>()});
        if (th.posts.empty()) throw Error(path.string() + ": thread '" + th.subject + "' has no posts");
        threads.push_back(std::move(th));
    }
    return threads;
}

}  // namespace twinforge::corpus
