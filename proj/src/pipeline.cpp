#include "twinforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <regex>
#include <set>
#include <thread>

#include "twinforge/digest.hpp"
#include "twinforge/judge.hpp"
#include "twinforge/metrics.hpp"
#include "twinforge/syntax.hpp"
#include "twinforge/text.hpp"

namespace twinforge::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(StageKind k) {
    switch (k) {
        case StageKind::expand: return "expand";
        case StageKind::filter: return "filter";
        case StageKind::hook: return "hook";
        case StageKind::branch: return "branch";
    }
    return "?";
}

// --- stage graph -------------------------------------------------------------

StageGraph StageGraph::standard(const std::map<std::string, bool>& toggles) {
    struct Decl {
        const char* name;
        StageKind kind;
        const char* in;
        const char* out;
    };
    static const Decl decls[] = {
        {"ingest", StageKind::expand, "sources", "items.ingested"},
        {"lazy_user_setting", StageKind::hook, "items.ingested", "items.configured"},
        {"synthesize", StageKind::expand, "items.configured", "items.synthesized"},
        {"dedup", StageKind::filter, "items.synthesized", "items.unique"},
        {"self_evolution", StageKind::hook, "items.unique", "items.evolved"},
        {"validate", StageKind::filter, "items.evolved", "items.valid"},
        {"review_export", StageKind::filter, "items.valid", "items.final"},
        {"evaluate", StageKind::branch, "eval_tasks", "scores.similarity"},
        {"judge", StageKind::branch, "eval_tasks", "scores.judge"},
        {"report", StageKind::branch, "scores", "report"},
    };
    StageGraph g;
    for (const auto& d : decls) {
        auto it = toggles.find(d.name);
        g.stages.push_back({d.name, d.kind, it == toggles.end() || it->second, d.in, d.out});
    }
    return g;
}

const StageSpec& StageGraph::at(std::string_view name) const {
    for (const auto& s : stages) {
        if (s.name == name) return s;
    }
    throw Error("no stage named '" + std::string(name) + "'");
}

// --- config ------------------------------------------------------------------

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ConfigError("unknown key '" + k + "' in " + where);
        }
    }
}

llm::ModelHandle model_from_json(const json& j, const std::string& where) {
    check_keys(j, {"model_id", "endpoint"}, where);
    llm::ModelHandle m;
    m.model_id = j.at("model_id").get<std::string>();
    m.endpoint = j.at("endpoint").get<std::string>();
    if (m.model_id.empty() || m.endpoint.empty()) throw ConfigError(where + " needs model_id and endpoint");
    return m;
}

json model_to_json(const llm::ModelHandle& m) { return {{"model_id", m.model_id}, {"endpoint", m.endpoint}}; }

std::vector<synthesis::TemplateKind> kinds_from_json(const json& j) {
    std::vector<synthesis::TemplateKind> out;
    for (const auto& k : j) {
        const auto kind = synthesis::parse_template_kind(k.get<std::string>());
        if (kind == synthesis::TemplateKind::judge) throw ConfigError("judge is not a synthesis template");
        out.push_back(kind);
    }
    return out;
}

json kinds_to_json(const std::vector<synthesis::TemplateKind>& ks) {
    json a = json::array();
    for (auto k : ks) a.push_back(synthesis::to_string(k));
    return a;
}

std::string path_str(const fs::path& p) { return p.generic_string(); }

}  // namespace

fs::path PipelineConfig::resolve(const fs::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return base_dir / p;
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        check_keys(j, {"inputs", "output_dir", "eval_tasks", "extra_reports", "stages", "timestamp", "workers", "llm",
                       "synthesis", "dedup", "forum", "judge"},
                   "pipeline config");
        if (j.contains("inputs")) {
            const auto& in = j["inputs"];
            check_keys(in, {"scripts", "docs", "forum"}, "inputs");
            c.scripts_dir = in.value("scripts", "");
            c.docs_dir = in.value("docs", "");
            c.forum_file = in.value("forum", "");
        }
        c.output_dir = j.value("output_dir", "runs");
        c.eval_tasks = j.value("eval_tasks", "");
        c.extra_reports = j.value("extra_reports", "");

        const bool has_eval = !c.eval_tasks.empty();
        for (auto name : kStageOrder) {
            const bool branch = name == "evaluate" || name == "judge";
            c.stages[std::string(name)] = branch ? has_eval : true;
        }
        c.stages["report"] = has_eval || !c.extra_reports.empty();
        if (j.contains("stages")) {
            if (!j["stages"].is_object()) throw ConfigError("stages must be an object of booleans");
            for (const auto& [k, v] : j["stages"].items()) {
                if (!c.stages.count(k)) throw ConfigError("unknown stage '" + k + "'");
                if (!v.is_boolean()) throw ConfigError("stage toggle '" + k + "' must be boolean");
                c.stages[k] = v.get<bool>();
            }
        }
        c.timestamp = parse_timestamp(j.value("timestamp", "2024-01-01T00:00:00Z"));
        const auto workers = j.value("workers", 4);
        if (workers < 1) throw ConfigError("workers must be at least 1");
        c.workers = static_cast<std::size_t>(workers);

        if (j.contains("llm")) {
            const auto& l = j["llm"];
            check_keys(l, {"transport", "cache_dir", "offline", "max_in_flight"}, "llm");
            c.llm.transport = l.value("transport", c.llm.transport);
            c.llm.cache_dir = l.value("cache_dir", "");
            c.llm.offline = l.value("offline", false);
            c.llm.max_in_flight = l.value("max_in_flight", c.llm.max_in_flight);
        }
        if (c.llm.transport != "http" && c.llm.transport != "stub") {
            throw ConfigError("llm.transport must be 'http' or 'stub'");
        }
        if (j.contains("synthesis")) {
            const auto& s = j["synthesis"];
            check_keys(s, {"model", "script_kinds", "doc_kinds", "pairs_per_document", "temperature", "seed"},
                       "synthesis");
            if (s.contains("model")) c.synthesis.model = model_from_json(s["model"], "synthesis.model");
            if (s.contains("script_kinds")) c.synthesis.script_kinds = kinds_from_json(s["script_kinds"]);
            if (s.contains("doc_kinds")) c.synthesis.doc_kinds = kinds_from_json(s["doc_kinds"]);
            c.synthesis.pairs_per_document = s.value("pairs_per_document", c.synthesis.pairs_per_document);
            c.synthesis.temperature = s.value("temperature", c.synthesis.temperature);
            c.synthesis.seed = s.value("seed", c.synthesis.seed);
            if (c.synthesis.pairs_per_document < 1) throw ConfigError("pairs_per_document must be at least 1");
        }
        if (j.contains("dedup")) {
            const auto& d = j["dedup"];
            check_keys(d, {"shingle_width", "threshold"}, "dedup");
            c.dedup.shingle_width = d.value("shingle_width", c.dedup.shingle_width);
            c.dedup.threshold = d.value("threshold", c.dedup.threshold);
        }
        if (c.dedup.shingle_width < 1 || !(c.dedup.threshold > 0.0 && c.dedup.threshold <= 1.0)) {
            throw ConfigError("dedup needs shingle_width >= 1 and 0 < threshold <= 1");
        }
        if (j.contains("forum")) {
            const auto& f = j["forum"];
            check_keys(f, {"min_answer_chars", "redact", "redact_author_handles", "keywords_per_pair"}, "forum");
            c.forum.min_answer_chars = f.value("min_answer_chars", c.forum.min_answer_chars);
            c.forum.redact = f.value("redact", c.forum.redact);
            c.forum.redact_author_handles = f.value("redact_author_handles", c.forum.redact_author_handles);
            c.forum.keywords_per_pair = f.value("keywords_per_pair", c.forum.keywords_per_pair);
        }
        if (j.contains("judge")) {
            const auto& jj = j["judge"];
            check_keys(jj, {"model", "modes", "repeats"}, "judge");
            if (jj.contains("model")) c.judge.model = model_from_json(jj["model"], "judge.model");
            if (jj.contains("modes")) {
                c.judge.modes.clear();
                for (const auto& m : jj["modes"]) c.judge.modes.push_back(parse_judge_mode(m.get<std::string>()));
            }
            c.judge.repeats = jj.value("repeats", c.judge.repeats);
            if (c.judge.repeats < 1) throw ConfigError("judge.repeats must be at least 1");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }

    auto must_exist = [&](const fs::path& p, const char* what) {
        if (!p.empty() && !fs::exists(c.resolve(p))) {
            throw ConfigError(std::string(what) + " not found: " + c.resolve(p).string());
        }
    };
    must_exist(c.scripts_dir, "inputs.scripts");
    must_exist(c.docs_dir, "inputs.docs");
    must_exist(c.forum_file, "inputs.forum");
    must_exist(c.eval_tasks, "eval_tasks");
    must_exist(c.extra_reports, "extra_reports");
    if (c.stages["ingest"] && c.scripts_dir.empty() && c.docs_dir.empty() && c.forum_file.empty()) {
        throw ConfigError("ingest is enabled but no inputs are configured");
    }
    if ((c.stages["evaluate"] || c.stages["judge"]) && c.eval_tasks.empty()) {
        throw ConfigError("evaluate/judge are enabled but eval_tasks is not set");
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("pipeline config " + path.string() + ": " + e.what(), e.byte);
    }
    return from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& c) {
    json modes = json::array();
    for (auto m : c.judge.modes) modes.push_back(to_string(m));
    return {
        {"inputs", {{"scripts", path_str(c.scripts_dir)}, {"docs", path_str(c.docs_dir)}, {"forum", path_str(c.forum_file)}}},
        {"output_dir", path_str(c.output_dir)},
        {"eval_tasks", path_str(c.eval_tasks)},
        {"extra_reports", path_str(c.extra_reports)},
        {"stages", c.stages},
        {"timestamp", format_timestamp(c.timestamp)},
        {"workers", c.workers},
        {"llm",
         {{"transport", c.llm.transport},
          {"cache_dir", path_str(c.llm.cache_dir)},
          {"offline", c.llm.offline},
          {"max_in_flight", c.llm.max_in_flight}}},
        {"synthesis",
         {{"model", model_to_json(c.synthesis.model)},
          {"script_kinds", kinds_to_json(c.synthesis.script_kinds)},
          {"doc_kinds", kinds_to_json(c.synthesis.doc_kinds)},
          {"pairs_per_document", c.synthesis.pairs_per_document},
          {"temperature", c.synthesis.temperature},
          {"seed", c.synthesis.seed}}},
        {"dedup", {{"shingle_width", c.dedup.shingle_width}, {"threshold", c.dedup.threshold}}},
        {"forum",
         {{"min_answer_chars", c.forum.min_answer_chars},
          {"redact", c.forum.redact},
          {"redact_author_handles", c.forum.redact_author_handles},
          {"keywords_per_pair", c.forum.keywords_per_pair}}},
        {"judge", {{"model", model_to_json(c.judge.model)}, {"modes", modes}, {"repeats", c.judge.repeats}}},
    };
}

std::string config_digest(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()); }

// --- ledger ------------------------------------------------------------------

std::size_t StageRecord::dropped() const {
    std::size_t n = 0;
    for (const auto& [k, v] : drops) n += v;
    return n;
}

const StageRecord& RunLedger::stage(std::string_view name) const {
    for (const auto& s : stages) {
        if (s.name == name) return s;
    }
    throw Error("ledger has no stage '" + std::string(name) + "'");
}

bool RunLedger::conserves() const {
    const StageRecord* prev = nullptr;
    for (const auto& s : stages) {
        if (!s.skipped && s.out + s.dropped() != s.in) return false;
        if (s.kind != StageKind::expand && s.emitted != s.out) return false;
        if (s.kind == StageKind::branch) continue;
        if (prev && s.in != prev->emitted) return false;
        prev = &s;
    }
    return true;
}

json to_json(const RunLedger& l) {
    json stages = json::array();
    for (const auto& s : l.stages) {
        stages.push_back({{"name", s.name},
                          {"kind", to_string(s.kind)},
                          {"status", s.skipped ? "skipped" : "ran"},
                          {"in", s.in},
                          {"out", s.out},
                          {"emitted", s.emitted},
                          {"drops", s.drops},
                          {"details", s.details},
                          {"wall_seconds", s.wall_seconds}});
    }
    return {{"config_digest", l.config_digest},
            {"run_dir", l.run_dir.string()},
            {"stages", stages},
            {"artifacts", l.artifacts},
            {"conserves", l.conserves()},
            {"wall_seconds", l.wall_seconds}};
}

// --- stub model --------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string after_last(const std::string& hay, std::initializer_list<std::string_view> markers) {
    std::size_t best = std::string::npos;
    std::size_t len = 0;
    for (auto m : markers) {
        const auto p = hay.rfind(m);
        if (p != std::string::npos && (best == std::string::npos || p > best)) {
            best = p;
            len = m.size();
        }
    }
    return best == std::string::npos ? hay : hay.substr(best + len);
}

// Code lines of the document embedded in a synthesis prompt.
std::vector<std::string> content_lines(const std::string& prompt) {
    const std::string content = after_last(
        prompt, {"Context:\n", "Markdown Content:\n", "PyChrono Script Markdown file Content:\n\n```\n"});
    std::vector<std::string> fenced, plain;
    bool in_fence = false;
    for (const auto& l : text::split_lines(content)) {
        const std::string t = text::trim(l);
        if (t.starts_with("```")) {
            in_fence = !in_fence;
            continue;
        }
        if (t.empty()) continue;
        (in_fence ? fenced : plain).push_back(t);
    }
    if (!fenced.empty()) return fenced;
    std::vector<std::string> out;
    for (auto& l : plain) {
        if (!l.starts_with("#") && !l.starts_with("- id:") && !l.starts_with("- kind:")) out.push_back(l);
    }
    return out;
}

int requested_pairs(const std::string& prompt) {
    static const std::regex re(R"((?:Generate|Create) (\d+))");
    std::smatch m;
    if (std::regex_search(prompt, m, re)) return std::max(1, std::stoi(m[1].str()));
    return 1;
}

std::string stub_qa(const std::string& prompt) {
    const auto lines = content_lines(prompt);
    json arr = json::array();
    if (lines.empty()) return arr.dump();
    const int n = requested_pairs(prompt);
    const std::size_t offset = fnv1a(text::join(lines, "\n")) % lines.size();
    for (int i = 0; i < n; ++i) {
        const auto& line =
            lines[(offset + (static_cast<std::size_t>(i) * lines.size()) / static_cast<std::size_t>(n)) % lines.size()];
        arr.push_back({{"instruction", "In a PyChrono simulation, what does the statement `" + line + "` accomplish?"},
                       {"input", ""},
                       {"output", "The statement `" + line +
                                      "` configures part of the simulation model; keep it before the "
                                      "simulation loop so the system is fully set up when stepping starts."}});
    }
    return arr.dump(2);
}

std::string stub_debug(const std::string& prompt) {
    const auto lines = content_lines(prompt);
    json arr = json::array();
    if (lines.size() < 2) return arr.dump();
    const int n = requested_pairs(prompt);
    for (int i = 0; i < n; ++i) {
        const std::size_t cut = 1 + (static_cast<std::size_t>(i) * (lines.size() - 1)) / static_cast<std::size_t>(n);
        std::vector<std::string> buggy = lines;
        const std::string removed = buggy[cut];
        buggy.erase(buggy.begin() + static_cast<std::ptrdiff_t>(cut));
        const auto bug = kAllBugCategories[fnv1a(removed) % std::size(kAllBugCategories)];
        arr.push_back({{"instruction", "This PyChrono script does not behave as expected:\n```python\n" +
                                           text::join(buggy, "\n") + "\n```"},
                       {"input", ""},
                       {"output", "The statement `" + removed +
                                      "` is missing, so the model is incomplete. Corrected code:\n```python\n" +
                                      text::join(lines, "\n") + "\n```"},
                       {"bug_category", to_string(bug)}});
    }
    return arr.dump(2);
}

std::string stub_judge(const std::string& prompt) {
    const auto score = 40 + fnv1a(text::normalize_whitespace(prompt)) % 56;
    return "The script covers the main setup steps; deductions apply for minor deviations.\nFinal score: [[" +
           std::to_string(score) + "]]";
}

class StubTransport final : public llm::Transport {
public:
    llm::HttpResponse post(const std::string&, const std::string& body,
                           const std::map<std::string, std::string>&) override {
        json req;
        try {
            req = json::parse(body);
        } catch (const json::exception&) {
            return {400, R"({"error":"bad json"})"};
        }
        std::string prompt;
        for (const auto& m : req.value("messages", json::array())) {
            if (m.value("role", "") == "user") prompt = m.value("content", "");
        }
        std::string content;
        if (prompt.find("[The Start of Assistant's Answer]") != std::string::npos) {
            content = stub_judge(prompt);
        } else if (prompt.find("**debugging tasks**") != std::string::npos) {
            content = stub_debug(prompt);
        } else {
            content = stub_qa(prompt);
        }
        llm::Usage usage;
        usage.prompt_tokens = static_cast<int>(synthesis::estimate_tokens(prompt));
        usage.completion_tokens = static_cast<int>(synthesis::estimate_tokens(content));
        return {200, llm::chat_completion_body(content, usage)};
    }
};

}  // namespace

std::shared_ptr<llm::Transport> make_stub_transport() { return std::make_shared<StubTransport>(); }

std::unique_ptr<llm::ChatClient> make_client(const LlmSettings& s) {
    llm::ClientOptions o;
    o.cache_dir = s.cache_dir;
    o.offline = s.offline;
    o.max_in_flight_per_endpoint = s.max_in_flight;
    std::shared_ptr<llm::Transport> t;
    if (s.transport == "stub") {
        t = make_stub_transport();
    } else {
        t = std::make_shared<llm::HttpTransport>();
    }
    return std::make_unique<llm::ChatClient>(o, t);
}

// --- run ---------------------------------------------------------------------

namespace {

struct Item {
    std::string id;
    bool is_document = true;
    corpus::DocKind doc_kind = corpus::DocKind::script;
    std::string raw;
    std::string markdown;
    SftRecord record;
    std::size_t redactions = 0;
};

std::string pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

std::string dedup_text(const Item& it) {
    if (it.is_document) return it.raw;
    return it.record.instruction + "\n" + it.record.input + "\n" + it.record.output;
}

PretrainSample as_pretrain(const Item& it) {
    PretrainSample s;
    s.text = it.markdown;
    s.source_kind = it.doc_kind == corpus::DocKind::script ? SourceKind::code_example : SourceKind::documentation;
    s.source_id = it.id;
    return s;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
    if (n == 0) return;
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) f(i);
    };
    const std::size_t count = std::min(std::max<std::size_t>(workers, 1), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(loop);
    loop();
    for (auto& t : pool) t.join();
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

struct EvalTask {
    std::string task_id;
    std::string model_id;
    Variant variant = Variant::pretrain;
    std::string candidate;
    std::optional<std::string> reference;
    std::optional<std::string> api_doc;
};

std::vector<EvalTask> load_eval_tasks(const fs::path& path) {
    std::vector<EvalTask> tasks;
    std::size_t line_no = 0;
    for (const auto& line : text::split_lines(read_file(path))) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            EvalTask t;
            t.task_id = j.at("task_id").get<std::string>();
            t.model_id = j.at("model_id").get<std::string>();
            t.variant = parse_variant(j.at("variant").get<std::string>());
            t.candidate = j.at("candidate").get<std::string>();
            if (j.contains("reference") && j["reference"].is_string()) t.reference = j["reference"].get<std::string>();
            if (j.contains("api_doc") && j["api_doc"].is_string()) t.api_doc = j["api_doc"].get<std::string>();
            tasks.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return tasks;
}

// Mean per (model, variant) in first-appearance order.
std::vector<ScoreReport> mean_reports(const std::vector<ScoreReport>& per_task, const std::string& metric) {
    std::vector<ScoreReport> out;
    std::vector<double> sums;
    for (const auto& r : per_task) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const ScoreReport& o) { return o.model_id == r.model_id && o.variant == r.variant; });
        if (it == out.end()) {
            ScoreReport s;
            s.model_id = r.model_id;
            s.variant = r.variant;
            s.metric_name = metric;
            out.push_back(s);
            sums.push_back(0.0);
            it = std::prev(out.end());
        }
        sums[static_cast<std::size_t>(it - out.begin())] += r.value;
        it->sample_count += 1;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].value = sums[i] / out[i].sample_count;
    return out;
}

void hash_artifacts(const fs::path& run_dir, std::map<std::string, std::string>& out) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, run_dir).generic_string();
        if (rel == "ledger.json") continue;
        out[rel] = sha256_file(f);
    }
}

}  // namespace

RunLedger run_pipeline(const PipelineConfig& config, llm::ChatClient* client) {
    const Stopwatch total;
    const StageGraph graph = StageGraph::standard(config.stages);
    if (!client && (graph.enabled("synthesize") || graph.enabled("judge"))) {
        throw ConfigError("synthesize and judge stages need an LLM client");
    }

    RunLedger ledger;
    ledger.config_digest = config_digest(config);
    ledger.run_dir = config.resolve(config.output_dir) / ("run-" + ledger.config_digest.substr(0, 16));
    fs::remove_all(ledger.run_dir);
    fs::create_directories(ledger.run_dir);
    const fs::path& run_dir = ledger.run_dir;

    std::vector<Item> items;
    auto begin = [&](const std::string& name) -> StageRecord& {
        StageRecord r;
        r.name = name;
        r.kind = graph.at(name).kind;
        ledger.stages.push_back(r);
        return ledger.stages.back();
    };
    auto skip = [&](StageRecord& r) {
        r.skipped = true;
        if (r.kind != StageKind::branch) r.in = r.out = r.emitted = items.size();
    };

    // ingest
    {
        const Stopwatch sw;
        StageRecord& r = begin("ingest");
        if (!graph.enabled("ingest")) {
            skip(r);
        } else {
            auto add_docs = [&](const fs::path& dir, corpus::DocKind kind, const std::vector<std::string>& exts,
                                const std::string& prefix) {
                if (dir.empty()) return;
                for (auto& d : corpus::load_documents(config.resolve(dir), kind, exts)) {
                    ++r.in;
                    if (text::trim(d.body).empty()) {
                        ++r.drops["empty_body"];
                        continue;
                    }
                    Item it;
                    it.id = prefix + d.id;
                    it.doc_kind = kind;
                    it.raw = d.body;
                    it.markdown = kind == corpus::DocKind::script ? corpus::script_to_markdown(d) : d.body;
                    items.push_back(std::move(it));
                    ++r.out;
                }
            };
            add_docs(config.scripts_dir, corpus::DocKind::script, {".py"}, "script:");
            add_docs(config.docs_dir, corpus::DocKind::doc_page, {".md", ".txt"}, "doc:");
            if (!config.forum_file.empty()) {
                const auto stop_words = corpus::StopWords::load_default();
                const auto threads = corpus::load_forum_export(config.resolve(config.forum_file));
                for (std::size_t t = 0; t < threads.size(); ++t) {
                    ++r.in;
                    if (threads[t].posts.size() < 2) {
                        ++r.drops["no_replies"];
                        continue;
                    }
                    const std::string thread_id = "forum:" + pad(t, 4);
                    std::size_t kept = 0;
                    for (const auto& cand : corpus::ingest_forum_thread(threads[t], stop_words, config.forum)) {
                        if (!cand.logic_valid) {
                            ++r.details["pairs_logic_invalid"];
                            continue;
                        }
                        Item it;
                        it.id = thread_id + "#" + pad(kept++, 3);
                        it.is_document = false;
                        it.doc_kind = corpus::DocKind::forum_thread;
                        it.redactions = cand.redactions;
                        it.record.instruction = cand.question;
                        it.record.output = cand.answer;
                        it.record.category = Category::sim;
                        it.record.provenance.origin = Origin::rule_based;
                        it.record.provenance.source_document = thread_id;
                        it.record.provenance.timestamp = config.timestamp;
                        if (!cand.keywords.empty()) it.record.metadata["keywords"] = text::join(cand.keywords, ",");
                        if (cand.redactions) it.record.metadata["redactions"] = std::to_string(cand.redactions);
                        items.push_back(std::move(it));
                    }
                    r.details["pairs_kept"] += kept;
                    if (kept == 0) {
                        ++r.drops["logic_invalid"];
                    } else {
                        ++r.out;
                    }
                }
            }
            r.emitted = items.size();
        }
        r.wall_seconds = sw.seconds();
    }

    // Inert extension point: counts pass straight through.
    auto hook = [&](const std::string& name) {
        const Stopwatch sw;
        StageRecord& r = begin(name);
        if (!graph.enabled(name)) {
            skip(r);
        } else {
            r.in = r.out = r.emitted = items.size();
        }
        r.wall_seconds = sw.seconds();
    };
    hook("lazy_user_setting");

    // synthesize
    std::vector<json> failures;
    {
        const Stopwatch sw;
        StageRecord& r = begin("synthesize");
        if (!graph.enabled("synthesize")) {
            skip(r);
        } else {
            struct Outcome {
                std::vector<Item> records;
                std::vector<json> failures;
                std::map<std::string, std::size_t> details;
            };
            std::vector<Outcome> results(items.size());
            parallel_for(items.size(), config.workers, [&](std::size_t i) {
                const Item& doc = items[i];
                if (!doc.is_document) return;
                Outcome& o = results[i];
                const auto& kinds = doc.doc_kind == corpus::DocKind::script ? config.synthesis.script_kinds
                                                                             : config.synthesis.doc_kinds;
                for (auto kind : kinds) {
                    synthesis::SynthesisOptions opts;
                    opts.model = config.synthesis.model;
                    opts.temperature = config.synthesis.temperature;
                    opts.source_document = doc.id;
                    opts.timestamp = config.timestamp;
                    opts.seed = config.synthesis.seed;
                    const std::string kind_name(synthesis::to_string(kind));
                    synthesis::SynthesisResult res;
                    try {
                        res = kind == synthesis::TemplateKind::debug_qa
                                  ? synthesis::synthesize_debug_pairs(doc.markdown, config.synthesis.pairs_per_document,
                                                                      *client, opts)
                                  : synthesis::synthesize_qa_pairs(doc.markdown, config.synthesis.pairs_per_document,
                                                                   kind, *client, opts);
                    } catch (const Error& e) {
                        res.failure = synthesis::SynthesisFailure{doc.id, kind_name, 0, e.what(), ""};
                    }
                    if (res.failure) {
                        o.failures.push_back(synthesis::to_json(*res.failure));
                        ++o.details["failed_requests"];
                    }
                    o.details["items_dropped"] += res.dropped.size();
                    for (std::size_t k = 0; k < res.records.size(); ++k) {
                        Item it;
                        it.id = doc.id + "#" + kind_name + "#" + pad(k, 3);
                        it.is_document = false;
                        it.doc_kind = doc.doc_kind;
                        it.record = std::move(res.records[k]);
                        o.records.push_back(std::move(it));
                    }
                    o.details["records_" + kind_name] += res.records.size();
                }
            });
            std::vector<Item> next;
            r.in = items.size();
            for (std::size_t i = 0; i < items.size(); ++i) {
                next.push_back(std::move(items[i]));
                for (auto& rec : results[i].records) next.push_back(std::move(rec));
                for (auto& f : results[i].failures) failures.push_back(std::move(f));
                for (const auto& [k, v] : results[i].details) r.details[k] += v;
            }
            r.out = r.in;
            items = std::move(next);
            r.emitted = items.size();
        }
        r.wall_seconds = sw.seconds();
    }
    if (graph.enabled("synthesize")) write_file_atomic(run_dir / "synthesis_failures.jsonl", jsonl(failures));

    // dedup
    {
        const Stopwatch sw;
        StageRecord& r = begin("dedup");
        if (!graph.enabled("dedup")) {
            skip(r);
        } else {
            std::vector<corpus::RawDocument> docs;
            for (const auto& it : items) {
                docs.push_back({dedup_text(it), it.is_document ? it.doc_kind : corpus::DocKind::forum_thread, it.id});
            }
            const auto result = corpus::dedup_corpus(docs, config.dedup);
            std::set<std::string> kept;
            for (const auto& d : result.kept) kept.insert(d.id);
            for (const auto& rm : result.removals) ++r.drops[rm.reason];
            r.in = items.size();
            std::erase_if(items, [&](const Item& it) { return !kept.count(it.id); });
            r.out = r.emitted = items.size();
            write_file_atomic(run_dir / "dedup_report.json", corpus::dedup_report_json(result).dump(2) + "\n");
        }
        r.wall_seconds = sw.seconds();
    }

    hook("self_evolution");

    // validate
    {
        const Stopwatch sw;
        StageRecord& r = begin("validate");
        if (!graph.enabled("validate")) {
            skip(r);
        } else {
            r.in = items.size();
            std::vector<json> problems;
            std::erase_if(items, [&](const Item& it) {
                const auto v = it.is_document ? validate_record(as_pretrain(it)) : validate_record(it.record);
                if (v.ok()) return false;
                json vs = json::array();
                for (const auto& viol : v.violations) {
                    ++r.details["violation:" + viol.field];
                    vs.push_back({{"field", viol.field}, {"message", viol.message}});
                }
                problems.push_back({{"id", it.id}, {"violations", vs}});
                ++r.drops["invalid_record"];
                return true;
            });
            r.out = r.emitted = items.size();
            write_file_atomic(run_dir / "validation_problems.jsonl", jsonl(problems));
        }
        r.wall_seconds = sw.seconds();
    }

    // review_export: flags records for human review; nothing is removed.
    {
        const Stopwatch sw;
        StageRecord& r = begin("review_export");
        if (!graph.enabled("review_export")) {
            skip(r);
        } else {
            r.in = r.out = r.emitted = items.size();
            std::map<Category, std::vector<SftRecord>> by_category;
            for (const auto& it : items) {
                if (!it.is_document) by_category[it.record.category].push_back(it.record);
            }
            const auto dups = find_cross_file_duplicates(by_category);
            const std::set<std::string> dup_set(dups.begin(), dups.end());
            std::vector<json> queue;
            for (const auto& it : items) {
                if (it.is_document) continue;
                std::vector<std::string> reasons;
                if (it.redactions) reasons.push_back("redacted_content");
                if (dup_set.count(it.record.instruction)) reasons.push_back("cross_category_duplicate");
                if (text::trim(it.record.output).size() < 40) reasons.push_back("short_output");
                if (reasons.empty()) continue;
                for (const auto& why : reasons) ++r.details["flag:" + why];
                queue.push_back({{"id", it.id},
                                 {"reasons", reasons},
                                 {"category", to_string(it.record.category)},
                                 {"instruction", it.record.instruction},
                                 {"input", it.record.input},
                                 {"output", it.record.output},
                                 {"provenance", it.record.provenance}});
            }
            r.details["flagged"] = queue.size();
            write_file_atomic(run_dir / "review_queue.jsonl", jsonl(queue));
        }
        r.wall_seconds = sw.seconds();
    }

    // Datasets produced by the data stages.
    if (graph.enabled("ingest")) {
        std::vector<PretrainSample> docs;
        std::vector<SftRecord> records;
        for (const auto& it : items) {
            if (it.is_document) {
                docs.push_back(as_pretrain(it));
            } else {
                records.push_back(it.record);
            }
        }
        write_pretrain_dataset(docs, run_dir / "pretrain.jsonl");
        write_sft_collection(records, run_dir / "sft");
    }

    // evaluation branch
    std::vector<EvalTask> tasks;
    if (graph.enabled("evaluate") || graph.enabled("judge")) tasks = load_eval_tasks(config.resolve(config.eval_tasks));
    std::vector<ScoreReport> reports;
    {
        const Stopwatch sw;
        StageRecord& r = begin("evaluate");
        if (!graph.enabled("evaluate")) {
            skip(r);
        } else {
            const syntax::PythonGrammar grammar;
            std::vector<ScoreReport> rouge, codebleu;
            std::vector<json> rows;
            r.in = tasks.size();
            for (const auto& t : tasks) {
                if (!t.reference) {
                    ++r.drops["missing_reference"];
                    continue;
                }
                json row = {{"task_id", t.task_id}, {"model_id", t.model_id}, {"variant", to_string(t.variant)}};
                try {
                    const auto cb = metrics::codebleu_score(t.candidate, *t.reference, grammar);
                    const double rl = metrics::rouge_score(t.candidate, *t.reference, metrics::RougeVariant::rougeLsum).f1;
                    ScoreReport s;
                    s.model_id = t.model_id;
                    s.variant = t.variant;
                    s.value = rl;
                    rouge.push_back(s);
                    s.value = cb.total;
                    codebleu.push_back(s);
                    row["rouge_lsum"] = rl;
                    row["codebleu"] = cb.total;
                    row["codebleu_components"] = {{"bleu", cb.bleu},
                                                  {"weighted_bleu", cb.weighted_bleu},
                                                  {"syntax", cb.syntax},
                                                  {"dataflow", cb.dataflow ? json(*cb.dataflow) : json(nullptr)}};
                    if (cb.candidate_error) ++r.details["candidate_unparseable"];
                    rows.push_back(row);
                    ++r.out;
                } catch (const metrics::MetricError&) {
                    ++r.drops["reference_unparseable"];
                }
            }
            for (auto& s : mean_reports(rouge, "rouge_lsum")) reports.push_back(s);
            for (auto& s : mean_reports(codebleu, "codebleu")) reports.push_back(s);
            r.emitted = r.out;
            write_file_atomic(run_dir / "similarity_scores.jsonl", jsonl(rows));
        }
        r.wall_seconds = sw.seconds();
    }

    {
        const Stopwatch sw;
        StageRecord& r = begin("judge");
        if (!graph.enabled("judge")) {
            skip(r);
        } else {
            const auto rubric = judge::RubricSpec::load_default();
            judge::JudgeConfig base;
            base.judge_model = config.judge.model;
            base.repeats = config.judge.repeats;
            struct Slot {
                std::optional<judge::JudgeOutcome> outcome;
                std::string drop;
            };
            const std::size_t modes = config.judge.modes.size();
            std::vector<Slot> slots(tasks.size() * modes);
            parallel_for(slots.size(), config.workers, [&](std::size_t i) {
                const auto& t = tasks[i / modes];
                judge::JudgeConfig cfg = base;
                cfg.mode = config.judge.modes[i % modes];
                judge::TaskContext ctx{t.task_id, t.reference, t.api_doc, t.model_id, t.variant};
                try {
                    slots[i].outcome = judge::judge_candidate(t.candidate, ctx, cfg, *client, rubric);
                } catch (const judge::MissingInput&) {
                    slots[i].drop = "missing_input";
                } catch (const Error&) {
                    slots[i].drop = "judging_failure";
                }
            });
            r.in = slots.size();
            std::vector<ScoreReport> per_task;
            std::vector<json> rows;
            for (auto& s : slots) {
                if (!s.outcome) {
                    ++r.drops[s.drop];
                    continue;
                }
                ++r.out;
                per_task.push_back(s.outcome->report);
                rows.push_back(judge::to_json(*s.outcome));
            }
            // Keep first-appearance model order; aggregate_scores sorts by key.
            for (const auto& row : judge::aggregate_scores(per_task)) {
                ScoreReport s;
                s.model_id = row.model_id;
                s.variant = row.variant;
                s.metric_name = row.metric_name;
                s.config = row.mode;
                s.value = row.mean;
                s.sample_count = row.sample_count;
                reports.push_back(s);
            }
            r.emitted = r.out;
            write_file_atomic(run_dir / "judge_outcomes.jsonl", jsonl(rows));
        }
        r.wall_seconds = sw.seconds();
    }

    {
        const Stopwatch sw;
        StageRecord& r = begin("report");
        if (!graph.enabled("report")) {
            skip(r);
        } else {
            if (!config.extra_reports.empty()) {
                for (auto& s : load_score_reports(config.resolve(config.extra_reports))) reports.push_back(s);
            }
            r.in = reports.size();
            for (const auto& s : reports) {
                if (!validate_report(s).ok()) {
                    ++r.drops["invalid_report"];
                } else {
                    ++r.out;
                }
            }
            std::erase_if(reports, [](const ScoreReport& s) { return !validate_report(s).ok(); });
            r.emitted = r.out;
            write_file_atomic(run_dir / "scores.json", json(reports).dump(2) + "\n");
            write_file_atomic(run_dir / "report.md", render_report(reports, ReportFormat::markdown));
            write_file_atomic(run_dir / "report.csv", render_report(reports, ReportFormat::csv));
        }
        r.wall_seconds = sw.seconds();
    }

    hash_artifacts(run_dir, ledger.artifacts);
    ledger.wall_seconds = total.seconds();
    write_file_atomic(run_dir / "ledger.json", to_json(ledger).dump(2) + "\n");
    return ledger;
}

// --- report ------------------------------------------------------------------

ReportFormat parse_report_format(std::string_view s) {
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "csv") return ReportFormat::csv;
    throw Error("unknown report format '" + std::string(s) + "'");
}

namespace {

std::string variant_label(Variant v) {
    switch (v) {
        case Variant::pretrain: return "Pre";
        case Variant::icl: return "ICL";
        case Variant::lora: return "LoRA";
        case Variant::sft: return "SFT";
    }
    return "?";
}

// Column index for a report, or -1 if the table has no place for it.
int column_of(const ScoreReport& r) {
    const std::string m = text::to_lower(r.metric_name);
    if (m == "rouge_lsum" || m == "rougelsum" || m == "rouge-lsum") return 0;
    if (m == "codebleu") return 1;
    if (m.starts_with("judge") && r.config) {
        switch (*r.config) {
            case JudgeMode::ref_doc: return 2;
            case JudgeMode::ref: return 3;
            case JudgeMode::doc: return 4;
        }
    }
    return -1;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string render_report(const std::vector<ScoreReport>& reports, ReportFormat format) {
    static const char* kDash = "—";
    std::vector<std::string> models;
    struct Cell {
        double sum = 0;
        int n = 0;
    };
    std::map<std::pair<std::string, Variant>, std::array<Cell, 5>> cells;
    for (const auto& r : reports) {
        const int col = column_of(r);
        if (col < 0) continue;
        if (std::find(models.begin(), models.end(), r.model_id) == models.end()) models.push_back(r.model_id);
        auto& c = cells[{r.model_id, r.variant}][static_cast<std::size_t>(col)];
        c.sum += r.value;
        ++c.n;
    }

    std::vector<std::vector<std::string>> rows;
    for (const auto& m : models) {
        for (auto v : {Variant::pretrain, Variant::icl, Variant::lora, Variant::sft}) {
            auto it = cells.find({m, v});
            if (it == cells.end()) continue;
            std::vector<std::string> row = {m, variant_label(v)};
            for (const auto& c : it->second) row.push_back(c.n ? judge::format_2dp(c.sum / c.n) : kDash);
            rows.push_back(std::move(row));
        }
    }

    std::string out;
    if (format == ReportFormat::markdown) {
        out += "| Model | | Similarity-based | | LLM-as-Judge | | |\n";
        out += "|---|---|---:|---:|---:|---:|---:|\n";
        out += "| **LLM** | **Variant** | **ROUGE-LSUM** | **CodeBLEU** | **J-LLM Ref+Doc** | **J-LLM Ref** | "
               "**J-LLM Doc** |\n";
        for (const auto& row : rows) out += "| " + text::join(row, " | ") + " |\n";
    } else {
        out += "LLM,Variant,Similarity-based ROUGE-LSUM,Similarity-based CodeBLEU,LLM-as-Judge Ref+Doc,"
               "LLM-as-Judge Ref,LLM-as-Judge Doc\n";
        for (const auto& row : rows) {
            std::vector<std::string> f;
            for (const auto& c : row) f.push_back(csv_field(c));
            out += text::join(f, ",") + "\n";
        }
    }
    return out;
}

std::vector<ScoreReport> load_score_reports(const fs::path& path) {
    try {
        const auto j = json::parse(read_file(path));
        const auto& arr = j.is_object() && j.contains("reports") ? j["reports"] : j;
        return arr.get<std::vector<ScoreReport>>();
    } catch (const json::parse_error& e) {
        throw ParseError("score reports " + path.string() + ": " + e.what(), e.byte);
    } catch (const json::exception& e) {
        throw ConfigError("score reports " + path.string() + ": " + e.what());
    }
}

}  // namespace twinforge::pipeline
