#include "twinforge/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twinforge/corpus.hpp"
#include "twinforge/datamodel.hpp"
#include "twinforge/digest.hpp"
#include "twinforge/exec.hpp"
#include "twinforge/judge.hpp"
#include "twinforge/llmclient.hpp"
#include "twinforge/metrics.hpp"
#include "twinforge/pipeline.hpp"
#include "twinforge/synthesis.hpp"
#include "twinforge/text.hpp"
#include "twinforge/trainmath.hpp"

namespace twinforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    bool json = false;
    int workers = 4;
    std::string root;

    fs::path path(const std::string& p) const {
        if (p.empty() || root.empty() || fs::path(p).is_absolute()) return p;
        return fs::path(root) / p;
    }
};

struct LlmFlags {
    std::string model = "stub-model";
    std::string endpoint = "stub://local";
    std::string cache_dir;
    bool offline = false;
    bool stub = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--model", model, "Model id")->capture_default_str();
        cmd->add_option("--endpoint", endpoint, "Chat completions URL")->capture_default_str();
        cmd->add_option("--cache-dir", cache_dir, "Response cache directory");
        cmd->add_flag("--offline", offline, "Serve from cache only");
        cmd->add_flag("--stub", stub, "Use the built-in deterministic stub model");
    }

    std::unique_ptr<llm::ChatClient> client(const Globals& g) const {
        pipeline::LlmSettings s;
        s.transport = stub ? "stub" : "http";
        s.cache_dir = g.path(cache_dir);
        s.offline = offline;
        return pipeline::make_client(s);
    }

    llm::ModelHandle handle() const { return {model, endpoint, Variant::pretrain}; }
};

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Every command fills a JSON result; human output is derived from it unless a
// command prints its own.
struct Result {
    int code = kExitOk;
    json data = json::object();
    std::string text;
};

void emit(const Globals& g, const Result& r, std::ostream& out) {
    if (g.json) {
        out << r.data.dump(2) << "\n";
    } else if (!r.text.empty()) {
        out << r.text;
        if (r.text.back() != '\n') out << "\n";
    } else {
        out << r.data.dump(2) << "\n";
    }
}

std::string read_text(const fs::path& p) { return read_file(p); }

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"twinforge: dataset synthesis, evaluation and fine-tuning math for simulation-script LLMs"};
    app.name("twinforge");
    app.require_subcommand(1);
    app.footer("Exit codes: 0 success, 1 data-level failures present, 2 usage or config error.");

    Globals g;
    app.add_flag("--json", g.json, "Machine-readable JSON on stdout")->configurable();
    app.add_option("--workers", g.workers, "Upper bound on parallel workers")->check(CLI::PositiveNumber);
    app.add_option("--root", g.root, "Resolve relative paths against this directory");
    app.fallthrough();

    std::function<Result()> action;

    // ingest
    std::string ing_scripts, ing_docs, ing_forum, ing_out;
    bool ing_keep_handles = false;
    std::size_t ing_min_chars = 20;
    auto* ingest = app.add_subcommand("ingest", "Convert scripts to markdown and forum threads to candidate pairs");
    ingest->add_option("--scripts", ing_scripts, "Directory of .py scripts");
    ingest->add_option("--docs", ing_docs, "Directory of .md/.txt documentation pages");
    ingest->add_option("--forum", ing_forum, "Forum export JSON");
    ingest->add_option("--out", ing_out, "Output directory")->required();
    ingest->add_option("--min-answer-chars", ing_min_chars, "Shorter answers are flagged logic-invalid")
        ->capture_default_str();
    ingest->add_flag("--keep-author-handles", ing_keep_handles, "Do not mask forum author handles");
    ingest->callback([&] {
        action = [&]() -> Result {
            Result r;
            const fs::path out_dir = g.path(ing_out);
            std::size_t n_docs = 0;
            auto put_docs = [&](const std::string& dir, corpus::DocKind kind, std::vector<std::string> exts) {
                if (dir.empty()) return;
                for (const auto& d : corpus::load_documents(g.path(dir), kind, exts)) {
                    const std::string md = kind == corpus::DocKind::script ? corpus::script_to_markdown(d) : d.body;
                    write_file_atomic(out_dir / "documents" / (d.id + ".md"), md);
                    ++n_docs;
                }
            };
            put_docs(ing_scripts, corpus::DocKind::script, {".py"});
            put_docs(ing_docs, corpus::DocKind::doc_page, {".md", ".txt"});
            std::size_t valid = 0, invalid = 0;
            if (!ing_forum.empty()) {
                corpus::ForumOptions fo;
                fo.min_answer_chars = ing_min_chars;
                fo.redact_author_handles = !ing_keep_handles;
                const auto stop = corpus::StopWords::load_default();
                std::string lines;
                for (const auto& t : corpus::load_forum_export(g.path(ing_forum))) {
                    for (const auto& c : corpus::ingest_forum_thread(t, stop, fo)) {
                        (c.logic_valid ? valid : invalid)++;
                        lines += json({{"subject", c.subject},
                                       {"question", c.question},
                                       {"answer", c.answer},
                                       {"answer_author", c.answer_author},
                                       {"keywords", c.keywords},
                                       {"redactions", c.redactions},
                                       {"logic_valid", c.logic_valid}})
                                     .dump() +
                                 "\n";
                    }
                }
                write_file_atomic(out_dir / "forum_candidates.jsonl", lines);
            }
            r.data = {{"documents", n_docs}, {"forum_pairs_valid", valid}, {"forum_pairs_invalid", invalid}};
            r.text = "documents: " + std::to_string(n_docs) + "\nforum pairs: " + std::to_string(valid) +
                     " valid, " + std::to_string(invalid) + " logic-invalid\n";
            return r;
        };
    });

    // synthesize
    std::string syn_input, syn_kind = "contextual_qa", syn_out, syn_source;
    int syn_pairs = 3;
    double syn_temp = 0.7;
    std::int64_t syn_seed = 0;
    LlmFlags syn_llm;
    auto* synth = app.add_subcommand("synthesize", "Generate SFT pairs from a markdown document");
    synth->add_option("--input", syn_input, "Markdown document")->required();
    synth->add_option("--kind", syn_kind, "contextual_qa, expert_qa or debug_qa")
        ->check(CLI::IsMember({"contextual_qa", "expert_qa", "debug_qa"}))
        ->capture_default_str();
    synth->add_option("--pairs", syn_pairs, "Pairs to request")->check(CLI::PositiveNumber)->capture_default_str();
    synth->add_option("--temperature", syn_temp, "Sampling temperature")->capture_default_str();
    synth->add_option("--seed", syn_seed, "Seed of the first attempt")->capture_default_str();
    synth->add_option("--source-id", syn_source, "Source document id (defaults to the input path)");
    synth->add_option("--out", syn_out, "SFT JSON output file");
    syn_llm.add(synth);
    synth->callback([&] {
        action = [&]() -> Result {
            Result r;
            auto client = syn_llm.client(g);
            synthesis::SynthesisOptions o;
            o.model = syn_llm.handle();
            o.temperature = syn_temp;
            o.seed = syn_seed;
            o.source_document = syn_source.empty() ? syn_input : syn_source;
            o.timestamp = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
            const std::string md = read_text(g.path(syn_input));
            const auto kind = synthesis::parse_template_kind(syn_kind);
            const auto res = kind == synthesis::TemplateKind::debug_qa
                                 ? synthesis::synthesize_debug_pairs(md, syn_pairs, *client, o)
                                 : synthesis::synthesize_qa_pairs(md, syn_pairs, kind, *client, o);
            if (!syn_out.empty() && !res.records.empty()) write_sft_dataset(res.records, g.path(syn_out));
            json dropped = json::array();
            for (const auto& d : res.dropped) dropped.push_back(synthesis::to_json(d));
            r.data = {{"records", res.records.size()},
                      {"dropped", dropped},
                      {"failure", res.failure ? synthesis::to_json(*res.failure) : json(nullptr)}};
            if (syn_out.empty()) r.data["output"] = json::parse(serialize_sft(res.records));
            r.text = "records: " + std::to_string(res.records.size()) + ", dropped: " +
                     std::to_string(res.dropped.size()) + (res.failure ? ", failure: " + res.failure->error : "");
            if (syn_out.empty()) r.text += "\n" + serialize_sft(res.records);
            r.code = res.failure ? kExitDataFailure : kExitOk;
            return r;
        };
    });

    // dedup
    std::string dd_input, dd_report, dd_kept;
    std::vector<std::string> dd_ext = {".py", ".md", ".txt"};
    std::size_t dd_width = 5;
    double dd_threshold = 0.8;
    auto* dedup = app.add_subcommand("dedup", "Remove exact and near-duplicate documents");
    dedup->add_option("--input", dd_input, "Directory of documents")->required();
    dedup->add_option("--ext", dd_ext, "File extensions to read")->capture_default_str();
    dedup->add_option("--width", dd_width, "Shingle width in words")->check(CLI::PositiveNumber)->capture_default_str();
    dedup->add_option("--threshold", dd_threshold, "Jaccard cutoff in (0, 1]")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    dedup->add_option("--report", dd_report, "Write the duplicate report JSON here");
    dedup->add_option("--kept", dd_kept, "Write the ids of kept documents here, one per line");
    dedup->callback([&] {
        action = [&]() -> Result {
            Result r;
            corpus::DedupOptions o;
            o.shingle_width = dd_width;
            o.threshold = dd_threshold;
            const auto docs = corpus::load_documents(g.path(dd_input), corpus::DocKind::doc_page, dd_ext);
            const auto res = corpus::dedup_corpus(docs, o);
            r.data = corpus::dedup_report_json(res);
            if (!dd_report.empty()) write_file_atomic(g.path(dd_report), r.data.dump(2) + "\n");
            std::string kept;
            for (const auto& d : res.kept) kept += d.id + "\n";
            if (!dd_kept.empty()) write_file_atomic(g.path(dd_kept), kept);
            r.text = "kept " + std::to_string(res.kept.size()) + " of " + std::to_string(docs.size()) + "\n";
            for (const auto& rm : res.removals) {
                r.text += "removed " + rm.removed_id + " (" + rm.reason + " of " + rm.witness_id + ", " +
                          fixed6(rm.similarity) + ")\n";
            }
            return r;
        };
    });

    // validate
    std::string val_kind = "sft", val_file;
    auto* validate = app.add_subcommand("validate", "Check an SFT or pretraining dataset file");
    validate->add_option("--kind", val_kind, "sft or pretrain")->check(CLI::IsMember({"sft", "pretrain"}))
        ->capture_default_str();
    validate->add_option("file", val_file, "Dataset file")->required();
    validate->callback([&] {
        action = [&]() -> Result {
            Result r;
            std::vector<RecordProblem> problems;
            std::size_t count = 0;
            if (val_kind == "sft") {
                const auto ds = read_sft_dataset(g.path(val_file));
                problems = ds.problems;
                count = ds.records.size();
            } else {
                const auto ds = read_pretrain_dataset(g.path(val_file));
                problems = ds.problems;
                count = ds.records.size();
            }
            r.data = {{"records", count}, {"ok", problems.empty()}, {"problems", problems}};
            r.text = std::to_string(count) + " records, " + std::to_string(problems.size()) + " problems\n";
            for (const auto& p : problems) {
                r.text += (p.index ? "record " + std::to_string(*p.index) : std::string("file")) + ": " + p.key +
                          ": " + p.message + "\n";
            }
            r.code = problems.empty() ? kExitOk : kExitDataFailure;
            return r;
        };
    });

    // evaluate
    std::string ev_cand, ev_ref;
    std::vector<std::string> ev_metrics = {"bleu", "rouge1", "rouge2", "rougeL", "rougeLsum", "codebleu"};
    auto* evaluate = app.add_subcommand("evaluate", "Similarity metrics between a candidate and a reference");
    evaluate->add_option("--candidate", ev_cand, "Candidate file")->required();
    evaluate->add_option("--reference", ev_ref, "Reference file")->required();
    evaluate->add_option("--metric", ev_metrics, "Metrics to compute")
        ->check(CLI::IsMember({"bleu", "rouge1", "rouge2", "rougeL", "rougeLsum", "codebleu"}))
        ->capture_default_str();
    evaluate->callback([&] {
        action = [&]() -> Result {
            Result r;
            const std::string c = read_text(g.path(ev_cand)), ref = read_text(g.path(ev_ref));
            for (const auto& m : ev_metrics) {
                try {
                    if (m == "bleu") {
                        r.data[m] = metrics::bleu_score(c, ref);
                    } else if (m == "codebleu") {
                        const syntax::PythonGrammar grammar;
                        const auto cb = metrics::codebleu_score(c, ref, grammar);
                        r.data[m] = {{"total", cb.total},
                                     {"bleu", cb.bleu},
                                     {"weighted_bleu", cb.weighted_bleu},
                                     {"syntax", cb.syntax},
                                     {"dataflow", cb.dataflow ? json(*cb.dataflow) : json(nullptr)}};
                        if (cb.candidate_error) r.data[m]["candidate_error"] = cb.candidate_error->message;
                    } else {
                        const auto s = metrics::rouge_score(c, ref, metrics::parse_rouge_variant(m));
                        r.data[m] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
                    }
                } catch (const metrics::MetricError& e) {
                    r.data[m] = {{"error", e.what()}};
                    r.code = kExitDataFailure;
                }
            }
            for (const auto& [k, v] : r.data.items()) {
                if (v.is_number()) {
                    r.text += k + ": " + fixed6(v.get<double>()) + "\n";
                } else if (v.contains("f1")) {
                    r.text += k + ": f1 " + fixed6(v["f1"].get<double>()) + "\n";
                } else if (v.contains("total")) {
                    r.text += k + ": " + fixed6(v["total"].get<double>()) + "\n";
                } else {
                    r.text += k + ": error: " + v["error"].get<std::string>() + "\n";
                }
            }
            return r;
        };
    });

    // exec-eval
    std::string ex_tasks, ex_runner, ex_out, ex_interp;
    std::vector<std::string> ex_scripts, ex_allow;
    std::vector<int> ex_k = {1};
    double ex_timeout = -1;
    bool ex_compile_only = false, ex_strict = false;
    auto* exec_eval = app.add_subcommand("exec-eval", "Compile-check and run scripts; report pass@k and compile@k");
    exec_eval->add_option("--tasks", ex_tasks, "JSONL of {task_id, script}; ids 'task#i' are samples of 'task'");
    exec_eval->add_option("scripts", ex_scripts, "Script files (id = file stem)");
    exec_eval->add_option("--runner-config", ex_runner, "Runner config JSON");
    exec_eval->add_option("--interpreter", ex_interp, "Interpreter override");
    exec_eval->add_option("--timeout", ex_timeout, "Per-run timeout in seconds");
    exec_eval->add_option("--k", ex_k, "k values for the estimators")->capture_default_str();
    exec_eval->add_option("--allow-import", ex_allow, "Allowlisted module (with --strict)");
    exec_eval->add_flag("--strict", ex_strict, "Reject imports outside the allowlist");
    exec_eval->add_flag("--compile-only", ex_compile_only, "Parse only; do not run");
    exec_eval->add_option("--out", ex_out, "Write per-run outcomes as JSONL");
    exec_eval->callback([&] {
        action = [&]() -> Result {
            Result r;
            std::vector<exec::Task> tasks;
            if (!ex_tasks.empty()) {
                for (const auto& line : text::split_lines(read_text(g.path(ex_tasks)))) {
                    if (text::trim(line).empty()) continue;
                    const auto j = json::parse(line);
                    tasks.push_back({j.at("task_id").get<std::string>(), j.at("script").get<std::string>()});
                }
            }
            for (const auto& s : ex_scripts) tasks.push_back({fs::path(s).stem().string(), read_text(g.path(s))});
            if (tasks.empty()) throw ConfigError("exec-eval needs --tasks or script files");
            exec::EvalOptions o;
            if (!ex_runner.empty()) o.runner = exec::runner_config_from_json(json::parse(read_text(g.path(ex_runner))));
            if (!ex_interp.empty()) o.runner.interpreter = ex_interp;
            if (ex_timeout > 0) o.runner.timeout_seconds = ex_timeout;
            o.compile.strict = ex_strict;
            o.compile.import_allowlist = ex_allow;
            o.compile_only = ex_compile_only;
            o.workers = static_cast<std::size_t>(g.workers);
            const syntax::PythonGrammar grammar;
            const auto outcomes = exec::evaluate_tasks(tasks, grammar, o);
            if (!ex_out.empty()) write_file_atomic(g.path(ex_out), exec::outcomes_jsonl(outcomes));
            const auto pass = exec::batches_by_task(outcomes, false);
            const auto comp = exec::batches_by_task(outcomes, true);
            json per = json::array();
            for (std::size_t i = 0; i < pass.size(); ++i) {
                json row = {{"task", pass[i].first},
                            {"n", pass[i].second.n},
                            {"passed", pass[i].second.c},
                            {"compiled", comp[i].second.c}};
                r.text += pass[i].first + ": n=" + std::to_string(pass[i].second.n) +
                          " passed=" + std::to_string(pass[i].second.c) + " compiled=" +
                          std::to_string(comp[i].second.c);
                for (int k : ex_k) {
                    if (k < 1 || k > pass[i].second.n) continue;
                    const double p = exec::estimate_at_k(pass[i].second, k);
                    const double c = exec::estimate_at_k(comp[i].second, k);
                    row["pass@" + std::to_string(k)] = p;
                    row["compile@" + std::to_string(k)] = c;
                    r.text += " pass@" + std::to_string(k) + "=" + fixed6(p) + " compile@" + std::to_string(k) + "=" +
                              fixed6(c);
                }
                r.text += "\n";
                per.push_back(row);
            }
            r.data = {{"tasks", per}, {"runs", outcomes.size()}};
            return r;
        };
    });

    // judge
    std::string jd_code, jd_ref, jd_doc, jd_mode = "ref_doc", jd_task = "task", jd_rubric;
    std::string jd_candidate = "candidate", jd_variant = "pretrain";
    int jd_repeats = 1;
    LlmFlags jd_llm;
    auto* judge_cmd = app.add_subcommand("judge", "Score a script with an LLM judge and the deduction rubric");
    judge_cmd->add_option("--code", jd_code, "Candidate script")->required();
    judge_cmd->add_option("--reference", jd_ref, "Reference script");
    judge_cmd->add_option("--api-doc", jd_doc, "API documentation link or text");
    judge_cmd->add_option("--mode", jd_mode, "ref_doc, ref or doc")
        ->check(CLI::IsMember({"ref_doc", "ref", "doc"}))
        ->capture_default_str();
    judge_cmd->add_option("--repeats", jd_repeats, "Judge calls to average")->check(CLI::PositiveNumber)
        ->capture_default_str();
    judge_cmd->add_option("--task-id", jd_task, "Task id for the report")->capture_default_str();
    judge_cmd->add_option("--rubric", jd_rubric, "Rubric JSON (defaults to the shipped rubric)");
    judge_cmd->add_option("--candidate-model", jd_candidate, "Model that wrote the script")->capture_default_str();
    judge_cmd->add_option("--variant", jd_variant, "pretrain, icl, lora or sft")
        ->check(CLI::IsMember({"pretrain", "icl", "lora", "sft"}))
        ->capture_default_str();
    jd_llm.add(judge_cmd);
    judge_cmd->callback([&] {
        action = [&]() -> Result {
            Result r;
            auto client = jd_llm.client(g);
            const auto rubric =
                jd_rubric.empty() ? judge::RubricSpec::load_default() : judge::RubricSpec::load(g.path(jd_rubric));
            judge::JudgeConfig cfg;
            cfg.mode = parse_judge_mode(jd_mode);
            cfg.judge_model = jd_llm.handle();
            cfg.repeats = jd_repeats;
            judge::TaskContext ctx;
            ctx.task_id = jd_task;
            ctx.model_id = jd_candidate;
            ctx.variant = parse_variant(jd_variant);
            if (!jd_ref.empty()) ctx.reference_code = read_text(g.path(jd_ref));
            if (!jd_doc.empty()) ctx.api_doc = jd_doc;
            try {
                const auto o = judge::judge_candidate(read_text(g.path(jd_code)), ctx, cfg, *client, rubric);
                r.data = judge::to_json(o);
                r.text = "score: " + judge::format_2dp(o.report.value) + "\n";
            } catch (const judge::MissingInput& e) {
                throw ConfigError(e.what());
            } catch (const judge::JudgingFailure& e) {
                r.data = {{"error", e.what()}};
                r.text = std::string("judging failed: ") + e.what() + "\n";
                r.code = kExitDataFailure;
            }
            return r;
        };
    });

    // merge-lora
    std::string ml_w0, ml_a, ml_b, ml_out;
    double ml_scale = 1.0;
    auto* merge = app.add_subcommand("merge-lora", "Merge a low-rank adapter into a dense weight matrix");
    merge->add_option("--w0", ml_w0, "Base weights (d x k)")->required();
    merge->add_option("--b", ml_b, "Factor B (d x r)")->required();
    merge->add_option("--a", ml_a, "Factor A (r x k)")->required();
    merge->add_option("--scale", ml_scale, "Scale applied to B.A")->capture_default_str();
    merge->add_option("--out", ml_out, "Merged matrix output")->required();
    merge->callback([&] {
        action = [&]() -> Result {
            Result r;
            const auto w0 = trainmath::read_matrix(g.path(ml_w0));
            const trainmath::LoraAdapter<double> ad(trainmath::read_matrix(g.path(ml_b)),
                                                    trainmath::read_matrix(g.path(ml_a)), ml_scale);
            trainmath::write_matrix(g.path(ml_out), trainmath::lora_merge(w0, ad));
            const auto st = trainmath::lora_stats(ad.rows(), ad.cols(), ad.rank());
            r.data = {{"rows", ad.rows()},
                      {"cols", ad.cols()},
                      {"rank", ad.rank()},
                      {"trainable", st.trainable},
                      {"dense", st.dense},
                      {"ratio", st.ratio}};
            r.text = "merged " + std::to_string(ad.rows()) + "x" + std::to_string(ad.cols()) + " rank " +
                     std::to_string(ad.rank()) + "; trainable " + std::to_string(st.trainable) + " of " +
                     std::to_string(st.dense) + " (" + fixed6(st.ratio) + ")\n";
            return r;
        };
    });

    // loss
    std::string ls_input, ls_objective = "sft";
    auto* loss = app.add_subcommand("loss", "CLM or SFT negative log-likelihood from token log-probabilities");
    loss->add_option("--input", ls_input, "Log-probability JSONL")->required();
    loss->add_option("--objective", ls_objective, "sft or clm")->check(CLI::IsMember({"sft", "clm"}))
        ->capture_default_str();
    loss->callback([&] {
        action = [&]() -> Result {
            Result r;
            const auto seqs = trainmath::read_logprob_jsonl(g.path(ls_input));
            const auto cl = ls_objective == "sft"
                                ? trainmath::corpus_loss(seqs, [](const auto& s) { return trainmath::sft_loss(s); })
                                : trainmath::corpus_loss(seqs, [](const auto& s) { return trainmath::clm_loss(s); });
            json per = json::array();
            for (const auto& l : cl.per_sequence) per.push_back({{"sum", l.sum}, {"mean", l.mean}, {"tokens", l.count}});
            r.data = {{"objective", ls_objective},
                      {"sequences", seqs.size()},
                      {"token_mean", cl.token_mean},
                      {"sequence_mean", cl.sequence_mean},
                      {"per_sequence", per}};
            r.text = ls_objective + " loss over " + std::to_string(seqs.size()) + " sequences: token mean " +
                     fixed6(cl.token_mean) + ", sequence mean " + fixed6(cl.sequence_mean) + "\n";
            return r;
        };
    });

    // report
    std::vector<std::string> rp_scores;
    std::string rp_format = "markdown", rp_out;
    auto* report = app.add_subcommand("report", "Render score reports as a model x variant table");
    report->add_option("scores", rp_scores, "ScoreReport JSON files")->required();
    report->add_option("--format", rp_format, "markdown or csv")->check(CLI::IsMember({"markdown", "csv"}))
        ->capture_default_str();
    report->add_option("--out", rp_out, "Write the table here instead of stdout");
    report->callback([&] {
        action = [&]() -> Result {
            Result r;
            std::vector<ScoreReport> all;
            for (const auto& f : rp_scores) {
                for (auto& s : pipeline::load_score_reports(g.path(f))) all.push_back(s);
            }
            const std::string table = pipeline::render_report(all, pipeline::parse_report_format(rp_format));
            if (!rp_out.empty()) write_file_atomic(g.path(rp_out), table);
            r.data = {{"reports", all.size()}, {"table", table}};
            r.text = rp_out.empty() ? table : "wrote " + rp_out + "\n";
            return r;
        };
    });

    // pipeline
    std::string pl_config, pl_output, pl_cache;
    std::vector<std::string> pl_enable, pl_disable;
    bool pl_offline = false;
    auto* pipe = app.add_subcommand("pipeline", "Run the full stage graph from one config file");
    pipe->add_option("--config", pl_config, "Pipeline config JSON")->required();
    pipe->add_option("--output-dir", pl_output, "Override output_dir");
    pipe->add_option("--cache-dir", pl_cache, "Override llm.cache_dir");
    pipe->add_option("--enable", pl_enable, "Enable a stage");
    pipe->add_option("--disable", pl_disable, "Disable a stage");
    pipe->add_flag("--offline", pl_offline, "Serve LLM calls from cache only");
    pipe->callback([&] {
        action = [&]() -> Result {
            Result r;
            const fs::path cfg_path = g.path(pl_config);
            json j;
            try {
                j = json::parse(read_text(cfg_path));
            } catch (const json::parse_error& e) {
                throw ParseError(cfg_path.string() + ": " + e.what(), e.byte);
            }
            for (const auto& s : pl_enable) j["stages"][s] = true;
            for (const auto& s : pl_disable) j["stages"][s] = false;
            if (!pl_output.empty()) j["output_dir"] = fs::absolute(g.path(pl_output)).string();
            if (!pl_cache.empty()) j["llm"]["cache_dir"] = fs::absolute(g.path(pl_cache)).string();
            if (pl_offline) j["llm"]["offline"] = true;
            auto cfg = pipeline::PipelineConfig::from_json(j, cfg_path.parent_path());
            cfg.workers = std::min<std::size_t>(cfg.workers, static_cast<std::size_t>(g.workers));
            auto client = pipeline::make_client(cfg.llm);
            const auto ledger = pipeline::run_pipeline(cfg, client.get());
            r.data = pipeline::to_json(ledger);
            r.text = "run dir: " + ledger.run_dir.string() + "\n";
            for (const auto& s : ledger.stages) {
                r.text += s.name + (s.skipped ? " (skipped)" : "") + ": in " + std::to_string(s.in) + ", out " +
                          std::to_string(s.out) + ", emitted " + std::to_string(s.emitted);
                for (const auto& [k, v] : s.drops) r.text += ", " + k + " " + std::to_string(v);
                r.text += "\n";
            }
            r.code = ledger.conserves() ? kExitOk : kExitDataFailure;
            return r;
        };
    });

    // estimate-at-k
    int ek_n = 0, ek_c = 0, ek_k = 0;
    auto* eak = app.add_subcommand("estimate-at-k", "Unbiased pass@k from n samples with c successes");
    eak->add_option("--n", ek_n, "Samples")->required();
    eak->add_option("--c", ek_c, "Successful samples")->required();
    eak->add_option("--k", ek_k, "k")->required();
    eak->callback([&] {
        action = [&]() -> Result {
            if (ek_n < 1 || ek_k < 1 || ek_k > ek_n || ek_c < 0 || ek_c > ek_n) {
                throw ConfigError("need 1 <= k <= n and 0 <= c <= n");
            }
            Result r;
            const double v = exec::estimate_at_k({ek_n, ek_c}, ek_k);
            r.data = {{"n", ek_n}, {"c", ek_c}, {"k", ek_k}, {"estimate", v}};
            r.text = fixed6(v) + "\n";
            return r;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }
    if (!action) return kExitUsage;
    try {
        const Result r = action();
        emit(g, r, out);
        return r.code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << " (byte " << e.byte_offset() << ")\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const llm::CacheMiss& e) {
        err << "cache miss: " << e.what() << "\n";
        return kExitDataFailure;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataFailure;
    } catch (const nlohmann::json::exception& e) {
        err << "malformed JSON input: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace twinforge::cli
