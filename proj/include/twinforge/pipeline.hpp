#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/corpus.hpp"
#include "twinforge/datamodel.hpp"
#include "twinforge/llmclient.hpp"
#include "twinforge/synthesis.hpp"

namespace twinforge::pipeline {

enum class StageKind {
    expand,  // one input unit may emit several items
    filter,  // items pass or are dropped
    hook,    // named extension point, pass-through
    branch,  // evaluation branch; reads the task file, not the item stream
};

std::string_view to_string(StageKind k);

inline constexpr std::array<std::string_view, 10> kStageOrder = {
    "ingest", "lazy_user_setting", "synthesize", "dedup",  "self_evolution",
    "validate", "review_export",   "evaluate",   "judge",  "report"};

struct StageSpec {
    std::string name;
    StageKind kind = StageKind::filter;
    bool enabled = true;
    std::string input;
    std::string output;
};

/// Declared stages in execution order. Names are unique and each data stage
/// consumes what the previous one produced.
struct StageGraph {
    std::vector<StageSpec> stages;

    static StageGraph standard(const std::map<std::string, bool>& toggles);
    const StageSpec& at(std::string_view name) const;
    bool enabled(std::string_view name) const { return at(name).enabled; }
};

struct LlmSettings {
    /// "http" or "stub".
    std::string transport = "stub";
    std::filesystem::path cache_dir;
    bool offline = false;
    int max_in_flight = 4;
};

struct SynthesisSettings {
    llm::ModelHandle model{"stub-generator", "stub://local", Variant::pretrain};
    std::vector<synthesis::TemplateKind> script_kinds = {synthesis::TemplateKind::contextual_qa,
                                                         synthesis::TemplateKind::debug_qa};
    std::vector<synthesis::TemplateKind> doc_kinds = {synthesis::TemplateKind::expert_qa};
    int pairs_per_document = 2;
    double temperature = 0.7;
    std::int64_t seed = 0;
};

struct JudgeSettings {
    llm::ModelHandle model{"stub-judge", "stub://local", Variant::pretrain};
    std::vector<JudgeMode> modes = {JudgeMode::ref_doc, JudgeMode::ref, JudgeMode::doc};
    int repeats = 1;
};

struct PipelineConfig {
    /// Relative paths below resolve against this directory.
    std::filesystem::path base_dir;

    std::filesystem::path scripts_dir;
    std::filesystem::path docs_dir;
    std::filesystem::path forum_file;
    std::filesystem::path output_dir = "runs";
    /// JSONL of evaluation tasks: task_id, model_id, variant, candidate, reference, api_doc.
    std::filesystem::path eval_tasks;
    /// JSON array of extra ScoreReports merged into the report.
    std::filesystem::path extra_reports;

    std::map<std::string, bool> stages;
    Timestamp timestamp{};
    std::size_t workers = 4;

    LlmSettings llm;
    SynthesisSettings synthesis;
    corpus::DedupOptions dedup;
    corpus::ForumOptions forum;
    JudgeSettings judge;

    std::filesystem::path resolve(const std::filesystem::path& p) const;

    /// Throws ConfigError on unknown keys, bad values or missing inputs.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
};

nlohmann::json to_json(const PipelineConfig& c);
/// SHA-256 of the canonical config JSON.
std::string config_digest(const PipelineConfig& c);

struct StageRecord {
    std::string name;
    StageKind kind = StageKind::filter;
    bool skipped = false;
    std::size_t in = 0;
    std::size_t out = 0;
    /// Items handed to the next stage.
    std::size_t emitted = 0;
    std::map<std::string, std::size_t> drops;
    /// Finer-grained counters that are not unit drops (e.g. per-pair rejections).
    std::map<std::string, std::size_t> details;
    double wall_seconds = 0.0;

    std::size_t dropped() const;
};

struct RunLedger {
    std::string config_digest;
    std::filesystem::path run_dir;
    std::vector<StageRecord> stages;
    /// File name (relative to run_dir) to SHA-256. ledger.json is excluded.
    std::map<std::string, std::string> artifacts;
    double wall_seconds = 0.0;

    const StageRecord& stage(std::string_view name) const;
    /// out + drops == in for every stage that ran, and each data stage's input
    /// equals the previous data stage's emitted count.
    bool conserves() const;
};

nlohmann::json to_json(const RunLedger& l);

/// Builds a client from the settings. The stub transport answers offline and
/// deterministically.
std::unique_ptr<llm::ChatClient> make_client(const LlmSettings& settings);

/// Deterministic stand-in for a chat model. Recognizes the synthesis and judge
/// prompts and answers in the shape each expects.
std::shared_ptr<llm::Transport> make_stub_transport();

/// Runs the stage graph and writes artifacts under
/// output_dir/run-<digest prefix>. `client` may be null when no stage needs one.
RunLedger run_pipeline(const PipelineConfig& config, llm::ChatClient* client);

enum class ReportFormat { markdown, csv };
ReportFormat parse_report_format(std::string_view s);

/// One row per (model, variant); similarity columns ROUGE-Lsum and CodeBLEU,
/// judge columns Ref+Doc, Ref, Doc. Missing cells are "—".
std::string render_report(const std::vector<ScoreReport>& reports, ReportFormat format);

std::vector<ScoreReport> load_score_reports(const std::filesystem::path& path);

}  // namespace twinforge::pipeline
