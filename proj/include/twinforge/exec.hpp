#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/syntax.hpp"

namespace twinforge::exec {

enum class RunStatus { not_run, passed, failed, timeout, crashed };

std::string_view to_string(RunStatus s);
RunStatus parse_run_status(std::string_view s);

struct CompileOptions {
    /// Also require every import to be allowlisted. An entry admits the module
    /// itself and its dotted submodules.
    bool strict = false;
    std::vector<std::string> import_allowlist;
};

struct CompileResult {
    bool ok = false;
    /// "syntax error" or "unknown import"; empty when ok.
    std::string reason;
    std::optional<syntax::Diagnostic> diagnostic;
};

CompileResult check_compiles(std::string_view script, const syntax::Grammar& grammar,
                             const CompileOptions& options = {});

struct RunnerConfig {
    /// Bare names are looked up on PATH.
    std::string interpreter = "python3";
    std::vector<std::string> args;
    std::string script_name = "script.py";
    std::vector<std::string> env_allowlist = {"PATH", "LANG", "LC_ALL", "PYTHONPATH"};
    double timeout_seconds = 60.0;
    bool network = false;
    /// When set, a run passes only if stdout matches this ECMAScript regex.
    std::optional<std::string> stdout_pattern;
    std::size_t stderr_limit = 4000;
    /// Parent of the per-run working directories; the system temp dir if empty.
    std::filesystem::path work_root;
    bool keep_workdir = false;
};

/// Reads the JSON form ({"interpreter", "args", "env_allowlist", "timeout_seconds",
/// "network", "stdout_pattern"}). Missing keys keep their defaults.
RunnerConfig runner_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunnerConfig& c);

struct RunOutcome {
    bool compile_ok = false;
    RunStatus run_status = RunStatus::not_run;
    double wall_time = 0.0;
    std::string stderr_excerpt;
    std::optional<int> exit_code;
    std::optional<int> signal;
    /// Whether the child ran in its own network namespace.
    bool network_isolated = false;
    std::optional<syntax::Diagnostic> diagnostic;
    std::string reason;
};

/// Runs `script` in a fresh working directory as a child process.
/// Throws ConfigError when the interpreter cannot be found.
RunOutcome run_sandboxed(std::string_view script, const RunnerConfig& config);

/// Resolves the interpreter against PATH; std::nullopt when not executable.
std::optional<std::filesystem::path> resolve_interpreter(const std::string& interpreter);

struct SampleBatch {
    int n = 1;
    int c = 0;
};

/// Unbiased pass@k / compile@k: 1 - C(n-c, k) / C(n, k). Throws Error unless
/// 1 <= k <= n and 0 <= c <= n.
double estimate_at_k(SampleBatch batch, int k);

struct Task {
    std::string id;
    std::string script;
};

struct TaskOutcome {
    std::string task_id;
    RunOutcome outcome;
};

struct EvalOptions {
    CompileOptions compile;
    RunnerConfig runner;
    /// Parse only; no child processes.
    bool compile_only = false;
    std::size_t workers = 4;
};

/// Compile-checks and runs every task on a bounded worker pool. The result is
/// sorted by task id.
std::vector<TaskOutcome> evaluate_tasks(const std::vector<Task>& tasks, const syntax::Grammar& grammar,
                                        const EvalOptions& options);

nlohmann::json to_json(const TaskOutcome& o);
std::string outcomes_jsonl(const std::vector<TaskOutcome>& outcomes);

/// Groups outcomes by the id prefix before the last '#', e.g. "task3#2" belongs
/// to "task3", and returns (n, c) per group for the given predicate.
std::vector<std::pair<std::string, SampleBatch>> batches_by_task(const std::vector<TaskOutcome>& outcomes,
                                                                 bool count_compile);

}  // namespace twinforge::exec
