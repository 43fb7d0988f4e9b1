#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>

#include "oracles.hpp"
#include "twinforge/exec.hpp"

using namespace twinforge;
using namespace twinforge::exec;
namespace fs = std::filesystem;

namespace {

const syntax::PythonGrammar& grammar() {
    static const syntax::PythonGrammar g;
    return g;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("twinforge-exec-" + std::to_string(::getpid()) + "-" +
                                             std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunnerConfig runner(const fs::path& root, double timeout = 10.0) {
    RunnerConfig c;
    c.work_root = root;
    c.timeout_seconds = timeout;
    return c;
}

}  // namespace

TEST(Compile, ValidScript) {
    const auto r = check_compiles("import math\nx = math.sqrt(4)\nprint(x)\n", grammar());
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(r.reason.empty());
}

TEST(Compile, UnbalancedBracketReportsLine) {
    const auto r = check_compiles("x = 1\ny = f(2\nz = 3\n", grammar());
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.reason, "syntax error");
    ASSERT_TRUE(r.diagnostic);
    EXPECT_GE(r.diagnostic->line, 2);
}

TEST(Compile, StrictModeRejectsUnknownImport) {
    CompileOptions o;
    o.strict = true;
    o.import_allowlist = {"pychrono", "math"};
    EXPECT_TRUE(check_compiles("import pychrono.irrlicht as irr\nimport math\n", grammar(), o).ok);
    const auto r = check_compiles("import numpy\n", grammar(), o);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.reason, "unknown import");
    EXPECT_TRUE(check_compiles("import numpy\n", grammar()).ok);
}

TEST(Sandbox, PassingScript) {
    TempDir tmp;
    const auto o = run_sandboxed("print('hello')\n", runner(tmp.path));
    EXPECT_TRUE(o.compile_ok);
    EXPECT_EQ(o.run_status, RunStatus::passed);
    ASSERT_TRUE(o.exit_code);
    EXPECT_EQ(*o.exit_code, 0);
}

TEST(Sandbox, FailingScriptCapturesStderr) {
    TempDir tmp;
    const auto o = run_sandboxed("import sys\nsys.stderr.write('boom here')\nsys.exit(3)\n", runner(tmp.path));
    EXPECT_EQ(o.run_status, RunStatus::failed);
    ASSERT_TRUE(o.exit_code);
    EXPECT_EQ(*o.exit_code, 3);
    EXPECT_NE(o.stderr_excerpt.find("boom here"), std::string::npos);
}

TEST(Sandbox, TimeoutIsEnforced) {
    TempDir tmp;
    const auto o = run_sandboxed("import time\ntime.sleep(30)\n", runner(tmp.path, 1.0));
    EXPECT_EQ(o.run_status, RunStatus::timeout);
    EXPECT_NEAR(o.wall_time, 1.0, 1.0);
}

TEST(Sandbox, StdoutPattern) {
    TempDir tmp;
    auto c = runner(tmp.path);
    c.stdout_pattern = "done";
    EXPECT_EQ(run_sandboxed("print('done')\n", c).run_status, RunStatus::passed);
    EXPECT_EQ(run_sandboxed("print('nope')\n", c).run_status, RunStatus::failed);
}

TEST(Sandbox, MissingInterpreterIsConfigError) {
    TempDir tmp;
    auto c = runner(tmp.path);
    c.interpreter = "definitely-not-an-interpreter-xyz";
    EXPECT_THROW(run_sandboxed("print(1)\n", c), ConfigError);
}

TEST(Evaluate, SyntaxErrorNeverRuns) {
    TempDir tmp;
    EvalOptions o;
    o.runner = runner(tmp.path);
    const auto out = evaluate_tasks({{"t#1", "def (:\n"}}, grammar(), o);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FALSE(out[0].outcome.compile_ok);
    EXPECT_EQ(out[0].outcome.run_status, RunStatus::not_run);
}

TEST(Sandbox, WorkdirRemoved) {
    TempDir tmp;
    run_sandboxed("open('scratch.txt', 'w').write('x')\n", runner(tmp.path));
    EXPECT_TRUE(fs::is_empty(tmp.path));
}

TEST(Sandbox, EnvironmentIsFiltered) {
    TempDir tmp;
    ::setenv("TWINFORGE_SECRET_VALUE", "leak", 1);
    const auto o = run_sandboxed("import os, sys\nsys.exit(1 if 'TWINFORGE_SECRET_VALUE' in os.environ else 0)\n",
                                 runner(tmp.path));
    ::unsetenv("TWINFORGE_SECRET_VALUE");
    EXPECT_EQ(o.run_status, RunStatus::passed);
}

TEST(EstimateAtK, Examples) {
    EXPECT_NEAR(estimate_at_k({4, 2}, 2), 0.833333, 1e-6);
    EXPECT_EQ(estimate_at_k({5, 0}, 1), 0.0);
    EXPECT_EQ(estimate_at_k({5, 5}, 3), 1.0);
    EXPECT_NEAR(estimate_at_k({10, 3}, 1), 0.3, 1e-12);
    EXPECT_EQ(estimate_at_k({3, 1}, 3), 1.0);
}

TEST(EstimateAtK, InvalidArgumentsThrow) {
    EXPECT_THROW(estimate_at_k({3, 1}, 4), Error);
    EXPECT_THROW(estimate_at_k({3, 1}, 0), Error);
    EXPECT_THROW(estimate_at_k({3, 4}, 1), Error);
    EXPECT_THROW(estimate_at_k({3, -1}, 1), Error);
}

TEST(EstimateAtK, MatchesEnumerationOracle) {
    for (int n = 1; n <= 8; ++n)
        for (int c = 0; c <= n; ++c)
            for (int k = 1; k <= n; ++k)
                ASSERT_NEAR(estimate_at_k({n, c}, k), oracle::pass_at_k_by_enumeration(n, c, k), 1e-12)
                    << n << " " << c << " " << k;
}

TEST(EstimateAtK, LargeNStaysFinite) {
    const double v = estimate_at_k({200, 17}, 100);
    EXPECT_GT(v, 0.99);
    EXPECT_LE(v, 1.0);
}

TEST(Evaluate, CompileOnlyAndBatches) {
    EvalOptions o;
    o.compile_only = true;
    const std::vector<Task> tasks = {{"b#1", "x = 1\n"}, {"a#1", "x = (\n"}, {"a#2", "y = 2\n"}};
    const auto out = evaluate_tasks(tasks, grammar(), o);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].task_id, "a#1");
    EXPECT_FALSE(out[0].outcome.compile_ok);
    EXPECT_EQ(out[2].outcome.run_status, RunStatus::not_run);
    const auto batches = batches_by_task(out, true);
    ASSERT_EQ(batches.size(), 2u);
    EXPECT_EQ(batches[0].first, "a");
    EXPECT_EQ(batches[0].second.n, 2);
    EXPECT_EQ(batches[0].second.c, 1);
}

TEST(RunnerConfigJson, RoundTrip) {
    const auto c = runner_config_from_json({{"interpreter", "python3"}, {"timeout_seconds", 5}, {"network", true}});
    EXPECT_EQ(c.timeout_seconds, 5.0);
    EXPECT_TRUE(c.network);
    EXPECT_EQ(runner_config_from_json(to_json(c)).timeout_seconds, 5.0);
}
