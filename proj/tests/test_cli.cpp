#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "twinforge/cli.hpp"

using namespace twinforge;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = TWINFORGE_FIXTURES;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("twinforge-cli-" + std::to_string(::getpid()) + "-" +
                                             std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "twinforge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path write(const fs::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
    return p;
}

}  // namespace

TEST(Cli, ValidateGoodAndBad) {
    TempDir tmp;
    const auto good = write(tmp.path / "good.json", R"([{"instruction":"a","input":"","output":"b"}])");
    const auto bad = write(tmp.path / "bad.json", R"([{"instruction":"","input":"","output":"b"}])");
    EXPECT_EQ(run({"validate", "--kind", "sft", good.string()}).code, cli::kExitOk);
    const auto r = run({"validate", "--kind", "sft", bad.string()});
    EXPECT_EQ(r.code, cli::kExitDataFailure);
    EXPECT_NE(r.out.find("empty instruction"), std::string::npos);
}

TEST(Cli, ValidateMalformedIsUsageError) {
    TempDir tmp;
    const auto broken = write(tmp.path / "broken.json", "[{");
    EXPECT_EQ(run({"validate", "--kind", "sft", broken.string()}).code, cli::kExitUsage);
    EXPECT_EQ(run({"validate", "--kind", "sft", (tmp.path / "absent.json").string()}).code, cli::kExitUsage);
}

TEST(Cli, JsonOutputParses) {
    TempDir tmp;
    const auto bad = write(tmp.path / "bad.json", R"([{"instruction":"","input":"","output":"b"}])");
    const auto r = run({"--json", "validate", "--kind", "sft", bad.string()});
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_FALSE(j["ok"].get<bool>());
    EXPECT_EQ(j["problems"][0]["key"], "instruction");
}

TEST(Cli, EstimateAtK) {
    const auto r = run({"estimate-at-k", "--n", "4", "--c", "2", "--k", "2"});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_EQ(r.out, "0.833333\n");
    const auto j = nlohmann::json::parse(run({"--json", "estimate-at-k", "--n", "4", "--c", "2", "--k", "2"}).out);
    EXPECT_NEAR(j["estimate"].get<double>(), 5.0 / 6.0, 1e-15);
    EXPECT_EQ(run({"estimate-at-k", "--n", "2", "--c", "1", "--k", "3"}).code, cli::kExitUsage);
}

TEST(Cli, HelpAndBadFlags) {
    EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
    EXPECT_EQ(run({"report", "--help"}).code, cli::kExitOk);
    EXPECT_EQ(run({"estimate-at-k", "--bogus", "1"}).code, cli::kExitUsage);
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"no-such-command"}).code, cli::kExitUsage);
}

TEST(Cli, ReportFromFixture) {
    const auto r = run({"report", (kFixtures / "table7_reports.json").string()});
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_NE(r.out.find("| GPT-4o-mini | SFT | 0.96 | 0.92 | 68.03 | 66.94 | 38.03 |"), std::string::npos);
    const auto csv = run({"report", "--format", "csv", (kFixtures / "table7_reports.json").string()});
    EXPECT_NE(csv.out.find("GPT-4o-mini,Pre,0.72,0.61,41.80,34.46,43.22"), std::string::npos);
}

TEST(Cli, EvaluateIdentity) {
    TempDir tmp;
    const auto script = write(tmp.path / "a.py", "import math\nx = math.sqrt(2)\nprint(x)\n");
    const auto r = run({"--json", "evaluate", "--candidate", script.string(), "--reference", script.string(),
                        "--metric", "codebleu"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(r.out.find("nan"), std::string::npos);
    EXPECT_NE(r.out.find("1.0"), std::string::npos);
}

TEST(Cli, MergeLora) {
    TempDir tmp;
    const auto w0 = write(tmp.path / "w0.txt", "2 2\n1 0\n0 1\n");
    const auto b = write(tmp.path / "b.txt", "2 1\n1\n0\n");
    const auto a = write(tmp.path / "a.txt", "1 2\n0 1\n");
    const auto out = tmp.path / "merged.txt";
    const auto r = run({"merge-lora", "--w0", w0.string(), "--b", b.string(), "--a", a.string(), "--out", out.string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    std::ifstream in(out);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    std::istringstream nums(text);
    std::vector<double> v;
    for (double x; nums >> x;) v.push_back(x);
    EXPECT_EQ(v, (std::vector<double>{2, 2, 1, 1, 0, 1}));
}

TEST(Cli, LossObjectives) {
    TempDir tmp;
    const auto f = write(tmp.path / "lp.jsonl", "{\"logprobs\": [-1, -2], \"mask\": [false, true]}\n");
    const auto clm = nlohmann::json::parse(run({"--json", "loss", "--input", f.string(), "--objective", "clm"}).out);
    const auto sft = nlohmann::json::parse(run({"--json", "loss", "--input", f.string(), "--objective", "sft"}).out);
    EXPECT_DOUBLE_EQ(clm["token_mean"].get<double>(), 1.5);
    EXPECT_DOUBLE_EQ(sft["token_mean"].get<double>(), 2.0);
}

TEST(Cli, JudgeWithStub) {
    TempDir tmp;
    const auto code = write(tmp.path / "c.py", "import pychrono as chrono\nsys = chrono.ChSystemNSC()\n");
    const auto r = run({"--json", "judge", "--code", code.string(), "--reference", code.string(), "--api-doc",
                        "https://api.projectchrono.org", "--stub", "--candidate-model", "demo", "--variant", "sft"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    const double v = j["report"]["value"].get<double>();
    EXPECT_EQ(j["report"]["model_id"], "demo");
    EXPECT_EQ(j["report"]["variant"], "sft");
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
}

TEST(Cli, DedupWritesReport) {
    TempDir tmp;
    const auto dir = tmp.path / "docs";
    fs::create_directories(dir);
    write(dir / "1.md", "a b c d e");
    write(dir / "2.md", "a b c d f");
    const auto report = tmp.path / "report.json";
    const auto r = run({"dedup", "--input", dir.string(), "--ext", ".md", "--width", "2", "--threshold", "0.6",
                        "--report", report.string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    std::ifstream in(report);
    const auto j = nlohmann::json::parse(in);
    EXPECT_NE(j.dump().find("2.md"), std::string::npos);
}

TEST(Cli, PipelineSmallRun) {
    TempDir tmp;
    const auto r = run({"--json", "pipeline", "--config", (kFixtures / "pipeline.json").string(), "--output-dir",
                        (tmp.path / "runs").string(), "--cache-dir", (tmp.path / "cache").string(), "--disable",
                        "judge"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j.contains("stages"));
}
