#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/datamodel.hpp"
#include "twinforge/llmclient.hpp"

namespace twinforge::judge {

struct DeductionRule {
    /// Lower end of a ranged deduction ("5 to 10 points"); equals `points` otherwise.
    int min_points = 0;
    int points = 0;
    /// Rule wording with a `{points}` marker.
    std::string text;
};

struct RubricCategory {
    std::string name;
    std::string title;
    int max_points = 0;
    std::vector<DeductionRule> rules;
};

struct RubricSpec {
    std::vector<RubricCategory> categories;

    int total() const;
    /// Bulleted rubric block as it appears in the judge prompt.
    std::string render() const;

    /// Throws ConfigError unless maxima sum to 100 and every deduction fits its category.
    static RubricSpec from_json(const nlohmann::json& j);
    static RubricSpec load(const std::filesystem::path& path);
    static RubricSpec load_default();
};

class MissingInput : public Error {
public:
    using Error::Error;
};

/// Template name for a mode: judge_doc, judge_ref or judge_ref_doc.
std::string template_name(JudgeMode mode);

/// Throws MissingInput when the mode needs reference code or documentation that is absent.
std::string build_judge_prompt(std::string_view candidate_code, const std::optional<std::string>& reference_code,
                               const std::optional<std::string>& api_doc, const RubricSpec& rubric, JudgeMode mode,
                               const std::filesystem::path& template_dir = {});

class ExtractionError : public Error {
public:
    using Error::Error;
};

/// Last "[[x]]" wins. Throws ExtractionError when absent or outside [0, 100].
int extract_judge_score(std::string_view response);
std::optional<int> try_extract_judge_score(std::string_view response);

struct JudgeConfig {
    JudgeMode mode = JudgeMode::ref_doc;
    llm::ModelHandle judge_model;
    double temperature = 0.0;
    int repeats = 1;
};

/// What the candidate is judged against, and whose candidate it is.
struct TaskContext {
    std::string task_id;
    std::optional<std::string> reference_code;
    std::optional<std::string> api_doc;
    std::string model_id;
    Variant variant = Variant::pretrain;
};

struct JudgeOutcome {
    std::string task_id;
    ScoreReport report;
    std::vector<std::string> raw_responses;
    std::vector<std::optional<int>> scores;
};

class JudgingFailure : public Error {
public:
    using Error::Error;
};

/// Throws JudgingFailure when no repeat yields a score.
JudgeOutcome judge_candidate(std::string_view candidate_code, const TaskContext& context, const JudgeConfig& config,
                             llm::ChatClient& client, const RubricSpec& rubric,
                             const std::filesystem::path& template_dir = {});

nlohmann::json to_json(const JudgeOutcome& o);

struct AggregateRow {
    std::string model_id;
    Variant variant = Variant::pretrain;
    std::optional<JudgeMode> mode;
    std::string metric_name;
    double mean = 0.0;
    int sample_count = 0;
};

/// Groups on (model_id, variant, mode, metric). Rows come out in key order.
std::vector<AggregateRow> aggregate_scores(const std::vector<ScoreReport>& reports);

/// Fixed two-decimal rendering.
std::string format_2dp(double v);

}  // namespace twinforge::judge
