#include "twinforge/judge.hpp"

#include <cstdio>
#include <map>
#include <numeric>
#include <regex>
#include <tuple>

#include "twinforge/digest.hpp"
#include "twinforge/paths.hpp"
#include "twinforge/synthesis.hpp"

namespace twinforge::judge {

int RubricSpec::total() const {
    int t = 0;
    for (const auto& c : categories) t += c.max_points;
    return t;
}

namespace {
std::string points_phrase(const DeductionRule& r) {
    if (r.min_points != r.points) return std::to_string(r.min_points) + " to " + std::to_string(r.points) + " points";
    return std::to_string(r.points) + (r.points == 1 ? " point" : " points");
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
        s.replace(pos, from.size(), to);
    }
    return s;
}
}  // namespace

std::string RubricSpec::render() const {
    std::string out;
    for (const auto& c : categories) {
        out += "- **" + c.title + " (" + std::to_string(c.max_points) + " points total)**\n";
        for (const auto& r : c.rules) out += " - " + replace_all(r.text, "{points}", points_phrase(r)) + "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

RubricSpec RubricSpec::from_json(const nlohmann::json& j) {
    RubricSpec spec;
    try {
        for (const auto& cj : j.at("categories")) {
            RubricCategory c;
            c.name = cj.at("name").get<std::string>();
            c.title = cj.value("title", c.name);
            c.max_points = cj.at("max_points").get<int>();
            for (const auto& rj : cj.at("rules")) {
                DeductionRule r;
                r.points = rj.at("points").get<int>();
                r.min_points = rj.value("min_points", r.points);
                r.text = rj.at("text").get<std::string>();
                if (r.min_points <= 0 || r.min_points > r.points) {
                    throw ConfigError("rubric " + c.name + ": bad deduction range");
                }
                if (r.points > c.max_points) {
                    throw ConfigError("rubric " + c.name + ": deduction " + std::to_string(r.points) +
                                      " exceeds category maximum " + std::to_string(c.max_points));
                }
                c.rules.push_back(std::move(r));
            }
            spec.categories.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed rubric: ") + e.what());
    }
    if (spec.total() != 100) throw ConfigError("rubric maxima sum to " + std::to_string(spec.total()) + ", not 100");
    return spec;
}

RubricSpec RubricSpec::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("rubric " + path.string() + ": " + e.what());
    }
}

RubricSpec RubricSpec::load_default() { return load(data_dir() / "rubric" / "judge_rubric.json"); }

std::string template_name(JudgeMode mode) { return "judge_" + std::string(to_string(mode)); }

std::string build_judge_prompt(std::string_view candidate_code, const std::optional<std::string>& reference_code,
                               const std::optional<std::string>& api_doc, const RubricSpec& rubric, JudgeMode mode,
                               const std::filesystem::path& template_dir) {
    const bool needs_ref = mode != JudgeMode::doc;
    const bool needs_doc = mode != JudgeMode::ref;
    if (needs_ref && !reference_code) throw MissingInput(std::string(to_string(mode)) + " mode needs reference code");
    if (needs_doc && !api_doc) throw MissingInput(std::string(to_string(mode)) + " mode needs API documentation");
    const auto tpl = synthesis::load_template(template_name(mode), template_dir);
    synthesis::Bindings b = {{"code", std::string(candidate_code)}, {"rubric", rubric.render()}};
    if (needs_ref) b["reference_code"] = *reference_code;
    if (needs_doc) b["api_documentation_link"] = *api_doc;
    return synthesis::render_prompt_template(tpl, b);
}

std::optional<int> try_extract_judge_score(std::string_view response) {
    static const std::regex marker(R"(\[\[\s*([+-]?\d+)\s*\]\])");
    std::optional<std::string> last;
    for (auto it = std::cregex_iterator(response.data(), response.data() + response.size(), marker);
         it != std::cregex_iterator(); ++it) {
        last = (*it)[1].str();
    }
    if (!last || last->size() > 4) return std::nullopt;
    const int v = std::stoi(*last);
    if (v < 0 || v > 100) return std::nullopt;
    return v;
}

int extract_judge_score(std::string_view response) {
    if (auto v = try_extract_judge_score(response)) return *v;
    static const std::regex any_marker(R"(\[\[\s*([+-]?\d+)\s*\]\])");
    if (std::regex_search(response.begin(), response.end(), any_marker)) {
        throw ExtractionError("judge score outside [0, 100]");
    }
    throw ExtractionError("no [[x]] score marker in judge response");
}

JudgeOutcome judge_candidate(std::string_view candidate_code, const TaskContext& context, const JudgeConfig& config,
                             llm::ChatClient& client, const RubricSpec& rubric,
                             const std::filesystem::path& template_dir) {
    if (config.repeats < 1) throw ConfigError("judge repeats must be at least 1");
    const std::string prompt =
        build_judge_prompt(candidate_code, context.reference_code, context.api_doc, rubric, config.mode, template_dir);

    JudgeOutcome out;
    out.task_id = context.task_id;
    ScoreReport& r = out.report;
    r.model_id = context.model_id;
    r.variant = context.variant;
    r.metric_name = "judge";
    r.config = config.mode;
    r.sample_count = 1;
    for (int i = 0; i < config.repeats; ++i) {
        llm::ChatRequest req = llm::make_request(config.judge_model, prompt, config.temperature);
        req.seed = i;
        const std::string text = client.complete_chat(req, llm::CachePolicy::use).content;
        const auto score = try_extract_judge_score(text);
        out.raw_responses.push_back(text);
        out.scores.push_back(score);
        if (score) {
            r.repeat_scores.push_back(*score);
        } else {
            ++r.unscored;
        }
    }
    if (r.repeat_scores.empty()) {
        throw JudgingFailure("no judge repeat produced a score for task '" + context.task_id + "'");
    }
    r.value = std::accumulate(r.repeat_scores.begin(), r.repeat_scores.end(), 0.0) /
              static_cast<double>(r.repeat_scores.size());
    return out;
}

nlohmann::json to_json(const JudgeOutcome& o) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : o.scores) scores.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    return {{"task_id", o.task_id}, {"report", o.report}, {"raw_responses", o.raw_responses}, {"scores", scores}};
}

std::vector<AggregateRow> aggregate_scores(const std::vector<ScoreReport>& reports) {
    using Key = std::tuple<std::string, int, int, std::string>;
    std::map<Key, std::pair<double, int>> groups;
    std::map<Key, std::pair<int, int>> counts;  // (number of reports, summed sample_count)
    for (const auto& r : reports) {
        const Key k{r.model_id, static_cast<int>(r.variant), r.config ? static_cast<int>(*r.config) : -1,
                    r.metric_name};
        groups[k].first += r.value;
        groups[k].second += 1;
        counts[k].second += r.sample_count;
    }
    std::vector<AggregateRow> rows;
    for (const auto& [k, sum] : groups) {
        AggregateRow row;
        row.model_id = std::get<0>(k);
        row.variant = static_cast<Variant>(std::get<1>(k));
        if (std::get<2>(k) >= 0) row.mode = static_cast<JudgeMode>(std::get<2>(k));
        row.metric_name = std::get<3>(k);
        row.mean = sum.first / sum.second;
        row.sample_count = counts[k].second;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_2dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v + (v >= 0 ? 1e-12 : -1e-12));
    return buf;
}

}  // namespace twinforge::judge
