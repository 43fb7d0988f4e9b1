#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/error.hpp"

namespace twinforge {

inline constexpr int kSchemaVersion = 1;

enum class SourceKind { code_example, documentation, qa, solver_material };
enum class Category { sim, cot, nl2api, api2nl, debug };
enum class Origin { human_expert, llm_generated, rule_based };
enum class Variant { pretrain, icl, lora, sft };
enum class JudgeMode { doc, ref, ref_doc };

/// The seven bug classes a debugging pair can be tagged with.
enum class BugCategory {
    api_misuse,
    misspelled_api,
    wrong_parameter_types,
    incorrect_initialization,
    logic_error,
    wrong_data_values,
    unreasonable_time_step,
};

inline constexpr Category kAllCategories[] = {Category::sim, Category::cot, Category::nl2api,
                                              Category::api2nl, Category::debug};
inline constexpr BugCategory kAllBugCategories[] = {
    BugCategory::api_misuse,           BugCategory::misspelled_api,
    BugCategory::wrong_parameter_types, BugCategory::incorrect_initialization,
    BugCategory::logic_error,          BugCategory::wrong_data_values,
    BugCategory::unreasonable_time_step};

std::string_view to_string(SourceKind v);
std::string_view to_string(Category v);
std::string_view to_string(Origin v);
std::string_view to_string(Variant v);
std::string_view to_string(JudgeMode v);
std::string_view to_string(BugCategory v);

// Parsers throw Error on an unknown name.
SourceKind parse_source_kind(std::string_view s);
Category parse_category(std::string_view s);
Origin parse_origin(std::string_view s);
Variant parse_variant(std::string_view s);
JudgeMode parse_judge_mode(std::string_view s);
BugCategory parse_bug_category(std::string_view s);

using Timestamp = std::chrono::sys_seconds;

/// ISO-8601 UTC, second precision: "2024-05-01T12:00:00Z".
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view s);

struct PretrainSample {
    std::string text;
    SourceKind source_kind = SourceKind::code_example;
    std::string source_id;

    bool operator==(const PretrainSample&) const = default;
};

struct Provenance {
    Origin origin = Origin::human_expert;
    std::optional<std::string> generator_model;
    std::string source_document;
    Timestamp timestamp{};

    bool operator==(const Provenance&) const = default;
};

struct SftRecord {
    std::string instruction;
    std::string input;
    std::string output;
    Category category = Category::sim;
    Provenance provenance;
    /// Extension tags, e.g. "bug_category" for debugging pairs.
    std::map<std::string, std::string> metadata;

    bool operator==(const SftRecord&) const = default;
};

struct ScoreReport {
    std::string model_id;
    Variant variant = Variant::pretrain;
    std::string metric_name;
    std::optional<JudgeMode> config;
    double value = 0.0;
    int sample_count = 0;
    std::vector<double> repeat_scores;
    int unscored = 0;
};

/// Closed range a metric's value must lie in. Judge scores live on [0,100],
/// everything else on [0,1].
std::pair<double, double> metric_range(std::string_view metric_name);

struct Violation {
    std::string field;
    std::string message;
};

struct ValidationResult {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

ValidationResult validate_record(const SftRecord& record);
ValidationResult validate_record(const PretrainSample& sample);
ValidationResult validate_report(const ScoreReport& report);

bool is_valid_utf8(std::string_view s) noexcept;

// --- dataset files ---------------------------------------------------------

enum class DatasetKind { pretrain, sft };

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    DatasetKind kind = DatasetKind::sft;
    std::string file_name;
    std::string digest;
    std::size_t record_count = 0;
    std::map<std::string, std::size_t> category_counts;
};

/// A structural or validation problem tied to one record. `index` is
/// std::nullopt for file-level problems (e.g. a stale manifest).
struct RecordProblem {
    std::optional<std::size_t> index;
    std::string key;
    std::string message;
};

template <typename Record>
struct Dataset {
    std::vector<Record> records;
    DatasetManifest manifest;
    std::vector<RecordProblem> problems;
    bool ok() const noexcept { return problems.empty(); }
};

using SftDataset = Dataset<SftRecord>;
using PretrainDataset = Dataset<PretrainSample>;

/// Thrown by the writers when a record fails validation; nothing is written.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<RecordProblem> problems);
    const std::vector<RecordProblem>& problems() const noexcept { return problems_; }

private:
    std::vector<RecordProblem> problems_;
};

/// Sibling file holding record metadata; the data file itself stays
/// trainer-compatible.
std::filesystem::path manifest_path_for(const std::filesystem::path& data_path);

/// Canonical file name for a category, e.g. "pychrono_sft_NL2API.json".
std::string category_file_name(Category c, std::string_view prefix = "pychrono_sft_");
std::optional<Category> category_from_file_name(std::string_view file_name,
                                                std::string_view prefix = "pychrono_sft_");

/// Canonical bytes of an SFT file: a JSON array of objects holding exactly
/// instruction/input/output, sorted keys, two-space indent, trailing "\n".
std::string serialize_sft(const std::vector<SftRecord>& records);
/// Canonical bytes of a pretraining file: one compact {"text": ...} per line.
std::string serialize_pretrain(const std::vector<PretrainSample>& samples);

/// Throws ParseError (with byte offset) on malformed JSON and IoError when
/// unreadable. Schema and validation problems are listed in the result.
SftDataset read_sft_dataset(const std::filesystem::path& path);
PretrainDataset read_pretrain_dataset(const std::filesystem::path& path);

DatasetManifest write_sft_dataset(const std::vector<SftRecord>& records,
                                  const std::filesystem::path& path);
DatasetManifest write_pretrain_dataset(const std::vector<PretrainSample>& samples,
                                       const std::filesystem::path& path);

struct CollectionManifest {
    int schema_version = kSchemaVersion;
    std::map<std::string, std::size_t> category_counts;
    std::map<std::string, std::string> file_digests;
    /// Instructions appearing in more than one category file. Flagged, not
    /// rejected.
    std::vector<std::string> cross_file_duplicates;
};

/// Splits records by category into one file per category under `dir` and
/// writes "sft_manifest.json" next to them.
CollectionManifest write_sft_collection(const std::vector<SftRecord>& records,
                                        const std::filesystem::path& dir);

std::vector<std::string> find_cross_file_duplicates(
    const std::map<Category, std::vector<SftRecord>>& by_category);

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);
void to_json(nlohmann::json& j, const ScoreReport& r);
void from_json(const nlohmann::json& j, ScoreReport& r);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void to_json(nlohmann::json& j, const CollectionManifest& m);
void to_json(nlohmann::json& j, const RecordProblem& p);

}  // namespace twinforge
