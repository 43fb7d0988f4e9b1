#include "twinforge/datamodel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <set>
#include <utility>

#include "twinforge/digest.hpp"

namespace twinforge {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename Enum, std::size_t N>
using NameTable = std::array<std::pair<Enum, std::string_view>, N>;

constexpr NameTable<SourceKind, 4> kSourceKindNames{{{SourceKind::code_example, "code_example"},
                                                     {SourceKind::documentation, "documentation"},
                                                     {SourceKind::qa, "qa"},
                                                     {SourceKind::solver_material, "solver_material"}}};
constexpr NameTable<Category, 5> kCategoryNames{{{Category::sim, "sim"},
                                                 {Category::cot, "cot"},
                                                 {Category::nl2api, "nl2api"},
                                                 {Category::api2nl, "api2nl"},
                                                 {Category::debug, "debug"}}};
constexpr NameTable<Origin, 3> kOriginNames{{{Origin::human_expert, "human_expert"},
                                             {Origin::llm_generated, "llm_generated"},
                                             {Origin::rule_based, "rule_based"}}};
constexpr NameTable<Variant, 4> kVariantNames{{{Variant::pretrain, "pretrain"},
                                               {Variant::icl, "icl"},
                                               {Variant::lora, "lora"},
                                               {Variant::sft, "sft"}}};
constexpr NameTable<JudgeMode, 3> kJudgeModeNames{
    {{JudgeMode::doc, "doc"}, {JudgeMode::ref, "ref"}, {JudgeMode::ref_doc, "ref_doc"}}};
constexpr NameTable<BugCategory, 7> kBugCategoryNames{
    {{BugCategory::api_misuse, "api_misuse"},
     {BugCategory::misspelled_api, "misspelled_api"},
     {BugCategory::wrong_parameter_types, "wrong_parameter_types"},
     {BugCategory::incorrect_initialization, "incorrect_initialization"},
     {BugCategory::logic_error, "logic_error"},
     {BugCategory::wrong_data_values, "wrong_data_values"},
     {BugCategory::unreasonable_time_step, "unreasonable_time_step"}}};

template <typename Enum, std::size_t N>
std::string_view name_of(const NameTable<Enum, N>& table, Enum v) {
    for (const auto& [e, name] : table) {
        if (e == v) return name;
    }
    return "?";
}

template <typename Enum, std::size_t N>
Enum parse_name(const NameTable<Enum, N>& table, std::string_view s, std::string_view what) {
    for (const auto& [e, name] : table) {
        if (name == s) return e;
    }
    throw Error("unknown " + std::string(what) + ": '" + std::string(s) + "'");
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

constexpr std::string_view kSftKeys[] = {"input", "instruction", "output"};

json record_metadata_json(const SftRecord& r) {
    json j;
    j["category"] = to_string(r.category);
    j["provenance"] = r.provenance;
    j["metadata"] = r.metadata;
    return j;
}

std::string dump_manifest(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string_view to_string(SourceKind v) { return name_of(kSourceKindNames, v); }
std::string_view to_string(Category v) { return name_of(kCategoryNames, v); }
std::string_view to_string(Origin v) { return name_of(kOriginNames, v); }
std::string_view to_string(Variant v) { return name_of(kVariantNames, v); }
std::string_view to_string(JudgeMode v) { return name_of(kJudgeModeNames, v); }
std::string_view to_string(BugCategory v) { return name_of(kBugCategoryNames, v); }

SourceKind parse_source_kind(std::string_view s) { return parse_name(kSourceKindNames, s, "source kind"); }
Category parse_category(std::string_view s) { return parse_name(kCategoryNames, s, "category"); }
Origin parse_origin(std::string_view s) { return parse_name(kOriginNames, s, "origin"); }
Variant parse_variant(std::string_view s) { return parse_name(kVariantNames, s, "variant"); }
JudgeMode parse_judge_mode(std::string_view s) { return parse_name(kJudgeModeNames, s, "judge mode"); }
BugCategory parse_bug_category(std::string_view s) {
    return parse_name(kBugCategoryNames, s, "bug category");
}

std::string format_timestamp(Timestamp t) {
    const std::time_t tt = t.time_since_epoch().count();
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Timestamp parse_timestamp(std::string_view s) {
    std::tm tm{};
    int consumed = 0;
    const std::string str(s);
    if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2dZ%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                    &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed) != 6 ||
        consumed != static_cast<int>(str.size())) {
        throw Error("bad UTC timestamp: '" + str + "'");
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    return Timestamp{std::chrono::seconds{timegm(&tm)}};
}

std::pair<double, double> metric_range(std::string_view metric_name) {
    if (metric_name.starts_with("judge")) return {0.0, 100.0};
    return {0.0, 1.0};
}

bool is_valid_utf8(std::string_view s) noexcept {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        // Reject overlong forms, surrogates and out-of-range code points.
        if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
            (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
            return false;
        }
        i += extra + 1;
    }
    return true;
}

ValidationResult validate_record(const SftRecord& record) {
    ValidationResult r;
    auto check_text = [&](const std::string& field, const std::string& value, bool required) {
        if (required && blank(value)) r.violations.push_back({field, "empty " + field});
        if (!is_valid_utf8(value)) r.violations.push_back({field, "invalid UTF-8 in " + field});
    };
    check_text("instruction", record.instruction, true);
    check_text("input", record.input, false);
    check_text("output", record.output, true);
    if (record.category == Category::debug) {
        auto it = record.metadata.find("bug_category");
        if (it == record.metadata.end()) {
            r.violations.push_back({"metadata.bug_category", "debug record without bug_category"});
        } else {
            try {
                parse_bug_category(it->second);
            } catch (const Error&) {
                r.violations.push_back({"metadata.bug_category", "unknown bug_category '" + it->second + "'"});
            }
        }
    }
    if (record.provenance.origin == Origin::llm_generated &&
        (!record.provenance.generator_model || record.provenance.generator_model->empty())) {
        r.violations.push_back({"provenance.generator_model", "llm_generated record without generator_model"});
    }
    return r;
}

ValidationResult validate_record(const PretrainSample& sample) {
    ValidationResult r;
    if (blank(sample.text)) r.violations.push_back({"text", "empty text"});
    if (!is_valid_utf8(sample.text)) r.violations.push_back({"text", "invalid UTF-8 in text"});
    return r;
}

ValidationResult validate_report(const ScoreReport& report) {
    ValidationResult r;
    if (report.model_id.empty()) r.violations.push_back({"model_id", "empty model_id"});
    const auto [lo, hi] = metric_range(report.metric_name);
    if (!(report.value >= lo && report.value <= hi)) {
        r.violations.push_back({"value", "value outside [" + std::to_string(lo) + ", " +
                                             std::to_string(hi) + "] for " + report.metric_name});
    }
    if (report.sample_count < 0) r.violations.push_back({"sample_count", "negative sample_count"});
    return r;
}

ValidationError::ValidationError(std::vector<RecordProblem> problems)
    : Error([&] {
          std::string msg = "validation failed";
          if (!problems.empty()) {
              const auto& p = problems.front();
              msg += ": ";
              if (p.index) msg += "record " + std::to_string(*p.index) + ": ";
              msg += p.message;
              if (problems.size() > 1) msg += " (+" + std::to_string(problems.size() - 1) + " more)";
          }
          return msg;
      }()),
      problems_(std::move(problems)) {}

fs::path manifest_path_for(const fs::path& data_path) {
    fs::path p = data_path;
    p += ".manifest.json";
    return p;
}

std::string category_file_name(Category c, std::string_view prefix) {
    std::string suffix;
    switch (c) {
        case Category::sim: suffix = "sim"; break;
        case Category::cot: suffix = "COT"; break;
        case Category::nl2api: suffix = "NL2API"; break;
        case Category::api2nl: suffix = "API2NL"; break;
        case Category::debug: suffix = "debug"; break;
    }
    return std::string(prefix) + suffix + ".json";
}

std::optional<Category> category_from_file_name(std::string_view file_name, std::string_view prefix) {
    for (Category c : kAllCategories) {
        if (file_name == category_file_name(c, prefix)) return c;
    }
    return std::nullopt;
}

// --- JSON ------------------------------------------------------------------

void to_json(json& j, const Provenance& p) {
    j = json::object();
    j["origin"] = to_string(p.origin);
    if (p.generator_model) j["generator_model"] = *p.generator_model;
    j["source_document"] = p.source_document;
    j["timestamp"] = format_timestamp(p.timestamp);
}

void from_json(const json& j, Provenance& p) {
    p.origin = parse_origin(j.at("origin").get<std::string>());
    p.generator_model.reset();
    if (auto it = j.find("generator_model"); it != j.end() && !it->is_null()) {
        p.generator_model = it->get<std::string>();
    }
    p.source_document = j.value("source_document", "");
    p.timestamp = j.contains("timestamp") ? parse_timestamp(j.at("timestamp").get<std::string>()) : Timestamp{};
}

void to_json(json& j, const ScoreReport& r) {
    j = json::object();
    j["model_id"] = r.model_id;
    j["variant"] = to_string(r.variant);
    j["metric_name"] = r.metric_name;
    j["config"] = r.config ? json(to_string(*r.config)) : json(nullptr);
    j["value"] = r.value;
    j["sample_count"] = r.sample_count;
    if (!r.repeat_scores.empty()) j["repeat_scores"] = r.repeat_scores;
    if (r.unscored) j["unscored"] = r.unscored;
}

void from_json(const json& j, ScoreReport& r) {
    r.model_id = j.at("model_id").get<std::string>();
    r.variant = parse_variant(j.at("variant").get<std::string>());
    r.metric_name = j.at("metric_name").get<std::string>();
    r.config.reset();
    if (auto it = j.find("config"); it != j.end() && !it->is_null()) {
        r.config = parse_judge_mode(it->get<std::string>());
    }
    r.value = j.at("value").get<double>();
    r.sample_count = j.value("sample_count", 1);
    r.repeat_scores = j.value("repeat_scores", std::vector<double>{});
    r.unscored = j.value("unscored", 0);
}

void to_json(json& j, const DatasetManifest& m) {
    j = json::object();
    j["schema_version"] = m.schema_version;
    j["kind"] = m.kind == DatasetKind::sft ? "sft" : "pretrain";
    j["file"] = m.file_name;
    j["digest"] = m.digest;
    j["record_count"] = m.record_count;
    j["counts"] = m.category_counts;
}

void to_json(json& j, const CollectionManifest& m) {
    j = json::object();
    j["schema_version"] = m.schema_version;
    j["counts"] = m.category_counts;
    j["digests"] = m.file_digests;
    j["cross_file_duplicates"] = m.cross_file_duplicates;
}

void to_json(json& j, const RecordProblem& p) {
    j = json::object();
    j["index"] = p.index ? json(*p.index) : json(nullptr);
    j["key"] = p.key;
    j["message"] = p.message;
}

// --- serialization -----------------------------------------------------------

std::string serialize_sft(const std::vector<SftRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) {
        arr.push_back({{"instruction", r.instruction}, {"input", r.input}, {"output", r.output}});
    }
    return arr.dump(2) + "\n";
}

std::string serialize_pretrain(const std::vector<PretrainSample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += json{{"text", s.text}}.dump();
        out += '\n';
    }
    return out;
}

namespace {

template <typename Record>
std::vector<RecordProblem> collect_problems(const std::vector<Record>& records) {
    std::vector<RecordProblem> problems;
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (auto& v : validate_record(records[i]).violations) {
            problems.push_back({i, v.field, v.message});
        }
    }
    return problems;
}

ParseError to_parse_error(const json::parse_error& e, std::size_t base, const fs::path& path) {
    const std::size_t offset = base + (e.byte > 0 ? e.byte - 1 : 0);
    return ParseError(path.string() + ": malformed JSON at byte " + std::to_string(offset) + ": " + e.what(),
                      offset);
}

std::optional<json> load_manifest(const fs::path& data_path) {
    const fs::path mp = manifest_path_for(data_path);
    if (!fs::exists(mp)) return std::nullopt;
    try {
        return json::parse(read_file(mp));
    } catch (const json::parse_error& e) {
        throw to_parse_error(e, 0, mp);
    }
}

}  // namespace

SftDataset read_sft_dataset(const fs::path& path) {
    const std::string bytes = read_file(path);
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw to_parse_error(e, 0, path);
    }
    SftDataset ds;
    if (!doc.is_array()) {
        ds.problems.push_back({std::nullopt, "", "top-level value is not a JSON array"});
        return ds;
    }

    const auto manifest = load_manifest(path);
    const json* meta = nullptr;
    if (manifest) {
        if (manifest->value("digest", "") != sha256_hex(bytes)) {
            ds.problems.push_back({std::nullopt, "digest", "manifest digest does not match file bytes"});
        } else if (manifest->contains("records") && (*manifest)["records"].size() == doc.size()) {
            meta = &(*manifest)["records"];
        } else {
            ds.problems.push_back({std::nullopt, "records", "manifest record count does not match file"});
        }
    }
    const auto name_category = category_from_file_name(path.filename().string());

    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& obj = doc[i];
        if (!obj.is_object()) {
            ds.problems.push_back({i, "", "record is not a JSON object"});
            continue;
        }
        bool structural_ok = true;
        for (auto key : kSftKeys) {
            auto it = obj.find(std::string(key));
            if (it == obj.end()) {
                ds.problems.push_back({i, std::string(key), "missing key \"" + std::string(key) + "\""});
                structural_ok = false;
            } else if (!it->is_string()) {
                ds.problems.push_back({i, std::string(key), "key \"" + std::string(key) + "\" is not a string"});
                structural_ok = false;
            }
        }
        for (const auto& [key, _] : obj.items()) {
            if (std::find(std::begin(kSftKeys), std::end(kSftKeys), key) == std::end(kSftKeys)) {
                ds.problems.push_back({i, key, "unexpected key \"" + key + "\""});
                structural_ok = false;
            }
        }
        if (!structural_ok) continue;

        SftRecord rec;
        rec.instruction = obj["instruction"].get<std::string>();
        rec.input = obj["input"].get<std::string>();
        rec.output = obj["output"].get<std::string>();
        if (meta) {
            const json& m = (*meta)[i];
            rec.category = parse_category(m.at("category").get<std::string>());
            rec.provenance = m.at("provenance").get<Provenance>();
            rec.metadata = m.value("metadata", std::map<std::string, std::string>{});
        } else {
            rec.category = name_category.value_or(Category::sim);
            rec.provenance.source_document = path.filename().string();
        }
        for (auto& v : validate_record(rec).violations) ds.problems.push_back({i, v.field, v.message});
        ds.records.push_back(std::move(rec));
    }

    ds.manifest.kind = DatasetKind::sft;
    ds.manifest.file_name = path.filename().string();
    ds.manifest.digest = sha256_hex(bytes);
    ds.manifest.record_count = ds.records.size();
    for (const auto& r : ds.records) ++ds.manifest.category_counts[std::string(to_string(r.category))];
    return ds;
}

PretrainDataset read_pretrain_dataset(const fs::path& path) {
    const std::string bytes = read_file(path);
    PretrainDataset ds;
    const auto manifest = load_manifest(path);

    std::vector<json> lines;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) end = bytes.size();
        std::string_view line(bytes.data() + pos, end - pos);
        if (!blank(line)) {
            try {
                lines.push_back(json::parse(line));
            } catch (const json::parse_error& e) {
                throw to_parse_error(e, pos, path);
            }
        }
        pos = end + 1;
    }

    const json* meta = nullptr;
    if (manifest) {
        if (manifest->value("digest", "") != sha256_hex(bytes)) {
            ds.problems.push_back({std::nullopt, "digest", "manifest digest does not match file bytes"});
        } else if (manifest->contains("records") && (*manifest)["records"].size() == lines.size()) {
            meta = &(*manifest)["records"];
        } else {
            ds.problems.push_back({std::nullopt, "records", "manifest record count does not match file"});
        }
    }

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& obj = lines[i];
        if (!obj.is_object()) {
            ds.problems.push_back({i, "", "line is not a JSON object"});
            continue;
        }
        auto it = obj.find("text");
        if (it == obj.end() || !it->is_string()) {
            ds.problems.push_back({i, "text", "missing key \"text\""});
            continue;
        }
        PretrainSample s;
        s.text = it->get<std::string>();
        if (meta) {
            const json& m = (*meta)[i];
            s.source_kind = parse_source_kind(m.at("source_kind").get<std::string>());
            s.source_id = m.value("source_id", "");
        }
        for (auto& v : validate_record(s).violations) ds.problems.push_back({i, v.field, v.message});
        ds.records.push_back(std::move(s));
    }

    ds.manifest.kind = DatasetKind::pretrain;
    ds.manifest.file_name = path.filename().string();
    ds.manifest.digest = sha256_hex(bytes);
    ds.manifest.record_count = ds.records.size();
    for (const auto& s : ds.records) ++ds.manifest.category_counts[std::string(to_string(s.source_kind))];
    return ds;
}

DatasetManifest write_sft_dataset(const std::vector<SftRecord>& records, const fs::path& path) {
    if (auto problems = collect_problems(records); !problems.empty()) throw ValidationError(std::move(problems));

    const std::string bytes = serialize_sft(records);
    DatasetManifest m;
    m.kind = DatasetKind::sft;
    m.file_name = path.filename().string();
    m.digest = sha256_hex(bytes);
    m.record_count = records.size();
    json meta = json::array();
    for (const auto& r : records) {
        ++m.category_counts[std::string(to_string(r.category))];
        meta.push_back(record_metadata_json(r));
    }
    json mj = m;
    mj["records"] = std::move(meta);

    write_file_atomic(path, bytes);
    write_file_atomic(manifest_path_for(path), dump_manifest(mj));
    return m;
}

DatasetManifest write_pretrain_dataset(const std::vector<PretrainSample>& samples, const fs::path& path) {
    if (auto problems = collect_problems(samples); !problems.empty()) throw ValidationError(std::move(problems));

    const std::string bytes = serialize_pretrain(samples);
    DatasetManifest m;
    m.kind = DatasetKind::pretrain;
    m.file_name = path.filename().string();
    m.digest = sha256_hex(bytes);
    m.record_count = samples.size();
    json meta = json::array();
    for (const auto& s : samples) {
        ++m.category_counts[std::string(to_string(s.source_kind))];
        meta.push_back({{"source_kind", to_string(s.source_kind)}, {"source_id", s.source_id}});
    }
    json mj = m;
    mj["records"] = std::move(meta);

    write_file_atomic(path, bytes);
    write_file_atomic(manifest_path_for(path), dump_manifest(mj));
    return m;
}

std::vector<std::string> find_cross_file_duplicates(const std::map<Category, std::vector<SftRecord>>& by_category) {
    std::map<std::string, std::set<Category>> seen;
    for (const auto& [cat, recs] : by_category) {
        for (const auto& r : recs) seen[r.instruction].insert(cat);
    }
    std::vector<std::string> dups;
    for (const auto& [instruction, cats] : seen) {
        if (cats.size() > 1) dups.push_back(instruction);
    }
    return dups;
}

CollectionManifest write_sft_collection(const std::vector<SftRecord>& records, const fs::path& dir) {
    if (auto problems = collect_problems(records); !problems.empty()) throw ValidationError(std::move(problems));

    std::map<Category, std::vector<SftRecord>> by_category;
    for (Category c : kAllCategories) by_category[c];
    for (const auto& r : records) by_category[r.category].push_back(r);

    CollectionManifest cm;
    for (const auto& [cat, recs] : by_category) {
        const std::string name = category_file_name(cat);
        const auto m = write_sft_dataset(recs, dir / name);
        cm.category_counts[std::string(to_string(cat))] = recs.size();
        cm.file_digests[name] = m.digest;
    }
    cm.cross_file_duplicates = find_cross_file_duplicates(by_category);
    write_file_atomic(dir / "sft_manifest.json", dump_manifest(json(cm)));
    return cm;
}

}  // namespace twinforge
