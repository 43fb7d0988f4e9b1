#include "twinforge/synthesis.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

#include "twinforge/digest.hpp"
#include "twinforge/paths.hpp"
#include "twinforge/text.hpp"

namespace twinforge::synthesis {

std::string_view to_string(TemplateKind k) {
    switch (k) {
        case TemplateKind::contextual_qa: return "contextual_qa";
        case TemplateKind::expert_qa: return "expert_qa";
        case TemplateKind::debug_qa: return "debug_qa";
        case TemplateKind::judge: return "judge";
    }
    return "";
}

TemplateKind parse_template_kind(std::string_view s) {
    for (auto k : {TemplateKind::contextual_qa, TemplateKind::expert_qa, TemplateKind::debug_qa, TemplateKind::judge}) {
        if (to_string(k) == s) return k;
    }
    throw Error("unknown template kind: " + std::string(s));
}

// --- templates -------------------------------------------------------------

namespace {

bool name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

// Calls on_text for literal runs and on_name for placeholders.
template <typename Text, typename Name>
void scan_template(std::string_view body, Text on_text, Name on_name) {
    std::size_t i = 0;
    while (i < body.size()) {
        const char c = body[i];
        if ((c == '{' || c == '}') && i + 1 < body.size() && body[i + 1] == c) {
            on_text(std::string_view(&body[i], 1));
            i += 2;
            continue;
        }
        if (c == '{' && i + 1 < body.size() && name_start(body[i + 1])) {
            std::size_t j = i + 1;
            while (j < body.size() && name_char(body[j])) ++j;
            if (j < body.size() && body[j] == '}') {
                on_name(body.substr(i + 1, j - i - 1));
                i = j + 1;
                continue;
            }
        }
        const std::size_t next = body.find_first_of("{}", i + 1);
        const std::size_t end = next == std::string_view::npos ? body.size() : next;
        on_text(body.substr(i, end - i));
        i = end;
    }
}

}  // namespace

PromptTemplate PromptTemplate::from_text(TemplateKind kind, std::string name, std::string body) {
    PromptTemplate t{kind, std::move(name), std::move(body), {}};
    scan_template(
        t.body, [](std::string_view) {},
        [&](std::string_view n) {
            if (std::find(t.placeholders.begin(), t.placeholders.end(), n) == t.placeholders.end()) {
                t.placeholders.emplace_back(n);
            }
        });
    return t;
}

PromptTemplate load_template(std::string_view name, const std::filesystem::path& dir) {
    const auto base = dir.empty() ? data_dir() / "templates" : dir;
    const auto path = base / (std::string(name) + ".txt");
    TemplateKind kind = TemplateKind::contextual_qa;
    if (name.starts_with("judge")) {
        kind = TemplateKind::judge;
    } else {
        try {
            kind = parse_template_kind(name);
        } catch (const Error&) {
        }
    }
    return PromptTemplate::from_text(kind, std::string(name), read_file(path));
}

PromptTemplate load_template(TemplateKind kind, const std::filesystem::path& dir) {
    return load_template(kind == TemplateKind::judge ? "judge_ref_doc" : to_string(kind), dir);
}

std::string render_prompt_template(const PromptTemplate& tpl, const Bindings& bindings) {
    for (const auto& p : tpl.placeholders) {
        if (!bindings.count(p)) throw UnboundPlaceholder(p);
    }
    std::string out;
    out.reserve(tpl.body.size());
    scan_template(
        tpl.body, [&](std::string_view s) { out += s; }, [&](std::string_view n) { out += bindings.at(std::string(n)); });
    return out;
}

// --- response parsing --------------------------------------------------------

namespace {

std::string_view strip_fence(std::string_view s) {
    std::string_view t = s;
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.remove_prefix(1);
    while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
    if (!t.starts_with("```") || t.size() < 6 || !t.ends_with("```")) return s;
    const auto nl = t.find('\n');
    if (nl == std::string_view::npos) return s;
    t = t.substr(nl + 1);
    t.remove_suffix(3);
    return t;
}

// End (exclusive) of the balanced {...} starting at `start`, or npos.
std::size_t match_object(std::string_view s, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

}  // namespace

std::vector<nlohmann::json> parse_json_objects(std::string_view response) {
    const std::string_view body = strip_fence(response);
    std::vector<nlohmann::json> out;
    const auto whole = nlohmann::json::parse(body, nullptr, false);
    if (!whole.is_discarded()) {
        if (whole.is_object()) out.push_back(whole);
        if (whole.is_array()) {
            for (const auto& e : whole) {
                if (e.is_object()) out.push_back(e);
            }
        }
        return out;
    }
    std::size_t i = 0;
    while ((i = body.find('{', i)) != std::string_view::npos) {
        const std::size_t end = match_object(body, i);
        if (end == std::string_view::npos) break;
        auto obj = nlohmann::json::parse(body.substr(i, end - i), nullptr, false);
        if (!obj.is_discarded() && obj.is_object()) {
            out.push_back(std::move(obj));
            i = end;
        } else {
            ++i;
        }
    }
    return out;
}

// --- synthesis -----------------------------------------------------------------

Category default_category(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::contextual_qa: return Category::sim;
        case TemplateKind::expert_qa: return Category::nl2api;
        case TemplateKind::debug_qa: return Category::debug;
        case TemplateKind::judge: break;
    }
    throw Error("judge templates do not synthesize records");
}

namespace {

std::string excerpt(std::string_view s) {
    return std::string(s.substr(0, 400)) + (s.size() > 400 ? "..." : "");
}

bool is_prose(const std::string& line) {
    const std::string t = text::trim(line);
    if (t.empty() || t[0] == '#') return false;
    if (t.find('=') != std::string::npos || t.find('(') != std::string::npos) return false;
    const auto words = text::split_whitespace(t);
    return words.size() >= 4 && std::string_view(".?!:").find(t.back()) != std::string_view::npos;
}

bool looks_like_code(const std::string& line) {
    const std::string t = text::trim(line);
    if (t.empty() || is_prose(t)) return false;
    if (t.starts_with("import ") || t.starts_with("from ") || t.starts_with("#")) return true;
    return t.find('(') != std::string::npos || t.find(" = ") != std::string::npos;
}

std::vector<std::string> normalized(const std::vector<std::string>& lines) {
    std::vector<std::string> out;
    for (const auto& l : lines) {
        std::string n = text::normalize_whitespace(l);
        if (!n.empty()) out.push_back(std::move(n));
    }
    return out;
}

using Processor = std::function<void(const nlohmann::json&, SynthesisResult&)>;

SynthesisResult run_synthesis(const PromptTemplate& tpl, std::string_view markdown, int num_pairs,
                              llm::ChatClient& client, const SynthesisOptions& options, const Processor& process) {
    if (num_pairs < 1) throw Error("num_pairs must be at least 1");
    const std::string n = std::to_string(num_pairs);
    const std::string md(markdown);
    // The debug prompt spells its placeholders with '-' and '.'; bind every spelling.
    const Bindings bindings = {
        {"num_pairs", n}, {"num-pairs", n}, {"markdown_content", md}, {"markdown.content", md}};
    const std::string prompt = render_prompt_template(tpl, bindings);

    SynthesisResult result;
    std::string last_error, last_response;
    const int attempts = options.retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        llm::ChatRequest req = llm::make_request(options.model, prompt, options.temperature);
        req.seed = options.seed + attempt;
        try {
            last_response = client.complete_chat(req, llm::CachePolicy::use).content;
        } catch (const Error& e) {
            last_error = e.what();
            continue;
        }
        const auto objects = parse_json_objects(last_response);
        if (objects.empty()) {
            last_error = "no JSON object in response";
            continue;
        }
        for (const auto& obj : objects) {
            if (static_cast<int>(result.records.size()) >= num_pairs) {
                result.dropped.push_back({"exceeds num_pairs", obj});
                continue;
            }
            process(obj, result);
        }
        return result;
    }
    result.failure = SynthesisFailure{options.source_document, tpl.name, attempts, last_error, excerpt(last_response)};
    return result;
}

// Builds the record skeleton; returns false (and logs a drop) on a schema problem.
std::optional<SftRecord> base_record(const nlohmann::json& obj, Category category, const SynthesisOptions& options,
                                     SynthesisResult& result) {
    for (const char* key : {"instruction", "output"}) {
        if (!obj.contains(key) || !obj[key].is_string()) {
            result.dropped.push_back({std::string("missing or non-string ") + key, obj});
            return std::nullopt;
        }
    }
    if (obj.contains("input") && !obj["input"].is_string() && !obj["input"].is_null()) {
        result.dropped.push_back({"non-string input", obj});
        return std::nullopt;
    }
    SftRecord r;
    r.instruction = obj["instruction"].get<std::string>();
    r.output = obj["output"].get<std::string>();
    if (obj.contains("input") && obj["input"].is_string()) r.input = obj["input"].get<std::string>();
    r.category = category;
    r.provenance.origin = Origin::llm_generated;
    r.provenance.generator_model = options.model.model_id;
    r.provenance.source_document = options.source_document;
    r.provenance.timestamp = options.timestamp;
    return r;
}

void accept_if_valid(SftRecord r, const nlohmann::json& obj, SynthesisResult& result) {
    const auto v = validate_record(r);
    if (!v.ok()) {
        std::string why = "invalid record:";
        for (const auto& viol : v.violations) why += " " + viol.message + ";";
        why.pop_back();
        result.dropped.push_back({why, obj});
        return;
    }
    result.records.push_back(std::move(r));
}

bool contains_any(const std::string& hay, std::initializer_list<std::string_view> needles) {
    return std::any_of(needles.begin(), needles.end(),
                       [&](std::string_view n) { return hay.find(n) != std::string::npos; });
}

}  // namespace

SynthesisResult synthesize_qa_pairs(std::string_view markdown_content, int num_pairs, TemplateKind kind,
                                    llm::ChatClient& client, const SynthesisOptions& options) {
    if (kind != TemplateKind::contextual_qa && kind != TemplateKind::expert_qa) {
        throw Error("synthesize_qa_pairs takes contextual_qa or expert_qa");
    }
    const Category category = options.category.value_or(default_category(kind));
    const auto tpl = load_template(kind, options.template_dir);
    return run_synthesis(tpl, markdown_content, num_pairs, client, options,
                         [&](const nlohmann::json& obj, SynthesisResult& result) {
                             auto r = base_record(obj, category, options, result);
                             if (r) accept_if_valid(std::move(*r), obj, result);
                         });
}

SynthesisResult synthesize_debug_pairs(std::string_view markdown_content, int num_pairs, llm::ChatClient& client,
                                       const SynthesisOptions& options) {
    const auto tpl = load_template(TemplateKind::debug_qa, options.template_dir);
    return run_synthesis(tpl, markdown_content, num_pairs, client, options,
                         [&](const nlohmann::json& obj, SynthesisResult& result) {
                             auto r = base_record(obj, Category::debug, options, result);
                             if (!r) return;
                             const auto buggy = normalized(extract_code_lines(r->instruction));
                             if (buggy.empty()) {
                                 result.dropped.push_back({"instruction has no code", obj});
                                 return;
                             }
                             if (buggy == normalized(extract_code_lines(r->output))) {
                                 result.dropped.push_back({"buggy code equals corrected code", obj});
                                 return;
                             }
                             r->metadata["bug_category"] = std::string(to_string(classify_bug(obj)));
                             accept_if_valid(std::move(*r), obj, result);
                         });
}

std::vector<std::string> extract_code_lines(std::string_view text_in) {
    const auto lines = text::split_lines(text_in);
    std::vector<std::string> fenced;
    bool in_fence = false, saw_fence = false;
    for (const auto& l : lines) {
        if (text::trim(l).starts_with("```")) {
            in_fence = !in_fence;
            saw_fence = true;
            continue;
        }
        if (in_fence) fenced.push_back(l);
    }
    if (saw_fence) return fenced;

    std::vector<std::string> out;
    auto marker = std::find_if(lines.begin(), lines.end(), [](const std::string& l) {
        const std::string t = text::to_lower(text::trim(l));
        return t == "python" || t == "py" || t == "python3";
    });
    if (marker != lines.end()) {
        for (auto it = std::next(marker); it != lines.end(); ++it) {
            if (!is_prose(*it)) out.push_back(*it);
        }
        return out;
    }
    for (const auto& l : lines) {
        if (looks_like_code(l)) out.push_back(l);
    }
    return out;
}

std::optional<BugCategory> parse_bug_label(std::string_view label) {
    std::string s;
    for (char c : text::to_lower(label)) s.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    for (auto b : kAllBugCategories) {
        if (s == to_string(b)) return b;
    }
    if (contains_any(s, {"time_step", "timestep"})) return BugCategory::unreasonable_time_step;
    if (contains_any(s, {"misspell", "typo", "spelling"})) return BugCategory::misspelled_api;
    if (s.find("parameter") != std::string::npos && s.find("type") != std::string::npos) {
        return BugCategory::wrong_parameter_types;
    }
    if (s.find("initiali") != std::string::npos) return BugCategory::incorrect_initialization;
    if (s.find("misuse") != std::string::npos) return BugCategory::api_misuse;
    if (s.find("logic") != std::string::npos) return BugCategory::logic_error;
    if (contains_any(s, {"data", "value"})) return BugCategory::wrong_data_values;
    return std::nullopt;
}

BugCategory classify_bug(const nlohmann::json& item) {
    for (const char* key : {"bug_category", "bug_type", "category", "error_type"}) {
        if (item.contains(key) && item[key].is_string()) {
            if (auto b = parse_bug_label(item[key].get<std::string>())) return *b;
        }
    }
    const std::string why = item.contains("output") && item["output"].is_string()
                                ? text::to_lower(item["output"].get<std::string>())
                                : std::string();
    if (contains_any(why, {"time step", "timestep", "step size"})) return BugCategory::unreasonable_time_step;
    if (contains_any(why, {"typo", "misspell", "spelled", "capitaliz"})) return BugCategory::misspelled_api;
    if (contains_any(why, {"string instead", "instead of a float", "instead of an int", "parameter type",
                           "wrong type", "type error", "typeerror"})) {
        return BugCategory::wrong_parameter_types;
    }
    if (contains_any(why, {"negative", "physically", "nonsensical", "unrealistic value"})) {
        return BugCategory::wrong_data_values;
    }
    if (contains_any(why, {"not initialized", "never set", "forgot", "without setting", "missing", "not set"})) {
        return BugCategory::incorrect_initialization;
    }
    if (contains_any(why, {"before", "order", "misuse", "not valid in this context"})) return BugCategory::api_misuse;
    return BugCategory::logic_error;
}

nlohmann::json to_json(const SynthesisFailure& f) {
    return {{"source_document", f.source_document},
            {"template", f.template_name},
            {"attempts", f.attempts},
            {"error", f.error},
            {"response_excerpt", f.response_excerpt}};
}

nlohmann::json to_json(const DroppedItem& d) { return {{"reason", d.reason}, {"item", d.item}}; }

// --- migration -----------------------------------------------------------------

MigrationTable::MigrationTable(std::vector<MigrationRule> rules) : rules_(std::move(rules)) {
    std::set<std::string> olds, news;
    for (const auto& r : rules_) {
        if (r.old_pattern.empty() || r.new_pattern.empty()) throw ConfigError("migration rule with empty pattern");
        if (!olds.insert(r.old_pattern).second) throw ConfigError("duplicate old pattern: " + r.old_pattern);
        if (!news.insert(r.new_pattern).second) throw ConfigError("duplicate new pattern: " + r.new_pattern);
    }
}

MigrationTable MigrationTable::load_csv(const std::filesystem::path& path) {
    std::vector<MigrationRule> rules;
    bool header = true;
    for (const auto& raw : text::split_lines(read_file(path))) {
        const std::string line = text::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            if (line == "old,new") continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("migration row without two columns: " + line);
        rules.push_back({text::trim(line.substr(0, comma)), text::trim(line.substr(comma + 1))});
    }
    return MigrationTable(std::move(rules));
}

MigrationTable MigrationTable::load_default() { return load_csv(data_dir() / "migration" / "pychrono_api.csv"); }

namespace {
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
}  // namespace

MigrationResult migrate_api_identifiers(std::string_view code, const MigrationTable& table, Direction direction) {
    std::vector<std::pair<std::string_view, std::string_view>> pats;
    for (const auto& r : table.rules()) {
        if (direction == Direction::old_to_new) {
            pats.emplace_back(r.old_pattern, r.new_pattern);
        } else {
            pats.emplace_back(r.new_pattern, r.old_pattern);
        }
    }
    std::stable_sort(pats.begin(), pats.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    MigrationResult out;
    out.code.reserve(code.size());
    std::size_t i = 0;
    while (i < code.size()) {
        const bool boundary_before = i == 0 || !(ident_char(code[i - 1]) || code[i - 1] == '.');
        bool matched = false;
        if (boundary_before) {
            for (const auto& [from, to] : pats) {
                if (code.compare(i, from.size(), from) != 0) continue;
                const std::size_t end = i + from.size();
                if (ident_char(from.back()) && end < code.size() && ident_char(code[end])) continue;
                out.rewrites.push_back({i, std::string(from), std::string(to)});
                out.code += to;
                i = end;
                matched = true;
                break;
            }
        }
        if (!matched) out.code.push_back(code[i++]);
    }
    return out;
}

// --- ICL ------------------------------------------------------------------------

std::string_view to_string(IclSection s) {
    switch (s) {
        case IclSection::library_imports: return "library_imports";
        case IclSection::contact_collision: return "contact_collision";
        case IclSection::visualization: return "visualization";
        case IclSection::body_init: return "body_init";
        case IclSection::joints: return "joints";
        case IclSection::simulation_loop: return "simulation_loop";
    }
    return "";
}

std::string_view section_title(IclSection s) {
    switch (s) {
        case IclSection::library_imports: return "Library Imports";
        case IclSection::contact_collision: return "Contact and Collision Settings";
        case IclSection::visualization: return "Visualization Settings";
        case IclSection::body_init: return "Body Initialization and Properties";
        case IclSection::joints: return "Joints";
        case IclSection::simulation_loop: return "Simulation Loop";
    }
    return "";
}

IclContextPack IclContextPack::load_dir(const std::filesystem::path& dir, std::size_t token_budget) {
    IclContextPack pack;
    pack.token_budget = token_budget;
    for (auto s : kIclOrder) {
        const auto path = dir / (std::string(to_string(s)) + ".md");
        std::error_code ec;
        if (std::filesystem::exists(path, ec)) pack.sections[s] = read_file(path);
    }
    return pack;
}

std::size_t estimate_tokens(std::string_view text_in) {
    std::size_t points = 0;
    for (char c : text_in) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++points;
    }
    return (points + 3) / 4;
}

namespace {
std::string render_icl(const IclContextPack& pack, const std::set<IclSection>& dropped, std::string_view task) {
    std::string out;
    for (auto s : kIclOrder) {
        auto it = pack.sections.find(s);
        if (it == pack.sections.end() || text::trim(it->second).empty() || dropped.count(s)) continue;
        out += "### ";
        out += section_title(s);
        out += "\n";
        out += text::trim(it->second);
        out += "\n\n";
    }
    out += task;
    return out;
}
}  // namespace

IclPrompt build_icl_context(const IclContextPack& pack, std::string_view task_prompt) {
    if (estimate_tokens(task_prompt) > pack.token_budget) {
        throw Error("token budget " + std::to_string(pack.token_budget) + " is smaller than the task prompt (" +
                    std::to_string(estimate_tokens(task_prompt)) + " tokens)");
    }
    std::set<IclSection> dropped;
    IclPrompt out;
    out.prompt = render_icl(pack, dropped, task_prompt);
    for (auto it = kIclOrder.rbegin(); it != kIclOrder.rend() && estimate_tokens(out.prompt) > pack.token_budget;
         ++it) {
        auto sec = pack.sections.find(*it);
        if (sec == pack.sections.end() || text::trim(sec->second).empty()) continue;
        dropped.insert(*it);
        out.dropped.push_back(*it);
        out.prompt = render_icl(pack, dropped, task_prompt);
    }
    out.estimated_tokens = estimate_tokens(out.prompt);
    return out;
}

}  // namespace twinforge::synthesis
