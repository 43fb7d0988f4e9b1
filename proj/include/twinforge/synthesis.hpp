#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twinforge/datamodel.hpp"
#include "twinforge/llmclient.hpp"

namespace twinforge::synthesis {

enum class TemplateKind { contextual_qa, expert_qa, debug_qa, judge };

std::string_view to_string(TemplateKind k);
TemplateKind parse_template_kind(std::string_view s);

/// Placeholders are `{name}` with name in [A-Za-z_][A-Za-z0-9_.-]*; `{{` and
/// `}}` stand for literal braces. Any other brace is literal text.
struct PromptTemplate {
    TemplateKind kind = TemplateKind::contextual_qa;
    std::string name;
    std::string body;
    /// Distinct placeholder names in order of first appearance.
    std::vector<std::string> placeholders;

    static PromptTemplate from_text(TemplateKind kind, std::string name, std::string body);
};

/// Loads templates/<name>.txt from the data directory (or `dir` when given).
PromptTemplate load_template(std::string_view name, const std::filesystem::path& dir = {});
PromptTemplate load_template(TemplateKind kind, const std::filesystem::path& dir = {});

class UnboundPlaceholder : public Error {
public:
    explicit UnboundPlaceholder(const std::string& name) : Error("unbound: " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

using Bindings = std::map<std::string, std::string>;

/// Literal, single-pass substitution. Throws UnboundPlaceholder.
std::string render_prompt_template(const PromptTemplate& tpl, const Bindings& bindings);

// --- LLM-driven synthesis ---------------------------------------------------

struct SynthesisOptions {
    llm::ModelHandle model;
    double temperature = 0.7;
    /// Extra attempts after the first when a response yields no JSON.
    int retries = 3;
    std::string source_document;
    Timestamp timestamp{};
    /// Seed of the first attempt; retry i uses seed + i.
    std::int64_t seed = 0;
    /// Overrides the category implied by the template kind.
    std::optional<Category> category;
    std::filesystem::path template_dir;
};

struct DroppedItem {
    std::string reason;
    nlohmann::json item;
};

struct SynthesisFailure {
    std::string source_document;
    std::string template_name;
    int attempts = 0;
    std::string error;
    std::string response_excerpt;
};

struct SynthesisResult {
    std::vector<SftRecord> records;
    std::vector<DroppedItem> dropped;
    std::optional<SynthesisFailure> failure;
};

/// Category a template kind produces by default: contextual_qa -> sim,
/// expert_qa -> nl2api, debug_qa -> debug.
Category default_category(TemplateKind kind);

/// Strips one enclosing code fence, then reads a JSON array, a single object,
/// or a run of concatenated objects. Empty when nothing parses.
std::vector<nlohmann::json> parse_json_objects(std::string_view response);

SynthesisResult synthesize_qa_pairs(std::string_view markdown_content, int num_pairs, TemplateKind kind,
                                    llm::ChatClient& client, const SynthesisOptions& options);

SynthesisResult synthesize_debug_pairs(std::string_view markdown_content, int num_pairs, llm::ChatClient& client,
                                       const SynthesisOptions& options);

/// Code carried by a message: fenced blocks if any, otherwise the lines after a
/// bare language marker line ("python"), with trailing prose removed.
std::vector<std::string> extract_code_lines(std::string_view text);

/// Explicit tag if the item names one, else rules over the explanation and the
/// code change; defaults to logic_error.
BugCategory classify_bug(const nlohmann::json& item);
std::optional<BugCategory> parse_bug_label(std::string_view label);

nlohmann::json to_json(const SynthesisFailure& f);
nlohmann::json to_json(const DroppedItem& d);

// --- API migration ----------------------------------------------------------

struct MigrationRule {
    std::string old_pattern;
    std::string new_pattern;
};

class MigrationTable {
public:
    explicit MigrationTable(std::vector<MigrationRule> rules);
    /// Two-column CSV with a header row "old,new".
    static MigrationTable load_csv(const std::filesystem::path& path);
    static MigrationTable load_default();

    const std::vector<MigrationRule>& rules() const noexcept { return rules_; }

private:
    std::vector<MigrationRule> rules_;
};

enum class Direction { old_to_new, new_to_old };

struct AppliedRewrite {
    std::size_t offset = 0;
    std::string from;
    std::string to;
};

struct MigrationResult {
    std::string code;
    std::vector<AppliedRewrite> rewrites;
};

/// Longest match first, left to right, never inside a longer dotted identifier.
MigrationResult migrate_api_identifiers(std::string_view code, const MigrationTable& table, Direction direction);

// --- in-context learning packs ----------------------------------------------

enum class IclSection { library_imports, contact_collision, visualization, body_init, joints, simulation_loop };

inline constexpr std::array<IclSection, 6> kIclOrder = {
    IclSection::library_imports, IclSection::contact_collision, IclSection::visualization,
    IclSection::body_init,       IclSection::joints,            IclSection::simulation_loop};

std::string_view to_string(IclSection s);
std::string_view section_title(IclSection s);

struct IclContextPack {
    std::map<IclSection, std::string> sections;
    std::size_t token_budget = 8192;

    /// Reads a directory holding <section>.md files; missing files are empty.
    static IclContextPack load_dir(const std::filesystem::path& dir, std::size_t token_budget);
};

struct IclPrompt {
    std::string prompt;
    std::vector<IclSection> dropped;
    std::size_t estimated_tokens = 0;
};

/// ceil(code points / 4).
std::size_t estimate_tokens(std::string_view text);

/// Throws Error when the task prompt alone exceeds the budget.
IclPrompt build_icl_context(const IclContextPack& pack, std::string_view task_prompt);

}  // namespace twinforge::synthesis
