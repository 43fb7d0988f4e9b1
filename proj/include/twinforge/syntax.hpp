#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "twinforge/error.hpp"

namespace twinforge::syntax {

/// Rooted ordered tree. Leaves carry token text; internal nodes only a kind.
struct SyntaxNode {
    std::string kind;
    std::string text;
    int line = 0;
    std::vector<SyntaxNode> children;

    bool is_leaf() const noexcept { return children.empty(); }
    bool operator==(const SyntaxNode&) const = default;
};

using SyntaxTree = SyntaxNode;

SyntaxNode leaf(std::string kind, std::string text = {}, int line = 0);
SyntaxNode node(std::string kind, std::vector<SyntaxNode> children, int line = 0);

/// S-expression of node kinds, leaf text omitted: "(call (identifier) (argument_list))".
std::string sexp(const SyntaxNode& n);

/// Def-use edge. Variables are numbered by order of first definition so that a
/// consistently renamed program yields the same edges; positions are the
/// occurrence ordinals of that variable (every def and use counts).
struct DataflowEdge {
    int var = 0;
    int def_pos = 0;
    int use_pos = 0;
    auto operator<=>(const DataflowEdge&) const = default;
};

struct DataflowGraph {
    std::vector<DataflowEdge> edges;
    bool operator==(const DataflowGraph&) const = default;
};

struct Diagnostic {
    int line = 0;
    int column = 0;
    std::string message;
};

class SyntaxError : public Error {
public:
    explicit SyntaxError(Diagnostic d);
    const Diagnostic& diagnostic() const noexcept { return diag_; }

private:
    Diagnostic diag_;
};

struct CodeToken {
    std::string kind;  // "name", "keyword", "number", "string", "op"
    std::string text;
    int line = 0;
};

struct ParseOutcome {
    std::optional<SyntaxTree> tree;
    std::optional<Diagnostic> error;
    bool ok() const noexcept { return tree.has_value(); }
};

/// A target language: its lexer, parser, dataflow extractor and keyword list.
class Grammar {
public:
    virtual ~Grammar() = default;
    virtual std::string_view name() const = 0;
    /// Significant tokens only (no layout, no comments). Throws SyntaxError.
    virtual std::vector<CodeToken> tokenize(std::string_view code) const = 0;
    virtual ParseOutcome parse(std::string_view code) const = 0;
    virtual DataflowGraph dataflow(const SyntaxTree& tree) const = 0;
    /// Module names imported by the program, dotted, in source order.
    virtual std::vector<std::string> imports(const SyntaxTree& tree) const = 0;
    /// Keywords that get extra weight in the weighted n-gram match.
    virtual const std::set<std::string>& keywords() const = 0;
};

/// Grammar for Python 3 scripts. Node kinds follow tree-sitter-python names.
class PythonGrammar final : public Grammar {
public:
    /// Keyword weights come from `keyword_file` (one per line).
    explicit PythonGrammar(const std::filesystem::path& keyword_file);
    /// Uses grammars/python_keywords.txt under the data directory.
    PythonGrammar();

    std::string_view name() const override { return "python"; }
    std::vector<CodeToken> tokenize(std::string_view code) const override;
    ParseOutcome parse(std::string_view code) const override;
    DataflowGraph dataflow(const SyntaxTree& tree) const override;
    std::vector<std::string> imports(const SyntaxTree& tree) const override;
    const std::set<std::string>& keywords() const override { return keywords_; }

private:
    std::set<std::string> keywords_;
};

/// Throws SyntaxError on the first problem.
SyntaxTree parse_python(std::string_view code);

}  // namespace twinforge::syntax
