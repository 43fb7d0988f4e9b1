// Lexer, recursive-descent parser and def-use extractor for Python 3 scripts.
// Covers the statement and expression forms found in simulation scripts;
// `match` statements and PEP 695 generics are not recognised.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_set>

#include "twinforge/digest.hpp"
#include "twinforge/paths.hpp"
#include "twinforge/syntax.hpp"
#include "twinforge/text.hpp"

namespace twinforge::syntax {

SyntaxError::SyntaxError(Diagnostic d)
    : Error("line " + std::to_string(d.line) + ":" + std::to_string(d.column) + ": " + d.message),
      diag_(std::move(d)) {}

SyntaxNode leaf(std::string kind, std::string text, int line) {
    return SyntaxNode{std::move(kind), std::move(text), line, {}};
}

SyntaxNode node(std::string kind, std::vector<SyntaxNode> children, int line) {
    return SyntaxNode{std::move(kind), {}, line, std::move(children)};
}

std::string sexp(const SyntaxNode& n) {
    std::string out = "(" + n.kind;
    for (const auto& c : n.children) out += " " + sexp(c);
    out += ")";
    return out;
}

namespace {

// --- lexer ---------------------------------------------------------------------------

enum class T { Name, Number, String, Op, Newline, Indent, Dedent, End };

struct Tok {
    T type;
    std::string text;
    int line;
    int col;
};

const std::unordered_set<std::string>& python_keywords() {
    static const std::unordered_set<std::string> kw = {
        "False", "None",   "True",    "and",      "as",   "assert", "async",  "await",
        "break", "class",  "continue", "def",     "del",  "elif",   "else",   "except",
        "finally", "for",  "from",    "global",   "if",   "import", "in",     "is",
        "lambda", "nonlocal", "not",  "or",       "pass", "raise",  "return", "try",
        "while", "with",   "yield"};
    return kw;
}

constexpr std::array<std::string_view, 3> kOps3 = {"**=", "//=", ">>="};
constexpr std::array<std::string_view, 22> kOps2 = {"<<=", "...", "**", "//", ">>", "<<", "<=", ">=", "==", "!=", "->",
                                                    "+=", "-=", "*=", "/=", "%=", "@=", "&=", "|=", "^=", ":=", "<>"};
constexpr std::string_view kOps1 = "+-*/%@&|^~<>()[]{},:;.=!";

bool ident_start(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalpha(u) || c == '_' || u >= 0x80;
}
bool ident_char(char c) { return ident_start(c) || std::isdigit(static_cast<unsigned char>(c)); }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Tok> run() {
        while (true) {
            if (at_line_start_ && brackets_.empty()) {
                if (!handle_indentation()) break;
            }
            if (i_ >= src_.size()) break;
            const char c = src_[i_];
            if (c == ' ' || c == '\t' || c == '\f') {
                ++i_;
            } else if (c == '#') {
                while (i_ < src_.size() && src_[i_] != '\n' && src_[i_] != '\r') ++i_;
            } else if (c == '\\') {
                if (!consume_newline(i_ + 1)) fail("unexpected character after line continuation character");
            } else if (c == '\n' || c == '\r') {
                const int l = line_, col = column();
                consume_newline(i_);
                if (brackets_.empty()) {
                    push(T::Newline, "", l, col);
                    at_line_start_ = true;
                }
            } else if (ident_start(c)) {
                lex_name();
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
                lex_number();
            } else if (c == '"' || c == '\'') {
                lex_string(i_);
            } else {
                lex_op();
            }
        }
        if (!brackets_.empty()) {
            const auto& [ch, l, col] = brackets_.back();
            throw SyntaxError({l, col, std::string("'") + ch + "' was never closed"});
        }
        if (!out_.empty() && out_.back().type != T::Newline && out_.back().type != T::Dedent) {
            push(T::Newline, "", line_, column());
        }
        while (indents_.size() > 1) {
            indents_.pop_back();
            push(T::Dedent, "", line_, 0);
        }
        push(T::End, "", line_, column());
        return std::move(out_);
    }

private:
    int column() const { return static_cast<int>(i_ - line_start_) + 1; }

    [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError({line_, column(), msg}); }

    void push(T t, std::string text, int line, int col) { out_.push_back({t, std::move(text), line, col}); }

    bool consume_newline(std::size_t at) {
        if (at < src_.size() && src_[at] == '\r') {
            ++at;
            if (at < src_.size() && src_[at] == '\n') ++at;
        } else if (at < src_.size() && src_[at] == '\n') {
            ++at;
        } else {
            return false;
        }
        i_ = at;
        ++line_;
        line_start_ = i_;
        return true;
    }

    // Returns false at end of input.
    bool handle_indentation() {
        while (true) {
            int width = 0;
            std::size_t j = i_;
            while (j < src_.size() && (src_[j] == ' ' || src_[j] == '\t' || src_[j] == '\f')) {
                width = src_[j] == '\t' ? (width / 8 + 1) * 8 : (src_[j] == ' ' ? width + 1 : 0);
                ++j;
            }
            if (j >= src_.size()) {
                i_ = j;
                return false;
            }
            if (src_[j] == '#') {
                while (j < src_.size() && src_[j] != '\n' && src_[j] != '\r') ++j;
                i_ = j;
                if (!consume_newline(i_)) return false;
                continue;
            }
            if (src_[j] == '\n' || src_[j] == '\r') {
                consume_newline(j);
                continue;
            }
            if (src_[j] == '\\' && consume_newline(j + 1)) continue;
            i_ = j;
            at_line_start_ = false;
            if (width > indents_.back()) {
                indents_.push_back(width);
                push(T::Indent, "", line_, column());
            } else {
                while (width < indents_.back()) {
                    indents_.pop_back();
                    push(T::Dedent, "", line_, column());
                }
                if (width != indents_.back()) fail("unindent does not match any outer indentation level");
            }
            return true;
        }
    }

    void lex_name() {
        const std::size_t start = i_;
        const int col = column();
        while (i_ < src_.size() && ident_char(src_[i_])) ++i_;
        std::string word(src_.substr(start, i_ - start));
        if (i_ < src_.size() && (src_[i_] == '"' || src_[i_] == '\'') && word.size() <= 2) {
            const std::string lw = text::to_lower(word);
            static const std::unordered_set<std::string> prefixes = {"r", "u", "b", "f", "rb", "br", "fr", "rf"};
            if (prefixes.count(lw)) {
                i_ = start;
                lex_string(start + word.size());
                return;
            }
        }
        push(T::Name, std::move(word), line_, col);
    }

    void lex_number() {
        const std::size_t start = i_;
        const int col = column();
        auto digits = [&](auto pred) {
            while (i_ < src_.size() && (pred(src_[i_]) || src_[i_] == '_')) ++i_;
        };
        auto is_dec = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
        if (src_[i_] == '0' && i_ + 1 < src_.size() && std::string_view("xXoObB").find(src_[i_ + 1]) != std::string_view::npos) {
            i_ += 2;
            digits([](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
        } else {
            digits(is_dec);
            if (i_ < src_.size() && src_[i_] == '.') {
                ++i_;
                digits(is_dec);
            }
            if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
                std::size_t k = i_ + 1;
                if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
                if (k < src_.size() && is_dec(src_[k])) {
                    i_ = k;
                    digits(is_dec);
                }
            }
            if (i_ < src_.size() && (src_[i_] == 'j' || src_[i_] == 'J')) ++i_;
        }
        if (i_ < src_.size() && ident_char(src_[i_])) fail("invalid decimal literal");
        push(T::Number, std::string(src_.substr(start, i_ - start)), line_, col);
    }

    // `quote_at` is the index of the opening quote; i_ points at the prefix.
    void lex_string(std::size_t quote_at) {
        const std::size_t start = i_;
        const int start_line = line_;
        const int col = column();
        const char q = src_[quote_at];
        const bool triple = quote_at + 2 < src_.size() && src_[quote_at + 1] == q && src_[quote_at + 2] == q;
        i_ = quote_at + (triple ? 3 : 1);
        while (true) {
            if (i_ >= src_.size()) {
                throw SyntaxError({start_line, col, triple ? "unterminated triple-quoted string literal"
                                                           : "unterminated string literal"});
            }
            const char c = src_[i_];
            if (c == '\\') {
                if (!consume_newline(i_ + 1)) i_ += 2;
                continue;
            }
            if (c == '\n' || c == '\r') {
                if (!triple) throw SyntaxError({start_line, col, "unterminated string literal"});
                consume_newline(i_);
                continue;
            }
            if (c == q) {
                if (!triple) {
                    ++i_;
                    break;
                }
                if (i_ + 2 < src_.size() && src_[i_ + 1] == q && src_[i_ + 2] == q) {
                    i_ += 3;
                    break;
                }
            }
            ++i_;
        }
        push(T::String, std::string(src_.substr(start, i_ - start)), start_line, col);
    }

    void lex_op() {
        const int col = column();
        const std::string_view rest = src_.substr(i_);
        for (auto op : kOps3) {
            if (rest.starts_with(op)) {
                push(T::Op, std::string(op), line_, col);
                i_ += op.size();
                return;
            }
        }
        for (auto op : kOps2) {
            if (rest.starts_with(op)) {
                if (op == "<>") fail("invalid syntax");
                push(T::Op, std::string(op), line_, col);
                i_ += op.size();
                return;
            }
        }
        const char c = src_[i_];
        if (kOps1.find(c) == std::string_view::npos || c == '!') {
            fail(std::string("invalid character '") + c + "'");
        }
        if (c == '(' || c == '[' || c == '{') {
            brackets_.push_back({c, line_, col});
        } else if (c == ')' || c == ']' || c == '}') {
            if (brackets_.empty()) fail(std::string("unmatched '") + c + "'");
            const char open = std::get<0>(brackets_.back());
            const char want = open == '(' ? ')' : open == '[' ? ']' : '}';
            if (c != want) {
                fail(std::string("closing parenthesis '") + c + "' does not match opening parenthesis '" + open + "'");
            }
            brackets_.pop_back();
        }
        push(T::Op, std::string(1, c), line_, col);
        ++i_;
    }

    std::string_view src_;
    std::size_t i_ = 0;
    std::size_t line_start_ = 0;
    int line_ = 1;
    bool at_line_start_ = true;
    std::vector<int> indents_{0};
    std::vector<std::tuple<char, int, int>> brackets_;
    std::vector<Tok> out_;
};

// --- parser -------------------------------------------------------------------------------

class Parser {
public:
    explicit Parser(std::vector<Tok> toks) : t_(std::move(toks)) {}

    SyntaxNode parse_module() {
        std::vector<SyntaxNode> body;
        while (!at(T::End)) {
            if (accept(T::Newline)) continue;
            if (at(T::Indent)) fail("unexpected indent");
            statement(body);
        }
        return node("module", std::move(body), 1);
    }

private:
    // --- token helpers
    const Tok& cur() const { return t_[p_]; }
    const Tok& peek(std::size_t k = 1) const { return t_[std::min(p_ + k, t_.size() - 1)]; }
    bool at(T type) const { return cur().type == type; }
    bool at_op(std::string_view s) const { return cur().type == T::Op && cur().text == s; }
    bool at_kw(std::string_view s) const { return cur().type == T::Name && cur().text == s; }
    bool accept(T type) {
        if (!at(type)) return false;
        ++p_;
        return true;
    }
    bool accept_op(std::string_view s) {
        if (!at_op(s)) return false;
        ++p_;
        return true;
    }
    bool accept_kw(std::string_view s) {
        if (!at_kw(s)) return false;
        ++p_;
        return true;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw SyntaxError({cur().line, cur().col, msg});
    }
    [[noreturn]] void fail_at_token() const {
        if (at(T::Indent)) fail("unexpected indent");
        if (at(T::Dedent) || at(T::Newline) || at(T::End)) fail("invalid syntax: unexpected end of statement");
        fail("invalid syntax near '" + cur().text + "'");
    }
    void expect_op(std::string_view s) {
        if (!accept_op(s)) {
            if (at(T::Newline) || at(T::End) || at(T::Dedent)) fail("expected '" + std::string(s) + "'");
            fail("expected '" + std::string(s) + "' near '" + cur().text + "'");
        }
    }
    void expect_kw(std::string_view s) {
        if (!accept_kw(s)) fail("expected '" + std::string(s) + "'");
    }
    void expect_newline() {
        if (!accept(T::Newline)) fail_at_token();
    }
    bool is_keyword(const Tok& t) const { return t.type == T::Name && python_keywords().count(t.text); }

    SyntaxNode identifier() {
        if (!at(T::Name) || is_keyword(cur())) fail("expected identifier");
        SyntaxNode n = leaf("identifier", cur().text, cur().line);
        ++p_;
        return n;
    }

    // --- statements
    void statement(std::vector<SyntaxNode>& out) {
        const Tok& tk = cur();
        if (tk.type == T::Name) {
            const std::string& w = tk.text;
            if (w == "if") return out.push_back(if_statement());
            if (w == "while") return out.push_back(while_statement());
            if (w == "for") return out.push_back(for_statement());
            if (w == "try") return out.push_back(try_statement());
            if (w == "with") return out.push_back(with_statement());
            if (w == "def") return out.push_back(function_definition());
            if (w == "class") return out.push_back(class_definition());
            if (w == "async" && peek().type == T::Name &&
                (peek().text == "def" || peek().text == "for" || peek().text == "with")) {
                ++p_;
                return statement(out);
            }
        }
        if (at_op("@")) return out.push_back(decorated_definition());
        simple_statements(out);
    }

    void simple_statements(std::vector<SyntaxNode>& out) {
        out.push_back(small_statement());
        while (accept_op(";")) {
            if (at(T::Newline)) break;
            out.push_back(small_statement());
        }
        expect_newline();
    }

    SyntaxNode small_statement() {
        const int line = cur().line;
        if (at(T::Name)) {
            const std::string w = cur().text;
            if (w == "pass") return ++p_, leaf("pass_statement", "", line);
            if (w == "break") return ++p_, leaf("break_statement", "", line);
            if (w == "continue") return ++p_, leaf("continue_statement", "", line);
            if (w == "return") {
                ++p_;
                std::vector<SyntaxNode> ch;
                if (!at_statement_end()) ch.push_back(testlist_star());
                return node("return_statement", std::move(ch), line);
            }
            if (w == "raise") {
                ++p_;
                std::vector<SyntaxNode> ch;
                if (!at_statement_end()) {
                    ch.push_back(test());
                    if (accept_kw("from")) ch.push_back(test());
                }
                return node("raise_statement", std::move(ch), line);
            }
            if (w == "global" || w == "nonlocal") {
                ++p_;
                std::vector<SyntaxNode> ch;
                ch.push_back(identifier());
                while (accept_op(",")) ch.push_back(identifier());
                return node(w + "_statement", std::move(ch), line);
            }
            if (w == "del") {
                ++p_;
                std::vector<SyntaxNode> ch;
                ch.push_back(target_list());
                return node("delete_statement", std::move(ch), line);
            }
            if (w == "assert") {
                ++p_;
                std::vector<SyntaxNode> ch;
                ch.push_back(test());
                if (accept_op(",")) ch.push_back(test());
                return node("assert_statement", std::move(ch), line);
            }
            if (w == "import") return import_statement();
            if (w == "from") return import_from_statement();
        }
        return expression_statement();
    }

    bool at_statement_end() const { return at(T::Newline) || at_op(";") || at(T::End); }

    SyntaxNode dotted_name() {
        const int line = cur().line;
        std::vector<SyntaxNode> parts;
        parts.push_back(identifier());
        while (accept_op(".")) parts.push_back(identifier());
        return node("dotted_name", std::move(parts), line);
    }

    SyntaxNode import_statement() {
        const int line = cur().line;
        expect_kw("import");
        std::vector<SyntaxNode> ch;
        do {
            SyntaxNode name = dotted_name();
            if (accept_kw("as")) {
                ch.push_back(node("aliased_import", {std::move(name), identifier()}, line));
            } else {
                ch.push_back(std::move(name));
            }
        } while (accept_op(","));
        return node("import_statement", std::move(ch), line);
    }

    SyntaxNode import_from_statement() {
        const int line = cur().line;
        expect_kw("from");
        std::vector<SyntaxNode> ch;
        std::string dots;
        while (at_op(".") || at_op("...")) {
            dots += cur().text;
            ++p_;
        }
        if (!dots.empty()) {
            std::vector<SyntaxNode> rel;
            rel.push_back(leaf("import_prefix", dots, line));
            if (!at_kw("import")) rel.push_back(dotted_name());
            ch.push_back(node("relative_import", std::move(rel), line));
        } else {
            ch.push_back(dotted_name());
        }
        expect_kw("import");
        if (accept_op("*")) {
            ch.push_back(leaf("wildcard_import", "*", line));
            return node("import_from_statement", std::move(ch), line);
        }
        const bool paren = accept_op("(");
        do {
            if (paren && at_op(")")) break;
            SyntaxNode name = dotted_name();
            if (accept_kw("as")) {
                ch.push_back(node("aliased_import", {std::move(name), identifier()}, line));
            } else {
                ch.push_back(std::move(name));
            }
        } while (accept_op(","));
        if (paren) expect_op(")");
        return node("import_from_statement", std::move(ch), line);
    }

    SyntaxNode expression_statement() {
        const int line = cur().line;
        SyntaxNode first = testlist_star();
        static const std::unordered_set<std::string> augops = {"+=", "-=", "*=", "/=", "//=", "%=", "@=",
                                                               "&=", "|=", "^=", ">>=", "<<=", "**="};
        if (cur().type == T::Op && augops.count(cur().text)) {
            check_target(first, true);
            ++p_;
            SyntaxNode rhs = at_kw("yield") ? yield_expression() : testlist();
            return node("augmented_assignment", {std::move(first), std::move(rhs)}, line);
        }
        if (at_op(":")) {
            ++p_;
            check_target(first, true);
            std::vector<SyntaxNode> ch;
            ch.push_back(std::move(first));
            ch.push_back(node("type", {test()}, line));
            if (accept_op("=")) ch.push_back(at_kw("yield") ? yield_expression() : testlist_star());
            return node("assignment", std::move(ch), line);
        }
        if (at_op("=")) {
            std::vector<SyntaxNode> chain;
            chain.push_back(std::move(first));
            while (accept_op("=")) chain.push_back(at_kw("yield") ? yield_expression() : testlist_star());
            SyntaxNode value = std::move(chain.back());
            chain.pop_back();
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                check_target(*it, false);
                value = node("assignment", {std::move(*it), std::move(value)}, line);
            }
            return value;
        }
        return node("expression_statement", {std::move(first)}, line);
    }

    void check_target(const SyntaxNode& n, bool single) const {
        const std::string& k = n.kind;
        if (k == "identifier" || k == "attribute" || k == "subscript") return;
        if (!single && (k == "tuple" || k == "list" || k == "pattern_list" || k == "expression_list")) {
            for (const auto& c : n.children) check_target(c, false);
            return;
        }
        if (!single && k == "list_splat") {
            check_target(n.children.front(), true);
            return;
        }
        if (k == "parenthesized_expression") {
            check_target(n.children.front(), single);
            return;
        }
        throw SyntaxError({n.line, 0, "cannot assign to " + k});
    }

    SyntaxNode block() {
        const int line = cur().line;
        expect_op(":");
        std::vector<SyntaxNode> body;
        if (accept(T::Newline)) {
            if (!accept(T::Indent)) fail("expected an indented block");
            while (!accept(T::Dedent)) {
                if (at(T::End)) break;
                if (accept(T::Newline)) continue;
                if (at(T::Indent)) fail("unexpected indent");
                statement(body);
            }
        } else {
            simple_statements(body);
        }
        return node("block", std::move(body), line);
    }

    SyntaxNode if_statement() {
        const int line = cur().line;
        expect_kw("if");
        std::vector<SyntaxNode> ch;
        ch.push_back(named_test());
        ch.push_back(block());
        while (at_kw("elif")) {
            const int l = cur().line;
            ++p_;
            SyntaxNode cond = named_test();
            ch.push_back(node("elif_clause", {std::move(cond), block()}, l));
        }
        if (at_kw("else")) ch.push_back(else_clause());
        return node("if_statement", std::move(ch), line);
    }

    SyntaxNode else_clause() {
        const int l = cur().line;
        expect_kw("else");
        return node("else_clause", {block()}, l);
    }

    SyntaxNode while_statement() {
        const int line = cur().line;
        expect_kw("while");
        std::vector<SyntaxNode> ch;
        ch.push_back(named_test());
        ch.push_back(block());
        if (at_kw("else")) ch.push_back(else_clause());
        return node("while_statement", std::move(ch), line);
    }

    SyntaxNode for_statement() {
        const int line = cur().line;
        expect_kw("for");
        std::vector<SyntaxNode> ch;
        SyntaxNode target = target_list();
        check_target(target, false);
        ch.push_back(std::move(target));
        expect_kw("in");
        ch.push_back(testlist());
        ch.push_back(block());
        if (at_kw("else")) ch.push_back(else_clause());
        return node("for_statement", std::move(ch), line);
    }

    SyntaxNode try_statement() {
        const int line = cur().line;
        expect_kw("try");
        std::vector<SyntaxNode> ch;
        ch.push_back(block());
        bool handlers = false;
        while (at_kw("except")) {
            handlers = true;
            const int l = cur().line;
            ++p_;
            std::vector<SyntaxNode> ex;
            accept_op("*");
            if (!at_op(":")) {
                ex.push_back(test());
                if (accept_op(",")) {
                    std::vector<SyntaxNode> items;
                    items.push_back(std::move(ex.back()));
                    do {
                        items.push_back(test());
                    } while (accept_op(","));
                    ex.back() = node("expression_list", std::move(items), l);
                }
                if (accept_kw("as")) ex.push_back(node("as_pattern_target", {identifier()}, l));
            }
            ex.push_back(block());
            ch.push_back(node("except_clause", std::move(ex), l));
        }
        if (handlers && at_kw("else")) ch.push_back(else_clause());
        if (at_kw("finally")) {
            const int l = cur().line;
            ++p_;
            ch.push_back(node("finally_clause", {block()}, l));
        } else if (!handlers) {
            fail("expected 'except' or 'finally' block");
        }
        return node("try_statement", std::move(ch), line);
    }

    SyntaxNode with_statement() {
        const int line = cur().line;
        expect_kw("with");
        std::vector<SyntaxNode> items;
        do {
            const int l = cur().line;
            std::vector<SyntaxNode> item;
            item.push_back(test());
            if (accept_kw("as")) {
                SyntaxNode target = target_expr();
                check_target(target, false);
                item.push_back(node("as_pattern_target", {std::move(target)}, l));
            }
            items.push_back(node("with_item", std::move(item), l));
        } while (accept_op(","));
        std::vector<SyntaxNode> ch;
        ch.push_back(node("with_clause", std::move(items), line));
        ch.push_back(block());
        return node("with_statement", std::move(ch), line);
    }

    SyntaxNode decorated_definition() {
        const int line = cur().line;
        std::vector<SyntaxNode> ch;
        while (at_op("@")) {
            const int l = cur().line;
            ++p_;
            ch.push_back(node("decorator", {named_test()}, l));
            expect_newline();
        }
        if (accept_kw("async") && !at_kw("def")) fail("expected 'def'");
        if (at_kw("def")) {
            ch.push_back(function_definition());
        } else if (at_kw("class")) {
            ch.push_back(class_definition());
        } else {
            fail("expected function or class definition after decorator");
        }
        return node("decorated_definition", std::move(ch), line);
    }

    SyntaxNode function_definition() {
        const int line = cur().line;
        expect_kw("def");
        std::vector<SyntaxNode> ch;
        ch.push_back(identifier());
        expect_op("(");
        ch.push_back(parameters(")", true));
        expect_op(")");
        if (accept_op("->")) ch.push_back(node("type", {test()}, line));
        ch.push_back(block());
        return node("function_definition", std::move(ch), line);
    }

    SyntaxNode parameters(std::string_view closer, bool annotations) {
        const int line = cur().line;
        std::vector<SyntaxNode> ps;
        while (!at_op(closer)) {
            const int l = cur().line;
            if (accept_op("/")) {
                ps.push_back(leaf("positional_separator", "/", l));
            } else if (accept_op("**")) {
                ps.push_back(node("dictionary_splat_pattern", {annotated(identifier(), annotations)}, l));
            } else if (accept_op("*")) {
                if (at_op(",") || at_op(closer)) {
                    ps.push_back(leaf("keyword_separator", "*", l));
                } else {
                    ps.push_back(node("list_splat_pattern", {annotated(identifier(), annotations)}, l));
                }
            } else {
                SyntaxNode name = identifier();
                std::optional<SyntaxNode> type;
                if (annotations && accept_op(":")) type = node("type", {test()}, l);
                if (accept_op("=")) {
                    SyntaxNode value = test();
                    if (type) {
                        ps.push_back(node("typed_default_parameter", {std::move(name), std::move(*type), std::move(value)}, l));
                    } else {
                        ps.push_back(node("default_parameter", {std::move(name), std::move(value)}, l));
                    }
                } else if (type) {
                    ps.push_back(node("typed_parameter", {std::move(name), std::move(*type)}, l));
                } else {
                    ps.push_back(std::move(name));
                }
            }
            if (!accept_op(",")) break;
        }
        return node(closer == ")" ? "parameters" : "lambda_parameters", std::move(ps), line);
    }

    SyntaxNode annotated(SyntaxNode name, bool annotations) {
        if (annotations && accept_op(":")) {
            const int l = name.line;
            return node("typed_parameter", {std::move(name), node("type", {test()}, l)}, l);
        }
        return name;
    }

    SyntaxNode class_definition() {
        const int line = cur().line;
        expect_kw("class");
        std::vector<SyntaxNode> ch;
        ch.push_back(identifier());
        if (accept_op("(")) {
            ch.push_back(argument_list());
        }
        ch.push_back(block());
        return node("class_definition", std::move(ch), line);
    }

    // --- expressions
    SyntaxNode yield_expression() {
        const int line = cur().line;
        expect_kw("yield");
        std::vector<SyntaxNode> ch;
        if (accept_kw("from")) {
            ch.push_back(test());
        } else if (!at_statement_end() && !at_op(")") && !at_op("=")) {
            ch.push_back(testlist_star());
        }
        return node("yield", std::move(ch), line);
    }

    // test (',' test)* [','] with star expressions allowed.
    SyntaxNode testlist_star() { return sequence([this] { return star_or_named(); }, "expression_list"); }
    SyntaxNode testlist() { return sequence([this] { return star_or_test(); }, "expression_list"); }
    SyntaxNode target_list() { return sequence([this] { return target_expr(); }, "pattern_list"); }

    template <typename Item>
    SyntaxNode sequence(Item item, const char* kind) {
        const int line = cur().line;
        SyntaxNode first = item();
        if (!at_op(",")) return first;
        std::vector<SyntaxNode> items;
        items.push_back(std::move(first));
        while (accept_op(",")) {
            if (!starts_expression()) break;
            items.push_back(item());
        }
        return node(kind, std::move(items), line);
    }

    bool starts_expression() const {
        const Tok& tk = cur();
        switch (tk.type) {
            case T::Name:
                if (!is_keyword(tk)) return true;
                return tk.text == "not" || tk.text == "lambda" || tk.text == "await" || tk.text == "None" ||
                       tk.text == "True" || tk.text == "False" || tk.text == "yield";
            case T::Number:
            case T::String: return true;
            case T::Op:
                return tk.text == "(" || tk.text == "[" || tk.text == "{" || tk.text == "-" || tk.text == "+" ||
                       tk.text == "~" || tk.text == "*" || tk.text == "**" || tk.text == "...";
            default: return false;
        }
    }

    SyntaxNode target_expr() {
        if (at_op("*")) {
            const int l = cur().line;
            ++p_;
            return node("list_splat", {expr()}, l);
        }
        return expr();
    }

    SyntaxNode star_or_test() {
        if (at_op("*")) {
            const int l = cur().line;
            ++p_;
            return node("list_splat", {expr()}, l);
        }
        return test();
    }

    SyntaxNode star_or_named() {
        if (at_op("*")) {
            const int l = cur().line;
            ++p_;
            return node("list_splat", {expr()}, l);
        }
        return named_test();
    }

    SyntaxNode named_test() {
        const int line = cur().line;
        SyntaxNode t = test();
        if (at_op(":=")) {
            if (t.kind != "identifier") fail("cannot use assignment expressions with " + t.kind);
            ++p_;
            return node("named_expression", {std::move(t), test()}, line);
        }
        return t;
    }

    SyntaxNode test() {
        if (at_kw("lambda")) return lambda(false);
        const int line = cur().line;
        SyntaxNode body = or_test();
        if (at_kw("if")) {
            // Inside a comprehension `if` starts a filter clause, which only
            // follows a `for` clause; a conditional needs `else`.
            ++p_;
            SyntaxNode cond = or_test();
            expect_kw("else");
            SyntaxNode alt = test();
            return node("conditional_expression", {std::move(body), std::move(cond), std::move(alt)}, line);
        }
        return body;
    }

    SyntaxNode test_no_cond() {
        if (at_kw("lambda")) return lambda(true);
        return or_test();
    }

    SyntaxNode lambda(bool no_cond) {
        const int line = cur().line;
        expect_kw("lambda");
        std::vector<SyntaxNode> ch;
        SyntaxNode params = parameters(":", false);
        if (!params.children.empty()) ch.push_back(std::move(params));
        expect_op(":");
        ch.push_back(no_cond ? test_no_cond() : test());
        return node("lambda", std::move(ch), line);
    }

    SyntaxNode or_test() { return boolean("or", [this] { return and_test(); }); }
    SyntaxNode and_test() { return boolean("and", [this] { return not_test(); }); }

    template <typename Next>
    SyntaxNode boolean(std::string_view op, Next next) {
        const int line = cur().line;
        SyntaxNode left = next();
        while (accept_kw(op)) left = node("boolean_operator", {std::move(left), next()}, line);
        return left;
    }

    SyntaxNode not_test() {
        if (at_kw("not")) {
            const int line = cur().line;
            ++p_;
            return node("not_operator", {not_test()}, line);
        }
        return comparison();
    }

    bool at_comparison_op() const {
        if (cur().type == T::Op) {
            const auto& s = cur().text;
            return s == "<" || s == ">" || s == "==" || s == ">=" || s == "<=" || s == "!=";
        }
        if (at_kw("in") || at_kw("is")) return true;
        return at_kw("not") && peek().type == T::Name && peek().text == "in";
    }

    SyntaxNode comparison() {
        const int line = cur().line;
        SyntaxNode first = expr();
        if (!at_comparison_op()) return first;
        std::vector<SyntaxNode> operands;
        operands.push_back(std::move(first));
        while (at_comparison_op()) {
            if (accept_kw("not")) {
                expect_kw("in");
            } else if (accept_kw("is")) {
                accept_kw("not");
            } else {
                ++p_;
            }
            operands.push_back(expr());
        }
        return node("comparison_operator", std::move(operands), line);
    }

    template <typename Next>
    SyntaxNode binary(std::initializer_list<std::string_view> ops, Next next) {
        const int line = cur().line;
        SyntaxNode left = next();
        while (cur().type == T::Op && std::find(ops.begin(), ops.end(), cur().text) != ops.end()) {
            ++p_;
            left = node("binary_operator", {std::move(left), next()}, line);
        }
        return left;
    }

    SyntaxNode expr() { return binary({"|"}, [this] { return xor_expr(); }); }
    SyntaxNode xor_expr() { return binary({"^"}, [this] { return and_expr(); }); }
    SyntaxNode and_expr() { return binary({"&"}, [this] { return shift_expr(); }); }
    SyntaxNode shift_expr() { return binary({"<<", ">>"}, [this] { return arith(); }); }
    SyntaxNode arith() { return binary({"+", "-"}, [this] { return term(); }); }
    SyntaxNode term() { return binary({"*", "/", "//", "%", "@"}, [this] { return factor(); }); }

    SyntaxNode factor() {
        if (at_op("+") || at_op("-") || at_op("~")) {
            const int line = cur().line;
            ++p_;
            return node("unary_operator", {factor()}, line);
        }
        return power();
    }

    SyntaxNode power() {
        const int line = cur().line;
        SyntaxNode base = await_primary();
        if (accept_op("**")) return node("binary_operator", {std::move(base), factor()}, line);
        return base;
    }

    SyntaxNode await_primary() {
        if (at_kw("await")) {
            const int line = cur().line;
            ++p_;
            return node("await", {primary()}, line);
        }
        return primary();
    }

    SyntaxNode primary() {
        SyntaxNode value = atom();
        while (true) {
            const int line = cur().line;
            if (accept_op("(")) {
                value = node("call", {std::move(value), argument_list()}, line);
            } else if (accept_op("[")) {
                std::vector<SyntaxNode> ch;
                ch.push_back(std::move(value));
                do {
                    if (at_op("]")) break;
                    ch.push_back(subscript_item());
                } while (accept_op(","));
                expect_op("]");
                value = node("subscript", std::move(ch), line);
            } else if (accept_op(".")) {
                value = node("attribute", {std::move(value), identifier()}, line);
            } else {
                return value;
            }
        }
    }

    SyntaxNode subscript_item() {
        const int line = cur().line;
        std::vector<SyntaxNode> parts;
        if (!at_op(":")) {
            SyntaxNode first = star_or_test();
            if (!at_op(":")) return first;
            parts.push_back(std::move(first));
        }
        // slice: [lo] ':' [hi] [':' [step]]
        expect_op(":");
        if (!at_op(":") && !at_op("]") && !at_op(",")) parts.push_back(test());
        if (accept_op(":")) {
            if (!at_op("]") && !at_op(",")) parts.push_back(test());
        }
        return node("slice", std::move(parts), line);
    }

    // After '(' has been consumed; consumes ')'.
    SyntaxNode argument_list() {
        const int line = cur().line;
        std::vector<SyntaxNode> args;
        while (!at_op(")")) {
            const int l = cur().line;
            if (accept_op("**")) {
                args.push_back(node("dictionary_splat", {test()}, l));
            } else if (accept_op("*")) {
                args.push_back(node("list_splat", {test()}, l));
            } else if (at(T::Name) && !is_keyword(cur()) && peek().type == T::Op && peek().text == "=") {
                SyntaxNode name = identifier();
                ++p_;
                args.push_back(node("keyword_argument", {std::move(name), test()}, l));
            } else {
                SyntaxNode value = named_test();
                if (at_kw("for") || (at_kw("async") && peek().text == "for")) {
                    if (!args.empty()) fail("generator expression must be parenthesized");
                    std::vector<SyntaxNode> ch;
                    ch.push_back(std::move(value));
                    comprehension_clauses(ch);
                    SyntaxNode gen = node("generator_expression", std::move(ch), l);
                    expect_op(")");
                    return gen;
                }
                args.push_back(std::move(value));
            }
            if (!accept_op(",")) break;
        }
        expect_op(")");
        return node("argument_list", std::move(args), line);
    }

    void comprehension_clauses(std::vector<SyntaxNode>& out) {
        while (true) {
            const int l = cur().line;
            if (at_kw("async") && peek().text == "for") ++p_;
            if (accept_kw("for")) {
                SyntaxNode target = target_list();
                check_target(target, false);
                expect_kw("in");
                SyntaxNode iter = or_test();
                out.push_back(node("for_in_clause", {std::move(target), std::move(iter)}, l));
            } else if (accept_kw("if")) {
                out.push_back(node("if_clause", {test_no_cond()}, l));
            } else {
                return;
            }
        }
    }

    SyntaxNode atom() {
        const Tok tk = cur();
        const int line = tk.line;
        switch (tk.type) {
            case T::Name: {
                if (tk.text == "True") return ++p_, leaf("true", "True", line);
                if (tk.text == "False") return ++p_, leaf("false", "False", line);
                if (tk.text == "None") return ++p_, leaf("none", "None", line);
                if (tk.text == "yield") fail("'yield' outside parentheses");
                return identifier();
            }
            case T::Number: {
                ++p_;
                const bool is_float = tk.text.find_first_of(".eEjJ") != std::string::npos &&
                                      !(tk.text.size() > 1 && (tk.text[1] == 'x' || tk.text[1] == 'X'));
                return leaf(is_float ? "float" : "integer", tk.text, line);
            }
            case T::String: {
                std::vector<SyntaxNode> parts;
                while (at(T::String)) {
                    parts.push_back(leaf("string", cur().text, cur().line));
                    ++p_;
                }
                if (parts.size() == 1) return std::move(parts.front());
                return node("concatenated_string", std::move(parts), line);
            }
            case T::Op: {
                if (accept_op("...")) return leaf("ellipsis", "...", line);
                if (accept_op("(")) return paren_atom(line);
                if (accept_op("[")) return list_atom(line);
                if (accept_op("{")) return brace_atom(line);
                break;
            }
            default: break;
        }
        fail_at_token();
    }

    SyntaxNode paren_atom(int line) {
        if (accept_op(")")) return leaf("tuple", "", line);
        if (at_kw("yield")) {
            SyntaxNode y = yield_expression();
            expect_op(")");
            return node("parenthesized_expression", {std::move(y)}, line);
        }
        SyntaxNode first = star_or_named();
        if (at_kw("for") || (at_kw("async") && peek().text == "for")) {
            std::vector<SyntaxNode> ch;
            ch.push_back(std::move(first));
            comprehension_clauses(ch);
            expect_op(")");
            return node("generator_expression", std::move(ch), line);
        }
        if (accept_op(")")) return node("parenthesized_expression", {std::move(first)}, line);
        std::vector<SyntaxNode> items;
        items.push_back(std::move(first));
        while (accept_op(",")) {
            if (at_op(")")) break;
            items.push_back(star_or_named());
        }
        expect_op(")");
        return node("tuple", std::move(items), line);
    }

    SyntaxNode list_atom(int line) {
        if (accept_op("]")) return leaf("list", "", line);
        SyntaxNode first = star_or_named();
        if (at_kw("for") || (at_kw("async") && peek().text == "for")) {
            std::vector<SyntaxNode> ch;
            ch.push_back(std::move(first));
            comprehension_clauses(ch);
            expect_op("]");
            return node("list_comprehension", std::move(ch), line);
        }
        std::vector<SyntaxNode> items;
        items.push_back(std::move(first));
        while (accept_op(",")) {
            if (at_op("]")) break;
            items.push_back(star_or_named());
        }
        expect_op("]");
        return node("list", std::move(items), line);
    }

    SyntaxNode dict_item() {
        const int l = cur().line;
        if (accept_op("**")) return node("dictionary_splat", {expr()}, l);
        SyntaxNode key = test();
        expect_op(":");
        return node("pair", {std::move(key), test()}, l);
    }

    SyntaxNode brace_atom(int line) {
        if (accept_op("}")) return leaf("dictionary", "", line);
        const bool is_dict = at_op("**") || brace_starts_dict();
        if (is_dict) {
            SyntaxNode first = dict_item();
            if (first.kind == "pair" && (at_kw("for") || (at_kw("async") && peek().text == "for"))) {
                std::vector<SyntaxNode> ch;
                ch.push_back(std::move(first));
                comprehension_clauses(ch);
                expect_op("}");
                return node("dictionary_comprehension", std::move(ch), line);
            }
            std::vector<SyntaxNode> items;
            items.push_back(std::move(first));
            while (accept_op(",")) {
                if (at_op("}")) break;
                items.push_back(dict_item());
            }
            expect_op("}");
            return node("dictionary", std::move(items), line);
        }
        SyntaxNode first = star_or_named();
        if (at_kw("for") || (at_kw("async") && peek().text == "for")) {
            std::vector<SyntaxNode> ch;
            ch.push_back(std::move(first));
            comprehension_clauses(ch);
            expect_op("}");
            return node("set_comprehension", std::move(ch), line);
        }
        std::vector<SyntaxNode> items;
        items.push_back(std::move(first));
        while (accept_op(",")) {
            if (at_op("}")) break;
            items.push_back(star_or_named());
        }
        expect_op("}");
        return node("set", std::move(items), line);
    }

    // Looks ahead for a top-level ':' before the first top-level ',' or '}'.
    bool brace_starts_dict() const {
        int depth = 0;
        for (std::size_t k = p_; k < t_.size(); ++k) {
            const Tok& tk = t_[k];
            if (tk.type == T::End) return false;
            if (tk.type != T::Op) {
                if (depth == 0 && tk.type == T::Name && tk.text == "lambda") {
                    // A lambda's ':' is not a key separator; skip to its body.
                    int inner = 0;
                    for (++k; k < t_.size(); ++k) {
                        if (t_[k].type == T::Op && (t_[k].text == "(" || t_[k].text == "[" || t_[k].text == "{")) ++inner;
                        if (t_[k].type == T::Op && (t_[k].text == ")" || t_[k].text == "]" || t_[k].text == "}")) --inner;
                        if (inner == 0 && t_[k].type == T::Op && t_[k].text == ":") break;
                    }
                }
                continue;
            }
            const auto& s = tk.text;
            if (s == "(" || s == "[" || s == "{") ++depth;
            else if (s == ")" || s == "]" || s == "}") {
                if (depth == 0) return false;
                --depth;
            } else if (depth == 0 && s == ":") {
                return true;
            } else if (depth == 0 && s == ",") {
                return false;
            }
        }
        return false;
    }

    std::vector<Tok> t_;
    std::size_t p_ = 0;
};

// --- dataflow ---------------------------------------------------------------------------

class DataflowBuilder {
public:
    DataflowGraph build(const SyntaxNode& root) {
        visit(root, Ctx::Load);
        std::sort(graph_.edges.begin(), graph_.edges.end());
        return std::move(graph_);
    }

private:
    enum class Ctx { Load, Store };

    void define(const std::string& name) {
        auto [it, inserted] = var_.try_emplace(name, static_cast<int>(var_.size()));
        (void)it;
        (void)inserted;
        last_def_[name] = occ_[name]++;
    }

    void use(const std::string& name) {
        auto it = var_.find(name);
        if (it == var_.end()) return;
        const int pos = occ_[name]++;
        graph_.edges.push_back({it->second, last_def_[name], pos});
    }

    void visit_children(const SyntaxNode& n, Ctx ctx, std::size_t from = 0) {
        for (std::size_t i = from; i < n.children.size(); ++i) visit(n.children[i], ctx);
    }

    void visit_parameter_defaults(const SyntaxNode& params) {
        for (const auto& p : params.children) {
            if (p.kind == "default_parameter") visit(p.children[1], Ctx::Load);
            if (p.kind == "typed_default_parameter") {
                visit(p.children[1], Ctx::Load);
                visit(p.children[2], Ctx::Load);
            }
            if (p.kind == "typed_parameter") visit(p.children[1], Ctx::Load);
        }
    }

    void bind_parameters(const SyntaxNode& params) {
        for (const auto& p : params.children) {
            if (p.kind == "identifier") {
                define(p.text);
            } else if (p.kind == "default_parameter" || p.kind == "typed_parameter" ||
                       p.kind == "typed_default_parameter") {
                define(p.children[0].text);
            } else if (p.kind == "list_splat_pattern" || p.kind == "dictionary_splat_pattern") {
                const SyntaxNode& inner = p.children[0];
                define(inner.kind == "identifier" ? inner.text : inner.children[0].text);
            }
        }
    }

    void visit_comprehension(const SyntaxNode& n) {
        for (std::size_t i = 1; i < n.children.size(); ++i) {
            const SyntaxNode& c = n.children[i];
            if (c.kind == "for_in_clause") {
                visit(c.children[1], Ctx::Load);
                visit(c.children[0], Ctx::Store);
            } else {
                visit(c, Ctx::Load);
            }
        }
        visit(n.children[0], Ctx::Load);
    }

    void visit(const SyntaxNode& n, Ctx ctx) {
        const std::string& k = n.kind;
        if (k == "identifier") {
            ctx == Ctx::Store ? define(n.text) : use(n.text);
        } else if (k == "attribute") {
            visit(n.children[0], Ctx::Load);
        } else if (k == "subscript") {
            visit_children(n, Ctx::Load);
        } else if (k == "assignment") {
            const SyntaxNode& target = n.children[0];
            if (n.children.size() == 3) {
                visit(n.children[1], Ctx::Load);
                visit(n.children[2], Ctx::Load);
            } else if (n.children.size() == 2 && n.children[1].kind != "type") {
                visit(n.children[1], Ctx::Load);
            } else {
                visit(n.children[1], Ctx::Load);
            }
            visit(target, Ctx::Store);
        } else if (k == "augmented_assignment") {
            visit(n.children[1], Ctx::Load);
            visit(n.children[0], Ctx::Load);
            visit(n.children[0], Ctx::Store);
        } else if (k == "for_statement") {
            visit(n.children[1], Ctx::Load);
            visit(n.children[0], Ctx::Store);
            visit_children(n, Ctx::Load, 2);
        } else if (k == "list_comprehension" || k == "set_comprehension" || k == "generator_expression" ||
                   k == "dictionary_comprehension") {
            visit_comprehension(n);
        } else if (k == "function_definition") {
            const SyntaxNode& params = n.children[1];
            visit_parameter_defaults(params);
            define(n.children[0].text);
            bind_parameters(params);
            visit_children(n, Ctx::Load, 2);
        } else if (k == "lambda") {
            if (n.children.size() == 2) {
                visit_parameter_defaults(n.children[0]);
                bind_parameters(n.children[0]);
            }
            visit(n.children.back(), Ctx::Load);
        } else if (k == "class_definition") {
            if (n.children.size() == 3) visit(n.children[1], Ctx::Load);
            define(n.children[0].text);
            visit(n.children.back(), Ctx::Load);
        } else if (k == "import_statement") {
            for (const auto& c : n.children) bind_import(c, false);
        } else if (k == "import_from_statement") {
            for (std::size_t i = 1; i < n.children.size(); ++i) bind_import(n.children[i], true);
        } else if (k == "keyword_argument") {
            visit(n.children[1], Ctx::Load);
        } else if (k == "with_item") {
            visit(n.children[0], Ctx::Load);
            if (n.children.size() > 1) visit(n.children[1].children[0], Ctx::Store);
        } else if (k == "except_clause") {
            for (const auto& c : n.children) {
                if (c.kind == "as_pattern_target") {
                    visit(c.children[0], Ctx::Store);
                } else {
                    visit(c, Ctx::Load);
                }
            }
        } else if (k == "named_expression") {
            visit(n.children[1], Ctx::Load);
            visit(n.children[0], Ctx::Store);
        } else if (k == "global_statement" || k == "nonlocal_statement") {
            return;
        } else {
            // tuples, lists, parenthesized targets and splats propagate the context
            visit_children(n, ctx);
        }
    }

    void bind_import(const SyntaxNode& c, bool from_import) {
        if (c.kind == "aliased_import") {
            define(c.children[1].text);
        } else if (c.kind == "dotted_name") {
            // `import a.b` binds `a`; `from m import a` binds `a`.
            define(from_import ? c.children.back().text : c.children.front().text);
        }
    }

    std::map<std::string, int> var_;
    std::map<std::string, int> occ_;
    std::map<std::string, int> last_def_;
    DataflowGraph graph_;
};

std::string dotted_text(const SyntaxNode& n) {
    std::string out;
    for (const auto& part : n.children) {
        if (!out.empty()) out += ".";
        out += part.text;
    }
    return out;
}

void collect_imports(const SyntaxNode& n, std::vector<std::string>& out) {
    if (n.kind == "import_statement") {
        for (const auto& c : n.children) {
            out.push_back(dotted_text(c.kind == "aliased_import" ? c.children[0] : c));
        }
        return;
    }
    if (n.kind == "import_from_statement") {
        const SyntaxNode& mod = n.children.front();
        if (mod.kind == "dotted_name") {
            out.push_back(dotted_text(mod));
        } else {
            std::string rel = mod.children.front().text;
            if (mod.children.size() > 1) rel += dotted_text(mod.children[1]);
            out.push_back(rel);
        }
        return;
    }
    for (const auto& c : n.children) collect_imports(c, out);
}

}  // namespace

SyntaxTree parse_python(std::string_view code) {
    Parser parser(Lexer(code).run());
    return parser.parse_module();
}

PythonGrammar::PythonGrammar(const std::filesystem::path& keyword_file) {
    for (const auto& line : text::split_lines(read_file(keyword_file))) {
        std::string w = text::trim(line.substr(0, line.find('#')));
        if (!w.empty()) keywords_.insert(w);
    }
}

PythonGrammar::PythonGrammar() : PythonGrammar(data_dir() / "grammars" / "python_keywords.txt") {}

std::vector<CodeToken> PythonGrammar::tokenize(std::string_view code) const {
    std::vector<CodeToken> out;
    for (auto& tk : Lexer(code).run()) {
        switch (tk.type) {
            case T::Name:
                out.push_back({python_keywords().count(tk.text) ? "keyword" : "name", std::move(tk.text), tk.line});
                break;
            case T::Number: out.push_back({"number", std::move(tk.text), tk.line}); break;
            case T::String: out.push_back({"string", std::move(tk.text), tk.line}); break;
            case T::Op: out.push_back({"op", std::move(tk.text), tk.line}); break;
            default: break;
        }
    }
    return out;
}

ParseOutcome PythonGrammar::parse(std::string_view code) const {
    ParseOutcome outcome;
    try {
        outcome.tree = parse_python(code);
    } catch (const SyntaxError& e) {
        outcome.error = e.diagnostic();
    }
    return outcome;
}

DataflowGraph PythonGrammar::dataflow(const SyntaxTree& tree) const { return DataflowBuilder{}.build(tree); }

std::vector<std::string> PythonGrammar::imports(const SyntaxTree& tree) const {
    std::vector<std::string> out;
    collect_imports(tree, out);
    return out;
}

}  // namespace twinforge::syntax
