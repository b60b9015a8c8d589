//! Recursive-descent parser for `.own` source text.
//!
//! Syntax errors abort the parse with a single positioned diagnostic; name
//! errors (duplicates, unknown identifiers) are collected per function.

#include "ownlab/lang.hpp"

#include <cctype>
#include <limits>
#include <stdexcept>

namespace ownlab::lang {
namespace {

enum class Tok { Ident, Number, Lifetime, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    std::size_t line = 1;
    std::size_t column = 1;
};

struct SyntaxError : std::runtime_error {
    std::size_t line;
    std::size_t column;
    SyntaxError(const std::string& msg, std::size_t l, std::size_t c) : std::runtime_error(msg), line(l), column(c) {}
};

auto tokenize(std::string_view src) -> std::vector<Token> {
    std::vector<Token> out;
    std::size_t i = 0;
    std::size_t line = 1;
    std::size_t col = 1;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
            ++i;
        }
    };
    auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };

    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') {
                advance(1);
            }
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && ident_char(src[j])) {
                ++j;
            }
            t.kind = Tok::Ident;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
                ++j;
            }
            t.kind = Tok::Number;
            t.text = std::string(src.substr(i, j - i));
            advance(j - i);
        } else if (c == '\'') {
            std::size_t j = i + 1;
            while (j < src.size() && ident_char(src[j])) {
                ++j;
            }
            if (j == i + 1) {
                throw SyntaxError("expected lifetime name after '", line, col);
            }
            t.kind = Tok::Lifetime;
            t.text = std::string(src.substr(i + 1, j - i - 1));
            advance(j - i);
        } else {
            static constexpr std::string_view two[] = {"->", ":>"};
            bool matched = false;
            for (auto p : two) {
                if (src.substr(i, 2) == p) {
                    t.kind = Tok::Punct;
                    t.text = std::string(p);
                    advance(2);
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                static constexpr std::string_view single = "{}()<>,;:.*&=";
                if (single.find(c) == std::string_view::npos) {
                    throw SyntaxError(std::string("unexpected character '") + c + "'", line, col);
                }
                t.kind = Tok::Punct;
                t.text = std::string(1, c);
                advance(1);
            }
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = Tok::End;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

auto is_keyword(std::string_view s) -> bool {
    static constexpr std::string_view kws[] = {"fn",   "let",  "mut",   "box",    "drop",   "return", "if",  "then",
                                               "else", "call", "shared", "unique", "true",   "false",  "u32", "bool"};
    for (auto k : kws) {
        if (k == s) {
            return true;
        }
    }
    return false;
}

struct PathUse {
    std::string base;
    std::size_t line;
    std::size_t column;
    std::size_t instruction;
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    auto parse_program(std::vector<Diagnostic>& diags) -> Program {
        Program prog;
        while (peek().kind != Tok::End) {
            auto fn_tok = peek();
            uses_.clear();
            FunctionDef f = parse_function();
            check_names(f, diags);
            if (prog.functions.count(f.name) > 0) {
                diags.push_back({"duplicate-function", "duplicate function " + f.name, f.name, std::nullopt,
                                 fn_tok.line, fn_tok.column});
                continue;
            }
            prog.functions.emplace(f.name, std::move(f));
        }
        return prog;
    }

    auto parse_type_only() -> LangType {
        auto t = parse_type();
        expect_end();
        return t;
    }

    auto parse_path_only() -> Path {
        auto p = parse_path();
        expect_end();
        return p;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::vector<std::string> lifetime_scope_;
    std::vector<PathUse> uses_;
    std::size_t current_index_ = 0;

    auto peek(std::size_t ahead = 0) const -> const Token& {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    auto next() -> Token {
        Token t = peek();
        if (pos_ < toks_.size() - 1) {
            ++pos_;
        }
        return t;
    }
    auto at_punct(std::string_view p) const -> bool { return peek().kind == Tok::Punct && peek().text == p; }
    auto at_keyword(std::string_view k) const -> bool { return peek().kind == Tok::Ident && peek().text == k; }

    [[noreturn]] void fail(const std::string& msg) const {
        const auto& t = peek();
        std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
        throw SyntaxError(msg + ", found " + found, t.line, t.column);
    }

    void expect_punct(std::string_view p) {
        if (!at_punct(p)) {
            fail("expected '" + std::string(p) + "'");
        }
        next();
    }
    void expect_keyword(std::string_view k) {
        if (!at_keyword(k)) {
            fail("expected '" + std::string(k) + "'");
        }
        next();
    }
    void expect_end() {
        if (peek().kind != Tok::End) {
            fail("expected end of input");
        }
    }

    auto expect_ident() -> Token {
        if (peek().kind != Tok::Ident || is_keyword(peek().text)) {
            fail("expected identifier");
        }
        return next();
    }

    auto expect_number() -> std::uint32_t {
        if (peek().kind != Tok::Number) {
            fail("expected number");
        }
        const auto& t = peek();
        unsigned long long v = 0;
        for (char c : t.text) {
            v = v * 10 + static_cast<unsigned>(c - '0');
            if (v > std::numeric_limits<std::uint32_t>::max()) {
                throw SyntaxError("number " + t.text + " does not fit in u32", t.line, t.column);
            }
        }
        next();
        return static_cast<std::uint32_t>(v);
    }

    auto lifetime_of(const std::string& name) const -> Lifetime {
        for (const auto& l : lifetime_scope_) {
            if (l == name) {
                return Lifetime::abstract(name);
            }
        }
        return Lifetime::concrete(name);
    }

    auto parse_function() -> FunctionDef {
        FunctionDef f;
        expect_keyword("fn");
        f.name = expect_ident().text;
        lifetime_scope_.clear();
        if (at_punct("<")) {
            next();
            std::vector<std::pair<Token, Token>> pending;
            while (!at_punct(">")) {
                if (peek().kind != Tok::Lifetime) {
                    fail("expected lifetime parameter");
                }
                Token a = next();
                if (at_punct(":>")) {
                    next();
                    if (peek().kind != Tok::Lifetime) {
                        fail("expected lifetime after ':>'");
                    }
                    Token b = next();
                    pending.emplace_back(a, b);
                    f.outlives.push_back({a.text, b.text});
                } else {
                    for (const auto& l : f.lifetime_params) {
                        if (l == a.text) {
                            throw SyntaxError("duplicate lifetime parameter '" + a.text, a.line, a.column);
                        }
                    }
                    f.lifetime_params.push_back(a.text);
                }
                if (!at_punct(",")) {
                    break;
                }
                next();
            }
            expect_punct(">");
            lifetime_scope_ = f.lifetime_params;
            for (const auto& [a, b] : pending) {
                for (const auto* t : {&a, &b}) {
                    bool declared = false;
                    for (const auto& l : f.lifetime_params) {
                        declared = declared || l == t->text;
                    }
                    if (!declared) {
                        throw SyntaxError("undeclared lifetime '" + t->text + " in outlives constraint", t->line,
                                          t->column);
                    }
                }
            }
        }
        expect_punct("(");
        while (!at_punct(")")) {
            VarDecl d;
            if (at_keyword("mut")) {
                next();
                d.mut = true;
            }
            d.name = expect_ident().text;
            expect_punct(":");
            d.type = parse_type();
            f.params.push_back(std::move(d));
            if (!at_punct(",")) {
                break;
            }
            next();
        }
        expect_punct(")");
        if (at_punct("->")) {
            next();
            f.ret = parse_type();
        }
        expect_punct("{");
        while (!at_punct("}")) {
            if (at_keyword("let")) {
                next();
                VarDecl d;
                if (at_keyword("mut")) {
                    next();
                    d.mut = true;
                }
                d.name = expect_ident().text;
                expect_punct(":");
                d.type = parse_type();
                expect_punct(";");
                f.locals.push_back(std::move(d));
            } else if (peek().kind == Tok::Number) {
                Token idx_tok = peek();
                auto idx = expect_number();
                if (idx != f.body.size()) {
                    throw SyntaxError("instruction index " + std::to_string(idx) + " out of sequence (expected " +
                                          std::to_string(f.body.size()) + ")",
                                      idx_tok.line, idx_tok.column);
                }
                expect_punct(":");
                current_index_ = f.body.size();
                f.body.push_back(parse_instruction());
                expect_punct(";");
            } else {
                fail("expected 'let' or an indexed instruction");
            }
        }
        expect_punct("}");
        if (f.body.empty()) {
            const auto& t = toks_[pos_ - 1];
            throw SyntaxError("function " + f.name + " has an empty body", t.line, t.column);
        }
        return f;
    }

    void check_names(const FunctionDef& f, std::vector<Diagnostic>& diags) const {
        std::set<std::string> seen;
        for (const auto* list : {&f.params, &f.locals}) {
            for (const auto& d : *list) {
                if (!seen.insert(d.name).second) {
                    diags.push_back({"duplicate-name", "duplicate local name " + d.name, f.name, std::nullopt, 0, 0});
                }
            }
        }
        for (const auto& u : uses_) {
            if (seen.count(u.base) == 0) {
                diags.push_back(
                    {"unknown-identifier", "unknown identifier " + u.base, f.name, u.instruction, u.line, u.column});
            }
        }
    }

    auto parse_type() -> LangType {
        if (at_keyword("u32")) {
            next();
            return LangType::u32();
        }
        if (at_keyword("bool")) {
            next();
            return LangType::boolean();
        }
        if (at_keyword("box")) {
            next();
            return LangType::box(parse_type());
        }
        if (at_punct("&")) {
            next();
            Lifetime l;
            if (peek().kind == Tok::Lifetime) {
                l = lifetime_of(next().text);
            }
            Qualifier q;
            if (at_keyword("shared")) {
                q = Qualifier::Shared;
            } else if (at_keyword("unique")) {
                q = Qualifier::Unique;
            } else {
                fail("expected 'shared' or 'unique'");
            }
            next();
            return LangType::ref(std::move(l), q, parse_type());
        }
        if (at_punct("(")) {
            next();
            std::vector<LangType> elems;
            while (!at_punct(")")) {
                elems.push_back(parse_type());
                if (!at_punct(",")) {
                    break;
                }
                next();
            }
            expect_punct(")");
            return LangType::tuple(std::move(elems));
        }
        fail("expected type");
    }

    auto parse_path() -> Path {
        if (at_punct("*")) {
            next();
            return parse_path().deref();
        }
        Path p;
        if (at_punct("(")) {
            next();
            p = parse_path();
            expect_punct(")");
        } else {
            auto id = expect_ident();
            p = Path{id.text};
            uses_.push_back({id.text, id.line, id.column, current_index_});
        }
        while (at_punct(".")) {
            next();
            p = p.field(expect_number());
        }
        return p;
    }

    auto at_constant() const -> bool {
        return peek().kind == Tok::Number || at_keyword("true") || at_keyword("false");
    }

    auto parse_constant() -> Constant {
        if (at_keyword("true")) {
            next();
            return Constant::boolean(true);
        }
        if (at_keyword("false")) {
            next();
            return Constant::boolean(false);
        }
        return Constant::number(expect_number());
    }

    auto parse_operand() -> Operand {
        if (at_constant()) {
            return parse_constant();
        }
        return parse_path();
    }

    auto parse_rvalue() -> Rvalue {
        if (at_constant()) {
            return parse_constant();
        }
        if (at_punct("&")) {
            next();
            LoanExpr l;
            if (at_keyword("shared")) {
                l.qualifier = Qualifier::Shared;
            } else if (at_keyword("unique")) {
                l.qualifier = Qualifier::Unique;
            } else {
                fail("expected 'shared' or 'unique'");
            }
            next();
            l.target = parse_path();
            return l;
        }
        if (at_keyword("box")) {
            next();
            return BoxExpr{parse_operand()};
        }
        if (at_punct("(")) {
            next();
            TupleExpr t;
            if (at_punct(")")) {
                next();
                return t;
            }
            Operand first = parse_operand();
            if (at_punct(")")) {
                next();
                // `(p).n` is a parenthesized path; `(p)` alone is just `p`.
                if (auto* p = std::get_if<Path>(&first)) {
                    Path path = *p;
                    while (at_punct(".")) {
                        next();
                        path = path.field(expect_number());
                    }
                    return path;
                }
                fail("expected ',' in single-element tuple");
            }
            t.elems.push_back(std::move(first));
            while (at_punct(",")) {
                next();
                if (at_punct(")")) {
                    break;
                }
                t.elems.push_back(parse_operand());
            }
            expect_punct(")");
            return t;
        }
        return parse_path();
    }

    auto parse_instruction() -> Instruction {
        if (at_keyword("if")) {
            next();
            If i;
            i.cond = parse_path();
            expect_keyword("then");
            i.then_target = expect_number();
            expect_keyword("else");
            i.else_target = expect_number();
            return i;
        }
        if (at_keyword("return")) {
            next();
            return Return{parse_path()};
        }
        if (at_keyword("drop")) {
            next();
            return Drop{parse_path()};
        }
        Path dest = parse_path();
        expect_punct("=");
        if (at_keyword("call")) {
            next();
            Call c;
            c.dest = std::move(dest);
            c.callee = expect_ident().text;
            expect_punct("(");
            while (!at_punct(")")) {
                c.args.push_back(parse_path());
                if (!at_punct(",")) {
                    break;
                }
                next();
            }
            expect_punct(")");
            return c;
        }
        return Assign{std::move(dest), parse_rvalue()};
    }
};

} // namespace

auto parse_program(std::string_view text) -> ParseResult {
    ParseResult result;
    try {
        Parser parser(tokenize(text));
        Program prog = parser.parse_program(result.diagnostics);
        if (result.diagnostics.empty()) {
            result.program = std::move(prog);
        }
    } catch (const SyntaxError& e) {
        result.diagnostics.push_back({"syntax", e.what(), "", std::nullopt, e.line, e.column});
    }
    return result;
}

auto parse_type(std::string_view text) -> std::optional<LangType> {
    try {
        Parser parser(tokenize(text));
        return parser.parse_type_only();
    } catch (const SyntaxError&) {
        return std::nullopt;
    }
}

auto parse_path(std::string_view text) -> std::optional<Path> {
    try {
        Parser parser(tokenize(text));
        return parser.parse_path_only();
    } catch (const SyntaxError&) {
        return std::nullopt;
    }
}

} // namespace ownlab::lang
