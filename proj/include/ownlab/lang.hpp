//! # Object language
//!
//! The MIR-subset language the rest of the lab operates on: paths, rvalues,
//! indexed instructions, lifetime-parameterized functions and programs, plus
//! the parser, pretty printer, well-formedness checks and the type checker.
//!
//! Concrete syntax (`.own` files):
//!
//! ```text
//! fn id<'a, 'b, 'a :> 'b>(x: &'a unique u32) -> &'b unique u32 {
//!   let y: &'a unique u32;
//!   0: y = x;
//!   1: return y;
//! }
//! ```

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ownlab::lang {

// ============================================================================
// Syntax
// ============================================================================

enum class Qualifier { Shared, Unique };

auto to_string(Qualifier q) -> std::string_view;

/// One step of a path: a tuple field projection or a dereference.
struct PathOp {
    enum class Kind { Field, Deref };
    Kind kind = Kind::Field;
    std::uint32_t index = 0; // field index, unused for Deref

    static auto field(std::uint32_t n) -> PathOp { return {Kind::Field, n}; }
    static auto deref() -> PathOp { return {Kind::Deref, 0}; }
    auto is_deref() const -> bool { return kind == Kind::Deref; }

    auto operator<=>(const PathOp&) const = default;
};

/// A place: a variable followed by projections and dereferences, applied in order.
/// `(*x).0` is {x, [Deref, Field 0]}; `*x.0` is {x, [Field 0, Deref]}.
struct Path {
    std::string base;
    std::vector<PathOp> ops;

    Path() = default;
    explicit Path(std::string b, std::vector<PathOp> o = {}) : base(std::move(b)), ops(std::move(o)) {}

    auto is_var() const -> bool { return ops.empty(); }
    auto has_deref() const -> bool;
    auto field(std::uint32_t n) const -> Path;
    auto deref() const -> Path;
    /// The path keeping only its first `len` ops.
    auto truncated(std::size_t len) const -> Path;
    /// All strict prefixes, shortest first (the bare variable first).
    auto prefixes() const -> std::vector<Path>;
    /// True if `this` is a (non-strict) prefix of `other`.
    auto is_prefix_of(const Path& other) const -> bool;

    auto str() const -> std::string;

    auto operator<=>(const Path&) const = default;
    auto operator==(const Path&) const -> bool = default;
};

/// Either prefix of the other. Used for move tracking, where only syntax matters.
auto prefix_related(const Path& a, const Path& b) -> bool;

struct Constant {
    enum class Kind { Number, True, False };
    Kind kind = Kind::Number;
    std::uint32_t value = 0;

    static auto number(std::uint32_t n) -> Constant { return {Kind::Number, n}; }
    static auto boolean(bool b) -> Constant { return {b ? Kind::True : Kind::False, 0}; }
    auto is_bool() const -> bool { return kind != Kind::Number; }
    auto str() const -> std::string;

    auto operator<=>(const Constant&) const = default;
};

using Operand = std::variant<Path, Constant>;

auto operand_str(const Operand& op) -> std::string;

struct LoanExpr {
    Qualifier qualifier = Qualifier::Shared;
    Path target;
    auto operator<=>(const LoanExpr&) const = default;
};

struct TupleExpr {
    std::vector<Operand> elems;
    auto operator<=>(const TupleExpr&) const = default;
};

struct BoxExpr {
    Operand operand;
    auto operator<=>(const BoxExpr&) const = default;
};

using Rvalue = std::variant<Constant, Path, LoanExpr, TupleExpr, BoxExpr>;

auto rvalue_str(const Rvalue& rv) -> std::string;

struct Assign {
    Path dest;
    Rvalue rv;
    auto operator<=>(const Assign&) const = default;
};

struct If {
    Path cond;
    std::size_t then_target = 0;
    std::size_t else_target = 0;
    auto operator<=>(const If&) const = default;
};

struct Call {
    Path dest;
    std::string callee;
    std::vector<Path> args;
    auto operator<=>(const Call&) const = default;
};

struct Return {
    Path operand;
    auto operator<=>(const Return&) const = default;
};

struct Drop {
    Path operand;
    auto operator<=>(const Drop&) const = default;
};

using Instruction = std::variant<Assign, If, Call, Return, Drop>;

auto instruction_str(const Instruction& ins) -> std::string;

/// Control-flow successors of instruction `index` (fallthrough, both branch
/// targets, or none for Return). May contain out-of-range indices for
/// malformed bodies.
auto successors(const std::vector<Instruction>& body, std::size_t index) -> std::vector<std::size_t>;

/// Every path occurring textually in the instruction, in left-to-right order.
auto paths_of(const Instruction& ins) -> std::vector<Path>;

// ============================================================================
// Types
// ============================================================================

struct Lifetime {
    enum class Kind { Concrete, Abstract };
    Kind kind = Kind::Concrete;
    std::string name; // without the leading quote; empty means elided

    static auto concrete(std::string n) -> Lifetime { return {Kind::Concrete, std::move(n)}; }
    static auto abstract(std::string n) -> Lifetime { return {Kind::Abstract, std::move(n)}; }
    auto is_abstract() const -> bool { return kind == Kind::Abstract; }
    auto elided() const -> bool { return name.empty(); }

    auto operator<=>(const Lifetime&) const = default;
};

struct LangType {
    enum class Kind { U32, Bool, Tuple, Ref, Box };
    Kind kind = Kind::U32;
    std::vector<LangType> elems; // tuple components, or the single pointee for Ref/Box
    Lifetime lifetime;           // Ref only
    Qualifier qualifier = Qualifier::Shared; // Ref only

    static auto u32() -> LangType { return {}; }
    static auto boolean() -> LangType { return {Kind::Bool, {}, {}, Qualifier::Shared}; }
    static auto tuple(std::vector<LangType> ts) -> LangType { return {Kind::Tuple, std::move(ts), {}, Qualifier::Shared}; }
    static auto box(LangType inner) -> LangType { return {Kind::Box, {std::move(inner)}, {}, Qualifier::Shared}; }
    static auto ref(Lifetime l, Qualifier q, LangType inner) -> LangType {
        return {Kind::Ref, {std::move(inner)}, std::move(l), q};
    }

    auto is_ref() const -> bool { return kind == Kind::Ref; }
    auto is_box() const -> bool { return kind == Kind::Box; }
    auto is_tuple() const -> bool { return kind == Kind::Tuple; }
    auto pointee() const -> const LangType& { return elems.front(); }

    /// Box and unique refs move; tuples move iff a component moves.
    auto is_movable() const -> bool;
    /// Any Ref anywhere inside the type.
    auto mentions_ref() const -> bool;
    /// Structural equality ignoring lifetimes.
    auto same_shape(const LangType& other) const -> bool;
    /// Every lifetime occurring in the type, outermost first.
    auto lifetimes() const -> std::vector<Lifetime>;

    auto str() const -> std::string;

    auto operator<=>(const LangType& other) const -> std::strong_ordering;
    auto operator==(const LangType& other) const -> bool;
};

// ============================================================================
// Functions and programs
// ============================================================================

struct VarDecl {
    std::string name;
    bool mut = false;
    LangType type;
    auto operator<=>(const VarDecl&) const = default;
};

struct Outlives {
    std::string longer;
    std::string shorter;
    auto operator<=>(const Outlives&) const = default;
};

struct FunctionDef {
    std::string name;
    std::vector<std::string> lifetime_params;
    std::vector<Outlives> outlives;
    std::vector<VarDecl> params;
    std::vector<VarDecl> locals;
    std::optional<LangType> ret;
    std::vector<Instruction> body;

    /// Parameter or local with the given name.
    auto find_var(std::string_view n) const -> const VarDecl*;
    auto is_param(std::string_view n) const -> bool;

    /// Local declarations compare as a set; everything else in order.
    auto operator==(const FunctionDef& other) const -> bool;
};

struct Program {
    std::map<std::string, FunctionDef> functions;

    auto find(std::string_view n) const -> const FunctionDef*;
    auto operator==(const Program&) const -> bool = default;
};

inline constexpr std::string_view kEntryFunction = "main";

/// An instruction in a specific function.
struct InstructionId {
    std::string function;
    std::size_t index = 0;

    auto str() const -> std::string { return function + ":" + std::to_string(index); }
    auto operator<=>(const InstructionId&) const = default;
};

// ============================================================================
// Diagnostics
// ============================================================================

struct Diagnostic {
    std::string code;    // e.g. "syntax", "unknown-identifier", "type-mismatch"
    std::string message;
    std::string function;                   // empty when not attributable
    std::optional<std::size_t> instruction; // instruction index in `function`
    std::size_t line = 0;                   // 1-based; 0 when unknown
    std::size_t column = 0;

    auto str() const -> std::string;
    auto operator<=>(const Diagnostic&) const = default;
};

// ============================================================================
// Operations
// ============================================================================

struct ParseResult {
    std::optional<Program> program;
    std::vector<Diagnostic> diagnostics;
    auto ok() const -> bool { return program.has_value(); }
};

auto parse_program(std::string_view text) -> ParseResult;

/// Parses a single type; used by tests and the generator.
auto parse_type(std::string_view text) -> std::optional<LangType>;
/// Parses a single path.
auto parse_path(std::string_view text) -> std::optional<Path>;

struct PrintOptions {
    /// One item per line, declarations sorted by name.
    bool canonical = true;
};

auto pretty_print(const Program& p, PrintOptions opts = {}) -> std::string;
auto pretty_print(const FunctionDef& f, PrintOptions opts = {}) -> std::string;

auto well_formed(const Program& p) -> std::vector<Diagnostic>;

/// A loan expression occurrence with the fresh lifetime assigned to it.
struct LoanSite {
    std::size_t instruction = 0;
    LoanExpr expr;
    Lifetime lifetime;
    auto operator<=>(const LoanSite&) const = default;
};

struct FunctionTypes {
    /// Declared variable types with every elided lifetime given a unique concrete name.
    std::map<std::string, LangType> var_types;
    /// Type of every path occurring in the body and of each of its prefixes.
    std::map<Path, LangType> path_types;
    /// Effective return type (declared, or inferred from the first return).
    LangType return_type;
    std::vector<LoanSite> loans;

    auto type_of(const Path& p) const -> const LangType*;
    auto loan_at(std::size_t instruction) const -> const LoanSite*;
};

struct TypedProgram {
    Program program;
    std::map<std::string, FunctionTypes> types;

    auto fn(std::string_view name) const -> const FunctionDef&;
    auto types_of(std::string_view name) const -> const FunctionTypes&;
};

struct TypeCheckResult {
    std::optional<TypedProgram> typed;
    std::vector<Diagnostic> diagnostics;
    auto ok() const -> bool { return typed.has_value(); }
};

auto type_check(const Program& p) -> TypeCheckResult;

/// Type of `p` given variable types; nullopt on an ill-typed projection.
auto resolve_path_type(const std::map<std::string, LangType>& vars, const Path& p) -> std::optional<LangType>;

/// Parse, check well-formedness and type-check in one go.
auto load_program(std::string_view text) -> TypeCheckResult;

} // namespace ownlab::lang
