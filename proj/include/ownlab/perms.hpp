//! # Permissions model
//!
//! Per-instruction permission states (R, W, O on every tracked path, F on
//! paths that flow between abstract lifetimes), the permission errors they
//! imply, the step diffs between states and expectation marks on operands.

#pragma once

#include "ownlab/facts.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ownlab::perms {

using facts::FactBase;
using facts::LoanId;
using lang::InstructionId;
using lang::Path;

enum class Permission { R, W, O, F };

auto letter(Permission p) -> char;
auto perms_str(const std::set<Permission>& ps) -> std::string;

inline const std::set<Permission> kRWO{Permission::R, Permission::W, Permission::O};

struct Cause {
    enum class Kind { Uninitialized, Borrowed, Moved, NotDeclaredMut, BehindRef, MissingOutlives };
    Kind kind = Kind::Uninitialized;
    std::optional<LoanId> loan; // Borrowed
    std::string longer;         // MissingOutlives
    std::string shorter;

    auto str() const -> std::string;
    auto operator<=>(const Cause&) const = default;
};

auto to_string(Cause::Kind k) -> std::string_view;

struct Need {
    Path path;
    Permission perm = Permission::R;
    InstructionId at;
    auto operator<=>(const Need&) const = default;
};

auto needs_at(const FactBase& fb) -> std::set<Need>;

struct PermissionState {
    InstructionId at;
    std::map<Path, std::set<Permission>> has;               // R/W/O only
    std::map<Path, std::map<Permission, Cause>> missing;     // R/W/O only
    /// Tracked paths whose variable is live on entry; what the tables show.
    std::set<Path> displayed;
    /// F on paths that appear in flows: present, or missing with its cause.
    std::map<Path, std::optional<Cause>> flow;

    auto holds(const Path& p, Permission c) const -> bool;
    /// has, restricted to displayed paths with at least one permission.
    auto shown() const -> std::map<Path, std::set<Permission>>;
};

/// States of each instruction of a function, indexed by instruction.
using FunctionStates = std::vector<PermissionState>;
using PermissionStates = std::map<std::string, FunctionStates>;

/// The missing-at rules, individually switchable for mutation testing.
enum class MissingRule { ReadWhileUnique, WriteOwnWhileLoaned, Moved, BehindRef, NotDeclaredMut, Uninitialized, Flow };

struct Options {
    std::set<MissingRule> disabled;
};

auto missing_at(const lang::TypedProgram& tp, const FactBase& fb, const Options& opts = {}) -> PermissionStates;

struct PermissionError {
    Path path;
    Permission perm = Permission::R;
    InstructionId at;
    Cause cause;

    auto str() const -> std::string;
    auto operator<=>(const PermissionError&) const = default;
};

/// Ordered by instruction, then path, then permission.
auto permission_errors(const FactBase& fb, const PermissionStates& states) -> std::vector<PermissionError>;

// ============================================================================
// Steps
// ============================================================================

enum class Icon { Birth, BorrowStart, Death, Regain, MovedOut };

auto to_string(Icon i) -> std::string_view;

struct PathDelta {
    Path path;
    std::set<Permission> gained;
    std::set<Permission> lost;
    Icon icon = Icon::Birth;
    auto operator<=>(const PathDelta&) const = default;
};

struct PermStep {
    InstructionId from;
    InstructionId to;
    /// A branch edge out of an If rather than the effect of one instruction.
    bool edge = false;
    std::vector<PathDelta> deltas; // sorted by path

    auto label() const -> std::string;
    auto operator<=>(const PermStep&) const = default;
};

using Boundary = std::pair<std::size_t, std::size_t>;

/// Default boundaries: every instruction to each successor (Return has none).
/// Custom boundaries must have from < to, be sorted and not overlap; an
/// invalid list throws std::invalid_argument.
auto steps(const lang::FunctionDef& f, const FunctionStates& states,
           const std::optional<std::vector<Boundary>>& boundaries = std::nullopt) -> std::vector<PermStep>;

/// Applies a step to a shown-state map.
auto apply(std::map<Path, std::set<Permission>> shown, const PermStep& step) -> std::map<Path, std::set<Permission>>;

// ============================================================================
// Expectations
// ============================================================================

enum class MarkStyle { Letter, Circle };

struct ExpectationMark {
    InstructionId at;
    Path path;
    std::set<Permission> expected;
    std::map<Permission, bool> satisfied;
    MarkStyle style = MarkStyle::Letter;

    auto all_satisfied() const -> bool;
    auto operator<=>(const ExpectationMark&) const = default;
};

using StyleOverrides = std::map<std::pair<InstructionId, Path>, MarkStyle>;

auto expectations(const FactBase& fb, const PermissionStates& states, const StyleOverrides& overrides = {},
                  MarkStyle default_style = MarkStyle::Letter) -> std::vector<ExpectationMark>;

// ============================================================================
// Records
// ============================================================================

auto state_records(const PermissionStates& states) -> std::string;
auto step_records(const std::string& function, const std::vector<PermStep>& steps) -> std::string;
auto mark_records(const std::vector<ExpectationMark>& marks) -> std::string;
auto error_records(const std::vector<PermissionError>& errors) -> std::string;

} // namespace ownlab::perms
