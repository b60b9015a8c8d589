//! # Polonius model
//!
//! Access errors (a live loan invalidated, or a moved path read) and subset
//! errors (a lifetime flow the signature does not declare) over a FactBase.

#pragma once

#include "ownlab/facts.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ownlab::polonius {

using facts::FactBase;
using facts::LoanId;
using lang::InstructionId;
using lang::Path;

enum class Rule { BorrowConflict, MoveConflict };
enum class SubRule { ReadInvalid, WriteInvalid, MoveInvalid };

auto to_string(Rule r) -> std::string_view;
auto to_string(SubRule r) -> std::string_view;

struct Invalidation {
    LoanId loan;
    InstructionId at;
    SubRule rule = SubRule::ReadInvalid;
    Path path; // the conflicting path accessed at `at`

    auto operator<=>(const Invalidation&) const = default;
};

struct AccessErrorDiag {
    Rule rule = Rule::BorrowConflict;
    InstructionId at;
    std::optional<LoanId> loan;    // BorrowConflict
    Path path;                     // accessed path (BorrowConflict) or moved path that is read
    std::optional<SubRule> sub;    // BorrowConflict

    auto str() const -> std::string;
    auto operator<=>(const AccessErrorDiag&) const = default;
};

struct SubsetErrorDiag {
    std::string longer;
    std::string shorter;
    InstructionId at;
    std::optional<Path> path;

    auto str() const -> std::string;
    auto operator<=>(const SubsetErrorDiag&) const = default;
};

auto invalidations(const FactBase& fb) -> std::set<Invalidation>;

/// Ordered by instruction, then rule, then loan, then path. At most one
/// BorrowConflict per (loan, instruction): Read beats Write beats Move.
auto access_errors(const FactBase& fb) -> std::vector<AccessErrorDiag>;

/// Reflexive-transitive closure of declared outlives pairs over `lifetimes`.
auto outlives_closure(const std::vector<lang::Outlives>& declared, const std::vector<std::string>& lifetimes)
    -> std::set<std::pair<std::string, std::string>>;

/// Flows of `sig`'s function not covered by its declared outlives.
auto subset_errors(const FactBase& fb, const lang::FunctionDef& sig) -> std::vector<SubsetErrorDiag>;
/// All functions of the program, in function-name order.
auto subset_errors(const FactBase& fb, const lang::Program& p) -> std::vector<SubsetErrorDiag>;

/// Line-delimited JSON records, one per diagnostic.
auto records(const std::vector<AccessErrorDiag>& access, const std::vector<SubsetErrorDiag>& subset) -> std::string;

} // namespace ownlab::polonius
