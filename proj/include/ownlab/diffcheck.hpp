//! # Differential checking
//!
//! Random well-typed programs, an independent brute-force re-derivation of
//! the access-error judgment, and the properties relating the two checkers
//! to each other and to the interpreter:
//!
//! - theorem: access errors imply permission errors;
//! - soundness: a program both checkers accept never reaches UB;
//! - oracle equivalence: the fact-based Polonius pipeline agrees with the
//!   brute-force evaluator.

#pragma once

#include "ownlab/interp.hpp"
#include "ownlab/perms.hpp"
#include "ownlab/polonius.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ownlab::diffcheck {

struct Weights {
    double assign_const = 3;
    double use = 3;
    double loan = 3;
    double tuple = 1;
    double box = 2;
    double branch = 1.5;
    double call = 1;
    double drop = 1.5;
};

struct FuzzConfig {
    std::uint64_t seed = 0;
    std::size_t max_functions = 2; // including main
    std::size_t max_instructions = 10;
    std::size_t max_locals = 5;
    std::size_t type_depth = 2;
    Weights weights;
    bool abstract_lifetimes = true;
    bool calls = true;
    /// Chance that an If gets a backward target (loops).
    double backward_branch = 0.03;

    /// Empty when valid, otherwise what is wrong.
    auto validate() const -> std::string;
};

auto generate_program(const FuzzConfig& cfg) -> lang::Program;

/// Brute-force re-derivation of access errors by graph walks; shares no
/// analysis code with the facts and polonius modules. Returns nullopt when
/// some function has more than `max_instructions` instructions.
auto oracle_access_errors(const lang::TypedProgram& p, std::size_t max_instructions = 12)
    -> std::optional<std::vector<polonius::AccessErrorDiag>>;

enum class Property { Theorem, Soundness, OracleEquivalence };

auto to_string(Property p) -> std::string_view;

struct Verdicts {
    std::vector<polonius::AccessErrorDiag> access;
    std::vector<polonius::SubsetErrorDiag> subset;
    std::vector<perms::PermissionError> permission;

    auto polonius_rejects() const -> bool { return !access.empty() || !subset.empty(); }
    auto perms_rejects() const -> bool { return !permission.empty(); }
};

auto analyze(const lang::TypedProgram& p, const perms::Options& opts = {}) -> Verdicts;

struct CounterexampleReport {
    Property property = Property::Theorem;
    lang::Program program;
    Verdicts verdicts;
    std::optional<interp::Outcome> outcome;
    std::string note;

    /// The program as `.own` text, with the verdicts as leading comments.
    auto to_own() const -> std::string;
};

struct Check {
    enum class Kind { Holds, Violation, Inconclusive, NotApplicable };
    Kind kind = Kind::Holds;
    std::optional<CounterexampleReport> report;
};

auto check_theorem(const lang::TypedProgram& p, const perms::Options& opts = {}) -> Check;
/// NotApplicable for programs mentioning abstract lifetimes.
auto check_soundness(const lang::TypedProgram& p, interp::Limits limits = {}, const perms::Options& opts = {})
    -> Check;
/// NotApplicable when the program exceeds the oracle's size bound.
auto check_oracle(const lang::TypedProgram& p) -> Check;

/// True when the program (type-checks and) violates the property.
using Violates = std::function<bool(const lang::Program&)>;

auto violates(Property prop, const perms::Options& opts = {}, interp::Limits limits = {}) -> Violates;

/// Greedy minimization. Throws std::invalid_argument if `p` does not violate.
auto shrink(const lang::Program& p, const Violates& violated) -> lang::Program;

struct CampaignReport {
    std::size_t generated = 0;
    std::size_t accepted_by_both = 0;
    std::size_t rejected_by_both = 0;
    std::size_t rejected_by_perms_only = 0;
    std::size_t rejected_by_polonius_only = 0;
    std::size_t inconclusive = 0; // soundness runs that hit the step limit
    std::size_t soundness_checked = 0;
    std::size_t oracle_checked = 0;
    std::vector<CounterexampleReport> violations;
    /// Rejected by both checkers yet terminating without UB.
    std::size_t incomplete = 0;
    std::vector<lang::Program> incompleteness_catalog; // the first few
    std::size_t catalog_limit = 10;

    auto inconclusive_rate() const -> double;
    auto summary() const -> std::string;
    auto records() const -> std::string;
};

/// Runs `count` programs from seeds cfg.seed, cfg.seed + 1, ...
auto campaign(const FuzzConfig& cfg, const std::vector<Property>& properties, std::size_t count,
              interp::Limits limits = {}) -> CampaignReport;

} // namespace ownlab::diffcheck
