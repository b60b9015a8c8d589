//! # Shared facts
//!
//! The relations both checker models are defined over: which paths are read,
//! written and moved where, which loans are live, which paths were moved
//! before an instruction, which paths conflict, and which abstract lifetimes
//! flow into each other.
//!
//! Regions are handled flow-insensitively. Every instruction that copies a
//! reference-carrying value adds edges between the lifetimes of the source
//! and destination types; a loan is carried by every variable whose type
//! mentions a lifetime its region reaches, and is live wherever one of its
//! carriers is live.

#pragma once

#include "ownlab/lang.hpp"

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace ownlab::facts {

using lang::InstructionId;
using lang::Lifetime;
using lang::Path;

struct LoanId {
    InstructionId issued;
    Path target;
    lang::Qualifier qualifier = lang::Qualifier::Shared;
    Lifetime lifetime;

    auto str() const -> std::string;
    auto operator<=>(const LoanId&) const = default;
};

using PathFact = std::pair<Path, InstructionId>;
using LoanFact = std::pair<LoanId, InstructionId>;

/// `longer` must outlive `shorter` because `path` flows at `at`.
struct Flow {
    std::string longer;
    std::string shorter;
    Path path;
    InstructionId at;

    auto operator<=>(const Flow&) const = default;
};

/// Directed region graph of one function; an edge a -> b means data typed
/// with `a` may end up typed with `b`.
struct RegionGraph {
    std::map<Lifetime, std::set<Lifetime>> succ;

    void add(const Lifetime& from, const Lifetime& to);
    /// Reflexive-transitive reachability.
    auto reaches(const Lifetime& from, const Lifetime& to) const -> bool;
    auto reachable_from(const Lifetime& from) const -> std::set<Lifetime>;
};

/// One place a path may denote, and the loans that were followed to get there.
struct Footprint {
    Path place;
    std::set<std::size_t> via; // issuing instruction indices

    auto operator<=>(const Footprint&) const = default;
};

/// Per-function intermediate results the checkers and renderers reuse.
struct FunctionAux {
    /// Declared variables plus every path in the body, with all prefixes.
    std::set<Path> tracked;
    std::map<Path, std::vector<Footprint>> footprints;
    RegionGraph regions;
    /// Variables live on entry to each instruction.
    std::vector<std::set<std::string>> live_in;
    /// Locals that may not have been assigned on some path to each instruction.
    std::vector<std::set<std::string>> maybe_uninit;
};

struct Accesses {
    std::set<PathFact> read_at;
    std::set<PathFact> written_at;
    std::set<PathFact> moved_at;
};

struct FactBase {
    std::set<PathFact> read_at;
    std::set<PathFact> written_at;
    std::set<PathFact> moved_at;
    std::set<PathFact> moved_before;
    std::set<LoanFact> loan_issued_at;
    std::set<LoanFact> loan_live_at;
    std::set<Flow> flows;
    /// (function, longer, shorter) as declared in signatures.
    std::set<std::tuple<std::string, std::string, std::string>> declared_outlives;

    std::vector<LoanId> loans;
    std::map<std::string, FunctionAux> aux;

    auto loan(const InstructionId& issued) const -> const LoanId*;
    auto is_live(const LoanId& l, const InstructionId& at) const -> bool { return loan_live_at.count({l, at}) > 0; }
};

auto extract_accesses(const lang::TypedProgram& p) -> Accesses;
auto compute_loan_liveness(const lang::TypedProgram& p) -> std::set<LoanFact>;
/// Over every tracked path of every function.
auto compute_moved_before(const lang::TypedProgram& p) -> std::set<PathFact>;
auto compute_flows(const lang::TypedProgram& p) -> std::set<Flow>;
auto build_facts(const lang::TypedProgram& p) -> FactBase;

auto build_regions(const lang::TypedProgram& p, const std::string& function) -> RegionGraph;
/// Places `p` may denote: box derefs extend the footprint, ref derefs also
/// resolve through every loan whose region reaches the reference's lifetime.
auto resolve_footprints(const lang::TypedProgram& p, const std::string& function, const RegionGraph& regions,
                        const Path& path) -> std::vector<Footprint>;

/// p ≈ q: some footprint of one is a prefix of some footprint of the other.
auto conflicts(const Path& p, const Path& q, const lang::TypedProgram& tp, const std::string& function) -> bool;
auto conflicts(const FactBase& fb, const std::string& function, const Path& p, const Path& q) -> bool;
/// Whether an access to `access` touches the target of `loan`, ignoring the
/// places reached through `loan` itself (using a reference is not a conflict
/// with the loan it holds).
auto conflicts_with_loan(const FactBase& fb, const Path& access, const LoanId& loan) -> bool;

/// Whether `longer :> shorter` follows from the function's declared outlives
/// pairs by reflexivity and transitivity.
auto declared_outlives_holds(const FactBase& fb, const std::string& function, const std::string& longer,
                             const std::string& shorter) -> bool;

/// Sorted, line-delimited export, one section per relation.
auto export_facts(const FactBase& fb) -> std::string;

} // namespace ownlab::facts
