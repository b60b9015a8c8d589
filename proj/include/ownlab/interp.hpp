//! # Dynamic model
//!
//! A small-step interpreter over stack frames and a heap of boxed values.
//! Pointers are paths-as-values (`Address` = segment + field projection), so
//! dangling pointers are representable and detected when dereferenced.
//!
//! The interpreter never consults the borrow checkers: a rejected program is
//! executed like any other, which is how the lab exhibits the undefined
//! behavior a rejection guards against.

#pragma once

#include "ownlab/lang.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace ownlab::interp {

using HeapLoc = std::uint64_t;

struct Segment {
    enum class Kind { Frame, Heap };
    Kind kind = Kind::Frame;
    std::size_t depth = 0;       // Frame: index into the stack (0 = main)
    std::string var;             // Frame
    std::uint64_t generation = 0; // Frame: identifies the activation, so popped frames dangle
    HeapLoc loc = 0;             // Heap

    static auto frame(std::size_t depth, std::string var, std::uint64_t generation) -> Segment {
        return {Kind::Frame, depth, std::move(var), generation, 0};
    }
    static auto heap(HeapLoc loc) -> Segment { return {Kind::Heap, 0, {}, 0, loc}; }
    auto is_heap() const -> bool { return kind == Kind::Heap; }

    auto operator<=>(const Segment&) const = default;
};

struct Address {
    Segment segment;
    std::vector<std::uint32_t> projection;

    auto str() const -> std::string;
    auto operator<=>(const Address&) const = default;
};

struct RtValue {
    enum class Kind { Const, Addr, Tuple };
    Kind kind = Kind::Const;
    lang::Constant constant;
    Address addr;
    std::vector<RtValue> elems;

    static auto of(lang::Constant c) -> RtValue { return {Kind::Const, c, {}, {}}; }
    static auto pointer(Address a) -> RtValue { return {Kind::Addr, {}, std::move(a), {}}; }
    static auto tuple(std::vector<RtValue> es) -> RtValue { return {Kind::Tuple, {}, {}, std::move(es)}; }

    auto str() const -> std::string;
    auto operator==(const RtValue& other) const -> bool;
};

struct Frame {
    std::string function;
    std::size_t return_to = 0;             // caller instruction to resume at
    std::optional<lang::Path> return_dest; // caller path receiving the result
    std::map<std::string, RtValue> env;
    std::size_t pc = 0;
    std::uint64_t generation = 0;

    auto operator==(const Frame&) const -> bool = default;
};

struct MachineState {
    std::vector<Frame> stack;
    std::map<HeapLoc, RtValue> heap;
    std::set<HeapLoc> freed;
    HeapLoc next_loc = 0;
    std::uint64_t next_generation = 0;

    auto operator==(const MachineState&) const -> bool = default;
};

struct UbReport {
    enum class Kind { UseAfterFree, DoubleFree, InvalidAddress };
    Kind kind = Kind::InvalidAddress;
    lang::InstructionId at;
    lang::Path path;
    std::optional<HeapLoc> loc; // present for UseAfterFree and DoubleFree
    std::string detail;

    auto str() const -> std::string;
    auto operator==(const UbReport&) const -> bool = default;
};

auto to_string(UbReport::Kind k) -> std::string_view;

struct Next {
    MachineState state;
};
struct Terminated {
    RtValue value;
};
struct Ub {
    UbReport report;
};
using StepResult = std::variant<Next, Terminated, Ub>;

/// The state before the first instruction of `main`.
auto initial_state(const lang::TypedProgram& program) -> MachineState;

/// Executes the instruction at the top frame's pc.
auto step(MachineState state, const lang::TypedProgram& program) -> StepResult;

struct Limits {
    std::size_t max_steps = 100'000;
};

/// One executed step as a structured record: what changed, not the whole state.
struct StepRecord {
    std::size_t step = 0;
    lang::InstructionId at;
    std::size_t depth = 0; // stack height before the step
    /// (frame depth, variable) -> new value, or nullopt when the frame went away.
    std::vector<std::pair<std::pair<std::size_t, std::string>, std::optional<RtValue>>> env_deltas;
    /// heap location -> new value, or nullopt when deallocated.
    std::vector<std::pair<HeapLoc, std::optional<RtValue>>> heap_deltas;

    auto operator==(const StepRecord&) const -> bool = default;
};

struct Outcome {
    enum class Kind { Terminated, Ub, LimitExceeded };
    Kind kind = Kind::Terminated;
    std::optional<RtValue> value;  // Terminated
    std::optional<UbReport> ub;    // Ub
    std::size_t steps = 0;         // completed steps
    std::vector<StepRecord> trace; // always collected

    auto operator==(const Outcome&) const -> bool = default;
};

auto to_string(Outcome::Kind k) -> std::string_view;

auto run(const lang::TypedProgram& program, Limits limits = {}) -> Outcome;

struct Snapshot {
    std::string label;
    /// Instruction about to execute (mark snapshots) or just executed (step snapshots).
    std::optional<lang::InstructionId> at;
    MachineState state;
    std::optional<UbReport> ub;
};

/// Snapshots in execution order. With marks, a snapshot is taken each time
/// control reaches a marked instruction (before it runs), labeled L1, L2, ...
/// after the mark's position in `marks`. Without marks, a snapshot follows
/// every step. A final snapshot labeled "UB" is appended when UB occurs.
auto trace(const lang::TypedProgram& program, const std::vector<lang::InstructionId>& marks, Limits limits = {})
    -> std::vector<Snapshot>;

/// Serializes the step records as line-delimited JSON.
auto trace_records(const Outcome& outcome) -> std::string;

} // namespace ownlab::interp
