#include "ownlab/interp.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <sstream>

namespace ownlab::interp {

using lang::Path;

auto Address::str() const -> std::string {
    std::string s = segment.is_heap() ? "heap#" + std::to_string(segment.loc)
                                      : "frame(" + std::to_string(segment.depth) + "," + segment.var + ")";
    for (auto i : projection) {
        s += "." + std::to_string(i);
    }
    return s;
}

auto RtValue::str() const -> std::string {
    switch (kind) {
    case Kind::Const: return constant.str();
    case Kind::Addr: return "&" + addr.str();
    case Kind::Tuple: {
        std::string s = "(";
        for (std::size_t i = 0; i < elems.size(); ++i) {
            s += (i > 0 ? ", " : "") + elems[i].str();
        }
        return s + ")";
    }
    }
    return "?";
}

auto RtValue::operator==(const RtValue& other) const -> bool {
    if (kind != other.kind) {
        return false;
    }
    switch (kind) {
    case Kind::Const: return constant == other.constant;
    case Kind::Addr: return addr == other.addr;
    case Kind::Tuple: return elems == other.elems;
    }
    return false;
}

auto to_string(UbReport::Kind k) -> std::string_view {
    switch (k) {
    case UbReport::Kind::UseAfterFree: return "use-after-free";
    case UbReport::Kind::DoubleFree: return "double-free";
    case UbReport::Kind::InvalidAddress: return "invalid-address";
    }
    return "?";
}

auto to_string(Outcome::Kind k) -> std::string_view {
    switch (k) {
    case Outcome::Kind::Terminated: return "terminated";
    case Outcome::Kind::Ub: return "ub";
    case Outcome::Kind::LimitExceeded: return "limit-exceeded";
    }
    return "?";
}

auto UbReport::str() const -> std::string {
    std::string s = "undefined behavior: " + std::string(to_string(kind)) + " at " + at.str() + " (" + path.str() + ")";
    if (loc) {
        s += " on heap#" + std::to_string(*loc);
    }
    if (!detail.empty()) {
        s += ": " + detail;
    }
    return s;
}

namespace {

struct UbSignal {
    UbReport report;
};

/// Heap cells a step touched, with their contents before the step.
struct StepLog {
    std::map<HeapLoc, std::optional<RtValue>> heap;
    std::vector<HeapLoc> freed;
};

class Machine {
public:
    Machine(MachineState& st, const lang::TypedProgram& prog, StepLog* log = nullptr)
        : st_(st), prog_(prog), log_(log) {}

    auto execute() -> StepResult {
        auto& frame = st_.stack.back();
        const auto& fn = prog_.fn(frame.function);
        at_ = {frame.function, frame.pc};
        const auto& ins = fn.body.at(frame.pc);
        try {
            if (const auto* a = std::get_if<lang::Assign>(&ins)) {
                RtValue v = eval_rvalue(a->rv);
                write(eval_place(a->dest), v, a->dest);
                ++st_.stack.back().pc;
            } else if (const auto* br = std::get_if<lang::If>(&ins)) {
                RtValue c = read(eval_place(br->cond), br->cond);
                if (c.kind != RtValue::Kind::Const || !c.constant.is_bool()) {
                    fail(UbReport::Kind::InvalidAddress, br->cond, std::nullopt, "condition is not a bool");
                }
                st_.stack.back().pc = c.constant.kind == lang::Constant::Kind::True ? br->then_target : br->else_target;
            } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
                const auto& callee = prog_.fn(c->callee);
                Frame f;
                f.function = c->callee;
                f.return_to = frame.pc + 1;
                f.return_dest = c->dest;
                f.generation = ++st_.next_generation;
                for (std::size_t k = 0; k < c->args.size(); ++k) {
                    f.env[callee.params[k].name] = read(eval_place(c->args[k]), c->args[k]);
                }
                st_.stack.push_back(std::move(f));
            } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
                RtValue v = read(eval_place(r->operand), r->operand);
                Frame done = std::move(st_.stack.back());
                st_.stack.pop_back();
                if (st_.stack.empty()) {
                    return Terminated{std::move(v)};
                }
                write(eval_place(*done.return_dest), v, *done.return_dest);
                st_.stack.back().pc = done.return_to;
            } else if (const auto* d = std::get_if<lang::Drop>(&ins)) {
                const auto* t = prog_.types_of(frame.function).type_of(d->operand);
                assert(t != nullptr);
                // Values owning no heap data have nothing to deallocate and are not read.
                if (owns_heap(*t)) {
                    RtValue v = read(eval_place(d->operand), d->operand);
                    drop_value(v, *t, d->operand);
                }
                ++st_.stack.back().pc;
            }
        } catch (const UbSignal& ub) {
            return Ub{ub.report};
        }
#ifndef NDEBUG
        for (auto loc : st_.freed) {
            assert(st_.heap.count(loc) == 0);
        }
#endif
        return Next{std::move(st_)};
    }

private:
    MachineState& st_;
    const lang::TypedProgram& prog_;
    StepLog* log_;
    lang::InstructionId at_;

    void touch(HeapLoc loc) {
        if (log_ == nullptr || log_->heap.count(loc) > 0) {
            return;
        }
        auto it = st_.heap.find(loc);
        log_->heap[loc] = it == st_.heap.end() ? std::nullopt : std::optional<RtValue>(it->second);
    }

    [[noreturn]] void fail(UbReport::Kind kind, const Path& p, std::optional<HeapLoc> loc, std::string detail) const {
        throw UbSignal{UbReport{kind, at_, p, loc, std::move(detail)}};
    }

    auto eval_place(const Path& p) -> Address {
        const auto& top = st_.stack.back();
        Address a{Segment::frame(st_.stack.size() - 1, p.base, top.generation), {}};
        for (const auto& op : p.ops) {
            if (op.is_deref()) {
                RtValue v = read(a, p);
                if (v.kind != RtValue::Kind::Addr) {
                    fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "dereferenced a non-pointer value");
                }
                a = v.addr;
            } else {
                a.projection.push_back(op.index);
            }
        }
        return a;
    }

    /// The root value the address's segment designates, or UB.
    auto root(const Address& a, const Path& p) -> RtValue& {
        if (a.segment.is_heap()) {
            if (st_.freed.count(a.segment.loc) > 0) {
                fail(UbReport::Kind::UseAfterFree, p, a.segment.loc, "heap#" + std::to_string(a.segment.loc) +
                                                                         " was already deallocated");
            }
            auto it = st_.heap.find(a.segment.loc);
            if (it == st_.heap.end()) {
                fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "no such heap location");
            }
            return it->second;
        }
        auto& frame = live_frame(a, p);
        auto it = frame.env.find(a.segment.var);
        if (it == frame.env.end()) {
            fail(UbReport::Kind::InvalidAddress, p, std::nullopt, a.segment.var + " is uninitialized");
        }
        return it->second;
    }

    auto live_frame(const Address& a, const Path& p) -> Frame& {
        if (a.segment.depth >= st_.stack.size() || st_.stack[a.segment.depth].generation != a.segment.generation) {
            fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "pointer into a popped stack frame");
        }
        return st_.stack[a.segment.depth];
    }

    auto project(RtValue& v, const Address& a, const Path& p) -> RtValue& {
        RtValue* cur = &v;
        for (auto i : a.projection) {
            if (cur->kind != RtValue::Kind::Tuple || i >= cur->elems.size()) {
                fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "projection does not match the stored value");
            }
            cur = &cur->elems[i];
        }
        return *cur;
    }

    auto read(const Address& a, const Path& p) -> RtValue { return project(root(a, p), a, p); }

    void write(const Address& a, RtValue v, const Path& p) {
        if (!a.segment.is_heap() && a.projection.empty()) {
            live_frame(a, p).env[a.segment.var] = std::move(v);
            return;
        }
        auto& slot = project(root(a, p), a, p);
        if (a.segment.is_heap()) {
            touch(a.segment.loc);
        }
        slot = std::move(v);
    }

    auto eval_operand(const lang::Operand& op) -> RtValue {
        if (const auto* c = std::get_if<lang::Constant>(&op)) {
            return RtValue::of(*c);
        }
        const auto& p = std::get<Path>(op);
        return read(eval_place(p), p);
    }

    auto eval_rvalue(const lang::Rvalue& rv) -> RtValue {
        if (const auto* c = std::get_if<lang::Constant>(&rv)) {
            return RtValue::of(*c);
        }
        if (const auto* p = std::get_if<Path>(&rv)) {
            return read(eval_place(*p), *p);
        }
        if (const auto* l = std::get_if<lang::LoanExpr>(&rv)) {
            return RtValue::pointer(eval_place(l->target));
        }
        if (const auto* t = std::get_if<lang::TupleExpr>(&rv)) {
            std::vector<RtValue> elems;
            for (const auto& e : t->elems) {
                elems.push_back(eval_operand(e));
            }
            return RtValue::tuple(std::move(elems));
        }
        const auto& b = std::get<lang::BoxExpr>(rv);
        RtValue inner = eval_operand(b.operand);
        HeapLoc loc = st_.next_loc++;
        touch(loc);
        st_.heap.emplace(loc, std::move(inner));
        return RtValue::pointer(Address{Segment::heap(loc), {}});
    }

    /// Deallocates every heap location owned by `v` (boxes, boxes inside tuples); refs are not followed.
    static auto owns_heap(const lang::LangType& t) -> bool {
        if (t.is_box()) {
            return true;
        }
        return t.is_tuple() && std::any_of(t.elems.begin(), t.elems.end(), owns_heap);
    }

    void drop_value(const RtValue& v, const lang::LangType& t, const Path& p) {
        if (t.is_box()) {
            if (v.kind != RtValue::Kind::Addr || !v.addr.segment.is_heap() || !v.addr.projection.empty()) {
                fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "box does not point at a heap allocation");
            }
            auto loc = v.addr.segment.loc;
            if (st_.freed.count(loc) > 0) {
                fail(UbReport::Kind::DoubleFree, p, loc, "heap#" + std::to_string(loc) + " was already deallocated");
            }
            auto it = st_.heap.find(loc);
            if (it == st_.heap.end()) {
                fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "no such heap location");
            }
            touch(loc);
            RtValue inner = std::move(it->second);
            st_.heap.erase(it);
            st_.freed.insert(loc);
            if (log_ != nullptr) {
                log_->freed.push_back(loc);
            }
            drop_value(inner, t.pointee(), p);
        } else if (t.is_tuple()) {
            if (v.kind != RtValue::Kind::Tuple || v.elems.size() != t.elems.size()) {
                fail(UbReport::Kind::InvalidAddress, p, std::nullopt, "tuple value does not match its type");
            }
            for (std::size_t i = 0; i < t.elems.size(); ++i) {
                drop_value(v.elems[i], t.elems[i], p);
            }
        }
    }
};

/// Fills `rec` from the stack before the step, the state after it and the
/// heap cells the step touched.
void diff_step(const std::vector<Frame>& before, const MachineState& after, const StepLog& log, StepRecord& rec) {
    std::map<std::uint64_t, std::pair<std::size_t, const Frame*>> old_frames;
    for (std::size_t d = 0; d < before.size(); ++d) {
        old_frames[before[d].generation] = {d, &before[d]};
    }
    std::set<std::uint64_t> seen;
    for (std::size_t d = 0; d < after.stack.size(); ++d) {
        const auto& f = after.stack[d];
        seen.insert(f.generation);
        auto it = old_frames.find(f.generation);
        for (const auto& [var, val] : f.env) {
            if (it == old_frames.end()) {
                rec.env_deltas.push_back({{d, var}, val});
                continue;
            }
            auto ov = it->second.second->env.find(var);
            if (ov == it->second.second->env.end() || !(ov->second == val)) {
                rec.env_deltas.push_back({{d, var}, val});
            }
        }
    }
    for (const auto& [gen, entry] : old_frames) {
        if (seen.count(gen) == 0) {
            for (const auto& [var, val] : entry.second->env) {
                rec.env_deltas.push_back({{entry.first, var}, std::nullopt});
            }
        }
    }
    for (const auto& [loc, old] : log.heap) {
        auto it = after.heap.find(loc);
        if (it != after.heap.end() && (!old || !(*old == it->second))) {
            rec.heap_deltas.push_back({loc, it->second});
        }
    }
    for (const auto& [loc, old] : log.heap) {
        if (old && after.heap.count(loc) == 0) {
            rec.heap_deltas.push_back({loc, std::nullopt});
        }
    }
}

/// Undoes a step that ended in UB part way through.
void roll_back(MachineState& st, std::vector<Frame> stack, HeapLoc next_loc, std::uint64_t next_generation,
               const StepLog& log) {
    st.stack = std::move(stack);
    st.next_loc = next_loc;
    st.next_generation = next_generation;
    for (auto loc : log.freed) {
        st.freed.erase(loc);
    }
    for (const auto& [loc, old] : log.heap) {
        if (old) {
            st.heap[loc] = *old;
        } else {
            st.heap.erase(loc);
        }
    }
}

auto value_json(const RtValue& v) -> nlohmann::json {
    switch (v.kind) {
    case RtValue::Kind::Const:
        if (v.constant.is_bool()) {
            return v.constant.kind == lang::Constant::Kind::True;
        }
        return v.constant.value;
    case RtValue::Kind::Addr: return nlohmann::json{{"addr", v.addr.str()}};
    case RtValue::Kind::Tuple: {
        auto arr = nlohmann::json::array();
        for (const auto& e : v.elems) {
            arr.push_back(value_json(e));
        }
        return arr;
    }
    }
    return nullptr;
}

} // namespace

auto initial_state(const lang::TypedProgram& program) -> MachineState {
    (void)program;
    MachineState st;
    Frame main;
    main.function = std::string(lang::kEntryFunction);
    main.generation = 0;
    st.stack.push_back(std::move(main));
    st.next_generation = 0;
    return st;
}

auto step(MachineState state, const lang::TypedProgram& program) -> StepResult {
    Machine m(state, program);
    return m.execute();
}

namespace {

/// Shared driver for run and trace. `on_state` sees the state before each step.
template <class BeforeStep, class AfterStep>
auto drive(const lang::TypedProgram& program, Limits limits, BeforeStep&& before_step, AfterStep&& after_step)
    -> Outcome {
    Outcome out;
    MachineState st = initial_state(program);
    while (true) {
        if (out.steps >= limits.max_steps) {
            out.kind = Outcome::Kind::LimitExceeded;
            return out;
        }
        const auto& top = st.stack.back();
        lang::InstructionId at{top.function, top.pc};
        before_step(st, at);
        StepRecord rec;
        rec.step = out.steps;
        rec.at = at;
        rec.depth = st.stack.size();
        // Only the stack is copied; heap changes are logged by the machine.
        std::vector<Frame> prev_stack = st.stack;
        const auto prev_loc = st.next_loc;
        const auto prev_generation = st.next_generation;
        StepLog log;
        auto res = Machine(st, program, &log).execute();
        if (std::holds_alternative<Next>(res)) {
            st = std::move(std::get<Next>(res).state);
            diff_step(prev_stack, st, log, rec);
            out.trace.push_back(std::move(rec));
            ++out.steps;
            after_step(st, at);
        } else if (auto* term = std::get_if<Terminated>(&res)) {
            st.stack.clear();
            diff_step(prev_stack, st, log, rec);
            out.trace.push_back(std::move(rec));
            ++out.steps;
            after_step(st, at);
            out.kind = Outcome::Kind::Terminated;
            out.value = term->value;
            return out;
        } else {
            out.kind = Outcome::Kind::Ub;
            out.ub = std::get<Ub>(res).report;
            roll_back(st, std::move(prev_stack), prev_loc, prev_generation, log);
            after_step(st, at, *out.ub);
            return out;
        }
    }
}

} // namespace

auto run(const lang::TypedProgram& program, Limits limits) -> Outcome {
    return drive(
        program, limits, [](const MachineState&, const lang::InstructionId&) {},
        [](const MachineState&, const lang::InstructionId&, auto&&...) {});
}

auto trace(const lang::TypedProgram& program, const std::vector<lang::InstructionId>& marks, Limits limits)
    -> std::vector<Snapshot> {
    std::vector<Snapshot> snaps;
    drive(
        program, limits,
        [&](const MachineState& st, const lang::InstructionId& at) {
            for (std::size_t k = 0; k < marks.size(); ++k) {
                if (marks[k] == at) {
                    snaps.push_back({"L" + std::to_string(k + 1), at, st, std::nullopt});
                    break;
                }
            }
        },
        [&](const MachineState& st, const lang::InstructionId& at, auto&&... ub) {
            if constexpr (sizeof...(ub) > 0) {
                snaps.push_back({"UB", at, st, std::optional<UbReport>(ub...)});
            } else if (marks.empty()) {
                snaps.push_back({"after " + at.str(), at, st, std::nullopt});
            }
        });
    return snaps;
}

auto trace_records(const Outcome& outcome) -> std::string {
    std::ostringstream os;
    for (const auto& rec : outcome.trace) {
        nlohmann::json j;
        j["schema"] = 1;
        j["record"] = "step";
        j["step"] = rec.step;
        j["function"] = rec.at.function;
        j["instruction"] = rec.at.index;
        j["depth"] = rec.depth;
        auto env = nlohmann::json::array();
        for (const auto& [key, val] : rec.env_deltas) {
            env.push_back({{"frame", key.first}, {"var", key.second}, {"value", val ? value_json(*val) : nullptr}});
        }
        j["env"] = env;
        auto heap = nlohmann::json::array();
        for (const auto& [loc, val] : rec.heap_deltas) {
            heap.push_back({{"loc", loc}, {"value", val ? value_json(*val) : nullptr}});
        }
        j["heap"] = heap;
        os << j.dump() << "\n";
    }
    nlohmann::json end;
    end["schema"] = 1;
    end["record"] = "outcome";
    end["kind"] = to_string(outcome.kind);
    end["steps"] = outcome.steps;
    if (outcome.value) {
        end["value"] = value_json(*outcome.value);
    }
    if (outcome.ub) {
        end["ub"] = {{"kind", to_string(outcome.ub->kind)},
                     {"function", outcome.ub->at.function},
                     {"instruction", outcome.ub->at.index},
                     {"path", outcome.ub->path.str()},
                     {"detail", outcome.ub->detail}};
        if (outcome.ub->loc) {
            end["ub"]["loc"] = *outcome.ub->loc;
        }
    }
    os << end.dump() << "\n";
    return os.str();
}

} // namespace ownlab::interp
