#include "ownlab/facts.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>

namespace ownlab::facts {

using lang::LangType;

auto LoanId::str() const -> std::string {
    return "&" + std::string(lang::to_string(qualifier)) + " " + target.str() + "@" + issued.str();
}

auto FactBase::loan(const InstructionId& issued) const -> const LoanId* {
    for (const auto& l : loans) {
        if (l.issued == issued) {
            return &l;
        }
    }
    return nullptr;
}

// ============================================================================
// Region graph
// ============================================================================

void RegionGraph::add(const Lifetime& from, const Lifetime& to) {
    succ[from].insert(to);
    succ[to];
}

auto RegionGraph::reachable_from(const Lifetime& from) const -> std::set<Lifetime> {
    std::set<Lifetime> seen{from};
    std::vector<Lifetime> work{from};
    while (!work.empty()) {
        Lifetime cur = work.back();
        work.pop_back();
        auto it = succ.find(cur);
        if (it == succ.end()) {
            continue;
        }
        for (const auto& n : it->second) {
            if (seen.insert(n).second) {
                work.push_back(n);
            }
        }
    }
    return seen;
}

auto RegionGraph::reaches(const Lifetime& from, const Lifetime& to) const -> bool {
    return reachable_from(from).count(to) > 0;
}

namespace {

/// An edge between two lifetimes produced at an instruction, blamed on a source path.
struct RegionEdge {
    Lifetime from;
    Lifetime to;
    Path blame;
    std::size_t at = 0;
};

/// Pairs up the lifetimes of two same-shaped types. Under a unique reference
/// the pointee is invariant, so edges go both ways.
void zip(const LangType& src, const LangType& dst, bool invariant, const Path& blame, std::size_t at,
         std::vector<RegionEdge>& out) {
    if (src.kind != dst.kind || src.elems.size() != dst.elems.size()) {
        return;
    }
    if (src.is_ref()) {
        out.push_back({src.lifetime, dst.lifetime, blame, at});
        if (invariant) {
            out.push_back({dst.lifetime, src.lifetime, blame, at});
        }
        zip(src.pointee(), dst.pointee(), invariant || src.qualifier == lang::Qualifier::Unique, blame, at, out);
        return;
    }
    for (std::size_t i = 0; i < src.elems.size(); ++i) {
        zip(src.elems[i], dst.elems[i], invariant, blame, at, out);
    }
}

/// Renames every lifetime of a callee signature type to its per-call instance.
auto instantiate(LangType t, std::size_t at) -> LangType {
    if (t.is_ref()) {
        t.lifetime = Lifetime::concrete("call" + std::to_string(at) + "'" + t.lifetime.name);
    }
    for (auto& e : t.elems) {
        e = instantiate(e, at);
    }
    return t;
}

auto callee_return_type(const lang::TypedProgram& p, const std::string& callee) -> LangType {
    return p.types_of(callee).return_type;
}

auto region_edges(const lang::TypedProgram& p, const std::string& function) -> std::vector<RegionEdge> {
    const auto& f = p.fn(function);
    const auto& types = p.types_of(function);
    std::vector<RegionEdge> out;
    auto type_of = [&](const Path& x) -> const LangType& { return *types.type_of(x); };

    for (std::size_t i = 0; i < f.body.size(); ++i) {
        const auto& ins = f.body[i];
        if (const auto* a = std::get_if<lang::Assign>(&ins)) {
            const auto& dt = type_of(a->dest);
            if (const auto* src = std::get_if<Path>(&a->rv)) {
                zip(type_of(*src), dt, false, *src, i, out);
            } else if (const auto* l = std::get_if<lang::LoanExpr>(&a->rv)) {
                const auto* site = types.loan_at(i);
                LangType lt = LangType::ref(site->lifetime, l->qualifier, type_of(l->target));
                zip(lt, dt, false, l->target, i, out);
                // Reborrow: whatever the dereferenced references carry, the new loan carries too.
                for (std::size_t k = 0; k < l->target.ops.size(); ++k) {
                    if (!l->target.ops[k].is_deref()) {
                        continue;
                    }
                    const auto& pt = type_of(l->target.truncated(k));
                    if (pt.is_ref()) {
                        out.push_back({pt.lifetime, site->lifetime, l->target.truncated(k), i});
                    }
                }
            } else if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                for (std::size_t k = 0; k < t->elems.size() && k < dt.elems.size(); ++k) {
                    if (const auto* ep = std::get_if<Path>(&t->elems[k])) {
                        zip(type_of(*ep), dt.elems[k], false, *ep, i, out);
                    }
                }
            } else if (const auto* b = std::get_if<lang::BoxExpr>(&a->rv)) {
                if (const auto* bp = std::get_if<Path>(&b->operand)) {
                    zip(type_of(*bp), dt.pointee(), false, *bp, i, out);
                }
            }
        } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
            const auto& callee = p.fn(c->callee);
            for (std::size_t k = 0; k < c->args.size(); ++k) {
                zip(type_of(c->args[k]), instantiate(callee.params[k].type, i), false, c->args[k], i, out);
            }
            zip(instantiate(callee_return_type(p, c->callee), i), type_of(c->dest), false, c->dest, i, out);
            for (const auto& o : callee.outlives) {
                auto inst = [&](const std::string& n) { return Lifetime::concrete("call" + std::to_string(i) + "'" + n); };
                out.push_back({inst(o.longer), inst(o.shorter), c->dest, i});
            }
        } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
            zip(type_of(r->operand), types.return_type, false, r->operand, i, out);
        }
    }
    return out;
}

// ============================================================================
// Per-function dataflow
// ============================================================================

auto predecessors(const std::vector<lang::Instruction>& body) -> std::vector<std::vector<std::size_t>> {
    std::vector<std::vector<std::size_t>> preds(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        for (auto s : lang::successors(body, i)) {
            if (s < body.size()) {
                preds[s].push_back(i);
            }
        }
    }
    return preds;
}

auto bare_dest(const lang::Instruction& ins) -> std::optional<std::string> {
    const Path* dest = nullptr;
    if (const auto* a = std::get_if<lang::Assign>(&ins)) {
        dest = &a->dest;
    } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
        dest = &c->dest;
    }
    if (dest != nullptr && dest->is_var()) {
        return dest->base;
    }
    return std::nullopt;
}

auto dest_of(const lang::Instruction& ins) -> const Path* {
    if (const auto* a = std::get_if<lang::Assign>(&ins)) {
        return &a->dest;
    }
    if (const auto* c = std::get_if<lang::Call>(&ins)) {
        return &c->dest;
    }
    return nullptr;
}

/// Variables used at an instruction: every path occurrence except a write to a
/// bare variable or to a field of one (those do not read the old value).
auto uses(const lang::Instruction& ins) -> std::set<std::string> {
    std::set<std::string> out;
    const Path* dest = dest_of(ins);
    auto all = lang::paths_of(ins);
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (k == 0 && dest != nullptr && !dest->has_deref()) {
            continue;
        }
        out.insert(all[k].base);
    }
    return out;
}

auto compute_live_in(const lang::FunctionDef& f) -> std::vector<std::set<std::string>> {
    const auto n = f.body.size();
    std::vector<std::set<std::string>> live_in(n);
    std::vector<std::set<std::string>> use(n);
    std::vector<std::optional<std::string>> def(n);
    for (std::size_t i = 0; i < n; ++i) {
        use[i] = uses(f.body[i]);
        def[i] = bare_dest(f.body[i]);
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t ri = n; ri-- > 0;) {
            std::set<std::string> out;
            for (auto s : lang::successors(f.body, ri)) {
                if (s < n) {
                    out.insert(live_in[s].begin(), live_in[s].end());
                }
            }
            if (def[ri]) {
                out.erase(*def[ri]);
            }
            out.insert(use[ri].begin(), use[ri].end());
            if (out != live_in[ri]) {
                live_in[ri] = std::move(out);
                changed = true;
            }
        }
    }
    return live_in;
}

auto compute_maybe_uninit(const lang::FunctionDef& f) -> std::vector<std::set<std::string>> {
    const auto n = f.body.size();
    std::set<std::string> all_locals;
    for (const auto& l : f.locals) {
        all_locals.insert(l.name);
    }
    // in[i]: locals that may be unassigned on entry to i. Start from the empty
    // set (optimistic) and grow; the entry gets every local.
    auto preds = predecessors(f.body);
    std::vector<std::set<std::string>> in(n);
    if (n > 0) {
        in[0] = all_locals;
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::set<std::string> next = i == 0 ? all_locals : std::set<std::string>{};
            for (auto pr : preds[i]) {
                auto out = in[pr];
                if (auto d = bare_dest(f.body[pr])) {
                    out.erase(*d);
                }
                next.insert(out.begin(), out.end());
            }
            if (next != in[i]) {
                in[i] = std::move(next);
                changed = true;
            }
        }
    }
    return in;
}

void accesses_of(const lang::TypedProgram& p, const std::string& function, Accesses& acc) {
    const auto& f = p.fn(function);
    const auto& types = p.types_of(function);
    auto movable = [&](const Path& x) { return types.type_of(x)->is_movable(); };

    // Initializing writes are exempt from needing W.
    std::vector<std::set<std::string>> assigned_before(f.body.size());
    {
        auto preds = predecessors(f.body);
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::size_t k = 0; k < f.body.size(); ++k) {
                std::set<std::string> next;
                for (auto pr : preds[k]) {
                    next.insert(assigned_before[pr].begin(), assigned_before[pr].end());
                    if (auto d = bare_dest(f.body[pr])) {
                        next.insert(*d);
                    }
                }
                if (next != assigned_before[k]) {
                    assigned_before[k] = std::move(next);
                    changed = true;
                }
            }
        }
    }
    auto write_dest = [&](const Path& dest, std::size_t i) {
        if (dest.is_var() && !f.is_param(dest.base) && assigned_before[i].count(dest.base) == 0) {
            return;
        }
        acc.written_at.insert({dest, {function, i}});
    };
    auto consume = [&](const Path& x, std::size_t i) {
        acc.read_at.insert({x, {function, i}});
        if (movable(x)) {
            acc.moved_at.insert({x, {function, i}});
        }
    };
    auto consume_operand = [&](const lang::Operand& op, std::size_t i) {
        if (const auto* x = std::get_if<Path>(&op)) {
            consume(*x, i);
        }
    };

    for (std::size_t i = 0; i < f.body.size(); ++i) {
        InstructionId at{function, i};
        const auto& ins = f.body[i];
        if (const auto* a = std::get_if<lang::Assign>(&ins)) {
            if (const auto* src = std::get_if<Path>(&a->rv)) {
                consume(*src, i);
            } else if (const auto* l = std::get_if<lang::LoanExpr>(&a->rv)) {
                if (l->qualifier == lang::Qualifier::Shared) {
                    acc.read_at.insert({l->target, at});
                } else {
                    acc.written_at.insert({l->target, at});
                }
            } else if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                for (const auto& e : t->elems) {
                    consume_operand(e, i);
                }
            } else if (const auto* b = std::get_if<lang::BoxExpr>(&a->rv)) {
                consume_operand(b->operand, i);
            }
            write_dest(a->dest, i);
        } else if (const auto* br = std::get_if<lang::If>(&ins)) {
            acc.read_at.insert({br->cond, at});
        } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
            for (const auto& arg : c->args) {
                consume(arg, i);
            }
            write_dest(c->dest, i);
        } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
            consume(r->operand, i);
        } else if (const auto* d = std::get_if<lang::Drop>(&ins)) {
            if (movable(d->operand)) {
                acc.moved_at.insert({d->operand, at});
            }
        }
    }
}

auto tracked_paths(const lang::FunctionDef& f) -> std::set<Path> {
    std::set<Path> out;
    for (const auto* list : {&f.params, &f.locals}) {
        for (const auto& d : *list) {
            out.insert(Path{d.name});
        }
    }
    for (const auto& ins : f.body) {
        for (const auto& x : lang::paths_of(ins)) {
            out.insert(x);
            for (const auto& pre : x.prefixes()) {
                out.insert(pre);
            }
        }
    }
    return out;
}

/// Moves still in effect on entry to each instruction, as the moved paths.
auto moves_in(const lang::FunctionDef& f, const std::string& function, const std::set<PathFact>& moved_at)
    -> std::vector<std::set<Path>> {
    const auto n = f.body.size();
    std::vector<std::set<Path>> gen(n);
    for (const auto& [x, at] : moved_at) {
        if (at.function == function) {
            gen[at.index].insert(x);
        }
    }
    auto transfer = [&](std::size_t i, std::set<Path> s) {
        s.insert(gen[i].begin(), gen[i].end());
        if (const Path* d = dest_of(f.body[i])) {
            for (auto it = s.begin(); it != s.end();) {
                it = d->is_prefix_of(*it) ? s.erase(it) : std::next(it);
            }
        }
        return s;
    };
    auto preds = predecessors(f.body);
    std::vector<std::set<Path>> in(n);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::set<Path> next;
            for (auto pr : preds[i]) {
                auto out = transfer(pr, in[pr]);
                next.insert(out.begin(), out.end());
            }
            if (next != in[i]) {
                in[i] = std::move(next);
                changed = true;
            }
        }
    }
    return in;
}

} // namespace

// ============================================================================
// Public operations
// ============================================================================

auto build_regions(const lang::TypedProgram& p, const std::string& function) -> RegionGraph {
    RegionGraph g;
    const auto& types = p.types_of(function);
    for (const auto& [name, t] : types.var_types) {
        for (const auto& l : t.lifetimes()) {
            g.succ[l];
        }
    }
    for (const auto& l : types.loans) {
        g.succ[l.lifetime];
    }
    for (const auto& e : region_edges(p, function)) {
        g.add(e.from, e.to);
    }
    return g;
}

auto resolve_footprints(const lang::TypedProgram& p, const std::string& function, const RegionGraph& regions,
                        const Path& path) -> std::vector<Footprint> {
    const auto& types = p.types_of(function);
    std::function<std::vector<Footprint>(const Path&, const std::set<std::size_t>&)> resolve;
    resolve = [&](const Path& x, const std::set<std::size_t>& via0) {
        std::vector<Footprint> cur{{Path{x.base}, via0}};
        for (std::size_t k = 0; k < x.ops.size(); ++k) {
            const auto& op = x.ops[k];
            std::vector<Footprint> next;
            if (!op.is_deref()) {
                for (auto& fp : cur) {
                    next.push_back({fp.place.field(op.index), fp.via});
                }
            } else {
                const auto* t = types.type_of(x.truncated(k));
                for (auto& fp : cur) {
                    next.push_back({fp.place.deref(), fp.via});
                    if (t == nullptr || !t->is_ref()) {
                        continue;
                    }
                    for (const auto& site : types.loans) {
                        if (fp.via.count(site.instruction) > 0 || !regions.reaches(site.lifetime, t->lifetime)) {
                            continue;
                        }
                        auto via = fp.via;
                        via.insert(site.instruction);
                        for (auto& inner : resolve(site.expr.target, via)) {
                            next.push_back(std::move(inner));
                        }
                    }
                }
            }
            std::sort(next.begin(), next.end());
            next.erase(std::unique(next.begin(), next.end()), next.end());
            cur = std::move(next);
        }
        return cur;
    };
    return resolve(path, {});
}

auto extract_accesses(const lang::TypedProgram& p) -> Accesses {
    Accesses acc;
    for (const auto& [name, f] : p.program.functions) {
        accesses_of(p, name, acc);
    }
    return acc;
}

namespace {

auto loan_ids(const lang::TypedProgram& p, const std::string& function) -> std::vector<LoanId> {
    std::vector<LoanId> out;
    for (const auto& site : p.types_of(function).loans) {
        out.push_back({{function, site.instruction}, site.expr.target, site.expr.qualifier, site.lifetime});
    }
    return out;
}

void liveness_into(const lang::TypedProgram& p, const std::string& function, const RegionGraph& g,
                   const std::vector<std::set<std::string>>& live_in, std::set<LoanFact>& out) {
    const auto& types = p.types_of(function);
    for (const auto& loan : loan_ids(p, function)) {
        auto reach = g.reachable_from(loan.lifetime);
        std::set<std::string> carriers;
        for (const auto& [var, t] : types.var_types) {
            for (const auto& l : t.lifetimes()) {
                if (reach.count(l) > 0) {
                    carriers.insert(var);
                    break;
                }
            }
        }
        for (std::size_t i = 0; i < live_in.size(); ++i) {
            // The issuing instruction's own access happens before the loan exists.
            if (i == loan.issued.index) {
                continue;
            }
            for (const auto& v : carriers) {
                if (live_in[i].count(v) > 0) {
                    out.insert({loan, {function, i}});
                    break;
                }
            }
        }
    }
}

void flows_into(const lang::TypedProgram& p, const std::string& function, const RegionGraph& g,
                std::set<Flow>& out) {
    const auto& f = p.fn(function);
    std::set<std::string> declared(f.lifetime_params.begin(), f.lifetime_params.end());
    for (const auto& e : region_edges(p, function)) {
        if (!e.to.is_abstract() || declared.count(e.to.name) == 0) {
            continue;
        }
        for (const auto& rho : declared) {
            if (rho == e.to.name) {
                continue;
            }
            if (g.reaches(Lifetime::abstract(rho), e.from)) {
                out.insert({rho, e.to.name, e.blame, {function, e.at}});
            }
        }
    }
}

} // namespace

auto compute_loan_liveness(const lang::TypedProgram& p) -> std::set<LoanFact> {
    std::set<LoanFact> out;
    for (const auto& [name, f] : p.program.functions) {
        liveness_into(p, name, build_regions(p, name), compute_live_in(f), out);
    }
    return out;
}

auto compute_moved_before(const lang::TypedProgram& p) -> std::set<PathFact> {
    auto acc = extract_accesses(p);
    std::set<PathFact> out;
    for (const auto& [name, f] : p.program.functions) {
        auto in = moves_in(f, name, acc.moved_at);
        auto tracked = tracked_paths(f);
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            for (const auto& x : tracked) {
                for (const auto& q : in[i]) {
                    if (lang::prefix_related(x, q)) {
                        out.insert({x, {name, i}});
                        break;
                    }
                }
            }
        }
    }
    return out;
}

auto compute_flows(const lang::TypedProgram& p) -> std::set<Flow> {
    std::set<Flow> out;
    for (const auto& [name, f] : p.program.functions) {
        flows_into(p, name, build_regions(p, name), out);
    }
    return out;
}

auto build_facts(const lang::TypedProgram& p) -> FactBase {
    FactBase fb;
    auto acc = extract_accesses(p);
    fb.read_at = std::move(acc.read_at);
    fb.written_at = std::move(acc.written_at);
    fb.moved_at = std::move(acc.moved_at);
    fb.moved_before = compute_moved_before(p);

    for (const auto& [name, f] : p.program.functions) {
        auto& aux = fb.aux[name];
        aux.tracked = tracked_paths(f);
        aux.regions = build_regions(p, name);
        aux.live_in = compute_live_in(f);
        aux.maybe_uninit = compute_maybe_uninit(f);
        for (const auto& x : aux.tracked) {
            aux.footprints[x] = resolve_footprints(p, name, aux.regions, x);
        }
        for (const auto& loan : loan_ids(p, name)) {
            fb.loans.push_back(loan);
            fb.loan_issued_at.insert({loan, loan.issued});
        }
        liveness_into(p, name, aux.regions, aux.live_in, fb.loan_live_at);
        flows_into(p, name, aux.regions, fb.flows);
        for (const auto& o : f.outlives) {
            fb.declared_outlives.insert({name, o.longer, o.shorter});
        }
    }
    std::sort(fb.loans.begin(), fb.loans.end());
    return fb;
}

namespace {

auto footprints_of(const FactBase& fb, const std::string& function, const Path& x) -> const std::vector<Footprint>& {
    return fb.aux.at(function).footprints.at(x);
}

} // namespace

auto conflicts(const FactBase& fb, const std::string& function, const Path& p, const Path& q) -> bool {
    for (const auto& a : footprints_of(fb, function, p)) {
        for (const auto& b : footprints_of(fb, function, q)) {
            if (lang::prefix_related(a.place, b.place)) {
                return true;
            }
        }
    }
    return false;
}

auto conflicts(const Path& p, const Path& q, const lang::TypedProgram& tp, const std::string& function) -> bool {
    auto g = build_regions(tp, function);
    for (const auto& a : resolve_footprints(tp, function, g, p)) {
        for (const auto& b : resolve_footprints(tp, function, g, q)) {
            if (lang::prefix_related(a.place, b.place)) {
                return true;
            }
        }
    }
    return false;
}

auto conflicts_with_loan(const FactBase& fb, const Path& access, const LoanId& loan) -> bool {
    const auto& fn = loan.issued.function;
    const auto idx = loan.issued.index;
    for (const auto& a : footprints_of(fb, fn, access)) {
        if (a.via.count(idx) > 0) {
            continue;
        }
        for (const auto& b : footprints_of(fb, fn, loan.target)) {
            if (b.via.count(idx) == 0 && lang::prefix_related(a.place, b.place)) {
                return true;
            }
        }
    }
    return false;
}

auto declared_outlives_holds(const FactBase& fb, const std::string& function, const std::string& longer,
                             const std::string& shorter) -> bool {
    if (longer == shorter) {
        return true;
    }
    std::set<std::string> seen{longer};
    std::vector<std::string> work{longer};
    while (!work.empty()) {
        auto cur = work.back();
        work.pop_back();
        for (const auto& [fn, a, b] : fb.declared_outlives) {
            if (fn == function && a == cur && seen.insert(b).second) {
                if (b == shorter) {
                    return true;
                }
                work.push_back(b);
            }
        }
    }
    return false;
}

auto export_facts(const FactBase& fb) -> std::string {
    std::ostringstream os;
    auto section = [&](const char* name, const std::set<PathFact>& rel) {
        os << "# " << name << "\n";
        std::vector<std::string> lines;
        for (const auto& [x, at] : rel) {
            lines.push_back(at.str() + "\t" + x.str());
        }
        std::sort(lines.begin(), lines.end());
        for (const auto& l : lines) {
            os << l << "\n";
        }
    };
    auto loan_section = [&](const char* name, const std::set<LoanFact>& rel) {
        os << "# " << name << "\n";
        std::vector<std::string> lines;
        for (const auto& [l, at] : rel) {
            lines.push_back(at.str() + "\t" + l.str());
        }
        std::sort(lines.begin(), lines.end());
        for (const auto& l : lines) {
            os << l << "\n";
        }
    };
    section("read_at", fb.read_at);
    section("written_at", fb.written_at);
    section("moved_at", fb.moved_at);
    section("moved_before", fb.moved_before);
    loan_section("loan_issued_at", fb.loan_issued_at);
    loan_section("loan_live_at", fb.loan_live_at);
    os << "# flows\n";
    for (const auto& fl : fb.flows) {
        os << fl.at.str() << "\t'" << fl.longer << " -> '" << fl.shorter << "\t" << fl.path.str() << "\n";
    }
    os << "# declared_outlives\n";
    for (const auto& [fn, a, b] : fb.declared_outlives) {
        os << fn << "\t'" << a << " :> '" << b << "\n";
    }
    return os.str();
}

} // namespace ownlab::facts
