//! Brute-force access-error judgment. Every premise is evaluated by explicit
//! search over the CFG of one small function: liveness by walking forward to
//! a use, initialization and moves by walking paths, regions by propagating
//! loan sets to a fixpoint. Nothing here calls into the facts module.

#include "ownlab/diffcheck.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace ownlab::diffcheck {

using lang::LangType;
using lang::Lifetime;
using lang::Path;

namespace {

using Edge = std::pair<Lifetime, Lifetime>;

void link(const LangType& from, const LangType& to, bool both, std::vector<Edge>& out) {
    if (from.kind != to.kind || from.elems.size() != to.elems.size()) {
        return;
    }
    if (from.is_ref()) {
        out.emplace_back(from.lifetime, to.lifetime);
        if (both) {
            out.emplace_back(to.lifetime, from.lifetime);
        }
        link(from.pointee(), to.pointee(), both || from.qualifier == lang::Qualifier::Unique, out);
        return;
    }
    for (std::size_t k = 0; k < from.elems.size(); ++k) {
        link(from.elems[k], to.elems[k], both, out);
    }
}

auto rename(LangType t, std::size_t site) -> LangType {
    if (t.is_ref()) {
        t.lifetime = Lifetime::concrete("@" + std::to_string(site) + ":" + t.lifetime.name);
    }
    for (auto& e : t.elems) {
        e = rename(e, site);
    }
    return t;
}

class Judge {
public:
    Judge(const lang::TypedProgram& tp, const std::string& name)
        : tp_(tp), name_(name), f_(tp.fn(name)), ty_(tp.types_of(name)), n_(f_.body.size()) {
        for (std::size_t i = 0; i < n_; ++i) {
            for (auto s : lang::successors(f_.body, i)) {
                if (s < n_) {
                    succ_[i].push_back(s);
                    pred_[s].push_back(i);
                }
            }
        }
        propagate_loans();
    }

    void errors(std::vector<polonius::AccessErrorDiag>& out) {
        std::vector<std::pair<Path, std::size_t>> reads, writes, moves;
        for (std::size_t i = 0; i < n_; ++i) {
            collect(i, reads, writes, moves);
        }
        for (std::size_t k = 0; k < ty_.loans.size(); ++k) {
            const auto& site = ty_.loans[k];
            facts::LoanId loan{{name_, site.instruction}, site.expr.target, site.expr.qualifier, site.lifetime};
            std::map<std::size_t, std::pair<polonius::SubRule, Path>> best;
            auto consider = [&](const auto& accesses, polonius::SubRule rule) {
                for (const auto& [p, i] : accesses) {
                    if (!loan_live(k, i) || !touches(p, k)) {
                        continue;
                    }
                    auto cand = std::make_pair(rule, p);
                    auto it = best.find(i);
                    if (it == best.end() || cand < it->second) {
                        best[i] = cand;
                    }
                }
            };
            if (site.expr.qualifier == lang::Qualifier::Unique) {
                consider(reads, polonius::SubRule::ReadInvalid);
            }
            consider(writes, polonius::SubRule::WriteInvalid);
            consider(moves, polonius::SubRule::MoveInvalid);
            for (const auto& [i, c] : best) {
                out.push_back({polonius::Rule::BorrowConflict, {name_, i}, loan, c.second, c.first});
            }
        }
        std::set<std::pair<Path, std::size_t>> seen;
        for (const auto& r : reads) {
            if (!seen.insert(r).second) {
                continue;
            }
            for (const auto& [q, m] : moves) {
                if (lang::prefix_related(r.first, q) && move_reaches(q, m, r.second)) {
                    out.push_back({polonius::Rule::MoveConflict, {name_, r.second}, std::nullopt, r.first,
                                   std::nullopt});
                    break;
                }
            }
        }
    }

private:
    const lang::TypedProgram& tp_;
    std::string name_;
    const lang::FunctionDef& f_;
    const lang::FunctionTypes& ty_;
    std::size_t n_;
    std::map<std::size_t, std::vector<std::size_t>> succ_, pred_;
    /// Loan site indices whose region reaches each lifetime.
    std::map<Lifetime, std::set<std::size_t>> carried_;

    auto type(const Path& p) const -> LangType { return *lang::resolve_path_type(ty_.var_types, p); }

    static auto dest(const lang::Instruction& ins) -> const Path* {
        if (const auto* a = std::get_if<lang::Assign>(&ins)) {
            return &a->dest;
        }
        if (const auto* c = std::get_if<lang::Call>(&ins)) {
            return &c->dest;
        }
        return nullptr;
    }

    auto defines(std::size_t i, const std::string& v) const -> bool {
        const Path* d = dest(f_.body[i]);
        return d != nullptr && d->is_var() && d->base == v;
    }

    auto reads_var(std::size_t i, const std::string& v) const -> bool {
        const auto& ins = f_.body[i];
        const Path* d = dest(ins);
        if (d != nullptr && d->has_deref() && d->base == v) {
            return true;
        }
        std::vector<Path> ps;
        if (const auto* a = std::get_if<lang::Assign>(&ins)) {
            if (const auto* p = std::get_if<Path>(&a->rv)) {
                ps.push_back(*p);
            } else if (const auto* l = std::get_if<lang::LoanExpr>(&a->rv)) {
                ps.push_back(l->target);
            } else if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                for (const auto& e : t->elems) {
                    if (const auto* p = std::get_if<Path>(&e)) {
                        ps.push_back(*p);
                    }
                }
            } else if (const auto* b = std::get_if<lang::BoxExpr>(&a->rv)) {
                if (const auto* p = std::get_if<Path>(&b->operand)) {
                    ps.push_back(*p);
                }
            }
        } else if (const auto* br = std::get_if<lang::If>(&ins)) {
            ps.push_back(br->cond);
        } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
            ps = c->args;
        } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
            ps.push_back(r->operand);
        } else if (const auto* dr = std::get_if<lang::Drop>(&ins)) {
            ps.push_back(dr->operand);
        }
        return std::any_of(ps.begin(), ps.end(), [&](const Path& p) { return p.base == v; });
    }

    /// Some walk from `i` reaches a use of `v` before any redefinition.
    auto live(const std::string& v, std::size_t i) const -> bool {
        std::set<std::size_t> seen{i};
        std::vector<std::size_t> work{i};
        while (!work.empty()) {
            auto j = work.back();
            work.pop_back();
            if (reads_var(j, v)) {
                return true;
            }
            if (defines(j, v)) {
                continue;
            }
            for (auto s : succ_.count(j) ? succ_.at(j) : std::vector<std::size_t>{}) {
                if (seen.insert(s).second) {
                    work.push_back(s);
                }
            }
        }
        return false;
    }

    /// Some instruction assigning `v` can reach `i` by at least one edge.
    auto maybe_assigned_before(const std::string& v, std::size_t i) const -> bool {
        std::set<std::size_t> seen;
        std::vector<std::size_t> work{i};
        while (!work.empty()) {
            auto j = work.back();
            work.pop_back();
            for (auto p : pred_.count(j) ? pred_.at(j) : std::vector<std::size_t>{}) {
                if (!seen.insert(p).second) {
                    continue;
                }
                if (defines(p, v)) {
                    return true;
                }
                work.push_back(p);
            }
        }
        return false;
    }

    void propagate_loans() {
        std::vector<Edge> edges;
        for (std::size_t i = 0; i < n_; ++i) {
            const auto& ins = f_.body[i];
            if (const auto* a = std::get_if<lang::Assign>(&ins)) {
                LangType dt = type(a->dest);
                if (const auto* p = std::get_if<Path>(&a->rv)) {
                    link(type(*p), dt, false, edges);
                } else if (const auto* l = std::get_if<lang::LoanExpr>(&a->rv)) {
                    const auto& lt = ty_.loan_at(i)->lifetime;
                    link(LangType::ref(lt, l->qualifier, type(l->target)), dt, false, edges);
                    for (std::size_t k = 0; k < l->target.ops.size(); ++k) {
                        if (l->target.ops[k].is_deref()) {
                            LangType under = type(l->target.truncated(k));
                            if (under.is_ref()) {
                                edges.emplace_back(under.lifetime, lt);
                            }
                        }
                    }
                } else if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                    for (std::size_t k = 0; k < t->elems.size(); ++k) {
                        if (const auto* p = std::get_if<Path>(&t->elems[k])) {
                            link(type(*p), dt.elems[k], false, edges);
                        }
                    }
                } else if (const auto* b = std::get_if<lang::BoxExpr>(&a->rv)) {
                    if (const auto* p = std::get_if<Path>(&b->operand)) {
                        link(type(*p), dt.pointee(), false, edges);
                    }
                }
            } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
                const auto& callee = tp_.fn(c->callee);
                for (std::size_t k = 0; k < c->args.size(); ++k) {
                    link(type(c->args[k]), rename(callee.params[k].type, i), false, edges);
                }
                link(rename(tp_.types_of(c->callee).return_type, i), type(c->dest), false, edges);
                for (const auto& o : callee.outlives) {
                    auto inst = [&](const std::string& x) {
                        return Lifetime::concrete("@" + std::to_string(i) + ":" + x);
                    };
                    edges.emplace_back(inst(o.longer), inst(o.shorter));
                }
            } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
                link(type(r->operand), ty_.return_type, false, edges);
            }
        }
        for (std::size_t k = 0; k < ty_.loans.size(); ++k) {
            carried_[ty_.loans[k].lifetime].insert(k);
        }
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& [from, to] : edges) {
                auto it = carried_.find(from);
                if (it == carried_.end()) {
                    continue;
                }
                auto src = it->second;
                auto& dst = carried_[to];
                for (auto k : src) {
                    changed = dst.insert(k).second || changed;
                }
            }
        }
    }

    auto carries(const Lifetime& l, std::size_t loan) const -> bool {
        auto it = carried_.find(l);
        return it != carried_.end() && it->second.count(loan) > 0;
    }

    auto loan_live(std::size_t loan, std::size_t i) const -> bool {
        if (i == ty_.loans[loan].instruction) {
            return false;
        }
        for (const auto& [v, t] : ty_.var_types) {
            auto lts = t.lifetimes();
            bool carrier = std::any_of(lts.begin(), lts.end(), [&](const Lifetime& l) { return carries(l, loan); });
            if (carrier && live(v, i)) {
                return true;
            }
        }
        return false;
    }

    using Place = std::pair<Path, std::set<std::size_t>>; // place, instructions of loans followed

    auto places(const Path& p, const std::set<std::size_t>& via) const -> std::vector<Place> {
        std::vector<Place> cur{{Path{p.base}, via}};
        for (std::size_t k = 0; k < p.ops.size(); ++k) {
            std::vector<Place> next;
            const auto& op = p.ops[k];
            LangType under = type(p.truncated(k));
            for (const auto& [place, v] : cur) {
                if (!op.is_deref()) {
                    next.emplace_back(place.field(op.index), v);
                    continue;
                }
                next.emplace_back(place.deref(), v);
                if (!under.is_ref()) {
                    continue;
                }
                for (std::size_t s = 0; s < ty_.loans.size(); ++s) {
                    const auto& site = ty_.loans[s];
                    if (v.count(site.instruction) > 0 || !carries(under.lifetime, s)) {
                        continue;
                    }
                    auto v2 = v;
                    v2.insert(site.instruction);
                    for (auto& inner : places(site.expr.target, v2)) {
                        next.push_back(std::move(inner));
                    }
                }
            }
            cur = std::move(next);
        }
        return cur;
    }

    /// The access touches the loan's target other than through the loan itself.
    auto touches(const Path& access, std::size_t loan) const -> bool {
        const auto idx = ty_.loans[loan].instruction;
        auto targets = places(ty_.loans[loan].expr.target, {});
        for (const auto& [a, va] : places(access, {})) {
            if (va.count(idx) > 0) {
                continue;
            }
            for (const auto& [b, vb] : targets) {
                if (vb.count(idx) == 0 && lang::prefix_related(a, b)) {
                    return true;
                }
            }
        }
        return false;
    }

    void collect(std::size_t i, std::vector<std::pair<Path, std::size_t>>& reads,
                 std::vector<std::pair<Path, std::size_t>>& writes,
                 std::vector<std::pair<Path, std::size_t>>& moves) const {
        auto consume = [&](const Path& p) {
            reads.emplace_back(p, i);
            if (type(p).is_movable()) {
                moves.emplace_back(p, i);
            }
        };
        auto consume_op = [&](const lang::Operand& op) {
            if (const auto* p = std::get_if<Path>(&op)) {
                consume(*p);
            }
        };
        auto write = [&](const Path& d) {
            bool initializing = d.is_var() && !f_.is_param(d.base) && !maybe_assigned_before(d.base, i);
            if (!initializing) {
                writes.emplace_back(d, i);
            }
        };
        const auto& ins = f_.body[i];
        if (const auto* a = std::get_if<lang::Assign>(&ins)) {
            if (const auto* p = std::get_if<Path>(&a->rv)) {
                consume(*p);
            } else if (const auto* l = std::get_if<lang::LoanExpr>(&a->rv)) {
                (l->qualifier == lang::Qualifier::Shared ? reads : writes).emplace_back(l->target, i);
            } else if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                for (const auto& e : t->elems) {
                    consume_op(e);
                }
            } else if (const auto* b = std::get_if<lang::BoxExpr>(&a->rv)) {
                consume_op(b->operand);
            }
            write(a->dest);
        } else if (const auto* br = std::get_if<lang::If>(&ins)) {
            reads.emplace_back(br->cond, i);
        } else if (const auto* c = std::get_if<lang::Call>(&ins)) {
            for (const auto& arg : c->args) {
                consume(arg);
            }
            write(c->dest);
        } else if (const auto* r = std::get_if<lang::Return>(&ins)) {
            consume(r->operand);
        } else if (const auto* d = std::get_if<lang::Drop>(&ins)) {
            if (type(d->operand).is_movable()) {
                moves.emplace_back(d->operand, i);
            }
        }
    }

    auto kills(std::size_t i, const Path& moved) const -> bool {
        const Path* d = dest(f_.body[i]);
        return d != nullptr && d->is_prefix_of(moved);
    }

    /// Enumerates acyclic paths out of `m` looking for one that reaches `i`
    /// without passing an assignment that reinitializes `q`.
    auto move_reaches(const Path& q, std::size_t m, std::size_t i) const -> bool {
        if (kills(m, q)) {
            return false;
        }
        std::set<std::size_t> on_path;
        std::function<bool(std::size_t)> walk = [&](std::size_t j) {
            for (auto s : succ_.count(j) ? succ_.at(j) : std::vector<std::size_t>{}) {
                if (s == i) {
                    return true;
                }
                if (on_path.count(s) > 0 || kills(s, q)) {
                    continue;
                }
                on_path.insert(s);
                bool found = walk(s);
                on_path.erase(s);
                if (found) {
                    return true;
                }
            }
            return false;
        };
        return walk(m);
    }
};

} // namespace

auto oracle_access_errors(const lang::TypedProgram& p, std::size_t max_instructions)
    -> std::optional<std::vector<polonius::AccessErrorDiag>> {
    for (const auto& [name, f] : p.program.functions) {
        if (f.body.size() > max_instructions) {
            return std::nullopt;
        }
    }
    std::vector<polonius::AccessErrorDiag> out;
    for (const auto& [name, f] : p.program.functions) {
        Judge(p, name).errors(out);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.at, a.rule, a.loan, a.path) < std::tie(b.at, b.rule, b.loan, b.path);
    });
    return out;
}

} // namespace ownlab::diffcheck
