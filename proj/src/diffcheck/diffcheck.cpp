#include "ownlab/diffcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace ownlab::diffcheck {

auto to_string(Property p) -> std::string_view {
    switch (p) {
    case Property::Theorem: return "theorem";
    case Property::Soundness: return "soundness";
    case Property::OracleEquivalence: return "oracle-equivalence";
    }
    return "?";
}

auto analyze(const lang::TypedProgram& p, const perms::Options& opts) -> Verdicts {
    auto fb = facts::build_facts(p);
    Verdicts v;
    v.access = polonius::access_errors(fb);
    v.subset = polonius::subset_errors(fb, p.program);
    v.permission = perms::permission_errors(fb, perms::missing_at(p, fb, opts));
    return v;
}

auto CounterexampleReport::to_own() const -> std::string {
    std::ostringstream os;
    os << "// property: " << to_string(property) << "\n";
    if (!note.empty()) {
        os << "// " << note << "\n";
    }
    for (const auto& d : verdicts.access) {
        os << "// polonius: " << d.str() << "\n";
    }
    for (const auto& d : verdicts.subset) {
        os << "// polonius: " << d.str() << "\n";
    }
    for (const auto& e : verdicts.permission) {
        os << "// perms: " << e.str() << "\n";
    }
    if (outcome) {
        os << "// run: " << interp::to_string(outcome->kind);
        if (outcome->ub) {
            os << " " << outcome->ub->str();
        }
        os << "\n";
    }
    os << lang::pretty_print(program);
    return os.str();
}

namespace {

auto monomorphic(const lang::Program& p) -> bool {
    for (const auto& [name, f] : p.functions) {
        if (!f.lifetime_params.empty()) {
            return false;
        }
        for (const auto* list : {&f.params, &f.locals}) {
            for (const auto& d : *list) {
                for (const auto& l : d.type.lifetimes()) {
                    if (l.is_abstract()) {
                        return false;
                    }
                }
            }
        }
        if (f.ret && f.ret->mentions_ref()) {
            return false;
        }
    }
    return true;
}

auto violation(Property prop, const lang::TypedProgram& p, Verdicts v, std::optional<interp::Outcome> outcome,
               std::string note) -> Check {
    if (outcome) {
        outcome->trace.clear();
    }
    return {Check::Kind::Violation, CounterexampleReport{prop, p.program, std::move(v), std::move(outcome),
                                                         std::move(note)}};
}

auto theorem_of(const lang::TypedProgram& p, const Verdicts& v) -> Check {
    if (!v.access.empty() && v.permission.empty()) {
        return violation(Property::Theorem, p, v, std::nullopt, "access errors without permission errors");
    }
    return {};
}

auto soundness_of(const lang::TypedProgram& p, const Verdicts& v, const interp::Outcome& out) -> Check {
    if (!v.access.empty() || !v.permission.empty()) {
        return {};
    }
    if (out.kind == interp::Outcome::Kind::Ub) {
        return violation(Property::Soundness, p, v, out, "accepted by both checkers but reaches UB");
    }
    if (out.kind == interp::Outcome::Kind::LimitExceeded) {
        return {Check::Kind::Inconclusive, std::nullopt};
    }
    return {};
}

auto oracle_of(const lang::TypedProgram& p, const Verdicts& v,
               const std::vector<polonius::AccessErrorDiag>& expected) -> Check {
    if (v.access != expected) {
        std::string note = "oracle expects " + std::to_string(expected.size()) + " access errors:";
        for (const auto& d : expected) {
            note += "\n// oracle: " + d.str();
        }
        return violation(Property::OracleEquivalence, p, v, std::nullopt, note);
    }
    return {};
}

} // namespace

auto check_theorem(const lang::TypedProgram& p, const perms::Options& opts) -> Check {
    return theorem_of(p, analyze(p, opts));
}

auto check_soundness(const lang::TypedProgram& p, interp::Limits limits, const perms::Options& opts) -> Check {
    if (!monomorphic(p.program)) {
        return {Check::Kind::NotApplicable, std::nullopt};
    }
    auto v = analyze(p, opts);
    if (!v.access.empty() || !v.permission.empty()) {
        return {};
    }
    return soundness_of(p, v, interp::run(p, limits));
}

auto check_oracle(const lang::TypedProgram& p) -> Check {
    auto expected = oracle_access_errors(p);
    if (!expected) {
        return {Check::Kind::NotApplicable, std::nullopt};
    }
    return oracle_of(p, analyze(p), *expected);
}

auto violates(Property prop, const perms::Options& opts, interp::Limits limits) -> Violates {
    return [=](const lang::Program& p) {
        if (!lang::well_formed(p).empty()) {
            return false;
        }
        auto tc = lang::type_check(p);
        if (!tc.ok()) {
            return false;
        }
        Check c;
        switch (prop) {
        case Property::Theorem: c = check_theorem(*tc.typed, opts); break;
        case Property::Soundness: c = check_soundness(*tc.typed, limits, opts); break;
        case Property::OracleEquivalence: c = check_oracle(*tc.typed); break;
        }
        return c.kind == Check::Kind::Violation;
    };
}

// ============================================================================
// Shrinking
// ============================================================================

namespace {

auto mentions(const lang::FunctionDef& f, const std::string& var) -> bool {
    for (const auto& ins : f.body) {
        for (const auto& p : lang::paths_of(ins)) {
            if (p.base == var) {
                return true;
            }
        }
    }
    return false;
}

auto leaf_constant(const lang::LangType& t) -> std::optional<lang::Constant> {
    if (t.kind == lang::LangType::Kind::U32) {
        return lang::Constant::number(0);
    }
    if (t.kind == lang::LangType::Kind::Bool) {
        return lang::Constant::boolean(false);
    }
    return std::nullopt;
}

/// Every program one shrink step away, roughly largest reduction first.
auto candidates(const lang::Program& p) -> std::vector<lang::Program> {
    std::vector<lang::Program> out;
    std::set<std::string> called;
    for (const auto& [name, f] : p.functions) {
        for (const auto& ins : f.body) {
            if (const auto* c = std::get_if<lang::Call>(&ins)) {
                called.insert(c->callee);
            }
        }
    }
    for (const auto& [name, f] : p.functions) {
        if (name != lang::kEntryFunction && called.count(name) == 0) {
            auto q = p;
            q.functions.erase(name);
            out.push_back(std::move(q));
        }
    }
    for (const auto& [name, f] : p.functions) {
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            auto q = p;
            auto& body = q.functions.at(name).body;
            body.erase(body.begin() + static_cast<std::ptrdiff_t>(i));
            for (auto& ins : body) {
                if (auto* br = std::get_if<lang::If>(&ins)) {
                    for (auto* t : {&br->then_target, &br->else_target}) {
                        if (*t > i) {
                            --*t;
                        }
                    }
                }
            }
            out.push_back(std::move(q));
        }
    }
    for (const auto& [name, f] : p.functions) {
        for (std::size_t k = 0; k < f.locals.size(); ++k) {
            if (!mentions(f, f.locals[k].name)) {
                auto q = p;
                auto& locals = q.functions.at(name).locals;
                locals.erase(locals.begin() + static_cast<std::ptrdiff_t>(k));
                out.push_back(std::move(q));
            }
        }
    }
    for (const auto& [name, f] : p.functions) {
        auto vars = [&] {
            std::map<std::string, lang::LangType> m;
            for (const auto* list : {&f.params, &f.locals}) {
                for (const auto& d : *list) {
                    m[d.name] = d.type;
                }
            }
            return m;
        }();
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            if (const auto* br = std::get_if<lang::If>(&f.body[i])) {
                if (br->then_target != br->else_target) {
                    for (auto t : {br->then_target, br->else_target}) {
                        auto q = p;
                        auto& nb = std::get<lang::If>(q.functions.at(name).body[i]);
                        nb.then_target = nb.else_target = t;
                        out.push_back(std::move(q));
                    }
                }
                continue;
            }
            const auto* a = std::get_if<lang::Assign>(&f.body[i]);
            if (a == nullptr || std::holds_alternative<lang::Constant>(a->rv)) {
                continue;
            }
            if (auto ty = lang::resolve_path_type(vars, a->dest)) {
                if (auto c = leaf_constant(*ty)) {
                    auto q = p;
                    std::get<lang::Assign>(q.functions.at(name).body[i]).rv = *c;
                    out.push_back(std::move(q));
                }
            }
            auto simplify_operand = [&](lang::Operand& op) {
                if (const auto* path = std::get_if<lang::Path>(&op)) {
                    if (auto ty = lang::resolve_path_type(vars, *path)) {
                        if (auto c = leaf_constant(*ty)) {
                            op = *c;
                            return true;
                        }
                    }
                }
                return false;
            };
            if (const auto* t = std::get_if<lang::TupleExpr>(&a->rv)) {
                for (std::size_t k = 0; k < t->elems.size(); ++k) {
                    auto q = p;
                    auto& nt = std::get<lang::TupleExpr>(std::get<lang::Assign>(q.functions.at(name).body[i]).rv);
                    if (simplify_operand(nt.elems[k])) {
                        out.push_back(std::move(q));
                    }
                }
            } else if (std::holds_alternative<lang::BoxExpr>(a->rv)) {
                auto q = p;
                auto& nb = std::get<lang::BoxExpr>(std::get<lang::Assign>(q.functions.at(name).body[i]).rv);
                if (simplify_operand(nb.operand)) {
                    out.push_back(std::move(q));
                }
            }
        }
    }
    return out;
}

} // namespace

auto shrink(const lang::Program& p, const Violates& violated) -> lang::Program {
    if (!violated(p)) {
        throw std::invalid_argument("shrink: the program does not violate the property");
    }
    lang::Program cur = p;
    bool progress = true;
    while (progress) {
        progress = false;
        for (auto& cand : candidates(cur)) {
            if (violated(cand)) {
                cur = std::move(cand);
                progress = true;
                break;
            }
        }
    }
    return cur;
}

// ============================================================================
// Campaigns
// ============================================================================

auto CampaignReport::inconclusive_rate() const -> double {
    return soundness_checked == 0 ? 0.0 : static_cast<double>(inconclusive) / static_cast<double>(soundness_checked);
}

auto CampaignReport::summary() const -> std::string {
    std::ostringstream os;
    os << "programs generated:        " << generated << "\n"
       << "accepted by both:          " << accepted_by_both << "\n"
       << "rejected by both:          " << rejected_by_both << "\n"
       << "rejected by perms only:    " << rejected_by_perms_only << "\n"
       << "rejected by polonius only: " << rejected_by_polonius_only << "\n";
    if (soundness_checked > 0) {
        os << "executed (accepted):       " << soundness_checked << "\n"
           << "inconclusive (step limit): " << inconclusive << " (" << std::fixed << std::setprecision(2)
           << 100.0 * inconclusive_rate() << "%)\n"
           << "rejected but terminating:  " << incomplete << "\n";
    }
    if (oracle_checked > 0) {
        os << "oracle comparisons:        " << oracle_checked << "\n";
    }
    os << "violations:                " << violations.size() << "\n";
    for (const auto& v : violations) {
        os << "\n" << v.to_own();
    }
    return os.str();
}

auto CampaignReport::records() const -> std::string {
    std::ostringstream os;
    nlohmann::json s;
    s["schema"] = 1;
    s["record"] = "campaign";
    s["generated"] = generated;
    s["accepted_by_both"] = accepted_by_both;
    s["rejected_by_both"] = rejected_by_both;
    s["rejected_by_perms_only"] = rejected_by_perms_only;
    s["rejected_by_polonius_only"] = rejected_by_polonius_only;
    s["soundness_checked"] = soundness_checked;
    s["inconclusive"] = inconclusive;
    s["oracle_checked"] = oracle_checked;
    s["incomplete"] = incomplete;
    s["violations"] = violations.size();
    os << s.dump() << "\n";
    for (const auto& v : violations) {
        nlohmann::json j;
        j["schema"] = 1;
        j["record"] = "violation";
        j["property"] = to_string(v.property);
        j["program"] = v.to_own();
        os << j.dump() << "\n";
    }
    for (const auto& p : incompleteness_catalog) {
        nlohmann::json j;
        j["schema"] = 1;
        j["record"] = "incomplete";
        j["program"] = lang::pretty_print(p);
        os << j.dump() << "\n";
    }
    return os.str();
}

auto campaign(const FuzzConfig& cfg, const std::vector<Property>& properties, std::size_t count,
              interp::Limits limits) -> CampaignReport {
    CampaignReport r;
    auto wants = [&](Property p) { return std::find(properties.begin(), properties.end(), p) != properties.end(); };
    auto record = [&](Check c, Property prop) {
        if (c.kind != Check::Kind::Violation) {
            return;
        }
        auto small = shrink(c.report->program, violates(prop, {}, limits));
        auto tc = lang::type_check(small);
        auto again = prop == Property::Theorem     ? check_theorem(*tc.typed)
                     : prop == Property::Soundness ? check_soundness(*tc.typed, limits)
                                                   : check_oracle(*tc.typed);
        r.violations.push_back(std::move(*again.report));
    };
    for (std::size_t k = 0; k < count; ++k) {
        FuzzConfig one = cfg;
        one.seed = cfg.seed + k;
        auto prog = generate_program(one);
        auto tc = lang::type_check(prog);
        const auto& tp = *tc.typed;
        ++r.generated;
        auto v = analyze(tp);
        const bool pol = v.polonius_rejects();
        const bool per = v.perms_rejects();
        if (pol && per) {
            ++r.rejected_by_both;
        } else if (per) {
            ++r.rejected_by_perms_only;
        } else if (pol) {
            ++r.rejected_by_polonius_only;
        } else {
            ++r.accepted_by_both;
        }
        if (wants(Property::Theorem)) {
            record(theorem_of(tp, v), Property::Theorem);
        }
        if (wants(Property::Soundness) && monomorphic(prog) && (pol == per)) {
            auto out = interp::run(tp, limits);
            if (!pol) {
                ++r.soundness_checked;
                auto c = soundness_of(tp, v, out);
                if (c.kind == Check::Kind::Inconclusive) {
                    ++r.inconclusive;
                }
                record(std::move(c), Property::Soundness);
            } else if (out.kind == interp::Outcome::Kind::Terminated) {
                ++r.incomplete;
                if (r.incompleteness_catalog.size() < r.catalog_limit) {
                    r.incompleteness_catalog.push_back(prog);
                }
            }
        }
        if (wants(Property::OracleEquivalence)) {
            if (auto expected = oracle_access_errors(tp)) {
                ++r.oracle_checked;
                record(oracle_of(tp, v, *expected), Property::OracleEquivalence);
            }
        }
    }
    return r;
}

} // namespace ownlab::diffcheck
