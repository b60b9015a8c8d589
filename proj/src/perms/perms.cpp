#include "ownlab/perms.hpp"

#include <json.hpp>

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ownlab::perms {

auto letter(Permission p) -> char {
    switch (p) {
    case Permission::R: return 'R';
    case Permission::W: return 'W';
    case Permission::O: return 'O';
    case Permission::F: return 'F';
    }
    return '?';
}

auto perms_str(const std::set<Permission>& ps) -> std::string {
    std::string s;
    for (auto p : ps) {
        s += letter(p);
    }
    return s;
}

auto to_string(Cause::Kind k) -> std::string_view {
    switch (k) {
    case Cause::Kind::Uninitialized: return "uninitialized";
    case Cause::Kind::Borrowed: return "borrowed";
    case Cause::Kind::Moved: return "moved";
    case Cause::Kind::NotDeclaredMut: return "not-declared-mut";
    case Cause::Kind::BehindRef: return "behind-reference";
    case Cause::Kind::MissingOutlives: return "missing-outlives";
    }
    return "?";
}

auto Cause::str() const -> std::string {
    switch (kind) {
    case Kind::Borrowed: return "borrowed by " + loan->str();
    case Kind::MissingOutlives: return "'" + longer + " :> '" + shorter + " is not declared";
    default: return std::string(to_string(kind));
    }
}

auto to_string(Icon i) -> std::string_view {
    switch (i) {
    case Icon::Birth: return "birth";
    case Icon::BorrowStart: return "borrow-start";
    case Icon::Death: return "death";
    case Icon::Regain: return "regain";
    case Icon::MovedOut: return "moved-out";
    }
    return "?";
}

auto PermissionState::holds(const Path& p, Permission c) const -> bool {
    if (c == Permission::F) {
        auto it = flow.find(p);
        return it != flow.end() && !it->second;
    }
    auto it = has.find(p);
    return it != has.end() && it->second.count(c) > 0;
}

auto PermissionState::shown() const -> std::map<Path, std::set<Permission>> {
    std::map<Path, std::set<Permission>> out;
    for (const auto& p : displayed) {
        auto it = has.find(p);
        if (it != has.end() && !it->second.empty()) {
            out.emplace(p, it->second);
        }
    }
    return out;
}

auto needs_at(const FactBase& fb) -> std::set<Need> {
    std::set<Need> out;
    for (const auto& [p, at] : fb.read_at) {
        out.insert({p, Permission::R, at});
    }
    for (const auto& [p, at] : fb.written_at) {
        out.insert({p, Permission::W, at});
    }
    for (const auto& [p, at] : fb.moved_at) {
        out.insert({p, Permission::O, at});
    }
    for (const auto& fl : fb.flows) {
        out.insert({fl.path, Permission::F, fl.at});
    }
    return out;
}

// ============================================================================
// missing at
// ============================================================================

namespace {

/// (any ref deref, any shared-ref deref) along the path.
auto behind_refs(const lang::FunctionTypes& types, const Path& p) -> std::pair<bool, bool> {
    bool any = false;
    bool shared = false;
    for (std::size_t k = 0; k < p.ops.size(); ++k) {
        if (!p.ops[k].is_deref()) {
            continue;
        }
        const auto* t = types.type_of(p.truncated(k));
        if (t != nullptr && t->is_ref()) {
            any = true;
            shared = shared || t->qualifier == lang::Qualifier::Shared;
        }
    }
    return {any, shared};
}

} // namespace

auto missing_at(const lang::TypedProgram& tp, const FactBase& fb, const Options& opts) -> PermissionStates {
    auto enabled = [&](MissingRule r) { return opts.disabled.count(r) == 0; };
    PermissionStates out;
    for (const auto& [name, f] : tp.program.functions) {
        const auto& aux = fb.aux.at(name);
        const auto& types = tp.types_of(name);
        std::vector<const LoanId*> loans;
        for (const auto& l : fb.loans) {
            if (l.issued.function == name) {
                loans.push_back(&l);
            }
        }
        std::set<Path> flow_paths;
        for (const auto& fl : fb.flows) {
            if (fl.at.function == name) {
                flow_paths.insert(fl.path);
            }
        }

        auto& states = out[name];
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            PermissionState st;
            st.at = {name, i};
            for (const auto& p : aux.tracked) {
                // Lowest priority first; later rules overwrite.
                std::map<Permission, Cause> miss;
                auto set = [&](std::initializer_list<Permission> ps, const Cause& c) {
                    for (auto perm : ps) {
                        miss[perm] = c;
                    }
                };
                if (enabled(MissingRule::Uninitialized) && aux.maybe_uninit[i].count(p.base) > 0) {
                    set({Permission::R, Permission::W, Permission::O}, {Cause::Kind::Uninitialized, {}, {}, {}});
                }
                auto [any_ref, shared_ref] = behind_refs(types, p);
                const auto* decl = f.find_var(p.base);
                if (enabled(MissingRule::NotDeclaredMut) && decl != nullptr && !decl->mut && !any_ref) {
                    set({Permission::W}, {Cause::Kind::NotDeclaredMut, {}, {}, {}});
                }
                if (enabled(MissingRule::BehindRef)) {
                    if (any_ref) {
                        set({Permission::O}, {Cause::Kind::BehindRef, {}, {}, {}});
                    }
                    if (shared_ref) {
                        set({Permission::W}, {Cause::Kind::BehindRef, {}, {}, {}});
                    }
                }
                // Loans are sorted; iterate backwards so the earliest loan wins.
                for (auto it = loans.rbegin(); it != loans.rend(); ++it) {
                    const auto& loan = **it;
                    if (!fb.is_live(loan, st.at) || !facts::conflicts_with_loan(fb, p, loan)) {
                        continue;
                    }
                    Cause c{Cause::Kind::Borrowed, loan, {}, {}};
                    if (enabled(MissingRule::WriteOwnWhileLoaned)) {
                        set({Permission::W, Permission::O}, c);
                    }
                    if (enabled(MissingRule::ReadWhileUnique) && loan.qualifier == lang::Qualifier::Unique) {
                        set({Permission::R}, c);
                    }
                }
                if (enabled(MissingRule::Moved) && fb.moved_before.count({p, st.at}) > 0) {
                    set({Permission::R, Permission::W, Permission::O}, {Cause::Kind::Moved, {}, {}, {}});
                }
                auto& has = st.has[p];
                for (auto perm : kRWO) {
                    if (miss.count(perm) == 0) {
                        has.insert(perm);
                    }
                }
                if (!miss.empty()) {
                    st.missing[p] = std::move(miss);
                }
                if (aux.live_in[i].count(p.base) > 0) {
                    st.displayed.insert(p);
                }
            }
            for (const auto& p : flow_paths) {
                st.flow[p] = std::nullopt;
            }
            if (enabled(MissingRule::Flow)) {
                for (const auto& fl : fb.flows) {
                    if (fl.at == st.at && !facts::declared_outlives_holds(fb, name, fl.longer, fl.shorter)) {
                        auto& slot = st.flow[fl.path];
                        if (!slot) {
                            slot = Cause{Cause::Kind::MissingOutlives, {}, fl.longer, fl.shorter};
                        }
                    }
                }
            }
            states.push_back(std::move(st));
        }
    }
    return out;
}

auto PermissionError::str() const -> std::string {
    return at.str() + ": " + path.str() + " needs " + letter(perm) + " but it is missing (" + cause.str() + ")";
}

auto permission_errors(const FactBase& fb, const PermissionStates& states) -> std::vector<PermissionError> {
    std::vector<PermissionError> out;
    for (const auto& need : needs_at(fb)) {
        const auto& st = states.at(need.at.function).at(need.at.index);
        if (need.perm == Permission::F) {
            auto it = st.flow.find(need.path);
            if (it != st.flow.end() && it->second) {
                out.push_back({need.path, need.perm, need.at, *it->second});
            }
            continue;
        }
        auto it = st.missing.find(need.path);
        if (it == st.missing.end()) {
            continue;
        }
        auto c = it->second.find(need.perm);
        if (c != it->second.end()) {
            out.push_back({need.path, need.perm, need.at, c->second});
        }
    }
    std::sort(out.begin(), out.end(), [](const PermissionError& a, const PermissionError& b) {
        return std::tie(a.at, a.path, a.perm) < std::tie(b.at, b.path, b.perm);
    });
    return out;
}

// ============================================================================
// Steps
// ============================================================================

auto PermStep::label() const -> std::string {
    if (edge) {
        return from.function + ": edge " + std::to_string(from.index) + " -> " + std::to_string(to.index);
    }
    return from.function + ": after " + std::to_string(from.index);
}

namespace {

auto cause_of(const PermissionState& st, const Path& p, Permission c) -> std::optional<Cause::Kind> {
    auto it = st.missing.find(p);
    if (it == st.missing.end()) {
        return std::nullopt;
    }
    auto m = it->second.find(c);
    if (m == it->second.end()) {
        return std::nullopt;
    }
    return m->second.kind;
}

auto diff(const PermissionState& a, const PermissionState& b, bool edge) -> PermStep {
    PermStep step;
    step.from = a.at;
    step.to = b.at;
    step.edge = edge;
    auto sa = a.shown();
    auto sb = b.shown();
    std::set<Path> paths;
    for (const auto& [p, _] : sa) {
        paths.insert(p);
    }
    for (const auto& [p, _] : sb) {
        paths.insert(p);
    }
    for (const auto& p : paths) {
        std::set<Permission> before = sa.count(p) ? sa[p] : std::set<Permission>{};
        std::set<Permission> after = sb.count(p) ? sb[p] : std::set<Permission>{};
        PathDelta d;
        d.path = p;
        std::set_difference(after.begin(), after.end(), before.begin(), before.end(),
                            std::inserter(d.gained, d.gained.end()));
        std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                            std::inserter(d.lost, d.lost.end()));
        if (d.gained.empty() && d.lost.empty()) {
            continue;
        }
        bool entered = a.displayed.count(p) == 0 && b.displayed.count(p) > 0;
        bool left = a.displayed.count(p) > 0 && b.displayed.count(p) == 0;
        if (left) {
            d.icon = Icon::Death;
        } else if (entered) {
            d.icon = Icon::Birth;
        } else if (!d.lost.empty()) {
            d.icon = Icon::Death;
            for (auto c : d.lost) {
                auto k = cause_of(b, p, c);
                if (k == Cause::Kind::Moved) {
                    d.icon = Icon::MovedOut;
                    break;
                }
                if (k == Cause::Kind::Borrowed) {
                    d.icon = Icon::BorrowStart;
                }
            }
        } else {
            d.icon = Icon::Birth;
            for (auto c : d.gained) {
                if (cause_of(a, p, c) == Cause::Kind::Borrowed) {
                    d.icon = Icon::Regain;
                }
            }
        }
        step.deltas.push_back(std::move(d));
    }
    return step;
}

} // namespace

auto steps(const lang::FunctionDef& f, const FunctionStates& states, const std::optional<std::vector<Boundary>>& boundaries)
    -> std::vector<PermStep> {
    std::vector<PermStep> out;
    if (!boundaries) {
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            bool edge = std::holds_alternative<lang::If>(f.body[i]);
            for (auto s : lang::successors(f.body, i)) {
                out.push_back(diff(states.at(i), states.at(s), edge));
            }
        }
        return out;
    }
    std::size_t prev_to = 0;
    for (std::size_t k = 0; k < boundaries->size(); ++k) {
        auto [from, to] = (*boundaries)[k];
        if (from >= to) {
            throw std::invalid_argument("step boundary " + std::to_string(from) + ".." + std::to_string(to) +
                                        " must go forward");
        }
        if (to >= f.body.size()) {
            throw std::invalid_argument("step boundary " + std::to_string(to) + " is out of range");
        }
        if (k > 0 && from < prev_to) {
            throw std::invalid_argument("step boundaries must be sorted and must not overlap");
        }
        prev_to = to;
        bool edge = std::holds_alternative<lang::If>(f.body[from]);
        out.push_back(diff(states.at(from), states.at(to), edge));
    }
    return out;
}

auto apply(std::map<Path, std::set<Permission>> shown, const PermStep& step) -> std::map<Path, std::set<Permission>> {
    for (const auto& d : step.deltas) {
        auto& s = shown[d.path];
        for (auto c : d.lost) {
            s.erase(c);
        }
        s.insert(d.gained.begin(), d.gained.end());
        if (s.empty()) {
            shown.erase(d.path);
        }
    }
    return shown;
}

// ============================================================================
// Expectations
// ============================================================================

auto ExpectationMark::all_satisfied() const -> bool {
    return std::all_of(satisfied.begin(), satisfied.end(), [](const auto& kv) { return kv.second; });
}

auto expectations(const FactBase& fb, const PermissionStates& states, const StyleOverrides& overrides,
                  MarkStyle default_style) -> std::vector<ExpectationMark> {
    std::map<std::pair<InstructionId, Path>, ExpectationMark> grouped;
    for (const auto& need : needs_at(fb)) {
        auto key = std::make_pair(need.at, need.path);
        auto& m = grouped[key];
        m.at = need.at;
        m.path = need.path;
        m.expected.insert(need.perm);
        const auto& st = states.at(need.at.function).at(need.at.index);
        m.satisfied[need.perm] = st.holds(need.path, need.perm);
        auto o = overrides.find(key);
        m.style = o == overrides.end() ? default_style : o->second;
    }
    std::vector<ExpectationMark> out;
    for (auto& [_, m] : grouped) {
        out.push_back(std::move(m));
    }
    return out;
}

// ============================================================================
// Records
// ============================================================================

namespace {

auto perm_array(const std::set<Permission>& ps) -> nlohmann::json {
    auto arr = nlohmann::json::array();
    for (auto p : ps) {
        arr.push_back(std::string(1, letter(p)));
    }
    return arr;
}

} // namespace

auto state_records(const PermissionStates& states) -> std::string {
    std::ostringstream os;
    for (const auto& [fn, fs] : states) {
        for (const auto& st : fs) {
            // Sorted by path text within an instruction.
            std::map<std::string, const Path*> by_text;
            for (const auto& [p, _] : st.has) {
                by_text[p.str()] = &p;
            }
            for (const auto& [text, p] : by_text) {
                nlohmann::json j;
                j["schema"] = 1;
                j["record"] = "permission-state";
                j["function"] = fn;
                j["instruction"] = st.at.index;
                j["path"] = text;
                j["displayed"] = st.displayed.count(*p) > 0;
                j["has"] = perm_array(st.has.at(*p));
                auto missing = nlohmann::json::object();
                if (auto it = st.missing.find(*p); it != st.missing.end()) {
                    for (const auto& [perm, cause] : it->second) {
                        missing[std::string(1, letter(perm))] = cause.str();
                    }
                }
                j["missing"] = missing;
                if (auto it = st.flow.find(*p); it != st.flow.end()) {
                    j["flow"] = it->second ? nlohmann::json(it->second->str()) : nlohmann::json("F");
                }
                os << j.dump() << "\n";
            }
        }
    }
    return os.str();
}

auto step_records(const std::string& function, const std::vector<PermStep>& steps) -> std::string {
    std::ostringstream os;
    for (const auto& s : steps) {
        nlohmann::json j;
        j["schema"] = 1;
        j["record"] = "permission-step";
        j["function"] = function;
        j["from"] = s.from.index;
        j["to"] = s.to.index;
        j["edge"] = s.edge;
        auto deltas = nlohmann::json::array();
        for (const auto& d : s.deltas) {
            deltas.push_back({{"path", d.path.str()},
                              {"gained", perm_array(d.gained)},
                              {"lost", perm_array(d.lost)},
                              {"icon", to_string(d.icon)}});
        }
        j["deltas"] = deltas;
        os << j.dump() << "\n";
    }
    return os.str();
}

auto mark_records(const std::vector<ExpectationMark>& marks) -> std::string {
    std::ostringstream os;
    for (const auto& m : marks) {
        nlohmann::json j;
        j["schema"] = 1;
        j["record"] = "expectation";
        j["function"] = m.at.function;
        j["instruction"] = m.at.index;
        j["path"] = m.path.str();
        auto sat = nlohmann::json::object();
        for (const auto& [perm, ok] : m.satisfied) {
            sat[std::string(1, letter(perm))] = ok;
        }
        j["expected"] = sat;
        j["style"] = m.style == MarkStyle::Letter ? "letter" : "circle";
        os << j.dump() << "\n";
    }
    return os.str();
}

auto error_records(const std::vector<PermissionError>& errors) -> std::string {
    std::ostringstream os;
    for (const auto& e : errors) {
        nlohmann::json j;
        j["schema"] = 1;
        j["model"] = "perms";
        j["rule"] = "permission-error";
        j["function"] = e.at.function;
        j["instruction"] = e.at.index;
        j["path"] = e.path.str();
        j["permission"] = std::string(1, letter(e.perm));
        j["cause"] = to_string(e.cause.kind);
        if (e.cause.loan) {
            j["loan"] = {{"instruction", e.cause.loan->issued.index}, {"target", e.cause.loan->target.str()}};
        }
        j["message"] = e.str();
        os << j.dump() << "\n";
    }
    return os.str();
}

} // namespace ownlab::perms
