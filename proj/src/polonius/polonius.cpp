#include "ownlab/polonius.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <sstream>

namespace ownlab::polonius {

auto to_string(Rule r) -> std::string_view {
    return r == Rule::BorrowConflict ? "borrow-conflict" : "move-conflict";
}

auto to_string(SubRule r) -> std::string_view {
    switch (r) {
    case SubRule::ReadInvalid: return "read-invalid";
    case SubRule::WriteInvalid: return "write-invalid";
    case SubRule::MoveInvalid: return "move-invalid";
    }
    return "?";
}

auto AccessErrorDiag::str() const -> std::string {
    if (rule == Rule::BorrowConflict) {
        std::string verb = *sub == SubRule::ReadInvalid ? "read" : *sub == SubRule::WriteInvalid ? "write" : "move";
        return at.str() + ": borrow conflict: " + verb + " of " + path.str() + " invalidates live loan " +
               loan->str();
    }
    return at.str() + ": move conflict: " + path.str() + " is read after being moved";
}

auto SubsetErrorDiag::str() const -> std::string {
    std::string s = at.str() + ": lifetime error: '" + longer + " must outlive '" + shorter;
    if (path) {
        s += " (because " + path->str() + " flows here)";
    }
    return s;
}

auto invalidations(const FactBase& fb) -> std::set<Invalidation> {
    std::set<Invalidation> out;
    auto check = [&](const std::set<facts::PathFact>& rel, SubRule rule, bool unique_only) {
        for (const auto& [p, at] : rel) {
            for (const auto& loan : fb.loans) {
                if (loan.issued.function != at.function) {
                    continue;
                }
                if (unique_only && loan.qualifier != lang::Qualifier::Unique) {
                    continue;
                }
                if (facts::conflicts_with_loan(fb, p, loan)) {
                    out.insert({loan, at, rule, p});
                }
            }
        }
    };
    check(fb.read_at, SubRule::ReadInvalid, true);
    check(fb.written_at, SubRule::WriteInvalid, false);
    check(fb.moved_at, SubRule::MoveInvalid, false);
    return out;
}

auto access_errors(const FactBase& fb) -> std::vector<AccessErrorDiag> {
    std::map<std::pair<InstructionId, LoanId>, Invalidation> chosen;
    for (const auto& inv : invalidations(fb)) {
        if (!fb.is_live(inv.loan, inv.at)) {
            continue;
        }
        auto key = std::make_pair(inv.at, inv.loan);
        auto it = chosen.find(key);
        // Set order is by rule then path, so the first seen wins.
        if (it == chosen.end()) {
            chosen.emplace(key, inv);
        }
    }
    std::vector<AccessErrorDiag> out;
    for (const auto& [key, inv] : chosen) {
        out.push_back({Rule::BorrowConflict, inv.at, inv.loan, inv.path, inv.rule});
    }
    for (const auto& [p, at] : fb.read_at) {
        if (fb.moved_before.count({p, at}) > 0) {
            out.push_back({Rule::MoveConflict, at, std::nullopt, p, std::nullopt});
        }
    }
    std::sort(out.begin(), out.end(), [](const AccessErrorDiag& a, const AccessErrorDiag& b) {
        return std::tie(a.at, a.rule, a.loan, a.path) < std::tie(b.at, b.rule, b.loan, b.path);
    });
    return out;
}

auto outlives_closure(const std::vector<lang::Outlives>& declared, const std::vector<std::string>& lifetimes)
    -> std::set<std::pair<std::string, std::string>> {
    std::set<std::pair<std::string, std::string>> rel;
    for (const auto& l : lifetimes) {
        rel.insert({l, l});
    }
    for (const auto& o : declared) {
        rel.insert({o.longer, o.shorter});
        rel.insert({o.longer, o.longer});
        rel.insert({o.shorter, o.shorter});
    }
    bool changed = true;
    while (changed) {
        changed = false;
        auto snapshot = rel;
        for (const auto& [a, b] : snapshot) {
            for (const auto& [c, d] : snapshot) {
                if (b == c && rel.insert({a, d}).second) {
                    changed = true;
                }
            }
        }
    }
    return rel;
}

auto subset_errors(const FactBase& fb, const lang::FunctionDef& sig) -> std::vector<SubsetErrorDiag> {
    auto closure = outlives_closure(sig.outlives, sig.lifetime_params);
    std::vector<SubsetErrorDiag> out;
    for (const auto& fl : fb.flows) {
        if (fl.at.function != sig.name) {
            continue;
        }
        if (closure.count({fl.longer, fl.shorter}) == 0) {
            out.push_back({fl.longer, fl.shorter, fl.at, fl.path});
        }
    }
    std::sort(out.begin(), out.end(), [](const SubsetErrorDiag& a, const SubsetErrorDiag& b) {
        return std::tie(a.at, a.longer, a.shorter, a.path) < std::tie(b.at, b.longer, b.shorter, b.path);
    });
    return out;
}

auto subset_errors(const FactBase& fb, const lang::Program& p) -> std::vector<SubsetErrorDiag> {
    std::vector<SubsetErrorDiag> out;
    for (const auto& [name, f] : p.functions) {
        auto part = subset_errors(fb, f);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

auto records(const std::vector<AccessErrorDiag>& access, const std::vector<SubsetErrorDiag>& subset) -> std::string {
    std::ostringstream os;
    for (const auto& d : access) {
        nlohmann::json j;
        j["schema"] = 1;
        j["model"] = "polonius";
        j["rule"] = to_string(d.rule);
        j["function"] = d.at.function;
        j["instruction"] = d.at.index;
        j["path"] = d.path.str();
        if (d.loan) {
            j["loan"] = {{"instruction", d.loan->issued.index},
                         {"target", d.loan->target.str()},
                         {"qualifier", lang::to_string(d.loan->qualifier)}};
        }
        if (d.sub) {
            j["invalidation"] = to_string(*d.sub);
        }
        j["message"] = d.str();
        os << j.dump() << "\n";
    }
    for (const auto& d : subset) {
        nlohmann::json j;
        j["schema"] = 1;
        j["model"] = "polonius";
        j["rule"] = "lifetime-conflict";
        j["function"] = d.at.function;
        j["instruction"] = d.at.index;
        j["longer"] = d.longer;
        j["shorter"] = d.shorter;
        if (d.path) {
            j["path"] = d.path->str();
        }
        j["message"] = d.str();
        os << j.dump() << "\n";
    }
    return os.str();
}

} // namespace ownlab::polonius
