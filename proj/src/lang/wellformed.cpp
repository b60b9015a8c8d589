#include "ownlab/lang.hpp"

#include <algorithm>
#include <functional>

namespace ownlab::lang {
namespace {

auto diag(const std::string& code, const std::string& msg, const std::string& fn,
          std::optional<std::size_t> idx = std::nullopt) -> Diagnostic {
    return {code, msg, fn, idx, 0, 0};
}

void check_type_lifetimes(const FunctionDef& f, const LangType& t, const std::string& where,
                          std::vector<Diagnostic>& out) {
    for (const auto& l : t.lifetimes()) {
        if (l.is_abstract() &&
            std::find(f.lifetime_params.begin(), f.lifetime_params.end(), l.name) == f.lifetime_params.end()) {
            out.push_back(diag("undeclared-lifetime", "abstract lifetime '" + l.name + " in " + where +
                                                          " is not declared by the signature",
                               f.name));
        }
    }
}

void check_cfg(const FunctionDef& f, std::vector<Diagnostic>& out) {
    const auto n = f.body.size();
    if (n == 0) {
        out.push_back(diag("empty-body", "function body is empty", f.name));
        return;
    }
    bool targets_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ins = f.body[i];
        if (const auto* br = std::get_if<If>(&ins)) {
            for (auto t : {br->then_target, br->else_target}) {
                if (t >= n) {
                    out.push_back(diag("target-out-of-range",
                                       "branch target out of range: " + std::to_string(t) + " (body has " +
                                           std::to_string(n) + " instructions)",
                                       f.name, i));
                    targets_ok = false;
                }
            }
        } else if (!std::holds_alternative<Return>(ins) && i + 1 == n) {
            out.push_back(diag("missing-return", "missing return: control falls off the end of the body", f.name, i));
            targets_ok = false;
        }
    }
    if (!targets_ok) {
        return;
    }
    // Every instruction reachable from entry must be able to reach a Return.
    std::vector<bool> reachable(n, false);
    std::vector<std::size_t> stack{0};
    reachable[0] = true;
    while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        for (auto s : successors(f.body, i)) {
            if (!reachable[s]) {
                reachable[s] = true;
                stack.push_back(s);
            }
        }
    }
    std::vector<bool> exits(n, false);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (exits[i]) {
                continue;
            }
            bool e = std::holds_alternative<Return>(f.body[i]);
            for (auto s : successors(f.body, i)) {
                e = e || exits[s];
            }
            if (e) {
                exits[i] = true;
                changed = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (reachable[i] && !exits[i]) {
            out.push_back(diag("no-return", "no return is reachable from this instruction", f.name, i));
            break;
        }
    }
}

} // namespace

auto well_formed(const Program& p) -> std::vector<Diagnostic> {
    std::vector<Diagnostic> out;
    const auto* main_fn = p.find(kEntryFunction);
    if (main_fn == nullptr) {
        out.push_back(diag("missing-main", "program has no main function", ""));
    } else if (!main_fn->params.empty()) {
        out.push_back(diag("main-params", "main must not take parameters", std::string(kEntryFunction)));
    }

    for (const auto& [name, f] : p.functions) {
        if (name != f.name) {
            out.push_back(diag("name-mismatch", "function registered as " + name + " is named " + f.name, name));
        }
        std::set<std::string> seen;
        for (const auto* list : {&f.params, &f.locals}) {
            for (const auto& d : *list) {
                if (!seen.insert(d.name).second) {
                    out.push_back(diag("duplicate-name", "duplicate local name " + d.name, f.name));
                }
                check_type_lifetimes(f, d.type, "declaration of " + d.name, out);
            }
        }
        std::set<std::string> lts;
        for (const auto& l : f.lifetime_params) {
            if (!lts.insert(l).second) {
                out.push_back(diag("duplicate-lifetime", "duplicate lifetime parameter '" + l, f.name));
            }
        }
        for (const auto& o : f.outlives) {
            for (const auto& l : {o.longer, o.shorter}) {
                if (lts.count(l) == 0) {
                    out.push_back(diag("undeclared-lifetime",
                                       "outlives constraint mentions undeclared lifetime '" + l, f.name));
                }
            }
        }
        if (f.ret) {
            check_type_lifetimes(f, *f.ret, "return type", out);
        }
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            for (const auto& path : paths_of(f.body[i])) {
                if (seen.count(path.base) == 0) {
                    out.push_back(diag("unknown-identifier", "unknown identifier " + path.base, f.name, i));
                }
            }
            if (const auto* c = std::get_if<Call>(&f.body[i])) {
                if (p.find(c->callee) == nullptr) {
                    out.push_back(diag("unknown-function", "call to unknown function " + c->callee, f.name, i));
                } else if (c->callee == kEntryFunction) {
                    out.push_back(diag("recursion", "main cannot be called", f.name, i));
                }
            }
        }
        check_cfg(f, out);
    }

    // Call graph must be acyclic.
    std::map<std::string, int> color; // 0 white, 1 grey, 2 black
    std::set<std::string> reported;
    std::function<void(const std::string&)> visit = [&](const std::string& fn) {
        color[fn] = 1;
        const auto* f = p.find(fn);
        for (std::size_t i = 0; f != nullptr && i < f->body.size(); ++i) {
            const auto* c = std::get_if<Call>(&f->body[i]);
            if (c == nullptr || p.find(c->callee) == nullptr) {
                continue;
            }
            if (color[c->callee] == 1) {
                if (reported.insert(fn).second) {
                    out.push_back(diag("recursion", "recursive call to " + c->callee + " is not supported", fn, i));
                }
            } else if (color[c->callee] == 0) {
                visit(c->callee);
            }
        }
        color[fn] = 2;
    };
    for (const auto& [name, f] : p.functions) {
        if (color[name] == 0) {
            visit(name);
        }
    }
    return out;
}

auto load_program(std::string_view text) -> TypeCheckResult {
    TypeCheckResult result;
    auto parsed = parse_program(text);
    if (!parsed.ok()) {
        result.diagnostics = std::move(parsed.diagnostics);
        return result;
    }
    auto wf = well_formed(*parsed.program);
    if (!wf.empty()) {
        result.diagnostics = std::move(wf);
        return result;
    }
    return type_check(*parsed.program);
}

} // namespace ownlab::lang
