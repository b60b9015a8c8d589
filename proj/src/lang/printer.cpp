#include "ownlab/lang.hpp"

#include <algorithm>

namespace ownlab::lang {
namespace {

auto decl_str(const VarDecl& d) -> std::string {
    return std::string(d.mut ? "mut " : "") + d.name + ": " + d.type.str();
}

auto header_str(const FunctionDef& f) -> std::string {
    std::string s = "fn " + f.name;
    if (!f.lifetime_params.empty() || !f.outlives.empty()) {
        std::vector<std::string> items;
        for (const auto& l : f.lifetime_params) {
            items.push_back("'" + l);
        }
        for (const auto& o : f.outlives) {
            items.push_back("'" + o.longer + " :> '" + o.shorter);
        }
        s += "<";
        for (std::size_t i = 0; i < items.size(); ++i) {
            s += (i > 0 ? ", " : "") + items[i];
        }
        s += ">";
    }
    s += "(";
    for (std::size_t i = 0; i < f.params.size(); ++i) {
        s += (i > 0 ? ", " : "") + decl_str(f.params[i]);
    }
    s += ")";
    if (f.ret) {
        s += " -> " + f.ret->str();
    }
    return s;
}

} // namespace

auto pretty_print(const FunctionDef& f, PrintOptions opts) -> std::string {
    std::vector<VarDecl> locals = f.locals;
    if (opts.canonical) {
        std::sort(locals.begin(), locals.end(), [](const VarDecl& a, const VarDecl& b) { return a.name < b.name; });
    }
    std::vector<std::string> items;
    for (const auto& l : locals) {
        items.push_back("let " + decl_str(l) + ";");
    }
    for (std::size_t i = 0; i < f.body.size(); ++i) {
        items.push_back(std::to_string(i) + ": " + instruction_str(f.body[i]) + ";");
    }
    std::string s = header_str(f) + " {";
    if (opts.canonical) {
        s += "\n";
        for (const auto& it : items) {
            s += "  " + it + "\n";
        }
        s += "}\n";
    } else {
        for (const auto& it : items) {
            s += " " + it;
        }
        s += " }\n";
    }
    return s;
}

auto pretty_print(const Program& p, PrintOptions opts) -> std::string {
    std::string out;
    bool first = true;
    for (const auto& [name, f] : p.functions) {
        if (!first && opts.canonical) {
            out += "\n";
        }
        first = false;
        out += pretty_print(f, opts);
    }
    return out;
}

} // namespace ownlab::lang
