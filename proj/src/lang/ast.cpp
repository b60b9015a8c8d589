#include "ownlab/lang.hpp"

#include <algorithm>

namespace ownlab::lang {

auto to_string(Qualifier q) -> std::string_view { return q == Qualifier::Shared ? "shared" : "unique"; }

// ----------------------------------------------------------------------------
// Path
// ----------------------------------------------------------------------------

auto Path::has_deref() const -> bool {
    return std::any_of(ops.begin(), ops.end(), [](const PathOp& op) { return op.is_deref(); });
}

auto Path::field(std::uint32_t n) const -> Path {
    Path p = *this;
    p.ops.push_back(PathOp::field(n));
    return p;
}

auto Path::deref() const -> Path {
    Path p = *this;
    p.ops.push_back(PathOp::deref());
    return p;
}

auto Path::truncated(std::size_t len) const -> Path {
    Path p{base};
    p.ops.assign(ops.begin(), ops.begin() + static_cast<std::ptrdiff_t>(std::min(len, ops.size())));
    return p;
}

auto Path::prefixes() const -> std::vector<Path> {
    std::vector<Path> out;
    for (std::size_t len = 0; len < ops.size(); ++len) {
        out.push_back(truncated(len));
    }
    return out;
}

auto Path::is_prefix_of(const Path& other) const -> bool {
    if (base != other.base || ops.size() > other.ops.size()) {
        return false;
    }
    return std::equal(ops.begin(), ops.end(), other.ops.begin());
}

auto Path::str() const -> std::string {
    std::string s = base;
    bool last_deref = false;
    for (const auto& op : ops) {
        if (op.is_deref()) {
            s = "*" + s;
            last_deref = true;
        } else {
            if (last_deref) {
                s = "(" + s + ")";
            }
            s += "." + std::to_string(op.index);
            last_deref = false;
        }
    }
    return s;
}

auto prefix_related(const Path& a, const Path& b) -> bool { return a.is_prefix_of(b) || b.is_prefix_of(a); }

// ----------------------------------------------------------------------------
// Expressions and instructions
// ----------------------------------------------------------------------------

auto Constant::str() const -> std::string {
    switch (kind) {
    case Kind::True: return "true";
    case Kind::False: return "false";
    case Kind::Number: break;
    }
    return std::to_string(value);
}

auto operand_str(const Operand& op) -> std::string {
    if (const auto* p = std::get_if<Path>(&op)) {
        return p->str();
    }
    return std::get<Constant>(op).str();
}

auto rvalue_str(const Rvalue& rv) -> std::string {
    struct Visitor {
        auto operator()(const Constant& c) const -> std::string { return c.str(); }
        auto operator()(const Path& p) const -> std::string { return p.str(); }
        auto operator()(const LoanExpr& l) const -> std::string {
            return "&" + std::string(to_string(l.qualifier)) + " " + l.target.str();
        }
        auto operator()(const TupleExpr& t) const -> std::string {
            std::string s = "(";
            for (std::size_t i = 0; i < t.elems.size(); ++i) {
                if (i > 0) {
                    s += ", ";
                }
                s += operand_str(t.elems[i]);
            }
            if (t.elems.size() == 1) {
                s += ",";
            }
            return s + ")";
        }
        auto operator()(const BoxExpr& b) const -> std::string { return "box " + operand_str(b.operand); }
    };
    return std::visit(Visitor{}, rv);
}

auto instruction_str(const Instruction& ins) -> std::string {
    struct Visitor {
        auto operator()(const Assign& a) const -> std::string { return a.dest.str() + " = " + rvalue_str(a.rv); }
        auto operator()(const If& i) const -> std::string {
            return "if " + i.cond.str() + " then " + std::to_string(i.then_target) + " else " +
                   std::to_string(i.else_target);
        }
        auto operator()(const Call& c) const -> std::string {
            std::string s = c.dest.str() + " = call " + c.callee + "(";
            for (std::size_t i = 0; i < c.args.size(); ++i) {
                if (i > 0) {
                    s += ", ";
                }
                s += c.args[i].str();
            }
            return s + ")";
        }
        auto operator()(const Return& r) const -> std::string { return "return " + r.operand.str(); }
        auto operator()(const Drop& d) const -> std::string { return "drop " + d.operand.str(); }
    };
    return std::visit(Visitor{}, ins);
}

auto successors(const std::vector<Instruction>& body, std::size_t index) -> std::vector<std::size_t> {
    const auto& ins = body.at(index);
    if (std::holds_alternative<Return>(ins)) {
        return {};
    }
    if (const auto* br = std::get_if<If>(&ins)) {
        if (br->then_target == br->else_target) {
            return {br->then_target};
        }
        return {br->then_target, br->else_target};
    }
    return {index + 1};
}

auto paths_of(const Instruction& ins) -> std::vector<Path> {
    std::vector<Path> out;
    auto add_operand = [&](const Operand& op) {
        if (const auto* p = std::get_if<Path>(&op)) {
            out.push_back(*p);
        }
    };
    if (const auto* a = std::get_if<Assign>(&ins)) {
        out.push_back(a->dest);
        if (const auto* p = std::get_if<Path>(&a->rv)) {
            out.push_back(*p);
        } else if (const auto* l = std::get_if<LoanExpr>(&a->rv)) {
            out.push_back(l->target);
        } else if (const auto* t = std::get_if<TupleExpr>(&a->rv)) {
            for (const auto& e : t->elems) {
                add_operand(e);
            }
        } else if (const auto* b = std::get_if<BoxExpr>(&a->rv)) {
            add_operand(b->operand);
        }
    } else if (const auto* i = std::get_if<If>(&ins)) {
        out.push_back(i->cond);
    } else if (const auto* c = std::get_if<Call>(&ins)) {
        out.push_back(c->dest);
        out.insert(out.end(), c->args.begin(), c->args.end());
    } else if (const auto* r = std::get_if<Return>(&ins)) {
        out.push_back(r->operand);
    } else if (const auto* d = std::get_if<Drop>(&ins)) {
        out.push_back(d->operand);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Types
// ----------------------------------------------------------------------------

auto LangType::is_movable() const -> bool {
    switch (kind) {
    case Kind::U32:
    case Kind::Bool: return false;
    case Kind::Box: return true;
    case Kind::Ref: return qualifier == Qualifier::Unique;
    case Kind::Tuple:
        return std::any_of(elems.begin(), elems.end(), [](const LangType& t) { return t.is_movable(); });
    }
    return false;
}

auto LangType::mentions_ref() const -> bool {
    if (kind == Kind::Ref) {
        return true;
    }
    return std::any_of(elems.begin(), elems.end(), [](const LangType& t) { return t.mentions_ref(); });
}

auto LangType::same_shape(const LangType& other) const -> bool {
    if (kind != other.kind || elems.size() != other.elems.size()) {
        return false;
    }
    if (kind == Kind::Ref && qualifier != other.qualifier) {
        return false;
    }
    for (std::size_t i = 0; i < elems.size(); ++i) {
        if (!elems[i].same_shape(other.elems[i])) {
            return false;
        }
    }
    return true;
}

auto LangType::lifetimes() const -> std::vector<Lifetime> {
    std::vector<Lifetime> out;
    if (kind == Kind::Ref) {
        out.push_back(lifetime);
    }
    for (const auto& e : elems) {
        auto inner = e.lifetimes();
        out.insert(out.end(), inner.begin(), inner.end());
    }
    return out;
}

auto LangType::operator<=>(const LangType& other) const -> std::strong_ordering {
    if (auto c = kind <=> other.kind; c != 0) {
        return c;
    }
    if (auto c = lifetime <=> other.lifetime; c != 0) {
        return c;
    }
    if (auto c = qualifier <=> other.qualifier; c != 0) {
        return c;
    }
    return std::lexicographical_compare_three_way(elems.begin(), elems.end(), other.elems.begin(), other.elems.end());
}

auto LangType::operator==(const LangType& other) const -> bool { return (*this <=> other) == 0; }

auto LangType::str() const -> std::string {
    switch (kind) {
    case Kind::U32: return "u32";
    case Kind::Bool: return "bool";
    case Kind::Box: return "box " + pointee().str();
    case Kind::Ref: {
        std::string s = "&";
        if (!lifetime.elided()) {
            s += "'" + lifetime.name + " ";
        }
        return s + std::string(to_string(qualifier)) + " " + pointee().str();
    }
    case Kind::Tuple: {
        std::string s = "(";
        for (std::size_t i = 0; i < elems.size(); ++i) {
            if (i > 0) {
                s += ", ";
            }
            s += elems[i].str();
        }
        if (elems.size() == 1) {
            s += ",";
        }
        return s + ")";
    }
    }
    return "?";
}

// ----------------------------------------------------------------------------
// Functions and programs
// ----------------------------------------------------------------------------

auto FunctionDef::find_var(std::string_view n) const -> const VarDecl* {
    for (const auto& p : params) {
        if (p.name == n) {
            return &p;
        }
    }
    for (const auto& l : locals) {
        if (l.name == n) {
            return &l;
        }
    }
    return nullptr;
}

auto FunctionDef::is_param(std::string_view n) const -> bool {
    return std::any_of(params.begin(), params.end(), [&](const VarDecl& p) { return p.name == n; });
}

auto FunctionDef::operator==(const FunctionDef& other) const -> bool {
    auto sorted = [](std::vector<VarDecl> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    return name == other.name && lifetime_params == other.lifetime_params && outlives == other.outlives &&
           params == other.params && ret == other.ret && body == other.body &&
           sorted(locals) == sorted(other.locals);
}

auto Program::find(std::string_view n) const -> const FunctionDef* {
    auto it = functions.find(std::string(n));
    return it == functions.end() ? nullptr : &it->second;
}

auto Diagnostic::str() const -> std::string {
    std::string s;
    if (line > 0) {
        s += std::to_string(line) + ":" + std::to_string(column) + ": ";
    }
    if (!function.empty()) {
        s += function;
        if (instruction) {
            s += ":" + std::to_string(*instruction);
        }
        s += ": ";
    }
    return s + code + ": " + message;
}

// ----------------------------------------------------------------------------
// Typed program accessors
// ----------------------------------------------------------------------------

auto FunctionTypes::type_of(const Path& p) const -> const LangType* {
    auto it = path_types.find(p);
    return it == path_types.end() ? nullptr : &it->second;
}

auto FunctionTypes::loan_at(std::size_t instruction) const -> const LoanSite* {
    for (const auto& l : loans) {
        if (l.instruction == instruction) {
            return &l;
        }
    }
    return nullptr;
}

auto TypedProgram::fn(std::string_view name) const -> const FunctionDef& {
    return program.functions.at(std::string(name));
}

auto TypedProgram::types_of(std::string_view name) const -> const FunctionTypes& {
    return types.at(std::string(name));
}

} // namespace ownlab::lang
