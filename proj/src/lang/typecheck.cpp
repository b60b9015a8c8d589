#include "ownlab/lang.hpp"

namespace ownlab::lang {
namespace {

/// Gives every elided lifetime in `t` a unique concrete name derived from `owner`.
void name_elided(LangType& t, const std::string& owner, std::size_t& counter) {
    if (t.kind == LangType::Kind::Ref && t.lifetime.elided()) {
        t.lifetime = Lifetime::concrete("_" + owner + (counter == 0 ? "" : "#" + std::to_string(counter)));
        ++counter;
    }
    for (auto& e : t.elems) {
        name_elided(e, owner, counter);
    }
}

class Checker {
public:
    Checker(const Program& prog, const FunctionDef& f, std::vector<Diagnostic>& diags)
        : prog_(prog), f_(f), diags_(diags) {}

    auto run() -> FunctionTypes {
        for (const auto& d : f_.params) {
            check_signature_type(d.type, "parameter " + d.name);
            out_.var_types[d.name] = d.type;
        }
        if (f_.ret) {
            check_signature_type(*f_.ret, "return type");
        }
        for (const auto& d : f_.locals) {
            LangType t = d.type;
            std::size_t counter = 0;
            name_elided(t, d.name, counter);
            out_.var_types[d.name] = t;
        }

        for (std::size_t i = 0; i < f_.body.size(); ++i) {
            index_ = i;
            for (const auto& p : paths_of(f_.body[i])) {
                type_path(p);
            }
        }
        if (f_.ret) {
            out_.return_type = *f_.ret;
        } else {
            bool found = false;
            for (const auto& ins : f_.body) {
                if (const auto* r = std::get_if<Return>(&ins)) {
                    if (const auto* t = out_.type_of(r->operand)) {
                        out_.return_type = *t;
                        found = true;
                        break;
                    }
                }
            }
            if (!found) {
                out_.return_type = LangType::tuple({});
            }
        }
        for (std::size_t i = 0; i < f_.body.size(); ++i) {
            index_ = i;
            check_instruction(f_.body[i]);
        }
        return std::move(out_);
    }

private:
    const Program& prog_;
    const FunctionDef& f_;
    std::vector<Diagnostic>& diags_;
    FunctionTypes out_;
    std::size_t index_ = 0;

    void error(const std::string& code, const std::string& msg) {
        diags_.push_back({code, msg, f_.name, index_, 0, 0});
    }

    void check_signature_type(const LangType& t, const std::string& where) {
        for (const auto& l : t.lifetimes()) {
            if (!l.is_abstract()) {
                diags_.push_back({"signature-lifetime",
                                  where + " must use lifetimes declared in the signature" +
                                      (l.elided() ? "" : " ('" + l.name + " is not declared)"),
                                  f_.name, std::nullopt, 0, 0});
            }
        }
    }

    auto type_path(const Path& p) -> const LangType* {
        if (const auto* t = out_.type_of(p)) {
            return t;
        }
        auto base = out_.var_types.find(p.base);
        if (base == out_.var_types.end()) {
            error("unknown-identifier", "unknown identifier " + p.base);
            return nullptr;
        }
        LangType cur = base->second;
        out_.path_types.emplace(Path{p.base}, cur);
        Path prefix{p.base};
        for (const auto& op : p.ops) {
            if (op.is_deref()) {
                if (!cur.is_ref() && !cur.is_box()) {
                    error("bad-deref", "cannot dereference " + prefix.str() + " of type " + cur.str());
                    return nullptr;
                }
                cur = LangType(cur.pointee());
                prefix = prefix.deref();
            } else {
                if (!cur.is_tuple() || op.index >= cur.elems.size()) {
                    error("bad-field", "field " + std::to_string(op.index) + " out of range for " + prefix.str() +
                                           " of type " + cur.str());
                    return nullptr;
                }
                cur = LangType(cur.elems[op.index]);
                prefix = prefix.field(op.index);
            }
            out_.path_types.emplace(prefix, cur);
        }
        return out_.type_of(p);
    }

    auto type_operand(const Operand& op) -> std::optional<LangType> {
        if (const auto* c = std::get_if<Constant>(&op)) {
            return c->is_bool() ? LangType::boolean() : LangType::u32();
        }
        if (const auto* t = type_path(std::get<Path>(op))) {
            return *t;
        }
        return std::nullopt;
    }

    auto type_rvalue(const Rvalue& rv) -> std::optional<LangType> {
        if (const auto* c = std::get_if<Constant>(&rv)) {
            return type_operand(*c);
        }
        if (const auto* p = std::get_if<Path>(&rv)) {
            return type_operand(*p);
        }
        if (const auto* l = std::get_if<LoanExpr>(&rv)) {
            const auto* t = type_path(l->target);
            if (t == nullptr) {
                return std::nullopt;
            }
            LoanSite site{index_, *l, Lifetime::concrete("loan" + std::to_string(index_))};
            out_.loans.push_back(site);
            return LangType::ref(site.lifetime, l->qualifier, *t);
        }
        if (const auto* tup = std::get_if<TupleExpr>(&rv)) {
            std::vector<LangType> elems;
            for (const auto& e : tup->elems) {
                auto t = type_operand(e);
                if (!t) {
                    return std::nullopt;
                }
                elems.push_back(*t);
            }
            return LangType::tuple(std::move(elems));
        }
        const auto& b = std::get<BoxExpr>(rv);
        auto inner = type_operand(b.operand);
        if (!inner) {
            return std::nullopt;
        }
        return LangType::box(*inner);
    }

    void check_instruction(const Instruction& ins) {
        if (const auto* a = std::get_if<Assign>(&ins)) {
            const auto* dest = type_path(a->dest);
            auto rv = type_rvalue(a->rv);
            if (dest != nullptr && rv && !dest->same_shape(*rv)) {
                error("type-mismatch", "cannot assign " + rv->str() + " to " + a->dest.str() + " of type " +
                                           dest->str());
            }
        } else if (const auto* br = std::get_if<If>(&ins)) {
            const auto* t = type_path(br->cond);
            if (t != nullptr && t->kind != LangType::Kind::Bool) {
                error("bad-condition", "condition " + br->cond.str() + " has type " + t->str() + ", expected bool");
            }
        } else if (const auto* c = std::get_if<Call>(&ins)) {
            const auto* callee = prog_.find(c->callee);
            if (callee == nullptr) {
                error("unknown-function", "call to unknown function " + c->callee);
                return;
            }
            if (callee->params.size() != c->args.size()) {
                error("call-arity", c->callee + " expects " + std::to_string(callee->params.size()) +
                                        " arguments, got " + std::to_string(c->args.size()));
                return;
            }
            for (std::size_t k = 0; k < c->args.size(); ++k) {
                const auto* t = type_path(c->args[k]);
                if (t != nullptr && !t->same_shape(callee->params[k].type)) {
                    error("call-type", "argument " + std::to_string(k) + " of " + c->callee + " has type " +
                                           t->str() + ", expected " + callee->params[k].type.str());
                }
            }
            const auto* dest = type_path(c->dest);
            LangType ret = callee->ret ? *callee->ret : LangType::tuple({});
            if (!callee->ret) {
                for (const auto& cins : callee->body) {
                    if (const auto* r = std::get_if<Return>(&cins)) {
                        if (auto t = resolve_path_type(var_types_of(*callee), r->operand)) {
                            ret = *t;
                        }
                        break;
                    }
                }
            }
            if (dest != nullptr && !dest->same_shape(ret)) {
                error("call-type", "call result of type " + ret.str() + " cannot be stored in " + c->dest.str() +
                                       " of type " + dest->str());
            }
        } else if (const auto* r = std::get_if<Return>(&ins)) {
            const auto* t = type_path(r->operand);
            if (t != nullptr && !t->same_shape(out_.return_type)) {
                error("type-mismatch", "returning " + t->str() + " from a function returning " +
                                           out_.return_type.str());
            }
        } else if (const auto* d = std::get_if<Drop>(&ins)) {
            type_path(d->operand);
        }
    }

    static auto var_types_of(const FunctionDef& f) -> std::map<std::string, LangType> {
        std::map<std::string, LangType> vars;
        for (const auto* list : {&f.params, &f.locals}) {
            for (const auto& d : *list) {
                vars[d.name] = d.type;
            }
        }
        return vars;
    }
};

} // namespace

auto resolve_path_type(const std::map<std::string, LangType>& vars, const Path& p) -> std::optional<LangType> {
    auto it = vars.find(p.base);
    if (it == vars.end()) {
        return std::nullopt;
    }
    LangType cur = it->second;
    for (const auto& op : p.ops) {
        if (op.is_deref()) {
            if (!cur.is_ref() && !cur.is_box()) {
                return std::nullopt;
            }
            cur = LangType(cur.pointee());
        } else {
            if (!cur.is_tuple() || op.index >= cur.elems.size()) {
                return std::nullopt;
            }
            cur = LangType(cur.elems[op.index]);
        }
    }
    return cur;
}

auto type_check(const Program& p) -> TypeCheckResult {
    TypeCheckResult result;
    TypedProgram typed;
    typed.program = p;
    for (const auto& [name, f] : p.functions) {
        Checker checker(p, f, result.diagnostics);
        typed.types.emplace(name, checker.run());
    }
    if (result.diagnostics.empty()) {
        result.typed = std::move(typed);
    }
    return result;
}

} // namespace ownlab::lang
