//! Type-directed program generator: types first, then instructions whose
//! operands are drawn from places of matching shape.

#include "ownlab/diffcheck.hpp"

#include <algorithm>
#include <random>

namespace ownlab::diffcheck {

using lang::LangType;
using lang::Lifetime;
using lang::Path;
using lang::Qualifier;

auto FuzzConfig::validate() const -> std::string {
    if (max_functions < 1 || max_instructions < 2 || max_locals < 1 || type_depth < 1) {
        return "bounds must be at least 1 (max_instructions at least 2)";
    }
    const double ws[] = {weights.assign_const, weights.use,    weights.loan,   weights.tuple,
                         weights.box,          weights.branch, weights.call,   weights.drop};
    bool positive = false;
    for (double w : ws) {
        if (w < 0) {
            return "weights must be nonnegative";
        }
        positive = positive || w > 0;
    }
    if (!positive) {
        return "at least one weight must be positive";
    }
    if (backward_branch < 0 || backward_branch > 1) {
        return "backward_branch must be a probability";
    }
    return {};
}

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : g_(seed) {}

    auto below(std::size_t n) -> std::size_t { return n == 0 ? 0 : static_cast<std::size_t>(g_() % n); }
    auto between(std::size_t lo, std::size_t hi) -> std::size_t { return lo + below(hi - lo + 1); }
    auto chance(double p) -> bool { return static_cast<double>(g_() >> 11) * 0x1.0p-53 < p; }

    template <class T>
    auto pick(const std::vector<T>& v) -> const T& {
        return v[below(v.size())];
    }

    auto weighted(const std::vector<double>& ws) -> std::size_t {
        double total = 0;
        for (double w : ws) {
            total += w;
        }
        double x = static_cast<double>(g_() >> 11) * 0x1.0p-53 * total;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (x < ws[i]) {
                return i;
            }
            x -= ws[i];
        }
        return ws.size() - 1;
    }

private:
    std::mt19937_64 g_;
};

auto splitmix(std::uint64_t x) -> std::uint64_t {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

auto is_leaf(const LangType& t) -> bool {
    return t.kind == LangType::Kind::U32 || t.kind == LangType::Kind::Bool;
}

auto elide(LangType t) -> LangType {
    if (t.is_ref()) {
        t.lifetime = Lifetime{};
    }
    for (auto& e : t.elems) {
        e = elide(e);
    }
    return t;
}

struct Place {
    Path path;
    LangType type;
};

/// Every place reachable from a variable with at most `max_ops` projections.
void places_of(const Path& p, const LangType& t, std::size_t max_ops, std::vector<Place>& out) {
    out.push_back({p, t});
    if (p.ops.size() >= max_ops) {
        return;
    }
    if (t.is_tuple()) {
        for (std::uint32_t k = 0; k < t.elems.size(); ++k) {
            places_of(p.field(k), t.elems[k], max_ops, out);
        }
    } else if (t.is_ref() || t.is_box()) {
        places_of(p.deref(), t.pointee(), max_ops, out);
    }
}

struct Signature {
    std::string name;
    std::vector<LangType> params;
    LangType ret;
};

enum Kind { kAssignConst, kUse, kLoan, kTuple, kBox, kBranch, kCall, kDrop, kKinds };

class FnBuilder {
public:
    FnBuilder(Rng& rng, const FuzzConfig& cfg, lang::FunctionDef& f, std::vector<Signature> callees)
        : rng_(rng), cfg_(cfg), f_(f), callees_(std::move(callees)) {}

    auto value_type(std::size_t depth) -> LangType {
        if (depth == 0 || rng_.chance(0.5)) {
            return rng_.chance(0.65) ? LangType::u32() : LangType::boolean();
        }
        if (rng_.chance(0.5)) {
            return LangType::box(value_type(depth - 1));
        }
        return LangType::tuple({value_type(depth - 1), value_type(depth - 1)});
    }

    void declare(const LangType& t) {
        std::string name(1, static_cast<char>('a' + f_.locals.size()));
        f_.locals.push_back({name, rng_.chance(0.92), t});
    }

    /// A reference to the type of some existing place, so loans of it can be built.
    auto ref_type(const std::vector<std::string>& lifetimes) -> LangType {
        refresh_places();
        LangType pointee = places_.empty() ? LangType::u32() : rng_.pick(places_).type;
        if (pointee.is_ref() && rng_.chance(0.7)) {
            pointee = LangType::u32();
        }
        Lifetime l;
        if (!lifetimes.empty() && rng_.chance(0.3)) {
            l = Lifetime::abstract(rng_.pick(lifetimes));
        }
        return LangType::ref(l, rng_.chance(0.5) ? Qualifier::Shared : Qualifier::Unique, pointee);
    }

    void declare_locals(const std::vector<LangType>& wanted) {
        for (const auto& t : wanted) {
            declare(t);
        }
        const std::size_t extra = rng_.between(1, cfg_.max_locals);
        bool has_leaf = false;
        for (std::size_t k = 0; k < extra; ++k) {
            if (k > 0 && rng_.chance(0.3)) {
                declare(ref_type(f_.lifetime_params));
            } else {
                declare(value_type(cfg_.type_depth));
            }
        }
        for (const auto& d : f_.locals) {
            has_leaf = has_leaf || d.type.kind == LangType::Kind::U32;
        }
        if (!has_leaf) {
            declare(LangType::u32());
        }
        refresh_places();
    }

    void build_body(const std::optional<LangType>& ret) {
        const std::size_t n = rng_.between(2, cfg_.max_instructions);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            f_.body.push_back(instruction(i, n));
        }
        f_.body.push_back(ret_instruction(ret));
    }

private:
    Rng& rng_;
    const FuzzConfig& cfg_;
    lang::FunctionDef& f_;
    std::vector<Signature> callees_;
    std::vector<Place> places_;
    std::set<std::string> initialized_;

    void refresh_places() {
        places_.clear();
        for (const auto* list : {&f_.params, &f_.locals}) {
            for (const auto& d : *list) {
                places_of(Path{d.name}, d.type, 3, places_);
            }
        }
    }

    auto matching(const LangType& shape) const -> std::vector<Place> {
        std::vector<Place> out;
        for (const auto& p : places_) {
            if (p.type.same_shape(shape)) {
                out.push_back(p);
            }
        }
        return out;
    }

    auto ready(const Place& p) const -> bool {
        return initialized_.count(p.path.base) > 0 || f_.is_param(p.path.base);
    }

    /// Mostly restricts to places whose variable has been assigned on the
    /// straight-line path so far; uninitialized reads are still generated.
    auto prefer_ready(std::vector<Place> ps) -> std::vector<Place> {
        std::vector<Place> good;
        for (const auto& p : ps) {
            if (ready(p)) {
                good.push_back(p);
            }
        }
        return !good.empty() && rng_.chance(0.9) ? good : ps;
    }

    /// Operand candidates; unready ones only occasionally, so constants win.
    auto sources(const LangType& shape) -> std::vector<Place> {
        auto all = matching(shape);
        std::vector<Place> good;
        for (const auto& p : all) {
            if (ready(p)) {
                good.push_back(p);
            }
        }
        if (rng_.chance(0.05)) {
            return all;
        }
        return good;
    }

    template <class Pred>
    auto pick_place(Pred pred) -> std::optional<Place> {
        std::vector<Place> cands;
        for (const auto& p : places_) {
            if (pred(p.type)) {
                cands.push_back(p);
            }
        }
        if (cands.empty()) {
            return std::nullopt;
        }
        cands = prefer_ready(std::move(cands));
        std::vector<Place> bare;
        for (const auto& p : cands) {
            if (p.path.is_var()) {
                bare.push_back(p);
            }
        }
        return !bare.empty() && rng_.chance(0.5) ? rng_.pick(bare) : rng_.pick(cands);
    }

    auto constant(const LangType& t) -> lang::Constant {
        if (t.kind == LangType::Kind::Bool) {
            return lang::Constant::boolean(rng_.chance(0.5));
        }
        return lang::Constant::number(static_cast<std::uint32_t>(rng_.below(10)));
    }

    auto operand(const LangType& t) -> std::optional<lang::Operand> {
        auto paths = sources(t);
        if (is_leaf(t) && (paths.empty() || rng_.chance(0.5))) {
            return lang::Operand{constant(t)};
        }
        if (paths.empty()) {
            return std::nullopt;
        }
        return lang::Operand{rng_.pick(paths).path};
    }

    auto copy_of(const LangType& t, const Path& avoid) -> std::optional<lang::Rvalue> {
        std::vector<Place> paths;
        for (const auto& p : sources(t)) {
            if (p.path != avoid) {
                paths.push_back(p);
            }
        }
        if (paths.empty()) {
            return std::nullopt;
        }
        return lang::Rvalue{rng_.pick(paths).path};
    }

    auto loan_of(const LangType& ref) -> std::optional<lang::Rvalue> {
        auto targets = sources(ref.pointee());
        if (targets.empty()) {
            return std::nullopt;
        }
        return lang::Rvalue{lang::LoanExpr{ref.qualifier, rng_.pick(targets).path}};
    }

    auto tuple_of(const LangType& t) -> std::optional<lang::Rvalue> {
        lang::TupleExpr e;
        for (const auto& et : t.elems) {
            auto op = operand(et);
            if (!op) {
                return std::nullopt;
            }
            e.elems.push_back(*op);
        }
        return lang::Rvalue{e};
    }

    auto box_of(const LangType& t) -> std::optional<lang::Rvalue> {
        auto op = operand(t.pointee());
        if (!op) {
            return std::nullopt;
        }
        return lang::Rvalue{lang::BoxExpr{*op}};
    }

    /// Any rvalue of the given type, constructive forms preferred.
    auto rvalue_for(const LangType& t, const Path& dest) -> std::optional<lang::Rvalue> {
        std::optional<lang::Rvalue> rv;
        if (is_leaf(t)) {
            rv = rng_.chance(0.6) ? std::optional<lang::Rvalue>{constant(t)} : copy_of(t, dest);
        } else if (t.is_ref()) {
            rv = rng_.chance(0.75) ? loan_of(t) : copy_of(t, dest);
        } else if (t.is_box()) {
            rv = rng_.chance(0.7) ? box_of(t) : copy_of(t, dest);
        } else {
            rv = rng_.chance(0.7) ? tuple_of(t) : copy_of(t, dest);
        }
        if (!rv && is_leaf(t)) {
            rv = constant(t);
        }
        return rv;
    }

    auto assign(const Place& dest, std::optional<lang::Rvalue> rv) -> std::optional<lang::Instruction> {
        if (!rv) {
            return std::nullopt;
        }
        if (dest.path.is_var()) {
            initialized_.insert(dest.path.base);
        }
        return lang::Instruction{lang::Assign{dest.path, *rv}};
    }

    auto try_kind(Kind k, std::size_t i, std::size_t n) -> std::optional<lang::Instruction> {
        auto any = [](const LangType&) { return true; };
        switch (k) {
        case kAssignConst: {
            auto d = pick_place(is_leaf);
            return d ? assign(*d, lang::Rvalue{constant(d->type)}) : std::nullopt;
        }
        case kUse: {
            auto d = pick_place(any);
            return d ? assign(*d, copy_of(d->type, d->path)) : std::nullopt;
        }
        case kLoan: {
            auto d = pick_place([](const LangType& t) { return t.is_ref(); });
            return d ? assign(*d, loan_of(d->type)) : std::nullopt;
        }
        case kTuple: {
            auto d = pick_place([](const LangType& t) { return t.is_tuple(); });
            return d ? assign(*d, tuple_of(d->type)) : std::nullopt;
        }
        case kBox: {
            auto d = pick_place([](const LangType& t) { return t.is_box(); });
            return d ? assign(*d, box_of(d->type)) : std::nullopt;
        }
        case kBranch: {
            auto c = pick_place([](const LangType& t) { return t.kind == LangType::Kind::Bool; });
            if (!c) {
                return std::nullopt;
            }
            std::size_t a = i + 1;
            std::size_t b = rng_.between(i + 1, n - 1);
            if (rng_.chance(cfg_.backward_branch)) {
                a = rng_.between(0, i);
            }
            if (rng_.chance(0.5)) {
                std::swap(a, b);
            }
            return lang::Instruction{lang::If{c->path, a, b}};
        }
        case kCall: {
            if (callees_.empty()) {
                return std::nullopt;
            }
            const auto& sig = rng_.pick(callees_);
            lang::Call call{{}, sig.name, {}};
            for (const auto& pt : sig.params) {
                auto args = sources(pt);
                if (args.empty()) {
                    return std::nullopt;
                }
                call.args.push_back(rng_.pick(args).path);
            }
            auto d = pick_place([&](const LangType& t) { return t.same_shape(sig.ret); });
            if (!d) {
                return std::nullopt;
            }
            call.dest = d->path;
            if (d->path.is_var()) {
                initialized_.insert(d->path.base);
            }
            return lang::Instruction{call};
        }
        case kDrop: {
            auto d = pick_place(any);
            return d ? std::optional<lang::Instruction>{lang::Drop{d->path}} : std::nullopt;
        }
        case kKinds: break;
        }
        return std::nullopt;
    }

    auto instruction(std::size_t i, std::size_t n) -> lang::Instruction {
        // Initializing locals in order keeps a fair share of programs accepted.
        if (rng_.chance(0.7)) {
            for (const auto& d : f_.locals) {
                if (initialized_.count(d.name) == 0) {
                    if (auto ins = assign({Path{d.name}, d.type}, rvalue_for(d.type, Path{d.name}))) {
                        return *ins;
                    }
                    break;
                }
            }
        }
        const auto& w = cfg_.weights;
        std::vector<double> ws{w.assign_const, w.use, w.loan, w.tuple, w.box, w.branch, w.call, w.drop};
        for (int attempt = 0; attempt < 12; ++attempt) {
            if (auto ins = try_kind(static_cast<Kind>(rng_.weighted(ws)), i, n)) {
                return *ins;
            }
        }
        auto d = pick_place(is_leaf);
        return lang::Assign{d->path, constant(d->type)};
    }

    auto ret_instruction(const std::optional<LangType>& ret) -> lang::Instruction {
        std::optional<Place> p;
        if (ret) {
            p = pick_place([&](const LangType& t) { return t.same_shape(*ret); });
        } else {
            p = pick_place([](const LangType& t) { return t.kind == LangType::Kind::U32; });
        }
        return lang::Return{p->path};
    }
};

auto make_helper(Rng& rng, const FuzzConfig& cfg, const std::string& name) -> lang::FunctionDef {
    lang::FunctionDef f;
    f.name = name;
    FnBuilder b(rng, cfg, f, {});
    if (cfg.abstract_lifetimes) {
        f.lifetime_params = {"a"};
        if (rng.chance(0.6)) {
            f.lifetime_params.push_back("b");
        }
    }
    const std::size_t nparams = rng.between(1, 2);
    for (std::size_t k = 0; k < nparams; ++k) {
        LangType t = b.value_type(cfg.type_depth - 1);
        if (cfg.abstract_lifetimes && rng.chance(0.6)) {
            t = LangType::ref(Lifetime::abstract(rng.pick(f.lifetime_params)),
                              rng.chance(0.5) ? Qualifier::Shared : Qualifier::Unique, t);
        }
        f.params.push_back({"p" + std::to_string(k), rng.chance(0.5), t});
    }
    LangType ret = b.value_type(cfg.type_depth - 1);
    std::vector<const lang::VarDecl*> refs;
    for (const auto& p : f.params) {
        if (p.type.is_ref()) {
            refs.push_back(&p);
        }
    }
    if (!refs.empty() && rng.chance(0.6)) {
        const auto& src = rng.pick(refs)->type;
        auto q = src.qualifier == Qualifier::Unique && rng.chance(0.5) ? Qualifier::Unique : Qualifier::Shared;
        ret = LangType::ref(Lifetime::abstract(rng.pick(f.lifetime_params)), q, src.pointee());
    }
    f.ret = ret;
    if (f.lifetime_params.size() == 2) {
        for (const auto& [x, y] : {std::pair{"a", "b"}, std::pair{"b", "a"}}) {
            if (rng.chance(0.3)) {
                f.outlives.push_back({x, y});
            }
        }
    }
    b.declare_locals({ret});
    b.build_body(ret);
    return f;
}

auto attempt(std::uint64_t seed, const FuzzConfig& cfg) -> lang::Program {
    Rng rng(seed);
    lang::Program p;
    std::vector<Signature> sigs;
    const std::size_t helpers = cfg.calls && cfg.max_functions > 1 ? rng.between(0, cfg.max_functions - 1) : 0;
    for (std::size_t k = 0; k < helpers; ++k) {
        std::string name = "f" + std::to_string(k);
        auto f = make_helper(rng, cfg, name);
        Signature sig{name, {}, *f.ret};
        for (const auto& d : f.params) {
            sig.params.push_back(d.type);
        }
        p.functions.emplace(name, std::move(f));
        sigs.push_back(std::move(sig));
    }

    lang::FunctionDef main_fn;
    main_fn.name = std::string(lang::kEntryFunction);
    FnBuilder b(rng, cfg, main_fn, sigs);
    std::vector<LangType> wanted;
    for (const auto& s : sigs) {
        if (rng.chance(0.7)) {
            for (const auto& t : s.params) {
                wanted.push_back(elide(t));
            }
            wanted.push_back(elide(s.ret));
        }
    }
    if (wanted.size() > cfg.max_locals) {
        wanted.resize(cfg.max_locals);
    }
    b.declare_locals(wanted);
    b.build_body(std::nullopt);
    p.functions.emplace(main_fn.name, std::move(main_fn));
    return p;
}

auto fallback_program() -> lang::Program {
    return *lang::parse_program("fn main() {\n  let r: u32;\n  0: r = 0;\n  1: return r;\n}\n").program;
}

} // namespace

auto generate_program(const FuzzConfig& cfg) -> lang::Program {
    if (!cfg.validate().empty()) {
        return fallback_program();
    }
    for (std::uint64_t k = 0; k < 16; ++k) {
        auto p = attempt(k == 0 ? cfg.seed : splitmix(cfg.seed ^ (k * 0x632BE59BD9B4E019ULL)), cfg);
        if (lang::well_formed(p).empty() && lang::type_check(p).ok()) {
            return p;
        }
    }
    return fallback_program();
}

} // namespace ownlab::diffcheck
