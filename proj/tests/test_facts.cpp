#include "ownlab/diffcheck.hpp"
#include "ownlab/facts.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace ownlab;
using namespace ownlab::facts;
using lang::InstructionId;
using ownlab::testing::corpus;
using ownlab::testing::corpus_names;
using ownlab::testing::typed;

namespace {

auto P(std::string_view s) -> Path { return *lang::parse_path(s); }
auto at(std::size_t i, std::string fn = "main") -> InstructionId { return {std::move(fn), i}; }

auto has(const std::set<PathFact>& rel, std::string_view path, std::size_t i, std::string fn = "main") -> bool {
    return rel.count({P(path), at(i, std::move(fn))}) > 0;
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

auto successors(const lang::FunctionDef& f, std::size_t i) -> std::vector<std::size_t> {
    return lang::successors(f.body, i);
}

// ---------------------------------------------------------------------------
// Brute-force oracles: explicit walks over CFG paths.
// ---------------------------------------------------------------------------

/// Some path from `from` reaches a use of `v` before any redefinition of it.
auto used_later(const lang::FunctionDef& f, const std::string& v, std::size_t from) -> bool {
    std::set<std::size_t> seen;
    std::vector<std::size_t> todo{from};
    while (!todo.empty()) {
        auto i = todo.back();
        todo.pop_back();
        if (!seen.insert(i).second) {
            continue;
        }
        const auto& ins = f.body[i];
        const Path* d = dest_of(ins);
        auto paths = lang::paths_of(ins);
        for (std::size_t k = 0; k < paths.size(); ++k) {
            bool plain_write = k == 0 && d != nullptr && !d->has_deref();
            if (!plain_write && paths[k].base == v) {
                return true;
            }
        }
        if (d != nullptr && d->is_var() && d->base == v) {
            continue;
        }
        for (auto s : successors(f, i)) {
            todo.push_back(s);
        }
    }
    return false;
}

auto oracle_loan_live(const lang::TypedProgram& tp, const FactBase& fb) -> std::set<LoanFact> {
    std::set<LoanFact> out;
    for (const auto& loan : fb.loans) {
        const auto& fn = loan.issued.function;
        const auto& f = tp.fn(fn);
        const auto& regions = fb.aux.at(fn).regions;
        std::set<std::string> carriers;
        for (const auto& [v, t] : tp.types_of(fn).var_types) {
            for (const auto& l : t.lifetimes()) {
                if (regions.reaches(loan.lifetime, l)) {
                    carriers.insert(v);
                }
            }
        }
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            if (i == loan.issued.index) {
                continue;
            }
            for (const auto& v : carriers) {
                if (used_later(f, v, i)) {
                    out.insert({loan, {fn, i}});
                }
            }
        }
    }
    return out;
}

auto oracle_moved_before(const lang::TypedProgram& tp, const FactBase& fb) -> std::set<PathFact> {
    std::set<PathFact> out;
    for (const auto& [q, mv] : fb.moved_at) {
        const auto& f = tp.fn(mv.function);
        auto kills = [&](std::size_t i) {
            const Path* d = dest_of(f.body[i]);
            return d != nullptr && d->is_prefix_of(q);
        };
        if (kills(mv.index)) {
            continue;
        }
        std::set<std::size_t> reached;
        std::vector<std::size_t> todo = successors(f, mv.index);
        while (!todo.empty()) {
            auto i = todo.back();
            todo.pop_back();
            if (!reached.insert(i).second || kills(i)) {
                continue;
            }
            for (auto s : successors(f, i)) {
                todo.push_back(s);
            }
        }
        for (auto i : reached) {
            for (const auto& x : fb.aux.at(mv.function).tracked) {
                if (lang::prefix_related(x, q)) {
                    out.insert({x, {mv.function, i}});
                }
            }
        }
    }
    return out;
}

auto fuzz_programs(std::size_t count, std::size_t max_instructions) -> std::vector<lang::TypedProgram> {
    std::vector<lang::TypedProgram> out;
    diffcheck::FuzzConfig cfg;
    cfg.max_instructions = max_instructions;
    for (std::uint64_t seed = 0; seed < count; ++seed) {
        cfg.seed = seed;
        out.push_back(*lang::type_check(diffcheck::generate_program(cfg)).typed);
    }
    return out;
}

} // namespace

TEST_SUITE("accesses") {
    TEST_CASE("loan conflict program") {
        auto fb = build_facts(corpus("loan_conflict"));
        CHECK(has(fb.read_at, "*y", 3));
        CHECK(has(fb.written_at, "x.0", 2));
        CHECK(has(fb.read_at, "x", 1)); // shared borrow reads its target
        // Initializing a fresh local is not a write (no W needed for `let y`).
        CHECK_FALSE(has(fb.written_at, "y", 1));
        CHECK(fb.moved_at.empty());
    }

    TEST_CASE("moving a box") {
        auto fb = build_facts(corpus("move_conflict"));
        CHECK(has(fb.moved_at, "x", 1));
        CHECK(has(fb.read_at, "x", 1));
    }

    TEST_CASE("copy types are not moved") {
        auto fb = build_facts(typed("fn main() { let r: u32; 0: r = 0; 1: return r; }"));
        CHECK(fb.read_at == std::set<PathFact>{{P("r"), at(1)}});
        CHECK(fb.moved_at.empty());
        CHECK(fb.written_at.empty());
        CHECK(fb.moved_before.empty());
        CHECK(fb.loan_issued_at.empty());
        CHECK(fb.loan_live_at.empty());
        CHECK(fb.flows.empty());
    }

    TEST_CASE("unique borrow writes, drop moves") {
        auto fb = build_facts(typed("fn main() { let mut x: box u32; let y: &unique box u32; let r: u32;"
                                    " 0: x = box 0; 1: y = &unique x; 2: drop x; 3: r = 0; 4: return r; }"));
        CHECK(has(fb.written_at, "x", 1));
        CHECK(has(fb.moved_at, "x", 2));
        CHECK_FALSE(has(fb.read_at, "x", 2));
    }
}

TEST_SUITE("liveness") {
    TEST_CASE("loan is live at the write because y is used later") {
        auto tp = corpus("loan_conflict");
        auto fb = build_facts(tp);
        REQUIRE(fb.loans.size() == 1);
        CHECK(fb.is_live(fb.loans[0], at(2)));
        CHECK_FALSE(fb.is_live(fb.loans[0], at(4)));
    }

    TEST_CASE("dead loan") {
        auto fb = build_facts(typed("fn main() { let x: u32; let y: &shared u32; let r: u32;"
                                    " 0: x = 0; 1: y = &shared x; 2: r = x; 3: return r; }"));
        CHECK(fb.loan_live_at.empty());
        CHECK(fb.loan_issued_at.size() == 1);
    }

    TEST_CASE("loan carried across a reference copy") {
        auto tp = typed("fn main() { let x: u32; let y: &shared u32; let z: &shared u32; let w: u32;"
                        " 0: x = 0; 1: y = &shared x; 2: z = y; 3: w = *z; 4: return w; }");
        auto fb = build_facts(tp);
        REQUIRE(fb.loans.size() == 1);
        CHECK(fb.is_live(fb.loans[0], at(2)));
        CHECK(fb.is_live(fb.loans[0], at(3)));
        CHECK(fb.loan_live_at == oracle_loan_live(tp, fb));
    }

    TEST_CASE("matches path enumeration on fuzz programs") {
        std::size_t live = 0;
        for (const auto& tp : fuzz_programs(600, 12)) {
            auto fb = build_facts(tp);
            CAPTURE(lang::pretty_print(tp.program));
            CHECK(fb.loan_live_at == oracle_loan_live(tp, fb));
            live += fb.loan_live_at.size();
        }
        CHECK(live > 100);
    }
}

TEST_SUITE("moved_before") {
    TEST_CASE("read after move") {
        auto fb = build_facts(corpus("move_conflict"));
        CHECK(has(fb.moved_before, "x", 2));
        CHECK(has(fb.moved_before, "*x", 2));
        CHECK_FALSE(has(fb.moved_before, "x", 1));
    }

    TEST_CASE("reinitialization kills") {
        auto fb = build_facts(typed("fn main() { let mut x: box u32; let y: box u32; let z: u32;"
                                    " 0: x = box 0; 1: y = x; 2: x = box 1; 3: z = *x; 4: return z; }"));
        CHECK(has(fb.moved_before, "x", 2));
        CHECK_FALSE(has(fb.moved_before, "x", 3));
        CHECK_FALSE(has(fb.moved_before, "*x", 3));
    }

    TEST_CASE("move on one branch is a move at the join") {
        // paths: 0 1 2 3 4 (moves x) and 0 1 2 4
        auto tp = typed("fn main() { let c: bool; let x: box u32; let y: box u32; let z: u32;"
                        " 0: c = true; 1: x = box 0; 2: if c then 3 else 4; 3: y = x; 4: z = *x; 5: return z; }");
        auto fb = build_facts(tp);
        CHECK(has(fb.moved_before, "x", 4));
        CHECK_FALSE(has(fb.moved_before, "x", 3));
        CHECK(fb.moved_before == oracle_moved_before(tp, fb));
    }

    TEST_CASE("matches path enumeration on fuzz programs") {
        std::size_t moved = 0;
        for (const auto& tp : fuzz_programs(600, 10)) {
            auto fb = build_facts(tp);
            CAPTURE(lang::pretty_print(tp.program));
            CHECK(fb.moved_before == oracle_moved_before(tp, fb));
            moved += fb.moved_before.size();
        }
        CHECK(moved > 100);
    }

    TEST_CASE("monotone along edges until killed") {
        for (const auto& tp : fuzz_programs(300, 10)) {
            auto fb = build_facts(tp);
            for (const auto& [x, i] : fb.moved_before) {
                const auto& f = tp.fn(i.function);
                const Path* d = dest_of(f.body[i.index]);
                if (d != nullptr && lang::prefix_related(*d, x)) {
                    continue;
                }
                for (auto s : successors(f, i.index)) {
                    CHECK(fb.moved_before.count({x, {i.function, s}}) == 1);
                }
            }
        }
    }
}

TEST_SUITE("conflicts") {
    TEST_CASE("prefixes and siblings") {
        auto tp = corpus("loan_conflict");
        CHECK(conflicts(P("x.0"), P("x"), tp, "main"));
        CHECK(conflicts(P("x"), P("x.0"), tp, "main"));
        auto pair = typed("fn main() { let x: (u32, u32); let r: u32; 0: x = (0, 0); 1: r = x.1; 2: r = x.0;"
                          " 3: return r; }");
        CHECK_FALSE(conflicts(P("x.0"), P("x.1"), pair, "main"));
    }

    TEST_CASE("deref resolves through the loan") {
        auto tp = corpus("loan_conflict");
        CHECK(conflicts(P("*y"), P("x"), tp, "main"));
        CHECK(conflicts(P("*y"), P("x.0"), tp, "main"));
        CHECK_FALSE(conflicts(P("*y"), P("z"), tp, "main"));
    }

    TEST_CASE("symmetric and reflexive") {
        auto progs = fuzz_programs(150, 10);
        for (const auto& name : corpus_names()) {
            progs.push_back(corpus(name));
        }
        for (const auto& tp : progs) {
            auto fb = build_facts(tp);
            for (const auto& [fn, aux] : fb.aux) {
                for (const auto& a : aux.tracked) {
                    CHECK(conflicts(fb, fn, a, a));
                    for (const auto& b : aux.tracked) {
                        CHECK(conflicts(fb, fn, a, b) == conflicts(fb, fn, b, a));
                    }
                }
            }
        }
    }
}

TEST_SUITE("flows") {
    TEST_CASE("id needs 'a :> 'b") {
        auto fb = build_facts(corpus("id_no_outlives"));
        REQUIRE(fb.flows.size() == 1);
        const auto& f = *fb.flows.begin();
        CHECK(f.longer == "a");
        CHECK(f.shorter == "b");
        CHECK(f.path == P("y"));
        CHECK(f.at == at(1, "id"));
    }

    TEST_CASE("no abstract lifetimes, no flows") {
        CHECK(build_facts(corpus("loan_conflict")).flows.empty());
    }

    TEST_CASE("unrelated parameters") {
        auto fb = build_facts(typed(
            "fn f<'a, 'b>(x: &'a shared u32, y: &'b shared u32) -> u32 { let r: u32; 0: r = *x; 1: return r; }\n"
            "fn main() { let v: u32; let p: &shared u32; let r: u32;"
            " 0: v = 0; 1: p = &shared v; 2: r = call f(p, p); 3: return r; }"));
        CHECK(fb.flows.empty());
    }

    TEST_CASE("declared lifetimes only, and facts stay inside their function") {
        auto progs = fuzz_programs(400, 10);
        for (const auto& name : corpus_names()) {
            progs.push_back(corpus(name));
        }
        for (const auto& tp : progs) {
            auto fb = build_facts(tp);
            for (const auto& fl : fb.flows) {
                const auto& params = tp.fn(fl.at.function).lifetime_params;
                CHECK(std::count(params.begin(), params.end(), fl.longer) == 1);
                CHECK(std::count(params.begin(), params.end(), fl.shorter) == 1);
            }
            for (const auto& [loan, i] : fb.loan_live_at) {
                CHECK(loan.issued.function == i.function);
            }
            for (const auto& [loan, i] : fb.loan_issued_at) {
                CHECK(loan.issued == i);
            }
        }
    }
}

TEST_CASE("export is sorted and sectioned") {
    auto text = export_facts(build_facts(corpus("loan_conflict")));
    CHECK(text.find("# read_at\nmain:1\tx\nmain:3\t*y\nmain:4\tz\n") == 0);
    CHECK(text.find("# loan_live_at\nmain:2\t&shared x@main:1\nmain:3\t&shared x@main:1\n") != std::string::npos);
}
