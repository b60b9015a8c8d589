#include "ownlab/diffcheck.hpp"
#include "ownlab/polonius.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <random>

using namespace ownlab;
using namespace ownlab::polonius;
using lang::InstructionId;
using ownlab::testing::corpus;
using ownlab::testing::corpus_names;
using ownlab::testing::typed;

namespace {

auto at(std::size_t i, std::string fn = "main") -> InstructionId { return {std::move(fn), i}; }

auto fuzz_programs(std::size_t count, bool abstract) -> std::vector<lang::TypedProgram> {
    std::vector<lang::TypedProgram> out;
    diffcheck::FuzzConfig cfg;
    cfg.abstract_lifetimes = abstract;
    for (std::uint64_t seed = 0; seed < count; ++seed) {
        cfg.seed = seed;
        out.push_back(*lang::type_check(diffcheck::generate_program(cfg)).typed);
    }
    return out;
}

// Closure by repeated DFS from every lifetime.
auto closure_oracle(const lang::FunctionDef& f) -> std::set<std::pair<std::string, std::string>> {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& start : f.lifetime_params) {
        std::set<std::string> seen;
        std::vector<std::string> todo{start};
        while (!todo.empty()) {
            auto l = todo.back();
            todo.pop_back();
            if (!seen.insert(l).second) {
                continue;
            }
            out.insert({start, l});
            for (const auto& o : f.outlives) {
                if (o.longer == l) {
                    todo.push_back(o.shorter);
                }
            }
        }
    }
    return out;
}

} // namespace

TEST_SUITE("access errors") {
    TEST_CASE("write under a live shared loan") {
        auto errs = access_errors(facts::build_facts(corpus("loan_conflict")));
        REQUIRE(errs.size() == 1);
        CHECK(errs[0].rule == Rule::BorrowConflict);
        CHECK(errs[0].sub == std::optional<SubRule>(SubRule::WriteInvalid));
        CHECK(errs[0].at == at(2));
        CHECK(errs[0].path.str() == "x.0");
        CHECK(errs[0].loan->target.str() == "x");
        CHECK(errs[0].str() == "main:2: borrow conflict: write of x.0 invalidates live loan &shared x@main:1");
    }

    TEST_CASE("read after move") {
        auto errs = access_errors(facts::build_facts(corpus("move_conflict")));
        REQUIRE(errs.size() == 1);
        CHECK(errs[0].rule == Rule::MoveConflict);
        CHECK(errs[0].at == at(2));
        CHECK_FALSE(errs[0].loan);
    }

    TEST_CASE("reading under a shared loan is fine") {
        auto fb = facts::build_facts(corpus("box_borrow"));
        CHECK(access_errors(fb).empty());
        for (const auto& inv : invalidations(fb)) {
            CHECK(inv.rule != SubRule::ReadInvalid);
        }
    }

    TEST_CASE("moving the borrowed box") {
        auto fb = facts::build_facts(typed("fn main() { let x: box u32; let y: &shared box u32; let z: u32;"
                                           " 0: x = box 0; 1: y = &shared x; 2: drop x; 3: z = **y; 4: return z; }"));
        auto errs = access_errors(fb);
        // **y is not a path of x, so the later read is caught only via the loan.
        REQUIRE(errs.size() == 1);
        CHECK(errs[0].sub == std::optional<SubRule>(SubRule::MoveInvalid));
        CHECK(errs[0].at == at(2));
    }

    TEST_CASE("reading through a unique loan invalidates it") {
        auto fb = facts::build_facts(typed("fn main() { let mut x: u32; let y: &unique u32; let z: u32;"
                                           " 0: x = 0; 1: y = &unique x; 2: z = x; 3: *y = 1; 4: return z; }"));
        auto errs = access_errors(fb);
        REQUIRE(errs.size() == 1);
        CHECK(errs[0].sub == std::optional<SubRule>(SubRule::ReadInvalid));
    }

    TEST_CASE("accepted corpus programs") {
        for (std::string name : {"box_borrow", "id_outlives", "id_no_outlives", "get_or_default"}) {
            CAPTURE(name);
            CHECK(access_errors(facts::build_facts(corpus(name))).empty());
        }
        // conservative rejections
        CHECK_FALSE(access_errors(facts::build_facts(corpus("disjoint_fields"))).empty());
        CHECK_FALSE(access_errors(facts::build_facts(corpus("branch_disjoint"))).empty());
    }

    TEST_CASE("dropping liveness facts never adds errors") {
        std::mt19937_64 rng(7);
        for (const auto& tp : fuzz_programs(300, false)) {
            auto fb = facts::build_facts(tp);
            auto before = access_errors(fb);
            auto thinned = fb;
            for (auto it = thinned.loan_live_at.begin(); it != thinned.loan_live_at.end();) {
                it = rng() % 2 ? thinned.loan_live_at.erase(it) : std::next(it);
            }
            auto after = access_errors(thinned);
            std::set<std::pair<InstructionId, std::optional<facts::LoanId>>> keys;
            for (const auto& e : before) {
                keys.insert({e.at, e.loan});
            }
            for (const auto& e : after) {
                CHECK(keys.count({e.at, e.loan}) == 1);
            }
            CHECK(after.size() <= before.size());
        }
    }

    TEST_CASE("one borrow conflict per loan and instruction, sorted, stable") {
        for (const auto& tp : fuzz_programs(300, false)) {
            auto fb = facts::build_facts(tp);
            auto errs = access_errors(fb);
            CHECK(errs == access_errors(facts::build_facts(tp)));
            CHECK(std::is_sorted(errs.begin(), errs.end(), [](const auto& a, const auto& b) {
                return std::tie(a.at, a.rule, a.loan, a.path) < std::tie(b.at, b.rule, b.loan, b.path);
            }));
            std::set<std::pair<InstructionId, facts::LoanId>> seen;
            for (const auto& e : errs) {
                if (e.rule == Rule::BorrowConflict) {
                    CHECK(seen.insert({e.at, *e.loan}).second);
                    CHECK(fb.is_live(*e.loan, e.at));
                } else {
                    CHECK(fb.read_at.count({e.path, e.at}) == 1);
                    CHECK(fb.moved_before.count({e.path, e.at}) == 1);
                }
            }
        }
    }
}

TEST_SUITE("subset errors") {
    TEST_CASE("undeclared 'a :> 'b") {
        auto tp = corpus("id_no_outlives");
        auto errs = subset_errors(facts::build_facts(tp), tp.program);
        REQUIRE(errs.size() == 1);
        CHECK(errs[0].longer == "a");
        CHECK(errs[0].shorter == "b");
        CHECK(errs[0].at == at(1, "id"));
        CHECK(errs[0].str() == "id:1: lifetime error: 'a must outlive 'b (because y flows here)");
    }

    TEST_CASE("declared 'a :> 'b") {
        auto tp = corpus("id_outlives");
        CHECK(subset_errors(facts::build_facts(tp), tp.program).empty());
    }

    TEST_CASE("no abstract lifetimes") {
        for (const auto& tp : fuzz_programs(200, false)) {
            CHECK(subset_errors(facts::build_facts(tp), tp.program).empty());
        }
    }

    TEST_CASE("closure") {
        lang::FunctionDef f;
        f.lifetime_params = {"a", "b", "c", "d"};
        f.outlives = {{"a", "b"}, {"b", "c"}};
        auto rel = outlives_closure(f.outlives, f.lifetime_params);
        CHECK(rel == closure_oracle(f));
        CHECK(rel.count({"a", "c"}) == 1);
        CHECK(rel.count({"d", "d"}) == 1);
        CHECK(rel.count({"c", "a"}) == 0);
    }

    TEST_CASE("errors are exactly the uncovered flows, and declaring more removes them") {
        std::size_t flows = 0;
        for (auto tp : fuzz_programs(400, true)) {
            auto fb = facts::build_facts(tp);
            flows += fb.flows.size();
            auto errs = subset_errors(fb, tp.program);
            std::size_t expected = 0;
            for (const auto& fl : fb.flows) {
                auto rel = closure_oracle(tp.fn(fl.at.function));
                expected += rel.count({fl.longer, fl.shorter}) == 0 ? 1 : 0;
            }
            CHECK(errs.size() == expected);

            for (auto& [name, f] : tp.program.functions) {
                f.outlives.clear();
                for (const auto& a : f.lifetime_params) {
                    for (const auto& b : f.lifetime_params) {
                        f.outlives.push_back({a, b});
                    }
                }
            }
            CHECK(subset_errors(fb, tp.program).empty());
        }
        CHECK(flows > 0);
    }
}

TEST_CASE("records") {
    auto tp = corpus("loan_conflict");
    auto fb = facts::build_facts(tp);
    auto text = records(access_errors(fb), subset_errors(fb, tp.program));
    auto rec = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(rec["schema"] == 1);
    CHECK(rec["function"] == "main");
    CHECK(rec["instruction"] == 2);
    CHECK(rec["rule"] == "borrow-conflict");
}
