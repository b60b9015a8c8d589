#include "ownlab/diffcheck.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace ownlab;
using namespace ownlab::diffcheck;
using ownlab::testing::corpus;
using ownlab::testing::corpus_names;
using ownlab::testing::parsed;
using ownlab::testing::typed;

namespace {

auto instruction_count(const lang::Program& p) -> std::size_t {
    std::size_t n = 0;
    for (const auto& [_, f] : p.functions) {
        n += f.body.size();
    }
    return n;
}

// Theorem checker with the borrowed-W/O rule switched off.
const perms::Options kBroken{{perms::MissingRule::WriteOwnWhileLoaned}};

} // namespace

TEST_SUITE("generator") {
    TEST_CASE("every seed yields a well-formed, well-typed program") {
        FuzzConfig cfg;
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            cfg.seed = seed;
            cfg.abstract_lifetimes = seed % 2 == 0;
            cfg.calls = seed % 5 != 0;
            auto p = generate_program(cfg);
            CAPTURE(seed);
            CHECK(lang::well_formed(p).empty());
            CHECK(lang::type_check(p).ok());
        }
    }

    TEST_CASE("deterministic in the seed") {
        FuzzConfig cfg;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            cfg.seed = seed;
            CHECK(generate_program(cfg) == generate_program(cfg));
        }
        cfg.seed = 1;
        auto a = generate_program(cfg);
        cfg.seed = 2;
        CHECK_FALSE(a == generate_program(cfg));
    }

    TEST_CASE("respects bounds and toggles") {
        FuzzConfig cfg;
        cfg.max_instructions = 6;
        cfg.max_functions = 1;
        cfg.calls = false;
        cfg.abstract_lifetimes = false;
        for (std::uint64_t seed = 0; seed < 500; ++seed) {
            cfg.seed = seed;
            auto p = generate_program(cfg);
            REQUIRE(p.functions.size() == 1);
            const auto& f = p.functions.at("main");
            CHECK(f.body.size() <= 6);
            CHECK(f.lifetime_params.empty());
            for (const auto& ins : f.body) {
                CHECK_FALSE(std::holds_alternative<lang::Call>(ins));
            }
        }
    }

    TEST_CASE("config validation") {
        CHECK(FuzzConfig{}.validate().empty());
        FuzzConfig zero;
        zero.weights = Weights{0, 0, 0, 0, 0, 0, 0, 0};
        CHECK_FALSE(zero.validate().empty());
        FuzzConfig neg;
        neg.weights.loan = -1;
        CHECK_FALSE(neg.validate().empty());
        FuzzConfig tiny;
        tiny.max_instructions = 0;
        CHECK_FALSE(tiny.validate().empty());
    }
}

TEST_SUITE("oracle") {
    TEST_CASE("corpus") {
        for (const auto& name : corpus_names()) {
            CAPTURE(name);
            auto tp = corpus(name);
            auto o = oracle_access_errors(tp);
            REQUIRE(o);
            CHECK(*o == polonius::access_errors(facts::build_facts(tp)));
        }
        CHECK(oracle_access_errors(corpus("loan_conflict"))->size() == 1);
        CHECK(oracle_access_errors(corpus("move_conflict"))->size() == 1);
    }

    TEST_CASE("too large") {
        std::string src = "fn main() { let r: u32; ";
        for (int i = 0; i < 13; ++i) {
            src += std::to_string(i) + ": r = 0; ";
        }
        src += "13: return r; }";
        CHECK_FALSE(oracle_access_errors(typed(src)));
        CHECK(check_oracle(typed(src)).kind == Check::Kind::NotApplicable);
    }

    TEST_CASE("agrees with the pipeline on fuzz programs") {
        FuzzConfig cfg;
        cfg.max_instructions = 12;
        std::size_t errors = 0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            cfg.seed = seed;
            auto tp = *lang::type_check(generate_program(cfg)).typed;
            auto o = oracle_access_errors(tp);
            REQUIRE(o);
            CAPTURE(lang::pretty_print(tp.program));
            CHECK(*o == polonius::access_errors(facts::build_facts(tp)));
            CHECK(check_oracle(tp).kind == Check::Kind::Holds);
            errors += o->size();
        }
        CHECK(errors > 50);
    }
}

TEST_SUITE("properties") {
    TEST_CASE("theorem on the corpus") {
        for (const auto& name : corpus_names()) {
            CAPTURE(name);
            CHECK(check_theorem(corpus(name)).kind == Check::Kind::Holds);
        }
    }

    TEST_CASE("theorem violated by a broken checker") {
        auto c = check_theorem(corpus("loan_conflict"), kBroken);
        REQUIRE(c.kind == Check::Kind::Violation);
        REQUIRE(c.report);
        CHECK(c.report->property == Property::Theorem);
        // the stored report reproduces
        CHECK(violates(Property::Theorem, kBroken)(parsed(c.report->to_own())));
    }

    TEST_CASE("soundness") {
        auto copy = typed("fn main() { let mut x: u32; let y: u32; 0: x = 0; 1: y = x; 2: x = 1; 3: return y; }");
        CHECK(check_soundness(copy).kind == Check::Kind::Holds);
        auto uaf = corpus("use_after_free");
        auto v = analyze(uaf);
        CHECK(v.polonius_rejects());
        CHECK(v.perms_rejects());
        CHECK(check_soundness(uaf).kind == Check::Kind::Holds);
        CHECK(check_soundness(corpus("id_outlives")).kind == Check::Kind::NotApplicable);
        auto loop = typed("fn main() { let c: bool; 0: c = true; 1: if c then 1 else 2; 2: return c; }");
        CHECK(check_soundness(loop, {50}).kind == Check::Kind::Inconclusive);
    }

    // A second drop is a move, not a read, so only perms rejects it.
    TEST_CASE("soundness violated when the move rule is off") {
        auto tp = corpus("double_free");
        CHECK_FALSE(analyze(tp).polonius_rejects());
        CHECK(check_soundness(tp).kind == Check::Kind::Holds);
        auto c = check_soundness(tp, {}, {{perms::MissingRule::Moved}});
        REQUIRE(c.kind == Check::Kind::Violation);
        REQUIRE(c.report->outcome);
        CHECK(c.report->outcome->ub->kind == interp::UbReport::Kind::DoubleFree);
    }
}

TEST_SUITE("shrink") {
    TEST_CASE("mutated checker counterexample shrinks small") {
        auto bad = violates(Property::Theorem, kBroken);
        FuzzConfig cfg;
        cfg.max_instructions = 12;
        std::size_t shrunk = 0;
        for (std::uint64_t seed = 0; seed < 3000 && shrunk < 5; ++seed) {
            cfg.seed = seed;
            auto p = generate_program(cfg);
            if (!bad(p)) {
                continue;
            }
            auto small = shrink(p, bad);
            CAPTURE(lang::pretty_print(small));
            CHECK(bad(small));
            CHECK(instruction_count(small) <= 6);
            CHECK(instruction_count(small) <= instruction_count(p));
            CHECK(shrink(small, bad) == small);
            ++shrunk;
        }
        CHECK(shrunk == 5);
        auto small = shrink(corpus("loan_conflict").program, bad);
        CHECK(instruction_count(small) <= 6);
    }

    TEST_CASE("non-violating program") {
        CHECK_THROWS_AS(shrink(corpus("box_borrow").program, violates(Property::Theorem)), std::invalid_argument);
    }
}

TEST_SUITE("campaign") {
    TEST_CASE("empty") {
        auto r = campaign({}, {Property::Theorem, Property::Soundness}, 0);
        CHECK(r.generated == 0);
        CHECK(r.violations.empty());
        CHECK(r.incompleteness_catalog.empty());
        CHECK(r.inconclusive_rate() == 0.0);
    }

    TEST_CASE("no violations, some incompleteness, deterministic") {
        FuzzConfig cfg;
        cfg.seed = 42;
        std::vector<Property> props{Property::Theorem, Property::Soundness, Property::OracleEquivalence};
        auto a = campaign(cfg, props, 600);
        auto b = campaign(cfg, props, 600);
        CHECK(a.generated == 600);
        CHECK(a.violations.empty());
        CHECK(a.accepted_by_both + a.rejected_by_both + a.rejected_by_perms_only + a.rejected_by_polonius_only == 600);
        CHECK(a.rejected_by_polonius_only == 0);
        CHECK(a.incomplete > 0);
        CHECK_FALSE(a.incompleteness_catalog.empty());
        CHECK(a.incompleteness_catalog.size() <= a.catalog_limit);
        CHECK(a.records() == b.records());
        CHECK(a.summary() == b.summary());

        std::istringstream in(a.records());
        for (std::string line; std::getline(in, line);) {
            CHECK(nlohmann::json::parse(line)["schema"] == 1);
        }
    }
}
