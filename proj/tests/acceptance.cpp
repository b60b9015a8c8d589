//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "ownlab/diffcheck.hpp"
#include "ownlab/render.hpp"
#include "support.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>

using namespace ownlab;
using ownlab::testing::corpus;
using ownlab::testing::corpus_names;
using ownlab::testing::golden_dir;
using ownlab::testing::read_text;

namespace {

struct Outcome {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            detail.str("");
            detail << what;
        }
        ok = ok && cond;
    }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.ok = false;
        o.detail.str("");
        o.detail << "exception: " << e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > budget_s) {
        o.ok = false;
        o.detail << "; over time budget of " << budget_s << " s";
    }
    failures += o.ok ? 0 : 1;
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << " [" << std::fixed
              << std::setprecision(2) << secs << " s]" << std::endl;
}

auto heap_ptr(interp::HeapLoc loc) -> interp::RtValue {
    return interp::RtValue::pointer({interp::Segment::heap(loc), {}});
}

auto ids(std::initializer_list<std::size_t> xs) -> std::vector<lang::InstructionId> {
    std::vector<lang::InstructionId> out;
    for (auto x : xs) {
        out.push_back({"main", x});
    }
    return out;
}

struct Verdict {
    std::vector<polonius::AccessErrorDiag> access;
    std::vector<polonius::SubsetErrorDiag> subset;
    std::vector<perms::PermissionError> permission;
};

auto verdict(const lang::TypedProgram& tp) -> Verdict {
    auto v = diffcheck::analyze(tp);
    return {v.access, v.subset, v.permission};
}

} // namespace

int main() {
    criterion("trace regression", 1.0, [](Outcome& o) {
        auto tp = corpus("use_after_free");
        auto snaps = interp::trace(tp, ids({0, 1, 2}));
        o.expect(snaps.size() == 4, "expected three states and a UB snapshot");
        if (snaps.size() != 4) {
            return;
        }
        using Env = std::map<std::string, interp::RtValue>;
        using Heap = std::map<interp::HeapLoc, interp::RtValue>;
        auto zero = interp::RtValue::of(lang::Constant::number(0));
        o.expect(snaps[0].state.stack.at(0).env.empty() && snaps[0].state.heap.empty(), "L1 not empty");
        o.expect(snaps[1].state.stack.at(0).env == Env{{"x", heap_ptr(0)}}, "L2 stack");
        o.expect(snaps[1].state.heap == Heap{{0, zero}}, "L2 heap");
        o.expect(snaps[2].state.stack.at(0).env == Env{{"x", heap_ptr(0)}}, "L3 stack");
        o.expect(snaps[2].state.heap.empty(), "L3 heap");
        auto out = interp::run(tp);
        o.expect(out.kind == interp::Outcome::Kind::Ub && out.ub->kind == interp::UbReport::Kind::UseAfterFree,
                 "run does not end in use-after-free");
        if (o.ok) {
            o.detail << "L1 {}, L2 x->heap#0 {heap#0: 0}, L3 x->heap#0 {}, " << out.ub->str();
        }
    });

    criterion("loan, move and lifetime example regressions", 1.0, [](Outcome& o) {
        using perms::Cause;
        auto loan = verdict(corpus("loan_conflict"));
        o.expect(loan.access.size() == 1 && loan.access[0].rule == polonius::Rule::BorrowConflict &&
                     loan.access[0].sub == polonius::SubRule::WriteInvalid,
                 "loan conflict: expected one write-invalid borrow conflict");
        o.expect(loan.permission.size() == 1 && loan.permission[0].path.str() == "x.0" &&
                     loan.permission[0].perm == perms::Permission::W &&
                     loan.permission[0].cause.kind == Cause::Kind::Borrowed,
                 "loan conflict: expected one permission error (x.0, W, borrowed)");

        auto move = verdict(corpus("move_conflict"));
        o.expect(move.access.size() == 1 && move.access[0].rule == polonius::Rule::MoveConflict,
                 "move conflict: expected one move conflict");
        o.expect(move.permission.size() == 1 && move.permission[0].path.str() == "*x" &&
                     move.permission[0].perm == perms::Permission::R &&
                     move.permission[0].cause.kind == Cause::Kind::Moved,
                 "move conflict: expected one permission error (*x, R, moved)");

        auto bad = verdict(corpus("id_no_outlives"));
        o.expect(bad.access.empty() && bad.subset.size() == 1, "id: expected one subset error");
        o.expect(bad.permission.size() == 1 && bad.permission[0].perm == perms::Permission::F,
                 "id: expected one F permission error");
        auto good = verdict(corpus("id_outlives"));
        o.expect(good.access.empty() && good.subset.empty() && good.permission.empty(),
                 "id with outlives: expected no diagnostics");
        if (o.ok) {
            o.detail << loan.access[0].str() << " | " << loan.permission[0].str() << " | " << move.access[0].str()
                     << " | " << move.permission[0].str() << " | " << bad.subset[0].str();
        }
    });

    criterion("access errors imply permission errors (10000 programs)", 300.0, [](Outcome& o) {
        auto r = diffcheck::campaign({}, {diffcheck::Property::Theorem}, 10000);
        o.expect(r.generated == 10000, "generated " + std::to_string(r.generated));
        o.expect(r.violations.empty(), std::to_string(r.violations.size()) + " violations");
        o.detail << r.violations.size() << " violations; accepted by both " << r.accepted_by_both
                 << ", rejected by both " << r.rejected_by_both << ", by perms only " << r.rejected_by_perms_only
                 << ", by polonius only " << r.rejected_by_polonius_only;
    });

    criterion("soundness of accepted programs (10000 monomorphic programs)", 300.0, [](Outcome& o) {
        diffcheck::FuzzConfig cfg;
        cfg.abstract_lifetimes = false;
        auto r = diffcheck::campaign(cfg, {diffcheck::Property::Soundness}, 10000, {100000});
        o.expect(r.generated == 10000, "generated " + std::to_string(r.generated));
        o.expect(r.violations.empty(), std::to_string(r.violations.size()) + " violations");
        o.expect(r.inconclusive_rate() < 0.05, "inconclusive rate too high");
        o.detail << r.violations.size() << " violations; " << r.soundness_checked << " accepted programs run, "
                 << r.inconclusive << " hit the step limit (rate " << std::setprecision(4)
                 << 100.0 * r.inconclusive_rate() << "%); " << r.incomplete << " rejected yet terminating";
    });

    criterion("pipeline equals brute-force oracle (1000 programs, <= 12 instructions)", 120.0, [](Outcome& o) {
        diffcheck::FuzzConfig cfg;
        cfg.max_instructions = 12;
        auto r = diffcheck::campaign(cfg, {diffcheck::Property::OracleEquivalence}, 1000);
        o.expect(r.oracle_checked == 1000, "oracle checked " + std::to_string(r.oracle_checked));
        o.expect(r.violations.empty(), std::to_string(r.violations.size()) + " mismatches");
        o.detail << r.violations.size() << " mismatches over " << r.oracle_checked << " programs";
    });

    criterion("incompleteness witnesses in the corpus", 5.0, [](Outcome& o) {
        std::vector<std::string> witnesses;
        for (const auto& name : corpus_names()) {
            auto tp = corpus(name);
            auto v = diffcheck::analyze(tp);
            if (v.polonius_rejects() && v.perms_rejects() &&
                interp::run(tp).kind == interp::Outcome::Kind::Terminated) {
                witnesses.push_back(name);
            }
        }
        for (std::string must : {"disjoint_fields", "branch_disjoint"}) {
            o.expect(std::count(witnesses.begin(), witnesses.end(), must) == 1, must + " is not a witness");
        }
        o.expect(witnesses.size() >= 2, "fewer than two witnesses");
        o.detail << "rejected by both and terminating:";
        for (const auto& w : witnesses) {
            o.detail << " " << w;
        }
    });

    criterion("permission-step golden and telescoping", 2.0, [](Outcome& o) {
        auto tp = corpus("box_borrow");
        auto fb = facts::build_facts(tp);
        auto states = perms::missing_at(tp, fb).at("main");
        const auto& f = tp.fn("main");
        auto steps = perms::steps(f, states);
        auto doc = render::render_perm_table(steps, {}, render::Format::Text);
        o.expect(doc.content == read_text(golden_dir() / "box_borrow.steps"), "step table differs from golden");
        auto facts = render::logical_facts(doc);
        for (std::string want : {"delta 0 x +R+W+O birth", "delta 1 x -W-O borrow-start", "delta 1 y +R+O birth",
                                 "delta 1 *y +R birth", "delta 2 y -R-O death", "delta 2 x +W+O regain"}) {
            o.expect(facts.count(want) == 1, "missing " + want);
        }
        // Telescoping on the golden program and the whole corpus.
        std::size_t checked = 0;
        for (const auto& name : corpus_names()) {
            auto c = corpus(name);
            auto cst = perms::missing_at(c, facts::build_facts(c));
            for (const auto& [fn, st] : cst) {
                for (const auto& s : perms::steps(c.fn(fn), st)) {
                    o.expect(perms::apply(st[s.from.index].shown(), s) == st[s.to.index].shown(),
                             name + ": step " + s.label() + " does not telescope");
                    ++checked;
                }
            }
        }
        auto shown = states[0].shown();
        for (const auto& s : steps) {
            shown = perms::apply(shown, s);
            o.expect(shown == states[s.to.index].shown(), "box_borrow fold breaks at " + s.label());
        }
        o.detail << steps.size() << " steps match golden; " << checked << " corpus steps telescope";
    });

    criterion("renderer determinism and text/svg agreement", 10.0, [](Outcome& o) {
        std::size_t docs = 0;
        for (const auto& name : corpus_names()) {
            auto tp = corpus(name);
            auto snaps = interp::trace(tp, {}, {1000});
            auto fb = facts::build_facts(tp);
            auto states = perms::missing_at(tp, fb);
            auto marks = perms::expectations(fb, states);
            for (auto level : {render::Level::Abstracted, render::Level::Expanded}) {
                render::RenderOptions opts{level};
                using Make = std::function<render::DiagramDoc(render::Format)>;
                std::vector<Make> makers{
                    [&](render::Format f) { return render::render_memory_trace(tp, snaps, opts, f); },
                    [&](render::Format f) { return render::render_annotated_listing(tp.program, marks, opts, f); },
                };
                for (const auto& [fn, st] : states) {
                    makers.push_back([&, fn = fn](render::Format f) {
                        return render::render_perm_table(perms::steps(tp.fn(fn), states.at(fn)), opts, f, &tp.fn(fn));
                    });
                }
                for (const auto& make : makers) {
                    std::set<std::string> text_facts;
                    for (auto f : {render::Format::Text, render::Format::Svg, render::Format::Html}) {
                        auto a = make(f);
                        auto b = make(f);
                        o.expect(a.content == b.content, name + ": " + std::string(render::to_string(f)) +
                                                             " output differs between runs");
                        auto facts = render::logical_facts(a);
                        if (f == render::Format::Text) {
                            text_facts = facts;
                        } else {
                            o.expect(facts == text_facts, name + ": " + std::string(render::to_string(f)) +
                                                              " facts differ from text");
                        }
                        ++docs;
                    }
                }
            }
        }
        o.detail << docs << " documents byte-identical across runs, facts equal across formats";
    });

    criterion("parse and pretty-print round trip", 10.0, [](Outcome& o) {
        std::size_t n = 0;
        for (const auto& name : corpus_names()) {
            auto p = ownlab::testing::parsed(ownlab::testing::corpus_text(name));
            o.expect(ownlab::testing::parsed(lang::pretty_print(p)) == p, name + " does not round-trip");
            ++n;
        }
        diffcheck::FuzzConfig cfg;
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            cfg.seed = seed;
            auto p = diffcheck::generate_program(cfg);
            o.expect(ownlab::testing::parsed(lang::pretty_print(p)) == p,
                     "fuzz seed " + std::to_string(seed) + " does not round-trip");
            ++n;
        }
        o.detail << n << " programs, 0 failures";
    });

    return failures == 0 ? 0 : 1;
}
