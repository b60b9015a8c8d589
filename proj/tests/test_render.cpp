#include "ownlab/diffcheck.hpp"
#include "ownlab/render.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace ownlab;
using namespace ownlab::render;
using ownlab::testing::corpus;
using ownlab::testing::corpus_names;
using ownlab::testing::golden_dir;
using ownlab::testing::read_text;
using ownlab::testing::typed;

namespace {

auto ids(std::initializer_list<std::size_t> xs) -> std::vector<lang::InstructionId> {
    std::vector<lang::InstructionId> out;
    for (auto x : xs) {
        out.push_back({"main", x});
    }
    return out;
}

auto with_prefix(const std::set<std::string>& facts, std::string_view prefix) -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& f : facts) {
        if (f.rfind(prefix, 0) == 0) {
            out.push_back(f);
        }
    }
    return out;
}

auto words(const std::string& s) -> std::vector<std::string> {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

struct Perms {
    facts::FactBase fb;
    perms::PermissionStates states;
};

auto perms_of(const lang::TypedProgram& tp) -> Perms {
    auto fb = facts::build_facts(tp);
    auto st = perms::missing_at(tp, fb);
    return {std::move(fb), std::move(st)};
}

auto main_steps(const lang::TypedProgram& tp) -> std::vector<perms::PermStep> {
    return perms::steps(tp.fn("main"), perms_of(tp).states.at("main"));
}

auto body(const DiagramDoc& d) -> std::string { return d.content.substr(d.content.find('\n') + 1); }

constexpr Format kFormats[] = {Format::Text, Format::Svg, Format::Html};

// Every diagram kind for a program, in every format and level.
auto all_docs(const lang::TypedProgram& tp) -> std::vector<std::vector<DiagramDoc>> {
    auto snaps = interp::trace(tp, {}, {200});
    auto p = perms_of(tp);
    auto marks = perms::expectations(p.fb, p.states);
    std::vector<std::vector<DiagramDoc>> out;
    for (auto level : {Level::Abstracted, Level::Expanded}) {
        RenderOptions opts{level};
        std::vector<DiagramDoc> mem, steps, listing;
        for (auto f : kFormats) {
            mem.push_back(render_memory_trace(tp, snaps, opts, f));
            steps.push_back(render_perm_table(perms::steps(tp.fn("main"), p.states.at("main")), opts, f,
                                              &tp.fn("main")));
            listing.push_back(render_annotated_listing(tp.program, marks, opts, f));
        }
        out.push_back(mem);
        out.push_back(steps);
        out.push_back(listing);
    }
    return out;
}

// Arrows only point at cells, tombstones or slots drawn in the same state.
auto check_arrows(const DiagramDoc& doc) -> std::size_t {
    auto facts = logical_facts(doc);
    std::set<std::pair<std::string, std::string>> present;
    for (const auto& f : facts) {
        auto w = words(f);
        if (w[0] == "var" || w[0] == "cell" || w[0] == "tomb") {
            present.insert({w[1], w[2]});
        }
    }
    std::size_t arrows = 0;
    for (const auto& f : with_prefix(facts, "arrow ")) {
        auto w = words(f);
        CAPTURE(f);
        CHECK(present.count({w[1], w[3]}) == 1);
        ++arrows;
    }
    return arrows;
}

} // namespace

TEST_SUITE("memory trace") {
    TEST_CASE("box, drop, deref") {
        auto tp = corpus("use_after_free");
        auto doc = render_memory_trace(tp, interp::trace(tp, ids({0, 1, 2})), {}, Format::Text);
        auto facts = logical_facts(doc);
        CHECK(with_prefix(facts, "state ") ==
              std::vector<std::string>{"state 0 L1", "state 1 L2", "state 2 L3", "state 3 UB"});
        CHECK(with_prefix(facts, "var 0 ").empty());
        CHECK(facts.count("cell 1 heap#0 0"));
        CHECK(facts.count("arrow 1 x@0 heap#0"));
        CHECK(facts.count("tomb 2 heap#0"));
        CHECK(facts.count("arrow 2 x@0 heap#0"));
        CHECK(facts.count("moved 2 x@0"));
        auto ub = with_prefix(facts, "ub 3 ");
        REQUIRE(ub.size() == 1);
        CHECK(ub[0].find("undefined behavior") != std::string::npos);
        CHECK(doc.content.find("!! undefined behavior") != std::string::npos);
        CHECK(doc.content.find("heap#0 †") != std::string::npos);
        CHECK(doc.content.find("~x~") != std::string::npos);
    }

    TEST_CASE("one snapshot without heap") {
        auto tp = typed("fn main() { let r: u32; 0: r = 0; 1: return r; }");
        auto doc = render_memory_trace(tp, interp::trace(tp, ids({1})), {}, Format::Svg);
        auto facts = logical_facts(doc);
        CHECK(with_prefix(facts, "state ").size() == 1);
        CHECK(with_prefix(facts, "frame ").size() == 1);
        CHECK(facts.count("var 0 r@0 0"));
        CHECK(with_prefix(facts, "arrow ").empty());
        CHECK(with_prefix(facts, "cell ").empty());
    }

    TEST_CASE("heap diff golden") {
        auto tp = typed(read_text(golden_dir() / "heap_diff.own"));
        auto doc = render_memory_trace(tp, interp::trace(tp, ids({1, 2})), {}, Format::Text);
        CHECK(doc.content == read_text(golden_dir() / "heap_diff.txt"));
        auto changed = with_prefix(logical_facts(doc), "changed ");
        CHECK(changed == std::vector<std::string>{"changed 1 heap#1", "changed 1 y@0"});
    }

    TEST_CASE("abstracted boxes are inline") {
        auto tp = corpus("use_after_free");
        auto snaps = interp::trace(tp, ids({1, 2}));
        auto doc = render_memory_trace(tp, snaps, {Level::Abstracted}, Format::Text);
        CHECK(doc.content.find("box(0)") != std::string::npos);
        CHECK(doc.content.find("box(†)") != std::string::npos);
        CHECK(with_prefix(logical_facts(doc), "cell ").empty());
    }

    TEST_CASE("frames of a call") {
        auto tp = typed("fn g(b: box u32) -> u32 { let r: u32; 0: r = *b; 1: drop b; 2: return r; }\n"
                        "fn main() { let b: box u32; let r: u32; 0: b = box 4; 1: r = call g(b); 2: return r; }");
        auto doc = render_memory_trace(tp, interp::trace(tp, {{"g", 1}}), {}, Format::Text);
        auto facts = logical_facts(doc);
        CHECK(facts.count("frame 0 0 main"));
        CHECK(facts.count("frame 0 1 g"));
        CHECK(facts.count("arrow 0 b@1 heap#0"));
        CHECK(check_arrows(doc) >= 2);
    }

    TEST_CASE("arrows never dangle") {
        std::vector<lang::TypedProgram> progs;
        for (const auto& name : corpus_names()) {
            progs.push_back(corpus(name));
        }
        diffcheck::FuzzConfig cfg;
        for (std::uint64_t seed = 0; seed < 300; ++seed) {
            cfg.seed = seed;
            progs.push_back(*lang::type_check(diffcheck::generate_program(cfg)).typed);
        }
        std::size_t arrows = 0;
        for (const auto& tp : progs) {
            auto snaps = interp::trace(tp, {}, {200});
            for (auto level : {Level::Abstracted, Level::Expanded}) {
                CAPTURE(lang::pretty_print(tp.program));
                arrows += check_arrows(render_memory_trace(tp, snaps, {level}, Format::Text));
                arrows += check_arrows(render_memory_trace(tp, snaps, {level}, Format::Svg));
            }
        }
        CHECK(arrows > 1000);
    }
}

TEST_SUITE("perm table") {
    TEST_CASE("shared borrow narrative golden") {
        auto doc = render_perm_table(main_steps(corpus("box_borrow")), {}, Format::Text);
        CHECK(doc.content == read_text(golden_dir() / "box_borrow.steps"));
        auto facts = logical_facts(doc);
        CHECK(facts.count("delta 0 x +R+W+O birth"));
        CHECK(facts.count("delta 1 x -W-O borrow-start"));
        CHECK(facts.count("delta 1 y +R+O birth"));
        CHECK(facts.count("delta 1 *y +R birth"));
        CHECK(facts.count("delta 2 y -R-O death"));
        CHECK(facts.count("delta 2 x +W+O regain"));
    }

    TEST_CASE("empty step list") {
        for (auto f : kFormats) {
            auto doc = render_perm_table({}, {}, f);
            CHECK(logical_facts(doc).empty());
            CHECK(doc.provenance.rfind(std::string(kRendererVersion) + " perm-steps", 0) == 0);
            CHECK(doc.content.find(doc.provenance) != std::string::npos);
        }
        CHECK(render_perm_table({}, {}, Format::Text).content.find('\n') + 1 ==
              render_perm_table({}, {}, Format::Text).content.size());
    }

    TEST_CASE("edge steps are labeled by the edge") {
        auto doc = render_perm_table(main_steps(corpus("branch_disjoint")), {}, Format::Text);
        CHECK(doc.content.find("== main: edge 5 -> 7 ==") != std::string::npos);
        auto facts = logical_facts(doc);
        auto it = std::find_if(facts.begin(), facts.end(), [](const std::string& f) {
            return f.rfind("step ", 0) == 0 && f.find(" main: edge 5 -> 7") != std::string::npos;
        });
        REQUIRE(it != facts.end());
        auto k = words(*it)[1];
        CHECK(facts.count("delta " + k + " x +R+W+O regain")); // unique loan: R comes back too
    }
}

TEST_SUITE("listing") {
    TEST_CASE("filled and hollow marks") {
        auto tp = corpus("loan_conflict");
        auto p = perms_of(tp);
        auto doc = render_annotated_listing(tp.program, perms::expectations(p.fb, p.states), {}, Format::Text);
        CHECK(doc.content.find("1: y = &shared {R}x;") != std::string::npos);
        CHECK(doc.content.find("2: {w}x.0 = 1;") != std::string::npos);
        auto facts = logical_facts(doc);
        CHECK(facts.count("mark main:1 x {R}"));
        CHECK(facts.count("mark main:2 x.0 {w}"));
    }

    TEST_CASE("circles") {
        auto tp = corpus("loan_conflict");
        auto p = perms_of(tp);
        auto marks = perms::expectations(p.fb, p.states, {}, perms::MarkStyle::Circle);
        auto doc = render_annotated_listing(tp.program, marks, {}, Format::Text);
        CHECK(doc.content.find("&shared ●x") != std::string::npos);
        CHECK(doc.content.find("○x.0 = 1") != std::string::npos);
        auto svg = render_annotated_listing(tp.program, marks, {}, Format::Svg);
        CHECK(logical_facts(svg) == logical_facts(doc));
    }

    TEST_CASE("write while borrowed is hollow") {
        auto tp = typed("fn main() { let mut x: box u32; let y: &shared box u32; let z: u32;"
                        " 0: x = box 0; 1: y = &shared x; 2: *x = 1; 3: z = **y; 4: return z; }");
        auto p = perms_of(tp);
        auto doc = render_annotated_listing(tp.program, perms::expectations(p.fb, p.states), {}, Format::Text);
        CHECK(doc.content.find("2: {w}*x = 1;") != std::string::npos);
    }

    TEST_CASE("no marks") {
        auto tp = corpus("box_borrow");
        auto doc = render_annotated_listing(tp.program, {}, {}, Format::Text);
        CHECK(body(doc) == lang::pretty_print(tp.program));
        CHECK(with_prefix(logical_facts(doc), "mark ").empty());
    }
}

TEST_SUITE("documents") {
    TEST_CASE("deterministic, and text, svg and html agree") {
        for (const auto& name : corpus_names()) {
            CAPTURE(name);
            auto tp = corpus(name);
            auto a = all_docs(tp);
            auto b = all_docs(tp);
            for (std::size_t k = 0; k < a.size(); ++k) {
                for (std::size_t f = 0; f < 3; ++f) {
                    CHECK(a[k][f].content == b[k][f].content);
                    CHECK(a[k][f].provenance == b[k][f].provenance);
                }
                auto text = logical_facts(a[k][0]);
                CHECK(text == logical_facts(a[k][1]));
                CHECK(text == logical_facts(a[k][2]));
                CHECK(a[k][0].provenance == a[k][1].provenance);
            }
        }
    }

    TEST_CASE("svg is self-contained, html embeds it with the listing") {
        auto tp = corpus("box_borrow");
        auto docs = all_docs(tp);
        for (const auto& kind : docs) {
            const auto& svg = kind[1].content;
            CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
            CHECK(svg.find("href=") == std::string::npos);
            CHECK(svg.find("<metadata>" + kind[1].provenance + "</metadata>") != std::string::npos);
            const auto& html = kind[2].content;
            CHECK(html.find(svg) != std::string::npos);
            CHECK(html.find("<pre") != std::string::npos);
            CHECK(html.find("<script") == std::string::npos);
        }
    }

    TEST_CASE("color changes bytes, not facts") {
        auto tp = corpus("use_after_free");
        auto snaps = interp::trace(tp, ids({0, 1, 2}));
        auto plain = render_memory_trace(tp, snaps, {}, Format::Text);
        RenderOptions color;
        color.color = true;
        auto colored = render_memory_trace(tp, snaps, color, Format::Text);
        CHECK(colored.content.find("\x1b[") != std::string::npos);
        CHECK(plain.content.find("\x1b[") == std::string::npos);
        CHECK(logical_facts(colored) == logical_facts(plain));
    }

    TEST_CASE("fnv1a") {
        CHECK(fnv1a_hex("") == "cbf29ce484222325");
        CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    }
}
