//! `ownlab`: check, run, trace, analyze permissions, render diagrams, fuzz.
//!
//! Exit status: 0 ok, 1 diagnostics or rejection, 2 undefined behavior,
//! 3 step limit, 64 bad usage.

#include "ownlab/diffcheck.hpp"
#include "ownlab/polonius.hpp"
#include "ownlab/render.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

using namespace ownlab;

namespace {

constexpr int kOk = 0;
constexpr int kRejected = 1;
constexpr int kUb = 2;
constexpr int kLimit = 3;
constexpr int kUsage = 64;

enum class Model { Polonius, Perms, Both };
enum class Output { Human, Records };
enum class Diagram { Memory, Steps, Listing };

struct Settings {
    Model model = Model::Both;
    Output output = Output::Human;
    bool ignore_borrowck = false;
    std::size_t max_steps = interp::Limits{}.max_steps;
    std::vector<std::string> marks;
    bool abstracted = false;
    perms::MarkStyle style = perms::MarkStyle::Letter;
    Diagram diagram = Diagram::Memory;
    render::Format diagram_format = render::Format::Text;
    std::string function = std::string(lang::kEntryFunction);
    std::string out;
    std::uint64_t seed = 1;
    std::size_t count = 1000;
    std::string out_dir;
    std::vector<std::string> properties;
    std::size_t max_instructions = diffcheck::FuzzConfig{}.max_instructions;
};

auto use_color() -> bool {
    const char* no = std::getenv("NO_COLOR");
    return (no == nullptr || *no == '\0') && isatty(STDOUT_FILENO);
}

auto read_file(const std::string& path) -> std::optional<std::string> {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_lang_diagnostics(const std::string& file, const std::vector<lang::Diagnostic>& ds, Output out) {
    for (const auto& d : ds) {
        if (out == Output::Records) {
            nlohmann::json j{{"schema", 1}, {"record", "diagnostic"}, {"file", file},     {"code", d.code},
                             {"message", d.message}, {"line", d.line},     {"column", d.column}};
            if (!d.function.empty()) {
                j["function"] = d.function;
            }
            if (d.instruction) {
                j["instruction"] = *d.instruction;
            }
            std::cout << j.dump() << "\n";
        } else {
            // file:line:col: so editors can jump to it
            std::cerr << file << (d.line > 0 ? ":" : ": ") << d.str() << "\n";
        }
    }
}

auto load(const std::string& file, Output out) -> std::optional<lang::TypedProgram> {
    auto text = read_file(file);
    if (!text) {
        std::cerr << file << ": cannot read file\n";
        return std::nullopt;
    }
    auto tc = lang::load_program(*text);
    if (!tc.ok()) {
        print_lang_diagnostics(file, tc.diagnostics, out);
        return std::nullopt;
    }
    return std::move(*tc.typed);
}

struct Verdict {
    std::vector<polonius::AccessErrorDiag> access;
    std::vector<polonius::SubsetErrorDiag> subset;
    std::vector<perms::PermissionError> permission;

    auto rejected() const -> bool { return !access.empty() || !subset.empty() || !permission.empty(); }
};

auto judge(const lang::TypedProgram& tp, Model model) -> Verdict {
    auto fb = facts::build_facts(tp);
    Verdict v;
    if (model != Model::Perms) {
        v.access = polonius::access_errors(fb);
        v.subset = polonius::subset_errors(fb, tp.program);
    }
    if (model != Model::Polonius) {
        v.permission = perms::permission_errors(fb, perms::missing_at(tp, fb));
    }
    return v;
}

void print_verdict(const std::string& file, const Verdict& v, const Settings& s) {
    if (s.output == Output::Records) {
        std::cout << polonius::records(v.access, v.subset) << perms::error_records(v.permission);
        return;
    }
    auto& os = std::cerr;
    if (!v.access.empty() || !v.subset.empty()) {
        os << file << ": polonius: " << v.access.size() + v.subset.size() << " error(s)\n";
        for (const auto& d : v.access) {
            os << "  " << d.str() << "\n";
        }
        for (const auto& d : v.subset) {
            os << "  " << d.str() << "\n";
        }
    }
    if (!v.permission.empty()) {
        os << file << ": perms: " << v.permission.size() << " error(s)\n";
        for (const auto& e : v.permission) {
            os << "  " << e.str() << "\n";
        }
    }
}

auto cmd_check(const std::vector<std::string>& files, const Settings& s) -> int {
    int status = kOk;
    for (const auto& file : files) {
        auto tp = load(file, s.output);
        if (!tp) {
            status = kRejected;
            continue;
        }
        auto v = judge(*tp, s.model);
        print_verdict(file, v, s);
        if (v.rejected()) {
            status = kRejected;
        } else if (s.output == Output::Human) {
            std::cout << file << ": ok\n";
        }
    }
    return status;
}

/// Loads and, unless told otherwise, refuses programs the checkers reject.
auto load_gated(const std::string& file, const Settings& s) -> std::optional<lang::TypedProgram> {
    auto tp = load(file, s.output);
    if (!tp || s.ignore_borrowck) {
        return tp;
    }
    auto v = judge(*tp, s.model);
    if (v.rejected()) {
        print_verdict(file, v, s);
        std::cerr << "hint: rerun with --ignore-borrowck to execute the rejected program anyway\n";
        return std::nullopt;
    }
    return tp;
}

auto outcome_status(interp::Outcome::Kind k) -> int {
    switch (k) {
    case interp::Outcome::Kind::Terminated: return kOk;
    case interp::Outcome::Kind::Ub: return kUb;
    case interp::Outcome::Kind::LimitExceeded: return kLimit;
    }
    return kRejected;
}

auto cmd_run(const std::string& file, const Settings& s) -> int {
    auto tp = load_gated(file, s);
    if (!tp) {
        return kRejected;
    }
    auto out = interp::run(*tp, {s.max_steps});
    if (s.output == Output::Records) {
        std::cout << interp::trace_records(out);
        return outcome_status(out.kind);
    }
    switch (out.kind) {
    case interp::Outcome::Kind::Terminated:
        std::cout << out.value->str() << "\n";
        break;
    case interp::Outcome::Kind::Ub:
        std::cerr << out.ub->str() << "\n";
        break;
    case interp::Outcome::Kind::LimitExceeded:
        std::cerr << "step limit exceeded after " << out.steps << " steps\n";
        break;
    }
    return outcome_status(out.kind);
}

auto parse_marks(const std::vector<std::string>& raw) -> std::optional<std::vector<lang::InstructionId>> {
    std::vector<lang::InstructionId> out;
    for (const auto& m : raw) {
        auto colon = m.rfind(':');
        std::string fn = colon == std::string::npos ? std::string(lang::kEntryFunction) : m.substr(0, colon);
        auto idx = colon == std::string::npos ? m : m.substr(colon + 1);
        if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos) {
            return std::nullopt;
        }
        out.push_back({fn, std::stoul(idx)});
    }
    return out;
}

auto options_of(const Settings& s) -> render::RenderOptions {
    render::RenderOptions o;
    o.level = s.abstracted ? render::Level::Abstracted : render::Level::Expanded;
    o.mark_style = s.style;
    o.color = use_color();
    return o;
}

auto snapshots_of(const lang::TypedProgram& tp, const Settings& s) -> std::vector<interp::Snapshot> {
    auto marks = parse_marks(s.marks);
    return interp::trace(tp, marks ? *marks : std::vector<lang::InstructionId>{}, {s.max_steps});
}

auto cmd_trace(const std::string& file, const Settings& s) -> int {
    auto tp = load_gated(file, s);
    if (!tp) {
        return kRejected;
    }
    auto out = interp::run(*tp, {s.max_steps});
    if (s.output == Output::Records) {
        std::cout << interp::trace_records(out);
    } else {
        std::cout << render::render_memory_trace(*tp, snapshots_of(*tp, s), options_of(s), render::Format::Text).content;
    }
    return outcome_status(out.kind);
}

auto cmd_perms(const std::string& file, const Settings& s) -> int {
    auto tp = load(file, s.output);
    if (!tp) {
        return kRejected;
    }
    auto fb = facts::build_facts(*tp);
    auto states = perms::missing_at(*tp, fb);
    auto marks = perms::expectations(fb, states, {}, s.style);
    auto errors = perms::permission_errors(fb, states);
    if (s.output == Output::Records) {
        std::cout << perms::state_records(states);
        for (const auto& [name, fs] : states) {
            std::cout << perms::step_records(name, perms::steps(tp->fn(name), fs));
        }
        std::cout << perms::mark_records(marks) << perms::error_records(errors);
        return errors.empty() ? kOk : kRejected;
    }
    auto opts = options_of(s);
    for (const auto& [name, fs] : states) {
        std::cout << render::render_perm_table(perms::steps(tp->fn(name), fs), opts, render::Format::Text).content
                  << "\n";
    }
    std::cout << render::render_annotated_listing(tp->program, marks, opts, render::Format::Text).content;
    for (const auto& e : errors) {
        std::cerr << e.str() << "\n";
    }
    return errors.empty() ? kOk : kRejected;
}

auto cmd_render(const std::string& file, const Settings& s) -> int {
    auto tp = load(file, Output::Human);
    if (!tp) {
        return kRejected;
    }
    auto opts = options_of(s);
    if (s.diagram_format != render::Format::Text || !s.out.empty()) {
        opts.color = false;
    }
    render::DiagramDoc doc;
    switch (s.diagram) {
    case Diagram::Memory:
        doc = render::render_memory_trace(*tp, snapshots_of(*tp, s), opts, s.diagram_format);
        break;
    case Diagram::Steps: {
        const auto* f = tp->program.find(s.function);
        if (!f) {
            std::cerr << "no function named " << s.function << "\n";
            return kRejected;
        }
        auto fb = facts::build_facts(*tp);
        auto states = perms::missing_at(*tp, fb);
        doc = render::render_perm_table(perms::steps(*f, states.at(s.function)), opts, s.diagram_format, f);
        break;
    }
    case Diagram::Listing: {
        auto fb = facts::build_facts(*tp);
        auto marks = perms::expectations(fb, perms::missing_at(*tp, fb), {}, s.style);
        doc = render::render_annotated_listing(tp->program, marks, opts, s.diagram_format);
        break;
    }
    }
    if (s.out.empty()) {
        std::cout << doc.content;
    } else {
        std::ofstream o(s.out, std::ios::binary);
        o << doc.content;
        if (!o) {
            std::cerr << s.out << ": cannot write file\n";
            return kRejected;
        }
        std::cerr << "wrote " << s.out << " (" << doc.provenance << ")\n";
    }
    return kOk;
}

auto cmd_fuzz(const Settings& s) -> int {
    diffcheck::FuzzConfig cfg;
    cfg.seed = s.seed;
    cfg.max_instructions = s.max_instructions;
    if (auto err = cfg.validate(); !err.empty()) {
        std::cerr << "invalid fuzz configuration: " << err << "\n";
        return kUsage;
    }
    std::vector<diffcheck::Property> props;
    for (const auto& p : s.properties) {
        if (p == "theorem") {
            props.push_back(diffcheck::Property::Theorem);
        } else if (p == "soundness") {
            props.push_back(diffcheck::Property::Soundness);
        } else {
            props.push_back(diffcheck::Property::OracleEquivalence);
        }
    }
    if (props.empty()) {
        props = {diffcheck::Property::Theorem, diffcheck::Property::Soundness,
                 diffcheck::Property::OracleEquivalence};
    }
    auto report = diffcheck::campaign(cfg, props, s.count, {s.max_steps});
    if (s.output == Output::Records) {
        std::cout << report.records();
    } else {
        std::cout << report.summary();
    }
    if (!s.out_dir.empty() && !report.violations.empty()) {
        std::filesystem::create_directories(s.out_dir);
        for (std::size_t i = 0; i < report.violations.size(); ++i) {
            const auto& v = report.violations[i];
            auto path = std::filesystem::path(s.out_dir) /
                        (std::string(diffcheck::to_string(v.property)) + "-" + std::to_string(i) + ".own");
            std::ofstream(path) << v.to_own();
            if (s.output == Output::Human) {
                std::cout << "counterexample written to " << path.string() << "\n";
            }
        }
    }
    return report.violations.empty() ? kOk : kRejected;
}

} // namespace

auto main(int argc, char** argv) -> int {
    CLI::App app{"ownlab: ownership and borrowing lab"};
    app.require_subcommand(1);
    Settings s;
    std::vector<std::string> files;

    const std::map<std::string, Model> models{{"polonius", Model::Polonius}, {"perms", Model::Perms},
                                              {"both", Model::Both}};
    const std::map<std::string, Output> outputs{{"human", Output::Human}, {"records", Output::Records}};
    const std::map<std::string, perms::MarkStyle> styles{{"letter", perms::MarkStyle::Letter},
                                                         {"circle", perms::MarkStyle::Circle}};
    const std::map<std::string, Diagram> diagrams{{"memory", Diagram::Memory}, {"steps", Diagram::Steps},
                                                  {"listing", Diagram::Listing}};
    const std::map<std::string, render::Format> formats{
        {"text", render::Format::Text}, {"svg", render::Format::Svg}, {"html", render::Format::Html}};

    auto add_format = [&](CLI::App* c) {
        c->add_option("--format", s.output, "human or records")->transform(CLI::CheckedTransformer(outputs))->option_text("human|records");
    };
    auto add_model = [&](CLI::App* c) {
        c->add_option("--model", s.model, "polonius, perms or both")->transform(CLI::CheckedTransformer(models))->option_text("polonius|perms|both");
    };
    auto add_exec = [&](CLI::App* c) {
        c->add_flag("--ignore-borrowck", s.ignore_borrowck, "execute even if the checkers reject the program");
        c->add_option("--max-steps", s.max_steps, "step limit")->check(CLI::PositiveNumber);
    };
    auto add_marks = [&](CLI::App* c) {
        c->add_option("--marks", s.marks, "snapshot points, as fn:index or index (main)")
            ->delimiter(',')
            ->allow_extra_args(false)
            ->check([](const std::string& m) {
                return parse_marks({m}) ? std::string{} : "expected fn:index or index, got " + m;
            });
    };
    auto add_style = [&](CLI::App* c) {
        c->add_option("--style", s.style, "letter or circle")->transform(CLI::CheckedTransformer(styles))->option_text("letter|circle");
    };
    auto add_level = [&](CLI::App* c) {
        auto* abs = c->add_flag("--abstracted", s.abstracted, "show box contents inline");
        auto* exp = c->add_flag("--expanded", "show heap cells separately (default)");
        abs->excludes(exp);
    };

    auto* check = app.add_subcommand("check", "run the borrow checkers");
    check->add_option("files", files, "program files")->required();
    add_model(check);
    add_format(check);

    auto* run = app.add_subcommand("run", "execute a program");
    run->add_option("file", files, "program file")->required()->expected(1);
    add_model(run);
    add_format(run);
    add_exec(run);

    auto* trace = app.add_subcommand("trace", "execute a program and show its states");
    trace->add_option("file", files, "program file")->required()->expected(1);
    add_model(trace);
    add_format(trace);
    add_exec(trace);
    add_marks(trace);
    add_level(trace);

    auto* permc = app.add_subcommand("perms", "permission states, steps and expectations");
    permc->add_option("file", files, "program file")->required()->expected(1);
    add_format(permc);
    add_style(permc);

    auto* rend = app.add_subcommand("render", "draw a diagram");
    rend->add_option("file", files, "program file")->required()->expected(1);
    rend->add_option("--diagram", s.diagram, "memory, steps or listing")->transform(CLI::CheckedTransformer(diagrams))->option_text("memory|steps|listing");
    std::string diagram_format = "text";
    rend->add_option("--as", diagram_format, "text, svg or html")->check(CLI::IsMember(formats))->option_text("text|svg|html");
    rend->add_option("--function", s.function, "function for the steps diagram");
    rend->add_option("-o,--out", s.out, "output file (default stdout)");
    rend->add_option("--max-steps", s.max_steps, "step limit")->check(CLI::PositiveNumber);
    add_marks(rend);
    add_level(rend);
    add_style(rend);

    auto* fuzz = app.add_subcommand("fuzz", "differential fuzzing campaign");
    fuzz->add_option("--seed", s.seed, "first seed");
    fuzz->add_option("--count", s.count, "number of programs");
    fuzz->add_option("--out-dir", s.out_dir, "where to write counterexamples");
    fuzz->add_option("--property", s.properties, "theorem, soundness, oracle (default all)")
        ->delimiter(',')
        ->check(CLI::IsMember({"theorem", "soundness", "oracle"}));
    fuzz->add_option("--max-instructions", s.max_instructions, "instructions per function");
    fuzz->add_option("--max-steps", s.max_steps, "step limit for soundness runs")->check(CLI::PositiveNumber);
    add_format(fuzz);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (check->parsed()) {
        return cmd_check(files, s);
    }
    if (run->parsed()) {
        return cmd_run(files.front(), s);
    }
    if (trace->parsed()) {
        return cmd_trace(files.front(), s);
    }
    if (permc->parsed()) {
        return cmd_perms(files.front(), s);
    }
    if (rend->parsed()) {
        s.diagram_format = formats.at(diagram_format);
        return cmd_render(files.front(), s);
    }
    return cmd_fuzz(s);
}
