// Shared helpers for the test binaries and the acceptance runner.

#pragma once

#include "ownlab/lang.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ownlab::testing {

inline auto read_text(const std::filesystem::path& p) -> std::string {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline auto corpus_dir() -> std::filesystem::path { return OWNLAB_CORPUS_DIR; }
inline auto golden_dir() -> std::filesystem::path { return OWNLAB_GOLDEN_DIR; }

inline auto corpus_text(const std::string& name) -> std::string { return read_text(corpus_dir() / (name + ".own")); }

/// Corpus program names (file stems), sorted.
inline auto corpus_names() -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(corpus_dir())) {
        if (e.path().extension() == ".own") {
            out.push_back(e.path().stem().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline auto typed(std::string_view src) -> lang::TypedProgram {
    auto r = lang::load_program(src);
    if (!r.ok()) {
        std::string msg = "program does not load:";
        for (const auto& d : r.diagnostics) {
            msg += "\n  " + d.str();
        }
        throw std::runtime_error(msg);
    }
    return std::move(*r.typed);
}

inline auto corpus(const std::string& name) -> lang::TypedProgram { return typed(corpus_text(name)); }

inline auto parsed(std::string_view src) -> lang::Program {
    auto r = lang::parse_program(src);
    if (!r.ok()) {
        throw std::runtime_error("program does not parse: " + std::string(src));
    }
    return std::move(*r.program);
}

} // namespace ownlab::testing
