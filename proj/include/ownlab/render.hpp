//! # Diagrams
//!
//! Memory-trace diagrams (stack frames, heap cells, arrows, tombstones, UB
//! banner), permission-step tables and permission-annotated listings, each as
//! plain text, standalone SVG or HTML (the SVG plus a program listing).
//!
//! Every renderer first builds a small layout model and then prints it, so
//! text and SVG carry the same logical content; `logical_facts` recovers that
//! content from either output for comparison.
//!
//! Text conventions:
//!
//! - `→T` is an arrow to cell or slot T; `†` marks a tombstone (freed cell or
//!   dead frame slot); a leading `*` marks entries changed since the previous
//!   state; `~x~` is a variable whose value was moved out.
//! - Step icons: ↑ birth, → borrow start, ↓ death, ⟲ regain, × moved out.
//! - Marks: `{RW}` letters, uppercase when the permission is held and
//!   lowercase (hollow) when missing; circle style prints `●` or `○`.

#pragma once

#include "ownlab/interp.hpp"
#include "ownlab/perms.hpp"

#include <set>
#include <string>
#include <vector>

namespace ownlab::render {

inline constexpr std::string_view kRendererVersion = "ownlab-render 1";

enum class Format { Text, Svg, Html };
enum class Level { Abstracted, Expanded };

auto to_string(Format f) -> std::string_view;

struct RenderOptions {
    /// Abstracted shows box payloads inline instead of as separate heap cells.
    Level level = Level::Expanded;
    /// Default style callers pass to perms::expectations.
    perms::MarkStyle mark_style = perms::MarkStyle::Letter;
    /// ANSI colors in text output.
    bool color = false;
};

struct DiagramDoc {
    Format format = Format::Text;
    std::string content;
    /// Renderer version and a hash of the rendered model.
    std::string provenance;
};

/// 64-bit FNV-1a, printed as 16 hex digits.
auto fnv1a_hex(std::string_view data) -> std::string;

auto render_memory_trace(const lang::TypedProgram& p, const std::vector<interp::Snapshot>& snaps,
                         const RenderOptions& opts, Format format) -> DiagramDoc;

/// `f`, when given, is listed in the HTML output.
auto render_perm_table(const std::vector<perms::PermStep>& steps, const RenderOptions& opts, Format format,
                       const lang::FunctionDef* f = nullptr) -> DiagramDoc;

/// Each mark is drawn in its own style (see perms::expectations).
auto render_annotated_listing(const lang::Program& p, const std::vector<perms::ExpectationMark>& marks,
                              const RenderOptions& opts, Format format) -> DiagramDoc;

/// The logical content of a text or SVG document (HTML: of its SVG part),
/// one line per fact, independent of layout.
auto logical_facts(const DiagramDoc& doc) -> std::set<std::string>;

} // namespace ownlab::render
