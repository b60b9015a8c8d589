#include "ownlab/render.hpp"

#include "ownlab/facts.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <regex>
#include <sstream>

namespace ownlab::render {

using interp::Address;
using interp::HeapLoc;
using interp::MachineState;
using interp::RtValue;
using lang::LangType;
using lang::Path;
using perms::Permission;

auto to_string(Format f) -> std::string_view {
    switch (f) {
    case Format::Text: return "text";
    case Format::Svg: return "svg";
    case Format::Html: return "html";
    }
    return "?";
}

auto fnv1a_hex(std::string_view data) -> std::string {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

constexpr std::string_view kArrow = "→";
constexpr std::string_view kTomb = "†";

auto xml_escape(std::string_view s) -> std::string {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

auto xml_unescape(std::string s) -> std::string {
    static const std::pair<std::string_view, std::string_view> table[] = {
        {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&amp;", "&"}};
    for (const auto& [from, to] : table) {
        for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
            s.replace(pos, from.size(), to);
        }
    }
    return s;
}

auto strip_ansi(const std::string& s) -> std::string {
    static const std::regex ansi("\x1b\\[[0-9;]*m");
    return std::regex_replace(s, ansi, "");
}

auto lines_of(const std::string& s) -> std::vector<std::string> {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

auto starts_with(std::string_view s, std::string_view prefix) -> bool { return s.substr(0, prefix.size()) == prefix; }

auto join_facts(std::string_view kind, const std::set<std::string>& facts) -> std::string {
    std::string s(kind);
    for (const auto& f : facts) {
        s += "\n" + f;
    }
    return s;
}

auto provenance_of(std::string_view kind, const std::set<std::string>& facts) -> std::string {
    return std::string(kRendererVersion) + " " + std::string(kind) + " " + fnv1a_hex(join_facts(kind, facts));
}

struct Ansi {
    bool on = false;
    auto wrap(std::string_view code, const std::string& s) const -> std::string {
        return on ? "\x1b[" + std::string(code) + "m" + s + "\x1b[0m" : s;
    }
};

auto svg_open(std::string_view kind, const std::string& provenance, int width, int height) -> std::string {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" data-kind=\"" << kind << "\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\" font-family=\"monospace\" font-size=\"13\">\n";
    o << "<metadata>" << xml_escape(provenance) << "</metadata>\n";
    o << "<defs><marker id=\"ah\" markerWidth=\"8\" markerHeight=\"8\" refX=\"7\" refY=\"4\" orient=\"auto\">"
         "<path d=\"M0,0 L8,4 L0,8 z\" fill=\"#333\"/></marker></defs>\n";
    o << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    return o.str();
}

auto html_page(const std::string& title, const std::string& svg, const std::string& listing) -> std::string {
    std::string s = "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" + xml_escape(title) +
                    "</title>\n<style>body{font-family:sans-serif;margin:1em}pre{background:#f6f6f6;"
                    "padding:.5em}</style>\n</head>\n<body>\n";
    s += svg;
    if (!listing.empty()) {
        s += "<pre class=\"listing\">" + xml_escape(listing) + "</pre>\n";
    }
    return s + "</body>\n</html>\n";
}

struct Element {
    std::string tag;
    std::map<std::string, std::string> attrs;
    std::string body; // raw inner markup
};

auto parse_attrs(const std::string& s) -> std::map<std::string, std::string> {
    static const std::regex attr(R"re(([\w:-]+)="([^"]*)")re");
    std::map<std::string, std::string> out;
    for (std::sregex_iterator it(s.begin(), s.end(), attr), end; it != end; ++it) {
        out[(*it)[1]] = xml_unescape((*it)[2]);
    }
    return out;
}

/// The `<text>` elements and self-closing `<path>` elements of an SVG, in order.
auto svg_elements(const std::string& svg) -> std::vector<Element> {
    static const std::regex el(R"re(<text([^>]*)>(.*?)</text>|<path([^>]*)/>)re");
    std::vector<Element> out;
    for (std::sregex_iterator it(svg.begin(), svg.end(), el), end; it != end; ++it) {
        const auto& m = *it;
        if (m[1].matched) {
            out.push_back({"text", parse_attrs(m[1]), m[2]});
        } else {
            out.push_back({"path", parse_attrs(m[3]), {}});
        }
    }
    return out;
}

struct Span {
    std::map<std::string, std::string> attrs;
    std::string text;
};

auto tspans(const std::string& body) -> std::vector<Span> {
    static const std::regex span(R"re(<tspan([^>]*)>([^<]*)</tspan>)re");
    std::vector<Span> out;
    for (std::sregex_iterator it(body.begin(), body.end(), span), end; it != end; ++it) {
        out.push_back({parse_attrs((*it)[1]), xml_unescape((*it)[2])});
    }
    return out;
}

auto attr(const Element& e, const std::string& k) -> std::string {
    auto it = e.attrs.find(k);
    return it == e.attrs.end() ? std::string{} : it->second;
}

// ============================================================================
// Memory trace model
// ============================================================================

struct Slot {
    std::string id;
    std::string name;
    std::string value;
    bool changed = false;
    bool moved = false;
};

struct FrameModel {
    std::size_t depth = 0;
    std::string function;
    std::vector<Slot> vars;
};

struct CellModel {
    std::string id;
    std::string value; // empty for tombstones
    bool tomb = false;
    bool dead_frame = false;
    bool changed = false;
};

struct ArrowModel {
    std::string from;
    std::string to;
    auto operator<=>(const ArrowModel&) const = default;
};

struct StateModel {
    std::string label;
    std::vector<FrameModel> frames;
    std::vector<CellModel> cells;
    std::vector<ArrowModel> arrows;
    std::optional<std::string> ub;
};

auto slot_id(const std::string& var, std::size_t depth) -> std::string { return var + "@" + std::to_string(depth); }

class StateBuilder {
public:
    StateBuilder(const lang::TypedProgram& p, const MachineState& st, bool abstracted)
        : p_(p), st_(st), abstracted_(abstracted) {}

    auto build(const interp::Snapshot& snap, const std::set<facts::PathFact>& moved_before) -> StateModel {
        StateModel m;
        m.label = snap.label;
        if (snap.ub) {
            m.ub = snap.ub->str();
        }
        for (std::size_t d = 0; d < st_.stack.size(); ++d) {
            const auto& fr = st_.stack[d];
            const auto& types = p_.types_of(fr.function).var_types;
            for (const auto& [name, v] : fr.env) {
                auto it = types.find(name);
                if (it != types.end()) {
                    collect_types(v, it->second);
                }
            }
        }
        for (std::size_t d = 0; d < st_.stack.size(); ++d) {
            const auto& fr = st_.stack[d];
            const auto& fn = p_.fn(fr.function);
            const auto& types = p_.types_of(fr.function).var_types;
            FrameModel fm{d, fr.function, {}};
            for (const auto& [name, v] : fr.env) {
                auto it = types.find(name);
                source_ = slot_id(name, d);
                Slot s{source_, name, show(v, it == types.end() ? nullptr : &it->second)};
                if (fr.pc < fn.body.size()) {
                    s.moved = moved_before.count({Path(name), {fr.function, fr.pc}}) > 0;
                }
                fm.vars.push_back(std::move(s));
            }
            m.frames.push_back(std::move(fm));
        }

        std::set<HeapLoc> shown;
        if (!abstracted_) {
            for (const auto& [loc, _] : st_.heap) {
                shown.insert(loc);
            }
        }
        // Cells reached by arrows; showing one may add more arrows.
        std::map<HeapLoc, CellModel> cells;
        std::map<std::string, CellModel> others;
        std::size_t done = 0;
        std::set<HeapLoc> pending = shown;
        while (true) {
            for (auto loc : pending) {
                if (cells.count(loc)) {
                    continue;
                }
                auto id = "heap#" + std::to_string(loc);
                source_ = id;
                auto ct = cell_types_.find(loc);
                cells[loc] = {id, show(st_.heap.at(loc), ct == cell_types_.end() ? nullptr : &ct->second)};
            }
            pending.clear();
            for (; done < arrows_.size(); ++done) {
                const auto& a = arrows_[done].first;
                if (a.segment.is_heap()) {
                    auto loc = a.segment.loc;
                    if (st_.heap.count(loc)) {
                        pending.insert(loc);
                    } else {
                        cells[loc] = {"heap#" + std::to_string(loc), {}, true};
                    }
                } else if (!frame_live(a)) {
                    auto id = target_id(a);
                    others[id] = {id, {}, true, true};
                } else if (!st_.stack[a.segment.depth].env.count(a.segment.var)) {
                    // An uninitialized slot that something points at.
                    auto& fm = m.frames[a.segment.depth];
                    auto id = slot_id(a.segment.var, a.segment.depth);
                    if (std::none_of(fm.vars.begin(), fm.vars.end(), [&](const Slot& s) { return s.id == id; })) {
                        fm.vars.push_back({id, a.segment.var, "⊥"});
                    }
                }
            }
            if (pending.empty()) {
                break;
            }
        }
        for (auto& fm : m.frames) {
            std::sort(fm.vars.begin(), fm.vars.end(), [](const Slot& a, const Slot& b) { return a.name < b.name; });
        }
        for (auto& [_, c] : cells) {
            m.cells.push_back(c);
        }
        for (auto& [_, c] : others) {
            m.cells.push_back(c);
        }
        std::set<ArrowModel> seen;
        for (const auto& [a, from] : arrows_) {
            ArrowModel am{from, target_id(a)};
            if (seen.insert(am).second) {
                m.arrows.push_back(am);
            }
        }
        return m;
    }

private:
    auto frame_live(const Address& a) const -> bool {
        return a.segment.depth < st_.stack.size() && st_.stack[a.segment.depth].generation == a.segment.generation;
    }

    auto target_id(const Address& a) const -> std::string {
        if (a.segment.is_heap()) {
            return "heap#" + std::to_string(a.segment.loc);
        }
        auto id = slot_id(a.segment.var, a.segment.depth);
        if (!frame_live(a)) {
            id += "#g" + std::to_string(a.segment.generation);
        }
        return id;
    }

    auto addr_text(const Address& a) const -> std::string {
        auto s = target_id(a);
        for (auto i : a.projection) {
            s += "." + std::to_string(i);
        }
        return s;
    }

    void collect_types(const RtValue& v, const LangType& t) {
        if (v.kind == RtValue::Kind::Tuple && t.is_tuple()) {
            for (std::size_t i = 0; i < v.elems.size() && i < t.elems.size(); ++i) {
                collect_types(v.elems[i], t.elems[i]);
            }
        } else if (v.kind == RtValue::Kind::Addr && t.is_box() && v.addr.segment.is_heap() &&
                   v.addr.projection.empty()) {
            auto loc = v.addr.segment.loc;
            if (cell_types_.emplace(loc, t.pointee()).second) {
                if (auto it = st_.heap.find(loc); it != st_.heap.end()) {
                    collect_types(it->second, t.pointee());
                }
            }
        }
    }

    auto show(const RtValue& v, const LangType* t) -> std::string {
        switch (v.kind) {
        case RtValue::Kind::Const: return v.constant.str();
        case RtValue::Kind::Addr: {
            if (abstracted_ && t && t->is_box() && v.addr.segment.is_heap() && v.addr.projection.empty()) {
                auto it = st_.heap.find(v.addr.segment.loc);
                if (it == st_.heap.end()) {
                    return "box(" + std::string(kTomb) + ")";
                }
                return "box(" + show(it->second, &t->pointee()) + ")";
            }
            arrows_.emplace_back(v.addr, source_);
            return std::string(kArrow) + addr_text(v.addr);
        }
        case RtValue::Kind::Tuple: {
            std::string s = "(";
            for (std::size_t i = 0; i < v.elems.size(); ++i) {
                const LangType* et = t && t->is_tuple() && i < t->elems.size() ? &t->elems[i] : nullptr;
                s += (i > 0 ? ", " : "") + show(v.elems[i], et);
            }
            return s + (v.elems.size() == 1 ? ",)" : ")");
        }
        }
        return "?";
    }

    const lang::TypedProgram& p_;
    const MachineState& st_;
    bool abstracted_;
    std::map<HeapLoc, LangType> cell_types_;
    std::vector<std::pair<Address, std::string>> arrows_;
    std::string source_;
};

void mark_changes(std::vector<StateModel>& states) {
    std::map<std::string, std::string> prev;
    for (std::size_t k = 0; k < states.size(); ++k) {
        std::map<std::string, std::string> now;
        for (auto& fm : states[k].frames) {
            for (auto& s : fm.vars) {
                now[s.id] = s.value;
                auto it = prev.find(s.id);
                s.changed = k > 0 && (it == prev.end() || it->second != s.value);
            }
        }
        for (auto& c : states[k].cells) {
            auto v = c.tomb ? std::string(kTomb) : c.value;
            now[c.id] = v;
            auto it = prev.find(c.id);
            c.changed = k > 0 && (it == prev.end() || it->second != v);
        }
        prev = std::move(now);
    }
}

auto memory_facts(const std::vector<StateModel>& states) -> std::set<std::string> {
    std::set<std::string> f;
    for (std::size_t k = 0; k < states.size(); ++k) {
        auto ks = std::to_string(k);
        const auto& st = states[k];
        f.insert("state " + ks + " " + st.label);
        for (const auto& fm : st.frames) {
            f.insert("frame " + ks + " " + std::to_string(fm.depth) + " " + fm.function);
            for (const auto& s : fm.vars) {
                f.insert("var " + ks + " " + s.id + " " + s.value);
                if (s.changed) {
                    f.insert("changed " + ks + " " + s.id);
                }
                if (s.moved) {
                    f.insert("moved " + ks + " " + s.id);
                }
            }
        }
        for (const auto& c : st.cells) {
            f.insert(c.tomb ? "tomb " + ks + " " + c.id : "cell " + ks + " " + c.id + " " + c.value);
            if (c.changed) {
                f.insert("changed " + ks + " " + c.id);
            }
        }
        for (const auto& a : st.arrows) {
            f.insert("arrow " + ks + " " + a.from + " " + a.to);
        }
        if (st.ub) {
            f.insert("ub " + ks + " " + *st.ub);
        }
    }
    return f;
}

auto memory_text(const std::vector<StateModel>& states, const Ansi& ansi) -> std::string {
    std::string o;
    for (const auto& st : states) {
        o += "== " + st.label + " ==\n";
        for (const auto& fm : st.frames) {
            o += "  frame " + std::to_string(fm.depth) + " " + fm.function + "\n";
            for (const auto& s : fm.vars) {
                auto name = s.moved ? "~" + s.name + "~" : s.name;
                auto line = (s.changed ? "* " : "") + name + " = " + s.value;
                o += "    " + (s.changed ? ansi.wrap("1", line) : line) + "\n";
            }
        }
        bool heap_header = false;
        bool dead_header = false;
        for (const auto& c : st.cells) {
            if (c.dead_frame && !dead_header) {
                o += "  dead\n";
                dead_header = true;
            } else if (!c.dead_frame && !heap_header) {
                o += "  heap\n";
                heap_header = true;
            }
            auto line = (c.changed ? "* " : "") + c.id + (c.tomb ? " " + std::string(kTomb) : " = " + c.value);
            o += "    " + (c.tomb ? ansi.wrap("2", line) : c.changed ? ansi.wrap("1", line) : line) + "\n";
        }
        if (st.ub) {
            o += ansi.wrap("31", "!! " + *st.ub) + "\n";
        }
    }
    return o;
}

auto arrow_targets(const std::string& value) -> std::vector<std::string> {
    static const std::regex proj(R"((\.[0-9]+)+$)");
    std::vector<std::string> out;
    for (auto pos = value.find(kArrow); pos != std::string::npos; pos = value.find(kArrow, pos)) {
        pos += kArrow.size();
        auto end = value.find_first_of(",) ", pos);
        auto tok = value.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        out.push_back(std::regex_replace(tok, proj, ""));
    }
    return out;
}

auto memory_text_facts(const std::vector<std::string>& lines) -> std::set<std::string> {
    std::set<std::string> f;
    long k = -1;
    std::string ks;
    std::string depth;
    for (const auto& raw : lines) {
        if (starts_with(raw, "== ")) {
            ++k;
            ks = std::to_string(k);
            f.insert("state " + ks + " " + raw.substr(3, raw.size() - 6));
        } else if (starts_with(raw, "  frame ")) {
            auto rest = raw.substr(8);
            depth = rest.substr(0, rest.find(' '));
            f.insert("frame " + ks + " " + rest);
        } else if (raw == "  heap" || raw == "  dead") {
            depth.clear();
        } else if (starts_with(raw, "!! ")) {
            f.insert("ub " + ks + " " + raw.substr(3));
        } else if (starts_with(raw, "    ")) {
            auto line = raw.substr(4);
            bool changed = starts_with(line, "* ");
            if (changed) {
                line = line.substr(2);
            }
            auto eq = line.find(" = ");
            std::string id;
            if (!depth.empty()) {
                auto name = line.substr(0, eq);
                bool moved = name.size() > 2 && name.front() == '~' && name.back() == '~';
                if (moved) {
                    name = name.substr(1, name.size() - 2);
                }
                id = slot_id(name, std::stoul(depth));
                if (moved) {
                    f.insert("moved " + ks + " " + id);
                }
                f.insert("var " + ks + " " + id + " " + line.substr(eq + 3));
            } else if (eq == std::string::npos) {
                id = line.substr(0, line.rfind(' '));
                f.insert("tomb " + ks + " " + id);
            } else {
                id = line.substr(0, eq);
                f.insert("cell " + ks + " " + id + " " + line.substr(eq + 3));
            }
            if (changed) {
                f.insert("changed " + ks + " " + id);
            }
            if (eq != std::string::npos) {
                for (const auto& t : arrow_targets(line.substr(eq + 3))) {
                    f.insert("arrow " + ks + " " + id + " " + t);
                }
            }
        }
    }
    return f;
}

constexpr int kRow = 18;
constexpr int kColumn = 320;

auto memory_svg(const std::vector<StateModel>& states, const std::string& provenance) -> std::string {
    std::string body;
    int height = 60;
    int right = 200;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& st = states[k];
        auto ks = std::to_string(k);
        int x = 20 + static_cast<int>(k) * kColumn;
        int y = 30;
        std::map<std::string, int> row_y;
        auto text = [&](const std::string& cls, const std::string& attrs, int tx, int ty, const std::string& content,
                        const std::string& style = {}) {
            body += "<text class=\"" + cls + "\" data-state=\"" + ks + "\"" + attrs + " x=\"" + std::to_string(tx) +
                    "\" y=\"" + std::to_string(ty) + "\"" + style + ">" + xml_escape(content) + "</text>\n";
        };
        text("label", "", x, y, st.label, " font-weight=\"bold\"");
        y += kRow + 6;
        for (const auto& fm : st.frames) {
            int top = y - 14;
            text("frame", " data-depth=\"" + std::to_string(fm.depth) + "\"", x + 6, y, fm.function,
                 " font-style=\"italic\"");
            y += kRow;
            for (const auto& s : fm.vars) {
                std::string a = " data-id=\"" + xml_escape(s.id) + "\"";
                std::string style;
                if (s.changed) {
                    a += " data-changed=\"1\"";
                    style += " font-weight=\"bold\"";
                }
                if (s.moved) {
                    a += " data-moved=\"1\"";
                    style += " text-decoration=\"line-through\" fill=\"#888\"";
                }
                text("var", a, x + 14, y, s.name + " = " + s.value, style);
                row_y[s.id] = y;
                y += kRow;
            }
            body += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top) + "\" width=\"" +
                    std::to_string(kColumn - 60) + "\" height=\"" + std::to_string(y - top - 10) +
                    "\" fill=\"none\" stroke=\"#4a6fa5\"/>\n";
            y += 8;
        }
        if (!st.cells.empty()) {
            y += 10;
            for (const auto& c : st.cells) {
                std::string a = " data-id=\"" + xml_escape(c.id) + "\"";
                std::string style = c.changed ? " font-weight=\"bold\"" : "";
                if (c.changed) {
                    a += " data-changed=\"1\"";
                }
                if (c.dead_frame) {
                    a += " data-dead=\"1\"";
                }
                body += "<rect x=\"" + std::to_string(x + 4) + "\" y=\"" + std::to_string(y - 14) + "\" width=\"" +
                        std::to_string(kColumn - 68) + "\" height=\"18\" fill=\"" +
                        (c.tomb ? "#eee\" stroke=\"#999\" stroke-dasharray=\"3,2\"" : "#fdf6e3\" stroke=\"#b58900\"") +
                        "/>\n";
                if (c.tomb) {
                    text("tomb", a, x + 10, y, c.id + " " + std::string(kTomb), style + " fill=\"#888\"");
                } else {
                    text("cell", a, x + 10, y, c.id + " = " + c.value, style);
                }
                row_y[c.id] = y;
                y += kRow + 4;
            }
        }
        for (const auto& ar : st.arrows) {
            auto from = row_y.find(ar.from);
            auto to = row_y.find(ar.to);
            if (from == row_y.end() || to == row_y.end()) {
                continue;
            }
            int sx = x + kColumn - 60;
            int sy = from->second - 4;
            int ty = to->second - 4;
            int bend = sx + 30 + static_cast<int>(std::abs(ty - sy) / 6);
            body += "<path class=\"arrow\" data-state=\"" + ks + "\" data-from=\"" + xml_escape(ar.from) +
                    "\" data-to=\"" + xml_escape(ar.to) + "\" d=\"M" + std::to_string(sx) + "," +
                    std::to_string(sy) + " C" + std::to_string(bend) + "," + std::to_string(sy) + " " +
                    std::to_string(bend) + "," + std::to_string(ty) + " " + std::to_string(sx + 2) + "," +
                    std::to_string(ty) + "\" fill=\"none\" stroke=\"#333\" marker-end=\"url(#ah)\"/>\n";
        }
        if (st.ub) {
            y += 6;
            int w = std::max(kColumn - 30, 12 + static_cast<int>(st.ub->size()) * 8);
            right = std::max(right, x + w + 20);
            body += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y - 14) + "\" width=\"" +
                    std::to_string(w) + "\" height=\"20\" fill=\"#fbe3e4\" stroke=\"#c00\"/>\n";
            text("ub", "", x + 4, y, *st.ub, " fill=\"#c00\"");
            y += kRow;
        }
        height = std::max(height, y + 20);
    }
    int width = std::max(right, 40 + static_cast<int>(states.size()) * kColumn);
    return svg_open("memory-trace", provenance, width, height) + body + "</svg>\n";
}

auto memory_svg_facts(const std::string& svg) -> std::set<std::string> {
    std::set<std::string> f;
    for (const auto& e : svg_elements(svg)) {
        auto cls = attr(e, "class");
        auto ks = attr(e, "data-state");
        if (e.tag == "path") {
            if (cls == "arrow") {
                f.insert("arrow " + ks + " " + attr(e, "data-from") + " " + attr(e, "data-to"));
            }
            continue;
        }
        auto content = xml_unescape(e.body);
        auto id = attr(e, "data-id");
        if (cls == "label") {
            f.insert("state " + ks + " " + content);
        } else if (cls == "frame") {
            f.insert("frame " + ks + " " + attr(e, "data-depth") + " " + content);
        } else if (cls == "var" || cls == "cell") {
            f.insert(cls + " " + ks + " " + id + " " + content.substr(content.find(" = ") + 3));
        } else if (cls == "tomb") {
            f.insert("tomb " + ks + " " + id);
        } else if (cls == "ub") {
            f.insert("ub " + ks + " " + content);
        }
        if (e.attrs.count("data-changed")) {
            f.insert("changed " + ks + " " + id);
        }
        if (e.attrs.count("data-moved")) {
            f.insert("moved " + ks + " " + id);
        }
    }
    return f;
}

// ============================================================================
// Permission steps
// ============================================================================

auto icon_glyph(perms::Icon i) -> std::string_view {
    switch (i) {
    case perms::Icon::Birth: return "↑";
    case perms::Icon::BorrowStart: return "→";
    case perms::Icon::Death: return "↓";
    case perms::Icon::Regain: return "⟲";
    case perms::Icon::MovedOut: return "×";
    }
    return "?";
}

auto icon_name(std::string_view glyph) -> std::string {
    for (auto i : {perms::Icon::Birth, perms::Icon::BorrowStart, perms::Icon::Death, perms::Icon::Regain,
                   perms::Icon::MovedOut}) {
        if (icon_glyph(i) == glyph) {
            return std::string(perms::to_string(i));
        }
    }
    return std::string(glyph);
}

auto delta_perms(const perms::PathDelta& d) -> std::string {
    std::string s;
    for (auto p : d.gained) {
        s += std::string("+") + perms::letter(p);
    }
    for (auto p : d.lost) {
        s += std::string("-") + perms::letter(p);
    }
    return s;
}

auto step_facts(const std::vector<perms::PermStep>& steps) -> std::set<std::string> {
    std::set<std::string> f;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        auto ks = std::to_string(k);
        f.insert("step " + ks + " " + steps[k].label());
        for (const auto& d : steps[k].deltas) {
            f.insert("delta " + ks + " " + d.path.str() + " " + delta_perms(d) + " " +
                     std::string(perms::to_string(d.icon)));
        }
    }
    return f;
}

auto steps_text(const std::vector<perms::PermStep>& steps, const Ansi& ansi) -> std::string {
    std::string o;
    for (const auto& st : steps) {
        o += "== " + st.label() + " ==\n";
        if (st.deltas.empty()) {
            o += "  (no changes)\n";
        }
        std::size_t width = 0;
        for (const auto& d : st.deltas) {
            width = std::max(width, d.path.str().size());
        }
        for (const auto& d : st.deltas) {
            auto path = d.path.str();
            auto ps = delta_perms(d);
            auto code = d.lost.empty() ? "32" : d.gained.empty() ? "31" : "33";
            o += "  " + path + std::string(width - path.size() + 2, ' ') + ansi.wrap(code, ps) +
                 std::string(ps.size() < 8 ? 10 - ps.size() : 2, ' ') + std::string(icon_glyph(d.icon)) + "\n";
        }
    }
    return o;
}

auto steps_text_facts(const std::vector<std::string>& lines) -> std::set<std::string> {
    std::set<std::string> f;
    long k = -1;
    std::string ks;
    for (const auto& line : lines) {
        if (starts_with(line, "== ")) {
            ++k;
            ks = std::to_string(k);
            f.insert("step " + ks + " " + line.substr(3, line.size() - 6));
        } else if (starts_with(line, "  ") && line != "  (no changes)") {
            std::istringstream in(line);
            std::string path, ps, glyph;
            in >> path >> ps >> glyph;
            f.insert("delta " + ks + " " + path + " " + ps + " " + icon_name(glyph));
        }
    }
    return f;
}

auto steps_svg(const std::vector<perms::PermStep>& steps, const std::string& provenance) -> std::string {
    std::string body;
    int y = 30;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& st = steps[k];
        auto ks = std::to_string(k);
        int top = y - 16;
        body += "<text class=\"step\" data-step=\"" + ks + "\" x=\"26\" y=\"" + std::to_string(y) +
                "\" font-weight=\"bold\">" + xml_escape(st.label()) + "</text>\n";
        y += kRow + 4;
        for (const auto& d : st.deltas) {
            auto color = d.lost.empty() ? "#2a7d2a" : d.gained.empty() ? "#b22" : "#a60";
            body += "<text class=\"delta\" data-step=\"" + ks + "\" y=\"" + std::to_string(y) +
                    "\"><tspan class=\"path\" x=\"36\">" + xml_escape(d.path.str()) +
                    "</tspan><tspan class=\"perms\" x=\"190\" fill=\"" + color + "\">" + delta_perms(d) +
                    "</tspan><tspan class=\"icon\" x=\"290\">" + std::string(icon_glyph(d.icon)) +
                    "</tspan></text>\n";
            y += kRow;
        }
        body += "<rect x=\"20\" y=\"" + std::to_string(top) + "\" width=\"320\" height=\"" +
                std::to_string(y - top - 8) + "\" fill=\"none\" stroke=\"#999\"/>\n";
        y += 14;
    }
    return svg_open("perm-steps", provenance, 360, std::max(60, y)) + body + "</svg>\n";
}

auto steps_svg_facts(const std::string& svg) -> std::set<std::string> {
    std::set<std::string> f;
    for (const auto& e : svg_elements(svg)) {
        auto cls = attr(e, "class");
        auto ks = attr(e, "data-step");
        if (cls == "step") {
            f.insert("step " + ks + " " + xml_unescape(e.body));
        } else if (cls == "delta") {
            std::map<std::string, std::string> parts;
            for (auto& s : tspans(e.body)) {
                parts[s.attrs["class"]] = s.text;
            }
            f.insert("delta " + ks + " " + parts["path"] + " " + parts["perms"] + " " + icon_name(parts["icon"]));
        }
    }
    return f;
}

// ============================================================================
// Annotated listing
// ============================================================================

struct Piece {
    std::string text;
    const perms::ExpectationMark* mark = nullptr; // the piece is a mark
};

using MarkIndex = std::map<std::pair<lang::InstructionId, Path>, const perms::ExpectationMark*>;

auto mark_token(const perms::ExpectationMark& m) -> std::string {
    if (m.style == perms::MarkStyle::Circle) {
        return m.all_satisfied() ? "●" : "○";
    }
    std::string s = "{";
    for (auto p : m.expected) {
        auto it = m.satisfied.find(p);
        bool held = it != m.satisfied.end() && it->second;
        char c = perms::letter(p);
        s += held ? c : static_cast<char>(c - 'A' + 'a');
    }
    return s + "}";
}

/// An instruction as text pieces with each mark placed before the first
/// occurrence of its path.
class Annotator {
public:
    Annotator(const lang::InstructionId& at, const MarkIndex& marks) : at_(at), marks_(marks) {}

    auto pieces(const lang::Instruction& ins) -> std::vector<Piece> {
        std::visit([this](const auto& i) { emit(i); }, ins);
        return std::move(out_);
    }

private:
    void text(const std::string& s) {
        if (!out_.empty() && !out_.back().mark) {
            out_.back().text += s;
        } else {
            out_.push_back({s, nullptr});
        }
    }

    void path(const Path& p) {
        auto it = marks_.find({at_, p});
        if (it != marks_.end() && !used_.count(p)) {
            used_.insert(p);
            out_.push_back({mark_token(*it->second), it->second});
        }
        text(p.str());
    }

    void operand(const lang::Operand& op) {
        if (const auto* p = std::get_if<Path>(&op)) {
            path(*p);
        } else {
            text(std::get<lang::Constant>(op).str());
        }
    }

    void emit(const lang::Assign& a) {
        path(a.dest);
        text(" = ");
        std::visit(
            [this](const auto& rv) {
                using T = std::decay_t<decltype(rv)>;
                if constexpr (std::is_same_v<T, lang::Constant>) {
                    text(rv.str());
                } else if constexpr (std::is_same_v<T, Path>) {
                    path(rv);
                } else if constexpr (std::is_same_v<T, lang::LoanExpr>) {
                    text("&" + std::string(lang::to_string(rv.qualifier)) + " ");
                    path(rv.target);
                } else if constexpr (std::is_same_v<T, lang::TupleExpr>) {
                    text("(");
                    for (std::size_t i = 0; i < rv.elems.size(); ++i) {
                        if (i > 0) {
                            text(", ");
                        }
                        operand(rv.elems[i]);
                    }
                    text(rv.elems.size() == 1 ? ",)" : ")");
                } else {
                    text("box ");
                    operand(rv.operand);
                }
            },
            a.rv);
    }
    void emit(const lang::If& i) {
        text("if ");
        path(i.cond);
        text(" then " + std::to_string(i.then_target) + " else " + std::to_string(i.else_target));
    }
    void emit(const lang::Call& c) {
        path(c.dest);
        text(" = call " + c.callee + "(");
        for (std::size_t i = 0; i < c.args.size(); ++i) {
            if (i > 0) {
                text(", ");
            }
            path(c.args[i]);
        }
        text(")");
    }
    void emit(const lang::Return& r) {
        text("return ");
        path(r.operand);
    }
    void emit(const lang::Drop& d) {
        text("drop ");
        path(d.operand);
    }

    lang::InstructionId at_;
    const MarkIndex& marks_;
    std::set<Path> used_;
    std::vector<Piece> out_;
};

struct ListingLine {
    std::string function;
    std::optional<std::size_t> index; // instruction lines only
    std::string plain;                // whole line for others
    std::vector<Piece> pieces;
};

auto listing_model(const lang::Program& p, const std::vector<perms::ExpectationMark>& marks)
    -> std::vector<ListingLine> {
    MarkIndex index;
    for (const auto& m : marks) {
        index.emplace(std::make_pair(m.at, m.path), &m);
    }
    std::vector<ListingLine> out;
    bool first = true;
    for (const auto& [name, f] : p.functions) {
        if (!first) {
            out.push_back({name, std::nullopt, "", {}});
        }
        first = false;
        std::size_t next = 0;
        for (const auto& line : lines_of(lang::pretty_print(f))) {
            if (next < f.body.size() &&
                line == "  " + std::to_string(next) + ": " + lang::instruction_str(f.body[next]) + ";") {
                Annotator a({name, next}, index);
                out.push_back({name, next, lang::instruction_str(f.body[next]), a.pieces(f.body[next])});
                ++next;
            } else {
                out.push_back({name, std::nullopt, line, {}});
            }
        }
    }
    return out;
}

/// Path text starting at `pos`, up to the first delimiter outside parentheses.
auto read_path(const std::string& s, std::size_t pos) -> std::string {
    int depth = 0;
    std::size_t i = pos;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (c == '(') {
            ++depth;
        } else if (c == ')') {
            if (depth == 0) {
                break;
            }
            --depth;
        } else if (c == ',' || c == ' ' || c == ';') {
            break;
        }
    }
    return s.substr(pos, i - pos);
}

auto listing_facts(const std::vector<ListingLine>& lines) -> std::set<std::string> {
    std::set<std::string> f;
    for (const auto& l : lines) {
        if (!l.index) {
            continue;
        }
        auto at = l.function + ":" + std::to_string(*l.index);
        f.insert("line " + at + " " + l.plain);
        for (const auto& pc : l.pieces) {
            if (pc.mark) {
                f.insert("mark " + at + " " + pc.mark->path.str() + " " + pc.text);
            }
        }
    }
    return f;
}

auto listing_text(const std::vector<ListingLine>& lines, const Ansi& ansi) -> std::string {
    std::string o;
    for (const auto& l : lines) {
        if (!l.index) {
            o += l.plain + "\n";
            continue;
        }
        o += "  " + std::to_string(*l.index) + ": ";
        for (const auto& pc : l.pieces) {
            o += pc.mark ? ansi.wrap(pc.mark->all_satisfied() ? "32" : "31", pc.text) : pc.text;
        }
        o += ";\n";
    }
    return o;
}

auto listing_text_facts(const std::vector<std::string>& lines) -> std::set<std::string> {
    static const std::regex instr(R"(^  ([0-9]+): (.*);$)");
    static const std::regex mark(R"(\{[RWOFrwof]+\}|●|○)");
    std::set<std::string> f;
    std::string fn;
    for (const auto& line : lines) {
        if (starts_with(line, "fn ")) {
            fn = line.substr(3, line.find_first_of("<(") - 3);
            continue;
        }
        std::smatch m;
        if (!std::regex_match(line, m, instr)) {
            continue;
        }
        auto at = fn + ":" + m[1].str();
        std::string body = m[2];
        for (std::sregex_iterator it(body.begin(), body.end(), mark), end; it != end; ++it) {
            auto after = static_cast<std::size_t>(it->position() + it->length());
            f.insert("mark " + at + " " + read_path(body, after) + " " + it->str());
        }
        f.insert("line " + at + " " + std::regex_replace(body, mark, ""));
    }
    return f;
}

auto listing_svg(const std::vector<ListingLine>& lines, const std::string& provenance) -> std::string {
    std::string body;
    int y = 26;
    std::size_t longest = 0;
    for (const auto& l : lines) {
        if (!l.index) {
            if (!l.plain.empty()) {
                body += "<text class=\"src\" x=\"16\" y=\"" + std::to_string(y) + "\" xml:space=\"preserve\">" +
                        xml_escape(l.plain) + "</text>\n";
            }
            longest = std::max(longest, l.plain.size());
            y += kRow;
            continue;
        }
        std::string spans = "<tspan class=\"index\">" + xml_escape("  " + std::to_string(*l.index) + ": ") + "</tspan>";
        std::size_t len = 6;
        for (const auto& pc : l.pieces) {
            if (!pc.mark) {
                spans += "<tspan>" + xml_escape(pc.text) + "</tspan>";
                len += pc.text.size();
                continue;
            }
            auto path = " data-path=\"" + xml_escape(pc.mark->path.str()) + "\"";
            if (pc.mark->style == perms::MarkStyle::Circle) {
                bool held = pc.mark->all_satisfied();
                spans += "<tspan class=\"circle " + std::string(held ? "held" : "missing") + "\"" + path +
                         " fill=\"" + (held ? "#2a7d2a" : "#b22") + "\">" + (held ? "●" : "○") + "</tspan>";
                ++len;
                continue;
            }
            spans += "<tspan class=\"mark-open\"" + path + " fill=\"#888\">{</tspan>";
            for (auto p : pc.mark->expected) {
                auto it = pc.mark->satisfied.find(p);
                bool held = it != pc.mark->satisfied.end() && it->second;
                spans += held ? "<tspan class=\"held\" fill=\"#2a7d2a\">"
                              : "<tspan class=\"missing\" fill=\"none\" stroke=\"#b22\" stroke-width=\"0.8\">";
                spans += std::string(1, perms::letter(p)) + "</tspan>";
            }
            spans += "<tspan class=\"mark-close\" fill=\"#888\">}</tspan>";
            len += pc.text.size();
        }
        body += "<text class=\"line\" data-fn=\"" + xml_escape(l.function) + "\" data-index=\"" +
                std::to_string(*l.index) + "\" x=\"16\" y=\"" + std::to_string(y) + "\" xml:space=\"preserve\">" +
                spans + "<tspan>;</tspan></text>\n";
        longest = std::max(longest, len);
        y += kRow;
    }
    int width = std::max(200, 40 + static_cast<int>(longest) * 8);
    return svg_open("listing", provenance, width, y + 10) + body + "</svg>\n";
}

auto listing_svg_facts(const std::string& svg) -> std::set<std::string> {
    std::set<std::string> f;
    for (const auto& e : svg_elements(svg)) {
        if (attr(e, "class") != "line") {
            continue;
        }
        auto at = attr(e, "data-fn") + ":" + attr(e, "data-index");
        std::string plain;
        std::string token;
        std::string path;
        bool in_mark = false;
        for (const auto& s : tspans(e.body)) {
            auto cls = s.attrs.count("class") ? s.attrs.at("class") : std::string{};
            if (cls == "index") {
                continue;
            }
            if (cls == "mark-open") {
                in_mark = true;
                token = "{";
                path = s.attrs.at("data-path");
            } else if (cls == "held" || cls == "missing") {
                char c = s.text.empty() ? '?' : s.text[0];
                token += cls == "held" ? c : static_cast<char>(c - 'A' + 'a');
            } else if (cls == "mark-close") {
                f.insert("mark " + at + " " + path + " " + token + "}");
                in_mark = false;
            } else if (starts_with(cls, "circle")) {
                f.insert("mark " + at + " " + s.attrs.at("data-path") + " " + s.text);
            } else if (!in_mark) {
                plain += s.text;
            }
        }
        if (!plain.empty() && plain.back() == ';') {
            plain.pop_back();
        }
        f.insert("line " + at + " " + plain);
    }
    return f;
}

auto finish(Format format, std::string_view kind, const std::set<std::string>& facts, const std::string& text,
            const std::function<std::string(const std::string&)>& svg, const std::string& title,
            const std::string& listing) -> DiagramDoc {
    DiagramDoc doc;
    doc.format = format;
    doc.provenance = provenance_of(kind, facts);
    switch (format) {
    case Format::Text: doc.content = doc.provenance + "\n" + text; break;
    case Format::Svg: doc.content = svg(doc.provenance); break;
    case Format::Html: doc.content = html_page(title, svg(doc.provenance), listing); break;
    }
    return doc;
}

} // namespace

auto render_memory_trace(const lang::TypedProgram& p, const std::vector<interp::Snapshot>& snaps,
                         const RenderOptions& opts, Format format) -> DiagramDoc {
    auto moved = facts::compute_moved_before(p);
    std::vector<StateModel> states;
    for (const auto& snap : snaps) {
        StateBuilder b(p, snap.state, opts.level == Level::Abstracted);
        states.push_back(b.build(snap, moved));
    }
    mark_changes(states);
    auto facts = memory_facts(states);
    return finish(
        format, "memory-trace", facts, memory_text(states, Ansi{opts.color}),
        [&](const std::string& prov) { return memory_svg(states, prov); }, "memory trace",
        lang::pretty_print(p.program));
}

auto render_perm_table(const std::vector<perms::PermStep>& steps, const RenderOptions& opts, Format format,
                       const lang::FunctionDef* f) -> DiagramDoc {
    auto facts = step_facts(steps);
    return finish(
        format, "perm-steps", facts, steps_text(steps, Ansi{opts.color}),
        [&](const std::string& prov) { return steps_svg(steps, prov); }, "permission steps",
        f ? lang::pretty_print(*f) : std::string{});
}

auto render_annotated_listing(const lang::Program& p, const std::vector<perms::ExpectationMark>& marks,
                              const RenderOptions& opts, Format format) -> DiagramDoc {
    auto lines = listing_model(p, marks);
    auto facts = listing_facts(lines);
    auto plain = listing_text(lines, Ansi{});
    return finish(
        format, "listing", facts, listing_text(lines, Ansi{opts.color}),
        [&](const std::string& prov) { return listing_svg(lines, prov); }, "annotated listing", plain);
}

auto logical_facts(const DiagramDoc& doc) -> std::set<std::string> {
    std::string content = doc.content;
    if (doc.format == Format::Html) {
        auto a = content.find("<svg");
        auto b = content.find("</svg>");
        content = a == std::string::npos || b == std::string::npos ? std::string{} : content.substr(a, b + 6 - a);
    }
    if (doc.format == Format::Text) {
        auto lines = lines_of(strip_ansi(content));
        if (lines.empty()) {
            return {};
        }
        std::istringstream header(lines.front());
        std::string name, version, kind;
        header >> name >> version >> kind;
        lines.erase(lines.begin());
        if (kind == "memory-trace") {
            return memory_text_facts(lines);
        }
        if (kind == "perm-steps") {
            return steps_text_facts(lines);
        }
        if (kind == "listing") {
            return listing_text_facts(lines);
        }
        return {};
    }
    static const std::regex kind_attr(R"re(data-kind="([^"]*)")re");
    std::smatch m;
    if (!std::regex_search(content, m, kind_attr)) {
        return {};
    }
    if (m[1] == "memory-trace") {
        return memory_svg_facts(content);
    }
    if (m[1] == "perm-steps") {
        return steps_svg_facts(content);
    }
    if (m[1] == "listing") {
        return listing_svg_facts(content);
    }
    return {};
}

} // namespace ownlab::render
