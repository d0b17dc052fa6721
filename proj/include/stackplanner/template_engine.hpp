#pragma once

#include <map>
#include <string>
#include <string_view>

#include "stackplanner/errors.hpp"
#include "stackplanner/util.hpp"

namespace stackplanner::templating {

struct UnknownVariable : Error {
    explicit UnknownVariable(const std::string& name)
        : Error("unknown template variable: " + name) {}
};

struct UnbalancedBlock : Error {
    explicit UnbalancedBlock(const std::string& what) : Error("unbalanced block: " + what) {}
};

using VarMap = std::map<std::string, std::string>;

namespace detail {

struct Condition {
    std::string var;
    bool has_literal = false;
    std::string literal;
};

// Parses the inside of an `{% ... %}` tag. Returns "endif" or "if".
inline std::string parse_tag(std::string_view body, Condition* cond) {
    std::string t = util::trim(body);
    if (t == "endif") return "endif";
    if (t.rfind("if ", 0) != 0) throw UnbalancedBlock("unsupported tag: {% " + t + " %}");
    std::string rest = util::trim(t.substr(3));
    size_t eq = rest.find("==");
    if (eq == std::string::npos) {
        cond->var = util::trim(rest);
        cond->has_literal = false;
    } else {
        cond->var = util::trim(rest.substr(0, eq));
        std::string lit = util::trim(rest.substr(eq + 2));
        if (lit.size() < 2 || lit.front() != '"' || lit.back() != '"')
            throw UnbalancedBlock("condition literal must be double-quoted: " + lit);
        cond->has_literal = true;
        cond->literal = lit.substr(1, lit.size() - 2);
    }
    if (cond->var.empty()) throw UnbalancedBlock("empty condition variable");
    return "if";
}

// A missing variable in a condition is falsy, not an error; the prompt
// templates rely on optional context fields.
inline bool eval_condition(const Condition& cond, const VarMap& vars) {
    auto it = vars.find(cond.var);
    if (it == vars.end()) return false;
    if (cond.has_literal) return it->second == cond.literal;
    return !it->second.empty();
}

// Renders until `{% endif %}` (returning true) or end of input (false).
// `emit` is false inside a failed condition; tags are still parsed so
// nesting and balance are checked either way.
inline bool render_block(std::string_view tmpl, size_t& pos, const VarMap& vars, bool emit,
                         std::string& out) {
    while (pos < tmpl.size()) {
        size_t var_open = tmpl.find("{{", pos);
        size_t tag_open = tmpl.find("{%", pos);
        size_t next = std::min(var_open, tag_open);
        if (next == std::string_view::npos) {
            if (emit) out.append(tmpl.substr(pos));
            pos = tmpl.size();
            return false;
        }
        if (emit) out.append(tmpl.substr(pos, next - pos));
        if (next == var_open) {
            size_t close = tmpl.find("}}", next + 2);
            if (close == std::string_view::npos)
                throw UnbalancedBlock("unterminated {{ substitution");
            std::string name = util::trim(tmpl.substr(next + 2, close - next - 2));
            if (emit) {
                auto it = vars.find(name);
                if (it == vars.end()) throw UnknownVariable(name);
                out.append(it->second);
            }
            pos = close + 2;
        } else {
            size_t close = tmpl.find("%}", next + 2);
            if (close == std::string_view::npos) throw UnbalancedBlock("unterminated {% tag");
            Condition cond;
            std::string kind = parse_tag(tmpl.substr(next + 2, close - next - 2), &cond);
            pos = close + 2;
            if (kind == "endif") return true;
            bool branch = emit && eval_condition(cond, vars);
            bool closed = render_block(tmpl, pos, vars, branch, out);
            if (!closed) throw UnbalancedBlock("{% if %} without {% endif %}");
        }
    }
    return false;
}

}  // namespace detail

// Renders the supported template subset: `{{name}}` substitution and
// `{% if var %}` / `{% if var == "literal" %}` blocks with nesting.
// Pure: identical inputs produce identical output bytes.
inline std::string render_template(std::string_view tmpl, const VarMap& vars) {
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    bool ended_on_endif = detail::render_block(tmpl, pos, vars, true, out);
    if (ended_on_endif) throw UnbalancedBlock("{% endif %} without {% if %}");
    return out;
}

}  // namespace stackplanner::templating
