#include "cellhom/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace cellhom {

std::string to_string(Command c) {
    switch (c) {
    case Command::cell: return "cell";
    case Command::homogenize: return "homogenize";
    case Command::recover: return "recover";
    case Command::check: return "check";
    }
    return "?";
}

Command parse_command(const std::string &s) {
    if (s == "cell") return Command::cell;
    if (s == "homogenize") return Command::homogenize;
    if (s == "recover") return Command::recover;
    if (s == "check") return Command::check;
    throw std::invalid_argument("unknown command '" + s + "'");
}

namespace {

// ---------------------------------------------------------------------------
// Values

struct Value {
    enum class Kind { string, number, boolean, array } kind = Kind::number;
    std::string str;
    double num = 0.0;
    bool integral = false;
    bool flag = false;
    std::vector<Value> items;
};

class Cursor {
public:
    Cursor(const std::string &s, int line) : s_(s), line_(line) {}

    [[noreturn]] void fail(const std::string &msg) const {
        throw ConfigError("line " + std::to_string(line_) + ": " + msg);
    }

    void skip_ws() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\n' || s_[i_] == '\r')) ++i_;
    }
    bool done() {
        skip_ws();
        return i_ >= s_.size();
    }

    Value parse_value() {
        skip_ws();
        if (i_ >= s_.size()) fail("missing value");
        const char c = s_[i_];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (s_.compare(i_, 4, "true") == 0) {
            i_ += 4;
            Value v;
            v.kind = Value::Kind::boolean;
            v.flag = true;
            return v;
        }
        if (s_.compare(i_, 5, "false") == 0) {
            i_ += 5;
            Value v;
            v.kind = Value::Kind::boolean;
            return v;
        }
        return parse_number();
    }

private:
    Value parse_string() {
        Value v;
        v.kind = Value::Kind::string;
        ++i_;
        while (true) {
            if (i_ >= s_.size()) fail("unterminated string");
            const char c = s_[i_++];
            if (c == '"') break;
            if (c == '\\') {
                if (i_ >= s_.size()) fail("unterminated escape");
                const char e = s_[i_++];
                if (e == '"' || e == '\\') v.str += e;
                else if (e == 'n') v.str += '\n';
                else if (e == 't') v.str += '\t';
                else fail(std::string("unsupported escape \\") + e);
            } else {
                v.str += c;
            }
        }
        return v;
    }

    Value parse_array() {
        Value v;
        v.kind = Value::Kind::array;
        ++i_;
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ']') {
            ++i_;
            return v;
        }
        while (true) {
            v.items.push_back(parse_value());
            skip_ws();
            if (i_ >= s_.size()) fail("unterminated array");
            if (s_[i_] == ',') {
                ++i_;
                skip_ws();
                if (i_ < s_.size() && s_[i_] == ']') {
                    ++i_;
                    return v;
                }
                continue;
            }
            if (s_[i_] == ']') {
                ++i_;
                return v;
            }
            fail("expected ',' or ']' in array");
        }
    }

    Value parse_number() {
        const std::size_t start = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '+' ||
                                  s_[i_] == '-' || s_[i_] == '.' || s_[i_] == '_'))
            ++i_;
        std::string tok = s_.substr(start, i_ - start);
        std::erase(tok, '_');
        if (tok.empty()) fail("expected a value");
        Value v;
        if (tok == "inf" || tok == "+inf") v.num = INFINITY;
        else if (tok == "-inf") v.num = -INFINITY;
        else {
            char *end = nullptr;
            v.num = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size()) fail("malformed number '" + tok + "'");
            v.integral = tok.find_first_of(".eE") == std::string::npos;
        }
        return v;
    }

    const std::string &s_;
    std::size_t i_ = 0;
    int line_;
};

std::string strip_comment(const std::string &line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && in_str) {
            ++i;
            continue;
        }
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

int bracket_balance(const std::string &s) {
    int depth = 0;
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && in_str) {
            ++i;
            continue;
        }
        if (s[i] == '"') in_str = !in_str;
        if (!in_str && s[i] == '[') ++depth;
        if (!in_str && s[i] == ']') --depth;
    }
    return depth;
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// ---------------------------------------------------------------------------
// Field bindings

struct Entry {
    Value value;
    int line;
};

class Binder {
public:
    Binder(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

    [[noreturn]] void fail(const std::string &key, const std::string &msg) const {
        const auto it = entries_.find(key);
        const std::string where = it != entries_.end() ? "line " + std::to_string(it->second.line) + ": " : "";
        throw ConfigError(where + key + ": " + msg);
    }

    const Value *take(const std::string &key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return nullptr;
        used_.insert(key);
        return &it->second.value;
    }

    void real(const std::string &key, double &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::number) fail(key, "expected a number");
            out = v->num;
        }
    }
    void integer(const std::string &key, int &out) {
        if (const Value *v = take(key)) out = as_int(key, *v);
    }
    void seed(const std::string &key, std::uint64_t &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::number || !v->integral || v->num < 0 || v->num > 9.007199254740992e15)
                fail(key, "expected a non-negative integer");
            out = std::uint64_t(v->num);
        }
    }
    void boolean(const std::string &key, bool &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::boolean) fail(key, "expected true or false");
            out = v->flag;
        }
    }
    void string(const std::string &key, std::string &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::string) fail(key, "expected a quoted string");
            out = v->str;
        }
    }
    template <class E>
    void enumeration(const std::string &key, E &out, E (*parse)(const std::string &)) {
        std::string s;
        if (!entries_.count(key)) return;
        string(key, s);
        try {
            out = parse(s);
        } catch (const std::invalid_argument &e) {
            fail(key, e.what());
        }
    }
    void reals(const std::string &key, std::vector<double> &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::array) fail(key, "expected an array of numbers");
            out.clear();
            for (const auto &item : v->items) {
                if (item.kind != Value::Kind::number) fail(key, "expected an array of numbers");
                out.push_back(item.num);
            }
        }
    }
    void integers(const std::string &key, std::vector<int> &out) {
        if (const Value *v = take(key)) {
            if (v->kind != Value::Kind::array) fail(key, "expected an array of integers");
            out.clear();
            for (const auto &item : v->items) out.push_back(as_int(key, item));
        }
    }
    void matrix(const std::string &key, Mat &out) {
        if (const Value *v = take(key)) {
            auto bad = [&] { fail(key, "expected [[F11, F12], [F21, F22]]"); };
            if (v->kind != Value::Kind::array || v->items.size() != 2) bad();
            for (int i = 0; i < 2; ++i) {
                const Value &row = v->items[i];
                if (row.kind != Value::Kind::array || row.items.size() != 2) bad();
                for (int j = 0; j < 2; ++j) {
                    if (row.items[j].kind != Value::Kind::number) bad();
                    out(i, j) = row.items[j].num;
                }
            }
        }
    }

    void reject_unused() const {
        for (const auto &[key, entry] : entries_)
            if (!used_.count(key))
                throw ConfigError("line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }

private:
    int as_int(const std::string &key, const Value &v) const {
        if (v.kind != Value::Kind::number || !v.integral || std::abs(v.num) > 2147483647.0)
            fail(key, "expected an integer");
        return int(v.num);
    }

    std::map<std::string, Entry> entries_;
    std::set<std::string> used_;
};

FieldFormat parse_field_format(const std::string &s) {
    if (s == "csv") return FieldFormat::csv;
    if (s == "binary") return FieldFormat::binary;
    throw std::invalid_argument("unknown field format '" + s + "' (csv or binary)");
}

std::string to_string(FieldFormat f) { return f == FieldFormat::csv ? "csv" : "binary"; }

// ---------------------------------------------------------------------------
// Emission

std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string quote(const std::string &s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\', out += c;
        else if (c == '\n') out += "\\n";
        else if (c == '\t') out += "\\t";
        else out += c;
    }
    return out + "\"";
}

template <class T, class Fmt>
std::string list(const std::vector<T> &v, Fmt fmt) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s + "]";
}

std::string boolean(bool b) { return b ? "true" : "false"; }

} // namespace

RunConfig parse_config(const std::string &text, bool allow_off_sigma) {
    std::map<std::string, Entry> entries;
    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[' && line.find('=') == std::string::npos) {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty() || key.find_first_of(" \t\"[]") != std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": malformed key '" + key + "'");
        std::string value_text = line.substr(eq + 1);
        const int start_line = line_no;
        while (bracket_balance(value_text) > 0 && std::getline(in, raw)) {
            ++line_no;
            value_text += "\n" + strip_comment(raw);
        }
        Cursor cur(value_text, start_line);
        Value v = cur.parse_value();
        if (!cur.done()) cur.fail("unexpected text after value of '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (!entries.emplace(full, Entry{std::move(v), start_line}).second)
            throw ConfigError("line " + std::to_string(start_line) + ": duplicate key '" + full + "'");
    }

    RunConfig c;
    Binder b(std::move(entries));
    b.enumeration("command", c.command, parse_command);
    b.seed("seed", c.schedule.seed);
    b.integer("threads", c.schedule.threads);
    b.string("output_dir", c.output_dir);
    b.boolean("allow_off_sigma", c.allow_off_sigma);
    b.boolean("strict", c.strict);
    b.matrix("F", c.F);

    b.enumeration("spec.model", c.spec.model, parse_model);
    b.real("spec.p", c.spec.p);
    b.real("spec.q", c.spec.q);
    b.real("spec.c", c.spec.c);
    b.enumeration("spec.phase.kind", c.spec.phase.kind, parse_phase_kind);
    int axis = c.spec.phase.axis + 1;
    b.integer("spec.phase.axis", axis);
    c.spec.phase.axis = axis - 1;
    b.real("spec.phase.theta", c.spec.phase.theta);
    b.real("spec.phase.radius", c.spec.phase.radius);
    b.real("spec.phase.mu_low", c.spec.phase.mu_low);
    b.real("spec.phase.mu_high", c.spec.phase.mu_high);

    b.reals("schedule.n_values", c.schedule.n_values);
    b.integers("schedule.k_values", c.schedule.k_values);
    b.integers("schedule.m_values", c.schedule.m_values);
    b.integer("schedule.starts", c.schedule.starts);
    b.real("schedule.perturbation_scale", c.schedule.perturbation_scale);
    b.real("schedule.smoothing", c.schedule.smoothing);
    b.enumeration("schedule.boundary", c.schedule.boundary, parse_boundary_condition);

    b.integer("solver.max_iterations", c.schedule.solver.max_iterations);
    b.real("solver.gradient_tolerance", c.schedule.solver.gradient_tolerance);
    b.real("solver.c1", c.schedule.solver.c1);
    b.real("solver.c2", c.schedule.solver.c2);
    b.integer("solver.memory", c.schedule.solver.memory);
    b.integer("solver.max_linesearch", c.schedule.solver.max_linesearch);
    b.boolean("solver.continuation", c.schedule.solver.continuation);

    b.real("augmented_lagrangian.initial_penalty", c.schedule.al.initial_penalty);
    b.real("augmented_lagrangian.penalty_growth", c.schedule.al.penalty_growth);
    b.real("augmented_lagrangian.multiplier_cap", c.schedule.al.multiplier_cap);
    b.integer("augmented_lagrangian.outer_iterations", c.schedule.al.outer_iterations);
    b.real("augmented_lagrangian.residual_tolerance", c.schedule.al.residual_tolerance);

    b.real("cell.n", c.cell.n);
    b.integer("cell.k", c.cell.k);
    b.integer("cell.m", c.cell.m);
    b.enumeration("cell.mode", c.cell.mode, parse_constraint_mode);
    b.string("cell.field_input", c.cell.field_input);
    b.string("cell.field_output", c.cell.field_output);
    b.enumeration("cell.field_format", c.cell.field_format, parse_field_format);

    b.string("recovery.macro", c.recovery.macro);
    int raxis = c.recovery.axis + 1;
    b.integer("recovery.axis", raxis);
    c.recovery.axis = raxis - 1;
    b.real("recovery.offset", c.recovery.offset);
    b.real("recovery.amplitude", c.recovery.amplitude);
    b.real("recovery.eta", c.recovery.eta);
    b.boolean("recovery.eta_relative", c.recovery.eta_relative);
    b.reals("recovery.eps_values", c.recovery.eps_values);
    b.integer("recovery.quadrature_per_eps", c.recovery.quadrature_per_eps);

    b.integer("check.assumption_samples", c.check.assumption_samples);
    b.integer("check.null_lagrangian_fields", c.check.null_lagrangian_fields);
    b.integer("check.gradient_instances", c.check.gradient_instances);
    b.integer("check.growth_samples", c.check.growth_samples);
    b.integer("check.rank_one_samples", c.check.rank_one_samples);
    b.integer("check.quasiconvexity_fields", c.check.quasiconvexity_fields);
    b.integer("check.probe_k", c.check.probe_k);
    b.integer("check.probe_m", c.check.probe_m);

    b.reject_unused();
    c.allow_off_sigma = c.allow_off_sigma || allow_off_sigma;
    c.validate();
    return c;
}

void RunConfig::validate() const {
    auto wrap = [](const char *what, auto &&fn) {
        try {
            fn();
        } catch (const std::invalid_argument &e) {
            throw ConfigError(std::string(what) + ": " + e.what());
        }
    };
    wrap("spec", [&] { spec.validate(); });
    wrap("schedule", [&] { schedule.validate(); });
    for (double v : F.a)
        if (!std::isfinite(v)) throw ConfigError("F: entries must be finite");
    if (std::abs(det(F) - 1.0) > CellProblem::sigma_tolerance && !allow_off_sigma) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "F: det F ≠ 1 (det F = %.17g); set allow_off_sigma for the divergence demo",
                      det(F));
        throw ConfigError(buf);
    }
    if (!(cell.n > 0.0)) throw ConfigError("cell.n: must be positive");
    if (cell.k < 1 || cell.m < 1) throw ConfigError("cell: k and m must be positive");
    if (recovery.macro != "affine" && recovery.macro != "laminate")
        throw ConfigError("recovery.macro: expected \"affine\" or \"laminate\"");
    if (recovery.axis != 0 && recovery.axis != 1) throw ConfigError("recovery.axis: expected 1 or 2");
    if (!(recovery.offset > 0.0 && recovery.offset < 1.0)) throw ConfigError("recovery.offset: must lie in (0, 1)");
    if (!(recovery.eta > 0.0)) throw ConfigError("recovery.eta: must be positive");
    if (recovery.eps_values.empty()) throw ConfigError("recovery.eps_values: must be non-empty");
    for (std::size_t i = 0; i < recovery.eps_values.size(); ++i)
        if (!(recovery.eps_values[i] > 0.0) || (i > 0 && !(recovery.eps_values[i] < recovery.eps_values[i - 1])))
            throw ConfigError("recovery.eps_values: must be positive and decreasing");
    if (recovery.quadrature_per_eps < 0) throw ConfigError("recovery.quadrature_per_eps: must be non-negative");
    for (int v : {check.assumption_samples, check.null_lagrangian_fields, check.gradient_instances,
                  check.growth_samples, check.rank_one_samples, check.quasiconvexity_fields, check.probe_k,
                  check.probe_m})
        if (v < 1) throw ConfigError("check: counts and probe sizes must be positive");
}

RunConfig load_config(const std::string &path, bool allow_off_sigma) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), allow_off_sigma);
}

std::string serialize_config(const RunConfig &c) {
    std::ostringstream o;
    auto ints = [](int v) { return std::to_string(v); };
    o << "command = " << quote(to_string(c.command)) << "\n";
    o << "seed = " << c.schedule.seed << "\n";
    o << "threads = " << c.schedule.threads << "\n";
    o << "output_dir = " << quote(c.output_dir) << "\n";
    o << "allow_off_sigma = " << boolean(c.allow_off_sigma) << "\n";
    o << "strict = " << boolean(c.strict) << "\n";
    o << "F = [[" << num(c.F(0, 0)) << ", " << num(c.F(0, 1)) << "], [" << num(c.F(1, 0)) << ", " << num(c.F(1, 1))
      << "]]\n";

    o << "\n[spec]\n";
    o << "model = " << quote(to_string(c.spec.model)) << "\n";
    o << "p = " << num(c.spec.p) << "\nq = " << num(c.spec.q) << "\nc = " << num(c.spec.c) << "\n";
    o << "\n[spec.phase]\n";
    o << "kind = " << quote(to_string(c.spec.phase.kind)) << "\n";
    o << "axis = " << c.spec.phase.axis + 1 << "\n";
    o << "theta = " << num(c.spec.phase.theta) << "\nradius = " << num(c.spec.phase.radius) << "\n";
    o << "mu_low = " << num(c.spec.phase.mu_low) << "\nmu_high = " << num(c.spec.phase.mu_high) << "\n";

    const Schedule &s = c.schedule;
    o << "\n[schedule]\n";
    o << "n_values = " << list(s.n_values, num) << "\n";
    o << "k_values = " << list(s.k_values, ints) << "\n";
    o << "m_values = " << list(s.m_values, ints) << "\n";
    o << "starts = " << s.starts << "\n";
    o << "perturbation_scale = " << num(s.perturbation_scale) << "\n";
    o << "smoothing = " << num(s.smoothing) << "\n";
    o << "boundary = " << quote(to_string(s.boundary)) << "\n";

    o << "\n[solver]\n";
    o << "max_iterations = " << s.solver.max_iterations << "\n";
    o << "gradient_tolerance = " << num(s.solver.gradient_tolerance) << "\n";
    o << "c1 = " << num(s.solver.c1) << "\nc2 = " << num(s.solver.c2) << "\n";
    o << "memory = " << s.solver.memory << "\nmax_linesearch = " << s.solver.max_linesearch << "\n";
    o << "continuation = " << boolean(s.solver.continuation) << "\n";

    o << "\n[augmented_lagrangian]\n";
    o << "initial_penalty = " << num(s.al.initial_penalty) << "\n";
    o << "penalty_growth = " << num(s.al.penalty_growth) << "\n";
    o << "multiplier_cap = " << num(s.al.multiplier_cap) << "\n";
    o << "outer_iterations = " << s.al.outer_iterations << "\n";
    o << "residual_tolerance = " << num(s.al.residual_tolerance) << "\n";

    o << "\n[cell]\n";
    o << "n = " << num(c.cell.n) << "\nk = " << c.cell.k << "\nm = " << c.cell.m << "\n";
    o << "mode = " << quote(to_string(c.cell.mode)) << "\n";
    o << "field_input = " << quote(c.cell.field_input) << "\n";
    o << "field_output = " << quote(c.cell.field_output) << "\n";
    o << "field_format = " << quote(to_string(c.cell.field_format)) << "\n";

    o << "\n[recovery]\n";
    o << "macro = " << quote(c.recovery.macro) << "\n";
    o << "axis = " << c.recovery.axis + 1 << "\n";
    o << "offset = " << num(c.recovery.offset) << "\namplitude = " << num(c.recovery.amplitude) << "\n";
    o << "eta = " << num(c.recovery.eta) << "\neta_relative = " << boolean(c.recovery.eta_relative) << "\n";
    o << "eps_values = " << list(c.recovery.eps_values, num) << "\n";
    o << "quadrature_per_eps = " << c.recovery.quadrature_per_eps << "\n";

    o << "\n[check]\n";
    o << "assumption_samples = " << c.check.assumption_samples << "\n";
    o << "null_lagrangian_fields = " << c.check.null_lagrangian_fields << "\n";
    o << "gradient_instances = " << c.check.gradient_instances << "\n";
    o << "growth_samples = " << c.check.growth_samples << "\n";
    o << "rank_one_samples = " << c.check.rank_one_samples << "\n";
    o << "quasiconvexity_fields = " << c.check.quasiconvexity_fields << "\n";
    o << "probe_k = " << c.check.probe_k << "\nprobe_m = " << c.check.probe_m << "\n";
    return o.str();
}

} // namespace cellhom
