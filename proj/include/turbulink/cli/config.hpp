#ifndef TURBULINK_CLI_CONFIG_HPP
#define TURBULINK_CLI_CONFIG_HPP

// Run configuration in a TOML subset:
//
//   # comment
//   [section]
//   key = 1.5e-15          number
//   key = "text"           string
//   key = true             boolean
//   key = [0.1, 0.2]       numeric array (sweep axes only)
//
// Keys are unique per section. Unknown sections or keys are errors.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "../errors.hpp"
#include "../ipe_solver.hpp"
#include "../schmidt_source.hpp"
#include "../temporal_channel.hpp"
#include "../turbulence_model.hpp"

namespace turbulink::cli {

struct ConfigValue {
    std::variant<double, std::string, bool, std::vector<double>> v;
    int line = 0;
    int column = 0;
    std::size_t seq = 0;  // declaration order; keeps sweep axes in file order
};

using ConfigTable = std::map<std::string, ConfigValue>;  // "section.key"

namespace detail {

class ValueParser {
public:
    ValueParser(const std::string& text, int line, int col) : s_(text), line_(line), base_(col) {}

    ConfigValue parse() {
        skip_ws();
        ConfigValue out{{}, line_, col()};
        if (at_end()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') {
            out.v = parse_string();
        } else if (c == '[') {
            out.v = parse_array();
        } else if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            out.v = true;
        } else if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            out.v = false;
        } else {
            out.v = parse_number();
        }
        skip_ws();
        if (!at_end() && s_[pos_] != '#') fail("unexpected trailing characters");
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(msg, line_, col()); }
    int col() const { return base_ + static_cast<int>(pos_); }
    bool at_end() const { return pos_ >= s_.size(); }
    void skip_ws() {
        while (!at_end() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    std::string parse_string() {
        ++pos_;
        std::string out;
        while (!at_end() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
            out += s_[pos_++];
        }
        if (at_end()) fail("unterminated string");
        ++pos_;
        return out;
    }

    double parse_number() {
        const std::size_t start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                             s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == '_'))
            ++pos_;
        std::string tok = s_.substr(start, pos_ - start);
        std::erase(tok, '_');
        if (tok.empty()) {
            pos_ = start;
            fail("expected a value");
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v)) {
            pos_ = start;
            fail("malformed number '" + tok + "'");
        }
        return v;
    }

    std::vector<double> parse_array() {
        ++pos_;
        std::vector<double> out;
        skip_ws();
        if (!at_end() && s_[pos_] == ']') {
            ++pos_;
            return out;
        }
        for (;;) {
            skip_ws();
            out.push_back(parse_number());
            skip_ws();
            if (at_end()) fail("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return out;
            }
            fail("expected ',' or ']' in array");
        }
    }

    const std::string& s_;
    int line_;
    int base_;
    std::size_t pos_ = 0;
};

inline bool valid_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

}  // namespace detail

inline ConfigTable parse_config_table(std::istream& in) {
    ConfigTable table;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t p = line.find_first_not_of(" \t");
        if (p == std::string::npos || line[p] == '#') continue;
        if (line[p] == '[') {
            const std::size_t close = line.find(']', p);
            if (close == std::string::npos) throw ConfigError("unterminated table header", lineno, static_cast<int>(p) + 1);
            section = line.substr(p + 1, close - p - 1);
            if (section.empty() || !std::all_of(section.begin(), section.end(), detail::valid_key_char))
                throw ConfigError("invalid table name", lineno, static_cast<int>(p) + 2);
            const std::size_t rest = line.find_first_not_of(" \t", close + 1);
            if (rest != std::string::npos && line[rest] != '#')
                throw ConfigError("unexpected text after table header", lineno, static_cast<int>(rest) + 1);
            continue;
        }
        const std::size_t key_start = p;
        while (p < line.size() && detail::valid_key_char(line[p])) ++p;
        if (p == key_start) throw ConfigError("expected a key", lineno, static_cast<int>(key_start) + 1);
        const std::string key = line.substr(key_start, p - key_start);
        p = line.find_first_not_of(" \t", p);
        if (p == std::string::npos || line[p] != '=')
            throw ConfigError("expected '=' after key '" + key + "'", lineno,
                              static_cast<int>(p == std::string::npos ? line.size() : p) + 1);
        const std::string full = section.empty() ? key : section + "." + key;
        const std::string rhs = line.substr(p + 1);
        auto value = detail::ValueParser(rhs, lineno, static_cast<int>(p) + 2).parse();
        if (table.count(full))
            throw ConfigError("duplicate key '" + full + "'", lineno, static_cast<int>(key_start) + 1);
        value.seq = table.size();
        table[full] = std::move(value);
    }
    return table;
}

struct RunConfig {
    LinkGeometry link;
    double alpha_per_km = 0.0;
    double waist_fraction = 0.0;  // > 0: waist = fraction * sqrt(lambda z / pi)

    double cn2 = 1e-15;
    std::string profile_csv;
    double kappa0 = 0.01;

    double sigma_a_trad = 10.0;  // 1e12 rad/s
    double sigma_b_trad = 80.0;
    int source_modes = 3;

    SolverConfig solver;

    int grid_order = 48;
    KernelFidelity fidelity = KernelFidelity::Analytic;
    int ipe_cutoff = 2;
    int ipe_steps = 64;
    int matrix_modes = 3;
    int trace_modes = 10;

    int coupling_cutoff = 1;
    double coupling_z = 0.0;

    int entangle_fixed_mode = 0;
    int entangle_max_mode = 10;
    int entangle_dimension = 12;
    bool single_sided = false;

    std::vector<std::pair<std::string, std::vector<double>>> sweep_axes;
    std::string output_dir = ".";
    std::int64_t seed = 0;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;

    BiphotonSpec biphoton() const {
        return BiphotonSpec::from_center_wavelength(sigma_a_trad * 1e12, sigma_b_trad * 1e12, link.wavelength);
    }

    // Geometry with the waist rule applied.
    LinkGeometry geometry() const {
        LinkGeometry g = link;
        if (waist_fraction > 0.0)
            g.waist = waist_fraction * std::sqrt(g.wavelength * g.path_length / std::numbers::pi);
        return g;
    }

    TurbulenceProfile profile() const {
        if (!profile_csv.empty()) return load_profile_csv(profile_csv);
        return TurbulenceProfile::constant(cn2);
    }

    KernelOptions kernel_options(int threads) const {
        return {grid_order, fidelity, ipe_cutoff, ipe_steps, alpha_per_km, threads};
    }
};

namespace detail {

struct Binder {
    const ConfigTable& table;
    std::map<std::string, bool> used;

    const ConfigValue* find(const std::string& key) {
        const auto it = table.find(key);
        if (it == table.end()) return nullptr;
        used[key] = true;
        return &it->second;
    }

    void number(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (const auto* d = std::get_if<double>(&v->v)) out = *d;
            else throw ConfigError("'" + key + "' must be a number", v->line, v->column);
        }
    }
    void integer(const std::string& key, int& out) {
        double d = out;
        number(key, d);
        if (d != std::floor(d) || std::abs(d) > 1e9) {
            const auto* v = find(key);
            throw ConfigError("'" + key + "' must be an integer", v->line, v->column);
        }
        out = static_cast<int>(d);
    }
    void integer64(const std::string& key, std::int64_t& out) {
        double d = static_cast<double>(out);
        number(key, d);
        if (d != std::floor(d)) {
            const auto* v = find(key);
            throw ConfigError("'" + key + "' must be an integer", v->line, v->column);
        }
        out = static_cast<std::int64_t>(d);
    }
    void text(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            if (const auto* s = std::get_if<std::string>(&v->v)) out = *s;
            else throw ConfigError("'" + key + "' must be a string", v->line, v->column);
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (const auto* v = find(key)) {
            if (const auto* b = std::get_if<bool>(&v->v)) out = *b;
            else throw ConfigError("'" + key + "' must be true or false", v->line, v->column);
        }
    }
};

}  // namespace detail

// Every numeric key that may appear in [sweep] or as a --set override.
inline double* numeric_field(RunConfig& c, const std::string& key) {
    if (key == "link.path_length_m") return &c.link.path_length;
    if (key == "link.transmitter_height_m") return &c.link.tx_height;
    if (key == "link.receiver_height_m") return &c.link.rx_height;
    if (key == "link.earth_radius_m") return &c.link.earth_radius;
    if (key == "link.waist_m") return &c.link.waist;
    if (key == "link.waist_fraction") return &c.waist_fraction;
    if (key == "link.wavelength_m") return &c.link.wavelength;
    if (key == "link.extinction_per_km") return &c.alpha_per_km;
    if (key == "turbulence.cn2") return &c.cn2;
    if (key == "turbulence.kappa0_per_m") return &c.kappa0;
    if (key == "source.sigma_a_Trad_s") return &c.sigma_a_trad;
    if (key == "source.sigma_b_Trad_s") return &c.sigma_b_trad;
    if (key == "coupling.z_m") return &c.coupling_z;
    return nullptr;
}

inline void validate(const RunConfig& c) {
    const auto bad = [](const std::string& key, const std::string& why) {
        throw ConfigError("range violation for `" + key + "`: " + why);
    };
    if (!(c.link.wavelength >= 0.3e-6 && c.link.wavelength <= 15e-6))
        bad("link.wavelength_m", "wavelength must lie in [0.3, 15] um");
    if (!valid_cn2(c.cn2)) bad("turbulence.cn2", "cn2 must be 0 or lie in [1e-19, 1e-11] m^-2/3");
    if (!(c.link.path_length > 0.0 && c.link.path_length <= 500e3))
        bad("link.path_length_m", "path length must lie in (0, 500] km");
    if (!(c.link.tx_height > 0.0)) bad("link.transmitter_height_m", "must be positive");
    if (!(c.link.rx_height > 0.0)) bad("link.receiver_height_m", "must be positive");
    if (!(c.link.earth_radius > 0.0)) bad("link.earth_radius_m", "must be positive");
    if (!(c.link.waist > 0.0)) bad("link.waist_m", "must be positive");
    if (c.waist_fraction < 0.0) bad("link.waist_fraction", "must be non-negative");
    if (c.alpha_per_km < 0.0) bad("link.extinction_per_km", "must be non-negative");
    if (!(c.kappa0 > 0.0)) bad("turbulence.kappa0_per_m", "must be positive");
    if (!(c.sigma_a_trad > 0.0)) bad("source.sigma_a_Trad_s", "must be positive");
    if (!(c.sigma_b_trad > 0.0)) bad("source.sigma_b_Trad_s", "must be positive");
    if (c.source_modes < 0 || c.source_modes > 64) bad("source.max_mode", "must lie in [0, 64]");
    if (c.solver.cutoff < 0 || c.solver.cutoff > 8) bad("solver.cutoff", "must lie in [0, 8]");
    if (c.solver.steps < 16) bad("solver.steps", "must be >= 16");
    if (c.grid_order < 2 || c.grid_order > 64) bad("channel.grid_order", "must lie in [2, 64]");
    if (c.fidelity == KernelFidelity::FullIPE && c.grid_order > 12)
        bad("channel.grid_order", "full-ipe kernels are limited to grid order <= 12");
    if (c.ipe_cutoff < 0 || c.ipe_cutoff > 5) bad("channel.ipe_cutoff", "must lie in [0, 5]");
    if (c.ipe_steps < 16) bad("channel.ipe_steps", "must be >= 16");
    if (c.matrix_modes < 0 || c.matrix_modes > c.grid_order / 2) bad("channel.matrix_modes", "must lie in [0, grid_order/2]");
    if (c.trace_modes < 0 || c.trace_modes > c.grid_order / 2) bad("channel.trace_modes", "must lie in [0, grid_order/2]");
    if (c.coupling_cutoff < 0 || c.coupling_cutoff > 5) bad("coupling.cutoff", "must lie in [0, 5]");
    if (c.coupling_z < 0.0 || c.coupling_z > c.link.path_length) bad("coupling.z_m", "must lie in [0, path length]");
    if (c.entangle_dimension < 1 || c.entangle_dimension > 14) bad("entangle.dimension", "must lie in [1, 14]");
    if (c.entangle_dimension - 1 > c.grid_order / 2) bad("entangle.dimension", "exceeds modes resolvable on the grid");
    if (c.entangle_fixed_mode < 0 || c.entangle_fixed_mode >= c.entangle_dimension)
        bad("entangle.fixed_mode", "must lie below entangle.dimension");
    if (c.entangle_max_mode < 0 || c.entangle_max_mode >= c.entangle_dimension)
        bad("entangle.max_mode", "must lie below entangle.dimension");
    if (!c.profile_csv.empty() && !std::filesystem::exists(c.profile_csv))
        bad("turbulence.profile_csv", "file does not exist: " + c.profile_csv);
    RunConfig probe = c;
    for (const auto& [name, values] : c.sweep_axes) {
        if (!numeric_field(probe, name)) bad("sweep." + name, "not a sweepable numeric key");
        if (values.empty()) bad("sweep." + name, "axis has no values");
    }
    const LinkGeometry g = c.geometry();
    try {
        g.validate();
    } catch (const InvalidArgument& e) {
        bad("link", e.what());
    }
}

inline RunConfig config_from_table(const ConfigTable& table) {
    RunConfig c;
    detail::Binder b{table, {}};
    b.number("link.path_length_m", c.link.path_length);
    b.number("link.transmitter_height_m", c.link.tx_height);
    b.number("link.receiver_height_m", c.link.rx_height);
    b.number("link.earth_radius_m", c.link.earth_radius);
    b.number("link.waist_m", c.link.waist);
    b.number("link.waist_fraction", c.waist_fraction);
    b.number("link.wavelength_m", c.link.wavelength);
    b.number("link.extinction_per_km", c.alpha_per_km);
    b.number("turbulence.cn2", c.cn2);
    b.text("turbulence.profile_csv", c.profile_csv);
    b.number("turbulence.kappa0_per_m", c.kappa0);
    b.number("source.sigma_a_Trad_s", c.sigma_a_trad);
    b.number("source.sigma_b_Trad_s", c.sigma_b_trad);
    b.integer("source.max_mode", c.source_modes);
    b.integer("solver.cutoff", c.solver.cutoff);
    std::string scheme = to_string(c.solver.scheme);
    b.text("solver.scheme", scheme);
    if (scheme == "truncated-exact") c.solver.scheme = PropagationScheme::TruncatedExact;
    else if (scheme == "lindblad") c.solver.scheme = PropagationScheme::LindbladTruncated;
    else {
        const auto& v = table.at("solver.scheme");
        throw ConfigError("solver.scheme must be \"truncated-exact\" or \"lindblad\"", v.line, v.column);
    }
    b.integer("solver.steps", c.solver.steps);
    b.boolean("solver.check_convergence", c.solver.check_convergence);
    b.integer("channel.grid_order", c.grid_order);
    std::string fidelity = to_string(c.fidelity);
    b.text("channel.fidelity", fidelity);
    if (fidelity == "analytic") c.fidelity = KernelFidelity::Analytic;
    else if (fidelity == "full-ipe") c.fidelity = KernelFidelity::FullIPE;
    else {
        const auto& v = table.at("channel.fidelity");
        throw ConfigError("channel.fidelity must be \"analytic\" or \"full-ipe\"", v.line, v.column);
    }
    b.integer("channel.ipe_cutoff", c.ipe_cutoff);
    b.integer("channel.ipe_steps", c.ipe_steps);
    b.integer("channel.matrix_modes", c.matrix_modes);
    b.integer("channel.trace_modes", c.trace_modes);
    b.integer("coupling.cutoff", c.coupling_cutoff);
    b.number("coupling.z_m", c.coupling_z);
    b.integer("entangle.fixed_mode", c.entangle_fixed_mode);
    b.integer("entangle.max_mode", c.entangle_max_mode);
    b.integer("entangle.dimension", c.entangle_dimension);
    b.boolean("entangle.single_sided", c.single_sided);
    b.text("output.directory", c.output_dir);
    b.integer64("run.seed", c.seed);
    std::vector<std::pair<std::size_t, std::string>> axes;
    for (const auto& [key, value] : table) {
        if (key.rfind("sweep.", 0) == 0) {
            b.used[key] = true;
            if (!std::holds_alternative<std::vector<double>>(value.v))
                throw ConfigError("sweep axis '" + key + "' must be a numeric array", value.line, value.column);
            axes.emplace_back(value.seq, key);
        }
    }
    std::sort(axes.begin(), axes.end());
    for (const auto& [seq, key] : axes)
        c.sweep_axes.emplace_back(key.substr(6), std::get<std::vector<double>>(table.at(key).v));
    for (const auto& [key, value] : table)
        if (!b.used.count(key)) throw ConfigError("unknown key '" + key + "'", value.line, value.column);
    validate(c);
    return c;
}

inline RunConfig parse_config(std::istream& in) { return config_from_table(parse_config_table(in)); }

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    try {
        return parse_config(f);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline std::string num(double v) { return fmt::format("{:.17g}", v); }

inline std::string serialize(const RunConfig& c) {
    std::string o;
    o += "[link]\n";
    o += "path_length_m = " + num(c.link.path_length) + "\n";
    o += "transmitter_height_m = " + num(c.link.tx_height) + "\n";
    o += "receiver_height_m = " + num(c.link.rx_height) + "\n";
    o += "earth_radius_m = " + num(c.link.earth_radius) + "\n";
    o += "waist_m = " + num(c.link.waist) + "\n";
    o += "waist_fraction = " + num(c.waist_fraction) + "\n";
    o += "wavelength_m = " + num(c.link.wavelength) + "\n";
    o += "extinction_per_km = " + num(c.alpha_per_km) + "\n";
    o += "\n[turbulence]\n";
    o += "cn2 = " + num(c.cn2) + "\n";
    if (!c.profile_csv.empty()) o += "profile_csv = " + quote(c.profile_csv) + "\n";
    o += "kappa0_per_m = " + num(c.kappa0) + "\n";
    o += "\n[source]\n";
    o += "sigma_a_Trad_s = " + num(c.sigma_a_trad) + "\n";
    o += "sigma_b_Trad_s = " + num(c.sigma_b_trad) + "\n";
    o += "max_mode = " + std::to_string(c.source_modes) + "\n";
    o += "\n[solver]\n";
    o += "cutoff = " + std::to_string(c.solver.cutoff) + "\n";
    o += "scheme = " + quote(to_string(c.solver.scheme)) + "\n";
    o += "steps = " + std::to_string(c.solver.steps) + "\n";
    o += std::string("check_convergence = ") + (c.solver.check_convergence ? "true" : "false") + "\n";
    o += "\n[channel]\n";
    o += "grid_order = " + std::to_string(c.grid_order) + "\n";
    o += "fidelity = " + quote(to_string(c.fidelity)) + "\n";
    o += "ipe_cutoff = " + std::to_string(c.ipe_cutoff) + "\n";
    o += "ipe_steps = " + std::to_string(c.ipe_steps) + "\n";
    o += "matrix_modes = " + std::to_string(c.matrix_modes) + "\n";
    o += "trace_modes = " + std::to_string(c.trace_modes) + "\n";
    o += "\n[coupling]\n";
    o += "cutoff = " + std::to_string(c.coupling_cutoff) + "\n";
    o += "z_m = " + num(c.coupling_z) + "\n";
    o += "\n[entangle]\n";
    o += "fixed_mode = " + std::to_string(c.entangle_fixed_mode) + "\n";
    o += "max_mode = " + std::to_string(c.entangle_max_mode) + "\n";
    o += "dimension = " + std::to_string(c.entangle_dimension) + "\n";
    o += std::string("single_sided = ") + (c.single_sided ? "true" : "false") + "\n";
    if (!c.sweep_axes.empty()) {
        o += "\n[sweep]\n";
        for (const auto& [name, values] : c.sweep_axes) {
            o += name + " = [";
            for (std::size_t i = 0; i < values.size(); ++i) o += (i ? ", " : "") + num(values[i]);
            o += "]\n";
        }
    }
    o += "\n[output]\n";
    o += "directory = " + quote(c.output_dir) + "\n";
    o += "\n[run]\n";
    o += "seed = " + std::to_string(c.seed) + "\n";
    return o;
}

// Applies `section.key=value` overrides with the same value grammar as the file.
inline RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides) {
    if (overrides.empty()) return base;
    std::istringstream in(serialize(base));
    ConfigTable table = parse_config_table(in);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' must look like section.key=value");
        std::string key = o.substr(0, eq);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        const std::string rhs = o.substr(eq + 1);
        ConfigValue value;
        try {
            value = detail::ValueParser(rhs, 0, 1).parse();
        } catch (const ConfigError&) {
            // bare words are strings: --set solver.scheme=lindblad
            value = ConfigValue{rhs, 0, 0};
        }
        const auto it = table.find(key);
        value.seq = it == table.end() ? table.size() : it->second.seq;
        table[key] = std::move(value);
    }
    return config_from_table(table);
}

// Explicit path, then TURBULINK_CONFIG, then built-in defaults.
inline RunConfig load_config(const std::string& path) {
    std::string p = path;
    if (p.empty())
        if (const char* env = std::getenv("TURBULINK_CONFIG")) p = env;
    if (p.empty()) {
        RunConfig c;
        validate(c);
        return c;
    }
    return parse_config(p);
}

}  // namespace turbulink::cli

#endif
