#ifndef TURBULINK_CLI_RUN_HPP
#define TURBULINK_CLI_RUN_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "../entanglement_analysis.hpp"
#include "../ipe_solver.hpp"
#include "../lg_coupling.hpp"
#include "../parallel.hpp"
#include "../schmidt_source.hpp"
#include "../temporal_channel.hpp"
#include "../turbulence_model.hpp"
#include "../validation.hpp"
#include "config.hpp"

namespace turbulink::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumeric = 2 };

inline constexpr std::size_t kMaxSweepPoints = 100000;

struct RunOptions {
    int threads = 1;
    bool gnuplot_hints = false;
    bool json = false;
};

struct Column {
    std::string name;
    std::string doc;
};

struct Table {
    std::string file;
    std::vector<Column> columns;
    std::vector<std::vector<std::string>> rows;
    std::string plot;  // suggested gnuplot `using` clause
};

struct Report {
    std::vector<Table> tables;
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    std::string text;
    bool ok = true;
};

inline std::string cell(double v) { return fmt::format("{:.10g}", v); }
inline std::string cell(int v) { return std::to_string(v); }

inline std::string csv_body(const Table& t) {
    std::string s;
    for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i].name;
    s += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + row[i];
        s += "\n";
    }
    return s;
}

inline void write_table(const std::filesystem::path& dir, const Table& t) {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / t.file, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / t.file).string());
    f << csv_body(t);
}

inline std::string gnuplot_hints(const Table& t) {
    std::string s = "# " + t.file + "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        s += fmt::format("#   column {:>2}: {:<16} {}\n", i + 1, t.columns[i].name, t.columns[i].doc);
    if (!t.plot.empty())
        s += fmt::format("#   set datafile separator ','; plot '{}' every ::1 {}\n", t.file, t.plot);
    return s;
}

namespace detail {

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
    return v;
}

inline std::vector<double> logspace(double a, double b, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(a * std::pow(b / a, static_cast<double>(i) / (n - 1)));
    return v;
}

}  // namespace detail

inline Report run_schmidt(const RunConfig& c, const RunOptions&) {
    const auto spec = c.biphoton();
    const auto src = truncated_source(spec, c.source_modes);
    Report r;
    Table t{"schmidt.csv",
            {{"n", "Schmidt mode index"}, {"lambda", "eigenvalue"}, {"cumulative", "sum of eigenvalues up to n"}},
            {},
            "using 1:2 with linespoints"};
    std::string text = fmt::format("{:>3}  {:>10}\n", "n", "lambda_n");
    double cum = 0.0;
    for (int n = 0; n <= c.source_modes; ++n) {
        const double l = schmidt_eigenvalue(spec, n);
        cum += l;
        t.rows.push_back({cell(n), cell(l), cell(cum)});
        text += fmt::format("{:>3}  {:>10.3f}\n", n, l);
        r.summary["lambda"].push_back(l);
    }
    text += fmt::format("Schmidt number K = {:.4f}\n", schmidt_number(spec));
    text += fmt::format("discarded {:.1f}% of the spectrum beyond mode {}\n", 100.0 * src.discarded_mass,
                        c.source_modes);
    text += fmt::format("amplitude prefactor {:.4f}, probability prefactor {:.4f}\n", src.amplitude_prefactor(),
                        src.probability_prefactor());
    r.summary["schmidt_number"] = schmidt_number(spec);
    r.summary["discarded"] = src.discarded_mass;
    r.summary["amplitude_prefactor"] = src.amplitude_prefactor();
    r.summary["probability_prefactor"] = src.probability_prefactor();
    r.text = text;
    r.tables.push_back(std::move(t));
    return r;
}

// Lowest-mode probability at the configured point: waist, integrated l, P.
inline std::vector<double> beam_point(const RunConfig& c) {
    const auto g = c.geometry();
    const auto prof = c.profile();
    const double l = integrated_l(prof, g);
    const double p = analytic_decay(prof, g) * extinction_factor(c.alpha_per_km, g.path_length);
    return {g.waist, l, p};
}

inline const std::vector<Column>& beam_point_columns() {
    static const std::vector<Column> cols{{"waist_m", "beam waist w0 [m]"},
                                          {"l_integrated", "integral of l(z) along the path"},
                                          {"P", "lowest-mode probability"}};
    return cols;
}

inline Report run_beam(const RunConfig& c, const RunOptions& opt) {
    Report r;
    const auto g0 = c.geometry();
    const auto prof = c.profile();
    const double ext = extinction_factor(c.alpha_per_km, g0.path_length);

    Table waist{"beam_waist.csv", beam_point_columns(), {}, "using 1:3 with lines"};
    const auto waists = detail::linspace(0.02, 0.40, 761);
    std::vector<std::vector<double>> wrows(waists.size());
    parallel_for(waists.size(), opt.threads, [&](std::size_t i) {
        LinkGeometry g = g0;
        g.waist = waists[i];
        const double l = integrated_l(prof, g);
        wrows[i] = {g.waist, l, analytic_decay(prof, g) * ext};
    });
    std::size_t best = 0;
    for (std::size_t i = 0; i < wrows.size(); ++i) {
        waist.rows.push_back({cell(wrows[i][0]), cell(wrows[i][1]), cell(wrows[i][2])});
        if (wrows[i][2] > wrows[best][2]) best = i;
    }

    Table dist{"beam_distance.csv",
               {{"distance_m", "link length [m]"},
                {"cn2_m-2/3", "constant structure constant [m^-2/3]"},
                {"waist_m", "waist, 3/4 of sqrt(lambda z / pi) [m]"},
                {"P", "lowest-mode probability"}},
               {},
               "using 1:4 with lines"};
    const std::vector<double> family{1e-17, 1e-16, 1e-15, 1e-14, 1e-13};
    const auto rows = distance_sweep(family, g0, WaistRule{std::nullopt, 0.75}, detail::logspace(1e3, 100e3, 41),
                                     c.alpha_per_km);
    for (const auto& row : rows)
        dist.rows.push_back({cell(row.distance), cell(row.cn2), cell(row.waist), cell(row.probability)});

    const auto pt = beam_point(c);
    Table point{"beam_point.csv", beam_point_columns(), {{cell(pt[0]), cell(pt[1]), cell(pt[2])}}, ""};

    r.summary["waist_m"] = pt[0];
    r.summary["P"] = pt[2];
    r.summary["optimal_waist_m"] = wrows[best][0];
    r.summary["optimal_P"] = wrows[best][2];
    r.summary["l_minimizing_waist_m"] = std::sqrt(g0.wavelength * g0.path_length / std::numbers::pi);
    r.text = fmt::format(
        "P(w0 = {:.4f} m) = {:.6f}\npeak of the waist sweep at w0 = {:.4f} m, P = {:.6f}\n"
        "l-minimizing waist sqrt(lambda z / pi) = {:.4f} m\n",
        pt[0], pt[2], wrows[best][0], wrows[best][2], r.summary["l_minimizing_waist_m"].get<double>());
    r.tables = {std::move(waist), std::move(dist), std::move(point)};
    return r;
}

inline Report run_coupling(const RunConfig& c, const RunOptions&) {
    Report r;
    const auto g = c.geometry();
    const auto prof = c.profile();
    const ModeBasis basis(c.coupling_cutoff);
    const ChannelPoint pt{c.coupling_z, cn2_at(prof, g, c.coupling_z), g.waist, SpectralPoint::single(g.wavelength)};
    const SpectrumParams sp{c.kappa0};
    const auto tensor = assemble_coupling_tensor(basis, pt, sp);
    Table t{"coupling.csv",
            {{"lm", "l of m"}, {"rm", "r of m"}, {"ln", "l of n"}, {"rn", "r of n"}, {"lu", "l of u"},
             {"ru", "r of u"}, {"lv", "l of v"}, {"rv", "r of v"},
             {"re_per_m", "Re L_{m,n,u,v} without the L_T term [1/m]"},
             {"im_per_m", "Im L_{m,n,u,v} without the L_T term [1/m]"}},
            {},
            ""};
    for (const auto& e : tensor.entries()) {
        if (e.value == cplx{}) continue;
        const auto m = basis[e.m], n = basis[e.n], u = basis[e.u], v = basis[e.v];
        t.rows.push_back({cell(m.l), cell(m.r), cell(n.l), cell(n.r), cell(u.l), cell(u.r), cell(v.l), cell(v.r),
                          cell(e.value.real()), cell(e.value.imag())});
    }
    r.summary["modes"] = basis.size();
    r.summary["entries"] = t.rows.size();
    r.summary["l_t_per_m"] = *tensor.l_t();
    r.summary["strength_per_m"] = pt.strength();
    r.text = fmt::format("{} modes, {} non-zero entries at z = {:g} m\nL_T = {:.6g} 1/m, l(z) = {:.6g} 1/m\n",
                         basis.size(), t.rows.size(), pt.z, *tensor.l_t(), pt.strength());
    r.tables.push_back(std::move(t));
    return r;
}

inline ChannelKernel config_kernel(const RunConfig& c, int threads) {
    return channel_kernel(c.biphoton(), c.profile(), c.geometry(), c.kernel_options(threads));
}

inline Report run_kernel(const RunConfig& c, const RunOptions& opt) {
    Report r;
    const auto k = config_kernel(c, opt.threads);
    Table t{"kernel.csv",
            {{"omega1_Trad_s", "first frequency [1e12 rad/s]"},
             {"omega2_Trad_s", "second frequency [1e12 rad/s]"},
             {"P", "two-frequency decay"}},
            {},
            "using 1:2:3 with points palette"};
    for (int i = 0; i < k.order(); ++i)
        for (int j = 0; j < k.order(); ++j)
            t.rows.push_back({cell(k.grid.omega[static_cast<std::size_t>(i)] * 1e-12),
                              cell(k.grid.omega[static_cast<std::size_t>(j)] * 1e-12), cell(k.P(i, j))});
    r.summary["order"] = k.order();
    r.summary["fidelity"] = to_string(k.fidelity);
    r.summary["min_P"] = k.P.minCoeff();
    r.summary["max_P"] = k.P.maxCoeff();
    r.text = fmt::format("{}x{} {} kernel, P in [{:.6f}, {:.6f}]\n", k.order(), k.order(), to_string(k.fidelity),
                         k.P.minCoeff(), k.P.maxCoeff());
    r.tables.push_back(std::move(t));
    return r;
}

// Flattened S then T: S_n_m for n, m <= matrix_modes, T_n for n <= trace_modes.
inline std::vector<std::pair<std::string, double>> tmatrix_metrics(const RunConfig& c, const ChannelKernel& k) {
    std::vector<std::pair<std::string, double>> out;
    const auto tm = transmission_matrix(k, c.matrix_modes);
    for (int n = 0; n <= c.matrix_modes; ++n)
        for (int m = 0; m <= c.matrix_modes; ++m) out.emplace_back(fmt::format("S_{}_{}", n, m), tm.S(n, m));
    for (int n = 0; n <= c.trace_modes; ++n) out.emplace_back(fmt::format("T_{}", n), mode_trace(k, n));
    return out;
}

inline Report run_tmatrix(const RunConfig& c, const RunOptions& opt) {
    Report r;
    const auto k = config_kernel(c, opt.threads);
    const auto tm = transmission_matrix(k, c.matrix_modes);
    Table s{"tmatrix.csv",
            {{"n", "sent temporal mode"}, {"m", "received temporal mode"}, {"S", "transmission probability"}},
            {},
            "using 1:2:3 with points palette"};
    std::string text = "S (rows: sent n, columns: received m)\n";
    for (int n = 0; n <= c.matrix_modes; ++n) {
        for (int m = 0; m <= c.matrix_modes; ++m) {
            s.rows.push_back({cell(n), cell(m), cell(tm.S(n, m))});
            text += fmt::format(" {:.4f}", tm.S(n, m));
        }
        text += "\n";
    }
    Table tr{"traces.csv", {{"n", "temporal mode"}, {"T", "mode trace"}}, {}, "using 1:2 with linespoints"};
    for (int n = 0; n <= c.trace_modes; ++n) {
        const double T = mode_trace(k, n);
        tr.rows.push_back({cell(n), cell(T)});
        r.summary["traces"].push_back(T);
        text += fmt::format("T_{} = {:.6f} ({:.2f} dB)\n", n, T, -10.0 * std::log10(T));
    }
    for (int n = 0; n <= c.matrix_modes; ++n) {
        std::vector<double> row;
        for (int m = 0; m <= c.matrix_modes; ++m) row.push_back(tm.S(n, m));
        r.summary["S"].push_back(row);
    }
    r.text = text;
    r.tables = {std::move(s), std::move(tr)};
    return r;
}

inline Report run_entangle(const RunConfig& c, const RunOptions& opt) {
    Report r;
    const auto k = config_kernel(c, opt.threads);
    const auto mode = c.single_sided ? PairChannelMode::SecondPhotonOnly : PairChannelMode::BothPhotons;
    const auto rows = robustness_scan(c.entangle_fixed_mode, c.entangle_max_mode, k, c.entangle_dimension, mode,
                                      opt.threads);
    Table t{"entangle.csv",
            {{"n", "second mode of the pair state"},
             {"EN_initial", "log negativity before the channel"},
             {"EN_final", "log negativity after the channel"},
             {"fidelity", "overlap of the output with the input state"},
             {"degenerate_flag", "1 when n equals the fixed mode (product state)"}},
            {},
            "using 1:3 with linespoints"};
    std::string text = fmt::format("fixed mode {}, dimension {}\n", c.entangle_fixed_mode, c.entangle_dimension);
    for (const auto& row : rows) {
        t.rows.push_back(
            {cell(row.n), cell(row.en_initial), cell(row.en_final), cell(row.fidelity), cell(row.degenerate ? 1 : 0)});
        text += fmt::format("n = {:>2}  E_N {:.4f} -> {:.4f}  F = {:.6f}{}\n", row.n, row.en_initial, row.en_final,
                            row.fidelity, row.degenerate ? "  (product)" : "");
        r.summary["en_final"].push_back(row.en_final);
    }
    r.text = text;
    r.tables.push_back(std::move(t));
    return r;
}

inline Report run_validate(const RunConfig&, const RunOptions& opt) {
    Report r;
    Table t{"validate.csv",
            {{"check", "name"}, {"passed", "1 when within tolerance"}, {"value", "measured value or error"},
             {"tolerance", "threshold"}},
            {},
            ""};
    for (const auto& ch : run_validation(1e-9, opt.threads)) {
        t.rows.push_back({ch.name, cell(ch.passed ? 1 : 0), cell(ch.value), cell(ch.tolerance)});
        r.text += fmt::format("{} {:<28} {}\n", ch.passed ? "PASS" : "FAIL", ch.name, ch.detail);
        r.summary[ch.name] = ch.passed;
        r.ok = r.ok && ch.passed;
    }
    r.tables.push_back(std::move(t));
    return r;
}

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"schmidt", "beam", "coupling", "kernel", "tmatrix", "entangle", "validate"};
    return names;
}

inline Report dispatch(const std::string& name, const RunConfig& c, const RunOptions& opt) {
    if (name == "schmidt") return run_schmidt(c, opt);
    if (name == "beam") return run_beam(c, opt);
    if (name == "coupling") return run_coupling(c, opt);
    if (name == "kernel") return run_kernel(c, opt);
    if (name == "tmatrix") return run_tmatrix(c, opt);
    if (name == "entangle") return run_entangle(c, opt);
    if (name == "validate") return run_validate(c, opt);
    throw ConfigError("unknown subcommand '" + name + "'");
}

// Metric columns of one sweep point for the sweepable targets.
inline std::vector<std::pair<std::string, double>> sweep_metrics(const std::string& target, const RunConfig& c) {
    if (target == "beam") {
        const auto p = beam_point(c);
        return {{"waist_m", p[0]}, {"l_integrated", p[1]}, {"P", p[2]}};
    }
    if (target == "schmidt") {
        const auto spec = c.biphoton();
        std::vector<std::pair<std::string, double>> out{{"K", schmidt_number(spec)}};
        for (int n = 0; n <= c.source_modes; ++n) out.emplace_back(fmt::format("lambda_{}", n), schmidt_eigenvalue(spec, n));
        out.emplace_back("discarded", truncated_source(spec, c.source_modes).discarded_mass);
        return out;
    }
    if (target == "tmatrix") return tmatrix_metrics(c, config_kernel(c, 1));
    throw ConfigError("sweep target must be beam, schmidt or tmatrix, not '" + target + "'");
}

inline Table run_sweep_table(const std::string& target, const RunConfig& c, int threads) {
    if (c.sweep_axes.empty()) throw ConfigError("sweep needs at least one [sweep] axis");
    if (target != "beam" && target != "schmidt" && target != "tmatrix")
        throw ConfigError("sweep target must be beam, schmidt or tmatrix, not '" + target + "'");
    std::vector<std::vector<double>> axes;
    std::size_t count = 1;
    for (const auto& [name, values] : c.sweep_axes) {
        auto v = values;
        std::sort(v.begin(), v.end());
        count *= v.size();
        if (count > kMaxSweepPoints)
            throw ConfigError(fmt::format("sweep defines more than {} points", kMaxSweepPoints));
        axes.push_back(std::move(v));
    }
    // row-major over the sorted axes: rows come out sorted by axis values
    std::vector<RunConfig> points(count, c);
    for (std::size_t p = 0; p < count; ++p) {
        std::size_t rem = p;
        for (std::size_t a = axes.size(); a-- > 0;) {
            *numeric_field(points[p], c.sweep_axes[a].first) = axes[a][rem % axes[a].size()];
            rem /= axes[a].size();
        }
        points[p].sweep_axes.clear();
        validate(points[p]);
    }
    std::vector<std::vector<std::pair<std::string, double>>> metrics(count);
    parallel_for(count, threads, [&](std::size_t p) { metrics[p] = sweep_metrics(target, points[p]); });

    Table t{"sweep_" + target + ".csv", {}, {}, ""};
    for (const auto& [name, values] : c.sweep_axes) t.columns.push_back({name, "swept parameter"});
    for (const auto& [name, value] : metrics.front()) t.columns.push_back({name, "metric"});
    t.plot = fmt::format("using 1:{} with linespoints", t.columns.size());
    for (std::size_t p = 0; p < count; ++p) {
        std::vector<std::string> row;
        for (const auto& [name, values] : c.sweep_axes) row.push_back(cell(*numeric_field(points[p], name)));
        for (const auto& [name, value] : metrics[p]) row.push_back(cell(value));
        t.rows.push_back(std::move(row));
    }
    return t;
}

namespace detail {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidArgument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    }
}

inline void emit(const std::string& name, const Report& r, const RunConfig& c, const RunOptions& opt,
                 std::ostream& out) {
    for (const auto& t : r.tables) write_table(c.output_dir, t);
    if (opt.json) {
        nlohmann::ordered_json j;
        j["command"] = name;
        j["ok"] = r.ok;
        j["files"] = nlohmann::json::array();
        for (const auto& t : r.tables) j["files"].push_back((std::filesystem::path(c.output_dir) / t.file).string());
        j["summary"] = r.summary;
        out << j.dump(2) << "\n";
    } else {
        out << r.text;
    }
    if (opt.gnuplot_hints)
        for (const auto& t : r.tables) out << gnuplot_hints(t);
}

}  // namespace detail

inline int run_subcommand(const std::string& name, const RunConfig& c, const RunOptions& opt, std::ostream& out,
                          std::ostream& err) {
    return detail::guarded(err, [&] {
        validate(c);
        const Report r = dispatch(name, c, opt);
        detail::emit(name, r, c, opt, out);
        return r.ok ? kExitOk : kExitNumeric;
    });
}

inline int run_sweep(const std::string& target, const RunConfig& c, const RunOptions& opt, std::ostream& out,
                     std::ostream& err) {
    return detail::guarded(err, [&] {
        validate(c);
        Report r;
        r.tables.push_back(run_sweep_table(target, c, opt.threads));
        r.summary["points"] = r.tables.front().rows.size();
        r.text = fmt::format("{} points written to {}\n", r.tables.front().rows.size(), r.tables.front().file);
        detail::emit("sweep " + target, r, c, opt, out);
        return kExitOk;
    });
}

}  // namespace turbulink::cli

#endif
