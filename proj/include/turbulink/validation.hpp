#ifndef TURBULINK_VALIDATION_HPP
#define TURBULINK_VALIDATION_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lg_coupling.hpp"
#include "parallel.hpp"
#include "turbulence_model.hpp"

namespace turbulink {

struct CheckResult {
    std::string name;
    bool passed;
    double value;
    double tolerance;
    std::string detail;
};

// Dimensionless L_T lambda1 lambda2 kappa0^{5/3} / cn2.
inline double big_l_t_constant() { return big_l_t(1.0, 1.0, 1.0, SpectrumParams{1.0}); }

inline CheckResult check_decay_constant() {
    const double v = kCouplingPrefactor * math::gamma_fn(-5.0 / 6.0);
    return {"decay-constant", v >= -54.2 && v <= -54.0, v, 0.1, fmt::format("8.1*Gamma(-5/6) = {:.4f}", v)};
}

inline CheckResult check_fried_link() {
    const double v = 3.25 / std::pow(0.185, 5.0 / 3.0);
    return {"fried-law-constant", v >= 54.0 && v <= 54.3, v, 0.15, fmt::format("3.25/0.185^(5/3) = {:.4f}", v)};
}

inline CheckResult check_big_l_t_constant() {
    const double v = big_l_t_constant();
    const double rel = std::abs(v - 30.86) / 30.86;
    return {"big-l-t-constant", rel <= 5e-4, rel, 5e-4, fmt::format("L_T constant = {:.5f}", v)};
}

// Radial quadrature of the spectrum against the closed-form L_T.
inline CheckResult check_big_l_t_numeric(double kappa0_w0 = 1e-4) {
    ChannelPoint pt{0.0, 1e-15, 0.1457, SpectralPoint::single(3.95e-6)};
    const SpectrumParams sp{kappa0_w0 / pt.waist};
    const LGIndex g{0, 0};
    const double num = coupling_L_numeric_oracle(g, g, g, g, pt, sp).l_t;
    const double ref = big_l_t(pt.spectral.lambda1, pt.spectral.lambda2, pt.cn2, sp);
    const double rel = std::abs(num - ref) / ref;
    return {"big-l-t-quadrature", rel <= 5e-4, rel, 5e-4, fmt::format("numeric/closed = {:.7f}", num / ref)};
}

inline std::vector<LGIndex> small_modes(int max_r, int max_l) {
    std::vector<LGIndex> out;
    for (int l = -max_l; l <= max_l; ++l)
        for (int r = 0; r <= max_r; ++r) out.push_back({r, l});
    return out;
}

struct OracleSweep {
    double max_rel_error = 0.0;
    std::size_t tuples = 0;
    LGIndex worst[4]{};
    double worst_t = 0.0;
};

// Closed form against the finite-outer-scale quadrature for every allowed tuple with r, |l| <= max_index.
inline OracleSweep coupling_oracle_sweep(double kappa0_w0, const std::vector<double>& ts, int max_index = 2,
                                         int threads = 1) {
    const auto modes = small_modes(max_index, max_index);
    struct Job {
        LGIndex m, n, u, v;
        double t;
    };
    std::vector<Job> jobs;
    for (double t : ts)
        for (const auto& m : modes)
            for (const auto& n : modes)
                for (const auto& u : modes)
                    for (const auto& v : modes)
                        if (m.l - u.l == n.l - v.l) jobs.push_back({m, n, u, v, t});

    const double w0 = 0.1457, lambda = 3.95e-6;
    const SpectrumParams sp{kappa0_w0 / w0};
    std::vector<double> scale(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double z = ts[i] * std::numbers::pi * w0 * w0 / lambda;
        const ChannelPoint pt{z, 1e-15, w0, SpectralPoint::single(lambda)};
        const LGIndex g{0, 0};
        scale[i] = std::abs(coupling_L(g, g, g, g, pt));
    }
    std::vector<double> err(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t k) {
        const auto& j = jobs[k];
        const double z = j.t * std::numbers::pi * w0 * w0 / lambda;
        const ChannelPoint pt{z, 1e-15, w0, SpectralPoint::single(lambda)};
        const cplx closed = coupling_L(j.m, j.n, j.u, j.v, pt);
        const cplx numeric = coupling_L_numeric_oracle(j.m, j.n, j.u, j.v, pt, sp).reduced;
        const std::size_t ti = static_cast<std::size_t>(std::find(ts.begin(), ts.end(), j.t) - ts.begin());
        // entries below 1e-9 of the fundamental rate are treated as exact zeros
        const double denom = std::max({std::abs(closed), std::abs(numeric), 1e-9 * scale[ti]});
        err[k] = std::abs(closed - numeric) / denom;
    });
    OracleSweep out;
    out.tuples = jobs.size();
    for (std::size_t k = 0; k < jobs.size(); ++k)
        if (err[k] > out.max_rel_error) {
            out.max_rel_error = err[k];
            out.worst[0] = jobs[k].m;
            out.worst[1] = jobs[k].n;
            out.worst[2] = jobs[k].u;
            out.worst[3] = jobs[k].v;
            out.worst_t = jobs[k].t;
        }
    return out;
}

inline CheckResult check_coupling_oracle(double kappa0_w0, int threads = 1, int max_index = 2) {
    const auto s = coupling_oracle_sweep(kappa0_w0, {0.0, 1.0}, max_index, threads);
    const auto idx = [](const LGIndex& i) { return fmt::format("({},{})", i.r, i.l); };
    return {fmt::format("coupling-oracle[k0w0={:g}]", kappa0_w0), s.max_rel_error <= 5e-3, s.max_rel_error, 5e-3,
            fmt::format("{} tuples, worst {} {} {} {} at t={:g}", s.tuples, idx(s.worst[0]), idx(s.worst[1]),
                        idx(s.worst[2]), idx(s.worst[3]), s.worst_t)};
}

// |closed - numeric| in units of 1/z_R.
inline CheckResult check_free_prop_oracle(int max_index = 2) {
    const BeamParams beam{0.1457, 3.95e-6};
    const double zr = beam.rayleigh_range();
    const auto modes = small_modes(max_index, max_index);
    double worst = 0.0;
    for (const auto& m : modes)
        for (const auto& n : modes)
            worst = std::max(worst, std::abs(free_prop_S(m, n, zr) - free_prop_S_numeric(m, n, beam)) * zr);
    return {"free-prop-oracle", worst <= 1e-6, worst, 1e-6, fmt::format("max |dS| z_R = {:.3g}", worst)};
}

inline std::vector<CheckResult> run_validation(double kappa0_w0 = 1e-9, int threads = 1) {
    return {check_big_l_t_constant(), check_big_l_t_numeric(), check_decay_constant(), check_fried_link(),
            check_coupling_oracle(kappa0_w0, threads), check_free_prop_oracle()};
}

}  // namespace turbulink

#endif
