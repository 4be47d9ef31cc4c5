#ifndef TURBULINK_IPE_SOLVER_HPP
#define TURBULINK_IPE_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "errors.hpp"
#include "lg_coupling.hpp"
#include "turbulence_model.hpp"

namespace turbulink {

enum class PropagationScheme { TruncatedExact, LindbladTruncated };

inline std::string to_string(PropagationScheme s) {
    return s == PropagationScheme::TruncatedExact ? "truncated-exact" : "lindblad";
}

struct SolverConfig {
    int cutoff = 4;
    PropagationScheme scheme = PropagationScheme::TruncatedExact;
    int steps = 256;
    bool check_convergence = true;

    void validate() const {
        if (cutoff < 0 || cutoff > 8) throw InvalidArgument("SolverConfig: cutoff must be in [0, 8]");
        if (steps < 16) throw InvalidArgument("SolverConfig: steps must be >= 16");
    }

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

class DensityMatrix {
public:
    DensityMatrix(ModeBasis basis, Eigen::MatrixXcd rho) : basis_(std::move(basis)), rho_(std::move(rho)) {
        if (rho_.rows() != basis_.size() || rho_.cols() != basis_.size())
            throw InvalidArgument("DensityMatrix: matrix size does not match basis");
    }

    static DensityMatrix pure(const ModeBasis& basis, const LGIndex& mode) {
        const auto i = basis.index_of(mode);
        if (!i) throw InvalidArgument("DensityMatrix::pure: mode outside basis");
        Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(basis.size(), basis.size());
        r(*i, *i) = 1.0;
        return {basis, r};
    }

    const ModeBasis& basis() const { return basis_; }
    const Eigen::MatrixXcd& matrix() const { return rho_; }
    Eigen::MatrixXcd& matrix() { return rho_; }

    double trace() const { return rho_.trace().real(); }
    double hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const {
        const Eigen::MatrixXcd h = 0.5 * (rho_ + rho_.adjoint());
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    }
    void symmetrize() { rho_ = (0.5 * (rho_ + rho_.adjoint())).eval(); }

private:
    ModeBasis basis_;
    Eigen::MatrixXcd rho_;
};

inline double lowest_mode_probability(const DensityMatrix& rho) {
    const auto i = rho.basis().index_of({0, 0});
    if (!i) throw InvalidArgument("lowest_mode_probability: (r=0, l=0) absent from basis");
    const cplx p = rho.matrix()(*i, *i);
    if (std::abs(p.imag()) > 1e-10) throw NumericalError("lowest_mode_probability: complex population");
    return p.real();
}

// The channel seen by a propagating photon. Cross-frequency runs carry a
// second wavelength for the right-hand index of rho.
struct PropagationChannel {
    TurbulenceProfile profile = TurbulenceProfile::constant(0.0);
    LinkGeometry geom;
    std::optional<SpectralPoint> spectral;

    SpectralPoint point() const { return spectral.value_or(SpectralPoint::single(geom.wavelength)); }
};

// dz rho = R(z) rho with L_T cancelled analytically. Degenerate channels use
// c(t) = e^{i (N_m - N_u) psi} c(0), so one contraction per entry is reused at every z.
class IpeGenerator {
public:
    IpeGenerator(const ModeBasis& basis, const PropagationChannel& channel, PropagationScheme scheme)
        : basis_(basis), channel_(channel), scheme_(scheme), sp_(channel.point()) {
        if (!sp_.degenerate() && scheme == PropagationScheme::LindbladTruncated)
            throw InvalidArgument("IpeGenerator: cross-frequency runs support TruncatedExact only");
        const int B = basis.size();
        const CoeffTable c0(basis, 0.0);
        for (const auto& group : pairs_by_delta_l(basis))
            for (const auto& [m, u] : group)
                for (const auto& [n, v] : group) {
                    Entry e;
                    e.m = m, e.n = n, e.u = u, e.v = v;
                    e.dn = (basis[m].order() - basis[u].order()) - (basis[n].order() - basis[v].order());
                    e.dn1 = basis[m].order() - basis[u].order();
                    e.dn2 = basis[n].order() - basis[v].order();
                    if (sp_.degenerate()) {
                        e.sigma0 = gamma_contraction(c0(m, u), c0(n, v));
                        if (e.sigma0 == cplx{}) continue;
                    }
                    max_dn_ = std::max(max_dn_, std::abs(e.dn));
                    entries_.push_back(e);
                }
        if (!sp_.degenerate()) {
            c0_.emplace(c0);
            return;
        }
        // Upper-triangle outputs grouped by Gouy phase order for the Hermitian fast path.
        X0_ = Eigen::MatrixXcd::Zero(B, B);
        std::vector<std::vector<const Entry*>> by_phase(static_cast<std::size_t>(2 * max_dn_ + 1));
        for (const auto& e : entries_) {
            if (e.u == e.v) X0_(e.n, e.m) += e.sigma0;
            if (e.u <= e.v) by_phase[static_cast<std::size_t>(e.dn + max_dn_)].push_back(&e);
        }
        phase_offsets_.push_back(0);
        for (const auto& g : by_phase) {
            for (const Entry* e : g) {
                fast_src_.push_back(e->m + e->n * B);
                fast_dst_.push_back(e->u + e->v * B);
                fast_sigma_.push_back(e->sigma0);
            }
            phase_offsets_.push_back(fast_src_.size());
        }
    }

    const ModeBasis& basis() const { return basis_; }
    std::size_t nonzeros() const { return entries_.size(); }

    double strength(double z) const { return l_along_path(channel_.profile, channel_.geom, sp_, z); }

    // Reduced coupling L - delta delta L_T at z, as a sparse list over basis positions.
    std::vector<CouplingEntry> couplings(double z) const {
        std::vector<CouplingEntry> out;
        const auto vals = values(z);
        out.reserve(entries_.size());
        for (std::size_t k = 0; k < entries_.size(); ++k)
            out.push_back({entries_[k].m, entries_[k].n, entries_[k].u, entries_[k].v, vals[k]});
        return out;
    }

    // out = R(z) rho. For degenerate channels rho must be Hermitian; only the
    // upper triangle is accumulated and the rest mirrored.
    void apply(double z, const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) const {
        const int B = basis_.size();
        out.setZero(B, B);
        if (channel_.profile.is_zero()) return;
        const cplx* in = rho.data();
        cplx* o = out.data();
        if (!sp_.degenerate()) {
            const auto vals = values(z);
            for (std::size_t k = 0; k < entries_.size(); ++k) {
                const auto& e = entries_[k];
                o[e.u + e.v * B] += vals[k] * in[e.m + e.n * B];
            }
            return;
        }
        const double scale = kCouplingPrefactor * strength(z);
        const double psi = std::atan(t1(z));
        for (int d = -max_dn_; d <= max_dn_; ++d) {
            const cplx f = scale * std::exp(cplx{0.0, d * psi});
            const std::size_t lo = phase_offsets_[static_cast<std::size_t>(d + max_dn_)];
            const std::size_t hi = phase_offsets_[static_cast<std::size_t>(d + max_dn_ + 1)];
            for (std::size_t k = lo; k < hi; ++k) o[fast_dst_[k]] += f * (fast_sigma_[k] * in[fast_src_[k]]);
        }
        for (int v = 0; v < B; ++v)
            for (int u = v + 1; u < B; ++u) out(u, v) = std::conj(out(v, u));
        for (int u = 0; u < B; ++u) out(u, u) = out(u, u).real();
        if (scheme_ == PropagationScheme::LindbladTruncated) {
            const Eigen::MatrixXcd X = lindblad_x(z);
            out.noalias() -= 0.5 * (X * rho + rho * X);
        }
    }

    // Dense R(z) over rho vectorized row by row: index u * B + v.
    Eigen::MatrixXcd superoperator(double z) const {
        const int B = basis_.size();
        const int D = B * B;
        Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(D, D);
        if (channel_.profile.is_zero()) return R;
        const auto vals = values(z);
        Eigen::MatrixXcd X = Eigen::MatrixXcd::Zero(B, B);
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto& e = entries_[k];
            R(e.u * B + e.v, e.m * B + e.n) += vals[k];
            if (e.u == e.v) X(e.n, e.m) += vals[k];
        }
        if (scheme_ == PropagationScheme::LindbladTruncated)
            for (int u = 0; u < B; ++u)
                for (int v = 0; v < B; ++v)
                    for (int w = 0; w < B; ++w) {
                        R(u * B + v, w * B + v) -= 0.5 * X(u, w);
                        R(u * B + v, u * B + w) -= 0.5 * X(w, v);
                    }
        return R;
    }

private:
    struct Entry {
        int m = 0, n = 0, u = 0, v = 0;
        int dn = 0, dn1 = 0, dn2 = 0;
        cplx sigma0{};
    };

    double t1(double z) const {
        const double w0 = channel_.geom.waist;
        return z * sp_.lambda1 / (std::numbers::pi * w0 * w0);
    }
    double t2(double z) const {
        const double w0 = channel_.geom.waist;
        return z * sp_.lambda2 / (std::numbers::pi * w0 * w0);
    }

    // X_{nm} = sum_u L_{m,n,u,u}, so that tr R(rho) = tr(X rho).
    Eigen::MatrixXcd lindblad_x(double z) const {
        const int B = basis_.size();
        const double scale = kCouplingPrefactor * strength(z);
        const double psi = std::atan(t1(z));
        Eigen::MatrixXcd X(B, B);
        for (int m = 0; m < B; ++m)
            for (int n = 0; n < B; ++n)
                X(n, m) = scale * std::exp(cplx{0.0, (basis_[m].order() - basis_[n].order()) * psi}) * X0_(n, m);
        return X;
    }

    std::vector<cplx> values(double z) const {
        std::vector<cplx> vals(entries_.size());
        const double scale = kCouplingPrefactor * strength(z);
        const double psi1 = std::atan(t1(z)), psi2 = std::atan(t2(z));
        if (sp_.degenerate()) {
            for (std::size_t k = 0; k < entries_.size(); ++k)
                vals[k] = scale * std::exp(cplx{0.0, entries_[k].dn * psi1}) * entries_[k].sigma0;
            return vals;
        }
        const auto [f1, f2] = cross_scales(t1(z), t2(z));
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const auto& e = entries_[k];
            vals[k] = scale * std::exp(cplx{0.0, e.dn1 * psi1 - e.dn2 * psi2}) *
                      gamma_contraction((*c0_)(e.m, e.u), (*c0_)(e.n, e.v), f1, f2);
        }
        return vals;
    }

    ModeBasis basis_;
    PropagationChannel channel_;
    PropagationScheme scheme_;
    SpectralPoint sp_;
    std::vector<Entry> entries_;
    int max_dn_ = 0;
    std::optional<CoeffTable> c0_;
    Eigen::MatrixXcd X0_;
    std::vector<int> fast_src_, fast_dst_;
    std::vector<cplx> fast_sigma_;
    std::vector<std::size_t> phase_offsets_;
};

inline constexpr int kMaxSuperoperatorDim = 2048;

inline Eigen::MatrixXcd assemble_superoperator(const ModeBasis& basis, double z,
                                               const PropagationChannel& channel,
                                               PropagationScheme scheme) {
    if (basis.size() * basis.size() > kMaxSuperoperatorDim)
        throw InvalidArgument("assemble_superoperator: vectorized dimension exceeds 2048");
    return IpeGenerator(basis, channel, scheme).superoperator(z);
}

struct Checkpoint {
    double z;
    double l_integrated;
    std::optional<double> lowest_mode;
    double trace;
    double hermiticity_error;
    double min_eigenvalue;
};

struct PropagationResult {
    DensityMatrix rho;
    std::vector<Checkpoint> checkpoints;
    double coarse_trace;  // trace from the half-resolution run when convergence is checked
};

namespace detail {

inline Checkpoint make_checkpoint(const DensityMatrix& rho, const PropagationChannel& ch, double z,
                                  bool hermitian) {
    Checkpoint c;
    c.z = z;
    c.l_integrated = integrated_l(ch.profile, ch.geom, ch.point(), std::min(z, ch.geom.path_length));
    if (const auto i = rho.basis().index_of({0, 0})) c.lowest_mode = rho.matrix()(*i, *i).real();
    c.trace = rho.trace();
    c.hermiticity_error = rho.hermiticity_error();
    c.min_eigenvalue = hermitian ? rho.min_eigenvalue() : 0.0;
    return c;
}

inline PropagationResult rk4_run(const IpeGenerator& gen, const DensityMatrix& rho0,
                                 const PropagationChannel& ch, int steps, int checkpoints,
                                 bool hermitian) {
    const double zf = ch.geom.path_length;
    const double h = zf / steps;
    Eigen::MatrixXcd rho = rho0.matrix();
    Eigen::MatrixXcd k1, k2, k3, k4, tmp;
    PropagationResult res{rho0, {}, 0.0};
    if (checkpoints > 0) res.checkpoints.push_back(make_checkpoint(rho0, ch, 0.0, hermitian));
    int next = 1;
    for (int s = 0; s < steps; ++s) {
        const double z = s * h;
        gen.apply(z, rho, k1);
        tmp = rho + 0.5 * h * k1;
        gen.apply(z + 0.5 * h, tmp, k2);
        tmp = rho + 0.5 * h * k2;
        gen.apply(z + 0.5 * h, tmp, k3);
        tmp = rho + h * k3;
        gen.apply(z + h, tmp, k4);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (hermitian) rho = (0.5 * (rho + rho.adjoint())).eval();
        while (checkpoints > 0 && next <= checkpoints &&
               static_cast<long>(s + 1) * checkpoints >= static_cast<long>(next) * steps) {
            res.checkpoints.push_back(make_checkpoint(DensityMatrix(rho0.basis(), rho), ch,
                                                      next == checkpoints ? zf : (s + 1) * h, hermitian));
            ++next;
        }
    }
    res.rho = DensityMatrix(rho0.basis(), rho);
    return res;
}

}  // namespace detail

inline PropagationResult propagate(const DensityMatrix& rho0, const PropagationChannel& channel,
                                   const SolverConfig& config, int checkpoints = 16) {
    config.validate();
    channel.geom.validate();
    const bool hermitian = channel.point().degenerate();
    if (hermitian && rho0.hermiticity_error() > 1e-12)
        throw InvalidArgument("propagate: initial density matrix is not Hermitian");
    if (rho0.trace() > 1.0 + 1e-9) throw InvalidArgument("propagate: initial trace exceeds 1");
    if (channel.profile.is_zero()) {
        PropagationResult r{rho0, {}, rho0.trace()};
        if (checkpoints > 0)
            for (int k = 0; k <= checkpoints; ++k)
                r.checkpoints.push_back(detail::make_checkpoint(
                    rho0, channel, channel.geom.path_length * k / checkpoints, hermitian));
        return r;
    }
    const IpeGenerator gen(rho0.basis(), channel, config.scheme);
    if (!config.check_convergence) {
        auto r = detail::rk4_run(gen, rho0, channel, config.steps, checkpoints, hermitian);
        r.coarse_trace = r.rho.trace();
        return r;
    }
    const auto coarse = detail::rk4_run(gen, rho0, channel, config.steps, 0, hermitian);
    auto fine = detail::rk4_run(gen, rho0, channel, 2 * config.steps, checkpoints, hermitian);
    fine.coarse_trace = coarse.rho.trace();
    const double dt = std::abs(fine.rho.matrix().trace() - coarse.rho.matrix().trace());
    if (dt > 1e-8)
        throw NumericalError(fmt::format("propagate: step doubling changed the trace by {:.3e} (coarse {:.12g}, fine {:.12g})",
                                         dt, coarse.rho.trace(), fine.rho.trace()));
    return fine;
}

inline double analytic_decay(const TurbulenceProfile& profile, const LinkGeometry& geom,
                             const SpectralPoint& sp) {
    return std::exp(-decay_constant() * integrated_l(profile, geom, sp));
}

inline double analytic_decay(const TurbulenceProfile& profile, const LinkGeometry& geom) {
    return analytic_decay(profile, geom, SpectralPoint::single(geom.wavelength));
}

// Waist either fixed or a fraction of the l-minimizing waist sqrt(lambda z / pi).
struct WaistRule {
    std::optional<double> fixed;
    double fraction_of_optimal = 0.75;

    double waist(double lambda, double z) const {
        return fixed ? *fixed : fraction_of_optimal * std::sqrt(lambda * z / std::numbers::pi);
    }
};

struct SweepRow {
    double distance;
    double cn2;
    double waist;
    double probability;
};

// Analytic lowest-mode probability over distances for a family of constant cn2 values.
inline std::vector<SweepRow> distance_sweep(const std::vector<double>& cn2_values, const LinkGeometry& geom,
                                            const WaistRule& rule, const std::vector<double>& distances,
                                            double alpha_per_km = 0.0) {
    std::vector<SweepRow> rows;
    for (double c : cn2_values)
        for (double z : distances) {
            LinkGeometry g = geom;
            g.path_length = z;
            g.waist = rule.waist(geom.wavelength, z);
            const double p = analytic_decay(TurbulenceProfile::constant(c), g) * extinction_factor(alpha_per_km, z);
            rows.push_back({z, c, g.waist, p});
        }
    return rows;
}

}  // namespace turbulink

#endif
