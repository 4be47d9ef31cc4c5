#ifndef TURBULINK_TEMPORAL_CHANNEL_HPP
#define TURBULINK_TEMPORAL_CHANNEL_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "ipe_solver.hpp"
#include "parallel.hpp"
#include "schmidt_source.hpp"
#include "turbulence_model.hpp"

namespace turbulink {

enum class KernelFidelity { Analytic, FullIPE };

inline std::string to_string(KernelFidelity f) { return f == KernelFidelity::Analytic ? "analytic" : "full-ipe"; }

struct KernelOptions {
    int order = 48;
    KernelFidelity fidelity = KernelFidelity::Analytic;
    int ipe_cutoff = 2;
    int ipe_steps = 64;
    double alpha_per_km = 0.0;
    int threads = 1;
};

// Two-frequency decay P(omega_i, omega_j) on a Gauss-Hermite grid.
struct ChannelKernel {
    BiphotonSpec spec;
    FrequencyGrid grid;
    Eigen::MatrixXd P;
    KernelFidelity fidelity = KernelFidelity::Analytic;

    int order() const { return grid.order(); }
    int resolvable_mode() const { return grid.order() / 2; }
};

inline double full_ipe_decay(double omega1, double omega2, const TurbulenceProfile& profile,
                             const LinkGeometry& geom, const KernelOptions& opt) {
    PropagationChannel ch{profile, geom, SpectralPoint::from_omegas(omega1, omega2)};
    if (omega1 == omega2) ch.spectral = SpectralPoint::single(ch.spectral->lambda1);
    const ModeBasis basis(opt.ipe_cutoff);
    const SolverConfig cfg{opt.ipe_cutoff, PropagationScheme::TruncatedExact, opt.ipe_steps, true};
    const auto res = propagate(DensityMatrix::pure(basis, {0, 0}), ch, cfg, 0);
    return res.rho.matrix()(*basis.index_of({0, 0}), *basis.index_of({0, 0})).real();
}

inline ChannelKernel channel_kernel(const BiphotonSpec& spec, const TurbulenceProfile& profile,
                                    const LinkGeometry& geom, const KernelOptions& opt = {}) {
    spec.validate();
    geom.validate();
    if (opt.order < 2 || opt.order > 64) throw InvalidArgument("channel_kernel: grid order must be in [2, 64]");
    if (opt.fidelity == KernelFidelity::FullIPE && opt.order > 12)
        throw InvalidArgument("channel_kernel: FullIPE limited to grid order <= 12");
    ChannelKernel k{spec, spectral_grid(spec, opt.order, opt.order / 2), Eigen::MatrixXd::Ones(opt.order, opt.order),
                    opt.fidelity};
    const double ext = extinction_factor(opt.alpha_per_km, geom.path_length);
    const int n = opt.order;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) pairs.emplace_back(i, j);
    std::vector<double> vals(pairs.size());
    parallel_for(pairs.size(), opt.threads, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const double w1 = k.grid.omega[static_cast<std::size_t>(i)];
        const double w2 = k.grid.omega[static_cast<std::size_t>(j)];
        double v = 1.0;
        if (!profile.is_zero()) {
            if (opt.fidelity == KernelFidelity::Analytic) {
                v = analytic_decay(profile, geom, SpectralPoint::from_omegas(w1, w2));
            } else {
                v = full_ipe_decay(w1, w2, profile, geom, opt);
            }
        }
        vals[p] = v * ext;
    });
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [i, j] = pairs[p];
        k.P(i, j) = k.P(j, i) = vals[p];
    }
    return k;
}

inline void check_resolvable(const ChannelKernel& k, int n, const char* who) {
    if (n < 0 || n > k.resolvable_mode())
        throw InvalidArgument(std::string(who) + ": mode " + std::to_string(n) +
                              " not resolvable on a grid of order " + std::to_string(k.order()));
}

// T_n = integral P(omega, omega) f_n(omega)^2 d omega
inline double mode_trace(const ChannelKernel& k, int n) {
    check_resolvable(k, n, "mode_trace");
    double s = 0.0;
    for (int i = 0; i < k.order(); ++i) {
        const double p = k.grid.modes(i, n);
        s += k.grid.weights[static_cast<std::size_t>(i)] * k.P(i, i) * p * p;
    }
    return s;
}

struct TransmissionMatrix {
    Eigen::MatrixXd S;  // rows: sent mode, columns: received mode
    std::vector<double> traces;
};

namespace detail {

// a(i) = w_i p_u(x_i) p_n(x_i)
inline Eigen::VectorXd weighted_product(const ChannelKernel& k, int u, int n) {
    Eigen::VectorXd a(k.order());
    for (int i = 0; i < k.order(); ++i)
        a(i) = k.grid.weights[static_cast<std::size_t>(i)] * k.grid.modes(i, u) * k.grid.modes(i, n);
    return a;
}

}  // namespace detail

inline TransmissionMatrix transmission_matrix(const ChannelKernel& k, int N) {
    check_resolvable(k, N, "transmission_matrix");
    TransmissionMatrix tm{Eigen::MatrixXd::Zero(N + 1, N + 1), {}};
    for (int n = 0; n <= N; ++n) {
        const double T = mode_trace(k, n);
        tm.traces.push_back(T);
        for (int m = 0; m <= N; ++m) {
            const Eigen::VectorXd a = detail::weighted_product(k, m, n);
            tm.S(n, m) = a.dot(k.P * a) / T;
        }
    }
    return tm;
}

struct SinglePhotonOutput {
    Eigen::MatrixXd rho;  // normalized by T_n, over modes 0..N
    double trace;         // T_n
    double leakage;       // 1 - sum of the diagonal
};

inline SinglePhotonOutput apply_channel_single(const ChannelKernel& k, int n, int N) {
    check_resolvable(k, std::max(n, N), "apply_channel_single");
    const double T = mode_trace(k, n);
    std::vector<Eigen::VectorXd> a;
    for (int u = 0; u <= N; ++u) a.push_back(detail::weighted_product(k, u, n));
    SinglePhotonOutput out{Eigen::MatrixXd::Zero(N + 1, N + 1), T, 0.0};
    for (int u = 0; u <= N; ++u)
        for (int v = u; v <= N; ++v)
            out.rho(u, v) = out.rho(v, u) = a[static_cast<std::size_t>(u)].dot(k.P * a[static_cast<std::size_t>(v)]) / T;
    out.leakage = 1.0 - out.rho.trace();
    return out;
}

// C[u,v,m,n] = integral f_u(w1) f_m(w1) P(w1,w2) f_n(w2) f_v(w2): maps |f_m><f_n| to
// sum_uv C[u,v,m,n] |f_u><f_v| for one photon.
class ChannelTensor {
public:
    ChannelTensor(const ChannelKernel& k, int M) : M_(M) {
        check_resolvable(k, M - 1, "ChannelTensor");
        Eigen::MatrixXd A(M * M, k.order());
        for (int u = 0; u < M; ++u)
            for (int m = 0; m < M; ++m) A.row(u * M + m) = detail::weighted_product(k, u, m).transpose();
        const Eigen::MatrixXd G = A * k.P * A.transpose();  // G((u,m),(v,n))
        G_ = 0.5 * (G + G.transpose());
    }

    int dimension() const { return M_; }
    double operator()(int u, int v, int m, int n) const { return G_(u * M_ + m, v * M_ + n); }

private:
    int M_;
    Eigen::MatrixXd G_;
};

inline ChannelTensor channel_tensor(const ChannelKernel& k, int M) { return ChannelTensor(k, M); }

}  // namespace turbulink

#endif
