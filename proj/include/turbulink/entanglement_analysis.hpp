#ifndef TURBULINK_ENTANGLEMENT_ANALYSIS_HPP
#define TURBULINK_ENTANGLEMENT_ANALYSIS_HPP

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "parallel.hpp"
#include "temporal_channel.hpp"

namespace turbulink {

inline constexpr int kMaxPairDimension = 14;

// sum psi(a, b) |f_a>|f_b>
struct TwoPhotonState {
    int M = 0;
    Eigen::MatrixXcd psi;

    void validate() const {
        if (psi.rows() != M || psi.cols() != M) throw InvalidArgument("TwoPhotonState: psi must be M x M");
        if (std::abs(psi.squaredNorm() - 1.0) > 1e-12) throw InvalidArgument("TwoPhotonState: norm must be 1");
    }

    // Product-basis vector, index a * M + b.
    Eigen::VectorXcd vector() const {
        Eigen::VectorXcd v(M * M);
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) v(a * M + b) = psi(a, b);
        return v;
    }

    // Equal superposition of |f_k f_k> over the listed modes.
    static TwoPhotonState maximally_entangled(const std::vector<int>& modes, int M) {
        TwoPhotonState s{M, Eigen::MatrixXcd::Zero(M, M)};
        for (int k : modes) {
            if (k < 0 || k >= M) throw InvalidArgument("TwoPhotonState: mode outside dimension");
            s.psi(k, k) += 1.0;
        }
        s.psi /= s.psi.norm();
        return s;
    }

    // (|f_m f_m> + |f_n f_n>)/sqrt 2; collapses to |f_m f_m> when m == n.
    static TwoPhotonState bell(int m, int n, int M) {
        return m == n ? maximally_entangled({m}, M) : maximally_entangled({m, n}, M);
    }

    static TwoPhotonState product(int a, int b, int M) {
        TwoPhotonState s{M, Eigen::MatrixXcd::Zero(M, M)};
        s.psi(a, b) = 1.0;
        return s;
    }
};

// Density over the product basis, index a * M + b (first photon major).
struct TwoPhotonDensity {
    int M = 0;
    Eigen::MatrixXcd rho;
    double mass = 1.0;  // transmitted probability before normalization
    bool normalized = true;

    static TwoPhotonDensity pure(const TwoPhotonState& s) {
        const Eigen::VectorXcd v = s.vector();
        return {s.M, v * v.adjoint(), 1.0, true};
    }
};

enum class PairChannelMode { BothPhotons, SecondPhotonOnly };

// One-photon channel on photon 1 (which == 0) or photon 2 (which == 1) of a pair density.
inline Eigen::MatrixXcd apply_local_channel(const Eigen::MatrixXcd& rho, const ChannelTensor& C, int which) {
    const int M = C.dimension();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(M * M, M * M);
    if (which == 0) {
        for (int c = 0; c < M; ++c)
            for (int d = 0; d < M; ++d)
                for (int a = 0; a < M; ++a)
                    for (int b = 0; b < M; ++b) {
                        const cplx in = rho(a * M + c, b * M + d);
                        if (in == cplx{}) continue;
                        for (int u = 0; u < M; ++u)
                            for (int v = 0; v < M; ++v) out(u * M + c, v * M + d) += C(u, v, a, b) * in;
                    }
    } else {
        for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b)
                for (int c = 0; c < M; ++c)
                    for (int d = 0; d < M; ++d) {
                        const cplx in = rho(a * M + c, b * M + d);
                        if (in == cplx{}) continue;
                        for (int x = 0; x < M; ++x)
                            for (int y = 0; y < M; ++y) out(a * M + x, b * M + y) += C(x, y, c, d) * in;
                    }
    }
    return out;
}

inline TwoPhotonDensity propagate_pair(const TwoPhotonState& state, const ChannelTensor& C,
                                       PairChannelMode mode = PairChannelMode::BothPhotons) {
    state.validate();
    if (state.M > kMaxPairDimension) throw InvalidArgument("propagate_pair: M above 14");
    if (C.dimension() != state.M) throw InvalidArgument("propagate_pair: channel dimension mismatch");
    Eigen::MatrixXcd rho = TwoPhotonDensity::pure(state).rho;
    if (mode == PairChannelMode::BothPhotons) rho = apply_local_channel(rho, C, 0);
    rho = apply_local_channel(rho, C, 1);
    const double mass = rho.trace().real();
    if (!(mass > 0.0)) throw NumericalError("propagate_pair: no transmitted probability");
    rho /= mass;
    return {state.M, rho, mass, true};
}

inline TwoPhotonDensity propagate_pair(const TwoPhotonState& state, const ChannelKernel& kernel,
                                       PairChannelMode mode = PairChannelMode::BothPhotons) {
    return propagate_pair(state, ChannelTensor(kernel, state.M), mode);
}

// Partial transpose over the second photon.
inline Eigen::MatrixXcd partial_transpose(const Eigen::MatrixXcd& rho, int M) {
    Eigen::MatrixXcd pt(M * M, M * M);
    for (int a = 0; a < M; ++a)
        for (int b = 0; b < M; ++b)
            for (int c = 0; c < M; ++c)
                for (int d = 0; d < M; ++d) pt(a * M + b, c * M + d) = rho(a * M + d, c * M + b);
    return pt;
}

inline double negativity(const TwoPhotonDensity& rho) {
    if (std::abs(rho.rho.trace().real() - 1.0) > 1e-9) throw InvalidArgument("negativity: density not normalized");
    const Eigen::MatrixXcd pt = partial_transpose(rho.rho, rho.M);
    const Eigen::MatrixXcd h = 0.5 * (pt + pt.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("negativity: eigen-solver failed");
    double s = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) < 0.0) s -= es.eigenvalues()(i);
    return s;
}

inline double log_negativity(const TwoPhotonDensity& rho) { return std::log2(2.0 * negativity(rho) + 1.0); }

inline double fidelity_to_input(const TwoPhotonDensity& rho, const TwoPhotonState& psi) {
    const Eigen::VectorXcd v = psi.vector();
    return (v.adjoint() * rho.rho * v)(0, 0).real();
}

inline double min_eigenvalue(const TwoPhotonDensity& rho) {
    const Eigen::MatrixXcd h = 0.5 * (rho.rho + rho.rho.adjoint());
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

struct ScanRow {
    int n;
    double en_initial;
    double en_final;
    double fidelity;
    bool degenerate;
    double min_eigenvalue;
};

// Fixed mode m on one photon pair, second mode n swept over 0..n_max.
inline std::vector<ScanRow> robustness_scan(int m, int n_max, const ChannelKernel& kernel, int M,
                                            PairChannelMode mode = PairChannelMode::BothPhotons,
                                            int threads = 1) {
    if (m < 0 || m >= M || n_max < 0 || n_max >= M) throw InvalidArgument("robustness_scan: modes outside dimension");
    const ChannelTensor C(kernel, M);
    std::vector<ScanRow> rows(static_cast<std::size_t>(n_max + 1));
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        const int n = static_cast<int>(i);
        const auto psi = TwoPhotonState::bell(m, n, M);
        const auto out = propagate_pair(psi, C, mode);
        const bool deg = (n == m);
        rows[i] = {n,
                   deg ? 0.0 : log_negativity(TwoPhotonDensity::pure(psi)),
                   deg ? 0.0 : log_negativity(out),
                   fidelity_to_input(out, psi),
                   deg,
                   min_eigenvalue(out)};
    });
    return rows;
}

}  // namespace turbulink

#endif
