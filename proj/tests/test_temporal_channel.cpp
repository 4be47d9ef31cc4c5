#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "turbulink/temporal_channel.hpp"

using namespace turbulink;

namespace {

BiphotonSpec reference_spec() { return BiphotonSpec::from_center_wavelength(10e12, 80e12, 3.95e-6); }

const ChannelKernel& reference_kernel() {
    static const ChannelKernel k = channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-15), LinkGeometry{});
    return k;
}

double wavelength_of(double omega) { return 2.0 * std::numbers::pi * kSpeedOfLight / omega; }

// S_{n,m} by a separate tensor Gauss-Hermite rule on Hermite functions of x = sqrt(b)(omega - center)
double oracle_s(const BiphotonSpec& spec, const TurbulenceProfile& p, const LinkGeometry& g, int n, int m, int order) {
    const auto rule = math::gauss_hermite_rule(order);
    const double sb = std::sqrt(spec.b());
    std::vector<double> om(rule.size()), fn(rule.size()), fm(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double x = rule.nodes[i];
        om[i] = spec.center() + x / sb;
        // h_k(x) e^{-x^2/2} with the e^{-x^2} weight divided out by the rule
        fn[i] = math::hermite_orthonormal(n, x)[static_cast<std::size_t>(n)];
        fm[i] = math::hermite_orthonormal(m, x)[static_cast<std::size_t>(m)];
    }
    double num = 0.0, trace = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        trace += rule.weights[i] * analytic_decay(p, g, SpectralPoint::single(wavelength_of(om[i]))) * fn[i] * fn[i];
        for (std::size_t j = 0; j < rule.size(); ++j) {
            const double P = analytic_decay(p, g, SpectralPoint::from_omegas(om[i], om[j]));
            num += rule.weights[i] * rule.weights[j] * P * fm[i] * fn[i] * fm[j] * fn[j];
        }
    }
    return num / trace;
}

}  // namespace

TEST(Kernel, ZeroTurbulenceIsTransparent) {
    const auto k = channel_kernel(reference_spec(), TurbulenceProfile::constant(0.0), LinkGeometry{}, {16});
    EXPECT_EQ(k.P, Eigen::MatrixXd::Ones(16, 16));
    for (int n = 0; n <= 8; ++n) EXPECT_NEAR(mode_trace(k, n), 1.0, 1e-12);
    const auto tm = transmission_matrix(k, 5);
    EXPECT_LE((tm.S - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-12);
    const auto out = apply_channel_single(k, 2, 5);
    Eigen::MatrixXd pure = Eigen::MatrixXd::Zero(6, 6);
    pure(2, 2) = 1.0;
    EXPECT_LE((out.rho - pure).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kernel, SymmetricAndBounded) {
    const auto& k = reference_kernel();
    EXPECT_EQ(k.P, k.P.transpose());
    EXPECT_GT(k.P.minCoeff(), 0.0);
    EXPECT_LE(k.P.maxCoeff(), 1.0);
}

TEST(Kernel, DiagonalIsSingleFrequencyDecay) {
    const auto& k = reference_kernel();
    for (int i = 0; i < k.order(); ++i) {
        const double expect = analytic_decay(TurbulenceProfile::constant(1e-15), LinkGeometry{},
                                             SpectralPoint::single(wavelength_of(k.grid.omega[static_cast<std::size_t>(i)])));
        EXPECT_NEAR(k.P(i, i), expect, 1e-12 * expect);
    }
}

TEST(Kernel, ExtinctionScalesEveryEntry) {
    KernelOptions opt;
    opt.order = 8;
    const auto a = channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-16), LinkGeometry{}, opt);
    opt.alpha_per_km = 0.05;
    const auto b = channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-16), LinkGeometry{}, opt);
    EXPECT_LE((b.P - std::exp(-1.5) * a.P).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kernel, Guards) {
    KernelOptions opt;
    opt.order = 65;
    EXPECT_THROW(channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-16), LinkGeometry{}, opt), InvalidArgument);
    opt.order = 16;
    opt.fidelity = KernelFidelity::FullIPE;
    EXPECT_THROW(channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-16), LinkGeometry{}, opt), InvalidArgument);
    EXPECT_THROW(mode_trace(reference_kernel(), 25), InvalidArgument);
    EXPECT_THROW(transmission_matrix(reference_kernel(), 25), InvalidArgument);
}

TEST(Kernel, ThreadCountDoesNotChangeResult) {
    KernelOptions opt;
    opt.order = 24;
    const auto a = channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-15), LinkGeometry{}, opt);
    opt.threads = 4;
    EXPECT_EQ(a.P, channel_kernel(reference_spec(), TurbulenceProfile::constant(1e-15), LinkGeometry{}, opt).P);
}

TEST(Kernel, FullIpeGroundCutoffEqualsAnalytic) {
    KernelOptions opt;
    opt.order = 4;
    const auto p = TurbulenceProfile::constant(1e-16);
    const auto a = channel_kernel(reference_spec(), p, LinkGeometry{}, opt);
    opt.fidelity = KernelFidelity::FullIPE;
    opt.ipe_cutoff = 0;
    opt.ipe_steps = 256;
    const auto f = channel_kernel(reference_spec(), p, LinkGeometry{}, opt);
    EXPECT_LE((a.P - f.P).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Kernel, FullIpeRefeedsGroundModeAboveAnalytic) {
    // with higher LG modes present the truncated-exact scheme returns population to (0,0):
    // at cn2 = 1e-16 over 30 km this lifts P by 13-19 % over pure decay
    KernelOptions opt;
    opt.order = 4;
    const auto p = TurbulenceProfile::constant(1e-16);
    const auto a = channel_kernel(reference_spec(), p, LinkGeometry{}, opt);
    opt.fidelity = KernelFidelity::FullIPE;
    opt.ipe_cutoff = 2;
    const auto f = channel_kernel(reference_spec(), p, LinkGeometry{}, opt);
    const Eigen::ArrayXXd rel = (f.P - a.P).array() / a.P.array();
    EXPECT_GT(rel.minCoeff(), 0.10);
    EXPECT_LT(rel.maxCoeff(), 0.25);
    EXPECT_EQ(f.P, f.P.transpose());
}

TEST(ModeTrace, ReferenceChannelStaysAboveFortyDecibelLoss) {
    const auto& k = reference_kernel();
    std::vector<double> t;
    for (int n = 0; n <= 10; ++n) t.push_back(mode_trace(k, n));
    for (double v : t) {
        EXPECT_GT(v, 1e-4);
        EXPECT_LE(v, 1.0);
    }
    // higher modes sample a wider band whose decay average is larger, so the traces rise with n
    for (std::size_t n = 1; n < t.size(); ++n) EXPECT_GT(t[n], t[n - 1]);
}

TEST(TransmissionMatrix, ReferenceMatrix) {
    const auto tm = transmission_matrix(reference_kernel(), 3);
    const double reference[4][4] = {{0.9838, 0.0161, 0.0000, 0.0000},
                                   {0.0152, 0.9538, 0.0307, 0.0000},
                                   {0.0000, 0.0289, 0.9266, 0.0438},
                                   {0.0000, 0.0005, 0.0414, 0.9018}};
    for (int n = 0; n < 4; ++n)
        for (int m = 0; m < 4; ++m) {
            EXPECT_NEAR(tm.S(n, m), reference[n][m], 0.02) << n << "," << m;
            if (std::abs(n - m) >= 2) EXPECT_LT(tm.S(n, m), 0.05);
            EXPECT_GE(tm.S(n, m), 0.0);
        }
    for (int n = 0; n < 4; ++n) {
        EXPECT_LE(tm.S.row(n).sum(), 1.0 + 1e-6);
        EXPECT_GE(tm.S.row(n).sum(), 0.9);
    }
}

TEST(TransmissionMatrix, MatchesIndependentQuadrature) {
    const auto tm = transmission_matrix(reference_kernel(), 3);
    const auto p = TurbulenceProfile::constant(1e-15);
    for (int n = 0; n < 4; ++n)
        for (int m = 0; m < 4; ++m) EXPECT_NEAR(tm.S(n, m), oracle_s(reference_spec(), p, LinkGeometry{}, n, m, 40), 1e-9) << n << "," << m;
}

TEST(TransmissionMatrix, GridRefinementStable) {
    const auto p = TurbulenceProfile::constant(1e-15);
    KernelOptions a, b;
    a.order = 32;
    b.order = 64;
    const auto s1 = transmission_matrix(channel_kernel(reference_spec(), p, LinkGeometry{}, a), 3).S;
    const auto s2 = transmission_matrix(channel_kernel(reference_spec(), p, LinkGeometry{}, b), 3).S;
    EXPECT_LT((s1 - s2).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(ApplyChannelSingle, DiagonalIsMatrixRowAndLeakageCloses) {
    const auto& k = reference_kernel();
    const auto tm = transmission_matrix(k, 3);
    for (int n = 0; n <= 3; ++n) {
        const auto out = apply_channel_single(k, n, 3);
        EXPECT_NEAR(out.trace, tm.traces[static_cast<std::size_t>(n)], 1e-15);
        for (int m = 0; m <= 3; ++m) EXPECT_NEAR(out.rho(m, m), tm.S(n, m), 1e-14);
        EXPECT_NEAR(tm.S.row(n).sum() + out.leakage, 1.0, 1e-6);
        EXPECT_EQ(out.rho, out.rho.transpose());
    }
}

TEST(ApplyChannelSingle, MatchesChannelTensor) {
    const auto& k = reference_kernel();
    const auto C = channel_tensor(k, 5);
    ASSERT_EQ(C.dimension(), 5);
    for (int n = 0; n < 5; ++n) {
        const auto out = apply_channel_single(k, n, 4);
        for (int u = 0; u < 5; ++u)
            for (int v = 0; v < 5; ++v) EXPECT_NEAR(C(u, v, n, n) / out.trace, out.rho(u, v), 1e-12);
    }
}

TEST(ApplyChannelSingle, OutputInheritsKernelIndefiniteness) {
    // the pure-decay kernel is pointwise positive but not a positive semidefinite kernel,
    // so the normalized single-photon output carries small negative eigenvalues
    const auto& k = reference_kernel();
    Eigen::MatrixXd sqrt_w = Eigen::MatrixXd::Zero(k.order(), k.order());
    for (int i = 0; i < k.order(); ++i) sqrt_w(i, i) = std::sqrt(k.grid.weights[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd weighted = sqrt_w * k.P * sqrt_w;
    const double kernel_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(weighted).eigenvalues().minCoeff();
    EXPECT_LT(kernel_min, 0.0);
    for (int n = 0; n <= 3; ++n) {
        const auto out = apply_channel_single(k, n, 3);
        const auto eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(out.rho).eigenvalues();
        EXPECT_LT(eig.minCoeff(), -1e-10) << n;
        EXPECT_GT(eig.minCoeff(), -5e-3) << n;
        EXPECT_GT(eig.maxCoeff(), 0.9) << n;
    }
}
