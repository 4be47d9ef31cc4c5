#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <tuple>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include "turbulink/turbulence_model.hpp"

using namespace turbulink;

namespace {

LinkGeometry reference_link() { return LinkGeometry{}; }

}  // namespace

TEST(PathHeight, ReferenceClearance) {
    const auto g = reference_link();
    EXPECT_NEAR(path_height(g, 15e3), 1.36, 0.05);
    EXPECT_DOUBLE_EQ(path_height(g, 0.0), 19.0);
    EXPECT_DOUBLE_EQ(path_height(g, 30e3), 19.0);
}

TEST(PathHeight, SagittaMatchesCircleChord) {
    const auto g = reference_link();
    // chord through two points at radius R + h separated by arc angle theta; midpoint radius r cos(theta/2)
    const double r = g.earth_radius + g.tx_height;
    const double half = std::asin(0.5 * g.path_length / r);
    const double mid = r * std::cos(half) - g.earth_radius;
    EXPECT_NEAR(path_height(g, 15e3), mid, 1e-6);
    EXPECT_NEAR(g.tx_height - path_height(g, 15e3), 17.66, 0.01);
    EXPECT_NEAR(g.tx_height - path_height(g, 15e3), g.path_length * g.path_length / (8.0 * g.earth_radius), 0.01);
}

TEST(PathHeight, ConvexAndSymmetric) {
    // the straight chord sags below its endpoints: height is convex in z
    const auto g = reference_link();
    const int n = 64;
    const double h = g.path_length / n;
    for (int i = 1; i < n; ++i) {
        const double z = i * h;
        const double second = path_height(g, z - h) - 2.0 * path_height(g, z) + path_height(g, z + h);
        EXPECT_GT(second, 0.0) << z;
        EXPECT_NEAR(path_height(g, z), path_height(g, g.path_length - z), 1e-6);
    }
}

TEST(PathHeight, MatchesExtendedPrecisionGeometry) {
    // direct construction: chord between the endpoints, distance from the centre minus R, in long double
    for (const auto& [h1, h2, len] : {std::tuple{19.0, 19.0, 30e3}, std::tuple{5.0, 40.0, 12e3}, std::tuple{2.0, 100.0, 60e3}}) {
        LinkGeometry g;
        g.tx_height = h1, g.rx_height = h2, g.path_length = len;
        const long double R = g.earth_radius, r1 = R + h1, r2 = R + h2, zf = len;
        const long double c = (r1 * r1 + r2 * r2 - zf * zf) / (2 * r1 * r2), s = std::sqrt(1 - c * c);
        for (int i = 0; i <= 50; ++i) {
            const long double f = i / 50.0L;
            const long double px = f * r2 * s, py = r1 + f * (r2 * c - r1);
            const double expect = static_cast<double>(std::sqrt(px * px + py * py) - R);
            EXPECT_NEAR(path_height(g, static_cast<double>(f * zf)), expect, 1e-8) << h1 << " " << h2 << " " << i;
        }
    }
}

TEST(PathHeight, OutsidePathRejected) {
    EXPECT_THROW(path_height(reference_link(), -1.0), InvalidArgument);
    EXPECT_THROW(path_height(reference_link(), 30001.0), InvalidArgument);
}

TEST(Cn2, ConstantProfile) {
    const auto p = TurbulenceProfile::constant(1e-16);
    for (double z : {0.0, 1e3, 15e3, 30e3}) EXPECT_EQ(cn2_at(p, reference_link(), z), 1e-16);
    EXPECT_THROW(TurbulenceProfile::constant(1e-20), InvalidArgument);
    EXPECT_THROW(TurbulenceProfile::constant(1e-10), InvalidArgument);
    EXPECT_NO_THROW(TurbulenceProfile::constant(0.0));
}

TEST(Cn2, TabulatedNodeAndLogMidpoint) {
    const auto p = TurbulenceProfile::tabulated({{10.0, 1e-13}, {100.0, 1e-15}});
    LinkGeometry g = reference_link();
    g.tx_height = 10.0;
    EXPECT_NEAR(cn2_at(p, g, 0.0), 1e-13, 1e-25);
    EXPECT_NEAR(p.at_height(31.6), 1e-14, 0.01e-14);
    EXPECT_EQ(p.at_height(1.0), 1e-13);
    EXPECT_EQ(p.at_height(500.0), 1e-15);
}

TEST(Cn2, TableValidation) {
    EXPECT_THROW(TurbulenceProfile::tabulated({}), InvalidArgument);
    EXPECT_THROW(TurbulenceProfile::tabulated({{10.0, 1e-14}}), InvalidArgument);
    EXPECT_THROW(TurbulenceProfile::tabulated({{10.0, 1e-14}, {5.0, 1e-15}}), InvalidArgument);
    EXPECT_THROW(TurbulenceProfile::tabulated({{10.0, 1e-14}, {20.0, 1e-9}}), InvalidArgument);
}

TEST(ProfileCsv, ParsesTable) {
    std::istringstream in("height_m,cn2\n10,1e-13\n\n100, 1e-15\n");
    const auto p = load_profile_csv(in);
    EXPECT_NEAR(p.at_height(31.6), 1e-14, 0.01e-14);
}

TEST(ProfileCsv, ErrorsNameTheLine) {
    const auto line_of = [](const std::string& text) {
        std::istringstream in(text);
        try {
            load_profile_csv(in);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    EXPECT_EQ(line_of("height,cn2\n10,1e-14\n"), 1);
    EXPECT_EQ(line_of("height_m,cn2\n10,1e-14\n20,abc\n"), 3);
    EXPECT_EQ(line_of("height_m,cn2\n10,1e-14\n20\n"), 3);
    EXPECT_EQ(line_of("height_m,cn2\n10,1e-14\n5,1e-15\n"), 3);
    EXPECT_EQ(line_of("height_m,cn2\n10,1e-14\n20,1e-3\n"), 3);
    EXPECT_EQ(line_of("height_m,cn2\n10,1e-14\n"), 2);
    EXPECT_EQ(line_of(""), 1);
}

TEST(VonKarman, ZeroWavenumberAndPowerLaw) {
    const SpectrumParams sp{0.01};
    const double tp3 = std::pow(2.0 * std::numbers::pi, 3.0);
    EXPECT_NEAR(vonkarman_psd(0.0, 1e-15, sp), 0.033 * tp3 * 1e-15 * std::pow(0.01, -11.0 / 3.0), 1e-12 * vonkarman_psd(0.0, 1e-15, sp));
    const double K = 100.0;
    EXPECT_NEAR(vonkarman_psd(2.0 * K, 1e-15, sp) / vonkarman_psd(K, 1e-15, sp), std::pow(2.0, -11.0 / 3.0), 1e-3 * std::pow(2.0, -11.0 / 3.0));
    for (double k = 0.0; k < 10.0; k += 0.37) EXPECT_GT(vonkarman_psd(k, 1e-15, sp), vonkarman_psd(k + 0.1, 1e-15, sp));
    EXPECT_THROW(vonkarman_psd(-1.0, 1e-15, sp), InvalidArgument);
    EXPECT_THROW(vonkarman_psd(1.0, 1e-15, SpectrumParams{0.0}), InvalidArgument);
}

TEST(BigLT, DegenerateConstant) {
    const double lambda = 3.95e-6, cn2 = 1e-15;
    const SpectrumParams sp{0.02};
    const double c = big_l_t(lambda, lambda, cn2, sp) * lambda * lambda * std::pow(sp.kappa0, 5.0 / 3.0) / cn2;
    EXPECT_NEAR(c, 30.86, 0.01);
    // 0.033 (2 pi)^2 0.6 (2 pi)^2
    EXPECT_NEAR(c, 0.033 * 0.6 * std::pow(2.0 * std::numbers::pi, 4.0), 1e-10);
}

TEST(BigLT, OuterScaleScaling) {
    const double a = big_l_t(1e-6, 1e-6, 1e-15, SpectrumParams{0.01});
    EXPECT_NEAR(big_l_t(1e-6, 1e-6, 1e-15, SpectrumParams{0.02}) / a, std::pow(2.0, -5.0 / 3.0), 1e-12);
    EXPECT_NEAR(big_l_t(1e-6, 1e-6, 1e-15, SpectrumParams{0.001}) / a, std::pow(10.0, 5.0 / 3.0), 1e-9);
}

TEST(BigLT, IndependentRadialQuadrature) {
    const double lambda = 3.95e-6, cn2 = 1e-15;
    const SpectrumParams sp{0.01};
    const double k = 2.0 * std::numbers::pi / lambda;
    // d^2K / 4 pi^2 -> K dK / 2 pi over [0, inf)
    const auto f = [&](double K) { return K * vonkarman_psd(K, cn2, sp) / (2.0 * std::numbers::pi); };
    const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13);
    EXPECT_NEAR(k * k * integral / big_l_t(lambda, lambda, cn2, sp), 1.0, 5e-4);
}

TEST(LStrength, RayleighRangeFactor) {
    const double lambda = 3.95e-6, w0 = 0.1457;
    const double zr = std::numbers::pi * w0 * w0 / lambda;
    EXPECT_NEAR(l_strength(zr, 1e-15, lambda, w0) / l_strength(0.0, 1e-15, lambda, w0), std::pow(2.0, 5.0 / 6.0), 1e-12);
    EXPECT_NEAR(std::pow(2.0, 5.0 / 6.0), 1.7818, 1e-4);
}

TEST(LStrength, FarFieldScaling) {
    const double lambda = 3.95e-6, w0 = 0.05, cn2 = 1e-15;
    const double zr = std::numbers::pi * w0 * w0 / lambda;
    const double z = 100.0 * zr;
    const double far = cn2 * std::pow(w0, -5.0 / 3.0) * std::pow(lambda, -1.0 / 3.0) * std::pow(z, 5.0 / 3.0);
    // ratio approaches pi^{-5/3}
    EXPECT_NEAR(l_strength(z, cn2, lambda, w0) / far, std::pow(std::numbers::pi, -5.0 / 3.0), 1e-3);
    EXPECT_NEAR(l_strength(2.0 * z, cn2, lambda, w0) / l_strength(z, cn2, lambda, w0), std::pow(2.0, 5.0 / 3.0), 1e-3);
    EXPECT_NEAR(l_strength(z, cn2, lambda, 2.0 * w0) / l_strength(z, cn2, lambda, w0), std::pow(2.0, -5.0 / 3.0), 2e-3);
}

TEST(LStrength, MinimizedAtSqrtLambdaZOverPi) {
    for (double z : {5e3, 30e3, 80e3}) {
        const double lambda = 3.95e-6;
        const auto f = [&](double w) { return l_strength(z, 1e-15, lambda, w); };
        const auto [w_min, f_min] = boost::math::tools::brent_find_minima(f, 0.01, 1.0, 40);
        const double expect = std::sqrt(lambda * z / std::numbers::pi);
        EXPECT_NEAR(w_min / expect, 1.0, 1e-3) << z;
    }
}

TEST(LCross, DegenerateReductionAndSymmetry) {
    const double w1 = 4.7e14, w2 = 4.9e14, z = 12e3, w0 = 0.12, cn2 = 3e-16;
    const double lambda1 = 2.0 * std::numbers::pi * kSpeedOfLight / w1;
    EXPECT_EQ(l_cross(z, w1, w1, cn2, w0), l_strength(z, cn2, lambda1, w0));
    EXPECT_EQ(l_cross(z, w1, w2, cn2, w0), l_cross(z, w2, w1, cn2, w0));
    const auto sp = SpectralPoint::from_omegas(w1, w2);
    EXPECT_NEAR(l_cross(0.0, w1, w2, cn2, w0), cn2 * std::pow(w0, 5.0 / 3.0) / (sp.lambda1 * sp.lambda2), 1e-15 * l_cross(0.0, w1, w2, cn2, w0));
}

TEST(Fried, ReferenceValueAndScaling) {
    EXPECT_NEAR(fried_parameter(3.95e-6, 1e-16, 3e4), 0.497, 1e-3);
    EXPECT_NEAR(fried_parameter(3.95e-6, 1e-16, 6e4) / fried_parameter(3.95e-6, 1e-16, 3e4), std::pow(2.0, -0.6), 1e-12);
    EXPECT_NEAR(3.25 / std::pow(0.185, 5.0 / 3.0), 54.1, 0.1);
    EXPECT_NEAR(3.25 / std::pow(0.185, 5.0 / 3.0), decay_constant(), 0.1);
}

TEST(IntegratedL, ShortLinkLinearInDistance) {
    LinkGeometry g = reference_link();
    g.path_length = 100.0;
    const auto p = TurbulenceProfile::constant(1e-15);
    const double expect = 1e-15 / (g.wavelength * g.wavelength) * std::pow(g.waist, 5.0 / 3.0) * g.path_length;
    EXPECT_NEAR(integrated_l(p, g) / expect, 1.0, 1e-3);
}

TEST(IntegratedL, LinearInCn2) {
    const auto g = reference_link();
    EXPECT_NEAR(integrated_l(TurbulenceProfile::constant(2e-16), g) / integrated_l(TurbulenceProfile::constant(1e-16), g), 2.0, 1e-12);
}

TEST(IntegratedL, MatchesRiemannSum) {
    const auto g = reference_link();
    const auto p = TurbulenceProfile::constant(1e-16);
    const int n = 1000000;
    const double h = g.path_length / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += l_strength((i + 0.5) * h, 1e-16, g.wavelength, g.waist);
    EXPECT_NEAR(integrated_l(p, g) / (s * h), 1.0, 1e-6);
}

TEST(IntegratedL, TabulatedProfileAlongCurvedPath) {
    const auto g = reference_link();
    const auto p = TurbulenceProfile::tabulated({{1.0, 1e-13}, {10.0, 1e-14}, {100.0, 1e-15}});
    const int n = 200000;
    const double h = g.path_length / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = (i + 0.5) * h;
        s += l_strength(z, cn2_at(p, g, z), g.wavelength, g.waist);
    }
    EXPECT_NEAR(integrated_l(p, g) / (s * h), 1.0, 1e-6);
}

TEST(IntegratedL, ZeroTurbulenceAndPartialPath) {
    const auto g = reference_link();
    EXPECT_EQ(integrated_l(TurbulenceProfile::constant(0.0), g), 0.0);
    const auto p = TurbulenceProfile::constant(1e-16);
    EXPECT_EQ(integrated_l(p, g, SpectralPoint::single(g.wavelength), 0.0), 0.0);
    EXPECT_LT(integrated_l(p, g, SpectralPoint::single(g.wavelength), 10e3), integrated_l(p, g));
    EXPECT_THROW(integrated_l(p, g, SpectralPoint::single(g.wavelength), 40e3), InvalidArgument);
}

TEST(Extinction, ExponentialPerKilometre) {
    EXPECT_EQ(extinction_factor(0.0, 30e3), 1.0);
    EXPECT_NEAR(extinction_factor(0.1, 30e3), std::exp(-3.0), 1e-15);
    EXPECT_THROW(extinction_factor(-0.1, 1e3), InvalidArgument);
}

TEST(Geometry, Validation) {
    LinkGeometry g = reference_link();
    g.waist = 0.0;
    EXPECT_THROW(g.validate(), InvalidArgument);
    g = reference_link();
    g.tx_height = -1.0;
    EXPECT_THROW(g.validate(), InvalidArgument);
    g = reference_link();
    EXPECT_NEAR(g.rayleigh_range(), std::numbers::pi * 0.1457 * 0.1457 / 3.95e-6, 1e-9);
}
