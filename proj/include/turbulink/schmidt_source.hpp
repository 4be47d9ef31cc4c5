#ifndef TURBULINK_SCHMIDT_SOURCE_HPP
#define TURBULINK_SCHMIDT_SOURCE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"
#include "math_core.hpp"

namespace turbulink {

inline constexpr double kSpeedOfLight = 299792458.0;

// Double-Gaussian biphoton. Bandwidths and pump frequency in rad/s.
struct BiphotonSpec {
    double sigma_a = 10e12;
    double sigma_b = 80e12;
    double omega_p = 4.0 * std::numbers::pi * kSpeedOfLight / 3.95e-6;

    void validate() const {
        if (!(sigma_a > 0.0) || !(sigma_b > 0.0) || !(omega_p > 0.0))
            throw InvalidArgument("BiphotonSpec: sigma_a, sigma_b and omega_p must be positive");
    }
    double b() const { return 2.0 / (sigma_a * sigma_b); }
    double center() const { return 0.5 * omega_p; }

    // Pump at twice the frequency of a signal photon of the given wavelength.
    static BiphotonSpec from_center_wavelength(double sigma_a, double sigma_b, double wavelength) {
        return {sigma_a, sigma_b, 4.0 * std::numbers::pi * kSpeedOfLight / wavelength};
    }
};

inline double schmidt_eigenvalue(const BiphotonSpec& spec, int n) {
    spec.validate();
    if (n < 0 || n > 200) throw InvalidArgument("schmidt_eigenvalue: n outside [0, 200]");
    const double a = spec.sigma_a, b = spec.sigma_b;
    return 4.0 * a * b / ((a + b) * (a + b)) * std::pow((a - b) / (a + b), 2.0 * n);
}

inline double schmidt_number(const BiphotonSpec& spec) {
    spec.validate();
    const double a = spec.sigma_a, b = spec.sigma_b;
    return (a * a + b * b) / (2.0 * a * b);
}

// f_n(omega), normalized over d omega.
inline double mode_amplitude(const BiphotonSpec& spec, int n, double omega) {
    spec.validate();
    if (n < 0 || n > math::kMaxHermiteOrder)
        throw InvalidArgument("mode_amplitude: n outside [0, 64]");
    const double b = spec.b();
    const double x = std::sqrt(b) * (omega - spec.center());
    return std::pow(b, 0.25) * math::hermite_orthonormal(n, x)[n] * std::exp(-0.5 * x * x);
}

struct TruncatedSource {
    BiphotonSpec spec;
    int max_mode = 0;
    std::vector<double> weights;  // amplitudes, squares sum to 1
    double discarded_mass = 0.0;

    // (sum lambda_n)^{-1/2}, the amplitude rescaling
    double amplitude_prefactor() const { return 1.0 / std::sqrt(1.0 - discarded_mass); }
    // (sum lambda_n)^{-1}, the probability rescaling
    double probability_prefactor() const { return 1.0 / (1.0 - discarded_mass); }
};

inline TruncatedSource truncated_source(const BiphotonSpec& spec, int N) {
    if (N < 0 || N > 64) throw InvalidArgument("truncated_source: N outside [0, 64]");
    TruncatedSource src{spec, N, {}, 0.0};
    double kept = 0.0;
    for (int n = 0; n <= N; ++n) {
        const double lam = schmidt_eigenvalue(spec, n);
        kept += lam;
        src.weights.push_back(std::sqrt(lam));
    }
    for (auto& w : src.weights) w /= std::sqrt(kept);
    src.discarded_mass = std::max(0.0, 1.0 - kept);
    return src;
}

// Gauss-Hermite grid in omega with the orthonormal Hermite table at each node.
// Integrals of f_m f_n against a smooth g become sum_i w_i g(omega_i) p_m(x_i) p_n(x_i).
struct FrequencyGrid {
    std::vector<double> x;
    std::vector<double> weights;
    std::vector<double> omega;
    Eigen::MatrixXd modes;  // modes(i, n) = p_n(x_i)

    int order() const { return static_cast<int>(x.size()); }
    int max_mode() const { return static_cast<int>(modes.cols()) - 1; }
};

inline FrequencyGrid spectral_grid(const BiphotonSpec& spec, int order, int max_mode) {
    spec.validate();
    const auto rule = math::gauss_hermite_rule(order);
    FrequencyGrid g;
    g.x = rule.nodes;
    g.weights = rule.weights;
    g.modes.resize(order, max_mode + 1);
    const double sb = std::sqrt(spec.b());
    for (int i = 0; i < order; ++i) {
        g.omega.push_back(spec.center() + g.x[i] / sb);
        const auto p = math::hermite_orthonormal(max_mode, g.x[i]);
        for (int n = 0; n <= max_mode; ++n) g.modes(i, n) = p[n];
    }
    return g;
}

}  // namespace turbulink

#endif
