#ifndef TURBULINK_TURBULENCE_MODEL_HPP
#define TURBULINK_TURBULENCE_MODEL_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"
#include "math_core.hpp"
#include "schmidt_source.hpp"

namespace turbulink {

// Prefactor of the kappa_0 -> 0 coupling sum and the fundamental-mode decay constant.
inline constexpr double kCouplingPrefactor = 8.1;
inline double decay_constant() { return kCouplingPrefactor * std::abs(math::gamma_fn(-5.0 / 6.0)); }

inline constexpr double kMinCn2 = 1e-19;
inline constexpr double kMaxCn2 = 1e-11;

inline bool valid_cn2(double c) { return c == 0.0 || (c >= kMinCn2 && c <= kMaxCn2); }

struct LinkGeometry {
    double path_length = 30e3;
    double tx_height = 19.0;
    double rx_height = 19.0;
    double earth_radius = 6.371e6;
    double waist = 0.1457;
    double wavelength = 3.95e-6;

    void validate() const {
        if (!(path_length > 0.0)) throw InvalidArgument("LinkGeometry: path_length must be positive");
        if (!(tx_height > 0.0) || !(rx_height > 0.0))
            throw InvalidArgument("LinkGeometry: endpoint heights must be positive");
        if (!(earth_radius > 0.0)) throw InvalidArgument("LinkGeometry: earth_radius must be positive");
        if (!(waist > 0.0)) throw InvalidArgument("LinkGeometry: waist must be positive");
        if (!(wavelength > 0.0)) throw InvalidArgument("LinkGeometry: wavelength must be positive");
        const double r1 = earth_radius + tx_height, r2 = earth_radius + rx_height;
        if (path_length > r1 + r2 || path_length < std::abs(r1 - r2))
            throw InvalidArgument("LinkGeometry: endpoints cannot be joined by a chord of path_length");
    }
    double rayleigh_range() const { return std::numbers::pi * waist * waist / wavelength; }

    friend bool operator==(const LinkGeometry&, const LinkGeometry&) = default;
};

// Height above the sphere of the straight chord between the two endpoints.
inline double path_height(const LinkGeometry& geom, double z) {
    geom.validate();
    if (z < 0.0 || z > geom.path_length) throw InvalidArgument("path_height: z outside [0, z_f]");
    if (z == 0.0) return geom.tx_height;
    if (z == geom.path_length) return geom.rx_height;
    // |P|^2 - R^2 along P = A + z u, written without subtracting R from |P|
    const double R = geom.earth_radius, h1 = geom.tx_height, h2 = geom.rx_height;
    const double zf = geom.path_length;
    const double a_dot_u = ((h2 - h1) * (2.0 * R + h1 + h2) - zf * zf) / (2.0 * zf);
    const double d = h1 * (2.0 * R + h1) + 2.0 * z * a_dot_u + z * z;
    return d / (std::sqrt(R * R + d) + R);
}

class TurbulenceProfile {
public:
    struct Constant {
        double cn2;
    };
    struct Tabulated {
        std::vector<std::pair<double, double>> points;  // (height m, cn2)
    };

    static TurbulenceProfile constant(double cn2) {
        if (!valid_cn2(cn2))
            throw InvalidArgument("TurbulenceProfile: cn2 must be 0 or within [1e-19, 1e-11]");
        return TurbulenceProfile(Constant{cn2});
    }

    static TurbulenceProfile tabulated(std::vector<std::pair<double, double>> points) {
        if (points.empty()) throw InvalidArgument("TurbulenceProfile: empty table");
        if (points.size() < 2) throw InvalidArgument("TurbulenceProfile: table needs at least 2 points");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto [h, c] = points[i];
            if (!(h > 0.0)) throw InvalidArgument("TurbulenceProfile: table heights must be positive");
            if (!(c >= kMinCn2 && c <= kMaxCn2))
                throw InvalidArgument("TurbulenceProfile: table cn2 outside [1e-19, 1e-11]");
            if (i > 0 && !(h > points[i - 1].first))
                throw InvalidArgument("TurbulenceProfile: table heights must be strictly increasing");
        }
        return TurbulenceProfile(Tabulated{std::move(points)});
    }

    bool is_constant() const { return std::holds_alternative<Constant>(v_); }
    const std::variant<Constant, Tabulated>& variant() const { return v_; }

    // Interpolates log(cn2) against log(height); clamped at the table ends.
    double at_height(double h) const {
        if (const auto* c = std::get_if<Constant>(&v_)) return c->cn2;
        const auto& p = std::get<Tabulated>(v_).points;
        if (h <= p.front().first) return p.front().second;
        if (h >= p.back().first) return p.back().second;
        const auto it = std::upper_bound(p.begin(), p.end(), h,
                                         [](double v, const auto& e) { return v < e.first; });
        const auto& [h1, c1] = *(it - 1);
        const auto& [h2, c2] = *it;
        const double f = std::log(h / h1) / std::log(h2 / h1);
        return std::exp(std::log(c1) + f * (std::log(c2) - std::log(c1)));
    }

    bool is_zero() const {
        const auto* c = std::get_if<Constant>(&v_);
        return c && c->cn2 == 0.0;
    }

private:
    explicit TurbulenceProfile(std::variant<Constant, Tabulated> v) : v_(std::move(v)) {}
    std::variant<Constant, Tabulated> v_;
};

inline double cn2_at(const TurbulenceProfile& profile, const LinkGeometry& geom, double z) {
    if (profile.is_constant()) {
        if (z < 0.0 || z > geom.path_length) throw InvalidArgument("cn2_at: z outside [0, z_f]");
        return profile.at_height(0.0);
    }
    return profile.at_height(path_height(geom, z));
}

// Two-column CSV with header `height_m,cn2`.
inline TurbulenceProfile load_profile_csv(std::istream& in, const std::string& name = "profile") {
    std::string line;
    int lineno = 0;
    std::vector<std::pair<double, double>> pts;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!header) {
            std::string h = line;
            h.erase(std::remove_if(h.begin(), h.end(), ::isspace), h.end());
            if (h != "height_m,cn2")
                throw ConfigError(name + ": expected header `height_m,cn2`", lineno, 1);
            header = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError(name + ": expected two columns", lineno, 1);
        double h = 0.0, c = 0.0;
        try {
            std::size_t used = 0;
            h = std::stod(line.substr(0, comma), &used);
            const std::string rest = line.substr(comma + 1);
            c = std::stod(rest, &used);
            if (rest.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError(name + ": malformed number", lineno, 1);
        }
        if (!(h > 0.0)) throw ConfigError(name + ": height must be positive", lineno, 1);
        if (!(c >= kMinCn2 && c <= kMaxCn2))
            throw ConfigError(name + ": cn2 outside [1e-19, 1e-11]", lineno,
                              static_cast<int>(comma) + 2);
        if (!pts.empty() && !(h > pts.back().first))
            throw ConfigError(name + ": heights must be strictly increasing", lineno, 1);
        pts.emplace_back(h, c);
    }
    if (!header) throw ConfigError(name + ": empty profile file", lineno > 0 ? lineno : 1, 1);
    if (pts.size() < 2) throw ConfigError(name + ": table needs at least 2 points", lineno, 1);
    return TurbulenceProfile::tabulated(std::move(pts));
}

inline TurbulenceProfile load_profile_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open profile file " + path);
    return load_profile_csv(f, path);
}

struct SpectrumParams {
    double kappa0 = 1.0 / 100.0;

    void validate() const {
        if (!(kappa0 > 0.0)) throw InvalidArgument("SpectrumParams: kappa0 must be positive");
    }
};

inline double vonkarman_psd(double K, double cn2, const SpectrumParams& sp) {
    sp.validate();
    if (K < 0.0) throw InvalidArgument("vonkarman_psd: K must be non-negative");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return 0.033 * two_pi * two_pi * two_pi * cn2 *
           std::pow(K * K + sp.kappa0 * sp.kappa0, -11.0 / 6.0);
}

// k1 k2 times the integral of the spectrum over d^2K / 4 pi^2.
inline double big_l_t(double lambda1, double lambda2, double cn2, const SpectrumParams& sp) {
    sp.validate();
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double k1k2 = two_pi * two_pi / (lambda1 * lambda2);
    return k1k2 * 0.033 * two_pi * two_pi * cn2 * 0.6 * std::pow(sp.kappa0, -5.0 / 3.0);
}

// Wavelength pair carried by the two indices of a cross-frequency quantity.
struct SpectralPoint {
    double lambda1;
    double lambda2;

    static SpectralPoint single(double lambda) { return {lambda, lambda}; }
    static SpectralPoint from_omegas(double omega1, double omega2) {
        constexpr double c2pi = 2.0 * std::numbers::pi * kSpeedOfLight;
        return {c2pi / omega1, c2pi / omega2};
    }
    bool degenerate() const { return lambda1 == lambda2; }
};

inline double l_general(double z, double cn2, const SpectralPoint& sp, double w0) {
    const double s = z / (std::numbers::pi * w0 * w0);
    const double t1 = sp.lambda1 * s, t2 = sp.lambda2 * s;
    const double bracket = 1.0 + 0.5 * t1 * t1 + 0.5 * t2 * t2;
    return cn2 / (sp.lambda1 * sp.lambda2) * std::pow(w0, 5.0 / 3.0) * std::pow(bracket, 5.0 / 6.0);
}

inline double l_strength(double z, double cn2, double lambda, double w0) {
    if (!(lambda > 0.0) || !(w0 > 0.0) || z < 0.0 || cn2 < 0.0)
        throw InvalidArgument("l_strength: arguments must be positive");
    return l_general(z, cn2, SpectralPoint::single(lambda), w0);
}

inline double l_cross(double z, double omega1, double omega2, double cn2, double w0) {
    if (!(omega1 > 0.0) || !(omega2 > 0.0) || !(w0 > 0.0) || z < 0.0 || cn2 < 0.0)
        throw InvalidArgument("l_cross: arguments must be positive");
    return l_general(z, cn2, SpectralPoint::from_omegas(omega1, omega2), w0);
}

inline double fried_parameter(double lambda, double cn2, double z) {
    if (!(lambda > 0.0) || !(cn2 > 0.0) || !(z > 0.0))
        throw InvalidArgument("fried_parameter: arguments must be positive");
    return 0.185 * std::pow(lambda * lambda / (cn2 * z), 0.6);
}

// l(z) along the path with the local cn2.
inline double l_along_path(const TurbulenceProfile& profile, const LinkGeometry& geom,
                           const SpectralPoint& sp, double z) {
    return l_general(z, cn2_at(profile, geom, z), sp, geom.waist);
}

namespace detail {

// Points in (0, zf) where the path height crosses a table node; the
// interpolated cn2 has a kink there. Height along the chord is convex in z.
inline std::vector<double> profile_breakpoints(const TurbulenceProfile& profile, const LinkGeometry& geom,
                                               double zf) {
    std::vector<double> out;
    const auto* tab = std::get_if<TurbulenceProfile::Tabulated>(&profile.variant());
    if (!tab) return out;
    const auto h = [&](double z) { return path_height(geom, z); };
    double lo = 0.0, hi = geom.path_length;
    for (int i = 0; i < 200 && hi - lo > 1e-9 * geom.path_length; ++i) {
        const double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
        (h(a) < h(b) ? hi : lo) = (h(a) < h(b) ? b : a);
    }
    const double zmin = 0.5 * (lo + hi);
    const auto crossing = [&](double a, double b, double node) {
        const bool up = h(b) > h(a);
        for (int i = 0; i < 100; ++i) {
            const double m = 0.5 * (a + b);
            ((h(m) < node) == up ? a : b) = m;
        }
        return 0.5 * (a + b);
    };
    for (const auto& [node, c] : tab->points) {
        if (node > std::min(h(0.0), h(zmin)) && node < std::max(h(0.0), h(zmin))) out.push_back(crossing(0.0, zmin, node));
        if (node > std::min(h(zmin), h(geom.path_length)) && node < std::max(h(zmin), h(geom.path_length)))
            out.push_back(crossing(zmin, geom.path_length, node));
    }
    std::erase_if(out, [&](double z) { return z <= 0.0 || z >= zf; });
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Integral of l over [0, z_f]; relative tolerance 1e-8.
inline double integrated_l(const TurbulenceProfile& profile, const LinkGeometry& geom,
                           const SpectralPoint& sp, double z_end = -1.0) {
    geom.validate();
    const double zf = z_end < 0.0 ? geom.path_length : z_end;
    if (zf > geom.path_length) throw InvalidArgument("integrated_l: end beyond path");
    if (profile.is_zero() || zf == 0.0) return 0.0;
    std::vector<double> cuts{0.0};
    for (double z : detail::profile_breakpoints(profile, geom, zf)) cuts.push_back(z);
    cuts.push_back(zf);
    double v = 0.0, err = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i], w = cuts[i + 1] - a;
        // integrate over s = (z - a) / w so the error estimate does not depend on the path scale
        const auto f = [&](double s) { return l_along_path(profile, geom, sp, std::min(a + s * w, zf)); };
        double e = 0.0;
        v += w * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 15, 1e-10, &e);
        err += w * e;
    }
    if (!(err <= 1e-8 * std::abs(v)))
        throw NumericalError("integrated_l: quadrature did not reach relative tolerance 1e-8");
    return v;
}

inline double integrated_l(const TurbulenceProfile& profile, const LinkGeometry& geom) {
    return integrated_l(profile, geom, SpectralPoint::single(geom.wavelength));
}

inline double extinction_factor(double alpha_per_km, double distance) {
    if (alpha_per_km < 0.0) throw InvalidArgument("extinction coefficient must be non-negative");
    return std::exp(-alpha_per_km * distance / 1000.0);
}

}  // namespace turbulink

#endif
