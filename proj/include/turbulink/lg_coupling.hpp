#ifndef TURBULINK_LG_COUPLING_HPP
#define TURBULINK_LG_COUPLING_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "math_core.hpp"
#include "turbulence_model.hpp"

namespace turbulink {

using math::cplx;

struct LGIndex {
    int r = 0;
    int l = 0;

    int order() const { return 2 * r + std::abs(l); }

    friend bool operator==(const LGIndex&, const LGIndex&) = default;
    friend auto operator<=>(const LGIndex& a, const LGIndex& b) {
        if (auto c = a.l <=> b.l; c != 0) return c;
        return a.r <=> b.r;
    }
};

// |l| <= N and 0 <= r <= N, ordered by l then r.
class ModeBasis {
public:
    explicit ModeBasis(int cutoff) : n_(cutoff) {
        if (cutoff < 0) throw InvalidArgument("ModeBasis: negative cutoff");
        for (int l = -cutoff; l <= cutoff; ++l)
            for (int r = 0; r <= cutoff; ++r) modes_.push_back({r, l});
    }

    int cutoff() const { return n_; }
    int size() const { return static_cast<int>(modes_.size()); }
    const LGIndex& operator[](int i) const { return modes_[static_cast<std::size_t>(i)]; }
    const std::vector<LGIndex>& modes() const { return modes_; }

    std::optional<int> index_of(const LGIndex& m) const {
        if (m.r < 0 || m.r > n_ || std::abs(m.l) > n_) return std::nullopt;
        return (m.l + n_) * (n_ + 1) + m.r;
    }

private:
    int n_;
    std::vector<LGIndex> modes_;
};

inline constexpr int kMaxCoeffIndex = 16;
inline constexpr int kMaxAmplitudeIndex = 8;

// W_{m,n}(K) = sum_j c_j (K^2 a/8)^{j/2} e^{-K^2 a/8} e^{i(l_m - l_n) phi}, a = (1+t^2) w0^2.
struct CoeffSlice {
    LGIndex m;
    LGIndex n;
    double t = 0.0;
    std::vector<cplx> c;

    cplx operator[](int j) const {
        return j >= 0 && j < static_cast<int>(c.size()) ? c[static_cast<std::size_t>(j)] : cplx{};
    }
    int max_j() const { return static_cast<int>(c.size()) - 1; }
};

inline CoeffSlice c_coefficients(const LGIndex& m, const LGIndex& n, double t) {
    for (const auto& x : {m, n})
        if (x.r < 0 || x.r > kMaxCoeffIndex || std::abs(x.l) > kMaxCoeffIndex)
            throw InvalidArgument("c_coefficients: index above truncation guard");
    using math::TruncatedBivariateSeries;
    using Series = TruncatedBivariateSeries;

    const int rm = m.r, rn = n.r;
    const int am = std::abs(m.l), an = std::abs(n.l);
    const cplx I{0.0, 1.0};
    const cplx b = (1.0 + I * t) / (1.0 - I * t);
    const double psi = std::atan(t);

    Series A = Series::identity(rm, rn);
    if (rm >= 1) A(1, 0) = -b;
    Series B = Series::identity(rm, rn);
    if (rn >= 1) B(0, 1) = -1.0 / b;
    Series D = Series::identity(rm, rn);
    if (rm >= 1 && rn >= 1) D(1, 1) = -1.0;
    const Series Dinv = math::series_inverse(D);
    Series Z = A * B * Dinv;
    Z(0, 0) -= 1.0;

    const int pmax = rm + rn;
    std::vector<Series> Zp{Series::identity(rm, rn)};
    for (int p = 1; p <= pmax; ++p) Zp.push_back(Zp.back() * Z);

    const auto corner = [&](const Series& x, const Series& y) {
        cplx s{};
        for (int i = 0; i <= rm; ++i)
            for (int j = 0; j <= rn; ++j) s += x(i, j) * y(rm - i, rn - j);
        return s;
    };

    CoeffSlice out{m, n, t, std::vector<cplx>(static_cast<std::size_t>(am + an + 2 * pmax + 1))};
    const cplx pref = std::pow(I, am + an) *
                      std::sqrt(math::factorial(rm) * math::factorial(rn) /
                                (math::factorial(rm + am) * math::factorial(rn + an))) *
                      std::exp(I * static_cast<double>(am - an) * psi);
    // s runs over common powers of p (or q): only when l_m and l_n share a sign.
    const int smax = (am + an - std::abs(m.l - n.l)) / 2;
    for (int s = 0; s <= smax; ++s) {
        const double cs = math::factorial(am) * math::factorial(an) /
                          (math::factorial(s) * math::factorial(am - s) * math::factorial(an - s));
        // the exponent of (1 - b d_m) follows |l_n| and that of (1 - d_n/b) follows |l_m|
        const Series base = math::series_pow(A, an - s) * math::series_pow(B, am - s) *
                            math::series_pow(Dinv, am + an - s + 1);
        for (int p = 0; p <= pmax; ++p) {
            const double sign = ((s + p) % 2 == 0) ? 1.0 : -1.0;
            const int j = am + an - 2 * s + 2 * p;
            out.c[static_cast<std::size_t>(j)] +=
                pref * sign * cs / math::factorial(p) * corner(base, Zp[static_cast<std::size_t>(p)]);
        }
    }
    return out;
}

struct BeamParams {
    double waist;
    double wavelength;

    double rayleigh_range() const { return std::numbers::pi * waist * waist / wavelength; }
    double t(double z) const { return z / rayleigh_range(); }
};

inline cplx overlap_from_slice(const CoeffSlice& s, double K, double phi, double a) {
    const double kappa = K * K * a / 8.0;
    cplx sum{};
    double pw = 1.0;
    const double sk = std::sqrt(kappa);
    for (int j = 0; j <= s.max_j(); ++j) {
        sum += s.c[static_cast<std::size_t>(j)] * pw;
        pw *= sk;
    }
    return sum * std::exp(-kappa) * std::exp(cplx{0.0, (s.m.l - s.n.l) * phi});
}

// Modal correlation W_{m,n}(K, phi) at distance z, from the c-coefficient expansion.
inline cplx overlap_W(const LGIndex& m, const LGIndex& n, double K, double phi, double z,
                      const BeamParams& beam) {
    const double t = beam.t(z);
    return overlap_from_slice(c_coefficients(m, n, t), K, phi, (1.0 + t * t) * beam.waist * beam.waist);
}

// Momentum-space LG amplitude G(K, phi) at t = z/z_R, normalized to
// integral |G|^2 d^2K / 4 pi^2 = 1.
inline cplx lg_momentum_amplitude(const LGIndex& idx, double K, double phi, double t, double w0) {
    if (idx.r < 0 || idx.r > kMaxAmplitudeIndex || std::abs(idx.l) > kMaxAmplitudeIndex)
        throw InvalidArgument("lg_momentum_amplitude: index above oracle guard");
    using Series = math::TruncatedBivariateSeries;
    const int r = idx.r, al = std::abs(idx.l);
    const cplx I{0.0, 1.0};

    Series one_plus_d = Series::identity(r, 0);
    if (r >= 1) one_plus_d(1, 0) = 1.0;
    const Series inv = math::series_inverse(one_plus_d);
    Series omega = Series::constant(r, 0, 1.0 - I * t);
    if (r >= 1) omega(1, 0) = -(1.0 + I * t);
    const double kappa0 = w0 * w0 * K * K / 4.0;
    const Series gen = math::series_pow(inv, 1 + al) * math::series_exp(-kappa0 * (omega * inv));

    const double norm = std::sqrt(math::factorial(r) * std::pow(2.0, al + 1) /
                                  (std::numbers::pi * math::factorial(r + al)));
    return norm * w0 * std::numbers::pi * std::pow(I * w0 * K / 2.0, al) *
           std::exp(I * static_cast<double>(idx.l) * phi) * gen(r, 0);
}

namespace detail {

// 2D Gauss-Hermite rule for integrals over K against e^{-w0^2 |K - center|^2 / 2}.
struct PlaneRule {
    std::vector<double> kx, ky, w;
};

inline PlaneRule plane_rule(int order, double w0, double cx, double cy) {
    const auto gh = math::gauss_hermite_rule(order);
    PlaneRule pr;
    const double scale = std::sqrt(2.0) / w0;
    for (std::size_t i = 0; i < gh.size(); ++i)
        for (std::size_t j = 0; j < gh.size(); ++j) {
            const double x = gh.nodes[i], y = gh.nodes[j];
            pr.kx.push_back(cx + scale * x);
            pr.ky.push_back(cy + scale * y);
            // d^2K / 4 pi^2 with the Gaussian weight divided back out
            pr.w.push_back(gh.weights[i] * gh.weights[j] * std::exp(x * x + y * y) * scale * scale /
                           (4.0 * std::numbers::pi * std::numbers::pi));
        }
    return pr;
}

}  // namespace detail

// Oracle path: W_{m,n}(K) = integral G_m(K1) conj(G_n(K1 - K)) d^2K1 / 4 pi^2.
inline cplx overlap_W_numeric(const LGIndex& m, const LGIndex& n, double K, double phi, double z,
                              const BeamParams& beam, int order = 48) {
    const double t = beam.t(z), w0 = beam.waist;
    const double kx = K * std::cos(phi), ky = K * std::sin(phi);
    const auto pr = detail::plane_rule(order, w0, kx / 2.0, ky / 2.0);
    cplx sum{};
    for (std::size_t i = 0; i < pr.w.size(); ++i) {
        const double x1 = pr.kx[i], y1 = pr.ky[i];
        const double x2 = x1 - kx, y2 = y1 - ky;
        sum += pr.w[i] * lg_momentum_amplitude(m, std::hypot(x1, y1), std::atan2(y1, x1), t, w0) *
               std::conj(lg_momentum_amplitude(n, std::hypot(x2, y2), std::atan2(y2, x2), t, w0));
    }
    if (!std::isfinite(sum.real()) || !std::isfinite(sum.imag()))
        throw NumericalError("overlap_W_numeric: non-finite quadrature result");
    return sum;
}

// Free-propagation coupling between LG modes at the waist plane.
inline cplx free_prop_S(const LGIndex& m, const LGIndex& n, double z_r) {
    if (m.l != n.l) return {};
    const double al = std::abs(m.l);
    if (m.r == n.r) return {0.0, (1.0 + al + 2.0 * m.r) / (2.0 * z_r)};
    if (std::abs(m.r - n.r) == 1) {
        const double r = std::min(m.r, n.r);
        return {0.0, std::sqrt((1.0 + al + r) * (1.0 + r)) / (2.0 * z_r)};
    }
    return {};
}

// (i / 2k) integral |K|^2 G_m conj(G_n) d^2K / 4 pi^2 at z = 0.
inline cplx free_prop_S_numeric(const LGIndex& m, const LGIndex& n, const BeamParams& beam,
                                int order = 40) {
    const double k = 2.0 * std::numbers::pi / beam.wavelength;
    const auto pr = detail::plane_rule(order, beam.waist, 0.0, 0.0);
    cplx sum{};
    for (std::size_t i = 0; i < pr.w.size(); ++i) {
        const double K = std::hypot(pr.kx[i], pr.ky[i]), phi = std::atan2(pr.ky[i], pr.kx[i]);
        sum += pr.w[i] * K * K * lg_momentum_amplitude(m, K, phi, 0.0, beam.waist) *
               std::conj(lg_momentum_amplitude(n, K, phi, 0.0, beam.waist));
    }
    return cplx{0.0, 1.0} / (2.0 * k) * sum;
}

// Evaluation point of a coupling tensor: distance, local cn2, waist and the
// wavelengths carried by the first (m, u) and second (n, v) index pairs.
struct ChannelPoint {
    double z = 0.0;
    double cn2 = 0.0;
    double waist = 0.1457;
    SpectralPoint spectral = SpectralPoint::single(3.95e-6);

    double t1() const { return z * spectral.lambda1 / (std::numbers::pi * waist * waist); }
    double t2() const { return z * spectral.lambda2 / (std::numbers::pi * waist * waist); }
    double strength() const { return l_general(z, cn2, spectral, waist); }
};

// gamma_J = 2^{-J/2} Gamma(J/2 - 5/6)
inline const std::vector<double>& gamma_weights() {
    static const std::vector<double> g = [] {
        std::vector<double> v;
        for (int J = 0; J <= 100; ++J) v.push_back(std::pow(2.0, -0.5 * J) * math::gamma_fn(0.5 * J - 5.0 / 6.0));
        return v;
    }();
    return g;
}

// sum_{j1, j2} gamma_{j1+j2} (s1_j1 f1^j1) conj(s2_j2 f2^j2)
inline cplx gamma_contraction(const CoeffSlice& s1, const CoeffSlice& s2, double f1 = 1.0,
                              double f2 = 1.0) {
    const auto& g = gamma_weights();
    cplx sum{};
    double p1 = 1.0;
    for (int j1 = 0; j1 <= s1.max_j(); ++j1, p1 *= f1) {
        const cplx a = s1.c[static_cast<std::size_t>(j1)];
        if (a == cplx{}) continue;
        double p2 = 1.0;
        for (int j2 = 0; j2 <= s2.max_j(); ++j2, p2 *= f2) {
            const cplx b = s2.c[static_cast<std::size_t>(j2)];
            if (b == cplx{}) continue;
            sum += g[static_cast<std::size_t>(j1 + j2)] * a * p1 * std::conj(b) * p2;
        }
    }
    return sum;
}

// Per-frequency scale factors (a_i / a_bar)^{1/2} of the cross-frequency sum.
inline std::pair<double, double> cross_scales(double t1, double t2) {
    const double a1 = 1.0 + t1 * t1, a2 = 1.0 + t2 * t2, abar = 0.5 * (a1 + a2);
    return {std::sqrt(a1 / abar), std::sqrt(a2 / abar)};
}

enum class LtTerm { Subtracted, Included };

// L_{m,n,u,v} in the kappa_0 -> 0 limit. With LtTerm::Included the
// delta_{mu} delta_{nv} L_T term is added, which needs the outer scale.
inline cplx coupling_L(const LGIndex& m, const LGIndex& n, const LGIndex& u, const LGIndex& v,
                       const ChannelPoint& pt, LtTerm lt = LtTerm::Subtracted,
                       std::optional<SpectrumParams> sp = std::nullopt) {
    cplx value{};
    if (m.l - u.l == n.l - v.l && pt.cn2 != 0.0) {
        const double t1 = pt.t1(), t2 = pt.t2();
        const auto [f1, f2] = cross_scales(t1, t2);
        value = kCouplingPrefactor * pt.strength() *
                gamma_contraction(c_coefficients(m, u, t1), c_coefficients(n, v, t2), f1, f2);
    }
    if (lt == LtTerm::Included && m == u && n == v) {
        if (!sp) throw InvalidArgument("coupling_L: L_T requested without spectrum parameters");
        value += big_l_t(pt.spectral.lambda1, pt.spectral.lambda2, pt.cn2, *sp);
    }
    return value;
}

struct OracleResult {
    cplx reduced;  // L minus delta delta L_T
    double l_t;

    cplx full(bool diagonal) const { return diagonal ? reduced + l_t : reduced; }
};

// Defining integral k1 k2 int Phi(K) W_{m,u}(K; t1) conj(W_{n,v}(K; t2)) d^2K / 4 pi^2 at finite kappa_0.
// Radial part by the trapezoid rule in log K; angular part by an equispaced rule.
inline OracleResult coupling_L_numeric_oracle(const LGIndex& m, const LGIndex& n, const LGIndex& u,
                                              const LGIndex& v, const ChannelPoint& pt,
                                              const SpectrumParams& sp, double step = 0.02,
                                              int angles = 32) {
    sp.validate();
    if (sp.kappa0 * pt.waist > 1e-3)
        throw InvalidArgument("coupling_L_numeric_oracle: kappa0 * w0 must be <= 1e-3");
    const double t1 = pt.t1(), t2 = pt.t2();
    const double w0 = pt.waist;
    const double a1 = (1.0 + t1 * t1) * w0 * w0, a2 = (1.0 + t2 * t2) * w0 * w0;
    const auto s1 = c_coefficients(m, u, t1);
    const auto s2 = c_coefficients(n, v, t2);
    const bool dd = (m == u && n == v);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double k1k2 = two_pi * two_pi / (pt.spectral.lambda1 * pt.spectral.lambda2);

    const double s_lo = std::log(sp.kappa0) - 12.0;
    const double s_hi = std::log(1.0 / w0) + 25.0;
    const int n_steps = static_cast<int>(std::ceil((s_hi - s_lo) / step));
    const double h = (s_hi - s_lo) / n_steps;
    // the angular factor separates: average e^{i(dl1 - dl2) phi} once
    const int dl = (m.l - u.l) - (n.l - v.l);
    cplx ang_avg{};
    for (int a = 0; a < angles; ++a) ang_avg += std::exp(cplx{0.0, dl * two_pi * a / angles});
    ang_avg /= static_cast<double>(angles);
    cplx acc{};
    double acc_lt = 0.0;
    for (int i = 0; i <= n_steps; ++i) {
        const double K = std::exp(s_lo + i * h);
        const double phi_psd = vonkarman_psd(K, pt.cn2, sp);
        cplx ang = overlap_from_slice(s1, K, 0.0, a1) * std::conj(overlap_from_slice(s2, K, 0.0, a2)) * ang_avg;
        if (dd) ang -= 1.0;
        const double wgt = (i == 0 || i == n_steps) ? 0.5 * h : h;
        // d^2K / 4 pi^2 = K dK dphi / 4 pi^2 and dK = K ds
        acc += wgt * K * K / two_pi * phi_psd * ang;
        acc_lt += wgt * K * K / two_pi * phi_psd;
    }
    if (!std::isfinite(acc.real()) || !std::isfinite(acc.imag()))
        throw NumericalError("coupling_L_numeric_oracle: non-finite result");
    return {k1k2 * acc, k1k2 * acc_lt};
}

struct CouplingEntry {
    int m, n, u, v;
    cplx value;
};

// Sparse L_{m,n,u,v} over a basis, stored without the delta delta L_T term.
class CouplingTensor {
public:
    CouplingTensor(ModeBasis basis, ChannelPoint point, std::optional<double> l_t,
                   std::vector<CouplingEntry> entries)
        : basis_(std::move(basis)), point_(point), l_t_(l_t), entries_(std::move(entries)) {
        std::sort(entries_.begin(), entries_.end(),
                  [this](const CouplingEntry& a, const CouplingEntry& b) { return key(a) < key(b); });
    }

    const ModeBasis& basis() const { return basis_; }
    const ChannelPoint& point() const { return point_; }
    std::optional<double> l_t() const { return l_t_; }
    const std::vector<CouplingEntry>& entries() const { return entries_; }

    cplx reduced(int m, int n, int u, int v) const {
        const CouplingEntry probe{m, n, u, v, {}};
        const auto it = std::lower_bound(
            entries_.begin(), entries_.end(), probe,
            [this](const CouplingEntry& a, const CouplingEntry& b) { return key(a) < key(b); });
        if (it != entries_.end() && key(*it) == key(probe)) return it->value;
        return {};
    }

    cplx full(int m, int n, int u, int v) const {
        cplx x = reduced(m, n, u, v);
        if (m == u && n == v) {
            if (!l_t_) throw InvalidArgument("CouplingTensor: L_T not available without outer scale");
            x += *l_t_;
        }
        return x;
    }

private:
    std::uint64_t key(const CouplingEntry& e) const {
        const std::uint64_t B = static_cast<std::uint64_t>(basis_.size());
        return ((static_cast<std::uint64_t>(e.m) * B + e.n) * B + e.u) * B + e.v;
    }

    ModeBasis basis_;
    ChannelPoint point_;
    std::optional<double> l_t_;
    std::vector<CouplingEntry> entries_;
};

// Coefficient slices for every ordered pair of basis modes at one t.
class CoeffTable {
public:
    CoeffTable(const ModeBasis& basis, double t) : size_(basis.size()), t_(t) {
        slices_.reserve(static_cast<std::size_t>(size_ * size_));
        for (int a = 0; a < size_; ++a)
            for (int b = 0; b < size_; ++b) slices_.push_back(c_coefficients(basis[a], basis[b], t));
    }

    const CoeffSlice& operator()(int a, int b) const {
        return slices_[static_cast<std::size_t>(a * size_ + b)];
    }
    double t() const { return t_; }

private:
    int size_;
    double t_;
    std::vector<CoeffSlice> slices_;
};

// Index pairs (a, b) grouped by l_a - l_b.
inline std::vector<std::vector<std::pair<int, int>>> pairs_by_delta_l(const ModeBasis& basis) {
    const int N = basis.cutoff();
    std::vector<std::vector<std::pair<int, int>>> groups(static_cast<std::size_t>(4 * N + 1));
    for (int a = 0; a < basis.size(); ++a)
        for (int b = 0; b < basis.size(); ++b)
            groups[static_cast<std::size_t>(basis[a].l - basis[b].l + 2 * N)].emplace_back(a, b);
    return groups;
}

inline CouplingTensor assemble_coupling_tensor(const ModeBasis& basis, const ChannelPoint& pt,
                                               std::optional<SpectrumParams> sp = std::nullopt) {
    std::optional<double> lt;
    if (sp) lt = big_l_t(pt.spectral.lambda1, pt.spectral.lambda2, pt.cn2, *sp);
    std::vector<CouplingEntry> entries;
    if (pt.cn2 == 0.0) return CouplingTensor(basis, pt, lt, std::move(entries));

    const double t1 = pt.t1(), t2 = pt.t2();
    const auto [f1, f2] = cross_scales(t1, t2);
    const CoeffTable c1(basis, t1);
    const std::optional<CoeffTable> c2 =
        pt.spectral.degenerate() ? std::nullopt : std::optional<CoeffTable>(CoeffTable(basis, t2));
    const CoeffTable& second = c2 ? *c2 : c1;
    const double scale = kCouplingPrefactor * pt.strength();

    for (const auto& group : pairs_by_delta_l(basis))
        for (const auto& [m, u] : group)
            for (const auto& [n, v] : group)
                entries.push_back({m, n, u, v, scale * gamma_contraction(c1(m, u), second(n, v), f1, f2)});
    return CouplingTensor(basis, pt, lt, std::move(entries));
}

}  // namespace turbulink

#endif
