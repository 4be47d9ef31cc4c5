#ifndef TURBULINK_MATH_CORE_HPP
#define TURBULINK_MATH_CORE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace turbulink::math {

using cplx = std::complex<double>;

inline constexpr int kMaxHermiteOrder = 64;

// Physicists' Hermite polynomial H_n(x).
inline double hermite_poly(int n, double x) {
    if (n < 0 || n > kMaxHermiteOrder)
        throw InvalidArgument("hermite_poly: order " + std::to_string(n) + " outside [0, 64]");
    if (n == 0) return 1.0;
    double h0 = 1.0, h1 = 2.0 * x;
    for (int k = 1; k < n; ++k) {
        const double h2 = 2.0 * x * h1 - 2.0 * k * h0;
        h0 = h1;
        h1 = h2;
    }
    return h1;
}

// p_0..p_nmax at x, orthonormal under the weight e^{-x^2}:
// p_n = H_n / sqrt(2^n n! sqrt(pi)).
inline std::vector<double> hermite_orthonormal(int nmax, double x) {
    std::vector<double> p(static_cast<std::size_t>(nmax) + 1);
    p[0] = std::pow(std::numbers::pi, -0.25);
    if (nmax >= 1) p[1] = std::sqrt(2.0) * x * p[0];
    for (int n = 2; n <= nmax; ++n)
        p[n] = std::sqrt(2.0 / n) * x * p[n - 1] - std::sqrt((n - 1.0) / n) * p[n - 2];
    return p;
}

inline double gamma_fn(double x) {
    if (!std::isfinite(x) || std::abs(x) > 50.0)
        throw InvalidArgument("gamma_fn: |x| must be <= 50");
    if (x <= 0.0 && std::abs(x - std::round(x)) < 1e-9)
        throw InvalidArgument("gamma_fn: argument at a pole");
    return std::tgamma(x);
}

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
};

// Golub-Welsch on the Jacobi matrix, then Newton-polished nodes and
// Christoffel weights.
inline QuadratureRule gauss_hermite_rule(int order) {
    if (order < 2 || order > 128)
        throw InvalidArgument("gauss_hermite_rule: order must be in [2, 128]");
    const int n = order;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);

    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = es.eigenvalues()(i);
        for (int it = 0; it < 3; ++it) {
            const auto p = hermite_orthonormal(n, x);
            const double dp = std::sqrt(2.0 * n) * p[n - 1];
            x -= p[n] / dp;
        }
        const auto p = hermite_orthonormal(n - 1, x);
        double s = 0.0;
        for (double v : p) s += v * v;
        rule.nodes[i] = x;
        rule.weights[i] = 1.0 / s;
    }
    for (int i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

// Dense formal power series in two variables, truncated at (max_i, max_j).
class TruncatedBivariateSeries {
public:
    TruncatedBivariateSeries(int max_i, int max_j)
        : mi_(max_i), mj_(max_j), c_(static_cast<std::size_t>((max_i + 1) * (max_j + 1))) {
        if (max_i < 0 || max_j < 0)
            throw InvalidArgument("TruncatedBivariateSeries: negative truncation order");
    }

    static TruncatedBivariateSeries constant(int max_i, int max_j, cplx value) {
        TruncatedBivariateSeries s(max_i, max_j);
        s(0, 0) = value;
        return s;
    }
    static TruncatedBivariateSeries identity(int max_i, int max_j) {
        return constant(max_i, max_j, 1.0);
    }
    // c * x^i * y^j; silently zero beyond the truncation.
    static TruncatedBivariateSeries monomial(int max_i, int max_j, int i, int j, cplx c) {
        TruncatedBivariateSeries s(max_i, max_j);
        if (i <= max_i && j <= max_j) s(i, j) = c;
        return s;
    }

    int max_i() const { return mi_; }
    int max_j() const { return mj_; }

    cplx operator()(int i, int j) const { return c_[idx(i, j)]; }
    cplx& operator()(int i, int j) { return c_[idx(i, j)]; }

    cplx coefficient(int i, int j) const {
        if (i < 0 || j < 0 || i > mi_ || j > mj_)
            throw InvalidArgument("series_coefficient: index outside truncation range");
        return (*this)(i, j);
    }

    bool compatible(const TruncatedBivariateSeries& o) const {
        return mi_ == o.mi_ && mj_ == o.mj_;
    }

    TruncatedBivariateSeries& operator+=(const TruncatedBivariateSeries& o) {
        check(o);
        for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
        return *this;
    }
    TruncatedBivariateSeries& operator-=(const TruncatedBivariateSeries& o) {
        check(o);
        for (std::size_t k = 0; k < c_.size(); ++k) c_[k] -= o.c_[k];
        return *this;
    }
    TruncatedBivariateSeries& operator*=(cplx s) {
        for (auto& v : c_) v *= s;
        return *this;
    }

    friend TruncatedBivariateSeries operator+(TruncatedBivariateSeries a,
                                              const TruncatedBivariateSeries& b) {
        return a += b;
    }
    friend TruncatedBivariateSeries operator-(TruncatedBivariateSeries a,
                                              const TruncatedBivariateSeries& b) {
        return a -= b;
    }
    friend TruncatedBivariateSeries operator*(TruncatedBivariateSeries a, cplx s) { return a *= s; }
    friend TruncatedBivariateSeries operator*(cplx s, TruncatedBivariateSeries a) { return a *= s; }

    friend TruncatedBivariateSeries operator*(const TruncatedBivariateSeries& a,
                                              const TruncatedBivariateSeries& b) {
        a.check(b);
        TruncatedBivariateSeries r(a.mi_, a.mj_);
        for (int i1 = 0; i1 <= a.mi_; ++i1)
            for (int j1 = 0; j1 <= a.mj_; ++j1) {
                const cplx av = a(i1, j1);
                if (av == cplx{}) continue;
                for (int i2 = 0; i1 + i2 <= a.mi_; ++i2)
                    for (int j2 = 0; j1 + j2 <= a.mj_; ++j2) r(i1 + i2, j1 + j2) += av * b(i2, j2);
            }
        return r;
    }

    friend bool operator==(const TruncatedBivariateSeries&, const TruncatedBivariateSeries&) = default;

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i * (mj_ + 1) + j); }
    void check(const TruncatedBivariateSeries& o) const {
        if (!compatible(o)) throw InvalidArgument("series truncation orders differ");
    }

    int mi_, mj_;
    std::vector<cplx> c_;
};

inline TruncatedBivariateSeries series_product(const TruncatedBivariateSeries& a,
                                               const TruncatedBivariateSeries& b) {
    return a * b;
}

inline cplx series_coefficient(const TruncatedBivariateSeries& a, int i, int j) {
    return a.coefficient(i, j);
}

inline TruncatedBivariateSeries series_inverse(const TruncatedBivariateSeries& a) {
    const cplx a0 = a(0, 0);
    if (a0 == cplx{}) throw InvalidArgument("series_inverse: zero constant term");
    TruncatedBivariateSeries r(a.max_i(), a.max_j());
    for (int i = 0; i <= a.max_i(); ++i)
        for (int j = 0; j <= a.max_j(); ++j) {
            cplx s = (i == 0 && j == 0) ? cplx{1.0} : cplx{};
            for (int i2 = 0; i2 <= i; ++i2)
                for (int j2 = 0; j2 <= j; ++j2) {
                    if (i2 == 0 && j2 == 0) continue;
                    s -= a(i2, j2) * r(i - i2, j - j2);
                }
            r(i, j) = s / a0;
        }
    return r;
}

inline TruncatedBivariateSeries series_pow(const TruncatedBivariateSeries& a, int k) {
    const TruncatedBivariateSeries base = k < 0 ? series_inverse(a) : a;
    TruncatedBivariateSeries r = TruncatedBivariateSeries::identity(a.max_i(), a.max_j());
    for (int n = 0; n < std::abs(k); ++n) r = r * base;
    return r;
}

inline TruncatedBivariateSeries series_exp(const TruncatedBivariateSeries& a) {
    TruncatedBivariateSeries nil = a;
    nil(0, 0) = 0.0;
    TruncatedBivariateSeries term = TruncatedBivariateSeries::identity(a.max_i(), a.max_j());
    TruncatedBivariateSeries sum = term;
    for (int k = 1; k <= a.max_i() + a.max_j(); ++k) {
        term = term * nil;
        term *= 1.0 / k;
        sum += term;
    }
    sum *= std::exp(a(0, 0));
    return sum;
}

}  // namespace turbulink::math

#endif
