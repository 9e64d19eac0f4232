#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace scherk {

using Real = double;

inline constexpr Real pi = 3.14159265358979323846264338327950288;

/// Invalid input, parameter out of range, violated precondition.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Iteration divergence, solver breakdown, loss of convergence.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Degenerate metric, non-manifold stitch, bad geometry.
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

inline Real sq(Real x) { return x * x; }

/// Volume of the unit k-sphere S^k (k-dimensional measure), 2*pi^((k+1)/2)/Gamma((k+1)/2).
inline Real sphere_volume(int k) {
    if (k < 0) throw ValidationError("sphere_volume: negative dimension");
    static const std::vector<Real> cached = [] {
        std::vector<Real> v;
        for (int j = 0; j <= 8; ++j)
            v.push_back(2.0 * std::pow(pi, 0.5 * (j + 1)) / std::tgamma(0.5 * (j + 1)));
        return v;
    }();
    if (k <= 8) return cached[static_cast<std::size_t>(k)];
    return 2.0 * std::pow(pi, 0.5 * (k + 1)) / std::tgamma(0.5 * (k + 1));
}

inline std::vector<Real> linspace(Real a, Real b, std::size_t n) {
    std::vector<Real> x(n);
    if (n == 1) { x[0] = a; return x; }
    const Real h = (b - a) / static_cast<Real>(n - 1);
    for (std::size_t i = 0; i < n; ++i) x[i] = a + h * static_cast<Real>(i);
    x.back() = b;
    return x;
}

struct QuadRule {
    std::vector<Real> nodes;
    std::vector<Real> weights;
};

/// Gauss-Legendre rule with n nodes on [a,b]. Nodes by Newton iteration on P_n.
inline QuadRule gauss_legendre(int n, Real a, Real b) {
    if (n < 1) throw ValidationError("gauss_legendre: need at least one node");
    QuadRule q;
    q.nodes.resize(static_cast<std::size_t>(n));
    q.weights.resize(static_cast<std::size_t>(n));
    const Real xm = 0.5 * (b + a), xl = 0.5 * (b - a);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        Real z = std::cos(pi * (i + 0.75) / (n + 0.5));
        Real pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            Real p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const Real p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = n * (z * p1 - p2) / (z * z - 1.0);
            const Real dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        q.nodes[static_cast<std::size_t>(i)] = xm - xl * z;
        q.nodes[static_cast<std::size_t>(n - 1 - i)] = xm + xl * z;
        const Real w = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        q.weights[static_cast<std::size_t>(i)] = w;
        q.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    return q;
}

/// Uniform-grid tabulated function with cubic Hermite evaluation.
/// Stores values and first derivatives at nodes; evaluation is C^1 and
/// fourth-order accurate for smooth data.
class HermiteTable {
public:
    HermiteTable() = default;
    HermiteTable(Real x0, Real h, std::vector<Real> values, std::vector<Real> derivs)
        : x0_(x0), h_(h), v_(std::move(values)), d_(std::move(derivs)) {
        if (v_.size() != d_.size() || v_.size() < 2)
            throw ValidationError("HermiteTable: inconsistent table sizes");
    }

    Real xmin() const { return x0_; }
    Real xmax() const { return x0_ + h_ * static_cast<Real>(v_.size() - 1); }
    Real step() const { return h_; }
    std::size_t size() const { return v_.size(); }
    const std::vector<Real>& values() const { return v_; }
    const std::vector<Real>& derivs() const { return d_; }

    Real operator()(Real x) const {
        const auto [i, t] = locate(x);
        const Real t2 = t * t, t3 = t2 * t;
        const Real h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
        const Real h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
        return h00 * v_[i] + h10 * h_ * d_[i] + h01 * v_[i + 1] + h11 * h_ * d_[i + 1];
    }

    Real deriv(Real x) const {
        const auto [i, t] = locate(x);
        const Real t2 = t * t;
        const Real g00 = (6 * t2 - 6 * t) / h_, g10 = 3 * t2 - 4 * t + 1;
        const Real g01 = (-6 * t2 + 6 * t) / h_, g11 = 3 * t2 - 2 * t;
        return g00 * v_[i] + g10 * d_[i] + g01 * v_[i + 1] + g11 * d_[i + 1];
    }

private:
    std::pair<std::size_t, Real> locate(Real x) const {
        const Real tol = 1e-9 * (1.0 + std::abs(x));
        if (x < x0_ - tol || x > xmax() + tol)
            throw ValidationError("HermiteTable: x out of tabulated range");
        Real s = (x - x0_) / h_;
        auto i = static_cast<std::ptrdiff_t>(std::floor(s));
        i = std::max<std::ptrdiff_t>(0, std::min<std::ptrdiff_t>(i, static_cast<std::ptrdiff_t>(v_.size()) - 2));
        return {static_cast<std::size_t>(i), s - static_cast<Real>(i)};
    }

    Real x0_ = 0.0, h_ = 1.0;
    std::vector<Real> v_, d_;
};

/// Bisection refined to tolerance; f(a) and f(b) must bracket a root.
inline Real bisect(const std::function<Real(Real)>& f, Real a, Real b, Real tol) {
    Real fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw NumericalError("bisect: no sign change in bracket");
    for (int it = 0; it < 200 && (b - a) > tol; ++it) {
        const Real c = 0.5 * (a + b);
        const Real fc = f(c);
        if (fc == 0.0) return c;
        if (fa * fc < 0.0) { b = c; fb = fc; } else { a = c; fa = fc; }
    }
    return 0.5 * (a + b);
}

namespace detail {
inline Real adaptive_simpson_rec(const std::function<Real(Real)>& f, Real a, Real b,
                                 Real fa, Real fm, Real fb, Real whole, Real tol, int depth) {
    const Real m = 0.5 * (a + b);
    const Real lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const Real flm = f(lm), frm = f(rm);
    const Real left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const Real right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const Real delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

inline Real adaptive_simpson(const std::function<Real(Real)>& f, Real a, Real b, Real tol) {
    const Real fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const Real whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

/// Least-squares fit y ~ c0 + c1*x. Returns {c0, c1}.
inline std::pair<Real, Real> fit_line(const std::vector<Real>& x, const std::vector<Real>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("fit_line: need at least two samples");
    Real sx = 0, sy = 0, sxx = 0, sxy = 0;
    const Real n = static_cast<Real>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
    }
    const Real denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) throw NumericalError("fit_line: degenerate abscissae");
    const Real c1 = (n * sxy - sx * sy) / denom;
    const Real c0 = (sy - c1 * sx) / n;
    return {c0, c1};
}

}  // namespace scherk
