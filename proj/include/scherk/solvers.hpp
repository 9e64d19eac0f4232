#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// Solves a tridiagonal system in place (Thomas algorithm).
/// lower[0] and upper[n-1] are ignored.
inline std::vector<Real> solve_tridiagonal(std::vector<Real> lower, std::vector<Real> diag,
                                           std::vector<Real> upper, std::vector<Real> rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n || n == 0)
        throw ValidationError("solve_tridiagonal: inconsistent sizes");
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(diag[i - 1]) < 1e-300)
            throw NumericalError("solve_tridiagonal: zero pivot");
        const Real w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (std::abs(diag[n - 1]) < 1e-300)
        throw NumericalError("solve_tridiagonal: zero pivot");
    std::vector<Real> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

struct IterativeStats {
    int iterations = 0;
    Real residual = 0.0;
    bool converged = false;
};

/// Preconditioned BiCGStab for a matrix-free linear operator.
/// `apply` computes y = A x, `precondition` approximates y = M^{-1} x
/// (pass identity if unavailable). Tolerance is relative to ||b||.
inline IterativeStats bicgstab(const std::function<void(const std::vector<Real>&, std::vector<Real>&)>& apply,
                               const std::function<void(const std::vector<Real>&, std::vector<Real>&)>& precondition,
                               const std::vector<Real>& b, std::vector<Real>& x,
                               Real rel_tol, int max_iter) {
    const std::size_t n = b.size();
    auto dot = [n](const std::vector<Real>& u, const std::vector<Real>& v) {
        Real s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += u[i] * v[i];
        return s;
    };
    auto nrm = [&](const std::vector<Real>& u) { return std::sqrt(dot(u, u)); };

    IterativeStats st;
    const Real bnorm = nrm(b);
    if (bnorm == 0.0) { x.assign(n, 0.0); st.converged = true; return st; }
    if (x.size() != n) x.assign(n, 0.0);

    std::vector<Real> r(n), r0(n), p(n, 0.0), v(n, 0.0), s(n), t(n), phat(n), shat(n);
    apply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    r0 = r;
    Real rho = 1.0, alpha = 1.0, omega = 1.0;

    for (st.iterations = 1; st.iterations <= max_iter; ++st.iterations) {
        const Real rho1 = dot(r0, r);
        if (std::abs(rho1) < 1e-300) break;
        if (st.iterations == 1) {
            p = r;
        } else {
            const Real beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        precondition(p, phat);
        apply(phat, v);
        alpha = rho / dot(r0, v);
        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        if (nrm(s) < rel_tol * bnorm) {
            for (std::size_t i = 0; i < n; ++i) x[i] += alpha * phat[i];
            st.residual = nrm(s) / bnorm;
            st.converged = true;
            return st;
        }
        precondition(s, shat);
        apply(shat, t);
        const Real tt = dot(t, t);
        if (tt < 1e-300) break;
        omega = dot(t, s) / tt;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        st.residual = nrm(r) / bnorm;
        if (st.residual < rel_tol) { st.converged = true; return st; }
        if (std::abs(omega) < 1e-300) break;
    }
    st.residual = nrm(r) / bnorm;
    return st;
}

}  // namespace scherk
