#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// Tabulated profile of the unit n-catenoid, the surface of revolution
/// (phi(s) theta, psi(s)) with
///   (d phi)^2 + phi^{4-2n} = phi^2,  phi(0) = 1,
///   d psi = phi^{2-n},               psi(0) = 0.
/// The profile is solved on [0, s_max]; phi is even, psi odd.
class CatenoidProfile {
public:
    CatenoidProfile(int n, Real s_max, Real tol, Real step = 2.5e-4)
        : n_(n), s_max_(s_max) {
        if (n < 2) throw ValidationError("CatenoidProfile: need n >= 2");
        if (s_max < 5.0) throw ValidationError("CatenoidProfile: need s_max >= 5");
        if (step <= 0.0 || step > 1e-3)
            throw ValidationError("CatenoidProfile: step must be in (0, 1e-3]");
        const auto steps = static_cast<std::size_t>(std::ceil(s_max / step));
        h_ = s_max / static_cast<Real>(steps);
        integrate(steps);
        c_inf_ = psi_.values().back() + tail_integral(s_max_);
        const Real tail_err = tail_error_bound(s_max_);
        if (tail_err > tol)
            throw NumericalError("CatenoidProfile: tail extrapolation error above tolerance");
        c_inf_error_ = tail_err;
    }

    int n() const { return n_; }
    Real s_max() const { return s_max_; }
    Real step() const { return h_; }
    Real c_inf() const { return c_inf_; }
    Real c_inf_error() const { return c_inf_error_; }
    const HermiteTable& phi_table() const { return phi_; }

    Real phi(Real s) const { return phi_(std::abs(s)); }
    Real dphi(Real s) const { return sign(s) * dphi_(std::abs(s)); }
    Real ddphi(Real s) const { const Real p = phi(s); return p + (n_ - 2) * std::pow(p, 3 - 2 * n_); }
    Real psi(Real s) const { return sign(s) * psi_(std::abs(s)); }
    Real dpsi(Real s) const { return std::pow(phi(s), 2 - n_); }

    /// Energy defect (d phi)^2 + phi^{4-2n} - phi^2, zero for the exact profile.
    Real energy_defect(Real s) const {
        const Real p = phi(s), dp = dphi(s);
        return dp * dp + std::pow(p, 4 - 2 * n_) - p * p;
    }

    std::vector<Real> grid() const {
        return linspace(0.0, s_max_, phi_.size());
    }

private:
    static Real sign(Real s) { return s < 0.0 ? -1.0 : 1.0; }

    void integrate(std::size_t steps) {
        std::vector<Real> phi(steps + 1), dphi(steps + 1), psi(steps + 1), dpsi(steps + 1);
        Real p = 1.0, q = 0.0, ps = 0.0;  // phi, dphi, psi
        const auto acc = [this](Real phi_val) {
            return phi_val + (n_ - 2) * std::pow(phi_val, 3 - 2 * n_);
        };
        phi[0] = p; dphi[0] = q; psi[0] = ps; dpsi[0] = 1.0;
        for (std::size_t i = 0; i < steps; ++i) {
            // classical RK4 on (phi, dphi, psi)
            const Real k1p = q, k1q = acc(p), k1s = std::pow(p, 2 - n_);
            const Real p2 = p + 0.5 * h_ * k1p, q2 = q + 0.5 * h_ * k1q;
            const Real k2p = q2, k2q = acc(p2), k2s = std::pow(p2, 2 - n_);
            const Real p3 = p + 0.5 * h_ * k2p, q3 = q + 0.5 * h_ * k2q;
            const Real k3p = q3, k3q = acc(p3), k3s = std::pow(p3, 2 - n_);
            const Real p4 = p + h_ * k3p, q4 = q + h_ * k3q;
            const Real k4p = q4, k4q = acc(p4), k4s = std::pow(p4, 2 - n_);
            p += h_ / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
            q += h_ / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q);
            ps += h_ / 6.0 * (k1s + 2 * k2s + 2 * k3s + k4s);
            phi[i + 1] = p; dphi[i + 1] = q; psi[i + 1] = ps;
            dpsi[i + 1] = std::pow(p, 2 - n_);
        }
        std::vector<Real> ddphi(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i) ddphi[i] = acc(phi[i]);
        phi_ = HermiteTable(0.0, h_, phi, dphi);
        dphi_ = HermiteTable(0.0, h_, dphi, ddphi);
        psi_ = HermiteTable(0.0, h_, psi, dpsi);
    }

    /// Analytic tail of int phi^{2-n} beyond s, from the large-s expansion
    /// phi^{2-n} = 2^{(n-2)/(n-1)} e^{-(n-2)s} (1 + e^{-2(n-1)s})^{-(n-2)/(n-1)}.
    Real tail_integral(Real s) const {
        const Real q = static_cast<Real>(n_ - 2) / (n_ - 1);
        const Real c2 = std::pow(2.0, q);
        const Real a1 = std::exp(-(n_ - 2) * s) / (n_ - 2);
        const Real a2 = -q * std::exp(-(3 * n_ - 4) * s) / (3 * n_ - 4);
        const Real a3 = 0.5 * q * (q + 1) * std::exp(-(5 * n_ - 6) * s) / (5 * n_ - 6);
        return c2 * (a1 + a2 + a3);
    }

    Real tail_error_bound(Real s) const {
        const Real q = static_cast<Real>(n_ - 2) / (n_ - 1);
        return std::pow(2.0, q) * std::exp(-(7 * n_ - 8) * s);
    }

    int n_;
    Real s_max_, h_ = 0.0, c_inf_ = 0.0, c_inf_error_ = 0.0;
    HermiteTable phi_, dphi_, psi_;
};

inline CatenoidProfile solve_profile(int n, Real s_max, Real tol, Real step = 2.5e-4) {
    return CatenoidProfile(n, s_max, tol, step);
}

/// X_0(s, theta) = (phi theta, psi) in R^{n+1}.
inline Eigen::VectorXd immersion_point(const CatenoidProfile& p, Real s, const Eigen::VectorXd& theta) {
    const int n = p.n();
    if (theta.size() != n) throw ValidationError("immersion_point: theta must lie in R^n");
    Eigen::VectorXd x(n + 1);
    x.head(n) = p.phi(s) * theta;
    x(n) = p.psi(s);
    return x;
}

/// N_0 = phi^{-1} (dpsi theta, -dphi); unit by the profile identity.
inline Eigen::VectorXd unit_normal(const CatenoidProfile& p, Real s, const Eigen::VectorXd& theta) {
    const int n = p.n();
    if (theta.size() != n) throw ValidationError("unit_normal: theta must lie in R^n");
    Eigen::VectorXd nv(n + 1);
    nv.head(n) = std::pow(p.phi(s), 1 - n) * theta;
    nv(n) = -p.dphi(s) / p.phi(s);
    return nv;
}

struct EndExpansionFit {
    Real c_inf = 0.0;
    Real a = 0.0;               // coefficient of r^{2-n}
    Real decay_exponent = 0.0;  // empirical exponent of the remainder
};

/// Fit of the upper-end graph u(r) = psi to c_inf - a r^{2-n}; the remainder
/// exponent is estimated from a log-log fit on a mid-range window.
inline EndExpansionFit end_expansion_check(const CatenoidProfile& p) {
    const int n = p.n();
    if (p.phi(p.s_max()) < 10.0)
        throw ValidationError("end_expansion_check: profile range too short, need phi >= 10");
    EndExpansionFit fit;
    fit.c_inf = p.c_inf();

    // a from the limit of (c_inf - u) r^{n-2}: intercept of a linear fit in r^{2-2n}.
    const Real r_hi = p.phi(p.s_max());
    const Real r_lo = std::max(10.0, 0.3 * r_hi);
    std::vector<Real> xs, ys;
    for (int k = 0; k < 24; ++k) {
        const Real r = r_lo * std::pow(r_hi / r_lo, k / 23.0);
        const Real s = bisect([&](Real t) { return p.phi(t) - r; }, 0.0, p.s_max(), 1e-13);
        xs.push_back(std::pow(r, 2 - 2 * n));
        ys.push_back((p.c_inf() - p.psi(s)) * std::pow(r, n - 2));
    }
    fit.a = fit_line(xs, ys).first;

    std::vector<Real> lr, lrem;
    const Real m_lo = 5.0, m_hi = std::min(20.0, 0.5 * r_hi);
    for (int k = 0; k < 16; ++k) {
        const Real r = m_lo * std::pow(m_hi / m_lo, k / 15.0);
        const Real s = bisect([&](Real t) { return p.phi(t) - r; }, 0.0, p.s_max(), 1e-13);
        const Real rem = p.c_inf() - p.psi(s) - fit.a * std::pow(r, 2 - n);
        if (std::abs(rem) > 1e-14) {
            lr.push_back(std::log(r));
            lrem.push_back(std::log(std::abs(rem)));
        }
    }
    if (lr.size() < 4) throw NumericalError("end_expansion_check: remainder below resolution");
    fit.decay_exponent = fit_line(lr, lrem).second;
    return fit;
}

/// s_eps > 0 with eps * phi(s_eps) = rho, by monotone root finding.
inline Real neck_truncation(Real eps, Real rho, const CatenoidProfile& p) {
    if (!(eps > 0.0) || !(eps < rho))
        throw ValidationError("neck_truncation: need 0 < eps < rho");
    const Real target = rho / eps;
    if (target > p.phi(p.s_max()))
        throw ValidationError("neck_truncation: profile range too short for rho/eps");
    if (target <= 1.0) return 0.0;
    Real s = bisect([&](Real t) { return p.phi(t) - target; }, 0.0, p.s_max(), 1e-14);
    // One Newton polish on the tabulated profile.
    s -= (p.phi(s) - target) / p.dphi(s);
    return s;
}

}  // namespace scherk
