#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "scherk/catenoid.hpp"
#include "scherk/common.hpp"
#include "scherk/mean_curvature.hpp"
#include "scherk/solvers.hpp"
#include "scherk/sphere_basis.hpp"

namespace scherk {

/// Invariant function on [-S, S] x S^{n-1} in mode representation: per-mode
/// real arrays w_j(s) on the uniform grid s_i = i h, i = 0..segments,
/// extended to negative s by parity (even for the construction; odd allowed
/// for diagnostics).
struct NeckField {
    const InvariantSphereBasis* basis = nullptr;
    Real h = 0.0;
    int segments = 0;
    bool even = true;
    Real delta = 0.0;
    Eigen::MatrixXd coeffs;  // (segments+1) x modes

    static NeckField zeros(const InvariantSphereBasis& b, Real S, Real target_h,
                           Real delta, bool even = true) {
        NeckField f;
        f.basis = &b;
        f.segments = std::max(24, static_cast<int>(std::ceil(S / target_h)));
        f.h = S / f.segments;
        f.even = even;
        f.delta = delta;
        f.coeffs = Eigen::MatrixXd::Zero(f.segments + 1, static_cast<Eigen::Index>(b.size()));
        return f;
    }

    Real S() const { return h * segments; }
    int nodes() const { return segments + 1; }
};

namespace detail {

/// Second difference of one mode array with a parity ghost at s=0 and a
/// one-sided second-order formula at s=S.
inline Eigen::VectorXd second_difference(const Eigen::VectorXd& w, Real h, bool even) {
    const Eigen::Index N = w.size() - 1;
    Eigen::VectorXd out(N + 1);
    const Real ghost = even ? w(1) : -w(1);
    out(0) = (ghost - 2.0 * w(0) + w(1)) / (h * h);
    for (Eigen::Index i = 1; i < N; ++i)
        out(i) = (w(i - 1) - 2.0 * w(i) + w(i + 1)) / (h * h);
    if (N >= 3)
        out(N) = (2.0 * w(N) - 5.0 * w(N - 1) + 4.0 * w(N - 2) - w(N - 3)) / (h * h);
    else
        out(N) = out(N - 1);
    return out;
}

inline Eigen::VectorXd first_difference(const Eigen::VectorXd& w, Real h, bool even) {
    const Eigen::Index N = w.size() - 1;
    Eigen::VectorXd out(N + 1);
    const Real ghost = even ? w(1) : -w(1);
    out(0) = (w(1) - ghost) / (2.0 * h);
    for (Eigen::Index i = 1; i < N; ++i) out(i) = (w(i + 1) - w(i - 1)) / (2.0 * h);
    if (N >= 2)
        out(N) = (3.0 * w(N) - 4.0 * w(N - 1) + w(N - 2)) / (2.0 * h);
    else
        out(N) = (w(N) - w(N - 1)) / h;
    return out;
}

inline Real potential(const CatenoidProfile& p, Real s) {
    const int n = p.n();
    return 0.25 * n * (3.0 * n - 2.0) * std::pow(p.phi(s), 2 - 2 * n);
}

}  // namespace detail

/// Conjugated Jacobi operator applied per mode:
/// (L w)_j = w_j'' - (lambda_j + ((n-2)/2)^2) w_j + (n(3n-2)/4) phi^{2-2n} w_j.
inline NeckField apply_L(const NeckField& w, const CatenoidProfile& p) {
    if (!w.basis) throw ValidationError("apply_L: field has no basis");
    const int n = p.n();
    NeckField out = w;
    const Real c0 = sq(0.5 * (n - 2));
    for (Eigen::Index j = 0; j < w.coeffs.cols(); ++j) {
        const Real lambda = w.basis->modes[static_cast<std::size_t>(j)].eigenvalue;
        Eigen::VectorXd col = detail::second_difference(w.coeffs.col(j), w.h, w.even);
        for (int i = 0; i <= w.segments; ++i) {
            const Real s = i * w.h;
            col(i) += (-lambda - c0 + detail::potential(p, s)) * w.coeffs(i, j);
        }
        out.coeffs.col(j) = col;
    }
    return out;
}

/// Discrete weighted norm: sup over nodes of
/// phi^{-delta} (|w| + |dw| + h |d2w|), with the sups in theta taken over the
/// basis quadrature nodes.
inline Real norm_delta(const NeckField& w, const CatenoidProfile& p) {
    if (!w.basis) throw ValidationError("norm_delta: field has no basis");
    const Eigen::Index J = w.coeffs.cols();
    Eigen::MatrixXd d1(w.nodes(), J), d2(w.nodes(), J);
    for (Eigen::Index j = 0; j < J; ++j) {
        d1.col(j) = detail::first_difference(w.coeffs.col(j), w.h, w.even);
        d2.col(j) = detail::second_difference(w.coeffs.col(j), w.h, w.even);
    }
    const Eigen::MatrixXd& E = w.basis->eval_matrix;
    Real best = 0.0;
    for (int i = 0; i <= w.segments; ++i) {
        const Real v0 = (E * w.coeffs.row(i).transpose()).cwiseAbs().maxCoeff();
        const Real v1 = (E * d1.row(i).transpose()).cwiseAbs().maxCoeff();
        const Real v2 = (E * d2.row(i).transpose()).cwiseAbs().maxCoeff();
        const Real score = std::pow(p.phi(i * w.h), -w.delta) * (v0 + v1 + w.h * v2);
        best = std::max(best, score);
    }
    return best;
}

/// Psi^{0,-} = d/ds phi^{(n-2)/2}, odd Jacobi field of L.
inline Real jacobi_field_minus(const CatenoidProfile& p, Real s) {
    const int n = p.n();
    return 0.5 * (n - 2) * std::pow(p.phi(s), 0.5 * (n - 4)) * p.dphi(s);
}

/// Psi^{0,+} = phi^{(n-4)/2} (phi dpsi - psi dphi), even Jacobi field of L.
inline Real jacobi_field_plus(const CatenoidProfile& p, Real s) {
    const int n = p.n();
    return std::pow(p.phi(s), 0.5 * (n - 4)) *
           (p.phi(s) * p.dpsi(s) - p.psi(s) * p.dphi(s));
}

struct JacobiZero {
    Real s0 = 0.0;
    bool found = false;
};

/// Largest zero of Psi^{0,+}, by dense scan and bisection; verified positive
/// sign-change-free beyond it.
inline JacobiZero largest_jacobi_zero(const CatenoidProfile& p) {
    const Real h = 1e-3;
    JacobiZero out;
    Real prev = jacobi_field_plus(p, p.s_max());
    for (Real s = p.s_max() - h; s >= 0.0; s -= h) {
        const Real cur = jacobi_field_plus(p, s);
        if (prev == 0.0) { out.s0 = s + h; out.found = true; return out; }
        if (cur * prev < 0.0) {
            out.s0 = bisect([&](Real t) { return jacobi_field_plus(p, t); }, s, s + h, 1e-12);
            out.found = true;
            return out;
        }
        prev = cur;
    }
    return out;  // no sign change: s0 = 0, found = false
}

struct GreenResult {
    NeckField w;
    Real norm_ratio = 0.0;  // ||w||_delta / ||f||_delta
};

/// Two-point boundary value solve of L w = f on (-S, S) x S^{n-1} with
/// w(+-S, .) = 0, realized per mode on [0, S] with the parity condition at 0.
inline GreenResult green_solve(const NeckField& f, Real delta, const CatenoidProfile& p) {
    if (!f.basis) throw ValidationError("green_solve: field has no basis");
    const int n = p.n();
    if (!(delta > 0.5 * (2 - n) && delta < 0.5 * (n - 2)))
        throw ValidationError("green_solve: delta outside ((2-n)/2, (n-2)/2)");
    const JacobiZero jz = largest_jacobi_zero(p);
    if (f.S() <= jz.s0)
        throw ValidationError("green_solve: S must exceed the largest Jacobi-field zero");

    GreenResult res;
    res.w = f;
    res.w.delta = delta;
    res.w.coeffs.setZero();
    const Real c0 = sq(0.5 * (n - 2));
    const int N = f.segments;
    const Real h = f.h;

    for (Eigen::Index j = 0; j < f.coeffs.cols(); ++j) {
        const Real lambda = f.basis->modes[static_cast<std::size_t>(j)].eigenvalue;
        // unknowns w_0 .. w_{N-1}; w_N = 0
        std::vector<Real> lo(static_cast<std::size_t>(N), 0.0), di(static_cast<std::size_t>(N), 0.0),
            up(static_cast<std::size_t>(N), 0.0), rhs(static_cast<std::size_t>(N), 0.0);
        for (int i = 0; i < N; ++i) {
            const Real s = i * h;
            const Real c = -lambda - c0 + detail::potential(p, s);
            if (i == 0) {
                if (f.even) {
                    di[0] = -2.0 / (h * h) + c;
                    up[0] = 2.0 / (h * h);
                    rhs[0] = f.coeffs(0, j);
                } else {
                    di[0] = 1.0;  // w(0) = 0
                    up[0] = 0.0;
                    rhs[0] = 0.0;
                }
            } else {
                lo[static_cast<std::size_t>(i)] = 1.0 / (h * h);
                di[static_cast<std::size_t>(i)] = -2.0 / (h * h) + c;
                up[static_cast<std::size_t>(i)] = 1.0 / (h * h);  // couples to w_{i+1}; zero at i = N-1
                rhs[static_cast<std::size_t>(i)] = f.coeffs(i, j);
            }
        }
        up[static_cast<std::size_t>(N - 1)] = 0.0;
        const std::vector<Real> sol = solve_tridiagonal(lo, di, up, rhs);
        for (int i = 0; i < N; ++i) res.w.coeffs(i, j) = sol[static_cast<std::size_t>(i)];
        res.w.coeffs(N, j) = 0.0;
    }

    NeckField fn = f;
    fn.delta = delta;
    const Real nf = norm_delta(fn, p);
    res.norm_ratio = nf > 0.0 ? norm_delta(res.w, p) / nf : 0.0;
    return res;
}

struct PoissonResult {
    NeckField w;            // w_j(s) = g_j e^{-gamma_j s} on [0, S], not a parity field
    Real norm_ratio = 0.0;  // ||w||_{(2-n)/2} / max|g|
};

/// Poisson extension for the flat model operator: boundary data g at s = 0
/// extended by per-mode exponentials with the indicial rates.
inline PoissonResult poisson_extend(const Eigen::VectorXd& g, const InvariantSphereBasis& basis,
                                    Real S, Real target_h, const CatenoidProfile& p) {
    if (g.size() != static_cast<Eigen::Index>(basis.size()))
        throw ValidationError("poisson_extend: coefficient count mismatch");
    PoissonResult res;
    res.w = NeckField::zeros(basis, S, target_h, 0.5 * (2 - p.n()));
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        const Real gamma = indicial_root(p.n(), basis.modes[static_cast<std::size_t>(j)].eigenvalue);
        for (int i = 0; i <= res.w.segments; ++i)
            res.w.coeffs(i, j) = g(j) * std::exp(-gamma * i * res.w.h);
    }
    Eigen::VectorXd gs = basis.eval_matrix * g;
    const Real gnorm = gs.cwiseAbs().maxCoeff();
    res.norm_ratio = gnorm > 0.0 ? norm_delta(res.w, p) / gnorm : 0.0;
    return res;
}

struct TildeWResult {
    NeckField w;
    Real cross_term = 0.0;  // max_j e^{-2 gamma_j s_eps}
    Eigen::VectorXd g;      // phi^{(n-2)/2}(s_eps) h
};

/// w~(s) = P(g)(s_eps - s) + P(g)(s + s_eps) per mode, even in s, with
/// g = phi^{(n-2)/2}(s_eps) h.
inline TildeWResult build_tilde_w(const Eigen::VectorXd& h_modes, Real eps, Real rho,
                                  const CatenoidProfile& p, const InvariantSphereBasis& basis,
                                  Real target_h, Real delta, Real kappa) {
    const int n = p.n();
    TildeWResult res;
    const Real s_eps = neck_truncation(eps, rho, p);
    Eigen::VectorXd hs = basis.eval_matrix * h_modes;
    const Real hnorm = hs.size() > 0 ? hs.cwiseAbs().maxCoeff() : 0.0;
    if (hnorm > kappa * std::pow(eps, n - 1))
        throw ValidationError("build_tilde_w: boundary data exceeds the kappa eps^{n-1} ball");

    res.g = std::pow(p.phi(s_eps), 0.5 * (n - 2)) * h_modes;
    res.w = NeckField::zeros(basis, s_eps, target_h, delta);
    for (Eigen::Index j = 0; j < res.g.size(); ++j) {
        const Real gamma = indicial_root(n, basis.modes[static_cast<std::size_t>(j)].eigenvalue);
        if (std::abs(res.g(j)) > 0.0)
            res.cross_term = std::max(res.cross_term, std::exp(-2.0 * gamma * s_eps));
        for (int i = 0; i <= res.w.segments; ++i) {
            const Real s = i * res.w.h;
            res.w.coeffs(i, j) =
                res.g(j) * (std::exp(-gamma * (s_eps - s)) + std::exp(-gamma * (s_eps + s)));
        }
    }
    return res;
}

struct NeckParams {
    Real h_s = 1e-2;        // BVP grid step
    Real h_loc = 2e-3;      // local curvature stencil
    Real tol = 1e-10;       // contraction tolerance in the weighted norm
    int max_iter = 50;
    Real kappa = 20.0;
    int quad_chi = 12;      // work quadrature orders
    int quad_eta = 12;
    int annulus_radii = 33;
};

/// Evaluates the perturbed immersion
///   X_w = eps X_0 + w phi^{(2-n)/2} N_eps
/// and its mean curvature at quadrature directions, with the interpolating
/// field N_eps equal to the catenoid normal near the neck and vertical near
/// the truncation boundary.
class NeckImmersion {
public:
    NeckImmersion(const InvariantSphereBasis& basis, const CatenoidProfile& p,
                  const BasisOnQuad& work, Real eps, Real rho, Real h_loc)
        : basis_(basis), p_(p), work_(work), eps_(eps), h_loc_(h_loc) {
        n_ = p.n();
        s_eps_ = neck_truncation(eps, rho, p);
        const Real phi_b = p.phi(s_eps_);
        const Real phi_lo = std::max(1.05, 0.25 * phi_b);
        const Real phi_hi = 0.45 * phi_b;
        if (phi_hi <= phi_lo)
            throw ValidationError("NeckImmersion: eps too large for the normal-field blend");
        blend_lo_ = bisect([&](Real t) { return p.phi(t) - phi_lo; }, 0.0, s_eps_, 1e-12);
        blend_hi_ = bisect([&](Real t) { return p.phi(t) - phi_hi; }, 0.0, s_eps_, 1e-12);
        build_pattern_cache();
    }

    Real s_eps() const { return s_eps_; }

    /// Vertical component of the normal field; odd, smooth, equal to
    /// -dphi/phi near the neck and -sign(s) beyond the blend window. The
    /// blend is C-infinity: any finite-order kink at the window edges gets
    /// amplified by the curvature stencil into a grid-scale instability of
    /// the Newton iteration.
    Real xi(Real s) const {
        const Real raw = -p_.dphi(s) / p_.phi(s);
        const Real a = std::abs(s);
        if (a <= blend_lo_) return raw;
        const Real sgn = s < 0.0 ? -1.0 : 1.0;
        if (a >= blend_hi_) return -sgn;
        const Real t = (a - blend_lo_) / (blend_hi_ - blend_lo_);
        auto bump = [](Real u) { return u <= 0.0 ? 0.0 : std::exp(-1.0 / u); };
        const Real b = bump(t) / (bump(t) + bump(1.0 - t));
        return (1.0 - b) * raw + b * (-sgn);
    }

    /// Alignment c = N_eps . N_0; equals 1 where the fields coincide and
    /// dphi/phi in the vertical zone. The curvature linearization at the
    /// catenoid is L composed with multiplication by c.
    Real normal_alignment(Real s) const {
        const Real xival = xi(s);
        const Real horiz = std::sqrt(std::max(0.0, 1.0 - xival * xival));
        return std::pow(p_.phi(s), 1 - n_) * horiz - xival * p_.dphi(s) / p_.phi(s);
    }

    void set_w(const Eigen::MatrixXd& coeffs, Real h, bool even) {
        const Eigen::Index J = coeffs.cols();
        s_step_ = h;  // curvature stencil lands on grid nodes in s
        w_tables_.clear();
        w_tables_.reserve(static_cast<std::size_t>(J));
        w_even_ = even;
        for (Eigen::Index j = 0; j < J; ++j) {
            Eigen::VectorXd d = detail::first_difference(coeffs.col(j), h, even);
            std::vector<Real> vals(coeffs.col(j).data(), coeffs.col(j).data() + coeffs.rows());
            std::vector<Real> ders(d.data(), d.data() + d.size());
            w_tables_.emplace_back(0.0, h, std::move(vals), std::move(ders));
        }
    }

    Real w_value(Eigen::Index j, Real s) const {
        const Real a = std::abs(s);
        const Real v = w_tables_[static_cast<std::size_t>(j)](a);
        return (w_even_ || s >= 0.0) ? v : -v;
    }

    /// X_w at (s, theta) given the mode row of e_j(theta).
    Eigen::VectorXd point(Real s, const Eigen::VectorXd& theta, const Eigen::VectorXd& erow) const {
        Real W = 0.0;
        for (Eigen::Index j = 0; j < erow.size(); ++j) W += w_value(j, s) * erow(j);
        const Real xival = xi(s);
        const Real horiz = std::sqrt(std::max(0.0, 1.0 - xival * xival));
        const Real fac = W * std::pow(p_.phi(s), 0.5 * (2 - n_));
        Eigen::VectorXd x(n_ + 1);
        x.head(n_) = (eps_ * p_.phi(s) + fac * horiz) * theta;
        x(n_) = eps_ * p_.psi(s) + fac * xival;
        return x;
    }

    /// Mean curvature of X_w at (s, work-quadrature node q).
    Real mean_curvature(Real s, std::size_t q) const {
        const auto& pat = patterns_[q];
        const int d = n_;
        std::vector<Real> center(static_cast<std::size_t>(d), 0.0);
        center[0] = s;
        auto chart = [&](const std::vector<Real>& a) {
            int key = 0;
            for (int k = 1; k < d; ++k) {
                const Real off = (a[static_cast<std::size_t>(k)]) / pat.steps[static_cast<std::size_t>(k)];
                key = key * 3 + (static_cast<int>(std::lround(off)) + 1);
            }
            const auto& entry = pat.entries[static_cast<std::size_t>(key)];
            return point(a[0], entry.theta, entry.erow);
        };
        Eigen::VectorXd orient(n_ + 1);
        const Real xival = xi(s);
        orient.head(n_) = std::sqrt(std::max(0.0, 1.0 - xival * xival)) *
                          work_.quad.nodes[q];
        orient(n_) = xival;
        std::vector<Real> steps = pat.steps;
        steps[0] = s_step_ > 0.0 ? s_step_ : h_loc_;
        return mean_curvature_at(chart, center, orient, steps);
    }

private:
    struct PatternEntry {
        Eigen::VectorXd theta;
        Eigen::VectorXd erow;
    };
    struct NodePatterns {
        std::vector<Real> steps;                 // d steps: (s, angles...)
        std::vector<PatternEntry> entries;       // 3^{d-1} angle-offset combinations
    };

    void build_pattern_cache() {
        const int d = n_;
        const std::size_t nq = work_.quad.nodes.size();
        patterns_.resize(nq);
        const Eigen::Index J = static_cast<Eigen::Index>(basis_.size());
        for (std::size_t q = 0; q < nq; ++q) {
            NodePatterns np;
            // uniform parameter steps: truncation stays relative in every
            // chart direction, degenerate directions are handled by the
            // metric solve
            np.steps.assign(static_cast<std::size_t>(d), h_loc_);
            std::size_t count = 1;
            for (int k = 1; k < d; ++k) count *= 3;
            np.entries.resize(count);
            for (std::size_t key = 0; key < count; ++key) {
                // base-3 digits, most significant digit = first angle direction
                std::vector<Real> ang = work_.quad.angles[q];
                std::size_t rem = key;
                for (int k = d - 1; k >= 1; --k) {
                    const int off = static_cast<int>(rem % 3) - 1;
                    rem /= 3;
                    ang[static_cast<std::size_t>(k - 1)] +=
                        off * np.steps[static_cast<std::size_t>(k)];
                }
                PatternEntry entry;
                entry.theta = sphere_chart_point(basis_.n, basis_.m, ang);
                entry.erow.resize(J);
                for (Eigen::Index j = 0; j < J; ++j)
                    entry.erow(j) = basis_.eval_mode(static_cast<std::size_t>(j), entry.theta);
                np.entries[key] = std::move(entry);
            }
            patterns_[q] = std::move(np);
        }
    }

    const InvariantSphereBasis& basis_;
    const CatenoidProfile& p_;
    const BasisOnQuad& work_;
    Real eps_, h_loc_, s_eps_ = 0.0, blend_lo_ = 0.0, blend_hi_ = 0.0, s_step_ = 0.0;
    int n_ = 3;
    bool w_even_ = true;
    std::vector<HermiteTable> w_tables_;
    std::vector<NodePatterns> patterns_;
};

struct NeckSolution {
    Real eps = 0.0, rho = 0.0, s_eps = 0.0, delta = 0.0;
    Eigen::VectorXd h_modes;
    NeckField w;   // tilde + v
    NeckField v;
    Real tilde_cross_term = 0.0;
    Real h_norm = 0.0, v_norm = 0.0;
    std::vector<Real> contraction_history;
    bool stalled = false;
    Real residual_sup = 0.0;    // sup of the weighted curvature residual fed to the solver
    Real curvature_sup = 0.0;   // sup |H(X_w)|
    // Upper-boundary graph on the annulus rho/2 <= r <= rho, in mode space.
    std::vector<Real> annulus_r;
    Eigen::MatrixXd graph_modes;  // graph function z(r, .) per radius
    Eigen::MatrixXd V_modes;      // V_{eps,h} = eps c_inf - z - W_h
    Eigen::VectorXd V_at_rho, dV_at_rho;
};

/// Shared immutable context for neck solves.
struct NeckContext {
    const InvariantSphereBasis& basis;
    const CatenoidProfile& profile;
    BasisOnQuad work;
    NeckParams params;

    NeckContext(const InvariantSphereBasis& b, const CatenoidProfile& p, NeckParams prm = {})
        : basis(b), profile(p),
          work(b, make_sphere_quadrature(b.n, b.m, prm.quad_chi, prm.quad_eta)),
          params(prm) {}
};

/// Nonlinear neck solve: fixed point of
///   v -> G_{s_eps}( Qbar(w~ + v) - L w~ ),
/// where Qbar(w) = L w - eps^2 phi^{(n+2)/2} n H(X_w). The iteration below
/// uses the Newton form of the same fixed point,
///   v_{k+1} = v_k - c^{-1} G_{s_eps}( eps^2 phi^{(n+2)/2} n P H(X_{w~+v_k}) ),
/// with P the work-quadrature mode projection and c = N_eps . N_0 the normal
/// alignment, since the curvature linearization at the catenoid is L o M_c.
/// The converged immersion has vanishing projected mean curvature.
inline NeckSolution solve_neck(const NeckContext& ctx, const Eigen::VectorXd& h_modes,
                               Real eps, Real rho, Real delta) {
    const CatenoidProfile& p = ctx.profile;
    const InvariantSphereBasis& basis = ctx.basis;
    const NeckParams& prm = ctx.params;
    const int n = p.n();
    if (!(delta > 0.5 * (2 - n) && delta < 0.5 * (n - 2)))
        throw ValidationError("solve_neck: delta outside ((2-n)/2, (n-2)/2)");

    NeckSolution sol;
    sol.eps = eps;
    sol.rho = rho;
    sol.delta = delta;
    sol.h_modes = h_modes;
    sol.s_eps = neck_truncation(eps, rho, p);

    TildeWResult tw = build_tilde_w(h_modes, eps, rho, p, basis, prm.h_s, delta, prm.kappa);
    sol.tilde_cross_term = tw.cross_term;
    {
        const Eigen::VectorXd hs = basis.eval_matrix * h_modes;
        sol.h_norm = hs.size() > 0 ? hs.cwiseAbs().maxCoeff() : 0.0;
    }

    NeckImmersion immersion(basis, p, ctx.work, eps, rho, prm.h_loc);
    NeckField v = tw.w;
    v.coeffs.setZero();
    const int N = v.segments;
    const std::size_t nq = ctx.work.quad.nodes.size();
    const Eigen::Index J = static_cast<Eigen::Index>(basis.size());

    NeckField rhs = v;
    std::vector<Real> Hrow(nq);
    Real prev_diff = -1.0;
    bool converged = false;

    for (int iter = 0; iter < prm.max_iter; ++iter) {
        Eigen::MatrixXd wtot = tw.w.coeffs + v.coeffs;
        immersion.set_w(wtot, v.h, true);

        Real res_sup = 0.0, curv_sup = 0.0;
        for (int i = 0; i < N; ++i) {
            const Real s = i * v.h;
            const Real weight =
                sq(eps) * std::pow(p.phi(s), 0.5 * (n + 2)) * static_cast<Real>(n);
            for (std::size_t q = 0; q < nq; ++q) {
                const Real H = immersion.mean_curvature(s, q);
                Hrow[q] = weight * H;
                curv_sup = std::max(curv_sup, std::abs(H));
                res_sup = std::max(res_sup, std::abs(Hrow[q]));
            }
            rhs.coeffs.row(i) = ctx.work.project(Hrow).transpose();
        }
        rhs.coeffs.row(N).setZero();
        sol.residual_sup = res_sup;
        sol.curvature_sup = curv_sup;

        const GreenResult gr = green_solve(rhs, delta, p);
        Eigen::MatrixXd vnew = v.coeffs;
        for (int i = 0; i <= N; ++i)
            vnew.row(i) -= gr.w.coeffs.row(i) / immersion.normal_alignment(i * v.h);

        NeckField diff = v;
        diff.coeffs = vnew - v.coeffs;
        const Real d = norm_delta(diff, p);
        sol.contraction_history.push_back(d);
        v.coeffs = vnew;

        if (d < prm.tol) { converged = true; break; }
        if (prev_diff > 0.0 && d > 5.0 * prev_diff && d > 1e-6)
            throw NumericalError("solve_neck: iteration diverged");
        if (prev_diff > 0.0 && d > 0.7 * prev_diff && d < 1e-8) {
            sol.stalled = true;
            converged = true;
            break;
        }
        NeckField vnf = v;
        const Real vn = norm_delta(vnf, p);
        if (vn > 1e3 * std::max(eps, sol.h_norm + 1e-30))
            throw NumericalError("solve_neck: iterate left the contraction ball");
        prev_diff = d;
    }
    if (!converged)
        throw NumericalError("solve_neck: no convergence within the iteration budget");

    sol.v = v;
    sol.w = v;
    sol.w.coeffs = tw.w.coeffs + v.coeffs;
    {
        NeckField vn = v;
        sol.v_norm = norm_delta(vn, p);
    }

    // Annulus decomposition of the upper-boundary graph via r = eps phi(s):
    // z(r, theta) = eps psi(s_r) - w(s_r, theta) phi^{(2-n)/2}(s_r) in the
    // vertical-normal zone, and V = eps c_inf - z - W_h.
    immersion.set_w(sol.w.coeffs, sol.w.h, true);
    const int K = prm.annulus_radii;
    sol.annulus_r.resize(static_cast<std::size_t>(K));
    sol.graph_modes.resize(K, J);
    sol.V_modes.resize(K, J);
    const Real const_mode = std::sqrt(sphere_volume(n - 1));  // mode-0 coefficient of 1
    for (int k = 0; k < K; ++k) {
        const Real r = 0.5 * rho + 0.5 * rho * k / (K - 1);
        sol.annulus_r[static_cast<std::size_t>(k)] = r;
        const Real s = bisect([&](Real t) { return eps * p.phi(t) - r; }, 0.0, p.s_max(), 1e-13);
        Eigen::VectorXd wrow(J);
        for (Eigen::Index j = 0; j < J; ++j) wrow(j) = immersion.w_value(j, s);
        Eigen::VectorXd graph = -std::pow(p.phi(s), 0.5 * (2 - n)) * wrow;
        graph(0) += eps * p.psi(s) * const_mode;
        sol.graph_modes.row(k) = graph.transpose();
        Eigen::VectorXd V = -graph;
        V(0) += eps * p.c_inf() * const_mode;
        for (Eigen::Index j = 0; j < J; ++j)
            V(j) -= h_modes(j) * std::pow(r / rho, basis.modes[static_cast<std::size_t>(j)].degree);
        sol.V_modes.row(k) = V.transpose();
    }
    const Real dr = 0.5 * rho / (K - 1);
    sol.V_at_rho = sol.V_modes.row(K - 1).transpose();
    sol.dV_at_rho = ((11.0 / 6.0) * sol.V_modes.row(K - 1) - 3.0 * sol.V_modes.row(K - 2) +
                     1.5 * sol.V_modes.row(K - 3) - (1.0 / 3.0) * sol.V_modes.row(K - 4))
                        .transpose() / dr;
    return sol;
}

/// ||V_{eps,h2} - V_{eps,h1}|| / ||h2 - h1|| on the annulus.
inline Real neck_lipschitz_probe(const NeckContext& ctx, const Eigen::VectorXd& h1,
                                 const Eigen::VectorXd& h2, Real eps, Real rho, Real delta) {
    const Real dh = coeff_sup_norm(ctx.basis, h2 - h1);
    if (dh == 0.0) return 0.0;
    const NeckSolution s1 = solve_neck(ctx, h1, eps, rho, delta);
    const NeckSolution s2 = solve_neck(ctx, h2, eps, rho, delta);
    const Eigen::MatrixXd dV = s2.V_modes - s1.V_modes;
    return annulus_norm(ctx.basis, s1.annulus_r, dV) / dh;
}

}  // namespace scherk
