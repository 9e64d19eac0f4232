#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "scherk/common.hpp"
#include "scherk/lattice.hpp"
#include "scherk/solvers.hpp"
#include "scherk/sphere_basis.hpp"

namespace scherk {

struct OuterParams {
    Real target_h = 0.0;     // grid spacing; default rho / 12
    Real R1_factor = 0.0;    // default 8 (m = n-1) or 40 (m <= n-2)
    Real lin_tol = 1e-10;
    int max_lin_iter = 40000;
    Real picard_tol = 1e-12;
    int max_picard = 25;
};

/// Structured grid on the positive quotient
///   [0, R1] x prod_k [0, a_k / 2]  minus the orthant of the ball B^n_rho,
/// with the invariant Laplacian
///   d_{r1}^2 + ((n-m-1)/r1) d_{r1} + sum_k d_{x2,k}^2
/// assembled with symmetry (Neumann) planes, Shortley-Weller one-sided
/// stencils at the sphere, and a deficiency-annihilating Robin row at the far
/// end. The Robin form pins the representation with no additive constant:
///   m <= n-3:  du = (nu / r1) u
///   m  = n-2:  u = r1 log(r1) du
///   m  = n-1:  u = r1 du
class QuotientDomainGrid {
public:
    QuotientDomainGrid(int n, int m, const Lattice& lattice, Real rho, Real R1,
                       Real target_h, const InvariantSphereBasis& basis, Real nu)
        : n_(n), m_(m), rho_(rho), R1_(R1), nu_(nu), basis_(&basis) {
        if (m < 1 || m > n - 1) throw ValidationError("QuotientDomainGrid: need 1 <= m <= n-1");
        if (!lattice.is_rectangular())
            throw ValidationError("QuotientDomainGrid: constructive pipeline requires a rectangular lattice");
        axis_len_.push_back(R1);
        for (int k = 0; k < m; ++k) {
            const Real half = 0.5 * lattice.A(k, k);
            if (rho >= half)
                throw ValidationError("QuotientDomainGrid: rho must be below half the minimal lattice spacing");
            axis_len_.push_back(half);
        }
        const int D = m + 1;
        dims_.resize(static_cast<std::size_t>(D));
        h_.resize(static_cast<std::size_t>(D));
        for (int d = 0; d < D; ++d) {
            const int cells = std::max(4, static_cast<int>(std::round(axis_len_[static_cast<std::size_t>(d)] / target_h)));
            dims_[static_cast<std::size_t>(d)] = cells + 1;
            h_[static_cast<std::size_t>(d)] = axis_len_[static_cast<std::size_t>(d)] / cells;
        }
        total_ = 1;
        for (int d = 0; d < D; ++d) total_ *= static_cast<std::size_t>(dims_[static_cast<std::size_t>(d)]);
        build();
    }

    int n() const { return n_; }
    int m() const { return m_; }
    int axes() const { return m_ + 1; }
    Real rho() const { return rho_; }
    Real R1() const { return R1_; }
    Real nu() const { return nu_; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<Real>& spacing() const { return h_; }
    std::size_t active_count() const { return active_nodes_.size(); }
    const InvariantSphereBasis& basis() const { return *basis_; }

    std::size_t flat(const std::vector<int>& idx) const {
        std::size_t f = 0;
        for (std::size_t d = 0; d < idx.size(); ++d)
            f = f * static_cast<std::size_t>(dims_[d]) + static_cast<std::size_t>(idx[d]);
        return f;
    }

    std::vector<int> unflat(std::size_t f) const {
        std::vector<int> idx(static_cast<std::size_t>(axes()));
        for (int d = axes() - 1; d >= 0; --d) {
            idx[static_cast<std::size_t>(d)] = static_cast<int>(f % static_cast<std::size_t>(dims_[static_cast<std::size_t>(d)]));
            f /= static_cast<std::size_t>(dims_[static_cast<std::size_t>(d)]);
        }
        return idx;
    }

    std::vector<Real> coords(const std::vector<int>& idx) const {
        std::vector<Real> x(idx.size());
        for (std::size_t d = 0; d < idx.size(); ++d) x[d] = idx[d] * h_[d];
        return x;
    }

    std::ptrdiff_t active_of_flat(std::size_t f) const { return active_index_[f]; }
    const std::vector<std::size_t>& active_nodes() const { return active_nodes_; }

    bool far_row(std::size_t a) const { return is_far_row_[a]; }

    /// y = A x over active nodes (Dirichlet boundary contributions excluded).
    void apply(const std::vector<Real>& x, std::vector<Real>& y) const {
        const std::size_t na = active_nodes_.size();
        y.assign(na, 0.0);
        for (std::size_t a = 0; a < na; ++a) {
            Real s = 0.0;
            for (std::size_t e = row_ptr_[a]; e < row_ptr_[a + 1]; ++e)
                s += vals_[e] * x[static_cast<std::size_t>(cols_[e])];
            y[a] = s;
        }
    }

    /// Right-hand side assembled from a source field and mode coefficients of
    /// the sphere Dirichlet data.
    std::vector<Real> rhs(const std::vector<Real>& f_active, const Eigen::VectorXd& g_modes) const {
        std::vector<Real> b(active_nodes_.size(), 0.0);
        if (!f_active.empty()) {
            if (f_active.size() != active_nodes_.size())
                throw ValidationError("QuotientDomainGrid::rhs: source size mismatch");
            for (std::size_t a = 0; a < b.size(); ++a)
                if (!is_far_row_[a]) b[a] = f_active[a] * row_scale_[a];
        }
        for (const auto& bt : boundary_terms_)
            b[bt.row] -= bt.coef * bt.erow.dot(g_modes);
        return b;
    }

    /// Dirichlet value rows scale with the Jacobi preconditioner weights.
    const std::vector<Real>& diagonal() const { return diag_; }

    /// Equilibration factor of a row; apply() returns row_scale * (A u).
    Real row_scale(std::size_t a) const { return row_scale_[a]; }

    /// Solve A u = rhs(f, g); u doubles as the warm start.
    IterativeStats solve(const std::vector<Real>& f_active, const Eigen::VectorXd& g_modes,
                         std::vector<Real>& u, const OuterParams& prm) const {
        const std::vector<Real> b = rhs(f_active, g_modes);
        auto apply_op = [this](const std::vector<Real>& x, std::vector<Real>& y) { apply(x, y); };
        auto precond = [this](const std::vector<Real>& x, std::vector<Real>& y) {
            y.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / diag_[i];
        };
        IterativeStats st = bicgstab(apply_op, precond, b, u, prm.lin_tol, prm.max_lin_iter);
        if (!st.converged)
            throw NumericalError("QuotientDomainGrid::solve: linear solver did not converge");
        return st;
    }

    /// Multilinear interpolation of an active-node field at a grid-space
    /// point; every touched cell corner must be active.
    Real interpolate(const std::vector<Real>& u, const std::vector<Real>& x) const {
        const int D = axes();
        std::vector<int> base(static_cast<std::size_t>(D));
        std::vector<Real> t(static_cast<std::size_t>(D));
        for (int d = 0; d < D; ++d) {
            Real s = x[static_cast<std::size_t>(d)] / h_[static_cast<std::size_t>(d)];
            const Real smax = static_cast<Real>(dims_[static_cast<std::size_t>(d)] - 1);
            s = std::min(std::max(s, 0.0), smax - 1e-12);
            base[static_cast<std::size_t>(d)] = static_cast<int>(std::floor(s));
            base[static_cast<std::size_t>(d)] =
                std::min(base[static_cast<std::size_t>(d)], dims_[static_cast<std::size_t>(d)] - 2);
            t[static_cast<std::size_t>(d)] = s - base[static_cast<std::size_t>(d)];
        }
        Real out = 0.0;
        for (int corner = 0; corner < (1 << D); ++corner) {
            Real w = 1.0;
            std::vector<int> idx = base;
            for (int d = 0; d < D; ++d) {
                if (corner & (1 << d)) {
                    idx[static_cast<std::size_t>(d)] += 1;
                    w *= t[static_cast<std::size_t>(d)];
                } else {
                    w *= 1.0 - t[static_cast<std::size_t>(d)];
                }
            }
            const std::ptrdiff_t a = active_index_[flat(idx)];
            if (a < 0) throw GeometryError("QuotientDomainGrid::interpolate: inactive corner");
            out += w * u[static_cast<std::size_t>(a)];
        }
        return out;
    }

    /// Mode coefficients of u restricted to the sphere of radius r.
    Eigen::VectorXd mode_profile(const std::vector<Real>& u, Real r) const {
        const auto& quad = basis_->quad;
        std::vector<Real> samples(quad.nodes.size());
        for (std::size_t q = 0; q < quad.nodes.size(); ++q)
            samples[q] = interpolate(u, sphere_point_coords(quad.nodes[q], r));
        return basis_->project(samples);
    }

    /// Grid-space coordinates of the point r * theta.
    std::vector<Real> sphere_point_coords(const Eigen::VectorXd& theta, Real r) const {
        std::vector<Real> x(static_cast<std::size_t>(axes()));
        Real r1sq = 0.0;
        for (int i = 0; i < n_ - m_; ++i) r1sq += sq(theta(i));
        x[0] = r * std::sqrt(r1sq);
        for (int k = 0; k < m_; ++k) x[static_cast<std::size_t>(k + 1)] = r * std::abs(theta(n_ - m_ + k));
        return x;
    }

    /// Trapezoid average of u over the torus plane at radial index i;
    /// annihilates every nonconstant invariant torus mode exactly.
    Real plane_average(const std::vector<Real>& u, int i) const {
        Real sum = 0.0, wsum = 0.0;
        std::vector<int> idx(static_cast<std::size_t>(axes()), 0);
        idx[0] = i;
        const int D = axes();
        std::function<void(int, Real)> rec = [&](int d, Real w) {
            if (d == D) {
                const std::ptrdiff_t a = active_index_[flat(idx)];
                if (a >= 0) {
                    sum += w * u[static_cast<std::size_t>(a)];
                    wsum += w;
                }
                return;
            }
            for (int j = 0; j < dims_[static_cast<std::size_t>(d)]; ++j) {
                idx[static_cast<std::size_t>(d)] = j;
                const Real wj = (j == 0 || j == dims_[static_cast<std::size_t>(d)] - 1) ? 0.5 : 1.0;
                rec(d + 1, w * wj);
            }
        };
        rec(1, 1.0);
        if (wsum == 0.0) throw GeometryError("plane_average: no active nodes in plane");
        return sum / wsum;
    }

private:
    void build() {
        const int D = axes();
        active_index_.assign(total_, -1);
        for (std::size_t f = 0; f < total_; ++f) {
            const auto idx = unflat(f);
            if (radius_sq(idx) > rho_ * rho_) {
                active_index_[f] = static_cast<std::ptrdiff_t>(active_nodes_.size());
                active_nodes_.push_back(f);
            }
        }
        const std::size_t na = active_nodes_.size();
        row_ptr_.assign(na + 1, 0);
        is_far_row_.assign(na, false);
        diag_.assign(na, 1.0);

        std::vector<std::vector<std::pair<std::ptrdiff_t, Real>>> rows(na);
        for (std::size_t a = 0; a < na; ++a) {
            const auto idx = unflat(active_nodes_[a]);
            if (idx[0] == dims_[0] - 1) {
                assemble_far_row(a, idx, rows[a]);
                is_far_row_[a] = true;
            } else {
                assemble_laplace_row(a, idx, rows[a]);
            }
        }
        for (std::size_t a = 0; a < na; ++a) row_ptr_[a + 1] = row_ptr_[a] + rows[a].size();
        cols_.resize(row_ptr_[na]);
        vals_.resize(row_ptr_[na]);
        row_scale_.assign(na, 1.0);
        for (std::size_t a = 0; a < na; ++a) {
            Real d = 0.0;
            for (const auto& [c, v] : rows[a])
                if (c == static_cast<std::ptrdiff_t>(a)) d = v;
            if (d == 0.0) throw NumericalError("QuotientDomainGrid: zero diagonal");
            row_scale_[a] = 1.0 / d;  // equilibrate: unit diagonal rows
            std::size_t e = row_ptr_[a];
            for (const auto& [c, v] : rows[a]) {
                cols_[e] = c;
                vals_[e] = v * row_scale_[a];
                ++e;
            }
            diag_[a] = 1.0;
        }
        for (auto& bt : boundary_terms_) bt.coef *= row_scale_[bt.row];
    }

    Real radius_sq(const std::vector<int>& idx) const {
        Real s = 0.0;
        for (std::size_t d = 0; d < idx.size(); ++d) s += sq(idx[d] * h_[d]);
        return s;
    }

    void add(std::vector<std::pair<std::ptrdiff_t, Real>>& row, std::ptrdiff_t col, Real v) {
        for (auto& [c, val] : row)
            if (c == col) {
                val += v;
                return;
            }
        row.emplace_back(col, v);
    }

    /// Sphere cut along -d from an active node; distance in units of h_d.
    Real cut_fraction(const std::vector<int>& idx, int d) const {
        const auto x = coords(idx);
        Real other = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k)
            if (static_cast<int>(k) != d) other += sq(x[k]);
        const Real disc = rho_ * rho_ - other;
        if (disc <= 0.0) return 1.0;  // axis does not reach the sphere
        const Real t = x[static_cast<std::size_t>(d)] - std::sqrt(disc);
        return std::max(t / h_[static_cast<std::size_t>(d)], 0.0);
    }

    void assemble_laplace_row(std::size_t a, const std::vector<int>& idx,
                              std::vector<std::pair<std::ptrdiff_t, Real>>& row) {
        const int D = axes();
        const auto self = static_cast<std::ptrdiff_t>(a);
        const auto x = coords(idx);
        for (int d = 0; d < D; ++d) {
            const Real hd = h_[static_cast<std::size_t>(d)];
            const Real c1 = (d == 0) ? static_cast<Real>(n_ - m_ - 1) : 0.0;

            if (d == 0 && idx[0] == 0) {
                // regularity at r1 = 0: (n-m) u'' with an even ghost
                auto up = idx;
                up[0] = 1;
                const std::ptrdiff_t cu = active_index_[flat(up)];
                if (cu < 0) throw GeometryError("QuotientDomainGrid: axis node buried in the ball");
                const Real w = 2.0 * (n_ - m_) / (hd * hd);
                add(row, cu, w);
                add(row, self, -w);
                continue;
            }

            // neighbor bookkeeping: plus side never meets the sphere
            auto plus = idx;
            plus[static_cast<std::size_t>(d)] += 1;
            auto minus = idx;
            minus[static_cast<std::size_t>(d)] -= 1;

            if (plus[static_cast<std::size_t>(d)] >= dims_[static_cast<std::size_t>(d)]) {
                plus = minus;  // Neumann mirror at the outer symmetry plane
            }
            Real hminus = hd;
            bool minus_cut = false;
            Eigen::VectorXd cut_theta;
            if (minus[static_cast<std::size_t>(d)] < 0) {
                minus = idx;
                minus[static_cast<std::size_t>(d)] = 1;  // even ghost at coordinate 0
                if (active_index_[flat(minus)] < 0)
                    throw GeometryError("QuotientDomainGrid: mirror node buried in the ball");
            } else if (active_index_[flat(minus)] < 0) {
                minus_cut = true;
                Real alpha = cut_fraction(idx, d);
                alpha = std::max(alpha, 1e-6);
                hminus = alpha * hd;
                auto xcut = x;
                xcut[static_cast<std::size_t>(d)] -= hminus;
                cut_theta = boundary_direction(xcut);
            }

            const Real hplus = hd;
            const Real denom = hminus * hplus * (hminus + hplus);
            const Real rad = (d == 0) ? c1 / x[0] : 0.0;
            const Real cl = (2.0 * hplus - rad * sq(hplus)) / denom;
            const Real cr = (2.0 * hminus + rad * sq(hminus)) / denom;
            const Real cp = (-2.0 * (hminus + hplus) + rad * (sq(hplus) - sq(hminus))) / denom;

            add(row, self, cp);
            {
                const std::ptrdiff_t cu = active_index_[flat(plus)];
                if (cu < 0) throw GeometryError("QuotientDomainGrid: plus neighbor buried in the ball");
                add(row, cu, cr);
            }
            if (minus_cut) {
                BoundaryTerm bt;
                bt.row = a;
                bt.coef = cl;
                bt.erow.resize(static_cast<Eigen::Index>(basis_->size()));
                for (std::size_t j = 0; j < basis_->size(); ++j)
                    bt.erow(static_cast<Eigen::Index>(j)) = basis_->eval_mode(j, cut_theta);
                boundary_terms_.push_back(std::move(bt));
            } else {
                const std::ptrdiff_t cu = active_index_[flat(minus)];
                if (cu < 0) throw GeometryError("QuotientDomainGrid: minus neighbor buried in the ball");
                add(row, cu, cl);
            }
        }
    }

    /// Robin far row annihilating the leading deficiency element and pinning
    /// the no-constant representation; one-sided second-order derivative.
    void assemble_far_row(std::size_t a, const std::vector<int>& idx,
                          std::vector<std::pair<std::ptrdiff_t, Real>>& row) {
        const Real hd = h_[0];
        const Real R = R1_;
        auto m1 = idx, m2 = idx;
        m1[0] -= 1;
        m2[0] -= 2;
        const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(a);
        const std::ptrdiff_t cm1 = active_index_[flat(m1)];
        const std::ptrdiff_t cm2 = active_index_[flat(m2)];
        if (cm1 < 0 || cm2 < 0) throw GeometryError("QuotientDomainGrid: far row near the ball");
        const Real d0 = 3.0 / (2.0 * hd), d1 = -4.0 / (2.0 * hd), d2 = 1.0 / (2.0 * hd);
        if (m_ <= n_ - 3) {
            // du = (nu / R) u
            add(row, c0, d0 - nu_ / R);
            add(row, cm1, d1);
            add(row, cm2, d2);
        } else if (m_ == n_ - 2) {
            // u = R log(R) du
            const Real f = R * std::log(R);
            add(row, c0, 1.0 - f * d0);
            add(row, cm1, -f * d1);
            add(row, cm2, -f * d2);
        } else {
            // u = R du
            add(row, c0, 1.0 - R * d0);
            add(row, cm1, -R * d1);
            add(row, cm2, -R * d2);
        }
    }

    /// Unit direction of a boundary point, mapped back to full coordinates.
    Eigen::VectorXd boundary_direction(const std::vector<Real>& x) const {
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(n_);
        Real norm = 0.0;
        for (Real c : x) norm += sq(c);
        norm = std::sqrt(norm);
        theta(0) = x[0] / norm;  // representative in the first block
        for (int k = 0; k < m_; ++k) theta(n_ - m_ + k) = x[static_cast<std::size_t>(k + 1)] / norm;
        return theta;
    }

    struct BoundaryTerm {
        std::size_t row;
        Real coef;
        Eigen::VectorXd erow;
    };

    int n_, m_;
    Real rho_, R1_, nu_;
    const InvariantSphereBasis* basis_;
    std::vector<Real> axis_len_, h_;
    std::vector<int> dims_;
    std::size_t total_ = 0;
    std::vector<std::ptrdiff_t> active_index_;
    std::vector<std::size_t> active_nodes_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::ptrdiff_t> cols_;
    std::vector<Real> vals_, diag_, row_scale_;
    std::vector<bool> is_far_row_;
    std::vector<BoundaryTerm> boundary_terms_;
};

/// Field on the exterior quotient grid with its deficiency fit.
struct OuterField {
    std::vector<Real> values;     // per active node
    Real nu = 0.0;
    Real deficiency_a = 0.0;      // coefficient of zeta_m(r1)
    Real deficiency_b = 0.0;      // constant part of the tail fit
    Real tail_fit_residual = 0.0;
};

/// zeta_m: |y| when m = n-1, log |y| when m = n-2, 0 otherwise.
inline Real zeta_m(int n, int m, Real r) {
    if (m == n - 1) return r;
    if (m == n - 2) return std::log(r);
    return 0.0;
}

/// Fit a = coefficient of zeta_m and b = constant on the mean-mode tail.
inline void fit_deficiency(const QuotientDomainGrid& grid, OuterField& field,
                           Real win_lo = 0.6, Real win_hi = 0.95) {
    const int n = grid.n(), m = grid.m();
    const int N0 = grid.dims()[0] - 1;
    std::vector<Real> zs, us;
    for (int i = static_cast<int>(win_lo * N0); i <= static_cast<int>(win_hi * N0); ++i) {
        const Real r = i * grid.spacing()[0];
        if (r <= grid.rho()) continue;
        zs.push_back(zeta_m(n, m, r));
        us.push_back(grid.plane_average(field.values, i));
    }
    if (zs.size() < 4) throw ValidationError("fit_deficiency: tail window too short");
    if (m <= n - 3) {
        Real mean = 0.0;
        for (Real u : us) mean += u;
        field.deficiency_a = 0.0;
        field.deficiency_b = mean / static_cast<Real>(us.size());
    } else {
        const auto [b, aa] = fit_line(zs, us);
        field.deficiency_a = aa;
        field.deficiency_b = b;
    }
    Real res = 0.0;
    for (std::size_t k = 0; k < zs.size(); ++k)
        res = std::max(res, std::abs(us[k] - field.deficiency_a * zs[k] - field.deficiency_b));
    field.tail_fit_residual = res;
}

/// Delta w = f with sphere Dirichlet data g (mode coefficients), symmetry
/// Neumann planes, and the m-dependent far condition.
inline OuterField laplace_exterior_solve(const QuotientDomainGrid& grid,
                                         const std::vector<Real>& f_active,
                                         const Eigen::VectorXd& g_modes, Real nu,
                                         const OuterParams& prm, OuterField* warm = nullptr) {
    OuterField out;
    out.nu = nu;
    out.values = warm ? warm->values : std::vector<Real>(grid.active_count(), 0.0);
    grid.solve(f_active, g_modes, out.values, prm);
    fit_deficiency(grid, out);
    return out;
}

inline OuterField harmonic_extension_outer(const QuotientDomainGrid& grid,
                                           const Eigen::VectorXd& g_modes, Real nu,
                                           const OuterParams& prm) {
    return laplace_exterior_solve(grid, {}, g_modes, nu, prm);
}

/// Harmonic extension of sphere data into the ball: mode profiles (r/rho)^l.
struct BallHarmonicExtension {
    const InvariantSphereBasis* basis;
    Eigen::VectorXd h_modes;
    Real rho;

    Eigen::VectorXd modes_at(Real r) const {
        Eigen::VectorXd out = h_modes;
        for (Eigen::Index j = 0; j < out.size(); ++j)
            out(j) *= std::pow(r / rho, basis->modes[static_cast<std::size_t>(j)].degree);
        return out;
    }

    /// Radial derivative per mode: (l / rho) h_l at r = rho.
    Eigen::VectorXd radial_derivative_at_rho() const {
        Eigen::VectorXd out = h_modes;
        for (Eigen::Index j = 0; j < out.size(); ++j)
            out(j) *= basis->modes[static_cast<std::size_t>(j)].degree / rho;
        return out;
    }
};

inline BallHarmonicExtension ball_harmonic_extension(const InvariantSphereBasis& basis,
                                                     const Eigen::VectorXd& h_modes, Real rho) {
    if (h_modes.size() != static_cast<Eigen::Index>(basis.size()))
        throw ValidationError("ball_harmonic_extension: coefficient count mismatch");
    return BallHarmonicExtension{&basis, h_modes, rho};
}

namespace detail {

/// Graph nonlinearity Q(u) = -Hess u(grad u, grad u)/(1+|grad u|^2) on the
/// quotient grid, with radial-chart derivatives. Regular nodes use central
/// stencils; nodes with a cut minus-neighbor use forward one-sided formulas
/// (the forward direction always points away from the ball).
inline std::vector<Real> graph_nonlinearity(const QuotientDomainGrid& grid,
                                            const std::vector<Real>& u,
                                            const Eigen::VectorXd& g_modes) {
    const int D = grid.axes();
    std::vector<Real> q(grid.active_count(), 0.0);
    const auto& dims = grid.dims();
    const auto& h = grid.spacing();

    auto value = [&](std::vector<int> idx, int d, int off) -> std::pair<bool, Real> {
        idx[static_cast<std::size_t>(d)] += off;
        if (idx[static_cast<std::size_t>(d)] < 0)
            idx[static_cast<std::size_t>(d)] = -idx[static_cast<std::size_t>(d)];  // even mirror
        if (idx[static_cast<std::size_t>(d)] >= dims[static_cast<std::size_t>(d)]) {
            const int over = idx[static_cast<std::size_t>(d)] - (dims[static_cast<std::size_t>(d)] - 1);
            idx[static_cast<std::size_t>(d)] = dims[static_cast<std::size_t>(d)] - 1 - over;
        }
        const std::ptrdiff_t a = grid.active_of_flat(grid.flat(idx));
        if (a < 0) return {false, 0.0};
        return {true, u[static_cast<std::size_t>(a)]};
    };

    for (std::size_t a = 0; a < grid.active_count(); ++a) {
        if (grid.far_row(a)) continue;
        const auto idx = grid.unflat(grid.active_nodes()[a]);
        const Real u0 = u[a];
        std::vector<Real> du(static_cast<std::size_t>(D), 0.0), d2u(static_cast<std::size_t>(D), 0.0);
        std::vector<bool> fwd(static_cast<std::size_t>(D), false);
        bool skip = false;
        for (int d = 0; d < D && !skip; ++d) {
            const Real hd = h[static_cast<std::size_t>(d)];
            const auto [okm, um] = value(idx, d, -1);
            const auto [okp, up] = value(idx, d, +1);
            if (okm && okp) {
                du[static_cast<std::size_t>(d)] = (up - um) / (2.0 * hd);
                d2u[static_cast<std::size_t>(d)] = (up - 2.0 * u0 + um) / (hd * hd);
            } else if (okp) {
                fwd[static_cast<std::size_t>(d)] = true;
                const auto [ok2, up2] = value(idx, d, +2);
                const auto [ok3, up3] = value(idx, d, +3);
                if (!ok2 || !ok3) { skip = true; break; }
                du[static_cast<std::size_t>(d)] = (-3.0 * u0 + 4.0 * up - up2) / (2.0 * hd);
                d2u[static_cast<std::size_t>(d)] = (2.0 * u0 - 5.0 * up + 4.0 * up2 - up3) / (hd * hd);
            } else {
                skip = true;
            }
        }
        if (skip) continue;

        Real hess_term = 0.0, grad2 = 0.0;
        for (int d = 0; d < D; ++d) {
            grad2 += sq(du[static_cast<std::size_t>(d)]);
            hess_term += sq(du[static_cast<std::size_t>(d)]) * d2u[static_cast<std::size_t>(d)];
        }
        for (int d = 0; d < D; ++d)
            for (int e = d + 1; e < D; ++e) {
                const Real hd = h[static_cast<std::size_t>(d)], he = h[static_cast<std::size_t>(e)];
                Real mixed = 0.0;
                if (!fwd[static_cast<std::size_t>(d)] && !fwd[static_cast<std::size_t>(e)]) {
                    std::vector<int> pp = idx, pm = idx, mp = idx, mm = idx;
                    pp[static_cast<std::size_t>(d)] += 1; pp[static_cast<std::size_t>(e)] += 1;
                    pm[static_cast<std::size_t>(d)] += 1; pm[static_cast<std::size_t>(e)] -= 1;
                    mp[static_cast<std::size_t>(d)] -= 1; mp[static_cast<std::size_t>(e)] += 1;
                    mm[static_cast<std::size_t>(d)] -= 1; mm[static_cast<std::size_t>(e)] -= 1;
                    auto val = [&](std::vector<int> v) -> std::pair<bool, Real> {
                        for (int dd = 0; dd < D; ++dd) {
                            if (v[static_cast<std::size_t>(dd)] < 0)
                                v[static_cast<std::size_t>(dd)] = -v[static_cast<std::size_t>(dd)];
                            if (v[static_cast<std::size_t>(dd)] >= dims[static_cast<std::size_t>(dd)])
                                v[static_cast<std::size_t>(dd)] =
                                    2 * (dims[static_cast<std::size_t>(dd)] - 1) - v[static_cast<std::size_t>(dd)];
                        }
                        const std::ptrdiff_t aa = grid.active_of_flat(grid.flat(v));
                        if (aa < 0) return {false, 0.0};
                        return {true, u[static_cast<std::size_t>(aa)]};
                    };
                    const auto [o1, v1] = val(pp);
                    const auto [o2, v2] = val(pm);
                    const auto [o3, v3] = val(mp);
                    const auto [o4, v4] = val(mm);
                    if (o1 && o2 && o3 && o4) mixed = (v1 - v2 - v3 + v4) / (4.0 * hd * he);
                } else {
                    // forward-forward corner difference in the cut layer
                    const auto [o1, v1] = value(idx, d, 0);
                    std::vector<int> pd = idx, pe = idx, pde = idx;
                    pd[static_cast<std::size_t>(d)] += 1;
                    pe[static_cast<std::size_t>(e)] += 1;
                    pde[static_cast<std::size_t>(d)] += 1;
                    pde[static_cast<std::size_t>(e)] += 1;
                    const std::ptrdiff_t a1 = grid.active_of_flat(grid.flat(pd));
                    const std::ptrdiff_t a2 = grid.active_of_flat(grid.flat(pe));
                    const std::ptrdiff_t a3 = grid.active_of_flat(grid.flat(pde));
                    (void)o1; (void)v1;
                    if (a1 >= 0 && a2 >= 0 && a3 >= 0)
                        mixed = (u[static_cast<std::size_t>(a3)] - u[static_cast<std::size_t>(a1)] -
                                 u[static_cast<std::size_t>(a2)] + u0) / (hd * he);
                }
                hess_term += 2.0 * du[static_cast<std::size_t>(d)] * du[static_cast<std::size_t>(e)] * mixed;
            }
        q[a] = -hess_term / (1.0 + grad2);
    }
    (void)g_modes;
    return q;
}

}  // namespace detail

struct OuterSolution {
    OuterField u;                   // solves Delta u = Q(u), u|_sphere = g
    Eigen::VectorXd g_modes;
    Real slope_c = 0.0;             // deficiency a of u
    Real offset_b = 0.0;            // deficiency b of u
    std::vector<Real> picard_updates;
    // hat-V = u - What_g near the sphere, per-mode radial data
    std::vector<Real> vhat_radii;
    Eigen::MatrixXd vhat_modes;     // K x J on [rho, 2 rho]
    Eigen::VectorXd dvhat_at_rho;   // one-sided, exact zero value at rho
    Real vhat_norm = 0.0;
};

/// Extraction radii for sphere-derivative fits: far enough out that every
/// interpolation corner is active.
inline std::vector<Real> extraction_radii(const QuotientDomainGrid& grid, int count = 5) {
    const Real hmax = *std::max_element(grid.spacing().begin(), grid.spacing().end());
    const Real r0 = grid.rho() + 2.0 * hmax;
    std::vector<Real> radii;
    for (int k = 0; k < count; ++k) radii.push_back(r0 + 1.2 * k * hmax);
    return radii;
}

/// Per-mode radial derivative at the sphere from a cubic fit through the
/// exact boundary value and the extraction-radius profiles.
inline Eigen::VectorXd sphere_radial_derivative(const QuotientDomainGrid& grid,
                                                const std::vector<Real>& u,
                                                const Eigen::VectorXd& boundary_modes) {
    const std::vector<Real> radii = extraction_radii(grid);
    const auto J = static_cast<Eigen::Index>(grid.basis().size());
    Eigen::MatrixXd profs(static_cast<Eigen::Index>(radii.size()) + 1, J);
    profs.row(0) = boundary_modes.transpose();
    for (std::size_t k = 0; k < radii.size(); ++k)
        profs.row(static_cast<Eigen::Index>(k) + 1) = grid.mode_profile(u, radii[k]).transpose();

    Eigen::MatrixXd A(profs.rows(), 4);
    A.col(0).setOnes();
    A(0, 1) = A(0, 2) = A(0, 3) = 0.0;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const Real dr = radii[k] - grid.rho();
        A(static_cast<Eigen::Index>(k) + 1, 1) = dr;
        A(static_cast<Eigen::Index>(k) + 1, 2) = dr * dr;
        A(static_cast<Eigen::Index>(k) + 1, 3) = dr * dr * dr;
    }
    const Eigen::MatrixXd coef = A.colPivHouseholderQr().solve(profs);
    return coef.row(1).transpose();
}

/// Minimal-graph solve on the exterior domain by Picard iteration
/// u_{k+1} = G(Q(u_k)) with sphere data g.
inline OuterSolution solve_outer_graph(const QuotientDomainGrid& grid,
                                       const std::vector<OuterField>& what_columns,
                                       const Eigen::VectorXd& g_modes, Real eps, Real nu,
                                       const OuterParams& prm, Real kappa = 20.0) {
    const int n = grid.n();
    {
        const Real gnorm = coeff_sup_norm(grid.basis(), g_modes);
        if (gnorm > kappa * std::pow(eps, n - 1))
            throw ValidationError("solve_outer_graph: boundary data exceeds the kappa eps^{n-1} ball");
    }

    OuterSolution sol;
    sol.g_modes = g_modes;

    // superposed harmonic extension as the initial iterate
    std::vector<Real> what(grid.active_count(), 0.0);
    for (Eigen::Index j = 0; j < g_modes.size(); ++j)
        if (g_modes(j) != 0.0)
            for (std::size_t a = 0; a < what.size(); ++a)
                what[a] += g_modes(j) * what_columns[static_cast<std::size_t>(j)].values[a];

    OuterField u;
    u.nu = nu;
    u.values = what;
    for (int it = 0; it < prm.max_picard; ++it) {
        const std::vector<Real> q = detail::graph_nonlinearity(grid, u.values, g_modes);
        OuterField unew;
        unew.values = u.values;  // warm start
        grid.solve(q, g_modes, unew.values, prm);
        Real diff = 0.0;
        for (std::size_t a = 0; a < u.values.size(); ++a)
            diff = std::max(diff, std::abs(unew.values[a] - u.values[a]));
        sol.picard_updates.push_back(diff);
        u.values = unew.values;
        if (diff < prm.picard_tol) break;
        if (sol.picard_updates.size() >= 2 &&
            diff > 4.0 * sol.picard_updates[sol.picard_updates.size() - 2] && diff > 1e-4)
            throw NumericalError("solve_outer_graph: Picard iteration diverged");
    }
    if (!sol.picard_updates.empty() && sol.picard_updates.back() > 1e3 * prm.picard_tol &&
        sol.picard_updates.size() == static_cast<std::size_t>(prm.max_picard))
        throw NumericalError("solve_outer_graph: Picard iteration did not settle");

    u.nu = nu;
    fit_deficiency(grid, u);
    sol.slope_c = u.deficiency_a;
    sol.offset_b = u.deficiency_b;

    // hat-V = u - What_g on [rho, 2 rho]
    const int K = 9;
    sol.vhat_radii.resize(K);
    const auto J = static_cast<Eigen::Index>(grid.basis().size());
    sol.vhat_modes.resize(K, J);
    const Real hmax = *std::max_element(grid.spacing().begin(), grid.spacing().end());
    for (int k = 0; k < K; ++k) {
        const Real r = (grid.rho() + 2.0 * hmax) +
                       (2.0 * grid.rho() - grid.rho() - 2.0 * hmax) * k / (K - 1);
        sol.vhat_radii[static_cast<std::size_t>(k)] = r;
        std::vector<Real> dv(grid.active_count());
        for (std::size_t a = 0; a < dv.size(); ++a) dv[a] = u.values[a] - what[a];
        sol.vhat_modes.row(k) = grid.mode_profile(dv, r).transpose();
    }
    {
        std::vector<Real> dv(grid.active_count());
        for (std::size_t a = 0; a < dv.size(); ++a) dv[a] = u.values[a] - what[a];
        sol.dvhat_at_rho = sphere_radial_derivative(
            grid, dv, Eigen::VectorXd::Zero(J));
        sol.vhat_norm = annulus_norm(grid.basis(), sol.vhat_radii, sol.vhat_modes);
    }
    sol.u = std::move(u);
    return sol;
}

/// ||hat-V_{g2} - hat-V_{g1}|| / ||g2 - g1|| on [rho, 2 rho].
inline Real outer_lipschitz_probe(const QuotientDomainGrid& grid,
                                  const std::vector<OuterField>& what_columns,
                                  const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, Real eps,
                                  Real nu, const OuterParams& prm) {
    const Real dg = coeff_sup_norm(grid.basis(), g2 - g1);
    if (dg == 0.0) return 0.0;
    const OuterSolution s1 = solve_outer_graph(grid, what_columns, g1, eps, nu, prm);
    const OuterSolution s2 = solve_outer_graph(grid, what_columns, g2, eps, nu, prm);
    const Eigen::MatrixXd dV = s2.vhat_modes - s1.vhat_modes;
    return annulus_norm(grid.basis(), s1.vhat_radii, dV) / dg;
}

/// Radial mean-mode solver on [0, R1] (no ball): u'' + ((n-m-1)/r) u' = f0,
/// even at 0, deficiency-annihilating Robin at R1. Used for the radial
/// closed-form checks.
inline std::vector<Real> radial_solve(int n, int m, const std::function<Real(Real)>& f0, Real R1,
                                      int cells) {
    const Real h = R1 / cells;
    const int N = cells;
    std::vector<Real> lo(static_cast<std::size_t>(N + 1), 0.0), di(static_cast<std::size_t>(N + 1), 0.0),
        up(static_cast<std::size_t>(N + 1), 0.0), rhs(static_cast<std::size_t>(N + 1), 0.0);
    const Real c1 = static_cast<Real>(n - m - 1);
    di[0] = -2.0 * (n - m) / (h * h);
    up[0] = 2.0 * (n - m) / (h * h);
    rhs[0] = f0(0.0);
    for (int i = 1; i < N; ++i) {
        const Real r = i * h;
        lo[static_cast<std::size_t>(i)] = 1.0 / (h * h) - c1 / (2.0 * r * h);
        di[static_cast<std::size_t>(i)] = -2.0 / (h * h);
        up[static_cast<std::size_t>(i)] = 1.0 / (h * h) + c1 / (2.0 * r * h);
        rhs[static_cast<std::size_t>(i)] = f0(r);
    }
    // Robin row applied at the staggered point R1 - h/2: second order and
    // tridiagonal
    const Real rmid = R1 - 0.5 * h;
    if (m <= n - 3) {
        const Real nu = 2.0 + m - n;  // exact homogeneous decay rate of the mean mode
        di[static_cast<std::size_t>(N)] = 1.0 / h - 0.5 * nu / rmid;
        lo[static_cast<std::size_t>(N)] = -1.0 / h - 0.5 * nu / rmid;
    } else if (m == n - 2) {
        const Real f = rmid * std::log(rmid);
        di[static_cast<std::size_t>(N)] = 0.5 - f / h;
        lo[static_cast<std::size_t>(N)] = 0.5 + f / h;
    } else {
        di[static_cast<std::size_t>(N)] = 0.5 - rmid / h;
        lo[static_cast<std::size_t>(N)] = 0.5 + rmid / h;
    }
    rhs[static_cast<std::size_t>(N)] = 0.0;
    return solve_tridiagonal(lo, di, up, rhs);
}

}  // namespace scherk
