#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "scherk/catenoid.hpp"
#include "scherk/common.hpp"
#include "scherk/lattice.hpp"
#include "scherk/mean_curvature.hpp"
#include "scherk/neck.hpp"
#include "scherk/outer.hpp"
#include "scherk/sphere_basis.hpp"

namespace scherk {

struct GlueParams {
    int lmax = 6;
    Real profile_smax = 9.0;
    Real rho = 0.0;        // default: quarter of the minimal half-period
    Real R1_factor = 0.0;  // default 8 for m = n-1, 40 otherwise
    Real delta = 0.0;
    Real nu = 0.0;         // default -1 for m >= n-2, (2+m-n)/2 otherwise
    Real outer_h = 0.0;    // default rho / 12
    NeckParams neck;
    OuterParams outer;
    Real mismatch_factor = 1e-8;  // tolerance = factor * eps
    int max_match_iter = 40;
};

/// Dirichlet-to-Neumann matching operator on the truncated invariant basis:
/// U h = rho d_r (W_h - What_h) at the sphere, assembled column by column.
struct DtnOperator {
    Eigen::MatrixXd Dint;  // interior part: diag(l_j)
    Eigen::MatrixXd Dext;  // exterior part: rho d_r What_{e_j}
    Eigen::MatrixXd U;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Real smallest_singular = 0.0;
};

/// Shared state for one glued configuration; reusable across eps.
class GlueContext {
public:
    GlueContext(int n, int m, const Lattice& lattice, GlueParams params = {})
        : n_(n), m_(m), prm_(params), lattice_(lattice),
          basis_(build_invariant_basis(n, m, params.lmax)),
          profile_(solve_profile(n, params.profile_smax, 1e-8)),
          neck_ctx_(basis_, profile_, params.neck) {
        Real min_half = 1e300;
        for (int k = 0; k < m; ++k) min_half = std::min(min_half, 0.5 * lattice.A(k, k));
        rho_ = prm_.rho > 0.0 ? prm_.rho : 0.25 * min_half;
        const Real r1f = prm_.R1_factor > 0.0 ? prm_.R1_factor : (m == n - 1 ? 8.0 : 40.0);
        R1_ = r1f * rho_;
        nu_ = prm_.nu != 0.0 ? prm_.nu : (m >= n - 2 ? -1.0 : 0.5 * (2.0 + m - n));
        delta_ = prm_.delta;
        const Real h = prm_.outer_h > 0.0 ? prm_.outer_h : rho_ / 12.0;
        grid_ = std::make_unique<QuotientDomainGrid>(n, m, lattice, rho_, R1_, h, basis_, nu_);

        const auto J = static_cast<Eigen::Index>(basis_.size());
        for (Eigen::Index j = 0; j < J; ++j)
            columns_.push_back(
                harmonic_extension_outer(*grid_, Eigen::VectorXd::Unit(J, j), nu_, prm_.outer));

        dtn_.Dint = Eigen::MatrixXd::Zero(J, J);
        for (Eigen::Index j = 0; j < J; ++j)
            dtn_.Dint(j, j) = basis_.modes[static_cast<std::size_t>(j)].degree;
        dtn_.Dext.resize(J, J);
        for (Eigen::Index j = 0; j < J; ++j)
            dtn_.Dext.col(j) = rho_ * sphere_radial_derivative(*grid_, columns_[static_cast<std::size_t>(j)].values,
                                                               Eigen::VectorXd::Unit(J, j));
        dtn_.U = dtn_.Dint - dtn_.Dext;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(dtn_.U);
        dtn_.smallest_singular = svd.singularValues()(J - 1);
        if (dtn_.smallest_singular < 1e-10)
            throw NumericalError("GlueContext: matching operator is singular, smallest singular value " +
                                 std::to_string(dtn_.smallest_singular));
        dtn_.lu.compute(dtn_.U);
    }

    int n() const { return n_; }
    int m() const { return m_; }
    Real rho() const { return rho_; }
    Real R1() const { return R1_; }
    Real nu() const { return nu_; }
    Real delta() const { return delta_; }
    const GlueParams& params() const { return prm_; }
    const Lattice& lattice() const { return lattice_; }
    const InvariantSphereBasis& basis() const { return basis_; }
    const CatenoidProfile& profile() const { return profile_; }
    const NeckContext& neck_context() const { return neck_ctx_; }
    const QuotientDomainGrid& grid() const { return *grid_; }
    const std::vector<OuterField>& what_columns() const { return columns_; }
    const DtnOperator& dtn() const { return dtn_; }

    GlueContext(const GlueContext&) = delete;
    GlueContext& operator=(const GlueContext&) = delete;

private:
    int n_, m_;
    GlueParams prm_;
    Lattice lattice_;
    InvariantSphereBasis basis_;
    CatenoidProfile profile_;
    NeckContext neck_ctx_;
    Real rho_ = 0.0, R1_ = 0.0, nu_ = 0.0, delta_ = 0.0;
    std::unique_ptr<QuotientDomainGrid> grid_;
    std::vector<OuterField> columns_;
    DtnOperator dtn_;
};

struct MatchState {
    Eigen::VectorXd g, h;
    int iterations = 0;
    bool converged = false;
    Real dirichlet_mismatch = 0.0;
    Real neumann_mismatch = 0.0;
    Real g_norm = 0.0, h_norm = 0.0;
    std::vector<Real> update_history;
    NeckSolution neck;
    OuterSolution outer;
};

/// Fixed point of the boundary-matching system: the two graph functions
///   eps c_inf - What_g - hatV_g   and   eps c_inf - W_h - V_{eps,h}
/// agree in value and radial derivative on the matching sphere.
inline MatchState match_boundary(const GlueContext& ctx, Real eps) {
    const auto J = static_cast<Eigen::Index>(ctx.basis().size());
    const Real rho = ctx.rho();
    MatchState st;
    st.g = Eigen::VectorXd::Zero(J);
    st.h = Eigen::VectorXd::Zero(J);

    const Real tol = ctx.params().mismatch_factor * eps;
    OuterSolution outer_warm;
    for (st.iterations = 1; st.iterations <= ctx.params().max_match_iter; ++st.iterations) {
        st.neck = solve_neck(ctx.neck_context(), st.h, eps, rho, ctx.delta());
        st.outer = solve_outer_graph(ctx.grid(), ctx.what_columns(), st.g, eps, ctx.nu(),
                                     ctx.params().outer);

        const Eigen::VectorXd alpha = st.neck.V_at_rho;
        const Eigen::VectorXd neumann_gap = ctx.dtn().Dext * st.g + rho * st.outer.dvhat_at_rho -
                                            ctx.dtn().Dint * st.h - rho * st.neck.dV_at_rho;
        st.dirichlet_mismatch = coeff_sup_norm(ctx.basis(), st.g - st.h - alpha);
        st.neumann_mismatch = coeff_sup_norm(ctx.basis(), neumann_gap) / rho;
        if (st.dirichlet_mismatch <= tol && st.neumann_mismatch <= tol) {
            st.converged = true;
            break;
        }

        // frozen-correction linear update through the matching operator
        const Eigen::VectorXd hnew = ctx.dtn().lu.solve(
            ctx.dtn().Dext * alpha + rho * (st.outer.dvhat_at_rho - st.neck.dV_at_rho));
        const Eigen::VectorXd gnew = hnew + alpha;
        const Real upd = std::max(coeff_sup_norm(ctx.basis(), gnew - st.g),
                                  coeff_sup_norm(ctx.basis(), hnew - st.h));
        st.update_history.push_back(upd);
        st.g = gnew;
        st.h = hnew;

        const Real ball = 1e3 * std::pow(eps, ctx.n() - 1);
        if (coeff_sup_norm(ctx.basis(), st.g) > ball || coeff_sup_norm(ctx.basis(), st.h) > ball)
            throw NumericalError("match_boundary: iterate left the contraction ball");
    }
    if (!st.converged)
        throw NumericalError("match_boundary: no convergence within the iteration budget");
    st.g_norm = coeff_sup_norm(ctx.basis(), st.g);
    st.h_norm = coeff_sup_norm(ctx.basis(), st.h);
    return st;
}

struct EndData {
    Real c_eps = 0.0;
    Real d_eps = 0.0;
    Real window_rel_diff = 0.0;
};

/// Least-squares fit of the upper end to c_eps zeta_m(r1) + d_eps on two
/// tail windows; the windows must agree.
inline EndData extract_end_data(const GlueContext& ctx, const MatchState& st, Real eps) {
    const int n = ctx.n(), m = ctx.m();
    const auto& grid = ctx.grid();
    const int N0 = grid.dims()[0] - 1;
    const Real h0 = grid.spacing()[0];
    const Real c_inf = ctx.profile().c_inf();

    auto fit_window = [&](Real lo, Real hi) {
        std::vector<Real> zs, vals;
        for (int i = static_cast<int>(lo * N0); i <= static_cast<int>(hi * N0); ++i) {
            const Real r = i * h0;
            if (r <= ctx.rho()) continue;
            zs.push_back(zeta_m(n, m, r));
            vals.push_back(eps * c_inf - grid.plane_average(st.outer.u.values, i));
        }
        if (zs.size() < 3) throw ValidationError("extract_end_data: tail window too short");
        if (m <= n - 3) {
            Real mean = 0.0;
            for (Real v : vals) mean += v;
            return std::pair<Real, Real>(0.0, mean / static_cast<Real>(vals.size()));
        }
        const auto [d, c] = fit_line(zs, vals);
        return std::pair<Real, Real>(c, d);
    };

    const auto [c1, d1] = fit_window(0.6, 0.8);
    const auto [c2, d2] = fit_window(0.8, 1.0);
    EndData out;
    out.c_eps = 0.5 * (c1 + c2);
    out.d_eps = 0.5 * (d1 + d2);
    const Real scale = m >= n - 2 ? std::max(std::abs(out.c_eps), 1e-300)
                                  : std::max(std::abs(out.d_eps), 1e-300);
    out.window_rel_diff = m >= n - 2 ? std::abs(c1 - c2) / scale : std::abs(d1 - d2) / scale;
    if (out.window_rel_diff > 0.01)
        throw NumericalError("extract_end_data: tail windows disagree beyond 1 percent; tail too short");
    return out;
}

struct BalanceReport {
    std::vector<Real> heights;
    std::vector<Real> flux;          // vertical flux through the cut at each height
    Real neck_flux = 0.0;            // flux through the s = 0 neck cut
    Real catenoid_control = 0.0;     // same cut on the exact scaled catenoid
    Real slope_ratio = 0.0;          // c_eps / eps^{n-1}
    Real volume_identity = 0.0;      // vol(T^{n-1}) c_eps / (eps^{n-1} vol(S^{n-1}))
};

namespace detail {

/// Vertical flux of the neck immersion through the slice {s = s0}:
/// integral over the slice of <e_z, conormal>.
inline Real neck_slice_flux(const GlueContext& ctx, NeckImmersion& imm, Real s0) {
    const auto& work = ctx.neck_context().work;
    const int n = ctx.n(), m = ctx.m();
    const int d = n;
    Real total = 0.0;
    const Real fd = 1e-4;
    for (std::size_t q = 0; q < work.quad.nodes.size(); ++q) {
        const auto& base_angles = work.quad.angles[q];
        auto point_at = [&](Real s, const std::vector<Real>& ang) {
            const Eigen::VectorXd theta = sphere_chart_point(n, m, ang);
            Eigen::VectorXd erow(static_cast<Eigen::Index>(ctx.basis().size()));
            for (std::size_t j = 0; j < ctx.basis().size(); ++j)
                erow(static_cast<Eigen::Index>(j)) = ctx.basis().eval_mode(j, theta);
            return imm.point(s, theta, erow);
        };
        Eigen::MatrixXd tan(n + 1, d - 1);
        for (int k = 0; k < d - 1; ++k) {
            std::vector<Real> ap = base_angles, am = base_angles;
            ap[static_cast<std::size_t>(k)] += fd;
            am[static_cast<std::size_t>(k)] -= fd;
            tan.col(k) = (point_at(s0, ap) - point_at(s0, am)) / (2.0 * fd);
        }
        Eigen::VectorXd ts =
            (point_at(s0 + fd, base_angles) - point_at(s0 - fd, base_angles)) / (2.0 * fd);

        // conormal: ts orthogonalized against the slice tangents
        const Eigen::MatrixXd G = tan.transpose() * tan;
        const Eigen::VectorXd c = G.ldlt().solve(tan.transpose() * ts);
        Eigen::VectorXd nu_vec = ts - tan * c;
        nu_vec.normalize();
        if (nu_vec(n) < 0.0) nu_vec = -nu_vec;  // orient upward

        // slice measure relative to the sphere measure of the chart
        const auto scales = sphere_chart_scales(n, m, base_angles);
        Real omega = 1.0;
        for (Real sc : scales) omega *= sc;
        const Real dA = std::sqrt(std::max(G.determinant(), 0.0)) / omega;
        total += work.quad.weights[q] * nu_vec(n) * dA;
    }
    return total;
}

/// Vertical flux of the outer graph through the cut {r1 = const}: the
/// conserved quantity of the minimal-graph divergence form.
inline Real outer_cut_flux(const GlueContext& ctx, const std::vector<Real>& u, int i_cut) {
    const auto& grid = ctx.grid();
    const int D = grid.axes();
    const Real h0 = grid.spacing()[0];
    if (i_cut < 1 || i_cut > grid.dims()[0] - 2)
        throw ValidationError("outer_cut_flux: cut index out of range");

    Real total = 0.0, wsum = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(D), 0);
    idx[0] = i_cut;
    std::function<void(int, Real)> rec = [&](int d, Real w) {
        if (d == D) {
            auto at = [&](std::vector<int> v) {
                const std::ptrdiff_t a = grid.active_of_flat(grid.flat(v));
                if (a < 0) throw GeometryError("outer_cut_flux: cut touches the ball");
                return u[static_cast<std::size_t>(a)];
            };
            auto ip = idx, im = idx;
            ip[0] += 1;
            im[0] -= 1;
            const Real dur = (at(ip) - at(im)) / (2.0 * h0);
            Real grad2 = dur * dur;
            for (int k = 1; k < D; ++k) {
                auto kp = idx, km = idx;
                kp[static_cast<std::size_t>(k)] += 1;
                km[static_cast<std::size_t>(k)] -= 1;
                if (km[static_cast<std::size_t>(k)] < 0) km[static_cast<std::size_t>(k)] = 1;
                if (kp[static_cast<std::size_t>(k)] >= grid.dims()[static_cast<std::size_t>(k)])
                    kp[static_cast<std::size_t>(k)] = grid.dims()[static_cast<std::size_t>(k)] - 2;
                const Real duk = (at(kp) - at(km)) /
                                 (2.0 * grid.spacing()[static_cast<std::size_t>(k)]);
                grad2 += duk * duk;
            }
            // z = eps c_inf - u: vertical flux density through the cut is
            // -du/dr / sqrt(1 + |grad u|^2), pointing toward +x1
            total += w * (-dur) / std::sqrt(1.0 + grad2);
            wsum += w;
            return;
        }
        for (int j = 0; j < grid.dims()[static_cast<std::size_t>(d)]; ++j) {
            idx[static_cast<std::size_t>(d)] = j;
            const Real wj = (j == 0 || j == grid.dims()[static_cast<std::size_t>(d)] - 1) ? 0.5 : 1.0;
            rec(d + 1, w * wj);
        }
    };
    rec(1, 1.0);

    Real cell = 1.0;
    for (int k = 1; k < D; ++k)
        cell *= grid.spacing()[static_cast<std::size_t>(k)];
    Real torus_factor = std::pow(2.0, ctx.m());  // orthant to full torus
    // two far ends (x1 and -x1)
    return 2.0 * torus_factor * total * cell;
}

}  // namespace detail

/// Balancing check for m = n-1: the vertical flux is conserved across
/// cross-sections and identifies the end slope.
inline BalanceReport balancing_check(const GlueContext& ctx, const MatchState& st, Real eps,
                                     const std::vector<Real>& cut_radii) {
    if (ctx.m() != ctx.n() - 1)
        throw ValidationError("balancing_check: requires m = n-1");
    const int n = ctx.n();
    BalanceReport rep;

    NeckImmersion imm(ctx.basis(), ctx.profile(), ctx.neck_context().work, eps, ctx.rho(),
                      ctx.params().neck.h_loc);
    imm.set_w(st.neck.w.coeffs, st.neck.w.h, true);
    rep.neck_flux = detail::neck_slice_flux(ctx, imm, 0.0);

    NeckImmersion cat(ctx.basis(), ctx.profile(), ctx.neck_context().work, eps, ctx.rho(),
                      ctx.params().neck.h_loc);
    Eigen::MatrixXd zero = st.neck.w.coeffs;
    zero.setZero();
    cat.set_w(zero, st.neck.w.h, true);
    rep.catenoid_control = detail::neck_slice_flux(ctx, cat, 0.0);

    for (Real rc : cut_radii) {
        const int i = static_cast<int>(std::round(rc / ctx.grid().spacing()[0]));
        rep.heights.push_back(eps * ctx.profile().c_inf() -
                              ctx.grid().plane_average(st.outer.u.values, i));
        rep.flux.push_back(detail::outer_cut_flux(ctx, st.outer.u.values, i));
    }

    const EndData end = extract_end_data(ctx, st, eps);
    rep.slope_ratio = end.c_eps / std::pow(eps, n - 1);
    rep.volume_identity = lattice_volume(ctx.lattice()) * end.c_eps /
                          (std::pow(eps, n - 1) * sphere_volume(n - 1));
    return rep;
}

/// Assembled fundamental-domain representation of the glued hypersurface:
/// a planar section mesh for export plus the interface, symmetry и curvature
/// certificates.
struct GluedSurface {
    int n = 3, m = 2;
    Real eps = 0.0, rho = 0.0;
    std::vector<Eigen::Vector3d> vertices;       // section coordinates (x1, x2_1, z)
    std::vector<std::array<int, 4>> quads;
    Real c0_gap = 0.0;
    Real c1_jump = 0.0;
    Real symmetry_defect = 0.0;
    Real neck_residual = 0.0;         // sup |H| along the neck at an independent stencil
    Real outer_residual = 0.0;        // sup |H| of the outer graph patch evaluator
    EndData end;
};

inline GluedSurface assemble_surface(const GlueContext& ctx, const MatchState& st, Real eps) {
    GluedSurface surf;
    surf.n = ctx.n();
    surf.m = ctx.m();
    surf.eps = eps;
    surf.rho = ctx.rho();

    const int n = ctx.n(), m = ctx.m();
    const auto& grid = ctx.grid();
    const Real c_inf = ctx.profile().c_inf();

    // interface certificates from the matched boundary quantities
    surf.c0_gap = st.dirichlet_mismatch;
    surf.c1_jump = st.neumann_mismatch;

    NeckImmersion imm(ctx.basis(), ctx.profile(), ctx.neck_context().work, eps, ctx.rho(),
                      0.5 * ctx.params().neck.h_loc);
    imm.set_w(st.neck.w.coeffs, st.neck.w.h, true);

    // symmetry defect: evaluate the immersion height at theta and at a
    // sign-flipped theta
    {
        Real defect = 0.0;
        const auto& quad = ctx.basis().quad;
        for (std::size_t q = 0; q < quad.nodes.size(); q += 7) {
            Eigen::VectorXd theta = quad.nodes[q];
            Eigen::VectorXd flipped = theta;
            flipped(n - 1) = -flipped(n - 1);
            Eigen::VectorXd e1(static_cast<Eigen::Index>(ctx.basis().size()));
            Eigen::VectorXd e2(static_cast<Eigen::Index>(ctx.basis().size()));
            for (std::size_t j = 0; j < ctx.basis().size(); ++j) {
                e1(static_cast<Eigen::Index>(j)) = ctx.basis().eval_mode(j, theta);
                e2(static_cast<Eigen::Index>(j)) = ctx.basis().eval_mode(j, flipped);
            }
            for (Real s : {0.0, 0.4 * st.neck.s_eps, 0.9 * st.neck.s_eps}) {
                const Eigen::VectorXd p1 = imm.point(s, theta, e1);
                const Eigen::VectorXd p2 = imm.point(s, flipped, e2);
                defect = std::max(defect, std::abs(p1(n) - p2(n)));
                defect = std::max(defect, std::abs(p1(n) + imm.point(-s, theta, e1)(n)));
            }
        }
        surf.symmetry_defect = defect;
    }

    // independent curvature sweep along the neck (halved stencil step)
    {
        Real worst = 0.0;
        const int NS = 24;
        for (int i = 1; i < NS; ++i) {
            const Real s = st.neck.s_eps * (i / static_cast<Real>(NS) - 0.5) * 1.8;
            for (std::size_t q = 0; q < ctx.neck_context().work.quad.nodes.size(); q += 5)
                worst = std::max(worst, std::abs(imm.mean_curvature(s, q)));
        }
        surf.neck_residual = worst;
    }

    // outer graph curvature on a slab patch clear of the ball
    {
        const int i0 = static_cast<int>(std::ceil((ctx.rho() + 2.0 * grid.spacing()[0]) /
                                                  grid.spacing()[0]));
        const int i1 = grid.dims()[0] - 2;
        ImmersionPatch patch;
        patch.dims = {i1 - i0 + 1};
        for (int k = 1; k < grid.axes(); ++k) patch.dims.push_back(grid.dims()[static_cast<std::size_t>(k)]);
        patch.spacing = grid.spacing();
        std::size_t tot = 1;
        for (int dno : patch.dims) tot *= static_cast<std::size_t>(dno);
        patch.points.resize(tot);
        patch.normals.resize(tot);
        std::vector<int> pidx(static_cast<std::size_t>(grid.axes()), 0);
        for (std::size_t f = 0; f < tot; ++f) {
            std::size_t rem = f;
            for (int d = grid.axes() - 1; d >= 0; --d) {
                pidx[static_cast<std::size_t>(d)] =
                    static_cast<int>(rem % static_cast<std::size_t>(patch.dims[static_cast<std::size_t>(d)]));
                rem /= static_cast<std::size_t>(patch.dims[static_cast<std::size_t>(d)]);
            }
            std::vector<int> gidx = pidx;
            gidx[0] += i0;
            const auto a = grid.active_of_flat(grid.flat(gidx));
            const auto x = grid.coords(gidx);
            Eigen::VectorXd p(n + 1);
            p(0) = x[0];
            for (int k = 0; k < m; ++k) p(1 + k) = x[static_cast<std::size_t>(k + 1)];
            p(n) = eps * c_inf - st.outer.u.values[static_cast<std::size_t>(a)];
            Eigen::VectorXd nor = Eigen::VectorXd::Zero(n + 1);
            nor(n) = 1.0;
            patch.points[f] = p;
            patch.normals[f] = nor;
        }
        const std::vector<Real> H = mean_curvature_immersion(patch);
        Real worst = 0.0;
        for (Real v : H) worst = std::max(worst, std::abs(v));
        surf.outer_residual = worst;
    }

    surf.end = extract_end_data(ctx, st, eps);

    // section mesh in the (x1, x2_1, z) plane: neck tube plus the outer
    // graph strips on both x1 signs and both z signs
    {
        auto add_quad_grid = [&](const std::vector<std::vector<Eigen::Vector3d>>& rows) {
            const int base = static_cast<int>(surf.vertices.size());
            const int R = static_cast<int>(rows.size());
            const int C = static_cast<int>(rows[0].size());
            for (const auto& row : rows)
                for (const auto& v : row) surf.vertices.push_back(v);
            for (int i = 0; i + 1 < R; ++i)
                for (int j = 0; j + 1 < C; ++j)
                    surf.quads.push_back({base + i * C + j, base + i * C + j + 1,
                                          base + (i + 1) * C + j + 1, base + (i + 1) * C + j});
        };

        const int NS = 48, NA = 49;
        std::vector<std::vector<Eigen::Vector3d>> neck_rows;
        for (int i = 0; i <= NS; ++i) {
            const Real s = st.neck.s_eps * (2.0 * i / NS - 1.0);
            std::vector<Eigen::Vector3d> row;
            for (int l = 0; l < NA; ++l) {
                const Real alpha = 2.0 * pi * l / (NA - 1);
                Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
                theta(0) = std::cos(alpha);
                theta(n - m) = std::sin(alpha);
                Eigen::VectorXd erow(static_cast<Eigen::Index>(ctx.basis().size()));
                for (std::size_t j = 0; j < ctx.basis().size(); ++j)
                    erow(static_cast<Eigen::Index>(j)) = ctx.basis().eval_mode(j, theta);
                const Eigen::VectorXd p = imm.point(s, theta, erow);
                row.emplace_back(p(0), p(n - m), p(n));
            }
            neck_rows.push_back(std::move(row));
        }
        add_quad_grid(neck_rows);

        const Real hmax = *std::max_element(grid.spacing().begin(), grid.spacing().end());
        const Real rin = ctx.rho() + 2.0 * hmax;
        const Real a_half = 0.5 * ctx.lattice().A(0, 0);
        auto graph_z = [&](Real x1, Real x21) {
            std::vector<Real> xc(static_cast<std::size_t>(grid.axes()), 0.0);
            xc[0] = std::abs(x1);
            xc[1] = std::abs(x21);
            return eps * c_inf - grid.interpolate(st.outer.u.values, xc);
        };
        const int NR = 33, NT = 33;
        for (Real sx : {1.0, -1.0})
            for (Real sz : {1.0, -1.0}) {
                // main strip, clear of the ball in x1
                std::vector<std::vector<Eigen::Vector3d>> rows;
                for (int k = 0; k < NR; ++k) {
                    const Real x1 = rin + (0.95 * ctx.R1() - rin) * k / (NR - 1);
                    std::vector<Eigen::Vector3d> row;
                    for (int l = 0; l < NT; ++l) {
                        const Real x21 = -a_half + 2.0 * a_half * l / (NT - 1);
                        row.emplace_back(sx * x1, x21, sz * graph_z(x1, x21));
                    }
                    rows.push_back(std::move(row));
                }
                add_quad_grid(rows);
                // side lobes beside the ball
                for (Real sy : {1.0, -1.0}) {
                    std::vector<std::vector<Eigen::Vector3d>> lobe;
                    for (int k = 0; k < 9; ++k) {
                        const Real x21 = sy * (rin + (a_half - rin) * k / 8.0);
                        std::vector<Eigen::Vector3d> row;
                        for (int l = 0; l < 17; ++l) {
                            const Real x1 = -rin + 2.0 * rin * l / 16.0;
                            row.emplace_back(sx * x1, x21, sz * graph_z(x1, x21));
                        }
                        lobe.push_back(std::move(row));
                    }
                    add_quad_grid(lobe);
                }
            }
    }
    return surf;
}

}  // namespace scherk
