#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// Exponential rate of the mode ODE at infinity:
/// gamma = sqrt(((n-2)/2)^2 + lambda).
inline Real indicial_root(int n, Real lambda) {
    if (n < 2) throw ValidationError("indicial_root: need n >= 2");
    if (lambda < 0.0) throw ValidationError("indicial_root: negative eigenvalue");
    return std::sqrt(sq(0.5 * (n - 2)) + lambda);
}

/// A spherical harmonic invariant under O(n-m) x {sign flips}, represented as
/// a homogeneous harmonic polynomial in the invariants t = |x_1|^2 (first
/// block) and u_i = y_i^2 (last m coordinates).
struct SphereMode {
    struct Term {
        Real coeff;
        int a;                  // exponent of t
        std::vector<int> b;     // exponents of u_1..u_m
    };
    int index = 0;
    int degree = 0;             // polynomial degree in x (even)
    Real eigenvalue = 0.0;      // l (l + n - 2)
    std::vector<Term> terms;

    Real eval_tu(Real t, const std::vector<Real>& u) const {
        Real s = 0.0;
        for (const auto& term : terms) {
            Real p = term.coeff;
            for (int k = 0; k < term.a; ++k) p *= t;
            for (std::size_t i = 0; i < term.b.size(); ++i)
                for (int k = 0; k < term.b[i]; ++k) p *= u[i];
            s += p;
        }
        return s;
    }
};

/// Quadrature nodes on the quotient of S^{n-1} by the symmetry group,
/// weighted so that sums reproduce full-sphere integrals of invariant
/// functions. Each node also carries its chart angles
/// (chi, omega-angles, eta-angles).
struct SphereQuad {
    int n = 2, m = 1;
    std::vector<Eigen::VectorXd> nodes;       // points of S^{n-1} in R^n
    std::vector<Real> weights;
    std::vector<std::vector<Real>> angles;    // n-1 chart angles per node
};

namespace detail {

/// Recursive positive-orthant quadrature on S^{k-1}: nodes as unit vectors
/// with all components > 0, weights integrating over the orthant.
inline void orthant_sphere_quad(int k, int n_ang,
                                std::vector<std::vector<Real>>& angle_sets,
                                std::vector<Eigen::VectorXd>& dirs,
                                std::vector<Real>& wts) {
    if (k == 1) {
        angle_sets = {{}};
        dirs = {Eigen::VectorXd::Ones(1)};
        wts = {1.0};
        return;
    }
    std::vector<std::vector<Real>> sub_angles;
    std::vector<Eigen::VectorXd> sub_dirs;
    std::vector<Real> sub_wts;
    orthant_sphere_quad(k - 1, n_ang, sub_angles, sub_dirs, sub_wts);
    const QuadRule gl = gauss_legendre(n_ang, 0.0, 0.5 * pi);
    angle_sets.clear(); dirs.clear(); wts.clear();
    for (int i = 0; i < n_ang; ++i) {
        const Real beta = gl.nodes[static_cast<std::size_t>(i)];
        const Real wfac = gl.weights[static_cast<std::size_t>(i)] * std::pow(std::sin(beta), k - 2);
        for (std::size_t q = 0; q < sub_dirs.size(); ++q) {
            Eigen::VectorXd d(k);
            d(0) = std::cos(beta);
            d.tail(k - 1) = std::sin(beta) * sub_dirs[q];
            std::vector<Real> ang = {beta};
            ang.insert(ang.end(), sub_angles[q].begin(), sub_angles[q].end());
            angle_sets.push_back(std::move(ang));
            dirs.push_back(std::move(d));
            wts.push_back(wfac * sub_wts[q]);
        }
    }
}

inline std::vector<std::vector<int>> compositions(int total, int parts) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(parts), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == parts - 1) {
            cur[static_cast<std::size_t>(pos)] = left;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            cur[static_cast<std::size_t>(pos)] = v;
            rec(pos + 1, left - v);
        }
    };
    if (parts > 0) rec(0, total);
    return out;
}

/// Closed-form integral over S^{n-1} of t^A * prod u_i^{B_i}, computed from
/// the factorized Gaussian moments.
inline Real monomial_sphere_integral(int n, int m, int A, const std::vector<int>& B) {
    int sumB = 0;
    Real logp = 0.0;
    for (int b : B) {
        sumB += b;
        logp += std::lgamma(b + 0.5);
    }
    const Real k = static_cast<Real>(n - m);
    logp += std::log(2.0) + 0.5 * k * std::log(pi) + std::lgamma(A + 0.5 * k) -
            std::lgamma(0.5 * k) - std::lgamma(0.5 * n + A + sumB);
    return std::exp(logp);
}

}  // namespace detail

/// Quadrature on the quotient with the requested Gauss orders. Weights sum
/// to vol(S^{n-1}); invariant integrands are integrated over the full sphere.
inline SphereQuad make_sphere_quadrature(int n, int m, int n_chi, int n_eta) {
    if (n < 2 || m < 1 || m > n - 1)
        throw ValidationError("make_sphere_quadrature: need n >= 2, 1 <= m <= n-1");
    SphereQuad q;
    q.n = n; q.m = m;
    const QuadRule gl_chi = gauss_legendre(n_chi, 0.0, 0.5 * pi);
    std::vector<std::vector<Real>> eta_angles;
    std::vector<Eigen::VectorXd> eta_dirs;
    std::vector<Real> eta_wts;
    detail::orthant_sphere_quad(m, n_eta, eta_angles, eta_dirs, eta_wts);
    const Real vol_omega = sphere_volume(n - m - 1);
    const Real orthant_factor = std::pow(2.0, m);

    for (int i = 0; i < n_chi; ++i) {
        const Real chi = gl_chi.nodes[static_cast<std::size_t>(i)];
        const Real wchi = gl_chi.weights[static_cast<std::size_t>(i)] *
                          std::pow(std::cos(chi), n - m - 1) * std::pow(std::sin(chi), m - 1);
        for (std::size_t e = 0; e < eta_dirs.size(); ++e) {
            // omega representative at a generic chart position: invariant
            // quantities ignore it, and local charts stay nondegenerate
            std::vector<Real> ang = {chi};
            ang.insert(ang.end(), static_cast<std::size_t>(n - m - 1), 0.8);
            ang.insert(ang.end(), eta_angles[e].begin(), eta_angles[e].end());
            q.nodes.push_back(sphere_chart_point(n, m, ang));
            q.angles.push_back(std::move(ang));
            q.weights.push_back(vol_omega * orthant_factor * wchi * eta_wts[e]);
        }
    }
    return q;
}

/// Chart point on S^{n-1} from quotient-adapted angles
/// (chi, omega-angles[n-m-1], eta-angles[m-1]).
inline Eigen::VectorXd sphere_chart_point(int n, int m, const std::vector<Real>& angles) {
    if (static_cast<int>(angles.size()) != n - 1)
        throw ValidationError("sphere_chart_point: wrong angle count");
    const Real chi = angles[0];
    auto spherical = [](const Real* a, int k) {
        // unit vector in R^k from k-1 angles
        Eigen::VectorXd v(k);
        Real s = 1.0;
        for (int i = 0; i < k - 1; ++i) {
            v(i) = s * std::cos(a[i]);
            s *= std::sin(a[i]);
        }
        v(k - 1) = s;
        return v;
    };
    Eigen::VectorXd theta(n);
    const Eigen::VectorXd omega = spherical(angles.data() + 1, n - m);
    const Eigen::VectorXd eta = spherical(angles.data() + 1 + (n - m - 1), m);
    theta.head(n - m) = std::cos(chi) * omega;
    theta.tail(m) = std::sin(chi) * eta;
    return theta;
}

/// Diagonal metric scale of each chart angle direction at the given base
/// angles; used to normalize finite-difference steps.
inline std::vector<Real> sphere_chart_scales(int n, int m, const std::vector<Real>& angles) {
    std::vector<Real> sc(static_cast<std::size_t>(n - 1), 1.0);
    const Real chi = angles[0];
    sc[0] = 1.0;
    Real acc = std::abs(std::cos(chi));
    for (int j = 0; j < n - m - 1; ++j) {
        sc[static_cast<std::size_t>(1 + j)] = std::max(acc, 1e-8);
        acc *= std::abs(std::sin(angles[static_cast<std::size_t>(1 + j)]));
    }
    acc = std::abs(std::sin(chi));
    for (int j = 0; j < m - 1; ++j) {
        sc[static_cast<std::size_t>(n - m + j)] = std::max(acc, 1e-8);
        acc *= std::abs(std::sin(angles[static_cast<std::size_t>(n - m + j)]));
    }
    return sc;
}

/// Orthonormal basis of invariant spherical harmonics of degree <= lmax,
/// with a fine quadrature and the node-evaluation matrix.
struct InvariantSphereBasis {
    int n = 3, m = 1, lmax = 0;
    std::vector<SphereMode> modes;
    SphereQuad quad;
    Eigen::MatrixXd eval_matrix;            // node x mode
    Eigen::LLT<Eigen::MatrixXd> proj_llt;   // Cholesky of E^T W E

    std::size_t size() const { return modes.size(); }

    Real eval_mode(std::size_t j, const Eigen::VectorXd& theta) const {
        Real t = 0.0;
        for (int i = 0; i < n - m; ++i) t += sq(theta(i));
        std::vector<Real> u(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) u[static_cast<std::size_t>(i)] = sq(theta(n - m + i));
        return modes[j].eval_tu(t, u);
    }

    /// Quadrature analysis: least-squares coefficients of node samples.
    Eigen::VectorXd project(const std::vector<Real>& samples) const {
        if (samples.size() != quad.nodes.size())
            throw ValidationError("project: sample count does not match quadrature");
        Eigen::VectorXd wf(static_cast<Eigen::Index>(samples.size()));
        for (std::size_t i = 0; i < samples.size(); ++i)
            wf(static_cast<Eigen::Index>(i)) = quad.weights[i] * samples[i];
        return proj_llt.solve(eval_matrix.transpose() * wf);
    }

    std::vector<Real> synthesize(const Eigen::VectorXd& coeffs) const {
        if (coeffs.size() != static_cast<Eigen::Index>(modes.size()))
            throw ValidationError("synthesize: coefficient count mismatch");
        Eigen::VectorXd v = eval_matrix * coeffs;
        return std::vector<Real>(v.data(), v.data() + v.size());
    }
};

/// Build the invariant basis by harmonic projection of symmetrized monomials
/// followed by Gram orthonormalization in L^2(S^{n-1}).
inline InvariantSphereBasis build_invariant_basis(int n, int m, int lmax,
                                                  int quad_chi = 0, int quad_eta = 0) {
    if (n < 2 || m < 1 || m > n - 1 || lmax < 0)
        throw ValidationError("build_invariant_basis: need n >= 2, 1 <= m <= n-1, lmax >= 0");
    InvariantSphereBasis basis;
    basis.n = n; basis.m = m; basis.lmax = lmax;

    for (int l = 0; l <= lmax; l += 2) {
        const int half = l / 2;
        const auto monos = detail::compositions(half, 1 + m);           // (a, b_1..b_m)
        const auto monos_lo = half > 0 ? detail::compositions(half - 1, 1 + m)
                                       : std::vector<std::vector<int>>{};
        const int dim = static_cast<int>(monos.size());
        const int dim_lo = static_cast<int>(monos_lo.size());

        // Laplacian as a matrix from degree-l invariant monomials to degree-(l-2).
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(std::max(dim_lo, 1), dim);
        auto find_lo = [&](const std::vector<int>& e) {
            for (int r = 0; r < dim_lo; ++r)
                if (monos_lo[static_cast<std::size_t>(r)] == e) return r;
            throw NumericalError("build_invariant_basis: missing monomial");
        };
        for (int c = 0; c < dim; ++c) {
            const auto& e = monos[static_cast<std::size_t>(c)];
            const int a = e[0];
            if (a > 0) {
                auto lo = e; lo[0] -= 1;
                D(find_lo(lo), c) += 2.0 * a * (n - m) + 4.0 * a * (a - 1);
            }
            for (int i = 0; i < m; ++i) {
                const int b = e[static_cast<std::size_t>(1 + i)];
                if (b > 0) {
                    auto lo = e; lo[static_cast<std::size_t>(1 + i)] -= 1;
                    D(find_lo(lo), c) += 2.0 * b * (2.0 * b - 1.0);
                }
            }
        }

        const int kdim = dim - dim_lo;  // harmonic subspace dimension
        if (kdim <= 0) continue;
        Eigen::MatrixXd K;
        if (dim_lo == 0) {
            K = Eigen::MatrixXd::Identity(dim, dim);
        } else {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeFullV);
            K = svd.matrixV().rightCols(kdim);
        }

        // Monomial Gram on the sphere, then orthonormalize the kernel columns.
        Eigen::MatrixXd G(dim, dim);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c) {
                const auto& er = monos[static_cast<std::size_t>(r)];
                const auto& ec = monos[static_cast<std::size_t>(c)];
                std::vector<int> B(static_cast<std::size_t>(m));
                for (int i = 0; i < m; ++i)
                    B[static_cast<std::size_t>(i)] = er[static_cast<std::size_t>(1 + i)] +
                                                     ec[static_cast<std::size_t>(1 + i)];
                G(r, c) = detail::monomial_sphere_integral(n, m, er[0] + ec[0], B);
            }
        const Eigen::MatrixXd W = K.transpose() * G * K;
        Eigen::LLT<Eigen::MatrixXd> llt(W);
        if (llt.info() != Eigen::Success)
            throw NumericalError("build_invariant_basis: Gram factorization failed");
        const Eigen::MatrixXd Linv =
            llt.matrixL().solve(Eigen::MatrixXd::Identity(kdim, kdim));
        const Eigen::MatrixXd B = K * Linv.transpose();  // columns orthonormal in L^2

        for (int c = 0; c < kdim; ++c) {
            SphereMode mode;
            mode.degree = l;
            mode.eigenvalue = static_cast<Real>(l) * (l + n - 2);
            for (int r = 0; r < dim; ++r) {
                if (std::abs(B(r, c)) < 1e-13) continue;
                SphereMode::Term term;
                term.coeff = B(r, c);
                term.a = monos[static_cast<std::size_t>(r)][0];
                term.b.assign(monos[static_cast<std::size_t>(r)].begin() + 1,
                              monos[static_cast<std::size_t>(r)].end());
                mode.terms.push_back(std::move(term));
            }
            basis.modes.push_back(std::move(mode));
        }
    }

    std::stable_sort(basis.modes.begin(), basis.modes.end(),
                     [](const SphereMode& a, const SphereMode& b) {
                         return a.eigenvalue < b.eigenvalue;
                     });
    for (std::size_t j = 0; j < basis.modes.size(); ++j)
        basis.modes[j].index = static_cast<int>(j);

    const int nchi = quad_chi > 0 ? quad_chi : 2 * lmax + 8;
    const int neta = quad_eta > 0 ? quad_eta : 2 * lmax + 8;
    basis.quad = make_sphere_quadrature(n, m, nchi, neta);

    const auto nq = static_cast<Eigen::Index>(basis.quad.nodes.size());
    const auto nm = static_cast<Eigen::Index>(basis.modes.size());
    basis.eval_matrix.resize(nq, nm);
    for (Eigen::Index q = 0; q < nq; ++q)
        for (Eigen::Index j = 0; j < nm; ++j)
            basis.eval_matrix(q, j) =
                basis.eval_mode(static_cast<std::size_t>(j),
                                basis.quad.nodes[static_cast<std::size_t>(q)]);
    Eigen::MatrixXd gram(nm, nm);
    gram.setZero();
    for (Eigen::Index q = 0; q < nq; ++q)
        gram += basis.quad.weights[static_cast<std::size_t>(q)] *
                basis.eval_matrix.row(q).transpose() * basis.eval_matrix.row(q);
    basis.proj_llt.compute(gram);
    if (basis.proj_llt.info() != Eigen::Success)
        throw NumericalError("build_invariant_basis: projection Gram not SPD");
    return basis;
}

/// Evaluation matrix and projection factorization of an existing basis on a
/// separate (typically coarser) quadrature.
struct BasisOnQuad {
    const InvariantSphereBasis* basis = nullptr;
    SphereQuad quad;
    Eigen::MatrixXd eval_matrix;
    Eigen::LLT<Eigen::MatrixXd> proj_llt;

    BasisOnQuad() = default;
    BasisOnQuad(const InvariantSphereBasis& b, SphereQuad q) : basis(&b), quad(std::move(q)) {
        const auto nq = static_cast<Eigen::Index>(quad.nodes.size());
        const auto nm = static_cast<Eigen::Index>(b.size());
        eval_matrix.resize(nq, nm);
        for (Eigen::Index i = 0; i < nq; ++i)
            for (Eigen::Index j = 0; j < nm; ++j)
                eval_matrix(i, j) = b.eval_mode(static_cast<std::size_t>(j),
                                                quad.nodes[static_cast<std::size_t>(i)]);
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nm, nm);
        for (Eigen::Index i = 0; i < nq; ++i)
            gram += quad.weights[static_cast<std::size_t>(i)] *
                    eval_matrix.row(i).transpose() * eval_matrix.row(i);
        proj_llt.compute(gram);
        if (proj_llt.info() != Eigen::Success)
            throw NumericalError("BasisOnQuad: projection Gram not SPD");
    }

    Eigen::VectorXd project(const std::vector<Real>& samples) const {
        if (samples.size() != quad.nodes.size())
            throw ValidationError("BasisOnQuad::project: sample count mismatch");
        Eigen::VectorXd wf(static_cast<Eigen::Index>(samples.size()));
        for (std::size_t i = 0; i < samples.size(); ++i)
            wf(static_cast<Eigen::Index>(i)) = quad.weights[i] * samples[i];
        return proj_llt.solve(eval_matrix.transpose() * wf);
    }

    std::vector<Real> synthesize(const Eigen::VectorXd& coeffs) const {
        Eigen::VectorXd v = eval_matrix * coeffs;
        return std::vector<Real>(v.data(), v.data() + v.size());
    }
};

/// Sup over basis quadrature nodes of the synthesized coefficients.
inline Real coeff_sup_norm(const InvariantSphereBasis& basis, const Eigen::VectorXd& c) {
    if (c.size() == 0) return 0.0;
    return (basis.eval_matrix * c).cwiseAbs().maxCoeff();
}

/// C^0 + C^1 style discrete norm of an annulus mode field.
inline Real annulus_norm(const InvariantSphereBasis& basis, const std::vector<Real>& radii,
                         const Eigen::MatrixXd& modes) {
    const int K = static_cast<int>(radii.size());
    Real best = 0.0;
    const Real dr = radii[1] - radii[0];
    for (int k = 0; k < K; ++k) {
        const Real v = coeff_sup_norm(basis, modes.row(k).transpose());
        Real dv = 0.0;
        if (k == 0)
            dv = coeff_sup_norm(basis, (modes.row(1) - modes.row(0)).transpose()) / dr;
        else if (k == K - 1)
            dv = coeff_sup_norm(basis, (modes.row(K - 1) - modes.row(K - 2)).transpose()) / dr;
        else
            dv = coeff_sup_norm(basis, (modes.row(k + 1) - modes.row(k - 1)).transpose()) / (2 * dr);
        best = std::max(best, v + dv);
    }
    return best;
}

}  // namespace scherk
