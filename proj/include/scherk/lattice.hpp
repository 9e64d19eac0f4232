#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// Flat torus T^m = R^m / A Z^m. Columns of A are the lattice generators.
struct Lattice {
    int m = 1;
    Eigen::MatrixXd A;
    bool normalized = false;

    Lattice() : A(Eigen::MatrixXd::Identity(1, 1)) {}
    Lattice(int dim, Eigen::MatrixXd gens, bool norm = false)
        : m(dim), A(std::move(gens)), normalized(norm) {
        if (m < 1 || A.rows() != m || A.cols() != m)
            throw ValidationError("Lattice: generator matrix must be m x m with m >= 1");
        if (std::abs(A.determinant()) < 1e-14)
            throw ValidationError("Lattice: singular generator matrix");
    }

    static Lattice rectangular(const std::vector<Real>& diag) {
        const int m = static_cast<int>(diag.size());
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) A(i, i) = diag[i];
        return Lattice(m, A);
    }

    bool is_rectangular(Real tol = 1e-12) const {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                if (i != j && std::abs(A(i, j)) > tol * A.cwiseAbs().maxCoeff()) return false;
        return true;
    }

    /// True when every sign-diagonal D maps the lattice to itself,
    /// i.e. A^{-1} D A is an integer matrix for each coordinate flip.
    bool sign_symmetric(Real tol = 1e-9) const {
        const Eigen::MatrixXd Ainv = A.inverse();
        for (int flip = 0; flip < m; ++flip) {
            Eigen::VectorXd d = Eigen::VectorXd::Ones(m);
            d(flip) = -1.0;
            const Eigen::MatrixXd M = Ainv * d.asDiagonal() * A;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    if (std::abs(M(i, j) - std::round(M(i, j))) > tol) return false;
        }
        return true;
    }
};

/// Sign-diagonal invariant Laplace eigenmode on the torus: an orbit of dual
/// vectors collapsed to a sum of cosines, L^2-normalized.
struct TorusMode {
    int index = 0;
    std::vector<long> wavevector;   // orbit representative k, so that kappa = 2 pi A^{-T} k
    Real eigenvalue = 0.0;          // mu = 4 pi^2 |A^{-T} k|^2
    Real amplitude_norm = 1.0;
    std::vector<Eigen::VectorXd> orbit_duals;  // +/- deduplicated orbit of kappa
};

struct TorusSpectrum {
    Lattice lattice;
    Real mu_max = 0.0;
    std::vector<TorusMode> modes;
};

inline Real lattice_volume(const Lattice& L) {
    const Real det = L.A.determinant();
    if (std::abs(det) < 1e-14) throw ValidationError("lattice_volume: singular matrix");
    return std::abs(det);
}

/// Rescale so that vol(T^m) = vol(S^m); the result is marked normalized.
inline Lattice normalize_volume(const Lattice& L) {
    const Real vol = lattice_volume(L);
    const Real target = sphere_volume(L.m);
    const Real t = std::pow(target / vol, 1.0 / static_cast<Real>(L.m));
    Lattice out(L.m, t * L.A, true);
    return out;
}

namespace detail {

/// Orbit of the dual vector of k under all sign diagonals, deduplicated
/// modulo kappa ~ -kappa. Returned in integer wavevector form.
inline std::vector<std::vector<long>> sign_orbit(const Lattice& L, const std::vector<long>& k) {
    const int m = L.m;
    const Eigen::MatrixXd T = L.A.transpose() * L.A.inverse().transpose();  // k' = A^T D A^{-T} k
    std::set<std::vector<long>> seen;
    std::vector<std::vector<long>> reps;
    for (int mask = 0; mask < (1 << m); ++mask) {
        Eigen::VectorXd kv(m);
        for (int i = 0; i < m; ++i) kv(i) = static_cast<Real>(k[static_cast<std::size_t>(i)]);
        Eigen::VectorXd d = Eigen::VectorXd::Ones(m);
        for (int i = 0; i < m; ++i)
            if (mask & (1 << i)) d(i) = -1.0;
        // A^T D A^{-T} k: apply A^{-T}, flip signs, return through A^T.
        Eigen::VectorXd kp = L.A.transpose() * (d.asDiagonal() * (L.A.inverse().transpose() * kv));
        std::vector<long> ki(static_cast<std::size_t>(m)), kneg(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            const Real r = std::round(kp(i));
            if (std::abs(kp(i) - r) > 1e-6)
                throw ValidationError("sign_orbit: lattice is not sign-symmetric");
            ki[static_cast<std::size_t>(i)] = static_cast<long>(r);
            kneg[static_cast<std::size_t>(i)] = -static_cast<long>(r);
        }
        const std::vector<long>& canon = std::max(ki, kneg);
        if (seen.insert(canon).second) reps.push_back(canon);
    }
    return reps;
}

}  // namespace detail

/// All sign-invariant eigenmodes with eigenvalue <= mu_max, sorted by
/// eigenvalue (ties broken by wavevector). Mode 0 is the constant
/// vol(T^m)^{-1/2}.
inline TorusSpectrum invariant_torus_spectrum(const Lattice& L, Real mu_max) {
    if (mu_max <= 0.0) throw ValidationError("invariant_torus_spectrum: mu_max must be positive");
    if (!L.sign_symmetric())
        throw ValidationError("invariant_torus_spectrum: lattice is not invariant under sign diagonals");
    const int m = L.m;
    const Real vol = lattice_volume(L);
    const Eigen::MatrixXd dualT = 2.0 * pi * L.A.inverse().transpose();

    // |k| <= sigma_max(A) * sqrt(mu_max) / (2 pi) bounds the search box.
    const Real sigma = L.A.jacobiSvd().singularValues()(0);
    const long kb = static_cast<long>(std::ceil(sigma * std::sqrt(mu_max) / (2.0 * pi))) + 1;

    std::set<std::vector<long>> taken;
    std::vector<TorusMode> modes;

    std::vector<long> k(static_cast<std::size_t>(m), -kb);
    while (true) {
        Eigen::VectorXd kv(m);
        for (int i = 0; i < m; ++i) kv(i) = static_cast<Real>(k[static_cast<std::size_t>(i)]);
        const Eigen::VectorXd kappa = dualT * kv;
        const Real mu = kappa.squaredNorm();
        if (mu <= mu_max * (1.0 + 1e-12)) {
            auto orbit = detail::sign_orbit(L, k);
            std::vector<long> canon = *std::max_element(orbit.begin(), orbit.end());
            if (taken.insert(canon).second) {
                TorusMode mode;
                mode.wavevector = canon;
                mode.eigenvalue = mu;
                for (const auto& kk : orbit) {
                    Eigen::VectorXd kkv(m);
                    for (int i = 0; i < m; ++i) kkv(i) = static_cast<Real>(kk[static_cast<std::size_t>(i)]);
                    mode.orbit_duals.push_back(dualT * kkv);
                }
                const bool zero = mu < 1e-14;
                const Real orbit_sz = static_cast<Real>(mode.orbit_duals.size());
                mode.amplitude_norm = zero ? 1.0 / std::sqrt(vol)
                                           : std::sqrt(2.0 / (orbit_sz * vol));
                modes.push_back(std::move(mode));
            }
        }
        // advance multi-index
        int pos = 0;
        while (pos < m && ++k[static_cast<std::size_t>(pos)] > kb) {
            k[static_cast<std::size_t>(pos)] = -kb;
            ++pos;
        }
        if (pos == m) break;
    }

    std::sort(modes.begin(), modes.end(), [](const TorusMode& a, const TorusMode& b) {
        if (a.eigenvalue != b.eigenvalue) return a.eigenvalue < b.eigenvalue;
        return a.wavevector < b.wavevector;
    });
    for (std::size_t i = 0; i < modes.size(); ++i) modes[i].index = static_cast<int>(i);

    TorusSpectrum spec;
    spec.lattice = L;
    spec.mu_max = mu_max;
    spec.modes = std::move(modes);
    return spec;
}

/// E_i(x) = amplitude_norm * sum over the +/- deduplicated orbit of cos(kappa . x).
inline Real eval_torus_mode(const TorusMode& mode, const Lattice&, const Eigen::VectorXd& x) {
    if (mode.eigenvalue < 1e-14) return mode.amplitude_norm;
    Real s = 0.0;
    for (const auto& kappa : mode.orbit_duals) s += std::cos(kappa.dot(x));
    return mode.amplitude_norm * s;
}

}  // namespace scherk
