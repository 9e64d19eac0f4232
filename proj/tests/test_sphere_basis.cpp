#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "scherk/sphere_basis.hpp"

using namespace scherk;
using Catch::Approx;

TEST_CASE("quadrature integrates constants to the sphere volume") {
    for (auto [n, m] : {std::pair{3, 1}, {3, 2}, {4, 2}, {5, 2}, {4, 3}}) {
        const SphereQuad q = make_sphere_quadrature(n, m, 20, 20);
        Real sum = 0.0;
        for (Real w : q.weights) sum += w;
        CHECK(sum == Approx(sphere_volume(n - 1)).epsilon(1e-12));
    }
}

TEST_CASE("basis is orthonormal under quadrature") {
    for (auto [n, m] : {std::pair{3, 2}, {4, 1}, {5, 2}}) {
        const InvariantSphereBasis basis = build_invariant_basis(n, m, 6);
        const auto nm = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nm, nm);
        for (std::size_t q = 0; q < basis.quad.nodes.size(); ++q)
            gram += basis.quad.weights[q] *
                    basis.eval_matrix.row(static_cast<Eigen::Index>(q)).transpose() *
                    basis.eval_matrix.row(static_cast<Eigen::Index>(q));
        CHECK((gram - Eigen::MatrixXd::Identity(nm, nm)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("degree structure") {
    const InvariantSphereBasis basis = build_invariant_basis(3, 2, 6);
    // constant mode
    CHECK(basis.modes[0].degree == 0);
    Eigen::VectorXd north(3);
    north << 0, 0, 1;
    CHECK(basis.eval_mode(0, north) == Approx(1.0 / std::sqrt(sphere_volume(2))));

    // no degree-1 modes in any invariant basis
    for (auto [n, m] : {std::pair{3, 1}, {3, 2}, {4, 2}, {5, 4}}) {
        const InvariantSphereBasis b = build_invariant_basis(n, m, 3);
        for (const auto& mode : b.modes) CHECK(mode.degree != 1);
    }

    // eigenvalues are l(l+n-2)
    for (const auto& mode : basis.modes)
        CHECK(mode.eigenvalue ==
              Approx(static_cast<Real>(mode.degree) * (mode.degree + 1)).margin(1e-10));

    // counts for n=3, m=2: degrees 0,2,4,6 give 1,2,3,4 modes
    int counts[7] = {0, 0, 0, 0, 0, 0, 0};
    for (const auto& mode : basis.modes) counts[mode.degree]++;
    CHECK(counts[0] == 1);
    CHECK(counts[2] == 2);
    CHECK(counts[4] == 3);
    CHECK(counts[6] == 4);
}

TEST_CASE("degree-2 count matches brute-force symmetrization", "[oracle]") {
    // Degree-2 harmonics on S^2 span {xy, xz, yz, x^2-y^2, x^2+y^2-2z^2}.
    // Project each onto the average over the 8 sign flips of (x, y, z) and
    // count the independent survivors.
    // Monomial order: x^2, y^2, z^2, xy, xz, yz.
    std::vector<Eigen::VectorXd> harmonics;
    auto vec = [](std::initializer_list<Real> v) {
        Eigen::VectorXd x(6);
        int i = 0;
        for (Real c : v) x(i++) = c;
        return x;
    };
    harmonics.push_back(vec({0, 0, 0, 1, 0, 0}));
    harmonics.push_back(vec({0, 0, 0, 0, 1, 0}));
    harmonics.push_back(vec({0, 0, 0, 0, 0, 1}));
    harmonics.push_back(vec({1, -1, 0, 0, 0, 0}));
    harmonics.push_back(vec({1, 1, -2, 0, 0, 0}));
    // Sign flips: even monomials survive, odd monomials cancel.
    Eigen::MatrixXd sym(6, 5);
    for (int c = 0; c < 5; ++c) {
        Eigen::VectorXd avg = harmonics[static_cast<std::size_t>(c)];
        avg(3) = avg(4) = avg(5) = 0.0;  // xy, xz, yz average to zero
        sym.col(c) = avg;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sym);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-10) ++rank;
    CHECK(rank == 2);

    const InvariantSphereBasis basis = build_invariant_basis(3, 2, 2);
    int deg2 = 0;
    for (const auto& mode : basis.modes)
        if (mode.degree == 2) ++deg2;
    CHECK(deg2 == rank);
}

TEST_CASE("indicial roots") {
    CHECK(indicial_root(4, 0.0) == Approx(1.0));
    CHECK(indicial_root(2, 0.0) == Approx(0.0).margin(1e-15));
    CHECK(indicial_root(3, 6.0) == Approx(2.5));

    // lambda for degree 2 on S^2 from a discrete Laplace-Beltrami operator
    // applied to a sampled invariant harmonic.
    const InvariantSphereBasis basis = build_invariant_basis(3, 2, 2);
    const auto& mode = basis.modes[1];
    REQUIRE(mode.degree == 2);
    auto eval = [&](Real th, Real ph) {
        Eigen::VectorXd p(3);
        p << std::cos(th), std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph);
        return basis.eval_mode(static_cast<std::size_t>(mode.index), p);
    };
    auto residual_lambda = [&](Real h) {
        // five-point Laplace-Beltrami in (theta, phi) away from the poles
        Real num = 0.0, den = 0.0;
        for (Real th = 0.6; th < pi - 0.6; th += 0.2)
            for (Real ph = 0.3; ph < 2.0 * pi - 0.3; ph += 0.4) {
                const Real e = eval(th, ph);
                const Real lap =
                    (eval(th + h, ph) - 2 * e + eval(th - h, ph)) / (h * h) +
                    std::cos(th) / std::sin(th) * (eval(th + h, ph) - eval(th - h, ph)) / (2 * h) +
                    (eval(th, ph + h) - 2 * e + eval(th, ph - h)) / (sq(std::sin(th)) * h * h);
                num += -lap * e;
                den += e * e;
            }
        return num / den;
    };
    const Real lambda_h = residual_lambda(1e-3);
    CHECK(lambda_h == Approx(6.0).epsilon(1e-4));
    CHECK(indicial_root(3, lambda_h) == Approx(2.5).epsilon(1e-4));
}

TEST_CASE("discrete Laplace-Beltrami residual drops at second order") {
    const InvariantSphereBasis basis = build_invariant_basis(3, 2, 4);
    const auto& mode = basis.modes[3];
    auto eval = [&](Real th, Real ph) {
        Eigen::VectorXd p(3);
        p << std::cos(th), std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph);
        return basis.eval_mode(static_cast<std::size_t>(mode.index), p);
    };
    auto max_residual = [&](Real h) {
        Real rmax = 0.0;
        for (Real th = 0.7; th < pi - 0.7; th += 0.3)
            for (Real ph = 0.4; ph < 2.0 * pi - 0.4; ph += 0.5) {
                const Real e = eval(th, ph);
                const Real lap =
                    (eval(th + h, ph) - 2 * e + eval(th - h, ph)) / (h * h) +
                    std::cos(th) / std::sin(th) * (eval(th + h, ph) - eval(th - h, ph)) / (2 * h) +
                    (eval(th, ph + h) - 2 * e + eval(th, ph - h)) / (sq(std::sin(th)) * h * h);
                rmax = std::max(rmax, std::abs(lap + mode.eigenvalue * e));
            }
        return rmax;
    };
    const Real r1 = max_residual(2e-2), r2 = max_residual(1e-2);
    CHECK(std::log2(r1 / r2) == Approx(2.0).margin(0.3));
}

TEST_CASE("projection and synthesis") {
    const InvariantSphereBasis basis = build_invariant_basis(4, 2, 6);
    const std::size_t nq = basis.quad.nodes.size();

    SECTION("zero samples give zero coefficients") {
        const Eigen::VectorXd c = basis.project(std::vector<Real>(nq, 0.0));
        CHECK(c.cwiseAbs().maxCoeff() == Approx(0.0).margin(1e-14));
    }

    SECTION("pure mode and linear combination recovered") {
        for (std::size_t j : {std::size_t{2}, basis.size() - 1}) {
            Eigen::VectorXd cj = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
            cj(static_cast<Eigen::Index>(j)) = 1.0;
            const Eigen::VectorXd back = basis.project(basis.synthesize(cj));
            CHECK((back - cj).cwiseAbs().maxCoeff() < 1e-8);
        }
        Eigen::VectorXd mix = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
        mix(0) = 2.0;
        mix(3) = 3.0;
        const Eigen::VectorXd back = basis.project(basis.synthesize(mix));
        CHECK((back - mix).cwiseAbs().maxCoeff() < 1e-8);
    }

    SECTION("sample count mismatch is rejected") {
        CHECK_THROWS_AS(basis.project(std::vector<Real>(nq + 1, 0.0)), ValidationError);
    }
}

TEST_CASE("group invariance of basis functions") {
    const int n = 4, m = 2;
    const InvariantSphereBasis basis = build_invariant_basis(n, m, 6);
    std::mt19937 rng(7);
    std::normal_distribution<Real> gauss;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x(i) = gauss(rng);
        x.normalize();

        // sign flips in the torus block
        for (int flip = 0; flip < m; ++flip) {
            Eigen::VectorXd xf = x;
            xf(n - m + flip) = -xf(n - m + flip);
            for (std::size_t j = 0; j < basis.size(); ++j)
                CHECK(basis.eval_mode(j, x) == Approx(basis.eval_mode(j, xf)).margin(1e-13));
        }
        // rotation in the first block
        const Real ang = gauss(rng);
        Eigen::VectorXd xr = x;
        xr(0) = std::cos(ang) * x(0) - std::sin(ang) * x(1);
        xr(1) = std::sin(ang) * x(0) + std::cos(ang) * x(1);
        for (std::size_t j = 0; j < basis.size(); ++j)
            CHECK(basis.eval_mode(j, x) == Approx(basis.eval_mode(j, xr)).margin(1e-12));
    }
}

TEST_CASE("chart points and scales") {
    const int n = 4, m = 2;
    const SphereQuad q = make_sphere_quadrature(n, m, 8, 8);
    for (std::size_t i = 0; i < q.nodes.size(); i += 7) {
        const Eigen::VectorXd p = sphere_chart_point(n, m, q.angles[i]);
        CHECK((p - q.nodes[i]).norm() < 1e-13);
        CHECK(p.norm() == Approx(1.0));
        const auto scales = sphere_chart_scales(n, m, q.angles[i]);
        REQUIRE(scales.size() == static_cast<std::size_t>(n - 1));
        for (Real s : scales) CHECK(s > 0.0);
    }
}
