#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "scherk/lattice.hpp"

using namespace scherk;
using Catch::Approx;

TEST_CASE("lattice volume") {
    CHECK(lattice_volume(Lattice(2, Eigen::MatrixXd::Identity(2, 2))) == Approx(1.0));
    CHECK(lattice_volume(Lattice::rectangular({2.0, 3.0})) == Approx(6.0));
    Eigen::MatrixXd shear(2, 2);
    shear << 1, 1, 0, 1;
    CHECK(lattice_volume(Lattice(2, shear)) == Approx(1.0));

    Eigen::MatrixXd sing(2, 2);
    sing << 1, 2, 2, 4;
    CHECK_THROWS_AS(Lattice(2, sing), ValidationError);
}

TEST_CASE("volume normalization") {
    const Lattice circle = normalize_volume(Lattice::rectangular({1.0}));
    CHECK(circle.A(0, 0) == Approx(2.0 * pi));
    CHECK(circle.normalized);

    const Lattice square = normalize_volume(Lattice(2, Eigen::MatrixXd::Identity(2, 2)));
    CHECK(square.A(0, 0) == Approx(2.0 * std::sqrt(pi)));
    CHECK(square.A(1, 1) == Approx(2.0 * std::sqrt(pi)));

    const Lattice already = Lattice::rectangular({2.0 * std::sqrt(pi), 2.0 * std::sqrt(pi)});
    const Lattice renorm = normalize_volume(already);
    CHECK((renorm.A - already.A).cwiseAbs().maxCoeff() < 1e-12);

    // idempotent
    const Lattice twice = normalize_volume(renorm);
    CHECK((twice.A - renorm.A).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("circle spectrum") {
    const Lattice torus = Lattice::rectangular({2.0 * pi});

    const TorusSpectrum low = invariant_torus_spectrum(torus, 0.5);
    REQUIRE(low.modes.size() == 1);
    CHECK(low.modes[0].eigenvalue == Approx(0.0).margin(1e-14));
    CHECK(low.modes[0].amplitude_norm == Approx(1.0 / std::sqrt(2.0 * pi)));

    const TorusSpectrum spec = invariant_torus_spectrum(torus, 1.5);
    REQUIRE(spec.modes.size() == 2);
    CHECK(spec.modes[1].eigenvalue == Approx(1.0));
    Eigen::VectorXd x(1);
    x << 0.7;
    CHECK(eval_torus_mode(spec.modes[1], torus, x) == Approx(std::cos(0.7) / std::sqrt(pi)));
    x << 0.0;
    CHECK(eval_torus_mode(spec.modes[1], torus, x) == Approx(1.0 / std::sqrt(pi)));
}

TEST_CASE("rectangular torus eigenvalue against discrete Laplacian", "[oracle]") {
    const Real a1 = 2.0, a2 = 3.0;
    const Lattice torus = Lattice::rectangular({a1, a2});
    const TorusSpectrum spec = invariant_torus_spectrum(torus, 60.0);

    // k = (1,0) must appear with mu = 4 pi^2 / a1^2.
    const Real mu_expected = 4.0 * pi * pi / (a1 * a1);
    bool found = false;
    for (const auto& mode : spec.modes)
        if (mode.wavevector == std::vector<long>{1, 0}) {
            found = true;
            CHECK(mode.eigenvalue == Approx(mu_expected).epsilon(1e-12));
        }
    REQUIRE(found);

    // Brute-force periodic Laplacian on a fine grid: its spectrum must contain
    // an eigenvalue close to mu_expected (second-order in the grid step).
    const int N1 = 24, N2 = 36;
    const Real h1 = a1 / N1, h2 = a2 / N2;
    const int dim = N1 * N2;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(dim, dim);
    auto id = [&](int i, int j) { return ((i + N1) % N1) * N2 + ((j + N2) % N2); };
    for (int i = 0; i < N1; ++i)
        for (int j = 0; j < N2; ++j) {
            const int p = id(i, j);
            L(p, p) = 2.0 / (h1 * h1) + 2.0 / (h2 * h2);
            L(p, id(i + 1, j)) -= 1.0 / (h1 * h1);
            L(p, id(i - 1, j)) -= 1.0 / (h1 * h1);
            L(p, id(i, j + 1)) -= 1.0 / (h2 * h2);
            L(p, id(i, j - 1)) -= 1.0 / (h2 * h2);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(L);
    Real best = 1e30;
    for (int k = 0; k < dim; ++k)
        best = std::min(best, std::abs(eig.eigenvalues()(k) - mu_expected));
    CHECK(best / mu_expected < 1e-2);  // O(h^2) accuracy of the oracle itself
}

TEST_CASE("spectrum properties") {
    const Lattice torus = Lattice::rectangular({2.0 * std::sqrt(pi), 2.0 * std::sqrt(pi)});
    const Real mu_max = 30.0;
    const TorusSpectrum spec = invariant_torus_spectrum(torus, mu_max);

    for (std::size_t i = 0; i + 1 < spec.modes.size(); ++i)
        CHECK(spec.modes[i].eigenvalue <= spec.modes[i + 1].eigenvalue + 1e-14);

    // invariant-mode count equals the count of wavevectors with nonnegative components
    const Real a = torus.A(0, 0);
    int count = 0;
    for (int k1 = 0; k1 <= 10; ++k1)
        for (int k2 = 0; k2 <= 10; ++k2)
            if (4.0 * pi * pi * (k1 * k1 + k2 * k2) / (a * a) <= mu_max) ++count;
    CHECK(static_cast<int>(spec.modes.size()) == count);

    // sign-flip invariance of evaluation
    Eigen::VectorXd x(2);
    x << 0.37, -0.91;
    Eigen::VectorXd xf = x;
    xf(1) = -xf(1);
    for (const auto& mode : spec.modes)
        CHECK(eval_torus_mode(mode, torus, x) == Approx(eval_torus_mode(mode, torus, xf)).margin(1e-13));
}

TEST_CASE("mode normalization and Laplacian residual under refinement") {
    const Real a1 = 1.7, a2 = 2.4;
    const Lattice torus = Lattice::rectangular({a1, a2});
    const TorusSpectrum spec = invariant_torus_spectrum(torus, 40.0);
    REQUIRE(spec.modes.size() >= 4);

    auto residual = [&](const TorusMode& mode, int N) {
        const Real h1 = a1 / N, h2 = a2 / N;
        Real rmax = 0.0, l2 = 0.0;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                Eigen::VectorXd x(2);
                x << i * h1, j * h2;
                auto at = [&](Real dx, Real dy) {
                    Eigen::VectorXd y(2);
                    y << x(0) + dx, x(1) + dy;
                    return eval_torus_mode(mode, torus, y);
                };
                const Real e = at(0, 0);
                const Real lap = (at(h1, 0) - 2 * e + at(-h1, 0)) / (h1 * h1) +
                                 (at(0, h2) - 2 * e + at(0, -h2)) / (h2 * h2);
                rmax = std::max(rmax, std::abs(lap + mode.eigenvalue * e));
                l2 += e * e * h1 * h2;
            }
        return std::make_pair(rmax, l2);
    };

    const auto& mode = spec.modes[3];
    const auto [r1, n1] = residual(mode, 32);
    const auto [r2, n2] = residual(mode, 64);
    CHECK(n2 == Approx(1.0).epsilon(1e-10));  // L^2 norm 1 (trig quadrature is exact)
    const Real order = std::log2(r1 / r2);
    CHECK(order == Approx(2.0).margin(0.3));
}

TEST_CASE("oblique lattices") {
    Eigen::MatrixXd shear(2, 2);
    shear << 1, 1, 0, 1;
    const Lattice sheared(2, shear);
    CHECK(sheared.sign_symmetric());

    const TorusSpectrum spec = invariant_torus_spectrum(sheared, 50.0);
    REQUIRE(spec.modes.size() > 2);
    Eigen::VectorXd x(2);
    x << 0.21, 0.43;
    for (int flip = 0; flip < 2; ++flip) {
        Eigen::VectorXd xf = x;
        xf(flip) = -xf(flip);
        for (const auto& mode : spec.modes)
            CHECK(eval_torus_mode(mode, sheared, x) ==
                  Approx(eval_torus_mode(mode, sheared, xf)).margin(1e-12));
    }

    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0.3, 0, 1;
    CHECK_FALSE(Lattice(2, bad).sign_symmetric());
    CHECK_THROWS_AS(invariant_torus_spectrum(Lattice(2, bad), 10.0), ValidationError);
}
