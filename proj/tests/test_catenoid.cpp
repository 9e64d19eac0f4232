#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "scherk/catenoid.hpp"

using namespace scherk;
using Catch::Approx;

TEST_CASE("profile matches the closed form") {
    for (int n : {3, 4, 5}) {
        const CatenoidProfile p = solve_profile(n, 8.0, 1e-8);
        CHECK(p.phi(0.0) == Approx(1.0));
        CHECK(p.psi(0.0) == Approx(0.0).margin(1e-15));
        CHECK(p.dphi(0.0) == Approx(0.0).margin(1e-12));

        Real max_phi_err = 0.0, max_energy = 0.0, max_rel_pow = 0.0;
        for (Real s = -6.0; s <= 6.0; s += 0.01) {
            const Real closed = std::pow(std::cosh((n - 1) * s), 1.0 / (n - 1));
            max_phi_err = std::max(max_phi_err, std::abs(p.phi(s) - closed));
            max_energy = std::max(max_energy,
                                  std::abs(p.energy_defect(s)) / std::max(1.0, sq(p.phi(s))));
            const Real pow_err = std::abs(std::pow(p.phi(s), n - 1) - std::cosh((n - 1) * s));
            max_rel_pow = std::max(max_rel_pow, pow_err / std::cosh((n - 1) * s));
        }
        CHECK(max_phi_err < 1e-8);
        CHECK(max_energy < 1e-10);
        CHECK(max_rel_pow < 1e-8);
    }
}

TEST_CASE("psi derivative identity") {
    const CatenoidProfile p = solve_profile(4, 7.0, 1e-8);
    for (Real s = -5.0; s <= 5.0; s += 0.37)
        CHECK(p.dpsi(s) * std::pow(p.phi(s), 4 - 2) == Approx(1.0).epsilon(1e-11));
}

TEST_CASE("c_inf against an independent quadrature", "[oracle]") {
    const CatenoidProfile p = solve_profile(3, 8.0, 1e-8);
    // int_0^infty cosh(2t)^{-1/2} dt, adaptive quadrature plus analytic tail.
    const Real T = 26.0;
    const Real head = adaptive_simpson(
        [](Real t) { return 1.0 / std::sqrt(std::cosh(2.0 * t)); }, 0.0, T, 1e-12);
    const Real tail = std::sqrt(2.0) * std::exp(-T);  // cosh(2t)^{-1/2} ~ sqrt(2) e^{-t}
    CHECK(p.c_inf() == Approx(head + tail).margin(1e-8));
}

TEST_CASE("immersion and normal") {
    const CatenoidProfile p = solve_profile(3, 8.0, 1e-8);
    Eigen::VectorXd theta(3);
    theta << 0.48, -0.6, 0.64;
    theta.normalize();

    SECTION("neck circle") {
        const Eigen::VectorXd x = immersion_point(p, 0.0, theta);
        CHECK((x.head(3) - theta).norm() < 1e-12);
        CHECK(x(3) == Approx(0.0).margin(1e-14));
        const Eigen::VectorXd nv = unit_normal(p, 0.0, theta);
        CHECK((nv.head(3) - theta).norm() < 1e-12);
        CHECK(nv(3) == Approx(0.0).margin(1e-12));
    }

    SECTION("unit normal and orthogonality") {
        for (Real s : {-2.3, 0.7, 3.1}) {
            const Eigen::VectorXd nv = unit_normal(p, s, theta);
            CHECK(nv.norm() == Approx(1.0).epsilon(1e-12));
            const Real h = 1e-5;
            const Eigen::VectorXd ts =
                (immersion_point(p, s + h, theta) - immersion_point(p, s - h, theta)) / (2 * h);
            CHECK(std::abs(nv.dot(ts)) < 1e-7);
            // tangent along theta: exact rotation in a coordinate plane, central difference
            auto rotated = [&](Real ang) {
                Eigen::VectorXd r = theta;
                r(0) = std::cos(ang) * theta(0) - std::sin(ang) * theta(1);
                r(1) = std::sin(ang) * theta(0) + std::cos(ang) * theta(1);
                return r;
            };
            const Eigen::VectorXd tth =
                (immersion_point(p, s, rotated(h)) - immersion_point(p, s, rotated(-h))) / (2 * h);
            CHECK(std::abs(nv.dot(tth)) < 1e-7);
        }
    }

    SECTION("top height approaches c_inf") {
        const Eigen::VectorXd x = immersion_point(p, p.s_max(), theta);
        CHECK(std::abs(x(3) - p.c_inf()) < 1e-3);
        CHECK(std::abs(x(3) - p.c_inf()) > 0.0);
    }
}

TEST_CASE("end expansion coefficients") {
    SECTION("n = 3") {
        const CatenoidProfile p = solve_profile(3, 9.0, 1e-8);
        const EndExpansionFit fit = end_expansion_check(p);
        CHECK(fit.a == Approx(1.0).epsilon(0.01));
        CHECK(fit.decay_exponent == Approx(-5.0).epsilon(0.10));
    }
    SECTION("n = 4") {
        const CatenoidProfile p = solve_profile(4, 7.0, 1e-8);
        const EndExpansionFit fit = end_expansion_check(p);
        CHECK(fit.a == Approx(0.5).epsilon(0.01));
    }
}

TEST_CASE("neck truncation") {
    const CatenoidProfile p = solve_profile(3, 8.0, 1e-8);

    CHECK(neck_truncation(0.25, 0.25 + 1e-12, p) == Approx(0.0).margin(1e-5));

    // closed form: phi(1) = cosh(2)^{1/2}
    const Real rho = 0.3;
    const Real eps = rho / std::sqrt(std::cosh(2.0));
    const Real s_eps = neck_truncation(eps, rho, p);
    CHECK(s_eps == Approx(1.0).epsilon(1e-10));
    CHECK(eps * p.phi(s_eps) == Approx(rho).margin(1e-12));

    // s_eps + log(eps) stays bounded as eps -> 0
    const Real b1 = neck_truncation(1e-2, rho, p) + std::log(1e-2);
    const Real b2 = neck_truncation(1e-3, rho, p) + std::log(1e-3);
    CHECK(std::abs(b1 - b2) < 0.01);

    CHECK_THROWS_AS(neck_truncation(0.5, 0.3, p), ValidationError);
}
