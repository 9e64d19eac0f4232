#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// The classical singly periodic Scherk surface in R x T^1 x R, as the zero
/// set of
///   F(x1, x2, z) = cos^2(eps) cosh(x1/cos eps)
///                - sin^2(eps) cosh(z/sin eps) - cos(x2),
/// with closed-form gradient and Hessian.
class ScherkSurface {
public:
    explicit ScherkSurface(Real eps) : eps_(eps) {
        if (!(eps > 0.0) || !(eps < 0.5 * pi))
            throw ValidationError("ScherkSurface: eps must lie in (0, pi/2)");
        ce_ = std::cos(eps);
        se_ = std::sin(eps);
    }

    Real eps() const { return eps_; }

    Real F(Real x1, Real x2, Real z) const {
        return ce_ * ce_ * std::cosh(x1 / ce_) - se_ * se_ * std::cosh(z / se_) - std::cos(x2);
    }

    Eigen::Vector3d gradient(Real x1, Real x2, Real z) const {
        return {ce_ * std::sinh(x1 / ce_), std::sin(x2), -se_ * std::sinh(z / se_)};
    }

    Eigen::Matrix3d hessian(Real x1, Real x2, Real z) const {
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        H(0, 0) = std::cosh(x1 / ce_);
        H(1, 1) = std::cos(x2);
        H(2, 2) = -std::cosh(z / se_);
        return H;
    }

    /// Nonnegative z with F = 0 over (x1, x2), if the section is nonempty.
    std::optional<Real> solve_z(Real x1, Real x2) const {
        const Real arg = (ce_ * ce_ * std::cosh(x1 / ce_) - std::cos(x2)) / (se_ * se_);
        if (arg < 1.0) return std::nullopt;
        return se_ * std::acosh(arg);
    }

    /// div(grad F / |grad F|), the level-set mean-curvature residual; zero on
    /// the surface.
    Real level_set_residual(Real x1, Real x2, Real z) const {
        const Eigen::Vector3d g = gradient(x1, x2, z);
        const Real gn2 = g.squaredNorm();
        if (gn2 < 1e-28) throw GeometryError("level_set_residual: critical point of F");
        const Eigen::Matrix3d H = hessian(x1, x2, z);
        return (H.trace() * gn2 - g.dot(H * g)) / (gn2 * std::sqrt(gn2));
    }

private:
    Real eps_, ce_, se_;
};

inline ScherkSurface make_scherk(Real eps) { return ScherkSurface(eps); }

struct BlowDownFit {
    Real slope = 0.0;
    Real offset = 0.0;
    Real log_residual_slope = 0.0;  // slope of log|residual| against x1
};

/// Fit of the upper-right end z(x1, x2) to slope*|x1| + offset. The line is
/// fitted on the top quarter of the window, where the exponential correction
/// is negligible; the residual decay is then measured on the lower part.
inline BlowDownFit blow_down_fit(const ScherkSurface& s, Real x1_min, Real x1_max) {
    if (x1_min < 10.0 || x1_max <= x1_min)
        throw ValidationError("blow_down_fit: need 10 <= x1_min < x1_max");
    const Real x2 = 0.4;  // any section works; the asymptote is x2-independent
    auto sample = [&](Real x1) {
        const auto z = s.solve_z(x1, x2);
        if (!z) throw NumericalError("blow_down_fit: no surface point in range");
        return *z;
    };

    std::vector<Real> xs, zs;
    const Real fit_lo = x1_max - 0.25 * (x1_max - x1_min);
    for (int k = 0; k < 20; ++k) {
        const Real x1 = fit_lo + (x1_max - fit_lo) * k / 19.0;
        xs.push_back(x1);
        zs.push_back(sample(x1));
    }
    BlowDownFit fit;
    const auto [c0, c1] = fit_line(xs, zs);
    fit.slope = c1;
    fit.offset = c0;

    std::vector<Real> lx, lr;
    for (int k = 0; k < 20; ++k) {
        const Real x1 = x1_min + 0.6 * (x1_max - x1_min) * k / 19.0;
        const Real res = std::abs(sample(x1) - (c0 + c1 * x1));
        if (res > 1e-14) {
            lx.push_back(x1);
            lr.push_back(std::log(res));
        }
    }
    fit.log_residual_slope = lx.size() >= 4 ? fit_line(lx, lr).second : -1e3;
    return fit;
}

/// Max defect of x~^2 + y~^2 - cosh^2(z~) over a compact window in the
/// rescaled coordinates (x1, x2, z)/(2 sin eps).
inline Real blow_up_defect(const ScherkSurface& s, Real window = 1.2, int samples = 41) {
    const Real scale = 2.0 * s.eps();  // 2 sin(eps) to leading order; use exact below
    (void)scale;
    const Real f = 2.0 * std::sin(s.eps());
    Real defect = 0.0;
    bool any = false;
    for (int i = 0; i < samples; ++i)
        for (int j = 0; j < samples; ++j) {
            const Real xt = -window + 2.0 * window * i / (samples - 1);
            const Real yt = -window + 2.0 * window * j / (samples - 1);
            const auto z = s.solve_z(f * xt, f * yt);
            if (!z) continue;
            any = true;
            const Real zt = *z / f;
            defect = std::max(defect, std::abs(xt * xt + yt * yt - sq(std::cosh(zt))));
        }
    if (!any) throw NumericalError("blow_up_defect: window missed the surface");
    return defect;
}

}  // namespace scherk
