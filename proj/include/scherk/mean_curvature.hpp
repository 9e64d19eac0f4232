#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "scherk/common.hpp"

namespace scherk {

/// Mean curvature H = (1/d) tr(g^{-1} II) of a d-dimensional immersion into
/// R^{d+1} at a single parameter point, from central differences of the
/// chart map. The unit normal is derived from the difference tangents; the
/// supplied reference vector fixes its orientation only.
inline Real mean_curvature_at(const std::function<Eigen::VectorXd(const std::vector<Real>&)>& chart,
                              const std::vector<Real>& center,
                              const Eigen::VectorXd& orientation,
                              const std::vector<Real>& steps) {
    const int d = static_cast<int>(center.size());
    if (static_cast<int>(steps.size()) != d)
        throw ValidationError("mean_curvature_at: steps size mismatch");

    auto shifted = [&](int i, Real si, int j, Real sj) {
        std::vector<Real> a = center;
        a[static_cast<std::size_t>(i)] += si * steps[static_cast<std::size_t>(i)];
        if (j >= 0) a[static_cast<std::size_t>(j)] += sj * steps[static_cast<std::size_t>(j)];
        return chart(a);
    };

    const Eigen::VectorXd x0 = chart(center);
    std::vector<Eigen::VectorXd> xp(static_cast<std::size_t>(d)), xm(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        xp[static_cast<std::size_t>(i)] = shifted(i, 1.0, -1, 0.0);
        xm[static_cast<std::size_t>(i)] = shifted(i, -1.0, -1, 0.0);
    }

    Eigen::MatrixXd g(d, d), II(d, d);
    Eigen::MatrixXd tan(d + 1, d);
    for (int i = 0; i < d; ++i) {
        const Real hi = steps[static_cast<std::size_t>(i)];
        tan.col(i) = (xp[static_cast<std::size_t>(i)] - xm[static_cast<std::size_t>(i)]) / (2.0 * hi);
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) g(i, j) = g(j, i) = tan.col(i).dot(tan.col(j));

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(tan);
    Eigen::VectorXd normal =
        qr.householderQ() * Eigen::VectorXd::Unit(d + 1, d);
    const Real align = normal.dot(orientation);
    if (align < 0.0) normal = -normal;

    for (int i = 0; i < d; ++i) {
        const Real hi = steps[static_cast<std::size_t>(i)];
        const Eigen::VectorXd xii =
            (xp[static_cast<std::size_t>(i)] - 2.0 * x0 + xm[static_cast<std::size_t>(i)]) / (hi * hi);
        II(i, i) = normal.dot(xii);
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j) {
            const Real hi = steps[static_cast<std::size_t>(i)];
            const Real hj = steps[static_cast<std::size_t>(j)];
            const Eigen::VectorXd xij = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) -
                                         shifted(i, -1.0, j, 1.0) + shifted(i, -1.0, j, -1.0)) /
                                        (4.0 * hi * hj);
            II(i, j) = II(j, i) = normal.dot(xij);
        }

    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success || g.determinant() <= 0.0)
        throw GeometryError("mean_curvature_at: degenerate metric");
    return llt.solve(II).trace() / static_cast<Real>(d);
}

/// Structured immersion patch: a d-dimensional parameter grid of points in
/// R^{d+1} with unit normals, including one ghost layer on each side.
struct ImmersionPatch {
    std::vector<int> dims;                 // nodes per direction, ghosts included
    std::vector<Real> spacing;
    std::vector<Eigen::VectorXd> points;   // row-major flattened
    std::vector<Eigen::VectorXd> normals;

    std::size_t flat(const std::vector<int>& idx) const {
        std::size_t f = 0;
        for (std::size_t k = 0; k < dims.size(); ++k)
            f = f * static_cast<std::size_t>(dims[k]) + static_cast<std::size_t>(idx[k]);
        return f;
    }
};

/// Mean curvature at all interior nodes of a patch; ghost nodes carry 0.
inline std::vector<Real> mean_curvature_immersion(const ImmersionPatch& patch) {
    const int d = static_cast<int>(patch.dims.size());
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(patch.dims[static_cast<std::size_t>(k)]);
    if (patch.points.size() != total || patch.normals.size() != total)
        throw ValidationError("mean_curvature_immersion: patch array sizes mismatch");
    std::vector<Real> H(total, 0.0);

    std::vector<int> idx(static_cast<std::size_t>(d), 1);
    auto interior_advance = [&]() {
        int pos = d - 1;
        while (pos >= 0) {
            if (++idx[static_cast<std::size_t>(pos)] <=
                patch.dims[static_cast<std::size_t>(pos)] - 2) return true;
            idx[static_cast<std::size_t>(pos)] = 1;
            --pos;
        }
        return false;
    };

    do {
        auto at = [&](int i, int di, int j, int dj) {
            std::vector<int> a = idx;
            a[static_cast<std::size_t>(i)] += di;
            if (j >= 0) a[static_cast<std::size_t>(j)] += dj;
            return patch.points[patch.flat(a)];
        };
        const Eigen::VectorXd& x0 = patch.points[patch.flat(idx)];
        Eigen::MatrixXd g(d, d), II(d, d);
        Eigen::MatrixXd tan(d + 1, d);
        for (int i = 0; i < d; ++i) {
            const Real hi = patch.spacing[static_cast<std::size_t>(i)];
            tan.col(i) = (at(i, 1, -1, 0) - at(i, -1, -1, 0)) / (2.0 * hi);
        }
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(tan);
        Eigen::VectorXd N = qr.householderQ() * Eigen::VectorXd::Unit(d + 1, d);
        if (N.dot(patch.normals[patch.flat(idx)]) < 0.0) N = -N;
        for (int i = 0; i < d; ++i) {
            const Real hi = patch.spacing[static_cast<std::size_t>(i)];
            II(i, i) = N.dot((at(i, 1, -1, 0) - 2.0 * x0 + at(i, -1, -1, 0)) / (hi * hi));
        }
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j)
                g(i, j) = g(j, i) = tan.col(i).dot(tan.col(j));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < i; ++j) {
                const Real hi = patch.spacing[static_cast<std::size_t>(i)];
                const Real hj = patch.spacing[static_cast<std::size_t>(j)];
                II(i, j) = II(j, i) = N.dot((at(i, 1, j, 1) - at(i, 1, j, -1) -
                                             at(i, -1, j, 1) + at(i, -1, j, -1)) /
                                            (4.0 * hi * hj));
            }
        Eigen::LLT<Eigen::MatrixXd> llt(g);
        if (llt.info() != Eigen::Success || g.determinant() <= 0.0)
            throw GeometryError("mean_curvature_immersion: degenerate metric");
        H[patch.flat(idx)] = llt.solve(II).trace() / static_cast<Real>(d);
    } while (interior_advance());

    return H;
}

}  // namespace scherk
