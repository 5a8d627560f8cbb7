// Linear epipolar solvers: 7-point (minimal, 1-3 solutions), 8-point
// (least squares with manifold projection) and essential-matrix
// decomposition with cheirality disambiguation.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace sigmafit {
namespace detail {

inline Eigen::Matrix3d reshape_row_major(const Eigen::Matrix<double, 9, 1>& f) {
    Eigen::Matrix3d m;
    m << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
    return m;
}

// One row of the epipolar design matrix: coefficients of vec(F) row-major in
// [x_b;1]^T F [x_a;1] = 0.
inline void fill_design_row(Eigen::Matrix<double, Eigen::Dynamic, 9>& a, Eigen::Index row,
                            const ImagePoint& pa, const ImagePoint& pb) {
    a(row, 0) = pb.x * pa.x;
    a(row, 1) = pb.x * pa.y;
    a(row, 2) = pb.x;
    a(row, 3) = pb.y * pa.x;
    a(row, 4) = pb.y * pa.y;
    a(row, 5) = pb.y;
    a(row, 6) = pa.x;
    a(row, 7) = pa.y;
    a(row, 8) = 1.0;
}

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, via the companion matrix.
// Gracefully degrades to quadratic/linear when leading coefficients vanish.
inline std::vector<double> real_polynomial_roots(double c3, double c2, double c1, double c0) {
    const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
    if (!(scale > 0.0))
        return {};
    const double eps = 1e-12 * scale;

    std::vector<double> roots;
    if (std::abs(c3) > eps) {
        Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
        companion(1, 0) = 1.0;
        companion(2, 1) = 1.0;
        companion(0, 2) = -c0 / c3;
        companion(1, 2) = -c1 / c3;
        companion(2, 2) = -c2 / c3;
        Eigen::EigenSolver<Eigen::Matrix3d> es(companion, false);
        for (int i = 0; i < 3; ++i) {
            const auto ev = es.eigenvalues()(i);
            if (std::abs(ev.imag()) <= 1e-8 * (1.0 + std::abs(ev.real())))
                roots.push_back(ev.real());
        }
    } else if (std::abs(c2) > eps) {
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            roots.push_back((-c1 + sq) / (2.0 * c2));
            roots.push_back((-c1 - sq) / (2.0 * c2));
        }
    } else if (std::abs(c1) > eps) {
        roots.push_back(-c0 / c1);
    }

    // drop duplicates (repeated polynomial roots give identical models)
    std::vector<double> unique;
    for (double r : roots) {
        bool seen = false;
        for (double u : unique)
            seen |= std::abs(u - r) < 1e-9 * (1.0 + std::abs(u));
        if (!seen)
            unique.push_back(r);
    }
    return unique;
}

// Linear (DLT) triangulation with P_a = [I|0], P_b = [R|t]; calibrated
// coordinates. Returns the homogeneous 3D point.
inline Eigen::Vector4d triangulate_linear(const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                                          const ImagePoint& xa, const ImagePoint& xb) {
    Eigen::Matrix<double, 3, 4> pa = Eigen::Matrix<double, 3, 4>::Zero();
    pa.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
    Eigen::Matrix<double, 3, 4> pb;
    pb.block<3, 3>(0, 0) = r;
    pb.col(3) = t;

    Eigen::Matrix4d a;
    a.row(0) = xa.x * pa.row(2) - pa.row(0);
    a.row(1) = xa.y * pa.row(2) - pa.row(1);
    a.row(2) = xb.x * pb.row(2) - pb.row(0);
    a.row(3) = xb.y * pb.row(2) - pb.row(1);

    Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
    return svd.matrixV().col(3);
}

}  // namespace detail

// Minimal 7-point solver for the Fundamental matrix. Returns 1-3 solutions;
// every returned model satisfies the epipolar constraint on all 7 inputs and
// has rank 2.
inline std::vector<EpipolarModel> seven_point(const MatchSet& matches) {
    if (matches.size() != 7)
        throw std::invalid_argument("seven_point: exactly 7 correspondences required");

    const auto [ta, na] = hartley_normalize(matches.pts_a);
    const auto [tb, nb] = hartley_normalize(matches.pts_b);
    if (any_three_collinear(na) || any_three_collinear(nb))
        throw DegenerateConfigurationError("seven_point: collinear points in the sample");

    Eigen::Matrix<double, Eigen::Dynamic, 9> a(7, 9);
    for (Eigen::Index i = 0; i < 7; ++i)
        detail::fill_design_row(a, i, na[i], nb[i]);

    Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(6) < 1e-10 * sv(0))
        throw DegenerateConfigurationError("seven_point: rank-deficient design matrix");

    const Eigen::Matrix3d f1 = detail::reshape_row_major(svd.matrixV().col(7));
    const Eigen::Matrix3d f2 = detail::reshape_row_major(svd.matrixV().col(8));

    // det(F2 + alpha (F1 - F2)) is cubic in alpha; fit coefficients from
    // four evaluations and solve.
    const Eigen::Matrix3d d = f1 - f2;
    const auto det_at = [&](double alpha) { return Eigen::Matrix3d(f2 + alpha * d).determinant(); };
    const double p0 = det_at(0.0), p1 = det_at(1.0), pm1 = det_at(-1.0), p2 = det_at(2.0);
    const double c0 = p0;
    const double c2 = 0.5 * (p1 + pm1) - c0;
    const double odd = 0.5 * (p1 - pm1);                       // c1 + c3
    const double c3 = ((p2 - c0 - 4.0 * c2) * 0.5 - odd) / 3.0;
    const double c1 = odd - c3;

    std::vector<EpipolarModel> models;
    for (double alpha : detail::real_polynomial_roots(c3, c2, c1, c0)) {
        const Eigen::Matrix3d fn = f2 + alpha * d;
        const Eigen::Matrix3d f = tb.transpose() * fn * ta;
        models.push_back(make_model(f, ModelKind::Fundamental));
    }
    if (models.empty())
        throw DegenerateConfigurationError("seven_point: no real solution");
    return models;
}

// Least-squares 8-point solver. Input coordinates are pixels for
// kind=Fundamental and calibrated for kind=Essential; the solution is
// projected onto the corresponding manifold. Near-degenerate designs (e.g.
// a planar scene) still return one member of the solution family; guarding
// against them is the sampler's job.
inline EpipolarModel eight_point(const MatchSet& matches, ModelKind kind) {
    const std::size_t n = matches.size();
    if (n < 8)
        throw std::invalid_argument("eight_point: need at least 8 correspondences");

    const auto [ta, na] = hartley_normalize(matches.pts_a);
    const auto [tb, nb] = hartley_normalize(matches.pts_b);

    Eigen::Matrix<double, Eigen::Dynamic, 9> a(static_cast<Eigen::Index>(n), 9);
    for (std::size_t i = 0; i < n; ++i)
        detail::fill_design_row(a, static_cast<Eigen::Index>(i), na[i], nb[i]);

    Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeFullV);
    if (!(svd.singularValues()(0) > 0.0))
        throw DegenerateConfigurationError("eight_point: degenerate design matrix");
    Eigen::Matrix3d fn = detail::reshape_row_major(svd.matrixV().col(8));

    if (kind == ModelKind::Fundamental) {
        // rank-2 projection in conditioned space, then denormalize
        Eigen::JacobiSVD<Eigen::Matrix3d> s3(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Vector3d s = s3.singularValues();
        s(2) = 0.0;
        fn = s3.matrixU() * s.asDiagonal() * s3.matrixV().transpose();
        return make_model(tb.transpose() * fn * ta, ModelKind::Fundamental);
    }
    // essential manifold is not similarity-invariant: denormalize first,
    // then project (make_model forces singular values (s, s, 0))
    return make_model(tb.transpose() * fn * ta, ModelKind::Essential);
}

// Recovers (R, t) from an Essential matrix by testing the four candidate
// decompositions against the cheirality (positive depth) of the given
// matches. Matches are calibrated with the set's intrinsics when present,
// otherwise assumed already calibrated.
inline RelativePose decompose_essential(const EpipolarModel& e, const MatchSet& matches) {
    if (e.kind != ModelKind::Essential)
        throw std::invalid_argument("decompose_essential: model is not Essential");
    if (matches.size() == 0)
        throw std::invalid_argument("decompose_essential: need at least one match");

    const MatchSet cal = matches.has_intrinsics() ? matches.calibrated() : matches;

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.matrix, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    if (u.determinant() < 0.0)
        u = -u;
    if (v.determinant() < 0.0)
        v = -v;

    Eigen::Matrix3d w;
    w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
    const Eigen::Matrix3d r1 = u * w * v.transpose();
    const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
    const Eigen::Vector3d t = u.col(2);

    const std::array<RelativePose, 4> candidates = {
        RelativePose{r1, t}, RelativePose{r1, -t}, RelativePose{r2, t}, RelativePose{r2, -t}};

    int best = -1;
    std::size_t best_support = 0;
    for (int c = 0; c < 4; ++c) {
        std::size_t support = 0;
        for (std::size_t i = 0; i < cal.size(); ++i) {
            const Eigen::Vector4d xh = detail::triangulate_linear(
                candidates[c].rotation, candidates[c].translation, cal.pts_a[i], cal.pts_b[i]);
            if (std::abs(xh(3)) < 1e-14)
                continue;  // point at infinity
            const Eigen::Vector3d x = xh.head<3>() / xh(3);
            const double depth_b = (candidates[c].rotation * x + candidates[c].translation)(2);
            if (x(2) > 0.0 && depth_b > 0.0)
                ++support;
        }
        if (support > best_support || best < 0) {
            best_support = support;
            best = c;
        }
    }
    if (best_support == 0)
        throw EstimationFailureError("decompose_essential: no candidate has positive-depth support");
    return candidates[static_cast<std::size_t>(best)];
}

}  // namespace sigmafit
