// Two-view epipolar geometry: correspondence containers, epipolar models
// with their manifold invariants, signed Sampson residuals and pose metrics.
//
// Conventions:
//   - a correspondence (x_a, x_b) satisfies [x_b;1]^T M [x_a;1] = 0,
//   - Fundamental matrices act on pixel coordinates, Essential matrices on
//     calibrated coordinates,
//   - all residuals and thresholds are in pixels; Essential models are
//     converted to a pixel-space Fundamental for residual evaluation,
//   - models are canonically scaled to unit Frobenius norm with the largest
//     magnitude entry positive, so equal geometries compare equal.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"

namespace sigmafit {

struct ImagePoint {
    double x = 0.0;
    double y = 0.0;
};

inline Eigen::Vector3d homogeneous(const ImagePoint& p) { return {p.x, p.y, 1.0}; }

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double skew = 0.0;

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d k;
        k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
        return k;
    }

    bool invertible() const { return fx > 0.0 && fy > 0.0; }

    // Pixel -> calibrated coordinates (applies K^-1).
    ImagePoint calibrate(const ImagePoint& p) const {
        const double yn = (p.y - cy) / fy;
        const double xn = (p.x - cx - skew * yn) / fx;
        return {xn, yn};
    }

    ImagePoint uncalibrate(const ImagePoint& p) const {
        return {fx * p.x + skew * p.y + cx, fy * p.y + cy};
    }
};

// N point correspondences between two images, optionally with intrinsics.
struct MatchSet {
    std::vector<ImagePoint> pts_a;
    std::vector<ImagePoint> pts_b;
    std::optional<CameraIntrinsics> intrinsics_a;
    std::optional<CameraIntrinsics> intrinsics_b;

    std::size_t size() const {
        if (pts_a.size() != pts_b.size())
            throw std::invalid_argument("MatchSet: point counts differ");
        return pts_a.size();
    }

    bool has_intrinsics() const { return intrinsics_a.has_value() && intrinsics_b.has_value(); }

    MatchSet subset(std::span<const std::size_t> indices) const {
        MatchSet out;
        out.intrinsics_a = intrinsics_a;
        out.intrinsics_b = intrinsics_b;
        out.pts_a.reserve(indices.size());
        out.pts_b.reserve(indices.size());
        for (std::size_t i : indices) {
            out.pts_a.push_back(pts_a.at(i));
            out.pts_b.push_back(pts_b.at(i));
        }
        return out;
    }

    // Applies K^-1 on both sides; intrinsics must be present.
    MatchSet calibrated() const {
        if (!has_intrinsics())
            throw std::invalid_argument("MatchSet::calibrated: intrinsics missing");
        MatchSet out;
        out.pts_a.reserve(pts_a.size());
        out.pts_b.reserve(pts_b.size());
        for (const auto& p : pts_a)
            out.pts_a.push_back(intrinsics_a->calibrate(p));
        for (const auto& p : pts_b)
            out.pts_b.push_back(intrinsics_b->calibrate(p));
        return out;
    }
};

enum class ModelKind { Fundamental, Essential };

// 3x3 epipolar model. Invariants (enforced by make_model): unit Frobenius
// norm, largest-magnitude entry positive; Fundamental => rank 2, Essential
// => singular values proportional to (1, 1, 0).
struct EpipolarModel {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Zero();
    ModelKind kind = ModelKind::Fundamental;
};

namespace detail {

// Unit Frobenius norm with the largest-magnitude entry positive.
inline Eigen::Matrix3d canonical_scale(const Eigen::Matrix3d& m) {
    const double norm = m.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw DegenerateConfigurationError("canonical_scale: zero or non-finite matrix");
    Eigen::Matrix3d out = m / norm;
    int max_r = 0, max_c = 0;
    out.cwiseAbs().maxCoeff(&max_r, &max_c);
    if (out(max_r, max_c) < 0.0)
        out = -out;
    return out;
}

}  // namespace detail

// Projects onto the model manifold and applies the canonical scaling.
inline EpipolarModel make_model(const Eigen::Matrix3d& m, ModelKind kind) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d s = svd.singularValues();
    if (!(s(0) > 0.0) || !std::isfinite(s(0)))
        throw DegenerateConfigurationError("make_model: zero or non-finite matrix");
    if (kind == ModelKind::Fundamental) {
        s(2) = 0.0;
    } else {
        const double mean = 0.5 * (s(0) + s(1));
        s(0) = s(1) = mean;
        s(2) = 0.0;
    }
    const Eigen::Matrix3d proj = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    return {detail::canonical_scale(proj), kind};
}

// Relative pose (R, t) mapping camera-A coordinates to camera-B:
// X_b = R X_a + t. Translation is kept at unit norm (scale is unobservable).
struct RelativePose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::UnitX();
};

inline Eigen::Matrix3d skew_symmetric(const Eigen::Vector3d& v) {
    Eigen::Matrix3d s;
    s << 0.0, -v(2), v(1), v(2), 0.0, -v(0), -v(1), v(0), 0.0;
    return s;
}

inline EpipolarModel essential_from_pose(const RelativePose& pose) {
    // [t]x R is exactly essential; projecting it through an SVD would only
    // add roundoff that the pixel conversion then amplifies by ~f^2
    return {detail::canonical_scale(skew_symmetric(pose.translation.normalized()) *
                                    pose.rotation),
            ModelKind::Essential};
}

// Hartley conditioning: returns a similarity transform T and the transformed
// points, with centroid at the origin and RMS distance sqrt(2).
inline std::pair<Eigen::Matrix3d, std::vector<ImagePoint>>
hartley_normalize(std::span<const ImagePoint> points) {
    if (points.size() < 2)
        throw std::invalid_argument("hartley_normalize: need at least 2 points");
    double cx = 0.0, cy = 0.0;
    for (const auto& p : points) {
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(points.size());
    cy /= static_cast<double>(points.size());

    double ms = 0.0;
    for (const auto& p : points) {
        const double dx = p.x - cx, dy = p.y - cy;
        ms += dx * dx + dy * dy;
    }
    const double rms = std::sqrt(ms / static_cast<double>(points.size()));
    if (!(rms > 1e-12))
        throw DegenerateConfigurationError("hartley_normalize: points are coincident");

    const double s = std::numbers::sqrt2 / rms;
    Eigen::Matrix3d t;
    t << s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0;

    std::vector<ImagePoint> out;
    out.reserve(points.size());
    for (const auto& p : points)
        out.push_back({s * (p.x - cx), s * (p.y - cy)});
    return {t, std::move(out)};
}

// Twice-area test over all triples; used to reject degenerate minimal
// samples. Expects conditioned (Hartley-normalized) coordinates.
inline bool any_three_collinear(std::span<const ImagePoint> pts, double tol = 1e-9) {
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            for (std::size_t k = j + 1; k < pts.size(); ++k) {
                const double area2 = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) -
                                     (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
                if (std::abs(area2) < tol)
                    return true;
            }
    return false;
}

// F = Kb^-T E Ka^-1, renormalized; calibrated inliers of E are pixel inliers
// of the returned Fundamental.
inline EpipolarModel essential_to_pixel_fundamental(const EpipolarModel& e,
                                                    const CameraIntrinsics& ka,
                                                    const CameraIntrinsics& kb) {
    if (e.kind != ModelKind::Essential)
        throw std::invalid_argument("essential_to_pixel_fundamental: model is not Essential");
    if (!ka.invertible() || !kb.invertible())
        throw std::invalid_argument("essential_to_pixel_fundamental: singular intrinsics");
    // the input is already rank 2, so only the canonical scaling is applied
    const Eigen::Matrix3d f = kb.matrix().inverse().transpose() * e.matrix * ka.matrix().inverse();
    return {detail::canonical_scale(f), ModelKind::Fundamental};
}

inline EpipolarModel pixel_fundamental_to_essential(const EpipolarModel& f,
                                                    const CameraIntrinsics& ka,
                                                    const CameraIntrinsics& kb) {
    if (f.kind != ModelKind::Fundamental)
        throw std::invalid_argument("pixel_fundamental_to_essential: model is not Fundamental");
    return make_model(kb.matrix().transpose() * f.matrix * ka.matrix(), ModelKind::Essential);
}

namespace detail {

// Signed Sampson residual without precondition checks; +/-inf when the
// denominator vanishes (caller treats it as an outlier).
inline double sampson_signed_raw(const Eigen::Matrix3d& m, const ImagePoint& a,
                                 const ImagePoint& b) {
    const Eigen::Vector3d ha = homogeneous(a);
    const Eigen::Vector3d hb = homogeneous(b);
    const Eigen::Vector3d ma = m * ha;
    const Eigen::Vector3d mtb = m.transpose() * hb;
    const double num = hb.dot(ma);
    const double den2 = ma(0) * ma(0) + ma(1) * ma(1) + mtb(0) * mtb(0) + mtb(1) * mtb(1);
    if (den2 <= 0.0)
        return std::copysign(std::numeric_limits<double>::infinity(), num);
    return num / std::sqrt(den2);
}

}  // namespace detail

// Signed Sampson residual in pixels; the sign carries the side of the
// epipolar line. Requires a pixel-space (Fundamental) model.
inline double sampson_signed(const EpipolarModel& model, const ImagePoint& a,
                             const ImagePoint& b) {
    if (model.kind != ModelKind::Fundamental)
        throw std::invalid_argument("sampson_signed: Essential model needs intrinsics");
    const double r = detail::sampson_signed_raw(model.matrix, a, b);
    if (!std::isfinite(r))
        throw UndefinedResidualError("sampson_signed: zero denominator (point at both epipoles)");
    return r;
}

inline double sampson_signed(const EpipolarModel& model, const ImagePoint& a, const ImagePoint& b,
                             const CameraIntrinsics& ka, const CameraIntrinsics& kb) {
    if (model.kind == ModelKind::Essential)
        return sampson_signed(essential_to_pixel_fundamental(model, ka, kb), a, b);
    return sampson_signed(model, a, b);
}

// Converts the model to pixel space if needed, using the match set's
// intrinsics. Fundamental models pass through.
inline EpipolarModel pixel_space_model(const EpipolarModel& model, const MatchSet& matches) {
    if (model.kind == ModelKind::Fundamental)
        return model;
    if (!matches.has_intrinsics())
        throw std::invalid_argument("pixel_space_model: Essential model but no intrinsics");
    return essential_to_pixel_fundamental(model, *matches.intrinsics_a, *matches.intrinsics_b);
}

// Squared signed-Sampson residuals (pixels^2) of every correspondence.
// Undefined residuals become +inf.
inline std::vector<double> residuals_squared(const EpipolarModel& model, const MatchSet& matches) {
    const EpipolarModel f = pixel_space_model(model, matches);
    std::vector<double> out(matches.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = detail::sampson_signed_raw(f.matrix, matches.pts_a[i], matches.pts_b[i]);
        out[i] = std::isfinite(r) ? r * r : std::numeric_limits<double>::infinity();
    }
    return out;
}

// Rotation and translation-direction error in degrees. The translation error
// is sign-invariant (direction is only defined up to scale).
inline std::pair<double, double> pose_error(const RelativePose& est, const RelativePose& gt) {
    const double tr = (est.rotation * gt.rotation.transpose()).trace();
    const double c_rot = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
    const double rot_err = std::acos(c_rot) * 180.0 / std::numbers::pi;

    const double denom = est.translation.norm() * gt.translation.norm();
    double trans_err = 0.0;
    if (denom > 0.0) {
        const double c_t = std::clamp(std::abs(est.translation.dot(gt.translation)) / denom,
                                      0.0, 1.0);
        trans_err = std::acos(c_t) * 180.0 / std::numbers::pi;
    }
    return {rot_err, trans_err};
}

}  // namespace sigmafit
