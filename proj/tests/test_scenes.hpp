// Minimal exact-scene builder for unit tests. Independent of the library's
// synthetic module: projects random 3D points through a known pose with no
// noise, so ground-truth models give exactly zero residuals.

#pragma once

#include <Eigen/Dense>

#include <sigmafit/geometry.hpp>
#include <sigmafit/rng.hpp>

namespace testutil {

struct ExactScene {
    sigmafit::MatchSet matches;
    sigmafit::RelativePose pose;
    sigmafit::CameraIntrinsics k;
};

inline sigmafit::RelativePose canonical_pose(double rot_deg = 12.0) {
    sigmafit::RelativePose pose;
    pose.rotation = Eigen::AngleAxisd(rot_deg * M_PI / 180.0,
                                      Eigen::Vector3d(0.3, 1.0, -0.2).normalized())
                        .toRotationMatrix();
    pose.translation = Eigen::Vector3d(1.0, 0.15, -0.1).normalized();
    return pose;
}

// n exact correspondences of 3D points in front of both cameras.
inline ExactScene exact_scene(std::size_t n, std::uint64_t seed = 7,
                              sigmafit::RelativePose pose = canonical_pose()) {
    sigmafit::CameraIntrinsics k{500.0, 500.0, 320.0, 240.0, 0.0};
    sigmafit::Rng rng(seed);

    ExactScene scene;
    scene.pose = pose;
    scene.k = k;
    scene.matches.intrinsics_a = k;
    scene.matches.intrinsics_b = k;

    while (scene.matches.pts_a.size() < n) {
        const Eigen::Vector3d x(rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0),
                                rng.uniform(4.0, 10.0));
        const Eigen::Vector3d xb = pose.rotation * x + pose.translation;
        if (xb(2) <= 0.1)
            continue;
        const Eigen::Vector3d pa = k.matrix() * x;
        const Eigen::Vector3d pb = k.matrix() * xb;
        scene.matches.pts_a.push_back({pa(0) / pa(2), pa(1) / pa(2)});
        scene.matches.pts_b.push_back({pb(0) / pb(2), pb(1) / pb(2)});
    }
    return scene;
}

inline sigmafit::EpipolarModel gt_pixel_fundamental(const ExactScene& scene) {
    return sigmafit::essential_to_pixel_fundamental(sigmafit::essential_from_pose(scene.pose),
                                                    scene.k, scene.k);
}

struct LabeledScene {
    sigmafit::MatchSet matches;
    std::vector<char> labels;  // 1 = inlier
    sigmafit::RelativePose pose;
    sigmafit::CameraIntrinsics k;
    double sigma = 0.0;
};

// Gaussian pixel noise on inliers, uniform correspondences as outliers.
inline LabeledScene noisy_scene(std::size_t n, double sigma, double outlier_frac,
                                std::uint64_t seed, sigmafit::RelativePose pose = canonical_pose()) {
    auto base = exact_scene(n, seed, pose);
    LabeledScene scene;
    scene.pose = base.pose;
    scene.k = base.k;
    scene.sigma = sigma;
    scene.matches.intrinsics_a = base.k;
    scene.matches.intrinsics_b = base.k;
    scene.labels.assign(n, 1);

    sigmafit::Rng rng(seed ^ 0xABCDEF0123456789ULL);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < outlier_frac) {
            scene.labels[i] = 0;
            scene.matches.pts_a.push_back({rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)});
            scene.matches.pts_b.push_back({rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)});
        } else {
            auto [na1, na2] = rng.gaussian_pair();
            auto [nb1, nb2] = rng.gaussian_pair();
            scene.matches.pts_a.push_back(
                {base.matches.pts_a[i].x + sigma * na1, base.matches.pts_a[i].y + sigma * na2});
            scene.matches.pts_b.push_back(
                {base.matches.pts_b[i].x + sigma * nb1, base.matches.pts_b[i].y + sigma * nb2});
        }
    }
    return scene;
}

inline double aligned_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
    return std::min((a - b).norm(), (a + b).norm());
}

}  // namespace testutil
