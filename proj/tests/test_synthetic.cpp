#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sigmafit/distributions.hpp>
#include <sigmafit/synthetic.hpp>

#include <cmath>

using namespace sigmafit;

namespace {

SceneSpec base_spec(std::uint64_t seed) {
    SceneSpec spec;
    Rng pose_rng(derive_seed(seed, SeedStream::Scene, 0));
    spec.pose = random_pose(pose_rng);
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("generate_scene is bitwise reproducible") {
    const auto spec = base_spec(42);
    const auto a = generate_scene(spec);
    const auto b = generate_scene(spec);
    REQUIRE(a.matches.size() == b.matches.size());
    for (std::size_t i = 0; i < a.matches.size(); ++i) {
        CHECK(a.matches.pts_a[i].x == b.matches.pts_a[i].x);
        CHECK(a.matches.pts_a[i].y == b.matches.pts_a[i].y);
        CHECK(a.matches.pts_b[i].x == b.matches.pts_b[i].x);
        CHECK(a.matches.pts_b[i].y == b.matches.pts_b[i].y);
    }
    CHECK(a.inlier_labels == b.inlier_labels);
}

TEST_CASE("noiseless scene has zero ground-truth residuals") {
    auto spec = base_spec(7);
    spec.sigma = 0.0;
    spec.outlier_fraction = 0.0;
    spec.n_points = 200;
    const auto scene = generate_scene(spec);

    const auto gt_f = essential_to_pixel_fundamental(essential_from_pose(scene.gt_pose),
                                                     spec.intrinsics, spec.intrinsics);
    for (std::size_t i = 0; i < scene.matches.size(); ++i)
        CHECK(std::abs(sampson_signed(gt_f, scene.matches.pts_a[i], scene.matches.pts_b[i])) <
              1e-10);
}

TEST_CASE("inlier residuals match the chi-square model") {
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto spec = base_spec(100 + seed);
        spec.n_points = 10'000;
        spec.sigma = 1.0;
        spec.outlier_fraction = 0.0;
        const auto scene = generate_scene(spec);

        const auto gt_f = essential_to_pixel_fundamental(essential_from_pose(scene.gt_pose),
                                                         spec.intrinsics, spec.intrinsics);
        const auto r2 = residuals_squared(gt_f, scene.matches);
        if (chi2_gof(r2, spec.sigma) > 0.01)
            ++pass;
    }
    CHECK(pass >= 4);
}

TEST_CASE("outlier labeling follows the contamination rate") {
    auto spec = base_spec(11);
    spec.n_points = 1000;
    spec.outlier_fraction = 0.3;
    const auto scene = generate_scene(spec);

    std::size_t outliers = 0;
    for (char label : scene.inlier_labels)
        outliers += label == 0;
    // binomial 3-sigma band around 300
    const double sd = std::sqrt(1000 * 0.3 * 0.7);
    CHECK(outliers > 300 - 3 * sd);
    CHECK(outliers < 300 + 3 * sd);
}

TEST_CASE("outliers are separated from the epipolar geometry") {
    for (std::uint64_t seed : {3u, 5u, 8u}) {
        auto spec = base_spec(seed);
        spec.n_points = 400;
        const auto scene = generate_scene(spec);
        const auto gt_f = essential_to_pixel_fundamental(essential_from_pose(scene.gt_pose),
                                                         spec.intrinsics, spec.intrinsics);
        std::vector<double> outlier_abs;
        for (std::size_t i = 0; i < scene.matches.size(); ++i)
            if (!scene.inlier_labels[i])
                outlier_abs.push_back(
                    std::abs(sampson_signed(gt_f, scene.matches.pts_a[i], scene.matches.pts_b[i])));
        REQUIRE(!outlier_abs.empty());
        std::nth_element(outlier_abs.begin(), outlier_abs.begin() + outlier_abs.size() / 2,
                         outlier_abs.end());
        CHECK(outlier_abs[outlier_abs.size() / 2] > 10.0 * spec.sigma);
    }
}

TEST_CASE("impossible scene specs error out") {
    auto spec = base_spec(1);
    spec.n_points = 10;  // below the minimum
    CHECK_THROWS_AS(generate_scene(spec), std::invalid_argument);

    spec = base_spec(1);
    spec.pose.rotation =
        Eigen::AngleAxisd(std::numbers::pi, Eigen::Vector3d::UnitY()).toRotationMatrix();
    // camera B looks back at camera A: no common frustum at these depths
    CHECK_THROWS_AS(generate_scene(spec), std::runtime_error);
}

TEST_CASE("oracle-threshold consistency: msac recovers the pose") {
    std::vector<double> rots, transs;
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        auto spec = base_spec(2000 + seed);
        const auto scene = generate_scene(spec);
        ScaleConfig scale;
        const auto rr = msac(scene.matches,
                             scale.ransac(2.5758 * spec.sigma,
                                          derive_seed(5, SeedStream::Evaluation, seed)));
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < rr.inlier_mask.size(); ++i)
            if (rr.inlier_mask[i])
                idx.push_back(i);
        const auto essential =
            pixel_fundamental_to_essential(rr.model, spec.intrinsics, spec.intrinsics);
        const auto pose = decompose_essential(essential, scene.matches.subset(idx));
        const auto [rot, trans] = pose_error(pose, scene.gt_pose);
        rots.push_back(rot);
        transs.push_back(trans);
    }
    std::sort(rots.begin(), rots.end());
    std::sort(transs.begin(), transs.end());
    CHECK(rots[rots.size() / 2] < 1.0);
    CHECK(transs[transs.size() / 2] < 1.0);
}

TEST_CASE("pose_auc pinned values") {
    const std::vector<double> errors = {0.0, 5.0, 10.0, 20.0};
    CHECK(pose_auc(errors, 10.0) == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(pose_auc(errors, 5.0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pose_auc(std::vector<double>{std::numeric_limits<double>::infinity()}, 10.0) == 0.0);
    CHECK_THROWS_AS(pose_auc(std::vector<double>{}, 10.0), std::invalid_argument);
}

TEST_CASE("sweep_benchmark shapes, determinism and failure recording") {
    std::vector<SceneSpec> specs;
    for (std::uint64_t s = 0; s < 4; ++s) {
        auto spec = base_spec(3000 + s);
        spec.n_points = 200;
        specs.push_back(spec);
    }
    const std::vector<double> grid = {1.0, 3.0};
    const std::vector<Method> methods = {Method::Fixed, Method::Simfitpp};
    SweepOptions options;
    options.scale.ransac_iters = 150;
    options.scale.seed = 99;

    const auto a = sweep_benchmark(specs, grid, methods, options);
    CHECK(a.cells.size() == 4);
    CHECK(a.rows.size() == 16);
    for (const auto& cell : a.cells) {
        CHECK(cell.n_scenes == 4);
        CHECK(cell.auc10 >= 0.0);
        CHECK(cell.auc10 <= 1.0);
        CHECK(cell.auc20 >= cell.auc10);
    }
    for (const auto& row : a.rows) {
        CHECK(!row.failed());
        CHECK(row.n_inliers > 0);
    }

    // bitwise determinism, including across thread counts
    SweepOptions two = options;
    two.threads = 2;
    const auto b = sweep_benchmark(specs, grid, methods, two);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].tau_star == b.rows[i].tau_star);
        CHECK(a.rows[i].rot_err_deg == b.rows[i].rot_err_deg);
        CHECK(a.rows[i].trans_err_deg == b.rows[i].trans_err_deg);
        CHECK(a.rows[i].n_inliers == b.rows[i].n_inliers);
    }

    CHECK_THROWS_AS(sweep_benchmark({}, grid, methods, options), std::invalid_argument);
}

TEST_CASE("method names round trip") {
    for (Method m : {Method::Fixed, Method::Simfit, Method::Simfitpp, Method::SimfitppMulti})
        CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_method("magsac"), std::invalid_argument);
}
