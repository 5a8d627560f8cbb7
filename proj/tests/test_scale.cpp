#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sigmafit/scale.hpp>

#include <cmath>
#include <numeric>

#include "test_scenes.hpp"

using namespace sigmafit;
using testutil::noisy_scene;

namespace {

// Independent fixed-point oracle: bisection on h(q) = F^-1(2q) - ratio * F^-1(q).
double fixed_point_q_oracle(double ratio) {
    double lo = 1e-9, hi = 0.5 - 1e-12;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double h = chi2_quantile(2.0 * mid) - ratio * chi2_quantile(mid);
        (h < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> truncated_chi2_samples(double sigma, double tau, std::size_t n,
                                           std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(n);
    const double tau_sq = tau * tau;
    while (out.size() < n) {
        const double z = sigma * rng.gaussian();
        if (z * z <= tau_sq)
            out.push_back(z * z);
    }
    return out;
}

}  // namespace

TEST_CASE("median convention: lower-middle element") {
    CHECK(median_lower(std::vector<double>{3.0}) == 3.0);
    CHECK(median_lower(std::vector<double>{1.0, 2.0}) == 1.0);
    CHECK(median_lower(std::vector<double>{1.0, 2.0, 3.0, 4.0}) == 2.0);
    CHECK(median_lower(std::vector<double>{5.0, 1.0, 3.0}) == 3.0);
    CHECK_THROWS_AS(median_lower(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("median_sigma pinned values and consistency") {
    const double denom = chi2_quantile(0.5)!= 0.0 ? chi2_quantile(0.5) : 1.0;
    CHECK(median_sigma(std::vector<double>{denom}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(median_sigma(std::vector<double>{0.454936}) == doctest::Approx(1.0).epsilon(1e-5));
    for (double a : {0.1, 1.0, 7.5})
        CHECK(median_sigma(std::vector<double>{a}) ==
              doctest::Approx(std::sqrt(a / 0.454936423)).epsilon(1e-8));
    CHECK_THROWS_AS(median_sigma(std::vector<double>{}), std::invalid_argument);

    // Monte-Carlo consistency: (2 N(0,1))^2 has sigma = 2
    for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
        Rng rng(seed);
        std::vector<double> r2(100'000);
        for (auto& v : r2) {
            const double z = 2.0 * rng.gaussian();
            v = z * z;
        }
        const double est = median_sigma(r2);
        CHECK(est > 1.98);
        CHECK(est < 2.02);
    }
}

TEST_CASE("tau_corrected_sigma: large-ratio limit matches the plain median") {
    Rng rng(5);
    std::vector<double> r2(5000);
    for (auto& v : r2) {
        const double z = rng.gaussian();
        v = z * z;
    }
    const double med = median_lower(r2);
    const double tau = std::sqrt(100.0 * med);
    const auto cs = tau_corrected_sigma(r2, tau);
    CHECK(cs.converged);
    CHECK(!cs.fell_back);
    CHECK(cs.q == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(cs.sigma == doctest::Approx(median_sigma(r2)).epsilon(1e-3));
}

TEST_CASE("tau_corrected_sigma removes the truncation bias") {
    for (double sigma_true : {1.0, 2.0}) {
        const double tau = 1.5 * sigma_true;
        const auto r2 = truncated_chi2_samples(sigma_true, tau, 100'000, 42);
        const auto cs = tau_corrected_sigma(r2, tau);
        CHECK(!cs.fell_back);
        CHECK(std::abs(cs.sigma - sigma_true) / sigma_true < 0.03);

        const double uncorrected = median_sigma(r2);
        CHECK((sigma_true - uncorrected) / sigma_true > 0.10);
    }
}

TEST_CASE("tau_corrected_sigma converges within 5 steps for ratios 5, 10, 100") {
    for (double ratio : {5.0, 10.0, 100.0}) {
        const std::vector<double> r2 = {0.7};  // median = 0.7 exactly
        const double tau = std::sqrt(ratio * 0.7);
        const auto cs = tau_corrected_sigma(r2, tau);
        CHECK(cs.converged);
        CHECK(cs.iterations <= 5);
        CHECK(cs.q > 0.0);
        CHECK(cs.q <= 0.5);

        // fixed-point identity F^-1(2q)/F^-1(q) = ratio, relative 1e-6
        if (cs.q < 0.5) {
            const double lhs = chi2_quantile(2.0 * cs.q) / chi2_quantile(cs.q);
            CHECK(std::abs(lhs - ratio) / ratio < 1e-6);
        }
        // agreement with the independent bisection oracle
        if (ratio < 50.0)
            CHECK(cs.q == doctest::Approx(fixed_point_q_oracle(ratio)).epsilon(1e-8));
    }
}

TEST_CASE("tau_corrected_sigma boundary and fallback regime") {
    const std::vector<double> r2 = {1.0, 0.9, 1.1};  // median 1.0
    // ratio exactly 4: must fall back cleanly, no NaN
    const auto at4 = tau_corrected_sigma(r2, 2.0);
    CHECK(at4.fell_back);
    CHECK(!at4.converged);
    CHECK(std::isfinite(at4.sigma));
    CHECK(at4.sigma == doctest::Approx(median_sigma(r2)).epsilon(1e-12));
    CHECK(at4.q == 0.5);

    const auto below = tau_corrected_sigma(r2, 1.5);  // ratio 2.25
    CHECK(below.fell_back);
    CHECK(std::isfinite(below.sigma));

    // just above the boundary: either converges or falls back, never NaN
    const auto near = tau_corrected_sigma(r2, 2.0 + 1e-6);
    CHECK(std::isfinite(near.sigma));
}

TEST_CASE("tau_corrected_sigma input contracts") {
    CHECK_THROWS_AS(tau_corrected_sigma(std::vector<double>{}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(tau_corrected_sigma(std::vector<double>{0.5}, 0.0), std::domain_error);
    // caller must threshold: residual above tau^2 rejected
    CHECK_THROWS_AS(tau_corrected_sigma(std::vector<double>{5.0}, 1.0), std::invalid_argument);
    // all-zero residuals: clean zero estimate
    const auto zero = tau_corrected_sigma(std::vector<double>{0.0, 0.0, 0.0}, 1.0);
    CHECK(zero.sigma == 0.0);
}

TEST_CASE("online mean filter") {
    OnlineMeanFilter f(0.25, 8.0);
    CHECK(f.accept(2.0));
    CHECK(f.mean() == 2.0);
    CHECK(!f.accept(9.0));  // above tau_max: unchanged
    CHECK(f.mean() == 2.0);
    CHECK(f.count() == 1);
    CHECK(!f.accept(0.2));
    CHECK(f.accept(8.0));  // bounds inclusive
    CHECK(f.mean() == doctest::Approx(5.0).epsilon(1e-15));

    OnlineMeanFilter g(0.25, 8.0);
    g.accept(1.0);
    g.accept(3.0);
    CHECK(g.mean() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(OnlineMeanFilter(2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(OnlineMeanFilter(0.25, 8.0).mean(), std::logic_error);
}

TEST_CASE("online geometric mean filter: exact log identity") {
    OnlineGeometricMeanFilter f(0.25, 8.0);
    CHECK(f.accept(1.0));
    CHECK(f.accept(4.0));
    CHECK(f.mean() == doctest::Approx(2.0).epsilon(1e-12));

    OnlineGeometricMeanFilter g(0.25, 8.0);
    double log_sum = 0.0;
    for (double c : {0.5, 1.7, 3.9, 7.2}) {
        CHECK(g.accept(c));
        log_sum += std::log(c);
    }
    CHECK(std::abs(std::log(g.mean()) - log_sum / 4.0) < 1e-12);
    CHECK(!g.accept(8.5));
    CHECK(std::abs(std::log(g.mean()) - log_sum / 4.0) < 1e-12);
}

TEST_CASE("train/val split is a disjoint partition") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Rng rng(seed);
        const auto [train, val] = train_val_split(101, 0.5, rng);
        CHECK(train.size() == 51);  // round(50.5) away from zero
        CHECK(val.size() == 50);
        std::vector<char> seen(101, 0);
        for (auto i : train)
            seen[i]++;
        for (auto i : val)
            seen[i]++;
        for (char c : seen)
            CHECK(c == 1);
    }
}

TEST_CASE("simfit basics") {
    const auto scene = noisy_scene(300, 1.0, 0.2, 71);
    ScaleConfig cfg;
    cfg.tau0 = 4.0;
    cfg.seed = 2;
    cfg.ransac_iters = 200;

    const auto a = simfit(scene.matches, cfg);
    const auto b = simfit(scene.matches, cfg);
    CHECK(a.tau_star == b.tau_star);
    CHECK(a.sigma_hat == b.sigma_hat);
    CHECK(a.outer_iters == b.outer_iters);
    CHECK(a.tau_star > 0.0);
    CHECK(a.tau_star < cfg.tau0);
    CHECK(a.accepted_estimates.empty());  // no bounds filter in the baseline
    CHECK(a.q_final == 0.5);

    // tau = chi_quantile(alpha) * sigma on every iterate
    for (const auto& rec : a.trace)
        CHECK(rec.candidate_tau ==
              doctest::Approx(chi_quantile(cfg.alpha) * rec.sigma).epsilon(1e-12));

    MatchSet tiny = scene.matches.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK_THROWS_AS(simfit(tiny, cfg), std::invalid_argument);
}

TEST_CASE("simfit collapses toward zero on noiseless inliers") {
    const auto scene = testutil::exact_scene(120, 83);
    ScaleConfig cfg;
    cfg.tau0 = 2.0;
    cfg.seed = 5;
    cfg.ransac_iters = 100;
    const auto est = simfit(scene.matches, cfg);
    CHECK(est.tau_star < 1e-4);  // unclamped: the baseline has no tau_min
    CHECK(est.tau_star >= 0.0);
}

TEST_CASE("simfitpp basics and estimate quality") {
    const double factor = chi_quantile(0.99);
    for (double sigma_true : {0.5, 1.0, 2.0}) {
        for (double tau0 : {0.5, 4.0}) {
            const auto scene = noisy_scene(500, sigma_true, 0.3, 1234 + int(10 * sigma_true));
            ScaleConfig cfg;
            cfg.tau0 = tau0;
            cfg.seed = 77;
            const auto est = simfitpp(scene.matches, cfg);
            if (est.accepted_estimates.empty())
                continue;  // far-off tau0 corners may reject every candidate
            CHECK(est.tau_star >= cfg.tau_min);
            CHECK(est.tau_star <= cfg.tau_max);
            CHECK(est.sigma_hat == doctest::Approx(est.tau_star / factor).epsilon(1e-12));

            // accepted candidates satisfy the quantile relation exactly
            for (const auto& rec : est.trace)
                if (rec.accepted)
                    CHECK(rec.candidate_tau ==
                          doctest::Approx(factor * rec.sigma).epsilon(1e-6));
        }
    }

    // estimate quality, median over seeds (tight statistical bands are the
    // acceptance suite's job, on its own scene distribution)
    for (double tau0 : {0.5, 4.0}) {
        std::vector<double> ratios;
        for (std::uint64_t s = 0; s < 5; ++s) {
            const auto scene = noisy_scene(500, 1.0, 0.3, 4000 + s);
            ScaleConfig cfg;
            cfg.tau0 = tau0;
            cfg.seed = derive_seed(9, SeedStream::Estimator, s);
            ratios.push_back(simfitpp(scene.matches, cfg).sigma_hat);
        }
        std::sort(ratios.begin(), ratios.end());
        CHECK(ratios[2] > 0.75);
        CHECK(ratios[2] < 1.3);
    }
}

TEST_CASE("simfitpp determinism") {
    const auto scene = noisy_scene(400, 1.0, 0.3, 90);
    ScaleConfig cfg;
    cfg.tau0 = 2.0;
    cfg.seed = 31;
    const auto a = simfitpp(scene.matches, cfg);
    const auto b = simfitpp(scene.matches, cfg);
    CHECK(a.tau_star == b.tau_star);
    CHECK(a.sigma_hat == b.sigma_hat);
    CHECK(a.accepted_estimates == b.accepted_estimates);
}

TEST_CASE("simfitpp precondition: both splits must be usable") {
    const auto scene = noisy_scene(15, 1.0, 0.0, 3);
    ScaleConfig cfg;
    cfg.tau0 = 2.0;
    CHECK_THROWS_AS(simfitpp(scene.matches, cfg), std::invalid_argument);
}

TEST_CASE("simfitpp falls back to tau0 when every candidate is rejected") {
    const auto scene = noisy_scene(400, 1.0, 0.3, 91);
    ScaleConfig cfg;
    cfg.tau0 = 4.0;
    cfg.tau_min = 4.0;
    cfg.tau_max = 8.0;  // sigma=1 candidates (~2.6) cannot fit in here
    cfg.seed = 8;
    const auto est = simfitpp(scene.matches, cfg);
    CHECK(est.accepted_estimates.empty());
    CHECK(est.tau_star == cfg.tau0);
    CHECK(!est.converged);
}

TEST_CASE("simfit underestimates relative to simfitpp") {
    double mean_simfit = 0.0, mean_pp = 0.0;
    const int trials = 15;
    for (int s = 0; s < trials; ++s) {
        const auto scene = noisy_scene(500, 1.0, 0.3, 500 + s);
        ScaleConfig cfg;
        cfg.tau0 = 4.0;
        cfg.seed = derive_seed(17, SeedStream::Estimator, s);
        cfg.ransac_iters = 300;
        mean_simfit += simfit(scene.matches, cfg).sigma_hat / trials;
        mean_pp += simfitpp(scene.matches, cfg).sigma_hat / trials;
    }
    CHECK(mean_simfit < mean_pp);
    CHECK(mean_pp > 0.85);
    CHECK(mean_pp < 1.3);
}

TEST_CASE("simfitpp_multi basics") {
    std::vector<MatchSet> dataset;
    for (int s = 0; s < 6; ++s)
        dataset.push_back(noisy_scene(400, 1.0, 0.3, 700 + s).matches);

    ScaleConfig cfg;
    cfg.tau0 = 4.0;
    cfg.seed = 55;

    const auto a = simfitpp_multi(dataset, cfg);
    const auto b = simfitpp_multi(dataset, cfg);
    CHECK(a.tau_star == b.tau_star);  // deterministic
    CHECK(a.converged);
    CHECK(a.tau_star >= cfg.tau_min);
    CHECK(a.tau_star <= cfg.tau_max);

    // geometric mean identity over the accepted per-pair values
    double log_sum = 0.0;
    for (double v : a.accepted_estimates)
        log_sum += std::log(v);
    CHECK(std::abs(std::log(a.tau_star) - log_sum / a.accepted_estimates.size()) < 1e-12);
}

TEST_CASE("simfitpp_multi single pair equals the filtered simfitpp run") {
    std::vector<MatchSet> dataset = {noisy_scene(400, 1.0, 0.3, 810).matches};
    ScaleConfig cfg;
    cfg.tau0 = 2.0;
    cfg.seed = 21;
    const auto multi = simfitpp_multi(dataset, cfg);

    ScaleConfig pair_cfg = cfg;
    pair_cfg.seed = derive_seed(cfg.seed, SeedStream::MultiPair, 0);
    const auto single = simfitpp(dataset[0], pair_cfg);
    CHECK(multi.tau_star == doctest::Approx(single.tau_star).epsilon(1e-12));
}

TEST_CASE("simfitpp_multi warm-start neutrality at the fixed point") {
    // re-initializing at the converged estimate (everything else fixed) must
    // not move the output: the initial guess washes out
    std::vector<MatchSet> dataset;
    for (int s = 0; s < 40; ++s)
        dataset.push_back(noisy_scene(500, 1.0, 0.3, 900 + s).matches);

    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ScaleConfig cfg;
        cfg.tau0 = 4.0;
        cfg.seed = seed;
        const auto base = simfitpp_multi(dataset, cfg);
        REQUIRE(base.converged);

        ScaleConfig rerun_cfg = cfg;
        rerun_cfg.tau0 = base.tau_star;
        const auto rerun = simfitpp_multi(dataset, rerun_cfg);
        CHECK(std::abs(rerun.tau_star - base.tau_star) / base.tau_star < cfg.ftol);
    }
}

TEST_CASE("simfitpp_multi cold-start mode is order-independent per pair") {
    std::vector<MatchSet> dataset;
    for (int s = 0; s < 3; ++s)
        dataset.push_back(noisy_scene(400, 1.0, 0.3, 950 + s).matches);

    ScaleConfig cfg;
    cfg.tau0 = 2.0;
    cfg.seed = 13;
    const auto cold = simfitpp_multi(dataset, cfg, /*warm_start=*/false);
    REQUIRE(cold.accepted_estimates.size() == 3);

    // each accepted value equals the pair's standalone run from tau0
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        ScaleConfig pair_cfg = cfg;
        pair_cfg.seed = derive_seed(cfg.seed, SeedStream::MultiPair, j);
        const auto standalone = simfitpp(dataset[j], pair_cfg);
        CHECK(cold.accepted_estimates[j] == doctest::Approx(standalone.tau_star).epsilon(1e-12));
    }
}

TEST_CASE("simfitpp_multi failure handling") {
    CHECK_THROWS_AS(simfitpp_multi({}, ScaleConfig{}), std::invalid_argument);

    // every pair below the usable-split size: tau0 back, not converged
    std::vector<MatchSet> tiny(3, noisy_scene(12, 1.0, 0.0, 5).matches);
    ScaleConfig cfg;
    cfg.tau0 = 3.0;
    const auto est = simfitpp_multi(tiny, cfg);
    CHECK(!est.converged);
    CHECK(est.tau_star == cfg.tau0);
    CHECK(est.accepted_estimates.empty());
}

TEST_CASE("scale config validation") {
    ScaleConfig cfg;
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ScaleConfig{};
    cfg.tau0 = 10.0;  // above tau_max
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ScaleConfig{};
    cfg.p_train = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ScaleConfig{};
    cfg.ftol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
