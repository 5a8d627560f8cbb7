// MSAC: hypothesize-and-verify with a truncated quadratic score,
// parameterized by the inlier threshold tau (pixels).
//
// Determinism: each iteration draws its minimal sample from an RNG seeded by
// (config.seed, iteration index), so the hypothesis stream is independent of
// evaluation order and the result is reproducible bit-for-bit. Ties in score
// resolve to the earliest iteration.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "rng.hpp"
#include "solvers.hpp"

namespace sigmafit {

struct RansacConfig {
    int max_iterations = 500;
    double threshold = 1.0;  // tau, pixels
    ModelKind model_kind = ModelKind::Fundamental;
    std::uint64_t seed = 0;
    bool refit = true;
    // Optional early termination by inlier-ratio confidence; off by default
    // so iteration counts stay fixed across benchmark runs.
    bool early_stop = false;
    double early_stop_confidence = 0.9999;
    // Debug mode: record the score of every evaluated hypothesis.
    bool record_scores = false;
};

struct RansacResult {
    EpipolarModel model;
    std::vector<char> inlier_mask;     // residuals_sq[i] <= tau^2
    std::vector<double> residuals_sq;  // squared signed-Sampson, pixels^2
    double score = std::numeric_limits<double>::infinity();
    int iterations_run = 0;
    bool refit_applied = false;
    std::vector<double> hypothesis_scores;  // filled when config.record_scores

    std::size_t num_inliers() const {
        std::size_t n = 0;
        for (char c : inlier_mask)
            n += c != 0;
        return n;
    }
};

inline std::size_t minimal_sample_size(ModelKind kind) {
    return kind == ModelKind::Fundamental ? 7 : 8;
}

namespace detail {

inline double msac_score(std::span<const double> residuals_sq, double thr_sq) {
    double score = 0.0;
    for (double r2 : residuals_sq)
        score += r2 <= thr_sq ? r2 : thr_sq;
    return score;
}

// Iterations needed for confidence eta given the current inlier ratio.
inline double ransac_iterations_needed(double inlier_ratio, std::size_t sample_size, double eta) {
    if (inlier_ratio <= 0.0)
        return std::numeric_limits<double>::infinity();
    const double p_good = std::pow(inlier_ratio, static_cast<double>(sample_size));
    if (p_good >= 1.0)
        return 0.0;
    return std::log(1.0 - eta) / std::log(1.0 - p_good);
}

}  // namespace detail

// Non-minimal refit on the masked subset. Returns the refit model, or the
// current model unchanged (refitted = false) when fewer than 8 inliers are
// available or the solve degenerates. Score guarding is the caller's job.
struct RefitOutcome {
    EpipolarModel model;
    bool refitted = false;
};

inline RefitOutcome refit_on_inliers(const MatchSet& matches, std::span<const char> mask,
                                     ModelKind kind, const EpipolarModel& current) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i])
            idx.push_back(i);
    if (idx.size() < 8)
        return {current, false};

    MatchSet inliers = matches.subset(idx);
    try {
        if (kind == ModelKind::Essential)
            return {eight_point(inliers.calibrated(), ModelKind::Essential), true};
        return {eight_point(inliers, ModelKind::Fundamental), true};
    } catch (const DegenerateConfigurationError&) {
        return {current, false};
    }
}

// MSAC over epipolar models. Deterministic for a fixed (matches, config).
//
// When refit is enabled, every hypothesis that beats the current best result
// is locally refined before being recorded: the refit mask threshold is
// annealed 4*tau -> 2*tau -> tau (a single least-squares refit stalls, since
// the mask at tau mostly reproduces the hypothesis that selected it) and the
// final level is iterated while the MSAC score keeps improving. Because the
// best result is a running minimum over a prefix of a fixed hypothesis
// stream, raising max_iterations can only improve the final score.
inline RansacResult msac(const MatchSet& matches, const RansacConfig& config) {
    const std::size_t n = matches.size();
    const std::size_t sample_size = minimal_sample_size(config.model_kind);
    if (n < sample_size) {
        std::ostringstream msg;
        msg << "msac: " << n << " matches, minimal sample is " << sample_size;
        throw std::invalid_argument(msg.str());
    }
    if (!(config.threshold > 0.0))
        throw std::invalid_argument("msac: threshold must be > 0");
    if (config.max_iterations < 1)
        throw std::invalid_argument("msac: max_iterations must be >= 1");
    if (config.model_kind == ModelKind::Essential && !matches.has_intrinsics())
        throw std::invalid_argument("msac: Essential estimation requires intrinsics");

    const MatchSet calibrated =
        config.model_kind == ModelKind::Essential ? matches.calibrated() : MatchSet{};
    const double thr_sq = config.threshold * config.threshold;

    bool have_best = false;
    EpipolarModel best_model;
    std::vector<double> best_r2;
    double best_score = std::numeric_limits<double>::infinity();
    bool best_refitted = false;
    int degenerate_samples = 0;
    int iterations = 0;
    std::vector<double> score_trace;

    const auto record_if_better = [&](const EpipolarModel& model, std::vector<double>&& r2,
                                      double score, bool refitted) {
        if (!have_best || score < best_score) {
            have_best = true;
            best_score = score;
            best_model = model;
            best_r2 = std::move(r2);
            best_refitted = refitted;
            return true;
        }
        return false;
    };

    const auto refit_with_mask = [&](const std::vector<double>& r2, double mult,
                                     const EpipolarModel& base) {
        std::vector<char> mask(n);
        const double wide = thr_sq * mult * mult;
        for (std::size_t i = 0; i < n; ++i)
            mask[i] = r2[i] <= wide ? 1 : 0;
        return refit_on_inliers(matches, mask, config.model_kind, base);
    };

    // anneal + polish from one hypothesis, recording any improvement
    const auto refine_from = [&](const EpipolarModel& hyp, const std::vector<double>& hyp_r2) {
        EpipolarModel working = hyp;
        std::vector<double> working_r2 = hyp_r2;
        for (double mult : {4.0, 2.0}) {
            const auto step = refit_with_mask(working_r2, mult, working);
            if (!step.refitted)
                continue;
            working = step.model;
            working_r2 = residuals_squared(working, matches);
            record_if_better(working, std::vector<double>(working_r2),
                             detail::msac_score(working_r2, thr_sq), true);
        }
        for (int round = 0; round < 6; ++round) {
            const auto step = refit_with_mask(best_r2, 1.0, best_model);
            if (!step.refitted)
                break;
            auto r2 = residuals_squared(step.model, matches);
            const double score = detail::msac_score(r2, thr_sq);
            if (!record_if_better(step.model, std::move(r2), score, true))
                break;
        }
    };

    std::vector<std::size_t> sample;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        iterations = iter + 1;
        Rng rng(derive_seed(config.seed, SeedStream::RansacSample, static_cast<std::uint64_t>(iter)));
        sample = rng.sample_indices(n, sample_size);

        std::vector<EpipolarModel> hypotheses;
        try {
            if (config.model_kind == ModelKind::Fundamental) {
                hypotheses = seven_point(matches.subset(sample));
            } else {
                MatchSet minimal = calibrated.subset(sample);
                const auto [ta, na] = hartley_normalize(minimal.pts_a);
                const auto [tb, nb] = hartley_normalize(minimal.pts_b);
                if (any_three_collinear(na) || any_three_collinear(nb))
                    throw DegenerateConfigurationError("msac: collinear minimal sample");
                hypotheses.push_back(eight_point(minimal, ModelKind::Essential));
            }
        } catch (const DegenerateConfigurationError&) {
            ++degenerate_samples;
            continue;
        }

        for (const auto& hyp : hypotheses) {
            std::vector<double> r2;
            try {
                r2 = residuals_squared(hyp, matches);
            } catch (const std::invalid_argument&) {
                continue;
            }
            const double score = detail::msac_score(r2, thr_sq);
            if (config.record_scores)
                score_trace.push_back(score);
            if (score < best_score || !have_best) {
                record_if_better(hyp, std::move(r2), score, false);
                if (config.refit)
                    refine_from(best_model, best_r2);
            }
        }

        if (config.early_stop && have_best) {
            std::size_t inliers = 0;
            for (double v : best_r2)
                inliers += v <= thr_sq;
            const double ratio = static_cast<double>(inliers) / static_cast<double>(n);
            if (iterations >= detail::ransac_iterations_needed(ratio, sample_size,
                                                               config.early_stop_confidence))
                break;
        }
    }

    if (!have_best) {
        std::ostringstream msg;
        msg << "msac: no non-degenerate sample in " << iterations << " iterations ("
            << degenerate_samples << " degenerate, " << n << " matches)";
        throw EstimationFailureError(msg.str());
    }

    RansacResult result;
    result.model = best_model;
    result.score = best_score;
    result.iterations_run = iterations;
    result.refit_applied = best_refitted;
    result.hypothesis_scores = std::move(score_trace);
    result.residuals_sq = std::move(best_r2);
    result.inlier_mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        result.inlier_mask[i] = result.residuals_sq[i] <= thr_sq ? 1 : 0;
    return result;
}

}  // namespace sigmafit
