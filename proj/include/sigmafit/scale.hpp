// Inlier noise-scale estimation and self-tuning RANSAC thresholds.
//
// The threshold tau and the noise scale sigma are linearly related through
// the quantile factor chi_quantile(alpha). simfit() alternates MSAC with the
// plain median estimator on the fitting set (keeping that estimator's two
// known biases). simfitpp() removes both: the model is fit on a train split
// while sigma is estimated on the disjoint validation split, and the median
// estimator's percentile is corrected for the truncation at tau by solving
// the fixed point
//     q = F(tau^2 / sigma^2) / 2,   sigma^2 = median(r^2) / F^-1(q),
// which has a solution in (0, 0.5] iff tau^2 / median(r^2) > 4.
// simfitpp_multi() filters per-pair estimates with an online geometric mean
// (threshold estimates across pairs behave log-normally).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "distributions.hpp"
#include "geometry.hpp"
#include "ransac.hpp"
#include "rng.hpp"

namespace sigmafit {

// Sample median, lower-middle element for even length (a convention the
// estimator tests pin; the difference is O(1/n)).
inline double median_lower(std::span<const double> values) {
    if (values.empty())
        throw std::invalid_argument("median_lower: empty input");
    std::vector<double> copy(values.begin(), values.end());
    const std::size_t k = (copy.size() - 1) / 2;
    std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(k), copy.end());
    return copy[k];
}

// Median squared-residual estimator of the noise scale:
// sigma = sqrt(median(r^2) / F^-1(0.5)).
inline double median_sigma(std::span<const double> residuals_sq) {
    if (residuals_sq.empty())
        throw std::invalid_argument("median_sigma: empty input");
    return std::sqrt(median_lower(residuals_sq) / chi2_quantile(0.5));
}

struct CorrectedSigma {
    double sigma = 0.0;
    double q = 0.5;       // corrected percentile, in (0, 0.5]
    int iterations = 0;   // steps until the sigma tolerance (or the cap)
    bool converged = false;
    bool fell_back = false;  // outside the fixable regime; sigma is median_sigma
};

// Truncation-corrected noise scale from residuals already thresholded at
// tau^2. Solves the percentile fixed point by safeguarded Newton from
// q0 = 0.5; iteration count follows the sigma sequence with the given
// relative tolerance. Below the convergent regime (tau^2/median <= 4) the
// uncorrected estimate is returned with fell_back set.
inline CorrectedSigma tau_corrected_sigma(std::span<const double> residuals_sq, double tau,
                                          int max_steps = 5, double sigma_rtol = 1e-3) {
    if (residuals_sq.empty())
        throw std::invalid_argument("tau_corrected_sigma: empty input");
    if (!(tau > 0.0))
        throw std::domain_error("tau_corrected_sigma: tau must be > 0");
    const double tau_sq = tau * tau;
    for (double r2 : residuals_sq)
        if (r2 > tau_sq * (1.0 + 1e-12))
            throw std::invalid_argument(
                "tau_corrected_sigma: residual above tau^2 (caller must threshold)");

    const double med = median_lower(residuals_sq);
    if (!(med > 0.0))
        return {0.0, 0.5, 0, true, false};  // exactly zero residuals
    const double ratio = tau_sq / med;
    if (ratio <= 4.0)
        return {median_sigma(residuals_sq), 0.5, 0, false, true};

    // g(q) = F(ratio * F^-1(q)) / 2 - q; root bracketed in (0, 0.5] when the
    // regime is fixable. g(0.5) <= 0 always; g -> q (sqrt(ratio)/2 - 1) > 0
    // as q -> 0.
    const auto g = [&](double q) { return 0.5 * chi2_cdf(ratio * chi2_quantile(q)) - q; };

    double lo = 1e-9;
    double hi = 0.5;
    if (g(hi) >= 0.0) {
        // threshold barely truncates; q = 0.5 is the fixed point in doubles
        const double s = median_sigma(residuals_sq);
        return {s, 0.5, 1, true, false};
    }
    if (g(lo) <= 0.0)
        return {median_sigma(residuals_sq), 0.5, 0, false, true};

    double q = 0.5;
    double sigma_prev = std::sqrt(med / chi2_quantile(q));
    double sigma = sigma_prev;
    int steps = 0;
    bool converged = false;

    const auto newton_step = [&](double from) {
        const double x = chi2_quantile(from);
        const double gval = 0.5 * chi2_cdf(ratio * x) - from;
        const double gprime = 0.5 * ratio * chi2_pdf(ratio * x) / chi2_pdf(x) - 1.0;
        double next = gprime < 0.0 ? from - gval / gprime : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (g(next) > 0.0)
            lo = next;
        else
            hi = next;
        return next;
    };

    while (steps < max_steps) {
        ++steps;
        q = newton_step(q);
        sigma = std::sqrt(med / chi2_quantile(q));
        const double rel = std::abs(sigma - sigma_prev) / sigma_prev;
        if (rel < sigma_rtol) {
            converged = true;
            break;
        }
        sigma_prev = sigma;
    }

    // polish to the bracket's resolution (adjacent doubles) so the returned q
    // satisfies the fixed-point identity regardless of where the step counter
    // stopped; near q = 0.5 the identity is extremely sensitive to q
    for (int i = 0; i < 100 && std::nextafter(lo, hi) < hi; ++i)
        q = newton_step(q);
    q = std::clamp(q, lo, hi);
    sigma = std::sqrt(med / chi2_quantile(q));
    return {sigma, q, steps, converged, false};
}

// Online mean over accepted candidates; candidates outside [lo, hi] leave
// the state untouched. The prior guess is not part of the mean.
class OnlineMeanFilter {
  public:
    OnlineMeanFilter(double lo, double hi) : lo_(lo), hi_(hi) {
        if (!(lo < hi))
            throw std::invalid_argument("OnlineMeanFilter: need lo < hi");
    }

    bool accept(double candidate) {
        if (!(candidate >= lo_ && candidate <= hi_))
            return false;
        accepted_.push_back(candidate);
        sum_ += candidate;
        return true;
    }

    std::size_t count() const { return accepted_.size(); }
    const std::vector<double>& accepted() const { return accepted_; }

    double mean() const {
        if (accepted_.empty())
            throw std::logic_error("OnlineMeanFilter: no accepted estimates");
        return sum_ / static_cast<double>(accepted_.size());
    }

  private:
    double lo_, hi_;
    double sum_ = 0.0;
    std::vector<double> accepted_;
};

// Same bounds behavior, but averaging in log space.
class OnlineGeometricMeanFilter {
  public:
    OnlineGeometricMeanFilter(double lo, double hi) : lo_(lo), hi_(hi) {
        if (!(lo > 0.0 && lo < hi))
            throw std::invalid_argument("OnlineGeometricMeanFilter: need 0 < lo < hi");
    }

    bool accept(double candidate) {
        if (!(candidate >= lo_ && candidate <= hi_))
            return false;
        accepted_.push_back(candidate);
        log_sum_ += std::log(candidate);
        return true;
    }

    std::size_t count() const { return accepted_.size(); }
    const std::vector<double>& accepted() const { return accepted_; }

    double mean() const {
        if (accepted_.empty())
            throw std::logic_error("OnlineGeometricMeanFilter: no accepted estimates");
        return std::exp(log_sum_ / static_cast<double>(accepted_.size()));
    }

  private:
    double lo_, hi_;
    double log_sum_ = 0.0;
    std::vector<double> accepted_;
};

struct ScaleConfig {
    double alpha = 0.99;   // inlier confidence level
    double tau0 = 1.0;     // initial threshold guess, pixels
    double tau_min = 0.25;
    double tau_max = 8.0;
    double p_train = 0.5;
    double ftol = 0.01;
    int max_outer_iters = 4;
    int fixedpoint_iters = 5;
    std::uint64_t seed = 0;
    // inner RANSAC settings
    int ransac_iters = 500;
    ModelKind model_kind = ModelKind::Fundamental;
    bool refit = true;
    bool early_stop = false;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("ScaleConfig: alpha must be in (0, 1)");
        if (!(tau_min > 0.0 && tau_min <= tau0 && tau0 <= tau_max))
            throw std::invalid_argument("ScaleConfig: need 0 < tau_min <= tau0 <= tau_max");
        if (!(p_train > 0.0 && p_train < 1.0))
            throw std::invalid_argument("ScaleConfig: p_train must be in (0, 1)");
        if (!(ftol > 0.0))
            throw std::invalid_argument("ScaleConfig: ftol must be > 0");
        if (max_outer_iters < 1 || fixedpoint_iters < 1 || ransac_iters < 1)
            throw std::invalid_argument("ScaleConfig: iteration caps must be >= 1");
    }

    RansacConfig ransac(double threshold, std::uint64_t run_seed) const {
        RansacConfig cfg;
        cfg.max_iterations = ransac_iters;
        cfg.threshold = threshold;
        cfg.model_kind = model_kind;
        cfg.seed = run_seed;
        cfg.refit = refit;
        cfg.early_stop = early_stop;
        return cfg;
    }
};

struct IterationRecord {
    int iteration = 0;
    double sigma = 0.0;
    double q = 0.5;
    double candidate_tau = 0.0;
    double filtered_tau = 0.0;
    bool accepted = false;
    bool skipped = false;
    bool fell_back = false;
};

struct ThresholdEstimate {
    double tau_star = 0.0;
    double sigma_hat = 0.0;
    double q_final = 0.5;
    int outer_iters = 0;
    bool converged = false;
    std::vector<double> accepted_estimates;  // filter state (filtered methods)
    std::vector<IterationRecord> trace;
};

// Disjoint train/validation index split; train size is round(n * p_train).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
train_val_split(std::size_t n, double p_train, Rng& rng) {
    const auto train_size =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * p_train));
    auto perm = rng.permutation(n);
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(
                                                                    std::min(train_size, n)));
    std::vector<std::size_t> val(perm.begin() + static_cast<std::ptrdiff_t>(std::min(train_size, n)),
                                 perm.end());
    return {std::move(train), std::move(val)};
}

// Baseline estimator: alternate MSAC with the uncorrected median estimator
// on the shrinking inlier set, estimating sigma from the fitting residuals.
// No threshold bounds; a noiseless set legitimately collapses toward zero.
inline ThresholdEstimate simfit(const MatchSet& matches, const ScaleConfig& config) {
    config.validate();
    const std::size_t n = matches.size();
    if (n < minimal_sample_size(config.model_kind))
        throw std::invalid_argument("simfit: too few matches for the minimal solver");

    const double factor = chi_quantile(config.alpha);
    double tau = config.tau0;
    double sigma_hat = config.tau0 / factor;

    std::vector<std::size_t> inliers(n);
    for (std::size_t i = 0; i < n; ++i)
        inliers[i] = i;

    ThresholdEstimate est;
    for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
        if (inliers.size() < minimal_sample_size(config.model_kind))
            break;  // inlier set shrank below the minimal size

        const MatchSet subset = matches.subset(inliers);
        const RansacResult rr = msac(
            subset, config.ransac(tau, derive_seed(config.seed, SeedStream::InnerRansac,
                                                   static_cast<std::uint64_t>(iter))));

        const double tau_sq = tau * tau;
        std::vector<std::size_t> survivors;
        std::vector<double> survivor_r2;
        for (std::size_t j = 0; j < subset.size(); ++j) {
            if (rr.residuals_sq[j] <= tau_sq) {
                survivors.push_back(inliers[j]);
                survivor_r2.push_back(rr.residuals_sq[j]);
            }
        }
        if (survivors.empty())
            break;
        inliers = std::move(survivors);

        sigma_hat = median_sigma(survivor_r2);
        const double tau_new = factor * sigma_hat;
        est.trace.push_back({iter, sigma_hat, 0.5, tau_new, tau_new, true, false, false});
        est.outer_iters = iter;

        const bool conv = tau > 0.0 && std::abs(tau_new - tau) / tau < config.ftol;
        tau = tau_new;
        if (conv) {
            est.converged = true;
            break;
        }
        if (!(tau > 0.0))
            break;  // exact-zero residuals; MSAC cannot run at tau = 0
    }

    est.tau_star = tau;
    est.sigma_hat = sigma_hat;
    est.q_final = 0.5;
    return est;
}

// Debiased estimator: disjoint train/val split per iteration, truncation-
// corrected median on the validation residuals, online mean filtering of
// the resulting threshold candidates within [tau_min, tau_max].
inline ThresholdEstimate simfitpp(const MatchSet& matches, const ScaleConfig& config) {
    config.validate();
    const std::size_t n = matches.size();
    const std::size_t minimal = minimal_sample_size(config.model_kind);
    const auto train_size =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.p_train));
    const std::size_t val_size = n - std::min(train_size, n);
    if (train_size < minimal || val_size < 10) {
        std::ostringstream msg;
        msg << "simfitpp: split " << train_size << "/" << val_size
            << " unusable (need train >= " << minimal << ", val >= 10)";
        throw std::invalid_argument(msg.str());
    }

    const double factor = chi_quantile(config.alpha);
    OnlineMeanFilter filter(config.tau_min, config.tau_max);
    double tau = config.tau0;

    ThresholdEstimate est;
    for (int iter = 1; iter <= config.max_outer_iters; ++iter) {
        est.outer_iters = iter;
        Rng split_rng(derive_seed(config.seed, SeedStream::TrainValSplit,
                                  static_cast<std::uint64_t>(iter)));
        const auto [train_idx, val_idx] = train_val_split(n, config.p_train, split_rng);

        RansacResult rr;
        try {
            rr = msac(matches.subset(train_idx),
                      config.ransac(tau, derive_seed(config.seed, SeedStream::InnerRansac,
                                                     static_cast<std::uint64_t>(iter))));
        } catch (const EstimationFailureError&) {
            est.trace.push_back({iter, 0.0, 0.5, 0.0, tau, false, true, false});
            continue;
        }

        const double tau_sq = tau * tau;
        const auto val_r2 = residuals_squared(rr.model, matches.subset(val_idx));
        std::vector<double> kept;
        for (double r2 : val_r2)
            if (r2 <= tau_sq)
                kept.push_back(r2);
        if (kept.size() < 10) {
            est.trace.push_back({iter, 0.0, 0.5, 0.0, tau, false, true, false});
            continue;
        }

        const CorrectedSigma cs = tau_corrected_sigma(kept, tau, config.fixedpoint_iters);
        const double candidate = factor * cs.sigma;

        if (cs.fell_back) {
            // Low-confidence estimate (threshold truncates below the fixable
            // regime, so the uncorrected median is a known underestimate):
            // steer the working threshold toward it so later iterations can
            // escape the truncated regime, but keep it out of the final mean.
            est.trace.push_back({iter, cs.sigma, cs.q, candidate, tau, false, false, true});
            if (candidate > 0.0)
                tau = std::clamp(candidate, config.tau_min, config.tau_max);
            continue;
        }

        const bool accepted = filter.accept(candidate);
        const double filtered = filter.count() > 0 ? filter.mean() : tau;
        est.trace.push_back(
            {iter, cs.sigma, cs.q, candidate, filtered, accepted, false, false});
        est.q_final = cs.q;

        if (accepted) {
            // convergence is judged on successive filtered values; rejected
            // candidates leave the filter untouched and cannot converge it
            const bool conv = std::abs(filtered - tau) / tau < config.ftol;
            tau = filtered;
            if (conv) {
                est.converged = true;
                break;
            }
        } else if (candidate > 0.0 && std::isfinite(candidate)) {
            // out-of-bounds candidate: it cannot enter the mean, but it still
            // carries scale information, so clamp-steer the working threshold
            // (the bounds are the prior belief); otherwise a far-off estimate
            // would pin every subsequent iteration to the wrong regime
            tau = std::clamp(candidate, config.tau_min, config.tau_max);
        }
    }

    if (filter.count() > 0) {
        est.tau_star = filter.mean();
    } else {
        est.tau_star = config.tau0;
        est.converged = false;
    }
    est.sigma_hat = est.tau_star / factor;
    est.accepted_estimates = filter.accepted();
    return est;
}

// Multi-pair extension: per-pair simfitpp estimates are filtered with an
// online geometric mean under the same bounds. Warm starting (each pair is
// seeded with the current multi estimate) makes the pass order-dependent and
// sequential by contract; with warm_start = false every pair starts from
// config.tau0 instead, which is a different estimator whose per-pair runs
// are order-independent.
inline ThresholdEstimate simfitpp_multi(std::span<const MatchSet> dataset,
                                        const ScaleConfig& config, bool warm_start = true) {
    config.validate();
    if (dataset.empty())
        throw std::invalid_argument("simfitpp_multi: empty dataset");

    const double factor = chi_quantile(config.alpha);
    OnlineGeometricMeanFilter filter(config.tau_min, config.tau_max);
    double tau_multi = config.tau0;
    int stable_updates = 0;

    ThresholdEstimate est;
    for (std::size_t j = 0; j < dataset.size(); ++j) {
        est.outer_iters = static_cast<int>(j + 1);
        ScaleConfig pair_config = config;
        pair_config.tau0 = warm_start ? tau_multi : config.tau0;
        pair_config.seed = derive_seed(config.seed, SeedStream::MultiPair, j);

        ThresholdEstimate pair_est;
        try {
            pair_est = simfitpp(dataset[j], pair_config);
        } catch (const std::exception&) {
            est.trace.push_back({static_cast<int>(j + 1), 0.0, 0.5, 0.0, tau_multi, false, true,
                                 false});
            continue;
        }
        if (pair_est.accepted_estimates.empty()) {
            est.trace.push_back({static_cast<int>(j + 1), pair_est.sigma_hat, pair_est.q_final,
                                 0.0, tau_multi, false, true, false});
            continue;
        }

        const bool accepted = filter.accept(pair_est.tau_star);
        const double filtered = filter.count() > 0 ? filter.mean() : config.tau0;
        est.trace.push_back({static_cast<int>(j + 1), pair_est.sigma_hat, pair_est.q_final,
                             pair_est.tau_star, filtered, accepted, false, false});
        est.q_final = pair_est.q_final;

        if (accepted) {
            const double rel = std::abs(filtered - tau_multi) / tau_multi;
            tau_multi = filtered;
            if (rel < config.ftol) {
                if (++stable_updates >= 5)
                    break;  // stable for 5 consecutive accepted updates
            } else {
                stable_updates = 0;
            }
        }
    }

    // converged means "produced a usable estimate": the stopping rule above
    // is stability or dataset exhaustion, failure is only the all-pairs case
    if (filter.count() > 0) {
        est.tau_star = filter.mean();
        est.converged = true;
    } else {
        est.tau_star = config.tau0;
        est.converged = false;
    }
    est.sigma_hat = est.tau_star / factor;
    est.accepted_estimates = filter.accepted();
    return est;
}

}  // namespace sigmafit
