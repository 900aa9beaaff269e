#pragma once

#include "lobtail/stats.hpp"

#include <cstddef>
#include <vector>

namespace lobtail {

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double v) const noexcept { return lower <= v && v <= upper; }
    double width() const noexcept { return upper - lower; }
};

/// Which tail an estimator looks at. Lower flips the sign of the sample.
enum class TailSide { Upper, Lower };

// ---------------------------------------------------------------------------
// Shape of the whole distribution

struct KurtosisReport {
    double excess_kurtosis = 0.0;         // m4 / m2^2 - 3
    double robust_excess_kurtosis = 0.0;  // (U.05 - L.05) / (U.5 - L.5) - 2.59
};

/// Moment estimator m4/m2^2 - 3. Needs n >= 4 and nonzero variance.
double excess_kurtosis(VectorRef x);

/// U_a and L_a are the means of the top and bottom ceil(a n) order statistics.
double robust_excess_kurtosis(VectorRef x);

KurtosisReport kurtosis_report(VectorRef x);

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^{-1/5}.
double silverman_bandwidth(VectorRef x);

/// Gaussian kernel density on `grid`; bandwidth <= 0 selects Silverman's rule.
Vector kernel_density(VectorRef x, VectorRef grid, double bandwidth = 0.0);

struct QqPoints {
    Vector theoretical;  // N(mean, sd) quantiles at (i - 0.5)/n
    Vector empirical;    // ascending sample
};

QqPoints qq_points(VectorRef x);

struct MeanExcess {
    Vector thresholds;
    Vector mean_excess;  // NaN where nothing exceeds the threshold
    std::vector<std::size_t> n_exceed;
};

MeanExcess mean_excess(VectorRef x, VectorRef thresholds);

// ---------------------------------------------------------------------------
// Generalized Pareto tail

struct GpdFit {
    double threshold = 0.0;
    double sigma_hat = 0.0;
    double xi_hat = 0.0;
    Interval ci_sigma;
    Interval ci_xi;
    double se_sigma = 0.0;
    double se_xi = 0.0;
    std::size_t n_exceed = 0;
    double loglik = 0.0;
};

/// GPD log-likelihood of excesses y > 0; -inf outside the support.
double gpd_loglik(VectorRef excesses, double sigma, double xi);

/// Maximum likelihood fit of GPD(sigma, xi) to positive excesses, with 95%
/// intervals from the observed information (sigma on the log scale).
GpdFit gpd_fit_excesses(VectorRef excesses, double threshold = 0.0);

/// Fits the exceedances over the (1 - tail_fraction) empirical quantile.
/// Needs at least 30 exceedances.
GpdFit gpd_fit(VectorRef returns, double tail_fraction = 0.05, TailSide side = TailSide::Upper);

// ---------------------------------------------------------------------------
// Hill estimator

struct HillCurve {
    std::vector<int> ks;
    Vector alpha_hat;
    Vector wald_lo;
    Vector wald_hi;  // +inf while k <= z^2
};

struct KRange {
    int lo = 1;
    int hi = 1;
};

/// The largest ceil(fraction n) values in descending order.
Vector upper_tail(VectorRef x, double fraction = 0.05, TailSide side = TailSide::Upper);

/// k in [ceil(0.01 n_tail), ceil(0.05 n_tail)] where n_tail = ceil(0.05 n).
/// For n = 365112 this is [183, 913].
KRange default_hill_range(std::size_t n);

/// alpha(k) = 1 / (mean(ln X_(1..k)) - ln X_(k+1)) on a descending sample.
double hill_estimate(VectorRef descending, int k);

/// Hill curve with 95% Wald intervals over k = lo..hi. `tail` is the right
/// tail sample in any order; k must stay below its size.
HillCurve hill_curve(VectorRef tail, KRange ks);
HillCurve hill_curve(VectorRef tail, const std::vector<int>& ks);

// ---------------------------------------------------------------------------
// Rank minus one half regression

struct RankFit {
    double b_hat = 0.0;
    Interval ci;         // b +- z b sqrt(2/n)
    double a_hat = 0.0;  // intercept
    double se_gi = 0.0;
    double se_ols = 0.0;
    std::size_t n_pos = 0;
};

/// OLS of ln(t - 1/2) on ln Z_(t) over the strictly positive values; b = -slope.
RankFit rank_half_fit(VectorRef positive);

/// Strictly positive entries of x (after the optional sign flip).
Vector positive_part(VectorRef x, TailSide side = TailSide::Upper);

}  // namespace lobtail
