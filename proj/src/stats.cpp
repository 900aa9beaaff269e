#include "lobtail/stats.hpp"

#include "lobtail/errors.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace lobtail::stats {

Vector sorted(VectorRef x)
{
    Vector s = x;
    std::sort(s.data(), s.data() + s.size());
    return s;
}

double quantile_sorted(VectorRef ascending, double p)
{
    const auto n = ascending.size();
    if (n == 0) throw ConfigError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level outside [0, 1]");
    // 1-based position h solves (h - 0.5)/n = p.
    const double h = static_cast<double>(n) * p + 0.5;
    if (h <= 1.0) return ascending[0];
    if (h >= static_cast<double>(n)) return ascending[n - 1];
    const auto lo = static_cast<Eigen::Index>(std::floor(h));
    const double w = h - static_cast<double>(lo);
    return ascending[lo - 1] + w * (ascending[lo] - ascending[lo - 1]);
}

double quantile(VectorRef x, double p) { return quantile_sorted(sorted(x), p); }

double mean(VectorRef x)
{
    if (x.size() == 0) throw ConfigError("mean of an empty sample");
    return x.mean();
}

double central_moment(VectorRef x, int k)
{
    const double m = mean(x);
    return (x.array() - m).pow(k).mean();
}

double sample_sd(VectorRef x)
{
    if (x.size() < 2) throw ConfigError("standard deviation needs at least two points");
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

double skewness(VectorRef x)
{
    const double m2 = central_moment(x, 2);
    if (m2 <= 0.0) throw DegenerateError("skewness of a zero-variance sample");
    return central_moment(x, 3) / std::pow(m2, 1.5);
}

double excess_kurtosis_moment(VectorRef x)
{
    const double m2 = central_moment(x, 2);
    if (m2 <= 0.0) throw DegenerateError("kurtosis of a zero-variance sample");
    return central_moment(x, 4) / (m2 * m2) - 3.0;
}

double normal_pdf(double x) { return 0.3989422804014327 * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile level outside (0, 1)");
    return Eigen::numext::ndtri(p);
}

double gamma_p(double a, double x)
{
    if (x <= 0.0) return 0.0;
    return Eigen::numext::igamma(a, x);
}

double chi2_cdf(double x, double dof) { return gamma_p(0.5 * dof, 0.5 * x); }

double chi2_quantile(double p, double dof)
{
    if (!(p > 0.0 && p < 1.0)) throw DomainError("chi-square quantile level outside (0, 1)");
    double lo = 0.0;
    double hi = std::max(1.0, dof);
    while (chi2_cdf(hi, dof) < p) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (chi2_cdf(mid, dof) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

LjungBox ljung_box(VectorRef x, int lags)
{
    const auto n = x.size();
    if (lags < 1 || n <= lags) throw ConfigError("Ljung-Box needs 1 <= lags < n");
    const Vector c = x.array() - x.mean();
    const double c0 = c.squaredNorm();
    if (c0 <= 0.0) throw DegenerateError("Ljung-Box on a constant series");
    double q = 0.0;
    for (int k = 1; k <= lags; ++k) {
        const double rk = c.head(n - k).dot(c.tail(n - k)) / c0;
        q += rk * rk / static_cast<double>(n - k);
    }
    q *= static_cast<double>(n) * static_cast<double>(n + 2);
    return {q, lags, 1.0 - chi2_cdf(q, lags)};
}

namespace {

Vector ranks(VectorRef x)
{
    const auto n = x.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    Vector r(n);
    for (Eigen::Index i = 0; i < n;) {
        Eigen::Index j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double pearson(VectorRef x, VectorRef y)
{
    if (x.size() != y.size() || x.size() < 2) throw AlignmentError("correlation needs aligned samples");
    const Vector a = x.array() - x.mean();
    const Vector b = y.array() - y.mean();
    const double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
    if (den <= 0.0) throw DegenerateError("correlation of a constant sample");
    return a.dot(b) / den;
}

double spearman(VectorRef x, VectorRef y) { return pearson(ranks(x), ranks(y)); }

}  // namespace lobtail::stats
