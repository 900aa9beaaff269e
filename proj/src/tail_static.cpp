#include "lobtail/tail_static.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/errors.hpp"
#include "lobtail/optimize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

namespace lobtail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vector oriented(VectorRef x, TailSide side)
{
    return side == TailSide::Upper ? Vector(x) : Vector(-x);
}

std::size_t ceil_count(double fraction, std::size_t n)
{
    // guard against 0.05 * 100 landing a hair above 5
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

double top_mean(const Vector& asc, std::size_t m)
{
    return asc.tail(static_cast<Eigen::Index>(m)).mean();
}

double bottom_mean(const Vector& asc, std::size_t m)
{
    return asc.head(static_cast<Eigen::Index>(m)).mean();
}

// Profile log-likelihood of the GPD in theta = xi / sigma, per observation.
// xi(theta) = mean log1p(theta y) and sigma = xi / theta.
struct GpdProfile {
    const Vector& y;
    double ymax;
    double ybar;

    struct Point {
        double sigma;
        double xi;
        double loglik;  // per observation
    };

    Point at_t(double t) const
    {
        if (std::abs(t) < 1e-13) return {ybar, 0.0, -std::log(ybar) - 1.0};
        const double theta = t / ymax;
        double s = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) s += std::log1p(theta * y[i]);
        const double xi = s / static_cast<double>(y.size());
        const double sigma = xi / theta;
        if (!(sigma > 0.0) || !std::isfinite(sigma)) return {sigma, xi, -kInf};
        return {sigma, xi, -std::log(sigma) - 1.0 - xi};
    }
};

double gpd_nll(const Vector& y, double sigma, double xi)
{
    return -gpd_loglik(y, sigma, xi);
}

}  // namespace

double excess_kurtosis(VectorRef x)
{
    if (x.size() < 4) throw RangeError("excess kurtosis needs at least 4 observations");
    const double m2 = stats::central_moment(x, 2);
    if (!(m2 > 0.0)) throw DegenerateError("excess kurtosis of a zero-variance sample");
    return stats::central_moment(x, 4) / (m2 * m2) - 3.0;
}

double robust_excess_kurtosis(VectorRef x)
{
    const auto n = static_cast<std::size_t>(x.size());
    if (n < 2) throw RangeError("robust kurtosis needs at least 2 observations");
    const Vector asc = stats::sorted(x);
    const std::size_t m05 = std::max<std::size_t>(1, ceil_count(0.05, n));
    const std::size_t m50 = std::max<std::size_t>(1, ceil_count(0.5, n));
    const double inner = top_mean(asc, m50) - bottom_mean(asc, m50);
    if (!(inner > 0.0)) throw DegenerateError("robust kurtosis: U_0.5 equals L_0.5");
    return (top_mean(asc, m05) - bottom_mean(asc, m05)) / inner - 2.59;
}

KurtosisReport kurtosis_report(VectorRef x)
{
    return {excess_kurtosis(x), robust_excess_kurtosis(x)};
}

double silverman_bandwidth(VectorRef x)
{
    if (x.size() < 2) throw RangeError("bandwidth needs at least 2 observations");
    const Vector asc = stats::sorted(x);
    const double iqr = stats::quantile_sorted(asc, 0.75) - stats::quantile_sorted(asc, 0.25);
    double spread = stats::sample_sd(x);
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    if (!(spread > 0.0)) throw DegenerateError("bandwidth of a constant sample");
    return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

Vector kernel_density(VectorRef x, VectorRef grid, double bandwidth)
{
    if (x.size() < 2) throw RangeError("kernel density needs at least 2 observations");
    const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(x);
    const Vector asc = stats::sorted(x);
    const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    Vector out(grid.size());
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        // Only points within 9 bandwidths contribute above double precision.
        const double* lo = std::lower_bound(asc.data(), asc.data() + asc.size(), grid[g] - 9.0 * h);
        const double* hi = std::upper_bound(lo, asc.data() + asc.size(), grid[g] + 9.0 * h);
        double s = 0.0;
        for (const double* p = lo; p != hi; ++p) {
            const double z = (*p - grid[g]) / h;
            s += std::exp(-0.5 * z * z);
        }
        out[g] = s * norm;
    }
    return out;
}

QqPoints qq_points(VectorRef x)
{
    if (x.size() < 2) throw RangeError("QQ points need at least 2 observations");
    QqPoints q;
    q.empirical = stats::sorted(x);
    const double mu = stats::mean(x);
    const double sd = stats::sample_sd(x);
    const auto n = static_cast<double>(x.size());
    q.theoretical.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        q.theoretical[i] = mu + sd * stats::normal_quantile((static_cast<double>(i) + 0.5) / n);
    return q;
}

MeanExcess mean_excess(VectorRef x, VectorRef thresholds)
{
    const Vector asc = stats::sorted(x);
    const auto n = asc.size();
    // suffix[i] = sum of asc[i..n)
    Vector suffix(n + 1);
    suffix[n] = 0.0;
    for (Eigen::Index i = n - 1; i >= 0; --i) suffix[i] = suffix[i + 1] + asc[i];

    MeanExcess out;
    out.thresholds = thresholds;
    out.mean_excess.resize(thresholds.size());
    out.n_exceed.resize(static_cast<std::size_t>(thresholds.size()));
    for (Eigen::Index j = 0; j < thresholds.size(); ++j) {
        const double u = thresholds[j];
        const auto first = std::upper_bound(asc.data(), asc.data() + n, u) - asc.data();
        const auto m = n - first;
        out.n_exceed[static_cast<std::size_t>(j)] = static_cast<std::size_t>(m);
        out.mean_excess[j] = m > 0 ? suffix[first] / static_cast<double>(m) - u : kNaN;
    }
    return out;
}

double gpd_loglik(VectorRef excesses, double sigma, double xi)
{
    if (!(sigma > 0.0)) return -kInf;
    const auto n = static_cast<double>(excesses.size());
    double s = 0.0;
    if (xi == 0.0) {
        for (Eigen::Index i = 0; i < excesses.size(); ++i) s += excesses[i];
        return -n * std::log(sigma) - s / sigma;
    }
    const double r = xi / sigma;
    for (Eigen::Index i = 0; i < excesses.size(); ++i) {
        const double w = r * excesses[i];
        if (!(w > -1.0)) return -kInf;
        s += std::log1p(w);
    }
    return -n * std::log(sigma) - (1.0 + 1.0 / xi) * s;
}

GpdFit gpd_fit_excesses(VectorRef excesses, double threshold)
{
    const auto n = excesses.size();
    if (n < 30) throw RangeError("GPD fit needs at least 30 exceedances, got " + std::to_string(n));
    const Vector y = excesses;
    if ((y.array() <= 0.0).any()) throw DomainError("GPD excesses must be positive");
    const double ymax = y.maxCoeff();
    if (ymax - y.minCoeff() <= 1e-14 * ymax) throw DegenerateError("all GPD exceedances are equal");

    const double ybar = y.mean();
    const GpdProfile profile{y, ymax, ybar};
    auto f = [&](double u) { return -profile.at_t(std::expm1(u)).loglik; };

    // Start from the method-of-moments estimate, then bracket downhill in
    // u = ln(1 + theta ymax), which maps theta > -1/ymax onto the real line.
    const double v = stats::central_moment(y, 2);
    const double ratio = ybar * ybar / v;
    const double xi0 = 0.5 * (1.0 - ratio);
    const double sigma0 = 0.5 * ybar * (ratio + 1.0);
    const double t0 = std::clamp(xi0 / sigma0 * ymax, -0.9, 1e4);
    const double u_lo = std::log(1e-6);
    const double u_hi = std::log1p(1e6);

    double a = std::log1p(t0);
    double b = std::clamp(a + 0.25, u_lo, u_hi);
    double fa = f(a);
    double fb = f(b);
    if (fb > fa) {
        std::swap(a, b);
        std::swap(fa, fb);
    }
    double c = std::clamp(b + 1.618 * (b - a), u_lo, u_hi);
    double fc = f(c);
    int expansions = 0;
    while (fc <= fb) {
        if (c == u_lo || c == u_hi || ++expansions > 60)
            throw FitError("GPD likelihood has no interior maximum (search reached t = " +
                           csv::format(std::expm1(c)) + ", n = " + std::to_string(n) + ")");
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = std::clamp(b + 1.618 * (b - a), u_lo, u_hi);
        fc = f(c);
    }
    const auto best = optim::brent_minimize(f, std::min(a, c), std::max(a, c), 1e-10, 1e-12);
    const auto p = profile.at_t(std::expm1(best.x));
    if (!std::isfinite(p.loglik)) throw FitError("GPD profile search ended outside the support");

    GpdFit fit;
    fit.threshold = threshold;
    fit.n_exceed = static_cast<std::size_t>(n);
    fit.sigma_hat = p.sigma;
    fit.xi_hat = p.xi;
    fit.loglik = gpd_loglik(y, p.sigma, p.xi);

    // Observed information in (sigma, xi).
    const double h_xi = std::min(1e-4, 0.25 * (p.sigma / ymax + p.xi));
    const Vector steps = (Vector(2) << 1e-4 * p.sigma, std::max(h_xi, 1e-7)).finished();
    const Vector at = (Vector(2) << p.sigma, p.xi).finished();
    const optim::Objective nll = [&](const Vector& q) { return gpd_nll(y, q[0], q[1]); };
    const Matrix info = optim::numeric_hessian(nll, at, steps);
    const Eigen::LDLT<Matrix> ldlt(info);
    if (!info.allFinite() || ldlt.info() != Eigen::Success || !ldlt.isPositive() || info.determinant() <= 0.0)
        throw FitError("GPD observed information is not positive definite at xi = " + csv::format(p.xi) +
                       ", sigma = " + csv::format(p.sigma));
    const Matrix cov = info.inverse();
    fit.se_sigma = std::sqrt(cov(0, 0));
    fit.se_xi = std::sqrt(cov(1, 1));
    const double z = stats::kZ975;
    fit.ci_xi = {p.xi - z * fit.se_xi, p.xi + z * fit.se_xi};
    const double se_log_sigma = fit.se_sigma / p.sigma;
    fit.ci_sigma = {p.sigma * std::exp(-z * se_log_sigma), p.sigma * std::exp(z * se_log_sigma)};
    return fit;
}

GpdFit gpd_fit(VectorRef returns, double tail_fraction, TailSide side)
{
    if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) throw ConfigError("tail_fraction must lie in (0, 1)");
    const Vector x = oriented(returns, side);
    const double u = stats::quantile(x, 1.0 - tail_fraction);
    std::vector<double> exc;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] > u) exc.push_back(x[i] - u);
    return gpd_fit_excesses(Eigen::Map<const Vector>(exc.data(), static_cast<Eigen::Index>(exc.size())), u);
}

Vector upper_tail(VectorRef x, double fraction, TailSide side)
{
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("tail fraction must lie in (0, 1]");
    Vector v = oriented(x, side);
    const auto m = static_cast<Eigen::Index>(std::max<std::size_t>(1, ceil_count(fraction, v.size())));
    std::partial_sort(v.data(), v.data() + m, v.data() + v.size(), std::greater<>());
    return v.head(m);
}

KRange default_hill_range(std::size_t n)
{
    const std::size_t n_tail = ceil_count(0.05, n);
    return {static_cast<int>(std::max<std::size_t>(1, ceil_count(0.01, n_tail))),
            static_cast<int>(std::max<std::size_t>(1, ceil_count(0.05, n_tail)))};
}

double hill_estimate(VectorRef descending, int k)
{
    if (k < 1 || k >= descending.size())
        throw RangeError("Hill k = " + std::to_string(k) + " outside [1, " + std::to_string(descending.size() - 1) + "]");
    if (!(descending[k] > 0.0)) throw DomainError("non-positive order statistic X_(" + std::to_string(k + 1) + ")");
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += std::log(descending[i]);
    return 1.0 / (s / k - std::log(descending[k]));
}

HillCurve hill_curve(VectorRef tail, const std::vector<int>& ks)
{
    Vector desc = tail;
    std::sort(desc.data(), desc.data() + desc.size(), std::greater<>());
    const auto n_tail = desc.size();
    int kmax = 0;
    for (int k : ks) {
        if (k < 1 || k >= n_tail)
            throw RangeError("Hill k = " + std::to_string(k) + " outside [1, " + std::to_string(n_tail - 1) + "]");
        kmax = std::max(kmax, k);
    }
    if (!ks.empty() && !(desc[kmax] > 0.0))
        throw DomainError("non-positive order statistic inside the Hill window");

    // prefix[k] = sum of ln X_(1..k)
    Vector prefix(kmax + 1);
    prefix[0] = 0.0;
    for (int i = 0; i < kmax; ++i) prefix[i + 1] = prefix[i] + std::log(desc[i]);

    HillCurve out;
    out.ks = ks;
    const auto m = static_cast<Eigen::Index>(ks.size());
    out.alpha_hat.resize(m);
    out.wald_lo.resize(m);
    out.wald_hi.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const int k = ks[static_cast<std::size_t>(j)];
        const double a = 1.0 / (prefix[k] / k - std::log(desc[k]));
        const double r = stats::kZ975 / std::sqrt(static_cast<double>(k));
        out.alpha_hat[j] = a;
        out.wald_lo[j] = a / (1.0 + r);
        out.wald_hi[j] = r < 1.0 ? a / (1.0 - r) : kInf;
    }
    return out;
}

HillCurve hill_curve(VectorRef tail, KRange ks)
{
    if (ks.hi < ks.lo) throw RangeError("empty Hill k range");
    std::vector<int> k(static_cast<std::size_t>(ks.hi - ks.lo + 1));
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = ks.lo + static_cast<int>(i);
    return hill_curve(tail, k);
}

Vector positive_part(VectorRef x, TailSide side)
{
    const Vector v = oriented(x, side);
    std::vector<double> pos;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (v[i] > 0.0) pos.push_back(v[i]);
    return Eigen::Map<const Vector>(pos.data(), static_cast<Eigen::Index>(pos.size()));
}

RankFit rank_half_fit(VectorRef positive)
{
    const auto n = positive.size();
    if (n < 30) throw RangeError("rank-1/2 fit needs at least 30 positive values, got " + std::to_string(n));
    if ((positive.array() <= 0.0).any()) throw DomainError("rank-1/2 fit takes strictly positive values");
    Vector desc = positive;
    std::sort(desc.data(), desc.data() + n, std::greater<>());

    const Vector x = desc.array().log();
    Vector y(n);
    for (Eigen::Index t = 0; t < n; ++t) y[t] = std::log(static_cast<double>(t + 1) - 0.5);
    const double xbar = x.mean();
    const double ybar = y.mean();
    const double sxx = (x.array() - xbar).square().sum();
    if (desc[0] == desc[n - 1] || !(sxx > 0.0)) throw DegenerateError("rank-1/2 regressor is constant");
    const double sxy = ((x.array() - xbar) * (y.array() - ybar)).sum();
    const double slope = sxy / sxx;

    RankFit fit;
    fit.n_pos = static_cast<std::size_t>(n);
    fit.b_hat = -slope;
    fit.a_hat = ybar - slope * xbar;
    const double ssr = (y.array() - fit.a_hat - slope * x.array()).square().sum();
    fit.se_ols = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    fit.se_gi = std::abs(fit.b_hat) * std::sqrt(2.0 / static_cast<double>(n));
    fit.ci = {fit.b_hat - stats::kZ975 * fit.se_gi, fit.b_hat + stats::kZ975 * fit.se_gi};
    return fit;
}

}  // namespace lobtail
