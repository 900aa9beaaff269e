#include "lobtail/errors.hpp"
#include "lobtail/tail_static.hpp"

#include "test_support.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace lobtail;
using namespace lobtail::fixtures;

namespace {

// Straight two-pass moments, kept independent of stats::central_moment.
double naive_excess_kurtosis(const Vector& x)
{
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double m2 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - m;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(x.size());
    m4 /= static_cast<double>(x.size());
    return m4 / (m2 * m2) - 3.0;
}

double trapezoid(const Vector& grid, const Vector& f)
{
    double s = 0.0;
    for (Eigen::Index i = 1; i < grid.size(); ++i) s += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    return s;
}

}  // namespace

TEST(ExcessKurtosis, TwoPointSampleIsMinusTwo)
{
    Vector x(1000);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = i % 2 ? 1.0 : -1.0;
    EXPECT_NEAR(excess_kurtosis(x), -2.0, 1e-12);
}

TEST(ExcessKurtosis, MatchesDirectMoments)
{
    const Vector x = student_t_sample(5000, 3, 6.0);
    EXPECT_NEAR(excess_kurtosis(x), naive_excess_kurtosis(x), 1e-9);
}

TEST(ExcessKurtosis, NormalAndLaplaceBaselines)
{
    EXPECT_NEAR(excess_kurtosis(normal_sample(400000, 1)), 0.0, 0.05);
    EXPECT_NEAR(excess_kurtosis(laplace_sample(400000, 2)), 3.0, 0.25);
}

TEST(ExcessKurtosis, ZeroVarianceIsDegenerate)
{
    EXPECT_THROW(excess_kurtosis(Vector::Constant(10, 2.0)), DegenerateError);
    EXPECT_THROW(excess_kurtosis(Vector::Zero(3)), RangeError);
}

TEST(RobustKurtosis, NormalIsNearZero)
{
    // Closed form: 2 phi(1.645)/0.05 / (2 phi(0)/0.5) - 2.59 = -0.005.
    EXPECT_NEAR(robust_excess_kurtosis(normal_sample(400000, 5)), -0.005, 0.02);
}

TEST(RobustKurtosis, UniformClosedForm)
{
    // U_0.05 = 0.95, U_0.5 = 0.5 on (-1, 1): 1.9 / 1 - 2.59.
    EXPECT_NEAR(robust_excess_kurtosis(uniform_sample(400000, 6, -1.0, 1.0)), -0.69, 0.01);
}

TEST(RobustKurtosis, TrimmedMeansByHand)
{
    // 1..20: top 1 = 20, bottom 1 = 1, top 10 mean 15.5, bottom 10 mean 5.5.
    Vector x(20);
    for (int i = 0; i < 20; ++i) x[i] = 20.0 - i;
    EXPECT_NEAR(robust_excess_kurtosis(x), 19.0 / 10.0 - 2.59, 1e-12);
}

TEST(RobustKurtosis, CauchyIsLargeAndConstantIsDegenerate)
{
    EXPECT_GT(robust_excess_kurtosis(cauchy_sample(100000, 7)), 5.0);
    EXPECT_THROW(robust_excess_kurtosis(Vector::Constant(50, 1.0)), DegenerateError);
}

TEST(KernelDensity, IntegratesToOne)
{
    const Vector x = student_t_sample(20000, 8, 4.0);
    const Vector grid = Vector::LinSpaced(4001, -40.0, 40.0);
    EXPECT_NEAR(trapezoid(grid, kernel_density(x, grid)), 1.0, 1e-3);
}

TEST(KernelDensity, MatchesFullSum)
{
    const Vector x = normal_sample(300, 9);
    const Vector grid = Vector::LinSpaced(41, -4.0, 4.0);
    const double h = 0.3;
    const Vector f = kernel_density(x, grid, h);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        double s = 0.0;
        for (double v : x) s += std::exp(-0.5 * std::pow((grid[g] - v) / h, 2)) / (h * std::sqrt(2.0 * M_PI));
        EXPECT_NEAR(f[g], s / 300.0, 1e-14);
    }
}

TEST(QqPoints, NormalSampleHugsDiagonal)
{
    const auto q = qq_points(normal_sample(20000, 10, 1.0, 2.0));
    // Interior points only; the outermost order statistics are noisy.
    double worst = 0.0;
    for (Eigen::Index i = 200; i < q.empirical.size() - 200; ++i)
        worst = std::max(worst, std::abs(q.empirical[i] - q.theoretical[i]));
    EXPECT_LT(worst, 0.15);
    EXPECT_TRUE(std::is_sorted(q.theoretical.begin(), q.theoretical.end()));
}

TEST(QqPoints, StudentTBendsAboveInRightTail)
{
    const auto q = qq_points(student_t_sample(20000, 11, 3.0));
    const auto n = q.empirical.size();
    for (Eigen::Index i = n - 20; i < n; ++i) EXPECT_GT(q.empirical[i], q.theoretical[i]);
    for (Eigen::Index i = 0; i < 20; ++i) EXPECT_LT(q.empirical[i], q.theoretical[i]);
}

TEST(MeanExcess, ExponentialIsFlat)
{
    const Vector x = exponential_sample(400000, 12, 2.0);
    const Vector u = Vector::LinSpaced(5, 0.0, 2.0);
    const auto me = mean_excess(x, u);
    for (Eigen::Index j = 0; j < u.size(); ++j) EXPECT_NEAR(me.mean_excess[j], 0.5, 0.03);
}

TEST(MeanExcess, ParetoIsLinear)
{
    // alpha = 3: e(u) = u / (alpha - 1).
    const Vector x = pareto_sample(1000000, 13, 3.0);
    const Vector u = (Vector(3) << 1.5, 2.0, 3.0).finished();
    const auto me = mean_excess(x, u);
    for (Eigen::Index j = 0; j < u.size(); ++j) EXPECT_NEAR(me.mean_excess[j], u[j] / 2.0, 0.05 * u[j]);
}

TEST(MeanExcess, SingleAndEmptyExceedance)
{
    const Vector x = (Vector(5) << 1.0, 4.0, 2.0, 9.0, 3.0).finished();
    const auto me = mean_excess(x, (Vector(3) << 9.0 - 1e-9, 9.0, 2.5).finished());
    EXPECT_NEAR(me.mean_excess[0], 1e-9, 1e-15);
    EXPECT_EQ(me.n_exceed[0], 1u);
    EXPECT_TRUE(std::isnan(me.mean_excess[1]));
    EXPECT_EQ(me.n_exceed[1], 0u);
    EXPECT_DOUBLE_EQ(me.mean_excess[2], (4.0 + 9.0 + 3.0) / 3.0 - 2.5);
}

TEST(GpdLoglik, MatchesDensityFormula)
{
    const Vector y = gpd_sample(50, 14, 1.3, 0.2);
    double direct = 0.0;
    for (double v : y) direct += std::log(1.0 / 1.3 * std::pow(1.0 + 0.2 * v / 1.3, -1.0 / 0.2 - 1.0));
    EXPECT_NEAR(gpd_loglik(y, 1.3, 0.2), direct, 1e-10);
    double expo = 0.0;
    for (double v : y) expo += -std::log(1.3) - v / 1.3;
    EXPECT_NEAR(gpd_loglik(y, 1.3, 0.0), expo, 1e-10);
    EXPECT_NEAR(gpd_loglik(y, 1.3, 1e-9), expo, 1e-6);
    EXPECT_EQ(gpd_loglik(y, 1.3, -10.0), -std::numeric_limits<double>::infinity());
}

TEST(GpdFit, RecoversShape)
{
    const auto fit = gpd_fit_excesses(gpd_sample(100000, 15, 1.0, 0.3));
    EXPECT_NEAR(fit.xi_hat, 0.3, 0.02);
    EXPECT_NEAR(fit.sigma_hat, 1.0, 0.03);
    EXPECT_TRUE(fit.ci_xi.contains(fit.xi_hat));
    EXPECT_TRUE(fit.ci_sigma.contains(fit.sigma_hat));
    EXPECT_GT(fit.sigma_hat, 0.0);
    EXPECT_EQ(fit.n_exceed, 100000u);
}

TEST(GpdFit, ExponentialCiCoversZero)
{
    const auto fit = gpd_fit_excesses(exponential_sample(20000, 16, 1.0));
    EXPECT_TRUE(fit.ci_xi.contains(0.0)) << fit.ci_xi.lower << ' ' << fit.ci_xi.upper;
    EXPECT_NEAR(fit.sigma_hat, 1.0, 0.05);
}

TEST(GpdFit, ShortTailedShape)
{
    const auto fit = gpd_fit_excesses(gpd_sample(50000, 17, 2.0, -0.2));
    EXPECT_NEAR(fit.xi_hat, -0.2, 0.02);
    EXPECT_NEAR(fit.sigma_hat, 2.0, 0.06);
}

TEST(GpdFit, StandardErrorMatchesAsymptoticFormula)
{
    // Var(xi) = (1 + xi)^2 / n for the GPD MLE.
    const double xi = 0.3;
    const auto fit = gpd_fit_excesses(gpd_sample(100000, 18, 1.0, xi));
    EXPECT_NEAR(fit.se_xi, (1.0 + xi) / std::sqrt(1e5), 2e-4);
    // sigma interval is built on the log scale, so it is asymmetric
    EXPECT_GT(fit.ci_sigma.upper - fit.sigma_hat, fit.sigma_hat - fit.ci_sigma.lower);
}

TEST(GpdFit, LocalOptimalityProbe)
{
    const Vector y = gpd_sample(5000, 19, 0.7, 0.25);
    const auto fit = gpd_fit_excesses(y);
    const double best = gpd_loglik(y, fit.sigma_hat, fit.xi_hat);
    EXPECT_NEAR(best, fit.loglik, 1e-9 * std::abs(best));
    for (int i = -3; i <= 3; ++i)
        for (int j = -3; j <= 3; ++j)
            EXPECT_LE(gpd_loglik(y, fit.sigma_hat * (1.0 + 0.01 * i), fit.xi_hat + 0.01 * j), best + 1e-7);
}

TEST(GpdFit, ParametricBootstrapSanity)
{
    const auto first = gpd_fit_excesses(pareto_sample(20000, 20, 3.0).array() - 1.0);
    const auto again = gpd_fit_excesses(gpd_sample(20000, 21, first.sigma_hat, first.xi_hat));
    EXPECT_NEAR(again.xi_hat, first.xi_hat, 2.0 * std::hypot(first.se_xi, again.se_xi));
}

TEST(GpdFit, ThresholdFromTailFraction)
{
    const Vector x = student_t_sample(100000, 22, 3.0);
    const auto fit = gpd_fit(x, 0.05);
    EXPECT_NEAR(fit.threshold, stats::quantile(x, 0.95), 0.0);
    EXPECT_EQ(fit.n_exceed, 5000u);
    // t(3) has tail index 3.
    EXPECT_NEAR(fit.xi_hat, 1.0 / 3.0, 0.1);

    const auto lower = gpd_fit(x, 0.05, TailSide::Lower);
    EXPECT_NEAR(lower.threshold, -stats::quantile(x, 0.05), 1e-12);
}

TEST(GpdFit, Errors)
{
    EXPECT_THROW(gpd_fit_excesses(Vector::Constant(100, 0.5)), DegenerateError);
    EXPECT_THROW(gpd_fit_excesses(exponential_sample(29, 1, 1.0)), RangeError);
    EXPECT_THROW(gpd_fit(normal_sample(100, 1), 0.05), RangeError);
    EXPECT_THROW(gpd_fit(normal_sample(100, 1), 1.5), ConfigError);
}

TEST(Hill, DefaultRangeMatchesAaplWindow)
{
    const auto r = default_hill_range(365112);
    EXPECT_EQ(r.lo, 183);
    EXPECT_EQ(r.hi, 913);
}

TEST(Hill, GeometricSampleClosedForm)
{
    // X_(i) = c rho^i gives alpha(k) = 2 / ((k + 1)(-ln rho)).
    const double c = 3.0;
    const double rho = 0.97;
    Vector x(200);
    for (int i = 0; i < 200; ++i) x[i] = c * std::pow(rho, i + 1);
    for (int k : {1, 5, 50, 199}) {
        const double expected = 2.0 / ((k + 1) * -std::log(rho));
        EXPECT_NEAR(hill_estimate(x, k), expected, 1e-9 * expected);
    }
    const auto curve = hill_curve(x.reverse(), KRange{10, 20});
    for (std::size_t j = 0; j < curve.ks.size(); ++j)
        EXPECT_NEAR(curve.alpha_hat[static_cast<Eigen::Index>(j)], hill_estimate(x, curve.ks[j]), 1e-12);
}

TEST(Hill, ParetoRecoveryAcrossWindow)
{
    const Vector x = pareto_sample(400000, 23, 2.0);
    const Vector tail = upper_tail(x, 0.05);
    EXPECT_EQ(tail.size(), 20000);
    const auto curve = hill_curve(tail, default_hill_range(static_cast<std::size_t>(x.size())));
    for (Eigen::Index j = 0; j < curve.alpha_hat.size(); ++j) EXPECT_NEAR(curve.alpha_hat[j], 2.0, 0.1);
}

TEST(Hill, ScaleInvariance)
{
    const Vector tail = upper_tail(pareto_sample(20000, 24, 1.5), 0.1);
    const auto a = hill_curve(tail, KRange{20, 300});
    const auto b = hill_curve(tail * 17.0, KRange{20, 300});
    EXPECT_LT((a.alpha_hat - b.alpha_hat).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Hill, WaldBoundsAndWidth)
{
    const Vector tail = upper_tail(pareto_sample(100000, 25, 2.0), 0.05);
    const auto curve = hill_curve(tail, std::vector<int>{2, 3, 4, 5, 400});
    EXPECT_TRUE(std::isinf(curve.wald_hi[0]));  // 2 < z^2
    EXPECT_TRUE(std::isinf(curve.wald_hi[1]));
    for (Eigen::Index j = 2; j < 5; ++j) {
        EXPECT_LT(curve.wald_lo[j], curve.alpha_hat[j]);
        EXPECT_GT(curve.wald_hi[j], curve.alpha_hat[j]);
    }
    const double half = 0.5 * (curve.wald_hi[4] - curve.wald_lo[4]) / curve.alpha_hat[4];
    EXPECT_NEAR(half, 1.959964 / 20.0, 0.002);
    EXPECT_NEAR(curve.wald_lo[4], curve.alpha_hat[4] / (1.0 + 1.959964 / 20.0), 1e-6);
}

TEST(Hill, RangeAndDomainErrors)
{
    const Vector tail = (Vector(5) << 5.0, 4.0, 3.0, 0.0, -1.0).finished();
    EXPECT_THROW(hill_curve(tail, std::vector<int>{5}), RangeError);
    EXPECT_THROW(hill_curve(tail, std::vector<int>{0}), RangeError);
    EXPECT_THROW(hill_curve(tail, std::vector<int>{3}), DomainError);
    EXPECT_NO_THROW(hill_curve(tail, std::vector<int>{2}));
}

TEST(RankHalf, ExactGridRecoversIndexExactly)
{
    // Z_(t) = ((t - 1/2) / n)^{-1/zeta} makes the regression exactly linear.
    const int n = 5000;
    const double zeta = 1.7;
    Vector z(n);
    for (int t = 1; t <= n; ++t) z[t - 1] = std::pow((t - 0.5) / n, -1.0 / zeta);
    const auto fit = rank_half_fit(z);
    EXPECT_NEAR(fit.b_hat, zeta, 1e-10);
    EXPECT_NEAR(fit.a_hat, std::log(static_cast<double>(n)), 1e-8);
    EXPECT_LT(fit.se_ols, 1e-10);
}

TEST(RankHalf, ParetoQuantileGridConverges)
{
    const double zeta = 2.0;
    for (int n : {100000}) {
        Vector z(n);
        for (int t = 1; t <= n; ++t) z[t - 1] = std::pow(static_cast<double>(t) / (n + 1), -1.0 / zeta);
        EXPECT_NEAR(rank_half_fit(z).b_hat, zeta, 0.01);
    }
}

TEST(RankHalf, MatchesLeastSquaresOracle)
{
    Vector z = pareto_sample(400, 26, 1.2);
    const auto fit = rank_half_fit(z);
    std::sort(z.begin(), z.end(), std::greater<>());
    Matrix design(400, 2);
    Vector y(400);
    for (int t = 0; t < 400; ++t) {
        design(t, 0) = 1.0;
        design(t, 1) = std::log(z[t]);
        y[t] = std::log(t + 0.5);
    }
    const Vector beta = design.colPivHouseholderQr().solve(y);
    EXPECT_NEAR(fit.a_hat, beta[0], 1e-9);
    EXPECT_NEAR(fit.b_hat, -beta[1], 1e-10);
    const double sigma2 = (y - design * beta).squaredNorm() / 398.0;
    const Matrix cov = sigma2 * (design.transpose() * design).inverse();
    EXPECT_NEAR(fit.se_ols, std::sqrt(cov(1, 1)), 1e-9);
}

TEST(RankHalf, GabaixIbragimovWidth)
{
    // b = 0.923, n = 180000: SE = 0.923 sqrt(2/n) = 0.00307.
    const double se = 0.923 * std::sqrt(2.0 / 180000.0);
    EXPECT_NEAR(se, 0.00307, 1e-5);
    EXPECT_NEAR(0.923 - 1.959964 * se, 0.917, 5e-4);
    EXPECT_NEAR(0.923 + 1.959964 * se, 0.929, 5e-4);

    const Vector z = pareto_sample(2000, 27, 1.0);
    const auto fit = rank_half_fit(z);
    EXPECT_NEAR(fit.se_gi, fit.b_hat * std::sqrt(2.0 / 2000.0), 1e-15);
    EXPECT_NEAR(fit.ci.upper - fit.b_hat, 1.959964 * fit.se_gi, 1e-6);
}

TEST(RankHalf, ScaleInvarianceAndErrors)
{
    const Vector z = pareto_sample(3000, 28, 1.4);
    const auto a = rank_half_fit(z);
    const auto b = rank_half_fit(z * 0.001);
    EXPECT_NEAR(a.b_hat, b.b_hat, 1e-10);
    EXPECT_GT(std::abs(a.a_hat - b.a_hat), 1.0);
    EXPECT_THROW(rank_half_fit(Vector::Constant(100, 2.0)), DegenerateError);
    EXPECT_THROW(rank_half_fit(Vector::Constant(29, 2.0)), RangeError);
    Vector bad = z;
    bad[3] = 0.0;
    EXPECT_THROW(rank_half_fit(bad), DomainError);
}

TEST(PositivePart, FiltersAndFlips)
{
    const Vector x = (Vector(5) << -2.0, 0.0, 1.0, 3.0, -0.5).finished();
    EXPECT_EQ(positive_part(x), (Vector(2) << 1.0, 3.0).finished());
    EXPECT_EQ(positive_part(x, TailSide::Lower), (Vector(2) << 2.0, 0.5).finished());
}
