#include "lobtail/dynamics.hpp"
#include "lobtail/errors.hpp"
#include "lobtail/innovations.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace lobtail;

namespace {

ArmaGarchParams reference_params()
{
    ArmaGarchParams p;
    p.phi0 = 1e-4;
    p.phi1 = 0.2;
    p.theta1 = -0.1;
    p.alpha0 = 1e-6;
    p.alpha1 = 0.05;
    p.beta1 = 0.9;
    return p;
}

// Midpoint-rule moments of a density on [-lim, lim].
struct Moments {
    double mass;
    double mean;
    double var;
};

template <typename F>
Moments integrate(F&& logpdf, double lim, int steps)
{
    const double h = 2.0 * lim / steps;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double x = -lim + (i + 0.5) * h;
        const double f = std::exp(logpdf(x)) * h;
        m0 += f;
        m1 += x * f;
        m2 += x * x * f;
    }
    return {m0, m1, m2 - m1 * m1};
}

// NIG density written out with the standard library's Bessel function.
double nig_density_oracle(double x, double a, double b, double mu, double d)
{
    const double g = std::sqrt(a * a - b * b);
    const double q = std::sqrt(d * d + (x - mu) * (x - mu));
    return a * d / std::numbers::pi * std::exp(d * g + b * (x - mu)) * std::cyl_bessel_k(1.0, a * q) / q;
}

const InnovationLaw kLaws[] = {InnovationLaw::normal(), InnovationLaw::nig(2.0, 0.0), InnovationLaw::nig(1.5, -0.6),
                               InnovationLaw::student_t(5.0), InnovationLaw::ged(1.3), InnovationLaw::ged(2.5)};

}  // namespace

TEST(Innovations, NigDensityMatchesBesselOracle)
{
    const NigParams p{1.7, 0.4, -0.2, 0.8};
    for (double x : {-3.0, -0.5, 0.0, 0.3, 2.0, 6.0})
        EXPECT_NEAR(nig_logpdf(x, p), std::log(nig_density_oracle(x, 1.7, 0.4, -0.2, 0.8)), 1e-10);
    EXPECT_THROW(nig_logpdf(0.0, NigParams{1.0, 1.0, 0.0, 1.0}), DomainError);
}

TEST(Innovations, StandardizedNigMoments)
{
    for (auto [a, b] : {std::pair{2.0, 0.0}, {1.0, 0.5}, {5.0, -3.0}}) {
        const auto p = standardized_nig(a, b);
        EXPECT_NEAR(p.mean(), 0.0, 1e-12);
        EXPECT_NEAR(p.variance(), 1.0, 1e-12);
    }
}

TEST(Innovations, DensitiesAreStandardized)
{
    for (const auto& law : kLaws) {
        const auto m = integrate([&](double x) { return innovation_logpdf(law, x); }, 60.0, 240000);
        EXPECT_NEAR(m.mass, 1.0, 1e-6) << to_string(law.family);
        EXPECT_NEAR(m.mean, 0.0, 1e-6) << to_string(law.family);
        EXPECT_NEAR(m.var, 1.0, 2e-4) << to_string(law.family);
    }
}

TEST(Innovations, ClosedFormDensities)
{
    // Student-t(5) scaled to unit variance, written directly.
    const double nu = 5.0;
    const double s = std::sqrt((nu - 2.0) / nu);
    const double x = 0.7;
    const double t = x / s;
    const double tpdf = std::tgamma(3.0) / (std::sqrt(nu * std::numbers::pi) * std::tgamma(2.5)) *
                        std::pow(1.0 + t * t / nu, -3.0);
    EXPECT_NEAR(innovation_logpdf(InnovationLaw::student_t(nu), x), std::log(tpdf / s), 1e-12);
    // GED with nu = 2 is the standard normal; nu = 1 is Laplace with unit variance.
    EXPECT_NEAR(innovation_logpdf(InnovationLaw::ged(2.0), x), std::log(stats::normal_pdf(x)), 1e-12);
    const double b = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(innovation_logpdf(InnovationLaw::ged(1.0), x), std::log(std::exp(-std::abs(x) / b) / (2.0 * b)), 1e-12);
}

TEST(Innovations, ScoresMatchFiniteDifferences)
{
    for (const auto& law : kLaws) {
        const InnovationDensity dens(law);
        for (double x : {-2.3, -0.4, 0.9, 3.1}) {
            const auto s = dens.score(x);
            const double h = 1e-6;
            EXPECT_NEAR(s.logpdf, dens.logpdf(x), 1e-13);
            EXPECT_NEAR(s.d_x, (dens.logpdf(x + h) - dens.logpdf(x - h)) / (2 * h), 1e-6) << to_string(law.family);
            if (shape_count(law.family) >= 1) {
                auto l1 = law, l2 = law;
                l1.shape1 += h;
                l2.shape1 -= h;
                EXPECT_NEAR(s.d_shape1, (innovation_logpdf(l1, x) - innovation_logpdf(l2, x)) / (2 * h), 1e-6)
                    << to_string(law.family) << " x=" << x;
            }
            if (shape_count(law.family) == 2) {
                auto l1 = law, l2 = law;
                l1.shape2 += h;
                l2.shape2 -= h;
                EXPECT_NEAR(s.d_shape2, (innovation_logpdf(l1, x) - innovation_logpdf(l2, x)) / (2 * h), 1e-6);
            }
        }
    }
}

TEST(Innovations, SamplersHaveUnitVarianceAndMatchTheirCdf)
{
    for (const auto& law : kLaws) {
        CounterRng rng(5, 1);
        const int n = 200000;
        Vector x(n);
        for (int i = 0; i < n; ++i) x[i] = sample_innovation(law, rng);
        EXPECT_NEAR(x.mean(), 0.0, 4.0 / std::sqrt(n)) << to_string(law.family);
        EXPECT_NEAR(stats::central_moment(x, 2), 1.0, 0.03) << to_string(law.family);

        // CDF by cumulative midpoint integration of the density.
        const double lim = 40.0;
        const int steps = 160000;
        const double h = 2.0 * lim / steps;
        std::vector<double> cdf(steps + 1, 0.0);
        for (int i = 0; i < steps; ++i) cdf[i + 1] = cdf[i] + std::exp(innovation_logpdf(law, -lim + (i + 0.5) * h)) * h;
        auto F = [&](double v) {
            const double pos = std::clamp((v + lim) / h, 0.0, static_cast<double>(steps));
            const auto i = static_cast<std::size_t>(pos);
            return i >= static_cast<std::size_t>(steps) ? cdf.back() : cdf[i] + (pos - i) * (cdf[i + 1] - cdf[i]);
        };
        // 1.63/sqrt(n) is the 1% KS critical value.
        EXPECT_LT(stats::ks_distance(x, F), 1.63 / std::sqrt(n)) << to_string(law.family);
    }
}

TEST(Innovations, MomentEstimateInvertsClosedForm)
{
    const double a = 1.8, b = 0.5;
    const auto p = standardized_nig(a, b);
    const double dg = p.delta * p.gamma();
    const double skew = 3.0 * b / (a * std::sqrt(dg));
    const double exk = 3.0 * (1.0 + 4.0 * b * b / (a * a)) / dg;
    const auto m = nig_moment_estimate(skew, exk);
    EXPECT_NEAR(m.alpha, a, 1e-10);
    EXPECT_NEAR(m.beta, b, 1e-10);
}

TEST(FitNig, RecoversSymmetricAlpha)
{
    CounterRng rng(11, 0);
    const auto law = InnovationLaw::nig(2.0, 0.0);
    Vector e(50000);
    for (auto& v : e) v = sample_innovation(law, rng);
    const auto fit = fit_nig(e);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.law.shape1, 2.0, 0.2);
    EXPECT_NEAR(fit.law.shape2, 0.0, 0.1);
}

TEST(FitNig, NearNormalLimit)
{
    const Vector e = fixtures::normal_sample(50000, 12);
    const auto fit = fit_nig(e);
    EXPECT_GT(fit.law.shape1, 5.0);
    const auto p = standardized_nig(fit.law.shape1, fit.law.shape2);
    // The fitted NIG and N(0,1) should be close in KS distance.
    const double lim = 10.0;
    const int steps = 20000;
    const double h = 2 * lim / steps;
    double cdf = 0.0, worst = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double x = -lim + (i + 0.5) * h;
        cdf += std::exp(nig_logpdf(x, p)) * h;
        worst = std::max(worst, std::abs(cdf - stats::normal_cdf(x + 0.5 * h)));
    }
    EXPECT_LT(worst, 0.01);
}

TEST(FitInnovation, StudentTAndGed)
{
    CounterRng rng(13, 0);
    Vector t(50000), g(50000);
    for (auto& v : t) v = sample_innovation(InnovationLaw::student_t(6.0), rng);
    for (auto& v : g) v = sample_innovation(InnovationLaw::ged(1.2), rng);
    EXPECT_NEAR(fit_innovation(t, Innovation::StudentT).law.shape1, 6.0, 1.0);
    EXPECT_NEAR(fit_innovation(g, Innovation::Ged).law.shape1, 1.2, 0.05);
}

TEST(ArmaGarch, FilterMatchesDirectRecursion)
{
    const auto p = reference_params();
    const auto law = InnovationLaw::student_t(7.0);
    const Vector r = simulate_path(p, law, 500, 3);
    const auto f = arma_garch_filter(r, p, law);

    double a = 0.0;
    double h = (r.array() - r.mean()).square().mean();
    double ll = 0.0;
    for (int t = 1; t < 500; ++t) {
        const double a_new = r[t] - p.phi0 - p.phi1 * r[t - 1] - p.theta1 * a;
        h = p.alpha0 + p.alpha1 * a * a + p.beta1 * h;
        a = a_new;
        EXPECT_NEAR(f.sigma2[t], h, 1e-18);
        EXPECT_NEAR(f.residuals[t - 1], a / std::sqrt(h), 1e-9);
        ll += innovation_logpdf(law, a / std::sqrt(h)) - 0.5 * std::log(h);
    }
    EXPECT_NEAR(f.loglik, ll, 1e-8 * std::abs(ll));
    EXPECT_NEAR(arma_garch_loglik(r, p, law), ll, 1e-8 * std::abs(ll));
}

TEST(ArmaGarch, AnalyticGradientMatchesFiniteDifferences)
{
    const auto p = reference_params();
    for (const auto& law : {InnovationLaw::nig(1.5, -0.3), InnovationLaw::student_t(6.0), InnovationLaw::ged(1.4)}) {
        const Vector r = simulate_path(p, law, 3000, 4);
        Vector g;
        arma_garch_loglik(r, p, law, &g);
        const Vector x0 = p.as_vector();
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            const double base = k < 6 ? x0[k] : (k == 6 ? law.shape1 : law.shape2);
            const double h = 1e-5 * (base != 0.0 ? std::abs(base) : 1e-3);
            auto eval = [&](double delta) {
                ArmaGarchParams q = p;
                InnovationLaw l = law;
                Vector v = x0;
                if (k < 6) v[k] += delta;
                q = {v[0], v[1], v[2], v[3], v[4], v[5]};
                if (k == 6) l.shape1 += delta;
                if (k == 7) l.shape2 += delta;
                return arma_garch_loglik(r, q, l);
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            EXPECT_NEAR(g[k], fd, 1e-4 * std::max(1.0, std::abs(fd))) << to_string(law.family) << " k=" << k;
        }
    }
}

TEST(ArmaGarch, SelfRecoveryWithinThreeStandardErrors)
{
    const auto truth = reference_params();
    const Vector r = simulate_path(truth, InnovationLaw::nig(2.0, 0.0), 100000, 42);
    const auto fit = fit_arma_garch(r, Innovation::Nig);
    ASSERT_TRUE(fit.converged);
    const Vector est = fit.params.as_vector();
    const Vector tru = truth.as_vector();
    const auto names = parameter_names(Innovation::Nig);
    for (int k = 0; k < 6; ++k) {
        ASSERT_TRUE(std::isfinite(fit.std_errors[k])) << names[k];
        EXPECT_LT(std::abs(est[k] - tru[k]), 3.0 * fit.std_errors[k]) << names[k];
    }
    EXPECT_NEAR(fit.innovation.shape1, 2.0, 3.0 * fit.std_errors[6]);
    EXPECT_EQ(fit.n_params, 8);
    EXPECT_NEAR(fit.aic, 2.0 * 8 - 2.0 * fit.loglik, 1e-6);
    EXPECT_NEAR(fit.bic_per_obs, (8 * std::log(fit.n_obs) - 2.0 * fit.loglik) / fit.n_obs, 1e-12);
    EXPECT_FALSE(fit.boundary);

    // Residuals are standardized and carry no GARCH effect.
    EXPECT_NEAR(fit.residuals.mean(), 0.0, 0.02);
    EXPECT_NEAR(stats::central_moment(fit.residuals, 2), 1.0, 0.03);
    const auto lb = stats::ljung_box(fit.residuals.array().square().matrix(), 10);
    EXPECT_LT(lb.statistic, stats::chi2_quantile(0.95, 10));
}

TEST(ArmaGarch, RawReturnsShowGarchEffects)
{
    const Vector r = simulate_path(reference_params(), InnovationLaw::normal(), 20000, 43);
    const Vector centred = (r.array() - r.mean()).matrix();
    EXPECT_GT(stats::ljung_box(centred.array().square().matrix(), 10).statistic, stats::chi2_quantile(0.95, 10));
}

TEST(ArmaGarch, IidInputFlagsBoundary)
{
    const Vector r = fixtures::normal_sample(20000, 44, 0.0, 0.01);
    FitOptions opts;
    opts.require_convergence = false;
    const auto fit = fit_arma_garch(r, Innovation::Normal, opts);
    EXPECT_LT(fit.params.alpha1, 0.01);
    // AR and MA roots cancel when there is no serial dependence.
    EXPECT_NEAR(fit.params.phi1 + fit.params.theta1, 0.0, 0.03);
    EXPECT_TRUE(fit.boundary) << fit.params.as_vector().transpose();
}

TEST(ArmaGarch, NigLikelihoodAtLeastGaussian)
{
    const Vector r = simulate_path(reference_params(), InnovationLaw::normal(), 20000, 45);
    const auto gauss = fit_arma_garch(r, Innovation::Normal);
    const auto nig = fit_arma_garch(r, Innovation::Nig);
    EXPECT_GE(nig.loglik, gauss.loglik - 1e-6);
}

TEST(ArmaGarch, InputErrors)
{
    EXPECT_THROW(fit_arma_garch(Vector::Zero(999), Innovation::Nig), RangeError);
    Vector r = fixtures::normal_sample(2000, 1);
    r[10] = std::nan("");
    EXPECT_THROW(fit_arma_garch(r, Innovation::Nig), DataError);
    EXPECT_THROW(fit_arma_garch(Vector::Constant(2000, 1.0), Innovation::Normal), DegenerateError);
}

namespace {

ModelFit small_fit(Innovation family = Innovation::Nig, std::uint64_t seed = 46)
{
    const Vector r = simulate_path(reference_params(), InnovationLaw::nig(1.5, 0.2), 20000, seed);
    return fit_arma_garch(r, family);
}

}  // namespace

TEST(SimulateEnsemble, ZeroInnovationsFollowMeanRecursion)
{
    const auto fit = small_fit();
    SimulationOptions opts;
    opts.zero_innovations = true;
    const auto set = simulate_ensemble(fit, 50, 3, 1, opts);
    const auto& p = fit.params;
    const double r1 = p.phi0 + p.phi1 * fit.last_return + p.theta1 * fit.last_innovation;
    const double r2 = p.phi0 + p.phi1 * r1;
    for (int s = 0; s < 50; ++s) {
        EXPECT_DOUBLE_EQ(set.returns(s, 0), r1);
        EXPECT_DOUBLE_EQ(set.returns(s, 1), r2);
        EXPECT_DOUBLE_EQ(set.returns(s, 2), p.phi0 + p.phi1 * r2);
    }
}

TEST(SimulateEnsemble, OneStepMomentsMatchClosedForm)
{
    const auto fit = small_fit();
    const int n = 1000000;
    const auto set = simulate_ensemble(fit, n, 1, 7);
    const auto& p = fit.params;
    const double mean = p.phi0 + p.phi1 * fit.last_return + p.theta1 * fit.last_innovation;
    const double var = p.alpha0 + p.alpha1 * fit.last_innovation * fit.last_innovation + p.beta1 * fit.last_sigma2;
    const Vector x = set.returns.col(0);
    EXPECT_NEAR(x.mean(), mean, 3.0 * std::sqrt(var / n));
    // SE of the sample variance uses the innovation kurtosis.
    const double k4 = stats::central_moment(x, 4) / std::pow(stats::central_moment(x, 2), 2);
    EXPECT_NEAR(stats::central_moment(x, 2), var, 3.0 * var * std::sqrt((k4 - 1.0) / n));
}

TEST(SimulateEnsemble, ReproducibleAndSeedSensitive)
{
    const auto fit = small_fit();
    const auto a = simulate_ensemble(fit, 200, 5, 99);
    const auto b = simulate_ensemble(fit, 200, 5, 99);
    const auto c = simulate_ensemble(fit, 200, 5, 100);
    EXPECT_EQ(a.returns, b.returns);
    EXPECT_NE(a.returns, c.returns);
    // Scenario s depends only on (seed, s).
    const auto head = simulate_ensemble(fit, 20, 5, 99);
    EXPECT_EQ(head.returns, a.returns.topRows(20));
    EXPECT_THROW(simulate_ensemble(fit, 0, 1, 1), ConfigError);
    EXPECT_THROW(simulate_ensemble(ModelFit{}, 10, 1, 1), ConfigError);
}

TEST(JointScenarios, ComonotoneColumnsStayComonotone)
{
    auto fit = small_fit();
    std::vector<ModelFit> fits(3, fit);
    fits[1].params.alpha0 *= 4.0;
    const Matrix res = residual_matrix(fits);
    const Matrix d = joint_scenarios(fits, res, 5000, 3);
    ASSERT_EQ(d.rows(), 5000);
    ASSERT_EQ(d.cols(), 3);
    EXPECT_NEAR(stats::spearman(d.col(0), d.col(1)), 1.0, 1e-12);
    EXPECT_NEAR(stats::spearman(d.col(0), d.col(2)), 1.0, 1e-12);
}

TEST(JointScenarios, IndependentColumnsStayUncorrelated)
{
    std::vector<ModelFit> fits{small_fit(Innovation::Nig, 47), small_fit(Innovation::Nig, 48)};
    const Matrix res = residual_matrix(fits);
    const int n = 40000;
    const Matrix d = joint_scenarios(fits, res, n, 4);
    EXPECT_NEAR(stats::pearson(d.col(0), d.col(1)), 0.0, 3.0 / std::sqrt(n) + 3.0 / std::sqrt(res.rows()));
}

TEST(JointScenarios, MisalignedInputs)
{
    auto a = small_fit();
    auto b = a;
    b.residuals = b.residuals.head(b.residuals.size() - 1);
    EXPECT_THROW(residual_matrix({a, b}), AlignmentError);
    EXPECT_THROW(joint_scenarios({a, a}, Matrix::Zero(a.residuals.size(), 3), 10, 1), AlignmentError);
    EXPECT_THROW(joint_scenarios({a}, Matrix::Zero(5, 1), 10, 1), AlignmentError);
}

TEST(DynamicTailReport, GaussianOneStepCoversZero)
{
    auto fit = small_fit(Innovation::Normal);
    const auto set = simulate_ensemble(fit, 10000, 1, 8);
    const auto rep = dynamic_tail_report(set);
    EXPECT_TRUE(rep.gpd.ci_xi.contains(0.0) || rep.gpd.ci_xi.upper < 0.0) << rep.gpd.xi_hat;
    EXPECT_LT(rep.gpd.xi_hat, 0.1);
    EXPECT_EQ(rep.hill.ks.front(), 100);
    EXPECT_EQ(rep.hill.ks.back(), 499);
}

TEST(DynamicTailReport, HeavyTailedFitGivesPositiveShape)
{
    auto fit = small_fit(Innovation::StudentT);
    fit.innovation = InnovationLaw::student_t(3.0);
    const auto set = simulate_ensemble(fit, 20000, 1, 9);
    const auto rep = dynamic_tail_report(set);
    EXPECT_GT(rep.gpd.ci_xi.lower, 0.0);
}

TEST(DynamicTailReport, ConstantScenariosAreDegenerate)
{
    ScenarioSet s;
    s.returns = Matrix::Constant(100, 2, 0.01);
    EXPECT_THROW(dynamic_tail_report(s), DegenerateError);
}
