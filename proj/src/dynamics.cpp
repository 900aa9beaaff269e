#include "lobtail/dynamics.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/errors.hpp"
#include "lobtail/optimize.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>

namespace lobtail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPersistenceCap = 1.0 - 1e-6;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Maps an unconstrained vector onto (params, law):
//   phi0 = sd z0, phi1 = tanh z1, theta1 = tanh z2, alpha0 = var e^z3,
//   alpha1 + beta1 = cap L(z4), alpha1 = (alpha1 + beta1) L(z5),
//   then the family's shape parameters.
struct Transform {
    double sd;
    double var;
    Innovation family;

    Eigen::Index dim() const { return 6 + shape_count(family); }

    void to_native(const Vector& z, ArmaGarchParams& p, InnovationLaw& law) const
    {
        p.phi0 = sd * z[0];
        p.phi1 = std::tanh(z[1]);
        p.theta1 = std::tanh(z[2]);
        p.alpha0 = var * std::exp(z[3]);
        const double pers = kPersistenceCap * logistic(z[4]);
        p.alpha1 = pers * logistic(z[5]);
        p.beta1 = pers - p.alpha1;
        switch (family) {
        case Innovation::Normal: law = InnovationLaw::normal(); break;
        case Innovation::Nig: {
            const double a = std::exp(z[6]);
            law = InnovationLaw::nig(a, a * std::tanh(z[7]));
            break;
        }
        case Innovation::StudentT: law = InnovationLaw::student_t(2.0 + std::exp(z[6])); break;
        case Innovation::Ged: law = InnovationLaw::ged(std::exp(z[6])); break;
        }
    }

    Vector to_z(const ArmaGarchParams& p, const InnovationLaw& law) const
    {
        auto clip = [](double v, double lim) { return std::clamp(v, -lim, lim); };
        auto unit = [](double v) { return std::clamp(v, 1e-9, 1.0 - 1e-9); };
        Vector z(dim());
        z[0] = p.phi0 / sd;
        z[1] = std::atanh(clip(p.phi1, 0.999));
        z[2] = std::atanh(clip(p.theta1, 0.999));
        z[3] = std::log(p.alpha0 / var);
        const double pers = p.alpha1 + p.beta1;
        z[4] = logit(unit(pers / kPersistenceCap));
        z[5] = logit(unit(pers > 0.0 ? p.alpha1 / pers : 0.5));
        switch (family) {
        case Innovation::Normal: break;
        case Innovation::Nig:
            z[6] = std::log(law.shape1);
            z[7] = std::atanh(clip(law.shape2 / law.shape1, 0.99));
            break;
        case Innovation::StudentT: z[6] = std::log(law.shape1 - 2.0); break;
        case Innovation::Ged: z[6] = std::log(law.shape1); break;
        }
        return z;
    }

    /// d(native) / dz, native ordered as parameter_names().
    Matrix jacobian(const Vector& z) const
    {
        ArmaGarchParams p;
        InnovationLaw law;
        to_native(z, p, law);
        Matrix j = Matrix::Zero(dim(), dim());
        j(0, 0) = sd;
        j(1, 1) = 1.0 - p.phi1 * p.phi1;
        j(2, 2) = 1.0 - p.theta1 * p.theta1;
        j(3, 3) = p.alpha0;
        const double s4 = logistic(z[4]);
        const double s5 = logistic(z[5]);
        const double pers = kPersistenceCap * s4;
        const double dpers = kPersistenceCap * s4 * (1.0 - s4);
        j(4, 4) = dpers * s5;
        j(4, 5) = pers * s5 * (1.0 - s5);
        j(5, 4) = dpers * (1.0 - s5);
        j(5, 5) = -pers * s5 * (1.0 - s5);
        switch (family) {
        case Innovation::Normal: break;
        case Innovation::Nig: {
            const double t = std::tanh(z[7]);
            j(6, 6) = law.shape1;
            j(7, 6) = law.shape2;
            j(7, 7) = law.shape1 * (1.0 - t * t);
            break;
        }
        case Innovation::StudentT: j(6, 6) = law.shape1 - 2.0; break;
        case Innovation::Ged: j(6, 6) = law.shape1; break;
        }
        return j;
    }
};

// Log-likelihood over t = 1..n-1 and, when `grad` is given, its gradient in
// native parameters. The recursion derivatives are carried alongside.
double loglik_native(const Vector& r, const ArmaGarchParams& p, const InnovationDensity& dens, double h0,
                     Vector* grad)
{
    const auto n = r.size();
    double a_prev = 0.0;
    double h_prev = h0;
    double ll = 0.0;
    if (!grad) {
        for (Eigen::Index t = 1; t < n; ++t) {
            const double a = r[t] - p.phi0 - p.phi1 * r[t - 1] - p.theta1 * a_prev;
            const double h = p.alpha0 + p.alpha1 * a_prev * a_prev + p.beta1 * h_prev;
            if (!(h > 0.0) || !std::isfinite(h)) return -kInf;
            ll += dens.logpdf(a / std::sqrt(h)) - 0.5 * std::log(h);
            a_prev = a;
            h_prev = h;
        }
        return ll;
    }

    std::array<double, 3> da_prev{};
    std::array<double, 6> dh_prev{};
    std::array<double, 6> g{};
    double gs1 = 0.0;
    double gs2 = 0.0;
    for (Eigen::Index t = 1; t < n; ++t) {
        const double a = r[t] - p.phi0 - p.phi1 * r[t - 1] - p.theta1 * a_prev;
        const std::array<double, 3> da{-1.0 - p.theta1 * da_prev[0], -r[t - 1] - p.theta1 * da_prev[1],
                                       -a_prev - p.theta1 * da_prev[2]};
        const double h = p.alpha0 + p.alpha1 * a_prev * a_prev + p.beta1 * h_prev;
        if (!(h > 0.0) || !std::isfinite(h)) return -kInf;
        std::array<double, 6> dh;
        for (int k = 0; k < 3; ++k) dh[k] = 2.0 * p.alpha1 * a_prev * da_prev[k] + p.beta1 * dh_prev[k];
        dh[3] = 1.0 + p.beta1 * dh_prev[3];
        dh[4] = a_prev * a_prev + p.beta1 * dh_prev[4];
        dh[5] = h_prev + p.beta1 * dh_prev[5];

        const double sq = std::sqrt(h);
        const double e = a / sq;
        const auto s = dens.score(e);
        ll += s.logpdf - 0.5 * std::log(h);
        const double inv_h = 1.0 / h;
        for (int k = 0; k < 6; ++k) {
            const double dak = k < 3 ? da[k] : 0.0;
            g[k] += s.d_x * (dak / sq - 0.5 * e * dh[k] * inv_h) - 0.5 * dh[k] * inv_h;
        }
        gs1 += s.d_shape1;
        gs2 += s.d_shape2;
        a_prev = a;
        h_prev = h;
        for (int k = 0; k < 3; ++k) da_prev[k] = da[k];
        dh_prev = dh;
    }
    grad->resize(6 + shape_count(dens.law().family));
    for (int k = 0; k < 6; ++k) (*grad)[k] = g[k];
    if (grad->size() > 6) (*grad)[6] = gs1;
    if (grad->size() > 7) (*grad)[7] = gs2;
    return ll;
}

struct Objective {
    const Vector& r;
    Transform tr;
    double h0;
    double scale;  // 1 / n_obs

    double value(const Vector& z) const
    {
        ArmaGarchParams p;
        InnovationLaw law;
        tr.to_native(z, p, law);
        try {
            const InnovationDensity dens(law);
            return -loglik_native(r, p, dens, h0, nullptr) * scale;
        } catch (const Error&) {
            return kInf;
        }
    }

    Vector gradient(const Vector& z) const
    {
        ArmaGarchParams p;
        InnovationLaw law;
        tr.to_native(z, p, law);
        Vector g;
        try {
            const InnovationDensity dens(law);
            if (!std::isfinite(loglik_native(r, p, dens, h0, &g)))
                return Vector::Constant(z.size(), std::nan(""));
        } catch (const Error&) {
            return Vector::Constant(z.size(), std::nan(""));
        }
        return -(tr.jacobian(z).transpose() * g) * scale;
    }

    optim::Result minimize(const Vector& z0, const FitOptions& opts) const
    {
        optim::BfgsOptions bo;
        bo.max_iterations = opts.max_iterations;
        bo.gradient_tol = opts.gradient_tol;
        return optim::bfgs([this](const Vector& z) { return value(z); },
                           [this](const Vector& z) { return gradient(z); }, z0, bo);
    }
};

}  // namespace

Vector ArmaGarchParams::as_vector() const
{
    return (Vector(6) << phi0, phi1, theta1, alpha0, alpha1, beta1).finished();
}

std::vector<std::string> parameter_names(Innovation family)
{
    std::vector<std::string> names{"phi0", "phi1", "theta1", "alpha0", "alpha1", "beta1"};
    switch (family) {
    case Innovation::Normal: break;
    case Innovation::Nig:
        names.emplace_back("nig_alpha");
        names.emplace_back("nig_beta");
        break;
    case Innovation::StudentT:
    case Innovation::Ged: names.emplace_back("nu"); break;
    }
    return names;
}

double arma_garch_loglik(VectorRef returns, const ArmaGarchParams& p, const InnovationLaw& law, Vector* grad)
{
    if (returns.size() < 2) throw RangeError("likelihood needs at least 2 returns");
    const Vector r = returns;
    return loglik_native(r, p, InnovationDensity(law), stats::central_moment(r, 2), grad);
}

FilterResult arma_garch_filter(VectorRef returns, const ArmaGarchParams& p, const InnovationLaw& law)
{
    const auto n = returns.size();
    if (n < 2) throw RangeError("filter needs at least 2 returns");
    const InnovationDensity dens(law);
    FilterResult out;
    out.a = Vector::Zero(n);
    out.sigma2.resize(n);
    out.sigma2[0] = stats::central_moment(returns, 2);
    out.residuals.resize(n - 1);
    for (Eigen::Index t = 1; t < n; ++t) {
        out.a[t] = returns[t] - p.phi0 - p.phi1 * returns[t - 1] - p.theta1 * out.a[t - 1];
        out.sigma2[t] = p.alpha0 + p.alpha1 * out.a[t - 1] * out.a[t - 1] + p.beta1 * out.sigma2[t - 1];
        out.residuals[t - 1] = out.a[t] / std::sqrt(out.sigma2[t]);
        out.loglik += dens.logpdf(out.residuals[t - 1]) - 0.5 * std::log(out.sigma2[t]);
    }
    return out;
}

ModelFit fit_arma_garch(VectorRef returns, Innovation family, const FitOptions& opts)
{
    const auto n = returns.size();
    if (n < 1000) throw RangeError("ARMA-GARCH fit needs at least 1000 returns, got " + std::to_string(n));
    if (!returns.allFinite()) throw DataError("ARMA-GARCH fit: non-finite return");
    const Vector r = returns;
    const double var = stats::central_moment(r, 2);
    if (!(var > 0.0)) throw DegenerateError("ARMA-GARCH fit: zero-variance returns");
    const double sd = std::sqrt(var);
    const double scale = 1.0 / static_cast<double>(n - 1);

    // Stage 1: Gaussian QMLE.
    ArmaGarchParams start;
    start.phi0 = r.mean();
    start.phi1 = 0.0;
    start.theta1 = 0.0;
    start.alpha0 = 0.1 * var;
    start.alpha1 = 0.1;
    start.beta1 = 0.8;
    const Objective gauss{r, {sd, var, Innovation::Normal}, var, scale};
    auto qmle = gauss.minimize(gauss.tr.to_z(start, InnovationLaw::normal()), opts);
    ArmaGarchParams p;
    InnovationLaw law;
    gauss.tr.to_native(qmle.x, p, law);

    // Stage 2: innovation law on the QMLE residuals.
    if (family != Innovation::Normal) {
        const auto filt = arma_garch_filter(r, p, InnovationLaw::normal());
        try {
            law = fit_innovation(filt.residuals, family).law;
        } catch (const NigFitError& e) {
            law = e.fallback();
        } catch (const FitError&) {
            law = family == Innovation::StudentT ? InnovationLaw::student_t(5.0) : InnovationLaw::ged(1.2);
        }
    }

    // Stage 3: joint MLE.
    const Objective joint{r, {sd, var, family}, var, scale};
    optim::Result res = family == Innovation::Normal ? qmle : joint.minimize(joint.tr.to_z(p, law), opts);
    joint.tr.to_native(res.x, p, law);

    ModelFit fit;
    fit.params = p;
    fit.innovation = law;
    fit.converged = res.converged && std::isfinite(res.fx);
    fit.iterations = res.iterations;
    fit.trace = res.trace;
    fit.message = res.message;
    if (!fit.converged && opts.require_convergence) {
        std::string tail;
        const auto m = res.trace.size();
        for (std::size_t i = m > 5 ? m - 5 : 0; i < m; ++i) tail += " " + csv::format(res.trace[i]);
        throw FitError("ARMA-GARCH-" + std::string(to_string(family)) + " MLE did not converge after " +
                       std::to_string(res.iterations) + " iterations (" + res.message + "); last nll/n:" + tail);
    }

    const auto filt = arma_garch_filter(r, p, law);
    fit.loglik = filt.loglik;
    fit.residuals = filt.residuals;
    fit.sigma2 = filt.sigma2;
    fit.n_obs = static_cast<int>(n - 1);
    fit.n_params = static_cast<int>(joint.tr.dim());
    const double k = fit.n_params;
    fit.aic = 2.0 * k - 2.0 * fit.loglik;
    fit.bic = k * std::log(static_cast<double>(fit.n_obs)) - 2.0 * fit.loglik;
    fit.aic_per_obs = fit.aic / fit.n_obs;
    fit.bic_per_obs = fit.bic / fit.n_obs;
    fit.last_return = r[n - 1];
    fit.last_innovation = filt.a[n - 1];
    fit.last_sigma2 = filt.sigma2[n - 1];
    // Also flag the two unidentified cases: no ARCH effect (beta1 is then
    // arbitrary) and cancelling AR/MA roots.
    const bool cancelling = std::abs(p.phi1) > 0.1 && std::abs(p.phi1 + p.theta1) < 0.05;
    fit.boundary = p.alpha1 < 1e-2 || p.beta1 < 1e-4 || p.persistence() > 1.0 - 1e-4 ||
                   std::abs(p.phi1) > 0.999 || std::abs(p.theta1) > 0.999 || cancelling;

    const auto d = joint.tr.dim();
    fit.std_errors = Vector::Constant(d, std::nan(""));
    if (opts.std_errors) {
        // Observed information in z by differencing the analytic gradient,
        // mapped to native parameters with the delta method.
        Matrix hz(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            const double h = 1e-4 * std::max(1.0, std::abs(res.x[i]));
            Vector zp = res.x;
            Vector zm = res.x;
            zp[i] += h;
            zm[i] -= h;
            hz.col(i) = (joint.gradient(zp) - joint.gradient(zm)) / (2.0 * h);
        }
        hz = 0.5 * (hz + hz.transpose()).eval() / scale;
        const Eigen::LDLT<Matrix> ldlt(hz);
        if (hz.allFinite() && ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            const Matrix cov_z = ldlt.solve(Matrix::Identity(d, d));
            const Matrix jac = joint.tr.jacobian(res.x);
            const Vector var_native = (jac * cov_z * jac.transpose()).diagonal();
            for (Eigen::Index i = 0; i < d; ++i)
                if (var_native[i] > 0.0) fit.std_errors[i] = std::sqrt(var_native[i]);
        }
    }
    return fit;
}

Vector standardized_residuals(const ModelFit& fit) { return fit.residuals; }

Vector simulate_path(const ArmaGarchParams& p, const InnovationLaw& law, std::size_t n, std::uint64_t seed,
                     std::size_t burn_in)
{
    law.validate();
    if (!(p.persistence() < 1.0)) throw ConfigError("simulation needs alpha1 + beta1 < 1");
    CounterRng rng(seed, 0);
    double r = p.phi0 / (1.0 - p.phi1);
    double a = 0.0;
    double h = p.unconditional_variance();
    Vector out(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n + burn_in; ++t) {
        h = p.alpha0 + p.alpha1 * a * a + p.beta1 * h;
        const double a_new = std::sqrt(h) * sample_innovation(law, rng);
        r = p.phi0 + p.phi1 * r + p.theta1 * a + a_new;
        a = a_new;
        if (t >= burn_in) out[static_cast<Eigen::Index>(t - burn_in)] = r;
    }
    return out;
}

ScenarioSet simulate_ensemble(const ModelFit& fit, int n_scenarios, int horizon, std::uint64_t seed,
                              const SimulationOptions& opts)
{
    if (n_scenarios < 1 || horizon < 1) throw ConfigError("simulation needs n_scenarios >= 1 and horizon >= 1");
    if (fit.residuals.size() == 0 || !(fit.last_sigma2 > 0.0)) throw ConfigError("simulation needs a fitted model");
    fit.innovation.validate();
    const auto& p = fit.params;
    ScenarioSet set;
    set.horizon = horizon;
    set.n_scenarios = n_scenarios;
    set.seed = seed;
    set.returns.resize(n_scenarios, horizon);
    for (int s = 0; s < n_scenarios; ++s) {
        CounterRng rng(seed, static_cast<std::uint64_t>(s));
        double r = fit.last_return;
        double a = fit.last_innovation;
        double h = fit.last_sigma2;
        for (int k = 0; k < horizon; ++k) {
            h = p.alpha0 + p.alpha1 * a * a + p.beta1 * h;
            const double eps = opts.zero_innovations ? 0.0 : sample_innovation(fit.innovation, rng);
            const double a_new = std::sqrt(h) * eps;
            r = p.phi0 + p.phi1 * r + p.theta1 * a + a_new;
            a = a_new;
            set.returns(s, k) = r;
        }
    }
    return set;
}

Matrix residual_matrix(const std::vector<ModelFit>& fits)
{
    if (fits.empty()) throw ConfigError("residual matrix needs at least one fit");
    const auto t = fits.front().residuals.size();
    Matrix m(t, static_cast<Eigen::Index>(fits.size()));
    for (std::size_t j = 0; j < fits.size(); ++j) {
        if (fits[j].residuals.size() != t) throw AlignmentError("fits do not share an event grid");
        m.col(static_cast<Eigen::Index>(j)) = fits[j].residuals;
    }
    return m;
}

Matrix joint_scenarios(const std::vector<ModelFit>& fits, MatrixRef residuals, int n_scenarios, std::uint64_t seed)
{
    if (n_scenarios < 1) throw ConfigError("joint scenarios need n_scenarios >= 1");
    const auto m = static_cast<Eigen::Index>(fits.size());
    if (residuals.cols() != m) throw AlignmentError("residual matrix has " + std::to_string(residuals.cols()) +
                                                    " columns for " + std::to_string(m) + " fits");
    if (residuals.rows() < 1) throw AlignmentError("residual matrix has no rows");
    for (const auto& f : fits)
        if (f.residuals.size() != residuals.rows()) throw AlignmentError("residual rows are not time-aligned with the fits");

    // One-step conditional mean and scale per column.
    Vector mean(m);
    Vector scale(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& f = fits[static_cast<std::size_t>(j)];
        const auto& p = f.params;
        mean[j] = p.phi0 + p.phi1 * f.last_return + p.theta1 * f.last_innovation;
        scale[j] = std::sqrt(p.alpha0 + p.alpha1 * f.last_innovation * f.last_innovation + p.beta1 * f.last_sigma2);
    }
    Matrix out(n_scenarios, m);
    const auto rows = static_cast<std::uint64_t>(residuals.rows());
    for (int s = 0; s < n_scenarios; ++s) {
        CounterRng rng(seed, static_cast<std::uint64_t>(s));
        const auto row = static_cast<Eigen::Index>(std::uniform_int_distribution<std::uint64_t>(0, rows - 1)(rng));
        out.row(s) = (mean + scale.cwiseProduct(residuals.row(row).transpose())).transpose();
    }
    return out;
}

TailReport dynamic_tail_report(VectorRef pooled, double tail_fraction)
{
    const auto n = pooled.size();
    if (n == 0) throw RangeError("empty scenario set");
    if (pooled.maxCoeff() == pooled.minCoeff()) throw DegenerateError("all scenario returns are identical");
    TailReport rep;
    rep.gpd = gpd_fit(pooled, tail_fraction);
    const Vector tail = upper_tail(pooled, 0.05);
    const int lo = std::max(1, static_cast<int>(std::ceil(0.01 * static_cast<double>(n))));
    const int hi = static_cast<int>(tail.size()) - 1;
    rep.hill = hill_curve(tail, KRange{std::min(lo, hi), hi});
    return rep;
}

TailReport dynamic_tail_report(const ScenarioSet& scenarios, double tail_fraction)
{
    const Matrix& m = scenarios.returns;
    return dynamic_tail_report(Eigen::Map<const Vector>(m.data(), m.size()), tail_fraction);
}

}  // namespace lobtail
