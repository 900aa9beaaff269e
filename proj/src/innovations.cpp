#include "lobtail/innovations.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/optimize.hpp"
#include "lobtail/tail_static.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lobtail {
namespace {

constexpr double kLn2 = std::numbers::ln2;

double digamma(double x) { return Eigen::numext::digamma(x); }

}  // namespace

std::string_view to_string(Innovation family) noexcept
{
    switch (family) {
    case Innovation::Normal: return "normal";
    case Innovation::Nig: return "nig";
    case Innovation::StudentT: return "student_t";
    case Innovation::Ged: return "ged";
    }
    return "unknown";
}

Innovation parse_innovation(std::string_view name)
{
    if (name == "normal" || name == "gaussian") return Innovation::Normal;
    if (name == "nig" || name == "NIG") return Innovation::Nig;
    if (name == "student_t" || name == "t" || name == "std" || name == "Std") return Innovation::StudentT;
    if (name == "ged" || name == "GED") return Innovation::Ged;
    throw ConfigError("unknown innovation family '" + std::string(name) + "'");
}

int shape_count(Innovation family) noexcept
{
    switch (family) {
    case Innovation::Normal: return 0;
    case Innovation::Nig: return 2;
    case Innovation::StudentT:
    case Innovation::Ged: return 1;
    }
    return 0;
}

double NigParams::gamma() const { return std::sqrt(alpha * alpha - beta * beta); }
double NigParams::mean() const { return mu + delta * beta / gamma(); }
double NigParams::variance() const
{
    const double g = gamma();
    return delta * alpha * alpha / (g * g * g);
}

double nig_logpdf(double x, const NigParams& p)
{
    if (!(p.alpha > 0.0 && std::abs(p.beta) < p.alpha && p.delta > 0.0))
        throw DomainError("NIG parameters need alpha > |beta| and delta > 0");
    const double u = x - p.mu;
    const double q = std::hypot(p.delta, u);
    const double z = p.alpha * q;
    // ln K1(z) = ln(e^z K1(z)) - z
    return std::log(p.alpha) + std::log(p.delta) - std::log(std::numbers::pi) +
           std::log(Eigen::numext::bessel_k1e(z)) - z - std::log(q) + p.delta * p.gamma() + p.beta * u;
}

NigParams standardized_nig(double alpha, double beta)
{
    if (!(alpha > 0.0 && std::abs(beta) < alpha)) throw DomainError("standardized NIG needs alpha > |beta|");
    NigParams p;
    p.alpha = alpha;
    p.beta = beta;
    const double g = p.gamma();
    p.delta = g * g * g / (alpha * alpha);
    p.mu = -p.delta * beta / g;
    return p;
}

void InnovationLaw::validate() const
{
    switch (family) {
    case Innovation::Normal: return;
    case Innovation::Nig:
        if (!(shape1 > 0.0 && std::abs(shape2) < shape1))
            throw ConfigError("NIG innovation needs alpha > |beta|");
        return;
    case Innovation::StudentT:
        if (!(shape1 > 2.0)) throw ConfigError("standardized Student-t needs nu > 2");
        return;
    case Innovation::Ged:
        if (!(shape1 > 0.0)) throw ConfigError("GED needs nu > 0");
        return;
    }
}

InnovationDensity::InnovationDensity(const InnovationLaw& law) : law_(law)
{
    law.validate();
    const double nu = law.shape1;
    switch (law.family) {
    case Innovation::Normal:
        c0_ = -0.5 * std::log(2.0 * std::numbers::pi);
        break;
    case Innovation::StudentT:
        c0_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * (nu - 2.0));
        c1_ = nu - 2.0;
        c2_ = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / (nu - 2.0);
        break;
    case Innovation::Ged: {
        const double log_lambda = 0.5 * (-2.0 / nu * kLn2 + std::lgamma(1.0 / nu) - std::lgamma(3.0 / nu));
        c1_ = std::exp(log_lambda);
        c0_ = std::log(nu) - log_lambda - (1.0 + 1.0 / nu) * kLn2 - std::lgamma(1.0 / nu);
        // d ln(lambda) / d nu
        c3_ = 0.5 * (2.0 * kLn2 - digamma(1.0 / nu) + 3.0 * digamma(3.0 / nu)) / (nu * nu);
        c2_ = 1.0 / nu - c3_ + (kLn2 + digamma(1.0 / nu)) / (nu * nu);
        break;
    }
    case Innovation::Nig:
        nig_ = standardized_nig(law.shape1, law.shape2);
        c0_ = std::log(nig_.alpha) + std::log(nig_.delta) - std::log(std::numbers::pi) + nig_.delta * nig_.gamma();
        break;
    }
}

double InnovationDensity::logpdf(double x) const
{
    switch (law_.family) {
    case Innovation::Normal: return c0_ - 0.5 * x * x;
    case Innovation::StudentT: return c0_ - 0.5 * (law_.shape1 + 1.0) * std::log1p(x * x / c1_);
    case Innovation::Ged: return c0_ - 0.5 * std::pow(std::abs(x) / c1_, law_.shape1);
    case Innovation::Nig: {
        const double u = x - nig_.mu;
        const double q = std::hypot(nig_.delta, u);
        const double z = nig_.alpha * q;
        return c0_ + std::log(Eigen::numext::bessel_k1e(z)) - z - std::log(q) + nig_.beta * u;
    }
    }
    return 0.0;
}

InnovationScore InnovationDensity::score(double x) const
{
    const double nu = law_.shape1;
    switch (law_.family) {
    case Innovation::Normal:
        return {c0_ - 0.5 * x * x, -x, 0.0, 0.0};
    case Innovation::StudentT: {
        const double x2 = x * x;
        const double lp = std::log1p(x2 / c1_);
        return {c0_ - 0.5 * (nu + 1.0) * lp, -(nu + 1.0) * x / (c1_ + x2),
                c2_ - 0.5 * lp + 0.5 * (nu + 1.0) * x2 / (c1_ * (c1_ + x2)), 0.0};
    }
    case Innovation::Ged: {
        const double w = std::abs(x) / c1_;
        if (w == 0.0) return {c0_, 0.0, c2_, 0.0};
        const double wn = std::pow(w, nu);
        const double dx = -0.5 * nu * wn / x;  // -nu/2 w^(nu-1) sign(x) / lambda
        return {c0_ - 0.5 * wn, dx, c2_ - 0.5 * wn * (std::log(w) - nu * c3_), 0.0};
    }
    case Innovation::Nig: {
        const double a = nig_.alpha;
        const double b = nig_.beta;
        const double d = nig_.delta;
        const double g = nig_.gamma();
        const double u = x - nig_.mu;
        const double q = std::hypot(d, u);
        const double z = a * q;
        const double k1e = Eigen::numext::bessel_k1e(z);
        const double k0e = Eigen::numext::bessel_k0e(z);
        const double dlk = -k0e / k1e - 1.0 / z;  // d ln K1 / dz
        const double logf = c0_ + std::log(k1e) - z - std::log(q) + b * u;

        // Partials with delta and mu held fixed, then the chain through the
        // standardization constraints.
        const double l_u = dlk * a * u / q - u / (q * q) + b;
        const double l_a = 1.0 / a + dlk * q + d * a / g;
        const double l_b = u - d * b / g;
        const double l_d = 1.0 / d + dlk * a * d / q - d / (q * q) + g;
        const double l_mu = -l_u;
        const double a2 = a * a;
        const double dd_da = 3.0 * g / a - 2.0 * g * g * g / (a2 * a);
        const double dd_db = -3.0 * g * b / a2;
        const double dmu_da = -2.0 * b * b * b / (a2 * a);
        const double dmu_db = -1.0 + 3.0 * b * b / a2;
        return {logf, l_u, l_a + l_d * dd_da + l_mu * dmu_da, l_b + l_d * dd_db + l_mu * dmu_db};
    }
    }
    return {0.0, 0.0, 0.0, 0.0};
}

double innovation_logpdf(const InnovationLaw& law, double x) { return InnovationDensity(law).logpdf(x); }

double sample_innovation(const InnovationLaw& law, CounterRng& rng)
{
    switch (law.family) {
    case Innovation::Normal:
        return std::normal_distribution<double>()(rng);
    case Innovation::StudentT: {
        const double nu = law.shape1;
        return std::student_t_distribution<double>(nu)(rng) * std::sqrt((nu - 2.0) / nu);
    }
    case Innovation::Ged: {
        const double nu = law.shape1;
        const double lambda =
            std::exp(0.5 * (-2.0 / nu * kLn2 + std::lgamma(1.0 / nu) - std::lgamma(3.0 / nu)));
        const double g = std::gamma_distribution<double>(1.0 / nu, 1.0)(rng);
        const double mag = lambda * std::pow(2.0 * g, 1.0 / nu);
        return rng.uniform() < 0.5 ? -mag : mag;
    }
    case Innovation::Nig: {
        const NigParams p = standardized_nig(law.shape1, law.shape2);
        const double g = p.gamma();
        const double v = sample_inverse_gaussian(rng, p.delta / g, p.delta * p.delta);
        return p.mu + p.beta * v + std::sqrt(v) * std::normal_distribution<double>()(rng);
    }
    }
    return 0.0;
}

NigParams nig_moment_estimate(double skewness, double excess_kurtosis)
{
    double denom = excess_kurtosis - 4.0 / 3.0 * skewness * skewness;
    // Moments outside the NIG region: fall back to a near-normal member.
    if (!(denom > 0.06)) denom = 0.06;
    const double zeta = 3.0 / denom;
    const double rho = std::clamp(skewness * std::sqrt(zeta) / 3.0, -0.95, 0.95);
    const double alpha = std::sqrt(zeta) / (1.0 - rho * rho);
    return standardized_nig(alpha, rho * alpha);
}

namespace {

InnovationLaw law_from(Innovation family, const Vector& z)
{
    switch (family) {
    case Innovation::Nig: {
        const double a = std::exp(z[0]);
        return InnovationLaw::nig(a, a * std::tanh(z[1]));
    }
    case Innovation::StudentT: return InnovationLaw::student_t(2.0 + std::exp(z[0]));
    case Innovation::Ged: return InnovationLaw::ged(std::exp(z[0]));
    case Innovation::Normal: break;
    }
    return InnovationLaw::normal();
}

}  // namespace

InnovationFit fit_innovation(VectorRef residuals, Innovation family)
{
    const auto n = residuals.size();
    if (n < 10) throw RangeError("innovation fit needs at least 10 residuals");
    const Vector e = residuals;
    if (family == Innovation::Normal) {
        const InnovationDensity dens(InnovationLaw::normal());
        double ll = 0.0;
        for (double v : e) ll += dens.logpdf(v);
        return {InnovationLaw::normal(), ll, true, 0};
    }

    const double skew = stats::skewness(e);
    const double exk = excess_kurtosis(e);
    Vector z0(shape_count(family));
    switch (family) {
    case Innovation::Nig: {
        const auto m = nig_moment_estimate(skew, exk);
        const double a = std::clamp(m.alpha, 0.3, 50.0);
        z0 << std::log(a), std::atanh(std::clamp(m.beta / m.alpha, -0.9, 0.9));
        break;
    }
    case Innovation::StudentT:
        z0 << std::log(std::clamp(exk > 0.0 ? 2.0 + 6.0 / exk : 50.0, 0.5, 100.0));
        break;
    case Innovation::Ged:
        z0 << std::log(exk > 1.0 ? 1.0 : 1.6);
        break;
    case Innovation::Normal: break;
    }

    const double scale = 1.0 / static_cast<double>(n);
    auto nll = [&](const Vector& z) {
        const auto law = law_from(family, z);
        try {
            const InnovationDensity dens(law);
            double s = 0.0;
            for (double v : e) s += dens.logpdf(v);
            return -s * scale;
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    auto grad = [&](const Vector& z) {
        const auto law = law_from(family, z);
        const InnovationDensity dens(law);
        double g1 = 0.0;
        double g2 = 0.0;
        for (double v : e) {
            const auto s = dens.score(v);
            g1 += s.d_shape1;
            g2 += s.d_shape2;
        }
        Vector out(z.size());
        switch (family) {
        case Innovation::Nig: {
            const double a = law.shape1;
            const double t = std::tanh(z[1]);
            out << -(g1 * a + g2 * law.shape2) * scale, -g2 * a * (1.0 - t * t) * scale;
            break;
        }
        case Innovation::StudentT: out << -g1 * (law.shape1 - 2.0) * scale; break;
        case Innovation::Ged: out << -g1 * law.shape1 * scale; break;
        case Innovation::Normal: break;
        }
        return out;
    };

    optim::BfgsOptions opts;
    opts.gradient_tol = 1e-8;
    const auto res = optim::bfgs(nll, grad, z0, opts);
    const auto law = law_from(family, res.x);
    if (!res.converged || !std::isfinite(res.fx)) {
        const std::string msg = "innovation MLE (" + std::string(to_string(family)) +
                                ") did not converge: " + res.message + ", nll/n = " + csv::format(res.fx);
        if (family == Innovation::Nig) {
            const auto m = nig_moment_estimate(skew, exk);
            throw NigFitError(msg, InnovationLaw::nig(m.alpha, m.beta));
        }
        throw FitError(msg);
    }
    return {law, -res.fx * static_cast<double>(n), true, res.iterations};
}

InnovationFit fit_nig(VectorRef residuals) { return fit_innovation(residuals, Innovation::Nig); }

}  // namespace lobtail
