#pragma once

#include "lobtail/errors.hpp"
#include "lobtail/rng.hpp"
#include "lobtail/stats.hpp"

#include <string>
#include <string_view>

namespace lobtail {

enum class Innovation { Normal, Nig, StudentT, Ged };

std::string_view to_string(Innovation family) noexcept;
Innovation parse_innovation(std::string_view name);

/// Number of shape parameters: Normal 0, Student-t 1 (nu), GED 1 (nu), NIG 2 (alpha, beta).
int shape_count(Innovation family) noexcept;

/// Four-parameter NIG(alpha, beta, mu, delta).
struct NigParams {
    double alpha = 1.0;
    double beta = 0.0;
    double mu = 0.0;
    double delta = 1.0;

    double gamma() const;
    double mean() const;
    double variance() const;
};

double nig_logpdf(double x, const NigParams& p);

/// The mean-0, variance-1 member with tail/asymmetry (alpha, beta):
/// delta = gamma^3 / alpha^2, mu = -delta beta / gamma.
NigParams standardized_nig(double alpha, double beta);

/// Standardized innovation law. `shape` holds (alpha, beta) for NIG and nu
/// for Student-t and GED; it is ignored for Normal.
struct InnovationLaw {
    Innovation family = Innovation::Normal;
    double shape1 = 0.0;
    double shape2 = 0.0;

    static InnovationLaw normal() { return {Innovation::Normal, 0.0, 0.0}; }
    static InnovationLaw nig(double alpha, double beta) { return {Innovation::Nig, alpha, beta}; }
    static InnovationLaw student_t(double nu) { return {Innovation::StudentT, nu, 0.0}; }
    static InnovationLaw ged(double nu) { return {Innovation::Ged, nu, 0.0}; }

    /// Throws ConfigError when the shape is outside the family's domain.
    void validate() const;
};

/// Log density and its derivatives with respect to x and the native shape
/// parameters (shape1, shape2).
struct InnovationScore {
    double logpdf;
    double d_x;
    double d_shape1;
    double d_shape2;
};

/// A standardized density with its parameter-only constants precomputed, for
/// evaluation over long series.
class InnovationDensity {
public:
    explicit InnovationDensity(const InnovationLaw& law);

    double logpdf(double x) const;
    InnovationScore score(double x) const;
    const InnovationLaw& law() const noexcept { return law_; }

private:
    InnovationLaw law_;
    double c0_ = 0.0;  // family-specific log normalizing constant
    double c1_ = 0.0;
    double c2_ = 0.0;
    double c3_ = 0.0;
    NigParams nig_;
};

double innovation_logpdf(const InnovationLaw& law, double x);

/// One draw from the standardized law.
double sample_innovation(const InnovationLaw& law, CounterRng& rng);

/// Moment-matched standardized NIG: zeta = 3 / (exkurt - 4/3 skew^2),
/// rho = skew sqrt(zeta) / 3, alpha = sqrt(zeta) / (1 - rho^2).
NigParams nig_moment_estimate(double skewness, double excess_kurtosis);

/// Thrown when the innovation MLE fails; carries moment-based estimates.
class NigFitError : public FitError {
public:
    NigFitError(const std::string& what, const InnovationLaw& fallback) : FitError(what), fallback_(fallback) {}
    const InnovationLaw& fallback() const noexcept { return fallback_; }

private:
    InnovationLaw fallback_;
};

struct InnovationFit {
    InnovationLaw law;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Maximum likelihood fit of a standardized law to residuals (taken as
/// mean 0, variance 1; no location or scale is estimated).
InnovationFit fit_innovation(VectorRef residuals, Innovation family);

/// NIG case of fit_innovation; failures throw NigFitError with the moment fallback.
InnovationFit fit_nig(VectorRef residuals);

}  // namespace lobtail
