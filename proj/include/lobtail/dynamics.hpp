#pragma once

#include "lobtail/innovations.hpp"
#include "lobtail/stats.hpp"
#include "lobtail/tail_static.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lobtail {

/// r_t = phi0 + phi1 r_{t-1} + a_t + theta1 a_{t-1},  a_t = sigma_t eps_t,
/// sigma_t^2 = alpha0 + alpha1 a_{t-1}^2 + beta1 sigma_{t-1}^2.
struct ArmaGarchParams {
    double phi0 = 0.0;
    double phi1 = 0.0;
    double theta1 = 0.0;
    double alpha0 = 1e-6;
    double alpha1 = 0.05;
    double beta1 = 0.9;

    double persistence() const noexcept { return alpha1 + beta1; }
    double unconditional_variance() const noexcept { return alpha0 / (1.0 - persistence()); }
    Vector as_vector() const;
};

/// Order of parameters in ModelFit::std_errors and the fit JSON.
std::vector<std::string> parameter_names(Innovation family);

struct FilterResult {
    Vector a;          // innovations a_t, t = 0..n-1 (a_0 = 0)
    Vector sigma2;     // conditional variances, sigma_0^2 = sample variance
    Vector residuals;  // eps_t = a_t / sigma_t for t = 1..n-1
    double loglik = 0.0;
};

/// Runs the mean and variance recursions over the whole series and scores
/// t = 1..n-1 under the standardized law.
FilterResult arma_garch_filter(VectorRef returns, const ArmaGarchParams& p, const InnovationLaw& law);

/// Log-likelihood over t = 1..n-1 with sigma_0^2 = sample variance. When
/// `grad` is given it receives the gradient in the parameter_names() order.
double arma_garch_loglik(VectorRef returns, const ArmaGarchParams& p, const InnovationLaw& law,
                         Vector* grad = nullptr);

struct ModelFit {
    ArmaGarchParams params;
    InnovationLaw innovation;
    double loglik = 0.0;
    int n_obs = 0;
    int n_params = 0;
    double aic = 0.0;
    double bic = 0.0;
    double aic_per_obs = 0.0;
    double bic_per_obs = 0.0;
    Vector std_errors;  // ordered as parameter_names()
    Vector residuals;
    Vector sigma2;
    bool converged = false;
    bool boundary = false;  // a constraint is nearly active or a parameter is unidentified
    int iterations = 0;
    std::vector<double> trace;
    std::string message;

    // State at the last observation, where simulations start.
    double last_return = 0.0;
    double last_innovation = 0.0;
    double last_sigma2 = 0.0;
};

struct FitOptions {
    int max_iterations = 500;
    double gradient_tol = 1e-7;  // on the per-observation negative log-likelihood
    bool std_errors = true;
    /// Throw FitError instead of returning a non-converged fit.
    bool require_convergence = true;
};

/// Joint maximum likelihood, started from a Gaussian QMLE and an innovation
/// fit to its residuals. Needs at least 1000 finite returns.
ModelFit fit_arma_garch(VectorRef returns, Innovation family, const FitOptions& opts = {});

Vector standardized_residuals(const ModelFit& fit);

/// A path of length n from the stationary model, after `burn_in` discarded steps.
Vector simulate_path(const ArmaGarchParams& p, const InnovationLaw& law, std::size_t n, std::uint64_t seed,
                     std::size_t burn_in = 1000);

struct ScenarioSet {
    int horizon = 1;
    int n_scenarios = 0;
    std::uint64_t seed = 0;
    Matrix returns;  // n_scenarios x horizon
};

struct SimulationOptions {
    /// Test hook: force every innovation to zero.
    bool zero_innovations = false;
};

/// Propagates the fitted recursions from the last observed state. Scenario s
/// uses its own random stream, so results do not depend on evaluation order.
ScenarioSet simulate_ensemble(const ModelFit& fit, int n_scenarios, int horizon, std::uint64_t seed,
                              const SimulationOptions& opts = {});

/// Standardized residuals of several fits side by side. The fits must share
/// one event grid.
Matrix residual_matrix(const std::vector<ModelFit>& fits);

/// One-step joint scenarios (n_scenarios x fits.size()). Each scenario draws
/// one whole row of the residual matrix, which keeps the cross-sectional
/// dependence, then applies each column's own recursion.
Matrix joint_scenarios(const std::vector<ModelFit>& fits, MatrixRef residuals, int n_scenarios, std::uint64_t seed);

struct TailReport {
    GpdFit gpd;
    HillCurve hill;
};

/// GPD fit and Hill curve (k from 1% to 5% of the ensemble) on the pooled scenarios.
TailReport dynamic_tail_report(const ScenarioSet& scenarios, double tail_fraction = 0.05);
TailReport dynamic_tail_report(VectorRef pooled, double tail_fraction = 0.05);

}  // namespace lobtail
