#pragma once

#include "lobtail/stats.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace lobtail {

using Complex = std::complex<double>;

/// NDIG log-price X_t = mu3 t + gamma U(t) + rho T(U(t)) + sigma3 B_{T(U(t))}
/// with T, U independent inverse Gaussian subordinators, T(1) ~ IG(mu_t, lambda_t)
/// and U(1) ~ IG(mu_u, lambda_u). Time is in years.
struct NdigParams {
    double mu3 = 0.0;
    double gamma = 0.0;
    double rho = 0.0;
    double sigma3 = 0.2;
    double lambda_t = 1.0;
    double mu_t = 1.0;
    double lambda_u = 1.0;
    double mu_u = 1.0;

    /// Throws ConfigError unless sigma3, lambda_t, mu_t, lambda_u, mu_u are positive and finite.
    void validate() const;
};

/// Characteristic exponent psi(v) = ln phi_{X_1}(v) on the principal branch.
/// Throws DomainError naming the radical ("inner" or "outer") whose argument
/// has negative real part.
Complex ndig_exponent(Complex v, const NdigParams& p);
Complex ndig_cf(Complex v, const NdigParams& p);

/// K(1) = ln E[e^{X_1}] = psi(-i). DomainError when the moment does not exist.
double cumulant_k1(const NdigParams& p);

/// True when E[e^{s X_1}] is finite.
bool has_exponential_moment(const NdigParams& p, double s);

/// CF of ln S_t under the martingale-corrected measure:
/// s0^{iv} exp{[iv (r - K(1)) + psi(v)] t}.
Complex rn_log_price_cf(Complex v, const NdigParams& p, double r, double s0, double t);

/// First four cumulants of X_1.
std::array<double, 4> ndig_cumulants(const NdigParams& p);

struct ShapeMoments {
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
};

/// Moments of X_t (t = 1 by default).
ShapeMoments ndig_moments(const NdigParams& p, double t = 1.0);
ShapeMoments sample_moments(VectorRef x);

/// Exact draws of the increments X_{k dt} - X_{(k-1) dt}, k = 1..n.
Vector simulate_ndig(const NdigParams& p, std::size_t n, double dt, std::uint64_t seed);

struct NdigFit {
    NdigParams params;
    double objective = 0.0;
    double moment_residual = 0.0;  // squared moment errors
    double cf_residual = 0.0;      // squared CF distance on the grid
    ShapeMoments sample;
    ShapeMoments fitted;           // of one step, dt
    bool converged = false;
    int evaluations = 0;
};

/// Moment plus empirical-CF criterion for increments over dt. Parameters
/// with mu_t and mu_u held at their given values.
class NdigObjective {
public:
    NdigObjective(VectorRef returns, double dt, double mu_t = 1.0, double mu_u = 1.0);

    /// Six free parameters in dimensionless per-step units: the three drift
    /// loadings over one step in sample standard deviations, then the logs of
    /// the step diffusive scale and of the two subordinators' step shape/mean
    /// ratios. The step excess kurtosis of the symmetric case is 3/e^{z4} + 3/e^{z5}.
    NdigParams to_params(const Vector& z) const;
    Vector to_free(const NdigParams& p) const;

    /// +inf for parameters without a finite exponential moment of order 2.
    double operator()(const NdigParams& p) const;
    double moment_part(const NdigParams& p) const;
    double cf_part(const NdigParams& p) const;

    const ShapeMoments& sample() const noexcept { return sample_; }
    double dt() const noexcept { return dt_; }
    const Vector& grid() const noexcept { return grid_; }

private:
    double dt_;
    double mu_t_;
    double mu_u_;
    double sd_;
    ShapeMoments sample_;
    Vector grid_;
    std::vector<Complex> ecf_;
};

/// Needs n >= 10^4 returns. Throws FitError carrying the best point's
/// residuals when the optimizer does not converge.
NdigFit estimate_ndig(VectorRef returns, double dt, double mu_t = 1.0, double mu_u = 1.0);

struct CarrMadanOptions {
    double damping = 0.0;    // a; <= 0 selects by scanning kDampingCandidates
    int n = 4096;            // FFT size, a power of two
    double eta = 0.25;       // Fourier grid spacing
};

inline constexpr std::array<double, 4> kDampingCandidates{0.25, 0.75, 1.5, 3.0};

/// Call prices on the log-strike grid k_u = ln s0 - b + u lambda, lambda = 2 pi/(n eta), b = n lambda/2.
struct FftSlice {
    Vector log_strikes;
    Vector calls;
    double damping = 0.0;
};

FftSlice carr_madan_slice(const NdigParams& p, double s0, double r, double tau, double damping, int n, double eta);

/// Smallest admissible candidate whose prices at `strikes` agree with the
/// next admissible one to 1e-6 s0; when none does, the smaller member of the
/// closest adjacent pair.
double select_damping(const NdigParams& p, double s0, double r, double tau, VectorRef strikes, int n, double eta);

enum class IvStatus { Ok, AtIntrinsic, BelowIntrinsic, AboveSpot, OutsideBracket };
std::string to_string(IvStatus s);

/// Rows are maturities, columns strikes.
struct OptionSurface {
    double s0 = 0.0;
    double r = 0.0;
    Vector strikes;
    Vector maturities;
    Matrix calls;
    Matrix puts;
    Matrix ivs;  // NaN where status != Ok
    std::vector<std::vector<IvStatus>> iv_status;
    Vector damping;  // per maturity
};

/// Calls by FFT with cubic interpolation in log strike, floored at
/// max(s0 - K e^{-r tau}, 0). RangeError when a strike falls outside the
/// interpolation range; ConfigError for a bad grid or inadmissible damping.
OptionSurface carr_madan_call_surface(const NdigParams& p, double s0, double r, VectorRef strikes,
                                      VectorRef maturities, const CarrMadanOptions& opts = {});

/// Fills puts from parity, P = C - s0 + K e^{-r tau}, floored at intrinsic.
void put_surface(OptionSurface& surface);

double bs_call(double s0, double k, double r, double tau, double sigma);

struct ImpliedVol {
    double sigma;  // NaN unless status == Ok
    IvStatus status;
};

/// Bisection on [1e-4, 5].
ImpliedVol implied_vol(double call, double s0, double k, double r, double tau);
void implied_vol_surface(OptionSurface& surface);

}  // namespace lobtail
