#include "lobtail/option_pricing.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/errors.hpp"
#include "lobtail/optimize.hpp"
#include "lobtail/rng.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace lobtail {
namespace {

constexpr Complex kI{0.0, 1.0};
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

// 1 - sqrt(1 - z) without cancellation for small z.
Complex one_minus_sqrt(Complex z, Complex radicand) { return z / (1.0 + std::sqrt(radicand)); }

// IG(mu, lambda) cumulants per unit time.
std::array<double, 4> ig_cumulants(double mu, double lambda)
{
    const double m2 = mu * mu;
    return {mu, m2 * mu / lambda, 3.0 * m2 * m2 * mu / (lambda * lambda),
            15.0 * m2 * m2 * m2 * mu / (lambda * lambda * lambda)};
}

// Cumulants of a subordinated process from the subordinator's cumulants `a`
// and the derivatives `g` at 0 of the inner cumulant generating function.
std::array<double, 4> compose(const std::array<double, 4>& a, const std::array<double, 4>& g)
{
    return {a[0] * g[0], a[0] * g[1] + a[1] * g[0] * g[0],
            a[0] * g[2] + 3.0 * a[1] * g[0] * g[1] + a[2] * g[0] * g[0] * g[0],
            a[0] * g[3] + a[1] * (4.0 * g[0] * g[2] + 3.0 * g[1] * g[1]) + 6.0 * a[2] * g[0] * g[0] * g[1] +
                a[3] * g[0] * g[0] * g[0] * g[0]};
}

bool is_power_of_two(int n) { return n >= 4 && (n & (n - 1)) == 0; }

// 4-point Lagrange interpolation on a uniform grid.
double cubic_at(const Vector& xs, const Vector& ys, double x)
{
    const double h = xs[1] - xs[0];
    const double pos = (x - xs[0]) / h;
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    if (i < 1 || i + 2 >= xs.size())
        throw RangeError("log strike " + csv::format(x) + " outside the FFT grid [" + csv::format(xs[1]) + ", " +
                         csv::format(xs[xs.size() - 2]) + "]");
    const double t = pos - static_cast<double>(i);
    const double y0 = ys[i - 1], y1 = ys[i], y2 = ys[i + 1], y3 = ys[i + 2];
    return -y0 * t * (t - 1.0) * (t - 2.0) / 6.0 + y1 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 -
           y2 * (t + 1.0) * t * (t - 2.0) / 2.0 + y3 * (t + 1.0) * t * (t - 1.0) / 6.0;
}

Vector interpolate_calls(const FftSlice& slice, VectorRef strikes)
{
    Vector out(strikes.size());
    for (Eigen::Index j = 0; j < strikes.size(); ++j)
        out[j] = cubic_at(slice.log_strikes, slice.calls, std::log(strikes[j]));
    return out;
}

}  // namespace

void NdigParams::validate() const
{
    if (!std::isfinite(mu3) || !std::isfinite(gamma) || !std::isfinite(rho))
        throw ConfigError("NDIG drift parameters must be finite");
    if (!positive_finite(sigma3)) throw ConfigError("NDIG sigma3 must be positive");
    if (!positive_finite(lambda_t) || !positive_finite(mu_t))
        throw ConfigError("NDIG inner subordinator needs positive lambda_t and mu_t");
    if (!positive_finite(lambda_u) || !positive_finite(mu_u))
        throw ConfigError("NDIG outer subordinator needs positive lambda_u and mu_u");
}

Complex ndig_exponent(Complex v, const NdigParams& p)
{
    const Complex iv = kI * v;
    const Complex z_in = (p.mu_t * p.mu_t / p.lambda_t) * (2.0 * iv * p.rho - p.sigma3 * p.sigma3 * v * v);
    const Complex rad_in = 1.0 - z_in;
    if (rad_in.real() < 0.0) throw DomainError("NDIG inner radical has negative real part");
    const Complex psi_t = (p.lambda_t / p.mu_t) * one_minus_sqrt(z_in, rad_in);

    const Complex z_out = (2.0 * p.mu_u * p.mu_u / p.lambda_u) * (psi_t + iv * p.gamma);
    const Complex rad_out = 1.0 - z_out;
    if (rad_out.real() < 0.0) throw DomainError("NDIG outer radical has negative real part");
    return iv * p.mu3 + (p.lambda_u / p.mu_u) * one_minus_sqrt(z_out, rad_out);
}

Complex ndig_cf(Complex v, const NdigParams& p) { return std::exp(ndig_exponent(v, p)); }

bool has_exponential_moment(const NdigParams& p, double s)
{
    const double z_in = (p.mu_t * p.mu_t / p.lambda_t) * (2.0 * s * p.rho + p.sigma3 * p.sigma3 * s * s);
    if (!(1.0 - z_in > 0.0)) return false;
    const double psi_t = (p.lambda_t / p.mu_t) * z_in / (1.0 + std::sqrt(1.0 - z_in));
    const double z_out = (2.0 * p.mu_u * p.mu_u / p.lambda_u) * (psi_t + s * p.gamma);
    return 1.0 - z_out > 0.0;
}

double cumulant_k1(const NdigParams& p)
{
    if (!has_exponential_moment(p, 1.0)) throw DomainError("NDIG law has no finite exponential moment E[e^X]");
    return ndig_exponent(Complex(0.0, -1.0), p).real();
}

Complex rn_log_price_cf(Complex v, const NdigParams& p, double r, double s0, double t)
{
    const double k1 = cumulant_k1(p);
    const Complex iv = kI * v;
    return std::exp(iv * std::log(s0) + (iv * (r - k1) + ndig_exponent(v, p)) * t);
}

std::array<double, 4> ndig_cumulants(const NdigParams& p)
{
    const auto inner = compose(ig_cumulants(p.mu_t, p.lambda_t), {p.rho, p.sigma3 * p.sigma3, 0.0, 0.0});
    auto k = compose(ig_cumulants(p.mu_u, p.lambda_u), {p.gamma + inner[0], inner[1], inner[2], inner[3]});
    k[0] += p.mu3;
    return k;
}

ShapeMoments ndig_moments(const NdigParams& p, double t)
{
    const auto k = ndig_cumulants(p);
    const double var = k[1] * t;
    return {k[0] * t, var, k[2] * t / std::pow(var, 1.5), k[3] * t / (var * var)};
}

ShapeMoments sample_moments(VectorRef x)
{
    return {stats::mean(x), stats::central_moment(x, 2), stats::skewness(x), stats::excess_kurtosis_moment(x)};
}

Vector simulate_ndig(const NdigParams& p, std::size_t n, double dt, std::uint64_t seed)
{
    p.validate();
    if (!(dt > 0.0)) throw ConfigError("simulation step dt must be positive");
    CounterRng rng(seed, 0);
    std::normal_distribution<double> normal;
    Vector x(static_cast<Eigen::Index>(n));
    for (auto& v : x) {
        const double u = sample_inverse_gaussian(rng, p.mu_u * dt, p.lambda_u * dt * dt);
        const double t = sample_inverse_gaussian(rng, p.mu_t * u, p.lambda_t * u * u);
        v = p.mu3 * dt + p.gamma * u + p.rho * t + p.sigma3 * std::sqrt(t) * normal(rng);
    }
    return x;
}

NdigObjective::NdigObjective(VectorRef returns, double dt, double mu_t, double mu_u)
    : dt_(dt), mu_t_(mu_t), mu_u_(mu_u)
{
    if (!(dt > 0.0)) throw ConfigError("time step dt must be positive");
    if (!positive_finite(mu_t) || !positive_finite(mu_u)) throw ConfigError("subordinator means must be positive");
    if (returns.size() < 4) throw RangeError("NDIG criterion needs at least 4 returns");
    if (!returns.allFinite()) throw DataError("non-finite return in NDIG input");
    sample_ = sample_moments(returns);
    sd_ = std::sqrt(sample_.variance);
    if (!(sd_ > 0.0)) throw DegenerateError("returns have zero variance");

    constexpr int kGrid = 20;
    grid_.resize(kGrid);
    ecf_.assign(kGrid, Complex(0.0, 0.0));
    for (int j = 0; j < kGrid; ++j) grid_[j] = 0.1 * (j + 1) / sd_;
    for (double x : returns)
        for (int j = 0; j < kGrid; ++j) ecf_[j] += std::exp(kI * (grid_[j] * x));
    for (auto& c : ecf_) c /= static_cast<double>(returns.size());
}

NdigParams NdigObjective::to_params(const Vector& z) const
{
    NdigParams p;
    p.mu_t = mu_t_;
    p.mu_u = mu_u_;
    p.mu3 = z[0] * sd_ / dt_;
    p.gamma = z[1] * sd_ / (mu_u_ * dt_);
    p.rho = z[2] * sd_ / (mu_t_ * mu_u_ * dt_);
    p.sigma3 = std::exp(z[3]) * sd_ / std::sqrt(mu_t_ * mu_u_ * dt_);
    p.lambda_t = std::exp(z[4]) * mu_t_ / (mu_u_ * dt_);
    p.lambda_u = std::exp(z[5]) * mu_u_ / dt_;
    return p;
}

Vector NdigObjective::to_free(const NdigParams& p) const
{
    Vector z(6);
    z << p.mu3 * dt_ / sd_, p.gamma * mu_u_ * dt_ / sd_, p.rho * mu_t_ * mu_u_ * dt_ / sd_,
        std::log(p.sigma3 * std::sqrt(mu_t_ * mu_u_ * dt_) / sd_), std::log(p.lambda_t * mu_u_ * dt_ / mu_t_),
        std::log(p.lambda_u * dt_ / mu_u_);
    return z;
}

double NdigObjective::moment_part(const NdigParams& p) const
{
    const auto m = ndig_moments(p, dt_);
    const double e1 = (m.mean - sample_.mean) / sd_;
    const double e2 = m.variance / sample_.variance - 1.0;
    const double e3 = m.skewness - sample_.skewness;
    const double e4 = (m.excess_kurtosis - sample_.excess_kurtosis) / (1.0 + std::abs(sample_.excess_kurtosis));
    return e1 * e1 + e2 * e2 + e3 * e3 + e4 * e4;
}

double NdigObjective::cf_part(const NdigParams& p) const
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < grid_.size(); ++j)
        s += std::norm(std::exp(dt_ * ndig_exponent(Complex(grid_[j], 0.0), p)) - ecf_[j]);
    return s;
}

double NdigObjective::operator()(const NdigParams& p) const
{
    if (!has_exponential_moment(p, 2.0)) return kInf;
    const double f = moment_part(p) + cf_part(p);
    return std::isfinite(f) ? f : kInf;
}

NdigFit estimate_ndig(VectorRef returns, double dt, double mu_t, double mu_u)
{
    if (returns.size() < 10000) throw RangeError("NDIG estimation needs at least 10^4 returns");
    const NdigObjective obj(returns, dt, mu_t, mu_u);

    // Symmetric start with the excess kurtosis split evenly between the two clocks.
    const double exk = std::max(obj.sample().excess_kurtosis, 0.05);
    Vector z0(6);
    z0 << obj.sample().mean / std::sqrt(obj.sample().variance), 0.0, 0.0, 0.0, std::log(6.0 / exk),
        std::log(6.0 / exk);
    const optim::Objective f = [&](const Vector& z) { return obj(obj.to_params(z)); };
    if (!std::isfinite(f(z0))) throw FitError("NDIG start point has no exponential moment of order 2");

    optim::NelderMeadOptions nm;
    nm.max_evaluations = 20000;
    auto res = optim::nelder_mead(f, z0, nm);
    int evals = res.evaluations;
    nm.initial_step = 0.1;
    res = optim::nelder_mead(f, res.x, nm);
    evals += res.evaluations;

    NdigFit fit;
    fit.params = obj.to_params(res.x);
    fit.objective = res.fx;
    fit.moment_residual = obj.moment_part(fit.params);
    fit.cf_residual = obj.cf_part(fit.params);
    fit.sample = obj.sample();
    fit.fitted = ndig_moments(fit.params, dt);
    fit.converged = res.converged;
    fit.evaluations = evals;
    if (!res.converged)
        throw FitError("NDIG estimation did not converge: best objective " + csv::format(res.fx) +
                       ", moment residual " + csv::format(fit.moment_residual) + ", CF residual " +
                       csv::format(fit.cf_residual));
    return fit;
}

FftSlice carr_madan_slice(const NdigParams& p, double s0, double r, double tau, double damping, int n, double eta)
{
    p.validate();
    if (!is_power_of_two(n)) throw ConfigError("FFT size must be a power of two, got " + std::to_string(n));
    if (!(eta > 0.0)) throw ConfigError("FFT spacing eta must be positive");
    if (!(s0 > 0.0)) throw ConfigError("spot must be positive");
    if (!(tau > 0.0)) throw ConfigError("maturity must be positive");
    if (!(damping > 0.0)) throw ConfigError("damping a must be positive");
    if (!has_exponential_moment(p, damping + 1.0))
        throw ConfigError("damping a = " + csv::format(damping) + " is inadmissible: E[S^(a+1)] is infinite");

    const double lambda = 2.0 * std::numbers::pi / (n * eta);
    const double b = 0.5 * n * lambda;
    const double k0 = std::log(s0) - b;
    const double a = damping;
    const double disc = std::exp(-r * tau);

    std::vector<Complex> in(static_cast<std::size_t>(n)), out;
    for (int j = 0; j < n; ++j) {
        const double v = j * eta;
        const Complex phi = rn_log_price_cf(Complex(v, -(a + 1.0)), p, r, s0, tau);
        const Complex denom(a * a + a - v * v, (2.0 * a + 1.0) * v);
        const double w = (j == 0 ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0)) / 3.0;
        in[static_cast<std::size_t>(j)] = disc * phi / denom * std::exp(-kI * (v * k0)) * (eta * w);
    }
    Eigen::FFT<double> fft;
    fft.fwd(out, in);

    FftSlice slice;
    slice.damping = a;
    slice.log_strikes.resize(n);
    slice.calls.resize(n);
    for (int u = 0; u < n; ++u) {
        const double k = k0 + u * lambda;
        slice.log_strikes[u] = k;
        slice.calls[u] = std::exp(-a * k) / std::numbers::pi * out[static_cast<std::size_t>(u)].real();
    }
    return slice;
}

double select_damping(const NdigParams& p, double s0, double r, double tau, VectorRef strikes, int n, double eta)
{
    std::vector<double> admissible;
    for (double a : kDampingCandidates)
        if (has_exponential_moment(p, a + 1.0)) admissible.push_back(a);
    if (admissible.empty()) throw ConfigError("no admissible damping: E[S^1.25] is infinite");

    std::vector<Vector> prices;
    for (double a : admissible) prices.push_back(interpolate_calls(carr_madan_slice(p, s0, r, tau, a, n, eta), strikes));
    // First adjacent pair that agrees to tolerance; failing that, the closest pair.
    std::size_t best = 0;
    double best_gap = kInf;
    for (std::size_t i = 0; i + 1 < admissible.size(); ++i) {
        const double gap = (prices[i] - prices[i + 1]).cwiseAbs().maxCoeff();
        if (gap <= 1e-6 * s0) return admissible[i];
        if (gap < best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return admissible[best];
}

std::string to_string(IvStatus s)
{
    switch (s) {
        case IvStatus::Ok: return "";
        case IvStatus::AtIntrinsic: return "at_intrinsic";
        case IvStatus::BelowIntrinsic: return "below_intrinsic";
        case IvStatus::AboveSpot: return "above_spot";
        case IvStatus::OutsideBracket: return "outside_bracket";
    }
    return "";
}

OptionSurface carr_madan_call_surface(const NdigParams& p, double s0, double r, VectorRef strikes,
                                      VectorRef maturities, const CarrMadanOptions& opts)
{
    if (strikes.size() == 0 || maturities.size() == 0) throw ConfigError("empty strike or maturity grid");
    if ((strikes.array() <= 0.0).any()) throw ConfigError("strikes must be positive");

    OptionSurface s;
    s.s0 = s0;
    s.r = r;
    s.strikes = strikes;
    s.maturities = maturities;
    s.calls.resize(maturities.size(), strikes.size());
    s.damping.resize(maturities.size());
    for (Eigen::Index i = 0; i < maturities.size(); ++i) {
        const double tau = maturities[i];
        const double a =
            opts.damping > 0.0 ? opts.damping : select_damping(p, s0, r, tau, strikes, opts.n, opts.eta);
        s.damping[i] = a;
        const Vector c = interpolate_calls(carr_madan_slice(p, s0, r, tau, a, opts.n, opts.eta), strikes);
        for (Eigen::Index j = 0; j < strikes.size(); ++j)
            s.calls(i, j) = std::max({c[j], s0 - strikes[j] * std::exp(-r * tau), 0.0});
    }
    put_surface(s);
    s.ivs = Matrix::Constant(s.calls.rows(), s.calls.cols(), kNaN);
    s.iv_status.assign(static_cast<std::size_t>(s.calls.rows()),
                       std::vector<IvStatus>(static_cast<std::size_t>(s.calls.cols()), IvStatus::OutsideBracket));
    return s;
}

void put_surface(OptionSurface& surface)
{
    surface.puts.resize(surface.calls.rows(), surface.calls.cols());
    for (Eigen::Index i = 0; i < surface.calls.rows(); ++i) {
        const double disc = std::exp(-surface.r * surface.maturities[i]);
        for (Eigen::Index j = 0; j < surface.calls.cols(); ++j)
            surface.puts(i, j) =
                std::max(surface.calls(i, j) - surface.s0 + surface.strikes[j] * disc, 0.0);
    }
}

double bs_call(double s0, double k, double r, double tau, double sigma)
{
    const double fwd_k = k * std::exp(-r * tau);
    if (tau <= 0.0 || sigma <= 0.0) return std::max(s0 - fwd_k, 0.0);
    const double sd = sigma * std::sqrt(tau);
    const double d1 = (std::log(s0 / fwd_k) + 0.5 * sd * sd) / sd;
    return s0 * stats::normal_cdf(d1) - fwd_k * stats::normal_cdf(d1 - sd);
}

ImpliedVol implied_vol(double call, double s0, double k, double r, double tau)
{
    const double intrinsic = std::max(s0 - k * std::exp(-r * tau), 0.0);
    if (call < intrinsic - 1e-12 * s0) return {kNaN, IvStatus::BelowIntrinsic};
    if (call <= intrinsic + 1e-14 * s0) return {kNaN, IvStatus::AtIntrinsic};
    if (call >= s0) return {kNaN, IvStatus::AboveSpot};
    double lo = 1e-4, hi = 5.0;
    if (call < bs_call(s0, k, r, tau, lo) || call > bs_call(s0, k, r, tau, hi)) return {kNaN, IvStatus::OutsideBracket};
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        (bs_call(s0, k, r, tau, mid) < call ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), IvStatus::Ok};
}

void implied_vol_surface(OptionSurface& surface)
{
    const auto rows = surface.calls.rows(), cols = surface.calls.cols();
    surface.ivs.resize(rows, cols);
    surface.iv_status.assign(static_cast<std::size_t>(rows), std::vector<IvStatus>(static_cast<std::size_t>(cols)));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            const auto iv = implied_vol(surface.calls(i, j), surface.s0, surface.strikes[j], surface.r,
                                        surface.maturities[i]);
            surface.ivs(i, j) = iv.sigma;
            surface.iv_status[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = iv.status;
        }
}

}  // namespace lobtail
