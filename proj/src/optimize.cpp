#include "lobtail/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lobtail::optim {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

BrentResult brent_minimize(const std::function<double(double)>& f, double a, double b,
                           double rel_tol, double abs_tol, int max_iter)
{
    constexpr double golden = 0.3819660112501051;
    double x = a + golden * (b - a);
    double w = x;
    double v = x;
    double fx = safe(f(x));
    double fw = fx;
    double fv = fx;
    double d = 0.0;
    double e = 0.0;
    int evals = 1;
    for (int it = 0; it < max_iter; ++it) {
        const double m = 0.5 * (a + b);
        const double tol1 = rel_tol * std::abs(x) + abs_tol;
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
        bool golden_step = true;
        if (std::abs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            const double etemp = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (m >= x) ? tol1 : -tol1;
                golden_step = false;
            }
        }
        if (golden_step) {
            e = (x >= m) ? a - x : b - x;
            d = golden * e;
        }
        const double u = (std::abs(d) >= tol1) ? x + d : x + ((d >= 0) ? tol1 : -tol1);
        const double fu = safe(f(u));
        ++evals;
        if (fu <= fx) {
            (u >= x ? a : b) = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            (u < x ? a : b) = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    return {x, fx, evals};
}

Result nelder_mead(const Objective& f, const Vector& x0, const NelderMeadOptions& opts)
{
    const auto n = x0.size();
    std::vector<Vector> simplex(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fs(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = (x0[i] != 0.0) ? opts.initial_step * std::max(1.0, std::abs(x0[i])) : opts.initial_step;
        simplex[static_cast<std::size_t>(i + 1)][i] += h;
    }
    Result res;
    for (std::size_t i = 0; i < simplex.size(); ++i) fs[i] = safe(f(simplex[i]));
    res.evaluations = static_cast<int>(simplex.size());

    std::vector<std::size_t> order(simplex.size());
    while (res.evaluations < opts.max_evaluations) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];
        res.trace.push_back(fs[best]);
        ++res.iterations;

        double spread = 0.0;
        for (const auto& s : simplex) spread = std::max(spread, (s - simplex[best]).cwiseAbs().maxCoeff());
        if (std::isfinite(fs[worst]) &&
            std::abs(fs[worst] - fs[best]) <= opts.f_tol * (std::abs(fs[best]) + 1e-300) &&
            spread <= opts.x_tol * (1.0 + simplex[best].cwiseAbs().maxCoeff())) {
            res.converged = true;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i < simplex.size(); ++i)
            if (i != worst) centroid += simplex[i];
        centroid /= static_cast<double>(n);

        const Vector xr = centroid + (centroid - simplex[worst]);
        const double fr = safe(f(xr));
        ++res.evaluations;
        if (fr < fs[best]) {
            const Vector xe = centroid + 2.0 * (centroid - simplex[worst]);
            const double fe = safe(f(xe));
            ++res.evaluations;
            if (fe < fr) { simplex[worst] = xe; fs[worst] = fe; }
            else { simplex[worst] = xr; fs[worst] = fr; }
            continue;
        }
        if (fr < fs[second]) {
            simplex[worst] = xr;
            fs[worst] = fr;
            continue;
        }
        const bool outside = fr < fs[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                  : Vector(centroid + 0.5 * (simplex[worst] - centroid));
        const double fc = safe(f(xc));
        ++res.evaluations;
        if (fc < (outside ? fr : fs[worst])) {
            simplex[worst] = xc;
            fs[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == best) continue;
            simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
            fs[i] = safe(f(simplex[i]));
            ++res.evaluations;
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    res.x = simplex[best];
    res.fx = fs[best];
    if (!res.converged) res.message = "Nelder-Mead evaluation budget exhausted";
    return res;
}

Vector numeric_gradient(const Objective& f, const Vector& x, double step)
{
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Matrix numeric_hessian(const Objective& f, const Vector& x, const Vector& steps)
{
    const auto n = x.size();
    Matrix h(n, n);
    const double f0 = f(x);
    Vector xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = steps[i];
        xp[i] = x[i] + hi;
        const double fp = f(xp);
        xp[i] = x[i] - hi;
        const double fm = f(xp);
        xp[i] = x[i];
        h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double hj = steps[j];
            auto eval = [&](double si, double sj) {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                const double v = f(xp);
                xp[i] = x[i];
                xp[j] = x[j];
                return v;
            };
            h(i, j) = h(j, i) = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * hi * hj);
        }
    }
    return h;
}

namespace {

template <typename Gradient>
Result bfgs_impl(const Objective& f, Gradient&& gradient, const Vector& x0, const BfgsOptions& opts,
                 int grad_cost)
{
    const auto n = x0.size();
    Result res;
    Vector x = x0;
    double fx = safe(f(x));
    res.evaluations = 1;
    if (!std::isfinite(fx)) {
        res.x = x;
        res.fx = fx;
        res.message = "objective not finite at the starting point";
        return res;
    }
    Vector g = gradient(x);
    res.evaluations += grad_cost;
    Matrix hinv = Matrix::Identity(n, n);

    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it + 1;
        res.trace.push_back(fx);
        if (g.cwiseAbs().maxCoeff() <= opts.gradient_tol) {
            res.converged = true;
            break;
        }
        Vector dir = -hinv * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        // Cap the step so one iteration never moves a coordinate by more than 2.
        double t = std::min(1.0, 2.0 / std::max(dir.cwiseAbs().maxCoeff(), 1e-300));
        double fnew = kInf;
        Vector xnew;
        for (int ls = 0; ls < 60; ++ls) {
            xnew = x + t * dir;
            fnew = safe(f(xnew));
            ++res.evaluations;
            if (fnew <= fx + 1e-4 * t * slope) break;
            t *= 0.5;
        }
        if (!(fnew < fx)) {
            // Line search stalled: accept convergence if the gradient is small
            // relative to the objective scale, otherwise restart once.
            if (hinv.isIdentity()) {
                res.converged = g.cwiseAbs().maxCoeff() <= 1e3 * opts.gradient_tol;
                res.message = "line search stalled";
                break;
            }
            hinv.setIdentity();
            continue;
        }
        const Vector gnew = gradient(xnew);
        res.evaluations += grad_cost;
        if (!gnew.allFinite()) {
            res.message = "gradient not finite";
            break;
        }
        const Vector s = xnew - x;
        const Vector y = gnew - g;
        const double sy = s.dot(y);
        const double rel_change = std::abs(fx - fnew) / std::max(1.0, std::abs(fx));
        x = xnew;
        g = gnew;
        const double fold = fx;
        fx = fnew;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (it == 0) hinv *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Matrix i_rsy = Matrix::Identity(n, n) - rho * s * y.transpose();
            hinv = i_rsy * hinv * i_rsy.transpose() + rho * s * s.transpose();
        }
        if (rel_change <= opts.f_rel_tol && fold - fnew >= 0.0 && g.cwiseAbs().maxCoeff() <= 1e3 * opts.gradient_tol) {
            res.converged = true;
            break;
        }
    }
    res.x = x;
    res.fx = fx;
    if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
    return res;
}

}  // namespace

Result bfgs(const Objective& f, const Vector& x0, const BfgsOptions& opts)
{
    return bfgs_impl(f, [&](const Vector& x) { return numeric_gradient(f, x, opts.fd_step); }, x0, opts,
                     static_cast<int>(2 * x0.size()));
}

Result bfgs(const Objective& f, const GradientFn& grad, const Vector& x0, const BfgsOptions& opts)
{
    return bfgs_impl(f, grad, x0, opts, 1);
}

}  // namespace lobtail::optim
