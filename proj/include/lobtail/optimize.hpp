#pragma once

#include "lobtail/stats.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lobtail::optim {

/// Objective over an unconstrained parameter vector. Non-finite return values
/// are treated as +infinity (infeasible).
using Objective = std::function<double(const Vector&)>;

struct Result {
    Vector x;
    double fx = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> trace;  // objective value per iteration
    std::string message;
};

struct BrentResult {
    double x;
    double fx;
    int evaluations;
};

/// Golden-section/parabolic minimization of a scalar function on [a, b].
BrentResult brent_minimize(const std::function<double(double)>& f, double a, double b,
                           double rel_tol = 1e-10, double abs_tol = 1e-12, int max_iter = 200);

struct NelderMeadOptions {
    int max_evaluations = 20000;
    double f_tol = 1e-12;
    double x_tol = 1e-10;
    double initial_step = 0.25;
};

Result nelder_mead(const Objective& f, const Vector& x0, const NelderMeadOptions& opts = {});

struct BfgsOptions {
    int max_iterations = 500;
    double gradient_tol = 1e-6;  // on the infinity norm of the gradient
    double f_rel_tol = 1e-13;
    double fd_step = 1e-5;
};

/// Quasi-Newton minimization with central-difference gradients and an Armijo
/// backtracking line search.
Result bfgs(const Objective& f, const Vector& x0, const BfgsOptions& opts = {});

/// Same, with an analytic gradient. A gradient that is not finite ends the run.
using GradientFn = std::function<Vector(const Vector&)>;
Result bfgs(const Objective& f, const GradientFn& grad, const Vector& x0, const BfgsOptions& opts = {});

Vector numeric_gradient(const Objective& f, const Vector& x, double step);
Matrix numeric_hessian(const Objective& f, const Vector& x, const Vector& steps);

}  // namespace lobtail::optim
