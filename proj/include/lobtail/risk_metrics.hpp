#pragma once

#include "lobtail/stats.hpp"

#include <vector>

namespace lobtail {

/// Value at risk in the capital-requirement sign: -quantile_u(x), where u is
/// the lower-tail level ((i - 0.5)/n plotting positions).
double var_q(VectorRef x, double u);

/// AVaR_beta(X) = E[(q - X)^+] / beta - q with q the empirical beta-quantile.
double avar(VectorRef x, double beta);

struct RachevReport {
    double beta = 0.05;
    double gamma = 0.05;
    double avar_gain = 0.0;  // AVaR_beta(-X)
    double avar_loss = 0.0;  // AVaR_gamma(X)
    double ratio = 0.0;
};

/// RR = AVaR_beta(-X) / AVaR_gamma(X). DegenerateError when AVaR_gamma(X) <= 0.
RachevReport rachev_ratio(VectorRef x, double beta = 0.05, double gamma = 0.05);

/// Conditional measures of y given distress of x, S = {i : x_i <= quantile_c(x)}
/// with c = cond_level (defaults to q). All keep the raw return sign.
/// CoVaR_q = quantile_q(y_S).
double covar(VectorRef x, VectorRef y, double q, double cond_level = -1.0);
/// Mean of y over S and {y <= CoVaR_q}.
double coetl(VectorRef x, VectorRef y, double q, double cond_level = -1.0);
/// Sum of y over S and {y <= CoVaR_q}, divided by |S|: the tail-loss
/// contribution E[Y 1{Y <= CoVaR} | X in distress].
double coes(VectorRef x, VectorRef y, double q, double cond_level = -1.0);

struct SystemicCell {
    double covar = 0.0;
    double coes = 0.0;
    double coetl = 0.0;
};

struct SystemicRow {
    int depth = 0;
    std::vector<SystemicCell> cells;  // one per confidence level
};

struct SystemicTable {
    std::vector<double> levels;  // confidence levels, e.g. 0.95 and 0.99
    std::vector<SystemicRow> rows;
};

/// Equally weighted portfolio: row means of the per-depth returns.
Vector ewp_index(MatrixRef per_depth);

/// `scenarios` holds one column per entry of `depths` followed by the index
/// column. For each depth and confidence level c the index is conditioned on
/// the depth's lower tail at q = 1 - c.
SystemicTable systemic_report(MatrixRef scenarios, const std::vector<int>& depths,
                              const std::vector<double>& levels = {0.95, 0.99});

}  // namespace lobtail
