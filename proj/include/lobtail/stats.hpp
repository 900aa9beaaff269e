#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>

namespace lobtail {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

namespace stats {

/// Two-sided 95% normal critical value, z_{0.025}.
inline constexpr double kZ975 = 1.959963984540054;

Vector sorted(VectorRef x);

/// Empirical p-quantile of an ascending sample using the (i - 0.5)/n
/// plotting-position convention with linear interpolation between order
/// statistics; clamps to the extreme order statistics outside [0.5/n, 1 - 0.5/n].
double quantile_sorted(VectorRef ascending, double p);
double quantile(VectorRef x, double p);

double mean(VectorRef x);
/// Population (1/n) central moment of order k.
double central_moment(VectorRef x, int k);
double sample_sd(VectorRef x);  // 1/(n-1)
double skewness(VectorRef x);
double excess_kurtosis_moment(VectorRef x);

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double chi2_cdf(double x, double dof);
double chi2_quantile(double p, double dof);

struct LjungBox {
    double statistic;
    int lags;
    double p_value;
};

LjungBox ljung_box(VectorRef x, int lags);

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <typename Cdf>
double ks_distance(VectorRef x, Cdf&& cdf)
{
    const Vector s = sorted(x);
    const auto n = static_cast<double>(s.size());
    double d = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double f = cdf(s[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// Spearman rank correlation (average ranks for ties).
double spearman(VectorRef x, VectorRef y);
double pearson(VectorRef x, VectorRef y);

}  // namespace stats
}  // namespace lobtail
