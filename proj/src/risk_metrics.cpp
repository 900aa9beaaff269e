#include "lobtail/risk_metrics.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/errors.hpp"

#include <string>

namespace lobtail {
namespace {

void check_level(double level, const char* what)
{
    if (!(level > 0.0 && level <= 1.0))
        throw ConfigError(std::string(what) + " must lie in (0, 1], got " + csv::format(level));
}

void check_sample(VectorRef x)
{
    if (x.size() == 0) throw ConfigError("risk measure of an empty sample");
    if (!x.allFinite()) throw DataError("non-finite value in risk-measure sample");
}

// AVaR on an ascending sample, summed in sorted order.
double avar_sorted(const Vector& asc, double beta)
{
    const double q = stats::quantile_sorted(asc, beta);
    double s = 0.0;
    for (double v : asc) {
        if (v >= q) break;
        s += q - v;
    }
    return s / static_cast<double>(asc.size()) / beta - q;
}

struct Conditioned {
    Vector y;  // y over the distress set S
    double covar;
};

Conditioned condition(VectorRef x, VectorRef y, double q, double cond_level)
{
    check_sample(x);
    check_sample(y);
    if (x.size() != y.size())
        throw AlignmentError("conditioning and target samples differ in length (" + std::to_string(x.size()) +
                             " vs " + std::to_string(y.size()) + ")");
    check_level(q, "CoVaR level");
    const double c = cond_level < 0.0 ? q : cond_level;
    check_level(c, "conditioning level");
    const double threshold = stats::quantile(x, c);
    std::vector<double> ys;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] <= threshold) ys.push_back(y[i]);
    if (ys.empty()) throw RangeError("empty conditioning set at level " + csv::format(c));
    Conditioned out;
    out.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    out.covar = stats::quantile(out.y, q);
    return out;
}

}  // namespace

double var_q(VectorRef x, double u)
{
    check_sample(x);
    check_level(u, "VaR level");
    return -stats::quantile(x, u);
}

double avar(VectorRef x, double beta)
{
    check_sample(x);
    check_level(beta, "AVaR level");
    return avar_sorted(stats::sorted(x), beta);
}

RachevReport rachev_ratio(VectorRef x, double beta, double gamma)
{
    check_sample(x);
    check_level(beta, "Rachev beta");
    check_level(gamma, "Rachev gamma");
    RachevReport r;
    r.beta = beta;
    r.gamma = gamma;
    r.avar_gain = avar_sorted(stats::sorted(-x), beta);
    r.avar_loss = avar_sorted(stats::sorted(x), gamma);
    if (!(r.avar_loss > 0.0))
        throw DegenerateError("Rachev ratio undefined: AVaR of the loss tail is " + csv::format(r.avar_loss));
    r.ratio = r.avar_gain / r.avar_loss;
    return r;
}

double covar(VectorRef x, VectorRef y, double q, double cond_level)
{
    return condition(x, y, q, cond_level).covar;
}

double coetl(VectorRef x, VectorRef y, double q, double cond_level)
{
    const auto c = condition(x, y, q, cond_level);
    double s = 0.0;
    int m = 0;
    for (double v : c.y)
        if (v <= c.covar) {
            s += v;
            ++m;
        }
    if (m == 0) throw RangeError("empty doubly conditioned set at level " + csv::format(q));
    return s / m;
}

double coes(VectorRef x, VectorRef y, double q, double cond_level)
{
    const auto c = condition(x, y, q, cond_level);
    double s = 0.0;
    for (double v : c.y)
        if (v <= c.covar) s += v;
    return s / static_cast<double>(c.y.size());
}

Vector ewp_index(MatrixRef per_depth)
{
    if (per_depth.cols() == 0) throw ConfigError("index of zero depth columns");
    return per_depth.rowwise().mean();
}

SystemicTable systemic_report(MatrixRef scenarios, const std::vector<int>& depths, const std::vector<double>& levels)
{
    if (scenarios.cols() != static_cast<Eigen::Index>(depths.size()) + 1)
        throw AlignmentError("scenario matrix needs " + std::to_string(depths.size() + 1) + " columns, has " +
                             std::to_string(scenarios.cols()));
    for (double c : levels)
        if (!(c > 0.0 && c < 1.0)) throw ConfigError("systemic confidence level must lie in (0, 1)");
    SystemicTable t;
    t.levels = levels;
    const Vector index = scenarios.col(scenarios.cols() - 1);
    for (std::size_t d = 0; d < depths.size(); ++d) {
        const Vector x = scenarios.col(static_cast<Eigen::Index>(d));
        SystemicRow row;
        row.depth = depths[d];
        for (double c : levels) {
            const double q = 1.0 - c;
            row.cells.push_back({covar(x, index, q), coes(x, index, q), coetl(x, index, q)});
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace lobtail
