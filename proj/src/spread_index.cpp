#include "lobtail/spread_index.hpp"

#include "lobtail/csv.hpp"
#include "lobtail/errors.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace lobtail {
namespace {

double sweep_price(const std::vector<Level>& side, int depth, const char* name)
{
    if (depth < 1 || static_cast<std::size_t>(depth) > side.size())
        throw ConfigError(std::string(name) + ": depth outside the snapshot");
    std::int64_t value = 0;
    std::int64_t shares = 0;
    for (int i = 0; i < depth; ++i) {
        const auto& l = side[static_cast<std::size_t>(i)];
        value += l.price_ticks * l.size_shares;
        shares += l.size_shares;
    }
    if (shares <= 0) throw NumericalError(std::string(name) + ": zero total size");
    return static_cast<double>(value) / static_cast<double>(shares) / kTicksPerUsd;
}

}  // namespace

std::string_view to_string(IndexKind kind) noexcept
{
    return kind == IndexKind::Tmobbas ? "tmobbas" : "gmp";
}

IndexKind parse_index_kind(std::string_view name)
{
    if (name == "tmobbas" || name == "TMOBBAS") return IndexKind::Tmobbas;
    if (name == "gmp" || name == "GMP") return IndexKind::Gmp;
    throw ConfigError("unknown index kind '" + std::string(name) + "'");
}

double tmobap(const DepthSnapshot& s, int depth) { return sweep_price(s.asks, depth, "tmobap"); }
double tmobbp(const DepthSnapshot& s, int depth) { return sweep_price(s.bids, depth, "tmobbp"); }
double tmobbas(const DepthSnapshot& s, int depth) { return tmobap(s, depth) - tmobbp(s, depth); }
double gmp(const DepthSnapshot& s, int depth) { return 0.5 * (tmobap(s, depth) + tmobbp(s, depth)); }

double index_value(const DepthSnapshot& s, IndexKind kind, int depth)
{
    return kind == IndexKind::Tmobbas ? tmobbas(s, depth) : gmp(s, depth);
}

Vector log_returns(VectorRef values)
{
    if (values.size() < 2) throw ConfigError("log returns need at least two values");
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!(values[i] > 0.0))
            throw DomainError("log return of non-positive value " + csv::format(values[i]) + " at index " +
                              std::to_string(i));
    const Eigen::ArrayXd logs = values.array().log();
    return logs.tail(values.size() - 1) - logs.head(values.size() - 1);
}

IndexSeries build_index(const SnapshotSeries& series, IndexKind kind, int depth)
{
    IndexSeries out;
    out.ticker = series.ticker;
    out.depth = depth;
    out.kind = kind;
    const auto n = static_cast<Eigen::Index>(series.size());
    out.times.resize(n);
    out.values.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = series.snapshots[static_cast<std::size_t>(i)];
        out.times[i] = s.time_s;
        out.values[i] = index_value(s, kind, depth);
    }
    out.returns = n >= 2 ? log_returns(out.values) : Vector();
    return out;
}

EwpSeries build_ewp(const std::vector<Vector>& per_depth_returns, IndexKind kind)
{
    if (per_depth_returns.empty()) throw ConfigError("EWP needs at least one return series");
    const auto n = per_depth_returns.front().size();
    Vector sum = Vector::Zero(n);
    for (const auto& r : per_depth_returns) {
        if (r.size() != n) throw AlignmentError("EWP inputs do not share an event grid");
        sum += r;
    }
    return {kind, sum / static_cast<double>(per_depth_returns.size())};
}

Resampled resample_locf(VectorRef times, VectorRef values, double start_s, double end_s, double step_s)
{
    if (times.size() != values.size()) throw AlignmentError("times and values differ in length");
    if (!(step_s > 0.0) || !(end_s >= start_s)) throw ConfigError("invalid resampling grid");
    if (times.size() == 0) throw ConfigError("cannot resample an empty series");
    const auto m = static_cast<Eigen::Index>(std::floor((end_s - start_s) / step_s)) + 1;
    Resampled out{Vector(m), Vector(m)};
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
        const double t = start_s + static_cast<double>(k) * step_s;
        while (j + 1 < times.size() && times[j + 1] <= t) ++j;
        out.times[k] = t;
        // Before the first event there is nothing to carry forward.
        out.values[k] = times[0] <= t ? values[j] : std::nan("");
    }
    return out;
}

void write_index_csv(const IndexSeries& s, std::ostream& out)
{
    out << "time_s,value_usd,log_return\n";
    for (Eigen::Index i = 0; i < s.values.size(); ++i) {
        out << csv::format(s.times[i]) << ',' << csv::format(s.values[i]) << ',';
        if (i > 0) out << csv::format(s.returns[i - 1]);
        out << '\n';
    }
}

IndexSeries read_index_csv(std::istream& in)
{
    const auto table = csv::read(in);
    IndexSeries s;
    if (table.header.empty()) return s;
    s.times = table.column_vector("time_s");
    s.values = table.column_vector("value_usd");
    const Vector r = table.column_vector("log_return");
    s.returns = r.size() > 1 ? Vector(r.tail(r.size() - 1)) : Vector();
    return s;
}

}  // namespace lobtail
