#pragma once

#include "lobtail/lob_ingest.hpp"
#include "lobtail/stats.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lobtail {

enum class IndexKind { Tmobbas, Gmp };

std::string_view to_string(IndexKind kind) noexcept;
IndexKind parse_index_kind(std::string_view name);

// Volume-weighted sweep prices over the first `depth` levels, in USD.
double tmobap(const DepthSnapshot& s, int depth);
double tmobbp(const DepthSnapshot& s, int depth);
inline double tmobap(const DepthSnapshot& s) { return tmobap(s, s.depth()); }
inline double tmobbp(const DepthSnapshot& s) { return tmobbp(s, s.depth()); }

/// Total-market-order-book bid-ask spread: tmobap - tmobbp.
double tmobbas(const DepthSnapshot& s, int depth);
inline double tmobbas(const DepthSnapshot& s) { return tmobbas(s, s.depth()); }

/// Global mid-price: (tmobap + tmobbp) / 2.
double gmp(const DepthSnapshot& s, int depth);
inline double gmp(const DepthSnapshot& s) { return gmp(s, s.depth()); }

double index_value(const DepthSnapshot& s, IndexKind kind, int depth);

/// r[i] = ln v[i+1] - ln v[i]. Throws DomainError naming the first
/// non-positive value.
Vector log_returns(VectorRef values);

struct IndexSeries {
    std::string ticker;
    int depth = 0;
    IndexKind kind = IndexKind::Tmobbas;
    Vector times;
    Vector values;   // USD
    Vector returns;  // size values.size() - 1
};

IndexSeries build_index(const SnapshotSeries& series, IndexKind kind, int depth);

struct EwpSeries {
    IndexKind kind = IndexKind::Tmobbas;
    Vector returns;
};

/// Element-wise mean of per-depth log returns sharing one event grid.
EwpSeries build_ewp(const std::vector<Vector>& per_depth_returns, IndexKind kind);

/// Last-observation-carried-forward sampling on a fixed grid start, start+step, ...
/// Diagnostic only; the analysis pipeline works event to event.
struct Resampled {
    Vector times;
    Vector values;
};
Resampled resample_locf(VectorRef times, VectorRef values, double start_s, double end_s, double step_s);

/// Columns: time_s, value_usd, log_return (empty in the first row).
void write_index_csv(const IndexSeries& s, std::ostream& out);
IndexSeries read_index_csv(std::istream& in);

}  // namespace lobtail
