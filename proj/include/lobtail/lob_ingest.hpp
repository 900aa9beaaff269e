#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lobtail {

/// LOBSTER prices are USD multiplied by 10,000.
inline constexpr double kTicksPerUsd = 10000.0;

/// LOBSTER pads missing levels with +/-9,999,999,999.
inline constexpr std::int64_t kSentinelTicks = 9'999'999'999;

inline constexpr int kMaxDepth = 10;

struct Level {
    std::int64_t price_ticks = 0;
    std::int64_t size_shares = 0;

    friend bool operator==(const Level&, const Level&) = default;
};

/// One order-book state: asks ascending, bids descending, both of length depth.
struct DepthSnapshot {
    double time_s = 0.0;
    std::vector<Level> asks;
    std::vector<Level> bids;

    int depth() const noexcept { return static_cast<int>(asks.size()); }
    std::int64_t best_ask() const { return asks.front().price_ticks; }
    std::int64_t best_bid() const { return bids.front().price_ticks; }

    friend bool operator==(const DepthSnapshot&, const DepthSnapshot&) = default;
};

struct SnapshotSeries {
    std::string ticker;
    int depth = 0;
    std::vector<DepthSnapshot> snapshots;
    std::size_t dropped_burn_in = 0;
    std::size_t dropped_invalid = 0;

    std::size_t size() const noexcept { return snapshots.size(); }
    bool empty() const noexcept { return snapshots.empty(); }

    friend bool operator==(const SnapshotSeries&, const SnapshotSeries&) = default;
};

bool is_absent_price(std::int64_t price_ticks) noexcept;

/// True when the ordering, positivity and positive-spread invariants hold for
/// the first `depth` levels.
bool is_valid(const DepthSnapshot& s, int depth);
inline bool is_valid(const DepthSnapshot& s) { return is_valid(s, s.depth()); }

/// Parse a comma-separated order book whose rows are
/// `time, ask_p1, ask_s1, bid_p1, bid_s1, ask_p2, ...`, keeping the first
/// `depth` levels. Rows violating the snapshot invariants at that depth are
/// dropped and counted; malformed rows throw ParseError.
SnapshotSeries parse_orderbook(std::istream& in, int depth, std::string ticker = {});

/// Native LOBSTER layout: the order-book file has no time column and the
/// event time is the first column of the row-aligned message file.
SnapshotSeries parse_orderbook_with_messages(std::istream& book, std::istream& messages, int depth,
                                             std::string ticker = {});

SnapshotSeries load_orderbook(const std::filesystem::path& path, int depth, std::string ticker = {});

/// Emit the series in the same layout `parse_orderbook` reads.
void write_orderbook(const SnapshotSeries& series, std::ostream& out);

/// Drop the first ceil(fraction * N) snapshots.
SnapshotSeries trim_burn_in(const SnapshotSeries& series, double fraction);

/// Keep snapshots with start_s <= time_s <= end_s.
SnapshotSeries session_filter(const SnapshotSeries& series, double start_s, double end_s);

/// Restrict every snapshot to its first `depth` levels.
SnapshotSeries truncate_depth(const SnapshotSeries& series, int depth);

struct IngestOptions {
    int depth = kMaxDepth;
    double burn_in_fraction = 0.05;
    double session_start_s = 34200.0;
    double session_end_s = 57600.0;
    std::filesystem::path messages;  // set for the native LOBSTER layout
};

/// parse -> session window -> burn-in trim.
SnapshotSeries ingest(const std::filesystem::path& path, const std::string& ticker, const IngestOptions& opts);

}  // namespace lobtail
