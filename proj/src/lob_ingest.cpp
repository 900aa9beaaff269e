#include "lobtail/lob_ingest.hpp"

#include "lobtail/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string_view>

namespace lobtail {
namespace {

std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t row, const char* what)
{
    field = trim(field);
    T value{};
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty())
        throw ParseError(row, std::string("non-numeric ") + what + " '" + std::string(field) + "'");
    return value;
}

std::int64_t parse_integer(std::string_view field, std::size_t row, const char* what)
{
    // LOBSTER writes integers, but tolerate "100.0"-style fields.
    field = trim(field);
    std::int64_t v{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec == std::errc{} && ptr == field.data() + field.size() && !field.empty()) return v;
    const double d = parse_number<double>(field, row, what);
    if (d != std::floor(d) || std::abs(d) > 9.2e18)
        throw ParseError(row, std::string("non-integer ") + what + " '" + std::string(field) + "'");
    return static_cast<std::int64_t>(d);
}

bool next_line(std::istream& in, std::string& line)
{
    while (std::getline(in, line)) {
        if (!trim(line).empty()) return true;
    }
    return false;
}

class RowParser {
public:
    RowParser(int depth, std::string ticker) { series_.depth = depth; series_.ticker = std::move(ticker); }

    /// `fields` are the 4*D level columns; `row` is 1-based.
    void add(double time_s, const std::vector<std::string_view>& fields, std::size_t first_level_col, std::size_t row)
    {
        const std::size_t level_cols = fields.size() - first_level_col;
        if (!expected_cols_) {
            if (level_cols == 0 || level_cols % 4 != 0)
                throw ParseError(row, "expected 4 columns per level, got " + std::to_string(level_cols));
            expected_cols_ = fields.size();
            if (static_cast<std::size_t>(series_.depth) * 4 > level_cols)
                throw ConfigError("requested depth " + std::to_string(series_.depth) + " exceeds the " +
                                  std::to_string(level_cols / 4) + " levels available");
        }
        if (fields.size() != *expected_cols_)
            throw ParseError(row, "expected " + std::to_string(*expected_cols_) + " columns, got " +
                                      std::to_string(fields.size()));
        if (!std::isfinite(time_s) || time_s < 0.0) throw ParseError(row, "invalid timestamp");
        if (!series_.snapshots.empty() && time_s < last_time_)
            throw ParseError(row, "timestamp decreases");

        DepthSnapshot snap;
        snap.time_s = time_s;
        snap.asks.reserve(static_cast<std::size_t>(series_.depth));
        snap.bids.reserve(static_cast<std::size_t>(series_.depth));
        // Parse every column so malformed rows are rejected even past the requested depth.
        for (std::size_t lvl = 0; lvl < level_cols / 4; ++lvl) {
            const std::size_t c = first_level_col + 4 * lvl;
            const Level ask{parse_integer(fields[c], row, "ask price"), parse_integer(fields[c + 1], row, "ask size")};
            const Level bid{parse_integer(fields[c + 2], row, "bid price"), parse_integer(fields[c + 3], row, "bid size")};
            if (static_cast<int>(lvl) < series_.depth) {
                snap.asks.push_back(ask);
                snap.bids.push_back(bid);
            }
        }
        if (!is_valid(snap, series_.depth)) {
            ++series_.dropped_invalid;
            return;
        }
        last_time_ = time_s;
        series_.snapshots.push_back(std::move(snap));
    }

    SnapshotSeries finish() && { return std::move(series_); }

private:
    SnapshotSeries series_;
    std::optional<std::size_t> expected_cols_;
    double last_time_ = 0.0;
};

void check_depth(int depth)
{
    if (depth < 1 || depth > kMaxDepth)
        throw ConfigError("depth must lie in [1, " + std::to_string(kMaxDepth) + "], got " + std::to_string(depth));
}

}  // namespace

bool is_absent_price(std::int64_t price_ticks) noexcept
{
    return price_ticks <= 0 || price_ticks >= kSentinelTicks || price_ticks <= -kSentinelTicks;
}

bool is_valid(const DepthSnapshot& s, int depth)
{
    if (depth < 1 || static_cast<int>(s.asks.size()) < depth || static_cast<int>(s.bids.size()) < depth) return false;
    for (int i = 0; i < depth; ++i) {
        const auto& a = s.asks[static_cast<std::size_t>(i)];
        const auto& b = s.bids[static_cast<std::size_t>(i)];
        if (is_absent_price(a.price_ticks) || is_absent_price(b.price_ticks)) return false;
        if (a.size_shares <= 0 || b.size_shares <= 0) return false;
        if (i > 0) {
            if (a.price_ticks <= s.asks[static_cast<std::size_t>(i - 1)].price_ticks) return false;
            if (b.price_ticks >= s.bids[static_cast<std::size_t>(i - 1)].price_ticks) return false;
        }
    }
    return s.asks.front().price_ticks > s.bids.front().price_ticks;
}

SnapshotSeries parse_orderbook(std::istream& in, int depth, std::string ticker)
{
    check_depth(depth);
    RowParser parser(depth, std::move(ticker));
    std::string line;
    std::size_t row = 0;
    while (next_line(in, line)) {
        ++row;
        const auto fields = split_csv(line);
        if ((fields.size() - 1) % 4 != 0 || fields.size() < 5)
            throw ParseError(row, "expected a time column plus 4 columns per level, got " +
                                      std::to_string(fields.size()) + " columns");
        parser.add(parse_number<double>(fields[0], row, "time"), fields, 1, row);
    }
    return std::move(parser).finish();
}

SnapshotSeries parse_orderbook_with_messages(std::istream& book, std::istream& messages, int depth, std::string ticker)
{
    check_depth(depth);
    RowParser parser(depth, std::move(ticker));
    std::string line;
    std::string msg;
    std::size_t row = 0;
    while (next_line(book, line)) {
        ++row;
        if (!next_line(messages, msg)) throw ParseError(row, "message file has fewer rows than the order book");
        const auto msg_fields = split_csv(msg);
        const auto fields = split_csv(line);
        parser.add(parse_number<double>(msg_fields[0], row, "message time"), fields, 0, row);
    }
    if (next_line(messages, msg)) throw ParseError(row + 1, "message file has more rows than the order book");
    return std::move(parser).finish();
}

SnapshotSeries load_orderbook(const std::filesystem::path& path, int depth, std::string ticker)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open order book file " + path.string());
    return parse_orderbook(in, depth, std::move(ticker));
}

void write_orderbook(const SnapshotSeries& series, std::ostream& out)
{
    char buf[64];
    for (const auto& s : series.snapshots) {
        const auto res = std::to_chars(buf, buf + sizeof buf, s.time_s);
        out.write(buf, res.ptr - buf);
        for (std::size_t i = 0; i < s.asks.size(); ++i) {
            out << ',' << s.asks[i].price_ticks << ',' << s.asks[i].size_shares << ',' << s.bids[i].price_ticks
                << ',' << s.bids[i].size_shares;
        }
        out << '\n';
    }
}

SnapshotSeries trim_burn_in(const SnapshotSeries& series, double fraction)
{
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("burn-in fraction must lie in [0, 1)");
    if (series.empty()) throw ConfigError("cannot trim the burn-in of an empty series");
    const auto n = series.size();
    // Guard against 0.05 * 100 evaluating to 5.000000000000001.
    const double raw = fraction * static_cast<double>(n);
    auto drop = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    drop = std::min(drop, n);
    SnapshotSeries out;
    out.ticker = series.ticker;
    out.depth = series.depth;
    out.dropped_invalid = series.dropped_invalid;
    out.dropped_burn_in = series.dropped_burn_in + drop;
    out.snapshots.assign(series.snapshots.begin() + static_cast<std::ptrdiff_t>(drop), series.snapshots.end());
    return out;
}

SnapshotSeries session_filter(const SnapshotSeries& series, double start_s, double end_s)
{
    if (!(start_s < end_s)) throw ConfigError("session window needs start < end");
    SnapshotSeries out;
    out.ticker = series.ticker;
    out.depth = series.depth;
    out.dropped_burn_in = series.dropped_burn_in;
    out.dropped_invalid = series.dropped_invalid;
    for (const auto& s : series.snapshots)
        if (s.time_s >= start_s && s.time_s <= end_s) out.snapshots.push_back(s);
    return out;
}

SnapshotSeries truncate_depth(const SnapshotSeries& series, int depth)
{
    check_depth(depth);
    if (depth > series.depth) throw ConfigError("cannot truncate to a depth larger than the series depth");
    SnapshotSeries out = series;
    out.depth = depth;
    for (auto& s : out.snapshots) {
        s.asks.resize(static_cast<std::size_t>(depth));
        s.bids.resize(static_cast<std::size_t>(depth));
    }
    return out;
}

SnapshotSeries ingest(const std::filesystem::path& path, const std::string& ticker, const IngestOptions& opts)
{
    SnapshotSeries raw;
    if (opts.messages.empty()) {
        raw = load_orderbook(path, opts.depth, ticker);
    } else {
        std::ifstream book(path);
        std::ifstream msgs(opts.messages);
        if (!book) throw ConfigError("cannot open order book file " + path.string());
        if (!msgs) throw ConfigError("cannot open message file " + opts.messages.string());
        raw = parse_orderbook_with_messages(book, msgs, opts.depth, ticker);
    }
    auto in_session = session_filter(raw, opts.session_start_s, opts.session_end_s);
    if (in_session.empty()) throw DataError("no snapshots inside the session window for " + ticker);
    return trim_burn_in(in_session, opts.burn_in_fraction);
}

}  // namespace lobtail
