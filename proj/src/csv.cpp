#include "lobtail/csv.hpp"

#include "lobtail/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace lobtail::csv {

std::string format(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

std::vector<std::string> split(std::string_view line)
{
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(std::string_view field)
{
    if (field.empty() || field == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (field == "inf") return std::numeric_limits<double>::infinity();
    if (field == "-inf") return -std::numeric_limits<double>::infinity();
    double v{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw DataError("non-numeric CSV field '" + std::string(field) + "'");
    return v;
}

std::size_t Table::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw DataError("CSV has no column '" + std::string(name) + "'");
}

Vector Table::column_vector(std::string_view name) const
{
    const auto c = column(name);
    Vector v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) v[static_cast<Eigen::Index>(i)] = rows[i][c];
    return v;
}

Table read(std::istream& in)
{
    Table t;
    std::string line;
    if (!std::getline(in, line)) return t;
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split(line);
        if (fields.size() != t.header.size()) throw DataError("CSV row width differs from its header");
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(to_double(f));
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table read_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read(in);
}

void write_columns(std::ostream& out, const std::vector<std::string>& header, const std::vector<Vector>& columns)
{
    if (header.size() != columns.size()) throw ConfigError("CSV header/column count mismatch");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    const Eigen::Index n = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns)
        if (c.size() != n) throw ConfigError("CSV columns differ in length");
    for (Eigen::Index r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << format(columns[i][r]);
        out << '\n';
    }
}

// Layout: int64 rows, int64 cols, then column-major doubles (host byte order).
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix read_matrix_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::int64_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || dims[0] < 0 || dims[1] < 0) throw DataError("corrupt matrix header in " + path.string());
    Matrix m(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw DataError("truncated matrix file " + path.string());
    return m;
}

}  // namespace lobtail::csv
