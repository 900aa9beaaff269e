#pragma once

#include "lobtail/stats.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lobtail::csv {

/// Shortest decimal form that round-trips to the same double; "nan"/"inf" for
/// non-finite values.
std::string format(double v);

std::vector<std::string> split(std::string_view line);
double to_double(std::string_view field);

/// Columns of a headed numeric CSV. Empty cells read as NaN.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(std::string_view name) const;
    Vector column_vector(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

/// Writes a header then rows; used for every plot-data file.
void write_columns(std::ostream& out, const std::vector<std::string>& header, const std::vector<Vector>& columns);

void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_binary(const std::filesystem::path& path);

}  // namespace lobtail::csv
