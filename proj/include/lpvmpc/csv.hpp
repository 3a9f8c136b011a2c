#pragma once

#include <string>
#include <vector>

namespace lpvmpc::csv {

/// Column-oriented numeric table with a named header row.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;

    std::size_t rows() const { return cols.empty() ? 0 : cols.front().size(); }

    /// Index of a column, -1 if absent.
    int find(const std::string& name) const;

    /// Column by name; throws naming the missing column.
    const std::vector<double>& column(const std::string& name) const;
};

/// Parse a comma-separated numeric file with a header row. Throws on ragged
/// rows and non-numeric cells, naming the offending column and 1-based data row.
Table read(const std::string& path);

/// Write with full double round-trip precision (%.17g). Columns must be equal length.
void write(const std::string& path, const Table& table);

}  // namespace lpvmpc::csv
