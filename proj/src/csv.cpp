#include "lpvmpc/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lpvmpc::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

int Table::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

const std::vector<double>& Table::column(const std::string& name) const {
    int i = find(name);
    if (i < 0) throw std::runtime_error("csv: missing column '" + name + "'");
    return cols[static_cast<std::size_t>(i)];
}

Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");

    Table t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file '" + path + "'");
    t.names = split_line(line);
    t.cols.resize(t.names.size());

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++row;
        auto cells = split_line(line);
        if (cells.size() != t.names.size())
            throw std::runtime_error("csv: row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(t.names.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& s = cells[c];
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            // accept textual nan/inf so that validation layers can report them
            if (ec != std::errc{} || p != s.data() + s.size())
                throw std::runtime_error("csv: non-numeric cell '" + s + "' in column '" +
                                         t.names[c] + "', row " + std::to_string(row));
            t.cols[c].push_back(v);
        }
    }
    return t;
}

void write(const std::string& path, const Table& table) {
    for (const auto& c : table.cols)
        if (c.size() != table.rows())
            throw std::runtime_error("csv: unequal column lengths when writing '" + path + "'");

    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write '" + path + "'");
    for (std::size_t i = 0; i < table.names.size(); ++i)
        out << (i ? "," : "") << table.names[i];
    out << '\n';
    char buf[40];
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.cols.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", table.cols[c][r]);
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("csv: write failed for '" + path + "'");
}

}  // namespace lpvmpc::csv
