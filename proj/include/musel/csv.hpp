#pragma once

#include <musel/matrix.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace musel {

/// Malformed numeric text; row and column are 1-based positions in the file.
class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& file, std::size_t row, std::size_t col, const std::string& what)
        : std::runtime_error(file + ": row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what),
          row_(row), col_(col)
    {
    }
    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_, col_;
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Comma-separated numbers; blank lines are ignored, every row must have the same width.
inline Matrix parse_csv(std::istream& in, const std::string& name = "csv", bool header = false)
{
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (header && line_no == 1) continue;
        if (detail::trim(line).empty()) continue;
        std::size_t col = 0, start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            const std::string field =
                detail::trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            ++col;
            double v = 0.0;
            const char* first = field.data();
            const char* last = first + field.size();
            if (!field.empty() && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
                throw CsvError(name, line_no, col, "not a finite number: '" + field + "'");
            data.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (rows == 0) cols = col;
        else if (col != cols)
            throw CsvError(name, line_no, std::min(col, cols) + 1,
                           "expected " + std::to_string(cols) + " fields, found " + std::to_string(col));
        ++rows;
    }
    if (rows == 0) throw CsvError(name, line_no + 1, 1, "no data");
    return Matrix(rows, cols, std::move(data));
}

inline Matrix read_csv(const std::string& path, bool header = false)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    return parse_csv(in, path, header);
}

/// A vector stored as one column or as one row.
inline Vector read_vector_csv(const std::string& path, bool header = false)
{
    const Matrix m = read_csv(path, header);
    if (m.cols() == 1 || m.rows() == 1) return m.data();
    throw std::runtime_error(path + ": expected a single row or column, found " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
}

inline void write_csv(std::ostream& os, const Matrix& m)
{
    char buf[32];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            os << buf;
        }
        os << '\n';
    }
}

/// Writes through a temporary file in the same directory and renames it into place, so a
/// failed command never leaves a partial file behind.
inline void write_file_atomic(const std::string& path, const std::string& content)
{
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(path + ": cannot open for writing");
        out << content;
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error(path + ": write failed");
        }
    }
    fs::rename(tmp, target);
}

}  // namespace musel
