#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace musel {

using Vector = std::vector<double>;
using Index = std::size_t;
using IndexSet = std::vector<Index>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_finite(std::span<const double> values, const std::string& what)
{
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw std::invalid_argument(what + ": non-finite entry at position " + std::to_string(i));
        }
    }
}

/// Dense row-major matrix. Entries are checked for finiteness when built from data.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
        if (!std::isfinite(fill)) throw std::invalid_argument("Matrix: non-finite fill value");
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data))
    {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("Matrix: " + std::to_string(data_.size()) + " entries for a " +
                                 std::to_string(rows_) + "x" + std::to_string(cols_) + " matrix");
        }
        require_finite(data_, "Matrix");
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d)
    {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    Vector column(std::size_t j) const
    {
        Vector c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }

    const std::vector<double>& data() const noexcept { return data_; }

    Matrix transpose() const
    {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Vector matvec(const Matrix& a, std::span<const double> x)
{
    if (a.cols() != x.size()) throw DimensionError("matvec: dimension mismatch");
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
        out[i] = acc;
    }
    return out;
}

/// Aᵀx without forming the transpose.
inline Vector matvec_transposed(const Matrix& a, std::span<const double> x)
{
    if (a.rows() != x.size()) throw DimensionError("matvec_transposed: dimension mismatch");
    Vector out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j] * xi;
    }
    return out;
}

/// (1/scale) AᵀB, the building block of every Gram-type product here.
inline Matrix cross_product(const Matrix& a, const Matrix& b, double scale)
{
    if (a.rows() != b.rows()) throw DimensionError("cross_product: row counts differ");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ar = a.row(k);
        auto br = b.row(k);
        for (std::size_t i = 0; i < ar.size(); ++i) {
            const double aik = ar[i];
            if (aik == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < br.size(); ++j) orow[j] += aik * br[j];
        }
    }
    const double inv = 1.0 / scale;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (auto& v : out.row(i)) v *= inv;
    return out;
}

inline double norm1(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

inline double norm2_squared(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(norm2_squared(v)); }

inline double norm_inf(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

/// ℓq norm for q in [1, ∞]; pass q = +infinity for the max norm.
inline double norm_q(std::span<const double> v, double q)
{
    if (std::isinf(q)) return norm_inf(v);
    if (q == 1.0) return norm1(v);
    if (q == 2.0) return norm2(v);
    const double scale = norm_inf(v);
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) s += std::pow(std::abs(x) / scale, q);
    return scale * std::pow(s, 1.0 / q);
}

/// Largest absolute entry.
inline double max_abs(const Matrix& m) { return norm_inf(m.data()); }

inline Vector subtract(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw DimensionError("subtract: length mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline IndexSet support_of(std::span<const double> v, double threshold)
{
    IndexSet s;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > threshold) s.push_back(i);
    return s;
}

}  // namespace musel
