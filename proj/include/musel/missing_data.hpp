#pragma once

#include <musel/matrix.hpp>
#include <musel/random.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace musel {

/// Observed design with multiplicatively masked entries; missing entries are exact zeros.
struct MaskedDesign {
    Matrix z_tilde;
    std::optional<Vector> pi;   // per-column missing probabilities when known
    std::optional<Matrix> eta;  // 0/1 mask, simulation only
};

/// σ̂_j² together with the missing probabilities that produced it.
struct CompensationDiagonal {
    Vector sigma_hat_sq;
    Vector pi_used;
};

enum class PiMode { Pooled, PerColumn };

namespace detail {

inline void check_pi(std::span<const double> pi, std::size_t p, const char* who)
{
    if (pi.size() != p) throw DimensionError(std::string(who) + ": need one missing probability per column");
    for (std::size_t j = 0; j < p; ++j)
        if (!(pi[j] >= 0.0 && pi[j] < 1.0))
            throw std::invalid_argument(std::string(who) + ": missing probability of column " + std::to_string(j) +
                                        " must lie in [0, 1)");
}

}  // namespace detail

inline Vector uniform_pi(std::size_t p, double pi) { return Vector(p, pi); }

/// Keeps each X_ij with probability 1 − π_j, independently, from a seeded generator.
inline MaskedDesign apply_mask(const Matrix& x, std::span<const double> pi, std::uint64_t seed)
{
    detail::check_pi(pi, x.cols(), "apply_mask");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    MaskedDesign out{x, Vector(pi.begin(), pi.end()), Matrix(x.rows(), x.cols(), 1.0)};
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (unif(rng) < pi[j]) {
                out.z_tilde(i, j) = 0.0;
                (*out.eta)(i, j) = 0.0;
            }
        }
    return out;
}

/// Z_ij = Z̃_ij / (1 − π_j).
inline Matrix rescale(const MaskedDesign& masked, std::span<const double> pi)
{
    const Matrix& zt = masked.z_tilde;
    detail::check_pi(pi, zt.cols(), "rescale");
    Matrix z = zt;
    for (std::size_t i = 0; i < zt.rows(); ++i)
        for (std::size_t j = 0; j < zt.cols(); ++j) z(i, j) = zt(i, j) / (1.0 - pi[j]);
    return z;
}

/// Empirical frequency of exact zeros: one pooled value, or one per column.
inline Vector estimate_pi(const MaskedDesign& masked, PiMode mode = PiMode::Pooled)
{
    const Matrix& zt = masked.z_tilde;
    const std::size_t n = zt.rows(), p = zt.cols();
    Vector zeros(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            if (zt(i, j) == 0.0) zeros[j] += 1.0;
    if (mode == PiMode::PerColumn) {
        for (auto& z : zeros) z /= static_cast<double>(n);
        return zeros;
    }
    double total = 0.0;
    for (double z : zeros) total += z;
    return {total / static_cast<double>(n * p)};
}

/// σ̂_j² = (1/n) Σ_i Z̃_ij² π_j / (1 − π_j)², an unbiased estimate of σ_j².
inline CompensationDiagonal sigma_hat(const MaskedDesign& masked, std::span<const double> pi)
{
    const Matrix& zt = masked.z_tilde;
    detail::check_pi(pi, zt.cols(), "sigma_hat");
    const std::size_t n = zt.rows(), p = zt.cols();
    Vector s(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) s[j] += zt(i, j) * zt(i, j);
    for (std::size_t j = 0; j < p; ++j) {
        const double q = 1.0 - pi[j];
        s[j] = s[j] / static_cast<double>(n) * pi[j] / (q * q);
    }
    return {std::move(s), Vector(pi.begin(), pi.end())};
}

/// σ_j² = (1/n) Σ_i X_ij² π_j / (1 − π_j), the variance of the rescaling noise.
inline Vector sigma_true(const Matrix& x, std::span<const double> pi)
{
    detail::check_pi(pi, x.cols(), "sigma_true");
    Vector s(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) s[j] += x(i, j) * x(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) s[j] = s[j] / static_cast<double>(x.rows()) * pi[j] / (1.0 - pi[j]);
    return s;
}

}  // namespace musel
