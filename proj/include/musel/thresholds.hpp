#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace musel {

/// Noise levels and design moments feeding the threshold formulas.
struct NoiseParams {
    double gamma_xi = 1.0;  // response noise is γ_ξ-subgaussian
    double gamma_Xi = 1.0;  // design noise is γ_Ξ-subgaussian
    double gamma0 = 0.0;    // (γ₀, t₀)-subexponential constants of the noise products
    double t0 = 0.0;
    double m2 = 1.0;  // max_j (1/n) Σ_i X_ij²
    double m4 = 1.0;  // max_j (1/n) Σ_i X_ij⁴
    double epsilon = 0.05;
    std::size_t n = 1;
    std::size_t p = 1;

    void validate() const
    {
        if (!(gamma_xi > 0 && gamma_Xi > 0 && gamma0 > 0 && t0 > 0))
            throw std::invalid_argument("NoiseParams: gamma_xi, gamma_Xi, gamma0 and t0 must be positive");
        if (!(m2 >= 0 && m4 >= 0)) throw std::invalid_argument("NoiseParams: m2 and m4 must be nonnegative");
        if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("NoiseParams: epsilon must lie in (0, 1)");
        if (n == 0 || p == 0) throw std::invalid_argument("NoiseParams: n and p must be positive");
    }
};

/// γ₀ = 4γ_Ξ·max(γ_Ξ, γ_ξ): a conservative product-of-subgaussians constant.
inline double default_gamma0(double gamma_Xi, double gamma_xi) { return 4.0 * gamma_Xi * std::max(gamma_Xi, gamma_xi); }

/// t₀ = 1 / (4γ_Ξ·max(γ_Ξ, γ_ξ)).
inline double default_t0(double gamma_Xi, double gamma_xi) { return 1.0 / default_gamma0(gamma_Xi, gamma_xi); }

/// NoiseParams with γ₀ and t₀ filled from the defaults.
inline NoiseParams with_default_constants(NoiseParams p)
{
    p.gamma0 = default_gamma0(p.gamma_Xi, p.gamma_xi);
    p.t0 = default_t0(p.gamma_Xi, p.gamma_xi);
    return p;
}

struct Thresholds {
    std::array<double, 5> delta{};
    double b = 0.0;
    double mu_eps = 0.0;   // δ₁ + δ₄ + δ₅ + b
    double tau_eps = 0.0;  // δ₂ + δ₃
};

inline void check_epsilon(double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
}

/// δ̄(ε, N) = max(γ₀√(2log(N/ε)/n), 2log(N/ε)/(t₀n)); zero when N = 0 (nothing to bound).
inline double delta_bar(double epsilon, std::size_t count, double gamma0, double t0, std::size_t n)
{
    check_epsilon(epsilon);
    if (count == 0) return 0.0;
    const double l = std::log(static_cast<double>(count) / epsilon);
    const double dn = static_cast<double>(n);
    return std::max(gamma0 * std::sqrt(2.0 * l / dn), 2.0 * l / (t0 * dn));
}

/// δ₁…δ₅ for subgaussian noise with a deterministic design.
inline std::array<double, 5> subgaussian_deltas(const NoiseParams& prm)
{
    prm.validate();
    const double p = static_cast<double>(prm.p);
    const double n = static_cast<double>(prm.n);
    const double eps = prm.epsilon;
    std::array<double, 5> d{};
    d[0] = prm.gamma_Xi * std::sqrt(2.0 * prm.m2 * std::log(2.0 * p * p / eps) / n);
    d[1] = prm.gamma_xi * std::sqrt(2.0 * prm.m2 * std::log(2.0 * p / eps) / n);
    d[2] = delta_bar(eps, 2 * prm.p, prm.gamma0, prm.t0, prm.n);
    d[3] = delta_bar(eps, prm.p * (prm.p - 1), prm.gamma0, prm.t0, prm.n);
    d[4] = d[2];
    return d;
}

/// b(ε) = π*/(1−π*)² · √(m₄ log(2p/ε) / (2n)), the σ̂² deviation threshold under missingness.
inline double b_missing(double epsilon, double pi_star, double m4, std::size_t n, std::size_t p)
{
    check_epsilon(epsilon);
    if (!(pi_star >= 0.0 && pi_star < 1.0)) throw std::invalid_argument("b_missing: pi_star must lie in [0, 1)");
    const double q = 1.0 - pi_star;
    return pi_star / (q * q) *
           std::sqrt(m4 * std::log(2.0 * static_cast<double>(p) / epsilon) / (2.0 * static_cast<double>(n)));
}

inline Thresholds assemble_thresholds(const std::array<double, 5>& deltas, double b)
{
    Thresholds t;
    t.delta = deltas;
    t.b = b;
    t.mu_eps = deltas[0] + deltas[3] + deltas[4] + b;
    t.tau_eps = deltas[1] + deltas[2];
    return t;
}

/// ν(ε) = 2(μ(ε) + δ₁(ε))|θ*|₁ + 2τ(ε).
inline double nu_bound(const Thresholds& t, double delta1, double l1_theta_star)
{
    if (l1_theta_star < 0.0) throw std::invalid_argument("nu_bound: |theta*|_1 must be nonnegative");
    return 2.0 * (t.mu_eps + delta1) * l1_theta_star + 2.0 * t.tau_eps;
}

}  // namespace musel
