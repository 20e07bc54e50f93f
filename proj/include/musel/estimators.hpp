#pragma once

#include <musel/core_model.hpp>
#include <musel/lp.hpp>
#include <musel/matrix.hpp>
#include <musel/missing_data.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace musel {

struct SelectorConfig {
    double mu = 0.0;
    double tau = 0.0;
    /// Diagonal D̂ (entries σ̂_j²); absent for the plain MU selector.
    std::optional<Vector> compensation;
    Domain domain = Domain::NonnegativeOrthant;
    double nonzero_threshold = 1e-8;
    LpOptions lp;
    std::size_t fixed_point_max_rounds = 50;
    double fixed_point_tol = 1e-8;

    void validate(std::size_t p) const
    {
        if (!(std::isfinite(mu) && mu >= 0.0)) throw std::invalid_argument("SelectorConfig: mu must be finite and >= 0");
        if (!(std::isfinite(tau) && tau >= 0.0))
            throw std::invalid_argument("SelectorConfig: tau must be finite and >= 0");
        if (compensation) {
            if (compensation->size() != p) throw DimensionError("SelectorConfig: compensation has wrong length");
            for (std::size_t j = 0; j < p; ++j)
                if (!(std::isfinite((*compensation)[j]) && (*compensation)[j] >= 0.0))
                    throw std::invalid_argument("SelectorConfig: compensation entry " + std::to_string(j) +
                                                " must be finite and >= 0");
        }
    }
};

struct Estimate {
    Vector theta;
    double l1_norm = 0.0;
    IndexSet support;
    /// Witness u of the pair formulation, set when θ̂ is feasible.
    std::optional<Vector> pair_u;
    LpStatus status = LpStatus::IterationLimit;
    std::size_t iterations = 0;
    std::size_t rounds = 0;
    /// Set when the free-domain radius iteration stopped without a certificate.
    bool warning = false;
    /// Missing probability actually used (missing-data selectors only).
    std::optional<double> pi_used;
};

/// The linear data of every selector here: the constraint reads
/// |c − Aθ|_∞ ≤ μ|θ|₁ + τ with c = (1/n)Zᵀy and A = (1/n)ZᵀZ − D̂.
struct SelectorSystem {
    Vector c;
    Matrix a;

    std::size_t dim() const noexcept { return c.size(); }

    /// N(θ) = (1/n)Zᵀ(y − Zθ) + D̂θ.
    Vector residual(std::span<const double> theta) const
    {
        Vector at = matvec(a, theta);
        Vector n(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) n[i] = c[i] - at[i];
        return n;
    }
};

inline SelectorSystem make_system(const Matrix& z, std::span<const double> y, const std::optional<Vector>& dhat)
{
    if (z.rows() != y.size()) throw DimensionError("selector: rows of Z differ from length of y");
    if (z.rows() == 0 || z.cols() == 0) throw DimensionError("selector: empty design");
    require_finite(y, "selector response");
    if (dhat && dhat->size() != z.cols()) throw DimensionError("selector: compensation has wrong length");
    const double n = static_cast<double>(z.rows());
    SelectorSystem sys;
    sys.c = matvec_transposed(z, y);
    for (auto& v : sys.c) v /= n;
    sys.a = gram(z).matrix();
    if (dhat)
        for (std::size_t j = 0; j < z.cols(); ++j) sys.a(j, j) -= (*dhat)[j];
    return sys;
}

/// Pair formulation on R₊ᵖ: variables (θ ≥ 0, u free), objective Σθ_j, and the 4p rows
///   ±(c − Aθ + u) ≤ τ,   ±u − μΣθ ≤ 0.
inline LinearProgram build_cmu_lp(const SelectorSystem& sys, double mu, double tau)
{
    const std::size_t p = sys.dim();
    LinearProgram lp(2 * p);
    for (std::size_t j = 0; j < p; ++j) {
        lp.objective[j] = 1.0;
        lp.lower[p + j] = -kInf;
        lp.upper[p + j] = kInf;
    }
    for (std::size_t i = 0; i < p; ++i) {
        Vector up(2 * p, 0.0), down(2 * p, 0.0);
        for (std::size_t j = 0; j < p; ++j) {
            up[j] = -sys.a(i, j);
            down[j] = sys.a(i, j);
        }
        up[p + i] = 1.0;
        down[p + i] = -1.0;
        lp.add_leq(std::move(up), tau - sys.c[i]);
        lp.add_leq(std::move(down), tau + sys.c[i]);
    }
    for (std::size_t i = 0; i < p; ++i) {
        Vector up(2 * p, 0.0), down(2 * p, 0.0);
        for (std::size_t j = 0; j < p; ++j) up[j] = down[j] = -mu;
        up[p + i] = 1.0;
        down[p + i] = -1.0;
        lp.add_leq(std::move(up), 0.0);
        lp.add_leq(std::move(down), 0.0);
    }
    return lp;
}

inline LinearProgram build_cmu_lp(const Matrix& z, std::span<const double> y, const SelectorConfig& config)
{
    config.validate(z.cols());
    if (config.domain != Domain::NonnegativeOrthant)
        throw std::invalid_argument("build_cmu_lp: only the nonnegative orthant is an exact LP; use the solvers");
    return build_cmu_lp(make_system(z, y, config.compensation), config.mu, config.tau);
}

/// Direct epigraph form on R₊ᵖ, p variables and 2p rows: ±(c − Aθ) − μΣθ ≤ τ.
inline LinearProgram build_direct_lp(const SelectorSystem& sys, double mu, double tau)
{
    const std::size_t p = sys.dim();
    LinearProgram lp(p);
    for (std::size_t j = 0; j < p; ++j) lp.objective[j] = 1.0;
    lp.ineq.reserve(2 * p);
    for (std::size_t i = 0; i < p; ++i) {
        Vector up(p), down(p);
        for (std::size_t j = 0; j < p; ++j) {
            up[j] = -sys.a(i, j) - mu;
            down[j] = sys.a(i, j) - mu;
        }
        lp.add_leq(std::move(up), tau - sys.c[i]);
        lp.add_leq(std::move(down), tau + sys.c[i]);
    }
    return lp;
}

/// Sign-split LP on Rᵖ for a fixed right-hand side: min Σ(θ⁺ + θ⁻) s.t. |c − A(θ⁺ − θ⁻)|_∞ ≤ bound.
inline LinearProgram build_fixed_bound_lp(const SelectorSystem& sys, double bound)
{
    const std::size_t p = sys.dim();
    LinearProgram lp(2 * p);
    for (std::size_t j = 0; j < 2 * p; ++j) lp.objective[j] = 1.0;
    for (std::size_t i = 0; i < p; ++i) {
        Vector up(2 * p), down(2 * p);
        for (std::size_t j = 0; j < p; ++j) {
            up[j] = -sys.a(i, j);
            up[p + j] = sys.a(i, j);
            down[j] = sys.a(i, j);
            down[p + j] = -sys.a(i, j);
        }
        lp.add_leq(std::move(up), bound - sys.c[i]);
        lp.add_leq(std::move(down), bound + sys.c[i]);
    }
    return lp;
}

/// Residual of the defining inequality: |N(θ)|_∞ − (μ|θ|₁ + τ).
inline double constraint_residual(const SelectorSystem& sys, std::span<const double> theta, double mu, double tau)
{
    return norm_inf(sys.residual(theta)) - (mu * norm1(theta) + tau);
}

namespace detail {

inline bool in_domain(std::span<const double> theta, Domain d, double tol)
{
    if (d == Domain::AllReals) return true;
    for (double v : theta)
        if (v < -tol) return false;
    return true;
}

inline Vector lift(const SelectorSystem& sys, std::span<const double> theta, double mu)
{
    const Vector n = sys.residual(theta);
    const double r = mu * norm1(theta);
    Vector u(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (std::abs(n[i]) <= r) u[i] = -n[i];
        else u[i] = n[i] > 0 ? -r : r;
    }
    return u;
}

inline Estimate finish(Vector theta, LpStatus status, std::size_t iterations, std::size_t rounds,
                       const SelectorSystem& sys, double mu, double tau, double threshold, double feas_tol)
{
    Estimate e;
    e.l1_norm = norm1(theta);
    e.support = support_of(theta, threshold);
    e.status = status;
    e.iterations = iterations;
    e.rounds = rounds;
    if ((status == LpStatus::Optimal || status == LpStatus::IterationLimit) &&
        constraint_residual(sys, theta, mu, tau) <= feas_tol)
        e.pair_u = lift(sys, theta, mu);
    e.theta = std::move(theta);
    return e;
}

}  // namespace detail

/// Minimises |θ|₁ over {θ ∈ Θ : |c − Aθ|_∞ ≤ μ|θ|₁ + τ}.
///
/// On R₊ᵖ this is one exact LP. On Rᵖ the radius r in μr + τ is fixed and the sign-split
/// LP solved, giving f(r). f is nonincreasing, the optimum is its unique fixed point r*, and
/// a solve at r ≤ r* returns a feasible point with f(r) ≥ r* while a solve at r ≥ r* gives
/// f(r) ≤ r*. The loop keeps a bracket [lo, hi] around r*, steps r ← f(r) and falls back to
/// bisection when the bracket stops shrinking. It is certified once the best feasible
/// norm is within fixed_point_tol of the lower end.
inline Estimate solve_system(const SelectorSystem& sys, const SelectorConfig& config)
{
    const double mu = config.mu, tau = config.tau;
    const std::size_t p = sys.dim();
    const double tol = config.lp.feas_tol;

    if (config.domain == Domain::NonnegativeOrthant) {
        const LpSolution sol = solve_lp(build_direct_lp(sys, mu, tau), config.lp);
        Vector theta = sol.status == LpStatus::Infeasible ? Vector(p, 0.0) : sol.x;
        return detail::finish(std::move(theta), sol.status, sol.iterations, 1, sys, mu, tau,
                              config.nonzero_threshold, tol);
    }

    const auto split = [p](const Vector& x) {
        Vector theta(p);
        for (std::size_t j = 0; j < p; ++j) theta[j] = x[j] - x[p + j];
        return theta;
    };

    std::size_t iterations = 0;
    double lo = 0.0, hi = kInf, r = 0.0, width_before = kInf, lo_solved = -1.0;
    std::optional<Vector> best;
    double best_norm = kInf;
    const std::size_t max_rounds = std::max<std::size_t>(1, config.fixed_point_max_rounds);
    for (std::size_t round = 1; round <= max_rounds; ++round) {
        const LpSolution sol = solve_lp(build_fixed_bound_lp(sys, mu * r + tau), config.lp);
        iterations += sol.iterations;
        if (sol.status == LpStatus::Infeasible) {
            if (mu == 0.0) return detail::finish(Vector(p, 0.0), LpStatus::Infeasible, iterations, round, sys, mu, tau,
                                                 config.nonzero_threshold, tol);
            lo = std::max(lo, r);
            lo_solved = r;
        } else if (sol.status != LpStatus::Optimal) {
            Estimate e = detail::finish(best ? *best : split(sol.x), sol.status, iterations, round, sys, mu, tau,
                                        config.nonzero_threshold, tol);
            e.warning = true;
            return e;
        } else {
            Vector theta = split(sol.x);
            const double v = norm1(theta);
            if (mu == 0.0)
                return detail::finish(std::move(theta), LpStatus::Optimal, iterations, round, sys, mu, tau,
                                      config.nonzero_threshold, tol);
            if (v >= r) {
                lo = std::max(lo, r);
                lo_solved = r;
                hi = std::min(hi, v);
            } else {
                hi = std::min(hi, r);
                lo = std::max(lo, v);
            }
            if (v < best_norm && constraint_residual(sys, theta, mu, tau) <= tol) {
                best_norm = v;
                best = std::move(theta);
            }
            if (best && best_norm - lo <= config.fixed_point_tol * std::max(1.0, lo))
                return detail::finish(std::move(*best), LpStatus::Optimal, iterations, round, sys, mu, tau,
                                      config.nonzero_threshold, tol);
            r = v;
        }
        const double width = hi - lo;
        const bool stalled = round % 2 == 0 && !(width <= 0.5 * width_before);
        if (round % 2 == 0) width_before = width;
        if (std::isinf(hi)) {
            r = r == 0.0 ? std::max(1.0, norm_inf(sys.c)) : 2.0 * std::max(r, lo);
        } else if (stalled || !(r < hi && (r > lo || (r == lo && r != lo_solved)))) {
            r = 0.5 * (lo + hi);
            // a bracket too narrow to split further leaves only the upper end to try
            if (!(r > lo && r < hi)) r = hi;
        }
    }
    Estimate e = detail::finish(best ? std::move(*best) : Vector(p, 0.0),
                                best ? LpStatus::IterationLimit : LpStatus::Infeasible, iterations, max_rounds, sys, mu,
                                tau, config.nonzero_threshold, tol);
    e.warning = best.has_value();
    return e;
}

/// Compensated MU selector: requires D̂ in the configuration.
inline Estimate solve_compensated_mu(const Matrix& z, std::span<const double> y, const SelectorConfig& config)
{
    if (!config.compensation)
        throw std::invalid_argument("solve_compensated_mu: compensation diagonal missing (use solve_mu_selector)");
    config.validate(z.cols());
    return solve_system(make_system(z, y, config.compensation), config);
}

/// MU selector: the compensated selector with D̂ = 0.
inline Estimate solve_mu_selector(const Matrix& z, std::span<const double> y, const SelectorConfig& config)
{
    SelectorConfig c = config;
    c.compensation = Vector(z.cols(), 0.0);
    c.validate(z.cols());
    return solve_system(make_system(z, y, c.compensation), c);
}

/// Dantzig selector: μ = 0 and D̂ = 0.
inline Estimate solve_dantzig(const Matrix& z, std::span<const double> y, double tau, Domain domain,
                              const SelectorConfig& base = {})
{
    SelectorConfig c = base;
    c.mu = 0.0;
    c.tau = tau;
    c.domain = domain;
    c.compensation = Vector(z.cols(), 0.0);
    return solve_compensated_mu(z, y, c);
}

/// How the missing probability is supplied to the missing-data selector.
struct MissingPi {
    std::optional<double> known;  // absent: pooled empirical estimate
};

namespace detail {

inline void reject_empty_columns(const Matrix& zt)
{
    for (std::size_t j = 0; j < zt.cols(); ++j) {
        bool all_zero = true;
        for (std::size_t i = 0; i < zt.rows() && all_zero; ++i) all_zero = zt(i, j) == 0.0;
        if (all_zero) throw std::invalid_argument("missing-data selector: column " + std::to_string(j) + " is entirely missing");
    }
}

inline double resolve_pi(const MaskedDesign& masked, const MissingPi& pi)
{
    const double v = pi.known ? *pi.known : estimate_pi(masked, PiMode::Pooled)[0];
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("missing-data selector: missing probability must be in [0, 1)");
    return v;
}

}  // namespace detail

/// Selector written directly on the masked design Z̃:
///   |(1/n)Z̃ᵀ(y(1−π̂) − Z̃θ) + D̃θ|_∞ ≤ μ̃|θ|₁ + τ̃,
/// with D̃ = (1−π̂)²σ̂², μ̃ = (1−π̂)²μ and τ̃ = (1−π̂)²τ, so that μ, τ keep the meaning they
/// have on the rescaled design and, for π̂ = π, the feasible set equals the rescaled one.
inline Estimate solve_missing_data_cmu(const Matrix& z_tilde, std::span<const double> y, const MissingPi& pi,
                                       const SelectorConfig& config)
{
    detail::reject_empty_columns(z_tilde);
    config.validate(z_tilde.cols());
    const MaskedDesign masked{z_tilde, std::nullopt, std::nullopt};
    const double pi_hat = detail::resolve_pi(masked, pi);
    const std::size_t p = z_tilde.cols();
    const double q2 = (1.0 - pi_hat) * (1.0 - pi_hat);
    const CompensationDiagonal d = sigma_hat(masked, uniform_pi(p, pi_hat));
    Vector dtilde(p);
    for (std::size_t j = 0; j < p; ++j) dtilde[j] = q2 * d.sigma_hat_sq[j];
    Vector yscaled(y.begin(), y.end());
    for (auto& v : yscaled) v *= (1.0 - pi_hat);
    SelectorConfig c = config;
    c.mu = q2 * config.mu;
    c.tau = q2 * config.tau;
    c.compensation = dtilde;
    Estimate e = solve_system(make_system(z_tilde, yscaled, dtilde), c);
    e.pi_used = pi_hat;
    return e;
}

/// Known-π path: rescale Z̃ → Z, compensate with σ̂², then the compensated selector.
inline Estimate solve_missing_data_rescaled(const Matrix& z_tilde, std::span<const double> y, const MissingPi& pi,
                                            const SelectorConfig& config)
{
    detail::reject_empty_columns(z_tilde);
    const MaskedDesign masked{z_tilde, std::nullopt, std::nullopt};
    const double pi_hat = detail::resolve_pi(masked, pi);
    const Vector pis = uniform_pi(z_tilde.cols(), pi_hat);
    SelectorConfig c = config;
    c.compensation = sigma_hat(masked, pis).sigma_hat_sq;
    Estimate e = solve_compensated_mu(rescale(masked, pis), y, c);
    e.pi_used = pi_hat;
    return e;
}

struct FeasibilityReport {
    double residual = 0.0;
    bool feasible = false;
};

/// Membership of θ in A(μ, τ): residual = |N(θ)|_∞ − (μ|θ|₁ + τ).
inline FeasibilityReport feasibility_check(std::span<const double> theta, const Matrix& z, std::span<const double> y,
                                           const SelectorConfig& config)
{
    if (theta.size() != z.cols()) throw DimensionError("feasibility_check: theta has wrong length");
    const SelectorSystem sys = make_system(z, y, config.compensation);
    FeasibilityReport r;
    r.residual = constraint_residual(sys, theta, config.mu, config.tau);
    r.feasible = r.residual <= config.lp.feas_tol && detail::in_domain(theta, config.domain, config.lp.feas_tol);
    return r;
}

/// The u of the pair formulation for a feasible θ: −N clipped to the box of radius μ|θ|₁.
inline Vector lift_to_pair(std::span<const double> theta, const Matrix& z, std::span<const double> y,
                           const SelectorConfig& config)
{
    const FeasibilityReport f = feasibility_check(theta, z, y, config);
    if (!f.feasible) throw std::invalid_argument("lift_to_pair: theta is not in the feasible set");
    return detail::lift(make_system(z, y, config.compensation), theta, config.mu);
}

/// (θ, u) ∈ W(μ, τ) up to tol.
inline bool in_pair_set(std::span<const double> theta, std::span<const double> u, const Matrix& z,
                        std::span<const double> y, const SelectorConfig& config, double tol = 1e-9)
{
    const SelectorSystem sys = make_system(z, y, config.compensation);
    Vector n = sys.residual(theta);
    for (std::size_t i = 0; i < n.size(); ++i) n[i] += u[i];
    return norm_inf(n) <= config.tau + tol && norm_inf(u) <= config.mu * norm1(theta) + tol &&
           detail::in_domain(theta, config.domain, tol);
}

}  // namespace musel
