#pragma once

#include <musel/core_model.hpp>
#include <musel/estimators.hpp>
#include <musel/lp.hpp>
#include <musel/matrix.hpp>
#include <musel/missing_data.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace musel {

/// Δ ∈ C_J  ⇔  |Δ_{Jᶜ}|₁ ≤ |Δ_J|₁.
inline bool in_cone(std::span<const double> delta, const IndexSet& j_set, double tol = 1e-12)
{
    double on = 0.0, off = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        if (k < j_set.size() && j_set[k] == i) {
            on += std::abs(delta[i]);
            ++k;
        } else {
            off += std::abs(delta[i]);
        }
    }
    return off <= on + tol;
}

/// Which normalisation a sensitivity refers to: |Δ|_q = 1, or Δ_k = 1.
struct NormSpec {
    enum class Type { Lq, Coordinate };
    Type type = Type::Lq;
    double q = kInf;
    std::size_t k = 0;

    static NormSpec lq(double q) { return {Type::Lq, q, 0}; }
    static NormSpec coordinate(std::size_t k) { return {Type::Coordinate, 0.0, k}; }
    bool is_coordinate() const noexcept { return type == Type::Coordinate; }
};

enum class SensitivityKind { Exact, LowerBound, BruteForceApprox };

inline const char* to_string(SensitivityKind k)
{
    switch (k) {
    case SensitivityKind::Exact: return "Exact";
    case SensitivityKind::LowerBound: return "LowerBound";
    case SensitivityKind::BruteForceApprox: return "BruteForceApprox";
    }
    return "?";
}

struct SensitivityResult {
    double value = 0.0;
    SensitivityKind kind = SensitivityKind::LowerBound;
    std::optional<Vector> certificate;
    std::size_t s = 1;
    NormSpec norm;
    std::size_t lp_count = 0;
    /// Independent cross-check value when one was computed.
    std::optional<double> crosscheck;
};

class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SensitivityOptions {
    /// Maximum number of LPs an exact enumeration may solve.
    std::size_t max_lps = 100000;
    /// κ₁ is cross-checked by full orthant enumeration when p is at most this.
    std::size_t one_crosscheck_max_p = 4;
    /// Enumerate every |J| ≤ s instead of only |J| = s.
    bool all_subset_sizes = false;
    /// κ_k* beyond the budget: return the κ_∞ lower bound instead of throwing.
    bool star_fallback = true;
    LpOptions lp;
};

namespace detail {

inline double binomial(std::size_t n, std::size_t k)
{
    if (k > n) return 0.0;
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

inline void check_s(const GramMatrix& psi, std::size_t s)
{
    if (s == 0 || s > psi.dim()) throw std::invalid_argument("sensitivity: s must lie in [1, p]");
}

template <class F>
void for_each_cone_subset(std::size_t p, std::size_t s, bool all_sizes, F&& f)
{
    for (std::size_t size = all_sizes ? 1 : s; size <= s; ++size) for_each_subset(p, size, f);
}

// Layout of the J-based LPs: [Δ_J | a_{Jᶜ} | b_{Jᶜ} | t], Δ_{Jᶜ} = a − b.
struct ConeLayout {
    IndexSet j_set, jc;
    std::size_t s, m, nvars;

    ConeLayout(const IndexSet& j, std::size_t p) : j_set(j), jc(complement(j, p)), s(j.size()), m(p - j.size())
    {
        nvars = s + 2 * m + 1;
    }
    std::size_t d(std::size_t a) const { return a; }
    std::size_t pos(std::size_t c) const { return s + c; }
    std::size_t neg(std::size_t c) const { return s + m + c; }
    std::size_t t() const { return s + 2 * m; }

    Vector delta(const Vector& x, std::size_t p) const
    {
        Vector out(p, 0.0);
        for (std::size_t a = 0; a < s; ++a) out[j_set[a]] = x[d(a)];
        for (std::size_t c = 0; c < m; ++c) out[jc[c]] = x[pos(c)] - x[neg(c)];
        return out;
    }
};

// Rows ±ΨΔ − t ≤ 0 for the cone layout.
inline void add_sup_rows(LinearProgram& lp, const ConeLayout& L, const GramMatrix& psi)
{
    const std::size_t p = psi.dim();
    for (std::size_t i = 0; i < p; ++i) {
        Vector up(L.nvars, 0.0);
        for (std::size_t a = 0; a < L.s; ++a) up[L.d(a)] = psi(i, L.j_set[a]);
        for (std::size_t c = 0; c < L.m; ++c) {
            up[L.pos(c)] = psi(i, L.jc[c]);
            up[L.neg(c)] = -psi(i, L.jc[c]);
        }
        Vector down(L.nvars);
        for (std::size_t v = 0; v < L.nvars; ++v) down[v] = -up[v];
        up[L.t()] = -1.0;
        down[L.t()] = -1.0;
        lp.add_leq(std::move(up), 0.0);
        lp.add_leq(std::move(down), 0.0);
    }
}

// Σ_{Jᶜ}(a + b) − Σ_J σ_jΔ_j ≤ 0.
inline Vector mass_row(const ConeLayout& L, const std::vector<int>& sigma)
{
    Vector row(L.nvars, 0.0);
    for (std::size_t a = 0; a < L.s; ++a) row[L.d(a)] = -sigma[a];
    for (std::size_t c = 0; c < L.m; ++c) row[L.pos(c)] = row[L.neg(c)] = 1.0;
    return row;
}

inline std::vector<int> sign_pattern(std::size_t bits, std::size_t len)
{
    std::vector<int> s(len);
    for (std::size_t a = 0; a < len; ++a) s[a] = (bits >> a) & 1U ? -1 : 1;
    return s;
}

inline double sup_norm_product(const GramMatrix& psi, std::span<const double> delta)
{
    return norm_inf(matvec(psi.matrix(), delta));
}

}  // namespace detail

/// |ΨΔ|_∞ / |Δ|_q (or / Δ_k): the value a certificate attains.
inline double certificate_value(const GramMatrix& psi, std::span<const double> delta, const NormSpec& norm)
{
    const double num = detail::sup_norm_product(psi, delta);
    const double den = norm.is_coordinate() ? delta[norm.k] : norm_q(delta, norm.q);
    return num / den;
}

/// Exact κ_∞(s) by LP enumeration over J (|J| = s), sign patterns on J and the anchor
/// coordinate k with Δ_k = 1, |Δ|_∞ ≤ 1. The global sign flip Δ → −Δ is used to fix the
/// anchor sign.
inline SensitivityResult kappa_inf_exact(const GramMatrix& psi, std::size_t s, const SensitivityOptions& opt = {})
{
    detail::check_s(psi, s);
    const std::size_t p = psi.dim();
    const double budget = detail::binomial(p, s) * std::pow(2.0, static_cast<double>(s)) * 2.0 * static_cast<double>(p);
    if (budget > static_cast<double>(opt.max_lps))
        throw BudgetExceeded("kappa_inf_exact: enumeration needs " + std::to_string(static_cast<long long>(budget)) +
                             " LPs, above the budget; use kappa_lower_bound");

    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::lq(kInf);
    res.kind = SensitivityKind::Exact;
    res.value = kInf;

    detail::for_each_cone_subset(p, s, opt.all_subset_sizes, [&](const IndexSet& j_set) {
        const detail::ConeLayout L(j_set, p);
        for (std::size_t bits = 0; bits < (std::size_t{1} << L.s); ++bits) {
            const auto sigma = detail::sign_pattern(bits, L.s);
            for (std::size_t k = 0; k < p; ++k) {
                LinearProgram lp(L.nvars);
                lp.objective[L.t()] = 1.0;
                for (std::size_t a = 0; a < L.s; ++a) {
                    lp.lower[L.d(a)] = sigma[a] > 0 ? 0.0 : -1.0;
                    lp.upper[L.d(a)] = sigma[a] > 0 ? 1.0 : 0.0;
                }
                for (std::size_t c = 0; c < L.m; ++c) {
                    lp.upper[L.pos(c)] = 1.0;
                    lp.upper[L.neg(c)] = 1.0;
                }
                bool skip = false;
                for (std::size_t a = 0; a < L.s; ++a)
                    if (j_set[a] == k) {
                        if (sigma[a] < 0) skip = true;
                        lp.lower[L.d(a)] = lp.upper[L.d(a)] = 1.0;
                    }
                for (std::size_t c = 0; c < L.m; ++c)
                    if (L.jc[c] == k) {
                        lp.lower[L.pos(c)] = lp.upper[L.pos(c)] = 1.0;
                        lp.upper[L.neg(c)] = 0.0;
                    }
                if (skip) continue;
                detail::add_sup_rows(lp, L, psi);
                lp.add_leq(detail::mass_row(L, sigma), 0.0);
                const LpSolution sol = solve_lp(lp, opt.lp);
                ++res.lp_count;
                if (sol.status == LpStatus::Optimal && sol.objective_value < res.value) {
                    res.value = sol.objective_value;
                    res.certificate = L.delta(sol.x, p);
                }
            }
        }
    });
    res.value = std::max(res.value, 0.0);
    return res;
}

namespace detail {

// Exact ℓ1 sensitivity by enumerating full orthants: on an orthant |Δ|₁ = σᵀΔ is linear.
inline SensitivityResult kappa_one_orthants(const GramMatrix& psi, std::size_t s, const SensitivityOptions& opt)
{
    const std::size_t p = psi.dim();
    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::lq(1.0);
    res.kind = SensitivityKind::Exact;
    res.value = kInf;
    for_each_cone_subset(p, s, opt.all_subset_sizes, [&](const IndexSet& j_set) {
        std::vector<char> in_j(p, 0);
        for (auto j : j_set) in_j[j] = 1;
        for (std::size_t bits = 0; bits < (std::size_t{1} << (p - 1)); ++bits) {
            const auto sigma = sign_pattern(bits << 1, p);
            LinearProgram lp(p + 1);
            lp.objective[p] = 1.0;
            for (std::size_t j = 0; j < p; ++j) {
                lp.lower[j] = sigma[j] > 0 ? 0.0 : -kInf;
                lp.upper[j] = sigma[j] > 0 ? kInf : 0.0;
            }
            for (std::size_t i = 0; i < p; ++i) {
                Vector up(p + 1), down(p + 1);
                for (std::size_t j = 0; j < p; ++j) {
                    up[j] = psi(i, j);
                    down[j] = -psi(i, j);
                }
                up[p] = down[p] = -1.0;
                lp.add_leq(std::move(up), 0.0);
                lp.add_leq(std::move(down), 0.0);
            }
            Vector norm(p + 1, 0.0), cone(p + 1, 0.0);
            for (std::size_t j = 0; j < p; ++j) {
                norm[j] = sigma[j];
                cone[j] = in_j[j] ? -sigma[j] : sigma[j];
            }
            lp.add_eq(std::move(norm), 1.0);
            lp.add_leq(std::move(cone), 0.0);
            const LpSolution sol = solve_lp(lp, opt.lp);
            ++res.lp_count;
            if (sol.status == LpStatus::Optimal && sol.objective_value < res.value) {
                res.value = sol.objective_value;
                res.certificate = Vector(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(p));
            }
        }
    });
    res.value = std::max(res.value, 0.0);
    return res;
}

}  // namespace detail

/// κ₁(s) from the sign-pattern-on-J LP with J-mass m and Jᶜ-mass f, m + f = 1, f ≤ m.
/// The split representation of Δ_{Jᶜ} may carry slack, so the value is a lower bound;
/// for p ≤ one_crosscheck_max_p it is compared with exact orthant enumeration and
/// promoted to Exact when the two agree within 1e-5.
inline SensitivityResult kappa_one(const GramMatrix& psi, std::size_t s, const SensitivityOptions& opt = {})
{
    detail::check_s(psi, s);
    const std::size_t p = psi.dim();
    const double budget = detail::binomial(p, s) * std::pow(2.0, static_cast<double>(s));
    if (budget > static_cast<double>(opt.max_lps))
        throw BudgetExceeded("kappa_one: enumeration needs " + std::to_string(static_cast<long long>(budget)) +
                             " LPs, above the budget");

    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::lq(1.0);
    res.kind = SensitivityKind::LowerBound;
    res.value = kInf;
    detail::for_each_cone_subset(p, s, opt.all_subset_sizes, [&](const IndexSet& j_set) {
        const detail::ConeLayout L(j_set, p);
        // σ and −σ give the same value; fix the first sign.
        for (std::size_t bits = 0; bits < (std::size_t{1} << (L.s - 1)); ++bits) {
            const auto sigma = detail::sign_pattern(bits << 1, L.s);
            LinearProgram lp(L.nvars);
            lp.objective[L.t()] = 1.0;
            for (std::size_t a = 0; a < L.s; ++a) {
                lp.lower[L.d(a)] = sigma[a] > 0 ? 0.0 : -kInf;
                lp.upper[L.d(a)] = sigma[a] > 0 ? kInf : 0.0;
            }
            detail::add_sup_rows(lp, L, psi);
            lp.add_leq(detail::mass_row(L, sigma), 0.0);
            Vector total(L.nvars, 0.0);
            for (std::size_t a = 0; a < L.s; ++a) total[L.d(a)] = sigma[a];
            for (std::size_t c = 0; c < L.m; ++c) total[L.pos(c)] = total[L.neg(c)] = 1.0;
            lp.add_eq(std::move(total), 1.0);
            const LpSolution sol = solve_lp(lp, opt.lp);
            ++res.lp_count;
            if (sol.status == LpStatus::Optimal && sol.objective_value < res.value) res.value = sol.objective_value;
        }
    });
    res.value = std::max(res.value, 0.0);

    if (p <= opt.one_crosscheck_max_p) {
        const SensitivityResult exact = detail::kappa_one_orthants(psi, s, opt);
        res.lp_count += exact.lp_count;
        res.crosscheck = exact.value;
        if (std::abs(exact.value - res.value) <= 1e-5) {
            res.kind = SensitivityKind::Exact;
            res.certificate = exact.certificate;
        }
    }
    return res;
}

/// κ_q(s) ≥ (2s)^{−1/q} κ_∞(s), with 1/∞ = 0.
inline double kappa_q_from_inf(double kappa_inf, std::size_t s, double q)
{
    if (!(q >= 1.0)) throw std::invalid_argument("kappa_q_from_inf: q must be in [1, inf]");
    if (std::isinf(q)) return kappa_inf;
    return std::pow(2.0 * static_cast<double>(s), -1.0 / q) * kappa_inf;
}

/// Lower bound on κ_∞(s) through {Δ_k = ±1, |Δ|_∞ ≤ 1, |Δ|₁ ≤ 2s}, one LP per k.
inline SensitivityResult kappa_lower_bound(const GramMatrix& psi, std::size_t s, const SensitivityOptions& opt = {})
{
    detail::check_s(psi, s);
    const std::size_t p = psi.dim();
    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::lq(kInf);
    res.kind = SensitivityKind::LowerBound;
    res.value = kInf;
    const detail::ConeLayout L(IndexSet{}, p);
    for (std::size_t k = 0; k < p; ++k) {
        LinearProgram lp(L.nvars);
        lp.objective[L.t()] = 1.0;
        for (std::size_t c = 0; c < p; ++c) {
            lp.upper[L.pos(c)] = 1.0;
            lp.upper[L.neg(c)] = 1.0;
        }
        lp.lower[L.pos(k)] = lp.upper[L.pos(k)] = 1.0;
        lp.upper[L.neg(k)] = 0.0;
        detail::add_sup_rows(lp, L, psi);
        Vector mass(L.nvars, 0.0);
        for (std::size_t c = 0; c < p; ++c) mass[L.pos(c)] = mass[L.neg(c)] = 1.0;
        lp.add_leq(std::move(mass), 2.0 * static_cast<double>(s));
        const LpSolution sol = solve_lp(lp, opt.lp);
        ++res.lp_count;
        if (sol.status == LpStatus::Optimal && sol.objective_value < res.value) res.value = sol.objective_value;
    }
    res.value = std::max(res.value, 0.0);
    return res;
}

/// Coordinate-wise sensitivity κ_k*(s): min over J, Δ ∈ C_J with Δ_k = 1 of |ΨΔ|_∞.
///
/// Within the LP budget every (J, sign pattern) piece is solved exactly; Δ is unbounded
/// there but the objective is bounded below by zero, so each LP has an optimum.
/// Beyond the budget the result is the valid bound κ_k* ≥ κ_∞ ≥ kappa_lower_bound.
inline SensitivityResult kappa_star(const GramMatrix& psi, std::size_t s, std::size_t k,
                                    const SensitivityOptions& opt = {})
{
    detail::check_s(psi, s);
    const std::size_t p = psi.dim();
    if (k >= p) throw std::invalid_argument("kappa_star: coordinate out of range");
    const double budget = detail::binomial(p, s) * std::pow(2.0, static_cast<double>(s));
    if (budget > static_cast<double>(opt.max_lps)) {
        if (!opt.star_fallback)
            throw BudgetExceeded("kappa_star: enumeration needs " + std::to_string(static_cast<long long>(budget)) +
                                 " LPs, above the budget; a lower bound is available");
        SensitivityResult lb = kappa_lower_bound(psi, s, opt);
        lb.norm = NormSpec::coordinate(k);
        return lb;
    }
    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::coordinate(k);
    res.kind = SensitivityKind::Exact;
    res.value = kInf;
    detail::for_each_cone_subset(p, s, opt.all_subset_sizes, [&](const IndexSet& j_set) {
        const detail::ConeLayout L(j_set, p);
        for (std::size_t bits = 0; bits < (std::size_t{1} << L.s); ++bits) {
            const auto sigma = detail::sign_pattern(bits, L.s);
            LinearProgram lp(L.nvars);
            lp.objective[L.t()] = 1.0;
            bool skip = false;
            for (std::size_t a = 0; a < L.s; ++a) {
                lp.lower[L.d(a)] = sigma[a] > 0 ? 0.0 : -kInf;
                lp.upper[L.d(a)] = sigma[a] > 0 ? kInf : 0.0;
                if (j_set[a] == k) {
                    if (sigma[a] < 0) skip = true;
                    lp.lower[L.d(a)] = lp.upper[L.d(a)] = 1.0;
                }
            }
            if (skip) continue;
            for (std::size_t c = 0; c < L.m; ++c)
                if (L.jc[c] == k) {
                    lp.lower[L.pos(c)] = lp.upper[L.pos(c)] = 1.0;
                    lp.upper[L.neg(c)] = 0.0;
                }
            detail::add_sup_rows(lp, L, psi);
            lp.add_leq(detail::mass_row(L, sigma), 0.0);
            const LpSolution sol = solve_lp(lp, opt.lp);
            ++res.lp_count;
            if (sol.status == LpStatus::Optimal && sol.objective_value < res.value) {
                res.value = sol.objective_value;
                res.certificate = L.delta(sol.x, p);
            }
        }
    });
    res.value = std::max(res.value, 0.0);
    return res;
}

/// Exact κ_q(s) for any q ≥ 1 on small p. On each piece (J, orthant) the set
/// {Δ ∈ C_J : |ΨΔ|_∞ ≤ 1} is a polytope and κ = 1 / max |Δ|_q over its vertices,
/// the maximum of a convex function being attained at a vertex. A piece containing a
/// nonzero Δ with ΨΔ = 0 gives κ = 0.
inline SensitivityResult kappa_q_vertex(const GramMatrix& psi, std::size_t s, double q, std::size_t max_p = 6,
                                        const SensitivityOptions& opt = {})
{
    detail::check_s(psi, s);
    const std::size_t p = psi.dim();
    if (p > max_p) throw BudgetExceeded("kappa_q_vertex: p is above the vertex-enumeration limit");
    if (!(q >= 1.0)) throw std::invalid_argument("kappa_q_vertex: q must be in [1, inf]");

    SensitivityResult res;
    res.s = s;
    res.norm = NormSpec::lq(q);
    res.kind = SensitivityKind::Exact;
    double best_norm = 0.0;  // max |Δ|_q over all pieces

    detail::for_each_cone_subset(p, s, opt.all_subset_sizes, [&](const IndexSet& j_set) {
        std::vector<char> in_j(p, 0);
        for (auto j : j_set) in_j[j] = 1;
        for (std::size_t bits = 0; bits < (std::size_t{1} << (p - 1)); ++bits) {
            const auto sigma = detail::sign_pattern(bits << 1, p);
            // Constraints g·Δ ≤ h.
            std::vector<Vector> g;
            Vector h;
            for (std::size_t j = 0; j < p; ++j) {
                Vector row(p, 0.0);
                row[j] = -sigma[j];
                g.push_back(row);
                h.push_back(0.0);
            }
            Vector cone(p);
            for (std::size_t j = 0; j < p; ++j) cone[j] = in_j[j] ? -sigma[j] : sigma[j];
            g.push_back(cone);
            h.push_back(0.0);
            for (std::size_t i = 0; i < p; ++i) {
                Vector up(p), down(p);
                for (std::size_t j = 0; j < p; ++j) {
                    up[j] = psi(i, j);
                    down[j] = -psi(i, j);
                }
                g.push_back(up);
                h.push_back(1.0);
                g.push_back(down);
                h.push_back(1.0);
            }

            // Recession check: max σᵀΔ over the piece with ΨΔ = 0 and σᵀΔ ≤ 1.
            {
                LinearProgram lp(p);
                for (std::size_t j = 0; j < p; ++j) {
                    lp.objective[j] = -sigma[j];
                    lp.lower[j] = sigma[j] > 0 ? 0.0 : -kInf;
                    lp.upper[j] = sigma[j] > 0 ? kInf : 0.0;
                }
                lp.add_leq(cone, 0.0);
                Vector nrm(p);
                for (std::size_t j = 0; j < p; ++j) nrm[j] = sigma[j];
                lp.add_leq(nrm, 1.0);
                for (std::size_t i = 0; i < p; ++i) {
                    Vector r(p);
                    for (std::size_t j = 0; j < p; ++j) r[j] = psi(i, j);
                    lp.add_eq(r, 0.0);
                }
                const LpSolution sol = solve_lp(lp, opt.lp);
                ++res.lp_count;
                if (sol.status == LpStatus::Optimal && -sol.objective_value > 1e-9) {
                    best_norm = kInf;
                    Vector d = sol.x;
                    res.certificate = d;
                    continue;
                }
            }

            const std::size_t nc = g.size();
            std::vector<std::size_t> pick(p);
            for (std::size_t i = 0; i < p; ++i) pick[i] = i;
            bool done = false;
            while (!done) {
                // Solve the p×p system of the active constraints.
                std::vector<double> m(p * (p + 1));
                for (std::size_t r = 0; r < p; ++r) {
                    for (std::size_t c = 0; c < p; ++c) m[r * (p + 1) + c] = g[pick[r]][c];
                    m[r * (p + 1) + p] = h[pick[r]];
                }
                bool singular = false;
                for (std::size_t c = 0; c < p && !singular; ++c) {
                    std::size_t piv = c;
                    for (std::size_t r = c + 1; r < p; ++r)
                        if (std::abs(m[r * (p + 1) + c]) > std::abs(m[piv * (p + 1) + c])) piv = r;
                    if (std::abs(m[piv * (p + 1) + c]) < 1e-12) {
                        singular = true;
                        break;
                    }
                    for (std::size_t t = 0; t <= p; ++t) std::swap(m[c * (p + 1) + t], m[piv * (p + 1) + t]);
                    for (std::size_t r = 0; r < p; ++r) {
                        if (r == c) continue;
                        const double f = m[r * (p + 1) + c] / m[c * (p + 1) + c];
                        for (std::size_t t = c; t <= p; ++t) m[r * (p + 1) + t] -= f * m[c * (p + 1) + t];
                    }
                }
                if (!singular) {
                    Vector v(p);
                    for (std::size_t r = 0; r < p; ++r) v[r] = m[r * (p + 1) + p] / m[r * (p + 1) + r];
                    bool feasible = true;
                    for (std::size_t c = 0; c < nc && feasible; ++c) {
                        double a = 0.0;
                        for (std::size_t j = 0; j < p; ++j) a += g[c][j] * v[j];
                        feasible = a <= h[c] + 1e-10 * std::max(1.0, norm_inf(v));
                    }
                    if (feasible) {
                        const double nv = norm_q(v, q);
                        if (nv > best_norm) {
                            best_norm = nv;
                            res.certificate = v;
                        }
                    }
                }
                detail::next_combination(pick, nc, done);
            }
        }
    });
    res.value = best_norm > 0.0 ? 1.0 / best_norm : kInf;
    if (std::isinf(best_norm)) res.value = 0.0;
    return res;
}

/// Ψ̂ = (1/n)ZᵀZ − D̂. May be indefinite.
inline GramMatrix empirical_gram(const Matrix& z, const CompensationDiagonal& dhat)
{
    if (dhat.sigma_hat_sq.size() != z.cols()) throw DimensionError("empirical_gram: D-hat has wrong length");
    Matrix g = gram(z).matrix();
    for (std::size_t j = 0; j < z.cols(); ++j) g(j, j) -= dhat.sigma_hat_sq[j];
    return GramMatrix(std::move(g));
}

/// A numeric bound; +∞ with vacuous = true when the denominator vanishes.
struct BoundValue {
    std::string label;
    double value = 0.0;
    bool vacuous = false;
};

inline BoundValue make_bound(std::string label, double num, double den)
{
    if (num == 0.0) return {std::move(label), 0.0, false};
    if (!(den > 0.0)) return {std::move(label), kInf, true};
    return {std::move(label), num / den, false};
}

struct Theorem1Report {
    std::vector<std::pair<double, BoundValue>> lq;               // (q, bound on |θ̂ − θ*|_q)
    std::vector<std::pair<std::size_t, BoundValue>> coordinate;  // (k, bound on |θ̂_k − θ*_k|)
    BoundValue prediction;                                       // bound on (1/n)|X(θ̂ − θ*)|₂²
};

/// Error bounds from ν(ε) and (possibly lower-bounded) sensitivities.
inline Theorem1Report theorem1_bounds(double nu, const std::vector<SensitivityResult>& kappas, double l1_theta_star)
{
    Theorem1Report r;
    std::optional<double> k1;
    for (const auto& k : kappas) {
        if (k.norm.is_coordinate()) {
            r.coordinate.emplace_back(k.norm.k, make_bound("coordinate", nu, k.value));
        } else {
            r.lq.emplace_back(k.norm.q, make_bound("lq", nu, k.value));
            if (k.norm.q == 1.0) k1 = k1 ? std::min(*k1, k.value) : k.value;
        }
    }
    const double slow = 2.0 * nu * l1_theta_star;
    r.prediction = {"prediction", slow, false};
    if (k1) {
        const BoundValue fast = make_bound("prediction", nu * nu, *k1);
        if (fast.value < slow) r.prediction = fast;
    }
    return r;
}

/// C(q) = 2^{−1/q−1/2} (1 + (q−1)^{−1/q})^{−1}.
inline double c_q(double q) { return std::pow(2.0, -1.0 / q - 0.5) / (1.0 + std::pow(q - 1.0, -1.0 / q)); }

/// Bounds under RE(s), RE(2s) and the coherence assumption; each entry names its source.
inline std::vector<BoundValue> theorem2_bounds(double nu, std::size_t s, double q, std::optional<double> kappa_re_s,
                                               std::optional<double> kappa_re_2s, std::optional<double> rho)
{
    const double ds = static_cast<double>(s);
    const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
    std::vector<BoundValue> out;
    if (kappa_re_s) {
        out.push_back(make_bound("RE(s): l1 error", 4.0 * nu * ds, *kappa_re_s));
        out.push_back(make_bound("RE(s): prediction error", 4.0 * nu * nu * ds, *kappa_re_s));
    }
    if (kappa_re_2s && q > 1.0 && q <= 2.0)
        out.push_back(make_bound("RE(2s): lq error", 4.0 * nu * std::pow(ds, inv_q), *kappa_re_2s));
    if (rho) {
        if (!(*rho < 1.0 / (2.0 * ds)))
            throw std::invalid_argument("theorem2_bounds: the coherence bound needs rho < 1/(2s); got rho = " +
                                        std::to_string(*rho) + ", 1/(2s) = " + std::to_string(1.0 / (2.0 * ds)));
        out.push_back(make_bound("C: lq error", std::pow(2.0 * ds, inv_q) * nu, 1.0 - 2.0 * *rho * ds));
    }
    return out;
}

struct ConfidenceReport {
    std::size_t s_used = 0;
    double l1_theta_hat = 0.0;
    /// (1 − μ/κ̂₁)₊.
    double shrink = 0.0;
    std::vector<std::pair<double, BoundValue>> lq;
    /// (k, radius) with intervals θ̂_k ± radius.
    std::vector<std::pair<std::size_t, BoundValue>> coordinate;
    std::vector<std::pair<double, double>> intervals;
};

/// Data-driven radii 2(μ|θ̂|₁ + τ) / (κ̂ (1 − μ/κ̂₁)₊). The κ̂ may be computed for any
/// s' ≥ s; s_used records it.
inline ConfidenceReport theorem3_ci(const Estimate& theta_hat, double mu_eps, double tau_eps,
                                    const std::vector<SensitivityResult>& kappas_hat, double kappa_hat_one)
{
    ConfidenceReport r;
    r.l1_theta_hat = norm1(theta_hat.theta);
    if (mu_eps == 0.0) r.shrink = 1.0;
    else if (kappa_hat_one > 0.0) r.shrink = std::max(0.0, 1.0 - mu_eps / kappa_hat_one);
    else r.shrink = 0.0;
    const double num = 2.0 * (mu_eps * r.l1_theta_hat + tau_eps);
    for (const auto& k : kappas_hat) {
        r.s_used = std::max(r.s_used, k.s);
        const double den = k.value * r.shrink;
        if (k.norm.is_coordinate()) {
            BoundValue b = make_bound("coordinate", num, den);
            const double c = theta_hat.theta.at(k.norm.k);
            r.coordinate.emplace_back(k.norm.k, b);
            r.intervals.emplace_back(c - b.value, c + b.value);
        } else {
            r.lq.emplace_back(k.norm.q, make_bound("lq", num, den));
        }
    }
    return r;
}

}  // namespace musel
