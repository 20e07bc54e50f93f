#pragma once

#include <musel/matrix.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace musel {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearConstraint {
    Vector row;
    double rhs = 0.0;
};

/// minimize cᵀx subject to ineq rows (row·x ≤ rhs), eq rows (row·x = rhs)
/// and per-variable bounds lower ≤ x ≤ upper (±∞ allowed).
struct LinearProgram {
    Vector objective;
    std::vector<LinearConstraint> ineq;
    std::vector<LinearConstraint> eq;
    Vector lower;
    Vector upper;

    explicit LinearProgram(std::size_t num_vars = 0)
        : objective(num_vars, 0.0), lower(num_vars, 0.0), upper(num_vars, kInf)
    {
    }

    std::size_t num_vars() const noexcept { return objective.size(); }
    std::size_t num_constraints() const noexcept { return ineq.size() + eq.size(); }

    void add_leq(Vector row, double rhs) { ineq.push_back({std::move(row), rhs}); }
    void add_eq(Vector row, double rhs) { eq.push_back({std::move(row), rhs}); }

    void validate() const
    {
        const std::size_t n = num_vars();
        if (lower.size() != n || upper.size() != n)
            throw DimensionError("LinearProgram: bound vectors do not match the number of variables");
        require_finite(objective, "LinearProgram objective");
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] == kInf || upper[j] == -kInf)
                throw std::invalid_argument("LinearProgram: invalid bound on variable " + std::to_string(j));
            if (lower[j] > upper[j])
                throw std::invalid_argument("LinearProgram: lower > upper on variable " + std::to_string(j));
        }
        auto check = [&](const std::vector<LinearConstraint>& rows, const char* kind) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].row.size() != n)
                    throw DimensionError(std::string("LinearProgram: ") + kind + " row " + std::to_string(i) +
                                         " has wrong length");
                require_finite(rows[i].row, std::string("LinearProgram ") + kind + " row");
                if (!std::isfinite(rows[i].rhs))
                    throw std::invalid_argument(std::string("LinearProgram: non-finite rhs in ") + kind + " row " +
                                                std::to_string(i));
            }
        };
        check(ineq, "ineq");
        check(eq, "eq");
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(LpStatus s)
{
    switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration_limit";
    }
    return "unknown";
}

struct LpOptions {
    double feas_tol = 1e-9;
    double opt_tol = 1e-9;
    std::size_t max_iters = 0;  // 0: 50·(vars + constraints)
    std::size_t refactor_every = 100;
};

struct LpSolution {
    LpStatus status = LpStatus::IterationLimit;
    Vector x;
    double objective_value = 0.0;
    std::size_t iterations = 0;
    double max_violation = 0.0;
    /// Phase-one multipliers when Infeasible (ineq rows first, then eq rows).
    Vector farkas;
};

/// Largest violation of any constraint or bound at x.
inline double constraint_violation(const LinearProgram& lp, std::span<const double> x)
{
    double v = 0.0;
    for (const auto& c : lp.ineq) {
        double a = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) a += c.row[j] * x[j];
        v = std::max(v, a - c.rhs);
    }
    for (const auto& c : lp.eq) {
        double a = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) a += c.row[j] * x[j];
        v = std::max(v, std::abs(a - c.rhs));
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        v = std::max(v, lp.lower[j] - x[j]);
        v = std::max(v, x[j] - lp.upper[j]);
    }
    return v;
}

namespace detail {

// Bounded-variable revised simplex on the computational form A x + r = b,
// with an explicit dense basis inverse updated by pivoting and rebuilt every
// refactor_every iterations. Phase one minimises the sum of bound
// infeasibilities of the basic variables (composite method); phase two the
// true objective. Dantzig pricing switches to Bland's rule after a run of
// degenerate pivots.
class SimplexSolver {
public:
    SimplexSolver(const LinearProgram& lp, const LpOptions& opt)
        : lp_(lp), opt_(opt), n_(lp.num_vars()), m_(lp.num_constraints()), total_(n_ + m_)
    {
        acol_.assign(n_ * m_, 0.0);
        b_.resize(m_);
        std::size_t i = 0;
        for (const auto* rows : {&lp.ineq, &lp.eq}) {
            for (const auto& c : *rows) {
                for (std::size_t j = 0; j < n_; ++j) acol_[j * m_ + i] = c.row[j];
                b_[i] = c.rhs;
                ++i;
            }
        }
        lb_.resize(total_);
        ub_.resize(total_);
        cost_.assign(total_, 0.0);
        for (std::size_t j = 0; j < n_; ++j) {
            lb_[j] = lp.lower[j];
            ub_[j] = lp.upper[j];
            cost_[j] = lp.objective[j];
        }
        for (std::size_t r = 0; r < m_; ++r) {
            lb_[n_ + r] = 0.0;
            ub_[n_ + r] = r < lp.ineq.size() ? kInf : 0.0;
        }
        max_iters_ = opt.max_iters ? opt.max_iters : 50 * (n_ + m_) + 100;
    }

    LpSolution solve()
    {
        initialise();
        LpSolution sol;
        std::size_t iters = 0;
        std::size_t since_refactor = 0;
        std::size_t degenerate_run = 0;
        bool bland = false;
        bool fresh = true;
        Vector y(m_), alpha(m_), cb(m_);

        while (true) {
            if (iters >= max_iters_) {
                sol.status = LpStatus::IterationLimit;
                break;
            }
            const bool phase1 = basic_costs(cb);
            compute_duals(cb, y);

            // Pricing.
            std::size_t enter = npos;
            int dir = 0;
            double best = 0.0;
            for (std::size_t j = 0; j < total_; ++j) {
                if (pos_[j] != npos || lb_[j] == ub_[j]) continue;
                const double d = reduced_cost(j, y, phase1);
                int cand = 0;
                if (d < -opt_.opt_tol && state_[j] != AtUpper) cand = +1;
                else if (d > opt_.opt_tol && state_[j] != AtLower) cand = -1;
                if (cand == 0) continue;
                if (bland) {
                    enter = j;
                    dir = cand;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    enter = j;
                    dir = cand;
                }
            }

            if (enter == npos) {
                if (!fresh) {
                    refactor();
                    fresh = true;
                    since_refactor = 0;
                    continue;
                }
                if (phase1) {
                    sol.status = LpStatus::Infeasible;
                    sol.farkas = y;
                } else {
                    sol.status = LpStatus::Optimal;
                }
                break;
            }

            column_ftran(enter, alpha);

            // Ratio test.
            std::size_t leave = npos;
            double leave_target = 0.0;
            double step = kInf;
            {
                const double tol = opt_.feas_tol;
                const double piv_tol = 1e-9;
                double tmax = kInf;
                double amax = 0.0;
                for (std::size_t r = 0; r < m_; ++r) amax = std::max(amax, std::abs(alpha[r]));
                const double rel_piv = std::max(piv_tol, 1e-7 * amax);
                auto target_of = [&](std::size_t r, double rate, double& target) {
                    const std::size_t v = head_[r];
                    const double xv = x_[v];
                    if (rate < 0) {
                        if (xv < lb_[v] - tol) return false;
                        if (xv > ub_[v] + tol) {
                            target = ub_[v];
                            return true;
                        }
                        if (lb_[v] == -kInf) return false;
                        target = lb_[v];
                        return true;
                    }
                    if (xv > ub_[v] + tol) return false;
                    if (xv < lb_[v] - tol) {
                        target = lb_[v];
                        return true;
                    }
                    if (ub_[v] == kInf) return false;
                    target = ub_[v];
                    return true;
                };
                if (bland) {
                    for (std::size_t r = 0; r < m_; ++r) {
                        if (std::abs(alpha[r]) <= rel_piv) continue;
                        const double rate = -dir * alpha[r];
                        double target;
                        if (!target_of(r, rate, target)) continue;
                        const double ratio = std::max(0.0, (target - x_[head_[r]]) / rate);
                        if (ratio < step || (ratio == step && head_[r] < head_[leave])) {
                            step = ratio;
                            leave = r;
                            leave_target = target;
                        }
                    }
                } else {
                    for (std::size_t r = 0; r < m_; ++r) {
                        if (std::abs(alpha[r]) <= rel_piv) continue;
                        const double rate = -dir * alpha[r];
                        double target;
                        if (!target_of(r, rate, target)) continue;
                        const double ratio = (std::abs(target - x_[head_[r]]) + tol) / std::abs(rate);
                        tmax = std::min(tmax, ratio);
                    }
                    double best_piv = 0.0;
                    for (std::size_t r = 0; r < m_; ++r) {
                        if (std::abs(alpha[r]) <= rel_piv) continue;
                        const double rate = -dir * alpha[r];
                        double target;
                        if (!target_of(r, rate, target)) continue;
                        const double ratio = (target - x_[head_[r]]) / rate;
                        if (ratio > tmax) continue;
                        const double a = std::abs(alpha[r]);
                        if (a > best_piv || (a == best_piv && head_[r] < head_[leave])) {
                            best_piv = a;
                            leave = r;
                            leave_target = target;
                            step = std::max(0.0, ratio);
                        }
                    }
                }
            }

            const double range = ub_[enter] - lb_[enter];
            const bool flip = range < step;
            if (flip) step = range;
            if (step == kInf) {
                sol.status = phase1 ? LpStatus::Infeasible : LpStatus::Unbounded;
                if (phase1) sol.farkas = y;
                break;
            }

            // Update primal values.
            x_[enter] += dir * step;
            if (step != 0.0)
                for (std::size_t r = 0; r < m_; ++r) x_[head_[r]] -= dir * step * alpha[r];

            if (flip) {
                state_[enter] = dir > 0 ? AtUpper : AtLower;
                x_[enter] = dir > 0 ? ub_[enter] : lb_[enter];
            } else {
                const std::size_t out = head_[leave];
                x_[out] = leave_target;
                state_[out] = leave_target == lb_[out] ? AtLower : AtUpper;
                pos_[out] = npos;
                head_[leave] = enter;
                pos_[enter] = leave;
                state_[enter] = Basic;
                pivot(leave, alpha);
                ++since_refactor;
            }
            ++iters;
            fresh = false;

            if (step <= 1e-12) {
                if (++degenerate_run > 30) bland = true;
            } else {
                degenerate_run = 0;
                bland = false;
            }
            if (since_refactor >= opt_.refactor_every) {
                refactor();
                since_refactor = 0;
            }
        }

        sol.iterations = iters;
        sol.x.assign(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
        if (sol.status == LpStatus::Optimal) {
            for (std::size_t j = 0; j < n_; ++j) sol.x[j] = std::clamp(sol.x[j], lb_[j], ub_[j]);
        }
        double obj = 0.0;
        for (std::size_t j = 0; j < n_; ++j) obj += lp_.objective[j] * sol.x[j];
        sol.objective_value = obj;
        sol.max_violation = constraint_violation(lp_, sol.x);
        return sol;
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    enum State : unsigned char { AtLower, AtUpper, Free, Basic };

    void initialise()
    {
        x_.assign(total_, 0.0);
        state_.assign(total_, Free);
        pos_.assign(total_, npos);
        head_.resize(m_);
        for (std::size_t j = 0; j < n_; ++j) {
            if (lb_[j] != -kInf) {
                x_[j] = lb_[j];
                state_[j] = AtLower;
            } else if (ub_[j] != kInf) {
                x_[j] = ub_[j];
                state_[j] = AtUpper;
            }
        }
        for (std::size_t r = 0; r < m_; ++r) {
            head_[r] = n_ + r;
            pos_[n_ + r] = r;
            state_[n_ + r] = Basic;
        }
        binv_.assign(m_ * m_, 0.0);
        for (std::size_t r = 0; r < m_; ++r) binv_[r * m_ + r] = 1.0;
        recompute_basics();
    }

    // Phase-one costs if any basic variable is out of bounds; returns true in phase one.
    bool basic_costs(Vector& cb) const
    {
        bool infeasible = false;
        for (std::size_t r = 0; r < m_; ++r) {
            const std::size_t v = head_[r];
            if (x_[v] < lb_[v] - opt_.feas_tol) {
                cb[r] = -1.0;
                infeasible = true;
            } else if (x_[v] > ub_[v] + opt_.feas_tol) {
                cb[r] = 1.0;
                infeasible = true;
            } else {
                cb[r] = 0.0;
            }
        }
        if (!infeasible)
            for (std::size_t r = 0; r < m_; ++r) cb[r] = cost_[head_[r]];
        return infeasible;
    }

    void compute_duals(const Vector& cb, Vector& y) const
    {
        std::fill(y.begin(), y.end(), 0.0);
        for (std::size_t r = 0; r < m_; ++r) {
            const double c = cb[r];
            if (c == 0.0) continue;
            const double* row = &binv_[r * m_];
            for (std::size_t i = 0; i < m_; ++i) y[i] += c * row[i];
        }
    }

    double reduced_cost(std::size_t j, const Vector& y, bool phase1) const
    {
        const double c = phase1 ? 0.0 : cost_[j];
        if (j >= n_) return c - y[j - n_];
        const double* a = &acol_[j * m_];
        double s = 0.0;
        for (std::size_t i = 0; i < m_; ++i) s += y[i] * a[i];
        return c - s;
    }

    void column_ftran(std::size_t j, Vector& alpha) const
    {
        if (j >= n_) {
            const std::size_t k = j - n_;
            for (std::size_t r = 0; r < m_; ++r) alpha[r] = binv_[r * m_ + k];
            return;
        }
        const double* a = &acol_[j * m_];
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &binv_[r * m_];
            double s = 0.0;
            for (std::size_t i = 0; i < m_; ++i) s += row[i] * a[i];
            alpha[r] = s;
        }
    }

    void pivot(std::size_t p, const Vector& alpha)
    {
        double* prow = &binv_[p * m_];
        const double inv = 1.0 / alpha[p];
        for (std::size_t i = 0; i < m_; ++i) prow[i] *= inv;
        for (std::size_t r = 0; r < m_; ++r) {
            if (r == p) continue;
            const double f = alpha[r];
            if (f == 0.0) continue;
            double* row = &binv_[r * m_];
            for (std::size_t i = 0; i < m_; ++i) row[i] -= f * prow[i];
        }
    }

    // Rebuilds B⁻¹ exploiting that logical columns are unit vectors: only the
    // k×k block of structural columns on uncovered rows needs inverting.
    void refactor()
    {
        std::vector<std::size_t> struct_pos, rows_s;
        std::vector<char> covered(m_, 0);
        for (std::size_t r = 0; r < m_; ++r) {
            if (head_[r] >= n_) covered[head_[r] - n_] = 1;
            else struct_pos.push_back(r);
        }
        for (std::size_t i = 0; i < m_; ++i)
            if (!covered[i]) rows_s.push_back(i);
        const std::size_t k = struct_pos.size();
        if (rows_s.size() != k) throw std::logic_error("simplex: inconsistent basis");

        // K = A[rows_s, S]; invert by Gauss-Jordan with partial pivoting.
        std::vector<double> kmat(k * k), kinv(k * k, 0.0);
        for (std::size_t a = 0; a < k; ++a) {
            const std::size_t j = head_[struct_pos[a]];
            for (std::size_t i = 0; i < k; ++i) kmat[i * k + a] = acol_[j * m_ + rows_s[i]];
        }
        for (std::size_t i = 0; i < k; ++i) kinv[i * k + i] = 1.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::size_t piv = c;
            for (std::size_t i = c + 1; i < k; ++i)
                if (std::abs(kmat[i * k + c]) > std::abs(kmat[piv * k + c])) piv = i;
            if (std::abs(kmat[piv * k + c]) < 1e-14) throw std::runtime_error("simplex: singular basis");
            if (piv != c)
                for (std::size_t t = 0; t < k; ++t) {
                    std::swap(kmat[c * k + t], kmat[piv * k + t]);
                    std::swap(kinv[c * k + t], kinv[piv * k + t]);
                }
            const double inv = 1.0 / kmat[c * k + c];
            for (std::size_t t = 0; t < k; ++t) {
                kmat[c * k + t] *= inv;
                kinv[c * k + t] *= inv;
            }
            for (std::size_t i = 0; i < k; ++i) {
                if (i == c) continue;
                const double f = kmat[i * k + c];
                if (f == 0.0) continue;
                for (std::size_t t = 0; t < k; ++t) {
                    kmat[i * k + t] -= f * kmat[c * k + t];
                    kinv[i * k + t] -= f * kinv[c * k + t];
                }
            }
        }

        std::fill(binv_.begin(), binv_.end(), 0.0);
        // Structural positions: rows of K⁻¹ spread over the uncovered rows.
        for (std::size_t a = 0; a < k; ++a) {
            double* row = &binv_[struct_pos[a] * m_];
            for (std::size_t i = 0; i < k; ++i) row[rows_s[i]] = kinv[a * k + i];
        }
        // Logical positions: e_i0 − A[i0, S] K⁻¹ on uncovered rows.
        for (std::size_t r = 0; r < m_; ++r) {
            if (head_[r] < n_) continue;
            const std::size_t i0 = head_[r] - n_;
            double* row = &binv_[r * m_];
            row[i0] = 1.0;
            for (std::size_t a = 0; a < k; ++a) {
                const double coef = acol_[head_[struct_pos[a]] * m_ + i0];
                if (coef == 0.0) continue;
                const double* krow = &kinv[a * k];
                for (std::size_t i = 0; i < k; ++i) row[rows_s[i]] -= coef * krow[i];
            }
        }
        recompute_basics();
    }

    void recompute_basics()
    {
        Vector v = b_;
        for (std::size_t j = 0; j < total_; ++j) {
            if (pos_[j] != npos || x_[j] == 0.0) continue;
            if (j >= n_) {
                v[j - n_] -= x_[j];
                continue;
            }
            const double* a = &acol_[j * m_];
            for (std::size_t i = 0; i < m_; ++i) v[i] -= a[i] * x_[j];
        }
        for (std::size_t r = 0; r < m_; ++r) {
            const double* row = &binv_[r * m_];
            double s = 0.0;
            for (std::size_t i = 0; i < m_; ++i) s += row[i] * v[i];
            x_[head_[r]] = s;
        }
    }

    const LinearProgram& lp_;
    LpOptions opt_;
    std::size_t n_, m_, total_;
    std::size_t max_iters_;
    std::vector<double> acol_;
    Vector b_, lb_, ub_, cost_, x_;
    std::vector<State> state_;
    std::vector<std::size_t> pos_, head_;
    std::vector<double> binv_;
};

}  // namespace detail

/// Solves a dense linear program. Deterministic for identical input.
inline LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options = {})
{
    lp.validate();
    LpSolution sol = detail::SimplexSolver(lp, options).solve();
#ifndef NDEBUG
    if (sol.status == LpStatus::Optimal) {
        double scale = 1.0;
        for (const auto* rows : {&lp.ineq, &lp.eq})
            for (const auto& c : *rows) scale = std::max({scale, std::abs(c.rhs), norm_inf(c.row)});
        assert(sol.max_violation <= options.feas_tol * scale * 10.0);
    }
#endif
    return sol;
}

/// Plain-text dump of an LP for bug reports.
inline void write_lp_text(std::ostream& os, const LinearProgram& lp)
{
    auto put_row = [&](std::span<const double> r) {
        for (double v : r) os << ' ' << v;
    };
    os.precision(17);
    os << "vars " << lp.num_vars() << " ineq " << lp.ineq.size() << " eq " << lp.eq.size() << '\n';
    os << "min";
    put_row(lp.objective);
    os << '\n';
    for (const auto& c : lp.ineq) {
        os << "le";
        put_row(c.row);
        os << " | " << c.rhs << '\n';
    }
    for (const auto& c : lp.eq) {
        os << "eq";
        put_row(c.row);
        os << " | " << c.rhs << '\n';
    }
    for (std::size_t j = 0; j < lp.num_vars(); ++j) os << "bound " << j << ' ' << lp.lower[j] << ' ' << lp.upper[j] << '\n';
}

}  // namespace musel
