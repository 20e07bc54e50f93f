#pragma once

#include <musel/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace musel {

/// Prior domain Θ for the parameter vector.
enum class Domain { NonnegativeOrthant, AllReals };

inline const char* to_string(Domain d)
{
    return d == Domain::NonnegativeOrthant ? "nonneg" : "free";
}

/// Default upper bound on p for dense storage.
inline constexpr std::size_t kDefaultDimensionCap = 2000;

/// Symmetric p×p matrix: Ψ = (1/n)XᵀX or an empirical substitute.
class GramMatrix {
public:
    GramMatrix() = default;

    explicit GramMatrix(Matrix m, double symmetry_tol = 1e-12) : m_(std::move(m))
    {
        if (m_.rows() != m_.cols()) throw DimensionError("GramMatrix: matrix is not square");
        const double scale = std::max(1.0, max_abs(m_));
        for (std::size_t i = 0; i < m_.rows(); ++i)
            for (std::size_t j = i + 1; j < m_.cols(); ++j)
                if (std::abs(m_(i, j) - m_(j, i)) > symmetry_tol * scale)
                    throw std::invalid_argument("GramMatrix: not symmetric at (" + std::to_string(i) + ", " +
                                                std::to_string(j) + ")");
    }

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    const Matrix& matrix() const noexcept { return m_; }

private:
    Matrix m_;
};

/// Ψ = (1/n)XᵀX, symmetric by construction.
inline GramMatrix gram(const Matrix& x)
{
    if (x.rows() == 0 || x.cols() == 0) throw DimensionError("gram: empty design");
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    Matrix g(p, p);
    for (std::size_t k = 0; k < n; ++k) {
        auto r = x.row(k);
        for (std::size_t i = 0; i < p; ++i) {
            const double ri = r[i];
            if (ri == 0.0) continue;
            for (std::size_t j = i; j < p; ++j) g(i, j) += ri * r[j];
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i; j < p; ++j) {
            g(i, j) *= inv;
            g(j, i) = g(i, j);
        }
    return GramMatrix(std::move(g));
}

/// Centers each column and scales it so that the Gram diagonal is one.
inline Matrix normalize_design(const Matrix& x)
{
    if (x.rows() == 0 || x.cols() == 0) throw DimensionError("normalize_design: empty design");
    const std::size_t n = x.rows();
    Matrix out = x;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out(i, j) = x(i, j) - mean;
            ss += out(i, j) * out(i, j);
            scale = std::max(scale, std::abs(x(i, j)));
        }
        const double rms = std::sqrt(ss / static_cast<double>(n));
        if (!(rms > 1e-14 * std::max(scale, 1e-300))) {
            throw std::invalid_argument("normalize_design: column " + std::to_string(j) + " is constant");
        }
        for (std::size_t i = 0; i < n; ++i) out(i, j) /= rms;
    }
    return out;
}

/// ρ = max_{i≠j} |Ψ_ij|; requires a unit diagonal.
inline double coherence(const GramMatrix& psi, double diag_tol = 1e-8)
{
    const std::size_t p = psi.dim();
    for (std::size_t i = 0; i < p; ++i)
        if (std::abs(psi(i, i) - 1.0) > diag_tol)
            throw std::invalid_argument("coherence: diagonal entry " + std::to_string(i) + " is not 1");
    double rho = 0.0;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
            if (i != j) rho = std::max(rho, std::abs(psi(i, j)));
    return rho;
}

/// The five diagnostic noise matrices M⁽¹⁾…M⁽⁵⁾.
struct ErrorMatrices {
    Matrix m1;  // (1/n)XᵀΞ
    Vector m2;  // (1/n)Xᵀξ
    Vector m3;  // (1/n)Ξᵀξ
    Matrix m4;  // (1/n)(ΞᵀΞ − Diag{ΞᵀΞ})
    Matrix m5;  // (1/n)Diag{ΞᵀΞ} − D
};

/// Diag{A}: same diagonal, zero elsewhere.
inline Matrix diag_part(const Matrix& a)
{
    Matrix d(a.rows(), a.cols());
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) d(i, i) = a(i, i);
    return d;
}

inline Matrix off_diag_part(const Matrix& a)
{
    Matrix o = a;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) o(i, i) = 0.0;
    return o;
}

inline ErrorMatrices error_matrices(const Matrix& x, const Matrix& xi_mat, std::span<const double> xi,
                                    std::span<const double> d)
{
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (xi_mat.rows() != n || xi_mat.cols() != p || xi.size() != n || d.size() != p)
        throw DimensionError("error_matrices: inconsistent dimensions");
    const double dn = static_cast<double>(n);
    ErrorMatrices e;
    e.m1 = cross_product(x, xi_mat, dn);
    e.m2 = matvec_transposed(x, xi);
    e.m3 = matvec_transposed(xi_mat, xi);
    for (auto& v : e.m2) v /= dn;
    for (auto& v : e.m3) v /= dn;
    Matrix xtx = cross_product(xi_mat, xi_mat, dn);
    e.m4 = off_diag_part(xtx);
    e.m5 = diag_part(xtx);
    for (std::size_t j = 0; j < p; ++j) e.m5(j, j) -= d[j];
    return e;
}

/// Ground truth carried by simulated instances.
struct GroundTruth {
    Matrix x;
    Matrix xi_mat;
    Vector xi;
    Vector theta_star;
};

/// Observed data (Z, y) plus the domain, optionally with the generating truth.
class ProblemInstance {
public:
    ProblemInstance(Matrix z, Vector y, Domain domain, std::optional<GroundTruth> truth = std::nullopt)
        : z_(std::move(z)), y_(std::move(y)), domain_(domain), truth_(std::move(truth))
    {
        if (z_.rows() != y_.size()) throw DimensionError("ProblemInstance: rows of Z differ from length of y");
        require_finite(y_, "ProblemInstance y");
        if (truth_) {
            const auto& t = *truth_;
            const std::size_t n = z_.rows(), p = z_.cols();
            if (t.x.rows() != n || t.x.cols() != p || t.xi_mat.rows() != n || t.xi_mat.cols() != p ||
                t.xi.size() != n || t.theta_star.size() != p)
                throw DimensionError("ProblemInstance: ground truth dimensions inconsistent");
            Vector fit = matvec(t.x, t.theta_star);
            double res = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = y_[i] - fit[i] - t.xi[i];
                res += r * r;
            }
            if (std::sqrt(res) > 1e-10 * std::max(norm2(y_), 1e-300) && std::sqrt(res) > 0.0)
                throw std::invalid_argument("ProblemInstance: y != X theta* + xi");
        }
    }

    const Matrix& z() const noexcept { return z_; }
    const Vector& y() const noexcept { return y_; }
    Domain domain() const noexcept { return domain_; }
    const std::optional<GroundTruth>& truth() const noexcept { return truth_; }
    std::size_t n() const noexcept { return z_.rows(); }
    std::size_t p() const noexcept { return z_.cols(); }

private:
    Matrix z_;
    Vector y_;
    Domain domain_;
    std::optional<GroundTruth> truth_;
};

namespace detail {

// Euclidean projection onto {w : |w|_1 <= radius}.
inline void project_l1_ball(Vector& w, double radius)
{
    if (norm1(w) <= radius) return;
    if (radius <= 0.0) {
        std::fill(w.begin(), w.end(), 0.0);
        return;
    }
    Vector a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = std::abs(w[i]);
    std::sort(a.begin(), a.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        cum += a[k];
        const double t = (cum - radius) / static_cast<double>(k + 1);
        if (k + 1 == a.size() || a[k + 1] <= t) {
            theta = t;
            break;
        }
    }
    for (auto& v : w) v = (v > 0 ? 1.0 : -1.0) * std::max(std::abs(v) - theta, 0.0);
}

// min over |w|_1 <= |d|_1 of the quadratic form of Δ = (d on J, w on Jᶜ), via FISTA.
inline double re_inner(const GramMatrix& psi, const IndexSet& j_set, const IndexSet& jc, const Vector& d)
{
    const std::size_t m = jc.size();
    double quad_jj = 0.0;
    for (std::size_t a = 0; a < j_set.size(); ++a)
        for (std::size_t b = 0; b < j_set.size(); ++b) quad_jj += d[a] * psi(j_set[a], j_set[b]) * d[b];
    if (m == 0) return quad_jj;
    Vector lin(m, 0.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t a = 0; a < j_set.size(); ++a) lin[k] += 2.0 * psi(jc[k], j_set[a]) * d[a];
    double lip = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double row = 0.0;
        for (std::size_t l = 0; l < m; ++l) row += std::abs(psi(jc[k], jc[l]));
        lip = std::max(lip, 2.0 * row);
    }
    lip = std::max(lip, 1e-12);
    const double radius = norm1(d);
    auto value = [&](const Vector& w) {
        double v = quad_jj;
        for (std::size_t k = 0; k < m; ++k) {
            v += lin[k] * w[k];
            for (std::size_t l = 0; l < m; ++l) v += w[k] * psi(jc[k], jc[l]) * w[l];
        }
        return v;
    };
    Vector w(m, 0.0), z = w, w_prev = w, grad(m);
    double t = 1.0;
    double best = value(w);
    for (int it = 0; it < 800; ++it) {
        for (std::size_t k = 0; k < m; ++k) {
            double g = lin[k];
            for (std::size_t l = 0; l < m; ++l) g += 2.0 * psi(jc[k], jc[l]) * z[l];
            grad[k] = g;
        }
        w_prev = w;
        for (std::size_t k = 0; k < m; ++k) w[k] = z[k] - grad[k] / lip;
        project_l1_ball(w, radius);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        for (std::size_t k = 0; k < m; ++k) z[k] = w[k] + ((t - 1.0) / t_next) * (w[k] - w_prev[k]);
        t = t_next;
        best = std::min(best, value(w));
    }
    return best;
}

inline void next_combination(IndexSet& comb, std::size_t p, bool& done)
{
    const std::size_t k = comb.size();
    std::size_t i = k;
    while (i > 0) {
        --i;
        if (comb[i] < p - k + i) {
            ++comb[i];
            for (std::size_t j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
            return;
        }
    }
    done = true;
}

}  // namespace detail

/// Calls f(J) for every J ⊆ {0..p-1} with |J| = k, in lexicographic order.
template <class F>
void for_each_subset(std::size_t p, std::size_t k, F&& f)
{
    if (k > p) return;
    IndexSet comb(k);
    for (std::size_t i = 0; i < k; ++i) comb[i] = i;
    bool done = false;
    while (!done) {
        f(static_cast<const IndexSet&>(comb));
        if (k == 0) break;
        detail::next_combination(comb, p, done);
    }
}

inline IndexSet complement(const IndexSet& j_set, std::size_t p)
{
    IndexSet out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < p; ++i) {
        if (k < j_set.size() && j_set[k] == i) {
            ++k;
            continue;
        }
        out.push_back(i);
    }
    return out;
}

/// Brute-force approximation of the restricted-eigenvalue constant κ_RE(s).
///
/// For each |J| = s the direction of Δ_J is searched over the unit sphere (an angular
/// grid for s ≤ 2, seeded quasi-uniform directions otherwise, then pattern-search
/// refinement) and Δ_{Jᶜ} is optimised exactly enough by projected gradient. Every
/// evaluated point is feasible, so the result is an upper bound on the true minimum that
/// tightens with grid_resolution. Intended as a small-p oracle for positive
/// semidefinite Gram matrices.
inline double re_constant_bruteforce(const GramMatrix& psi, std::size_t s, std::size_t grid_resolution)
{
    const std::size_t p = psi.dim();
    if (p > 8) throw std::invalid_argument("re_constant_bruteforce: p > 8 is out of range for brute force");
    if (s == 0 || s > p) throw std::invalid_argument("re_constant_bruteforce: s must be in [1, p]");
    grid_resolution = std::max<std::size_t>(grid_resolution, 2);
    double best = std::numeric_limits<double>::infinity();

    for_each_subset(p, s, [&](const IndexSet& j_set) {
        const IndexSet jc = complement(j_set, p);
        auto eval = [&](Vector d) {
            const double nrm = norm2(d);
            for (auto& v : d) v /= nrm;
            return std::abs(detail::re_inner(psi, j_set, jc, d));
        };
        std::vector<Vector> candidates;
        if (s == 1) {
            candidates.push_back({1.0});
        } else if (s == 2) {
            for (std::size_t k = 0; k < grid_resolution; ++k) {
                const double phi = M_PI * static_cast<double>(k) / static_cast<double>(grid_resolution);
                candidates.push_back({std::cos(phi), std::sin(phi)});
            }
        } else {
            std::mt19937_64 rng(0x5eedULL + s);
            std::normal_distribution<double> normal;
            for (std::size_t k = 0; k < grid_resolution * grid_resolution; ++k) {
                Vector d(s);
                for (auto& v : d) v = normal(rng);
                candidates.push_back(std::move(d));
            }
        }
        std::vector<std::pair<double, Vector>> scored;
        for (auto& c : candidates) scored.emplace_back(eval(c), c);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        const std::size_t keep = s == 1 ? 1 : std::min<std::size_t>(3, scored.size());
        for (std::size_t c = 0; c < keep; ++c) {
            double value = scored[c].first;
            Vector d = scored[c].second;
            const double n0 = norm2(d);
            for (auto& v : d) v /= n0;
            double step = s == 1 ? 0.0 : 2.0 / static_cast<double>(grid_resolution);
            while (step > 1e-9) {
                bool improved = false;
                for (std::size_t a = 0; a < s && !improved; ++a)
                    for (double sign : {1.0, -1.0}) {
                        Vector trial = d;
                        trial[a] += sign * step;
                        const double v = eval(trial);
                        if (v < value) {
                            value = v;
                            const double nt = norm2(trial);
                            for (auto& x : trial) x /= nt;
                            d = trial;
                            improved = true;
                            break;
                        }
                    }
                if (!improved) step *= 0.5;
            }
            best = std::min(best, value);
        }
    });
    return best;
}

}  // namespace musel
