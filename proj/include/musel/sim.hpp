#pragma once

#include <musel/core_model.hpp>
#include <musel/estimators.hpp>
#include <musel/matrix.hpp>
#include <musel/missing_data.hpp>
#include <musel/random.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace musel {

enum class EstimatorKind { MU, CMU, Dantzig };

inline const char* to_string(EstimatorKind e)
{
    switch (e) {
    case EstimatorKind::MU: return "MU";
    case EstimatorKind::CMU: return "CMU";
    case EstimatorKind::Dantzig: return "Dantzig";
    }
    return "?";
}

/// τ either fixed or from the default observable rule
/// τ = 2·noise_sd·√(2 log(2p/0.05)/n)·max_j √((1/n)Σ_i Z_ij²).
struct TauRule {
    enum class Kind { Default, Fixed };
    Kind kind = Kind::Default;
    double value = 0.0;
};

struct SimConfig {
    std::size_t n = 100;
    std::size_t p = 500;
    std::vector<std::size_t> s_list{1, 2, 3, 5, 10};
    double theta_value = 0.5;
    double noise_sd = 0.05 / 1.96;
    double pi_star = 0.1;
    std::vector<double> delta_list{0.0, 0.01, 0.05, 0.075, 0.1};
    TauRule tau_rule;
    std::size_t reps = 100;
    std::uint64_t seed = 0;
    std::vector<EstimatorKind> estimators{EstimatorKind::MU, EstimatorKind::CMU};
    /// Draw a new design for every replication instead of one per s.
    bool fresh_design = false;
    /// Use the pooled empirical missing rate instead of π*.
    bool estimate_pi = false;
    /// Worker threads; 0 reads MUSEL_THREADS, then falls back to the hardware count.
    std::size_t threads = 0;
    double nonzero_threshold = 1e-8;

    void validate() const
    {
        if (n < 2) throw std::invalid_argument("SimConfig: n must be at least 2");
        if (p == 0) throw std::invalid_argument("SimConfig: p must be positive");
        if (reps == 0) throw std::invalid_argument("SimConfig: reps must be at least 1");
        if (!(pi_star >= 0.0 && pi_star < 1.0)) throw std::invalid_argument("SimConfig: pi_star must lie in [0, 1)");
        if (!(noise_sd >= 0.0)) throw std::invalid_argument("SimConfig: noise_sd must be >= 0");
        for (auto s : s_list)
            if (s > p) throw std::invalid_argument("SimConfig: s = " + std::to_string(s) + " exceeds p");
        for (double d : delta_list)
            if (!(d >= 0.0)) throw std::invalid_argument("SimConfig: deltas must be >= 0");
        if (estimators.empty()) throw std::invalid_argument("SimConfig: no estimators selected");
        if (tau_rule.kind == TauRule::Kind::Fixed && !(tau_rule.value >= 0.0))
            throw std::invalid_argument("SimConfig: fixed tau must be >= 0");
    }
};

struct RunMetrics {
    double err1 = 0.0;
    double err2 = 0.0;
    double err2_over_n = 0.0;
    std::size_t nb1 = 0;
    std::size_t nb2 = 0;
    bool exact = false;
};

/// One replication of one estimator in one (s, δ) cell.
struct RepRecord {
    EstimatorKind estimator = EstimatorKind::MU;
    std::size_t s = 0;
    double delta = 0.0;
    std::size_t rep = 0;
    double mu = 0.0;
    double tau = 0.0;
    LpStatus status = LpStatus::Optimal;
    bool failed = false;
    RunMetrics metrics;
    Vector theta_hat;
};

struct Moments {
    double mean = 0.0;
    double sd = 0.0;
};

struct TableRow {
    EstimatorKind estimator = EstimatorKind::MU;
    std::size_t s = 0;
    double delta = 0.0;
    Moments err1, err2, err2_over_n, nb1, nb2;
    std::size_t exact = 0;
    std::size_t reps_ok = 0;
    std::size_t failed = 0;
};

struct ExperimentResult {
    std::vector<TableRow> rows;
    std::vector<RepRecord> records;
};

/// i.i.d. N(0,1) entries, then centred and scaled columns.
inline Matrix gen_design(std::size_t n, std::size_t p, Rng& rng)
{
    if (n < 2) throw std::invalid_argument("gen_design: n must be at least 2");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) x(i, j) = gauss(rng);
    return normalize_design(x);
}

/// s entries equal to value at uniformly drawn distinct positions.
inline Vector gen_theta(std::size_t p, std::size_t s, double value, Rng& rng)
{
    if (s > p) throw std::invalid_argument("gen_theta: s exceeds p");
    std::vector<std::size_t> idx(p);
    for (std::size_t j = 0; j < p; ++j) idx[j] = j;
    // Partial Fisher-Yates with an explicit uniform draw keeps results library-independent.
    for (std::size_t k = 0; k < s; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, p - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    Vector theta(p, 0.0);
    for (std::size_t k = 0; k < s; ++k) theta[idx[k]] = value;
    return theta;
}

inline Vector gen_response(const Matrix& x, std::span<const double> theta_star, double noise_sd, Rng& rng)
{
    Vector y = matvec(x, theta_star);
    if (noise_sd == 0.0) return y;
    std::normal_distribution<double> gauss(0.0, noise_sd);
    for (auto& v : y) v += gauss(rng);
    return y;
}

inline double default_tau(const Matrix& z, double noise_sd)
{
    const double n = static_cast<double>(z.rows()), p = static_cast<double>(z.cols());
    double max_col = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) ss += z(i, j) * z(i, j);
        max_col = std::max(max_col, std::sqrt(ss / n));
    }
    return 2.0 * noise_sd * std::sqrt(2.0 * std::log(2.0 * p / 0.05) / n) * max_col;
}

inline double tau_from_rule(const TauRule& rule, const Matrix& z, double noise_sd)
{
    return rule.kind == TauRule::Kind::Fixed ? rule.value : default_tau(z, noise_sd);
}

inline RunMetrics metrics(std::span<const double> theta_hat, std::span<const double> theta_star, const Matrix& x,
                          double nonzero_threshold)
{
    if (theta_hat.size() != theta_star.size() || x.cols() != theta_hat.size())
        throw DimensionError("metrics: dimension mismatch");
    RunMetrics m;
    const Vector diff = subtract(theta_hat, theta_star);
    m.err1 = norm2_squared(diff);
    m.err2 = norm2_squared(matvec(x, diff));
    m.err2_over_n = m.err2 / static_cast<double>(x.rows());
    bool same = true;
    for (std::size_t j = 0; j < theta_hat.size(); ++j) {
        const bool est = std::abs(theta_hat[j]) > nonzero_threshold;
        const bool truth = theta_star[j] != 0.0;
        if (est) ++m.nb1;
        if (est && truth) ++m.nb2;
        if (est != truth) same = false;
    }
    m.exact = same;
    return m;
}

inline std::size_t resolve_threads(std::size_t requested)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MUSEL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1U, std::thread::hardware_concurrency());
}

namespace detail {

inline Moments moments(const std::vector<double>& v)
{
    Moments m;
    if (v.empty()) return {std::nan(""), std::nan("")};
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return m;
}

struct SimTask {
    std::size_t s;
    double delta;
    std::size_t rep;
};

inline std::uint64_t design_seed(const SimConfig& cfg, std::size_t s, std::size_t rep)
{
    return cfg.fresh_design ? derive_seed(cfg.seed, {0xD5, s, rep}) : derive_seed(cfg.seed, {0xD5, s});
}

inline std::vector<RepRecord> run_rep(const SimConfig& cfg, const SimTask& t, const Matrix& x)
{
    Rng rng(derive_seed(cfg.seed, {t.s, seed_tag(t.delta), t.rep}));
    const Vector theta_star = gen_theta(cfg.p, t.s, cfg.theta_value, rng);
    const Vector y = gen_response(x, theta_star, cfg.noise_sd, rng);
    const MaskedDesign masked = apply_mask(x, uniform_pi(cfg.p, cfg.pi_star), rng());

    const double pi_used = cfg.estimate_pi ? estimate_pi(masked, PiMode::Pooled)[0] : cfg.pi_star;
    const Vector pis = uniform_pi(cfg.p, pi_used);
    const Matrix z = rescale(masked, pis);
    const double tau = tau_from_rule(cfg.tau_rule, z, cfg.noise_sd);
    const double mu = (1.0 + t.delta) * t.delta;

    std::vector<RepRecord> out;
    for (EstimatorKind kind : cfg.estimators) {
        if (kind == EstimatorKind::Dantzig && t.delta != cfg.delta_list.front()) continue;
        RepRecord r;
        r.estimator = kind;
        r.s = t.s;
        r.delta = kind == EstimatorKind::Dantzig ? 0.0 : t.delta;
        r.rep = t.rep;
        r.tau = tau;
        SelectorConfig sc;
        sc.tau = tau;
        sc.nonzero_threshold = cfg.nonzero_threshold;
        Estimate e;
        try {
            switch (kind) {
            case EstimatorKind::MU:
                sc.mu = mu;
                e = solve_mu_selector(z, y, sc);
                break;
            case EstimatorKind::CMU:
                sc.mu = mu;
                if (cfg.estimate_pi) {
                    e = solve_missing_data_cmu(masked.z_tilde, y, MissingPi{}, sc);
                } else {
                    sc.compensation = sigma_hat(masked, pis).sigma_hat_sq;
                    e = solve_compensated_mu(z, y, sc);
                }
                break;
            case EstimatorKind::Dantzig:
                e = solve_dantzig(z, y, tau, Domain::NonnegativeOrthant, sc);
                break;
            }
            r.mu = sc.mu;
            r.status = e.status;
            r.failed = e.status != LpStatus::Optimal;
        } catch (const std::exception&) {
            r.failed = true;
            r.status = LpStatus::IterationLimit;
        }
        if (!r.failed) {
            r.metrics = metrics(e.theta, theta_star, x, cfg.nonzero_threshold);
            r.theta_hat = std::move(e.theta);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace detail

/// Aggregates per-rep records into one row per (s, δ, estimator), in record order.
inline std::vector<TableRow> aggregate(const std::vector<RepRecord>& records)
{
    std::vector<TableRow> rows;
    struct Acc {
        std::vector<double> e1, e2, e2n, n1, n2;
    };
    std::vector<Acc> accs;
    auto find = [&](const RepRecord& r) -> std::size_t {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].estimator == r.estimator && rows[i].s == r.s && rows[i].delta == r.delta) return i;
        TableRow row;
        row.estimator = r.estimator;
        row.s = r.s;
        row.delta = r.delta;
        rows.push_back(row);
        accs.emplace_back();
        return rows.size() - 1;
    };
    for (const auto& r : records) {
        const std::size_t i = find(r);
        if (r.failed) {
            ++rows[i].failed;
            continue;
        }
        ++rows[i].reps_ok;
        if (r.metrics.exact) ++rows[i].exact;
        accs[i].e1.push_back(r.metrics.err1);
        accs[i].e2.push_back(r.metrics.err2);
        accs[i].e2n.push_back(r.metrics.err2_over_n);
        accs[i].n1.push_back(static_cast<double>(r.metrics.nb1));
        accs[i].n2.push_back(static_cast<double>(r.metrics.nb2));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].err1 = detail::moments(accs[i].e1);
        rows[i].err2 = detail::moments(accs[i].e2);
        rows[i].err2_over_n = detail::moments(accs[i].e2n);
        rows[i].nb1 = detail::moments(accs[i].n1);
        rows[i].nb2 = detail::moments(accs[i].n2);
    }
    return rows;
}

/// Runs every (s, δ, rep) task, possibly concurrently; results are stored by task index
/// so the output does not depend on the number of workers.
inline ExperimentResult run_experiment(const SimConfig& cfg)
{
    cfg.validate();
    std::vector<detail::SimTask> tasks;
    for (auto s : cfg.s_list)
        for (double d : cfg.delta_list)
            for (std::size_t rep = 0; rep < cfg.reps; ++rep) tasks.push_back({s, d, rep});

    std::vector<Matrix> designs;
    if (!cfg.fresh_design)
        for (auto s : cfg.s_list) {
            Rng rng(detail::design_seed(cfg, s, 0));
            designs.push_back(gen_design(cfg.n, cfg.p, rng));
        }

    std::vector<std::vector<RepRecord>> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& t = tasks[i];
            if (cfg.fresh_design) {
                Rng rng(detail::design_seed(cfg, t.s, t.rep));
                slots[i] = detail::run_rep(cfg, t, gen_design(cfg.n, cfg.p, rng));
            } else {
                const auto pos = static_cast<std::size_t>(
                    std::find(cfg.s_list.begin(), cfg.s_list.end(), t.s) - cfg.s_list.begin());
                slots[i] = detail::run_rep(cfg, t, designs[pos]);
            }
        }
    };
    const std::size_t nthreads = std::min(resolve_threads(cfg.threads), tasks.size());
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < nthreads; ++k) pool.emplace_back(worker);
    }

    ExperimentResult res;
    // Group by cell (estimator-major inside each (s, δ)) so rows come out in table order.
    for (std::size_t i = 0; i < tasks.size();) {
        std::size_t j = i;
        while (j < tasks.size() && tasks[j].s == tasks[i].s && tasks[j].delta == tasks[i].delta) ++j;
        for (EstimatorKind kind : cfg.estimators)
            for (std::size_t k = i; k < j; ++k)
                for (auto& r : slots[k])
                    if (r.estimator == kind) res.records.push_back(std::move(r));
        i = j;
    }
    res.rows = aggregate(res.records);
    return res;
}

/// Named configurations. tableK reproduces the K-th results table (s = 1, 2, 3, 5, 10);
/// "reduced" is a small fast layout; "estimated-pi" is table1 with π̂ in place of π*.
inline SimConfig preset(const std::string& name)
{
    SimConfig c;
    const std::vector<std::size_t> table_s{1, 2, 3, 5, 10};
    for (std::size_t k = 0; k < table_s.size(); ++k)
        if (name == "table" + std::to_string(k + 1)) {
            c.s_list = {table_s[k]};
            return c;
        }
    if (name == "full") return c;
    if (name == "reduced") {
        c.n = 40;
        c.p = 120;
        c.s_list = {1, 2};
        c.reps = 30;
        return c;
    }
    if (name == "estimated-pi") {
        c.s_list = {1};
        c.estimate_pi = true;
        return c;
    }
    throw std::invalid_argument("unknown preset '" + name + "' (known: table1..table5, full, reduced, estimated-pi)");
}

inline std::string format_number(double v, int digits = 17)
{
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

inline void write_rows_csv(std::ostream& os, const std::vector<TableRow>& rows)
{
    os << "estimator,s,delta,err1_mean,err1_sd,err2_mean,err2_sd,err2_over_n_mean,err2_over_n_sd,"
          "nb1_mean,nb1_sd,nb2_mean,nb2_sd,exact,reps_ok,failed\n";
    for (const auto& r : rows) {
        os << to_string(r.estimator) << ',' << r.s << ',' << format_number(r.delta);
        for (const Moments* m : {&r.err1, &r.err2, &r.err2_over_n, &r.nb1, &r.nb2})
            os << ',' << format_number(m->mean) << ',' << format_number(m->sd);
        os << ',' << r.exact << ',' << r.reps_ok << ',' << r.failed << '\n';
    }
}

/// Table layout: one block per s, one column per (estimator, δ), mean with sd in brackets.
inline void write_rows_markdown(std::ostream& os, const std::vector<TableRow>& rows)
{
    std::vector<std::size_t> s_values;
    for (const auto& r : rows)
        if (std::find(s_values.begin(), s_values.end(), r.s) == s_values.end()) s_values.push_back(r.s);
    auto cell = [](const Moments& m) {
        std::ostringstream c;
        c << std::setprecision(4) << m.mean << " (" << std::setprecision(3) << m.sd << ")";
        return c.str();
    };
    for (auto s : s_values) {
        std::vector<const TableRow*> cols;
        for (const auto& r : rows)
            if (r.s == s) cols.push_back(&r);
        os << "s = " << s << "\n\n|";
        for (const auto* r : cols) {
            const std::string prefix = r->estimator == EstimatorKind::CMU       ? "C-δ="
                                       : r->estimator == EstimatorKind::Dantzig ? "DS δ="
                                                                                : "δ=";
            os << " | " << prefix << format_number(r->delta, 6);
        }
        os << " |\n|---";
        for (std::size_t k = 0; k < cols.size(); ++k) os << "|---";
        os << "|\n";
        auto line = [&](const char* label, auto get) {
            os << "| " << label;
            for (const auto* r : cols) os << " | " << get(*r);
            os << " |\n";
        };
        line("Err1", [&](const TableRow& r) { return cell(r.err1); });
        line("Err2", [&](const TableRow& r) { return cell(r.err2); });
        line("Nb1", [&](const TableRow& r) { return cell(r.nb1); });
        line("Nb2", [&](const TableRow& r) { return cell(r.nb2); });
        line("Exact", [&](const TableRow& r) { return std::to_string(r.exact); });
        line("Failed", [&](const TableRow& r) { return std::to_string(r.failed); });
        os << '\n';
    }
}

}  // namespace musel
