#pragma once

// Command-line front end. Needs CLI11.hpp and json.hpp on the include path.

#include <musel/csv.hpp>
#include <musel/estimators.hpp>
#include <musel/sensitivities.hpp>
#include <musel/sim.hpp>
#include <musel/thresholds.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace musel::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int {
    kOk = 0,
    kInputError = 1,
    kInfeasible = 2,
    kIterationLimit = 3,
    kBudgetExceeded = 4,
    kUsage = 64,
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Json number_or_null(double v)
{
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline void emit(const std::string& out_path, const std::string& text, std::ostream& out)
{
    if (out_path.empty() || out_path == "-") out << text;
    else write_file_atomic(out_path, text);
}

inline int status_exit(LpStatus s)
{
    switch (s) {
    case LpStatus::Optimal: return kOk;
    case LpStatus::Infeasible: return kInfeasible;
    default: return kIterationLimit;
    }
}

inline Domain parse_domain(const std::string& d)
{
    if (d == "nonneg") return Domain::NonnegativeOrthant;
    if (d == "free") return Domain::AllReals;
    throw UsageError("--domain must be nonneg or free");
}

}  // namespace detail

struct EstimateArgs {
    std::string design, response, mode, dhat, out, dump_lp;
    double mu = 0.0, tau = 0.0;
    std::optional<double> pi;
    bool estimate_pi = false, header = false;
    std::string domain = "nonneg";
};

inline int cmd_estimate(const EstimateArgs& a, std::ostream& out)
{
    if (a.mode != "mu" && a.mode != "cmu" && a.mode != "dantzig" && a.mode != "missing")
        throw UsageError("--mode must be one of mu, cmu, dantzig, missing");
    if (a.pi && a.estimate_pi) throw UsageError("--pi and --estimate-pi are mutually exclusive");
    if (a.mode == "missing" && !a.pi && !a.estimate_pi) throw UsageError("--mode missing needs --pi or --estimate-pi");
    if (a.mode == "cmu" && a.dhat.empty() && !a.pi && !a.estimate_pi)
        throw UsageError("--mode cmu needs --dhat, --pi or --estimate-pi");

    const Matrix z = read_csv(a.design, a.header);
    const Vector y = read_vector_csv(a.response, a.header);
    if (y.size() != z.rows())
        throw std::runtime_error("response has " + std::to_string(y.size()) + " entries, design has " +
                                 std::to_string(z.rows()) + " rows");

    SelectorConfig cfg;
    cfg.mu = a.mode == "dantzig" ? 0.0 : a.mu;
    cfg.tau = a.tau;
    cfg.domain = detail::parse_domain(a.domain);
    cfg.validate(z.cols());

    // The system whose residual is reported: the rescaled design with its compensation.
    Matrix z_used = z;
    Vector d_used(z.cols(), 0.0);
    Estimate e;
    const MissingPi pi{a.pi};
    const bool masked_input = a.mode == "missing" || (a.mode == "cmu" && a.dhat.empty());
    if (masked_input) {
        e = a.mode == "missing" ? solve_missing_data_cmu(z, y, pi, cfg) : solve_missing_data_rescaled(z, y, pi, cfg);
        const MaskedDesign masked{z, std::nullopt, std::nullopt};
        const Vector pis = uniform_pi(z.cols(), *e.pi_used);
        z_used = rescale(masked, pis);
        d_used = sigma_hat(masked, pis).sigma_hat_sq;
    } else if (a.mode == "cmu") {
        d_used = read_vector_csv(a.dhat, a.header);
        if (d_used.size() != z.cols()) throw std::runtime_error(a.dhat + ": D-hat length does not match the design");
        cfg.compensation = d_used;
        e = solve_compensated_mu(z, y, cfg);
    } else if (a.mode == "mu") {
        e = solve_mu_selector(z, y, cfg);
    } else {
        e = solve_dantzig(z, y, cfg.tau, cfg.domain, cfg);
    }

    const SelectorSystem sys = make_system(z_used, y, d_used);
    if (!a.dump_lp.empty()) {
        std::ostringstream lp;
        write_lp_text(lp, cfg.domain == Domain::NonnegativeOrthant ? build_direct_lp(sys, cfg.mu, cfg.tau)
                                                                    : build_fixed_bound_lp(sys, cfg.mu * e.l1_norm + cfg.tau));
        write_file_atomic(a.dump_lp, lp.str());
    }

    Json j;
    j["theta"] = e.theta;
    j["l1"] = e.l1_norm;
    j["support"] = e.support;
    j["status"] = to_string(e.status);
    j["feasibility_residual"] = constraint_residual(sys, e.theta, cfg.mu, cfg.tau);
    j["iterations"] = e.iterations;
    if (cfg.domain == Domain::AllReals) {
        j["rounds"] = e.rounds;
        j["certified"] = !e.warning;
    }
    if (e.pi_used) j["pi_used"] = *e.pi_used;
    detail::emit(a.out, j.dump(2) + "\n", out);
    return detail::status_exit(e.status);
}

/// Applies JSON keys to a SimConfig, rejecting unknown keys by name.
inline SimConfig apply_sim_json(SimConfig c, const Json& j)
{
    if (!j.is_object()) throw UsageError("simulation config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const Json& v = it.value();
        try {
            if (k == "n") c.n = v.get<std::size_t>();
            else if (k == "p") c.p = v.get<std::size_t>();
            else if (k == "s_list") c.s_list = v.get<std::vector<std::size_t>>();
            else if (k == "theta_value") c.theta_value = v.get<double>();
            else if (k == "noise_sd") c.noise_sd = v.get<double>();
            else if (k == "pi_star") c.pi_star = v.get<double>();
            else if (k == "delta_list") c.delta_list = v.get<std::vector<double>>();
            else if (k == "tau") {
                if (v.is_string() && v.get<std::string>() == "default") c.tau_rule = {};
                else c.tau_rule = {TauRule::Kind::Fixed, v.get<double>()};
            } else if (k == "reps") c.reps = v.get<std::size_t>();
            else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "estimators") {
                c.estimators.clear();
                for (const auto& e : v) {
                    const auto name = e.get<std::string>();
                    if (name == "MU") c.estimators.push_back(EstimatorKind::MU);
                    else if (name == "CMU") c.estimators.push_back(EstimatorKind::CMU);
                    else if (name == "Dantzig") c.estimators.push_back(EstimatorKind::Dantzig);
                    else throw UsageError("unknown estimator '" + name + "' (MU, CMU, Dantzig)");
                }
            } else if (k == "fresh_design") c.fresh_design = v.get<bool>();
            else if (k == "estimate_pi") c.estimate_pi = v.get<bool>();
            else if (k == "threads") c.threads = v.get<std::size_t>();
            else if (k == "nonzero_threshold") c.nonzero_threshold = v.get<double>();
            else throw UsageError("unknown config key '" + k + "'");
        } catch (const nlohmann::json::exception&) {
            throw UsageError("config key '" + k + "' has the wrong type");
        }
    }
    return c;
}

inline Json rep_json(const RepRecord& r)
{
    Json j;
    j["estimator"] = to_string(r.estimator);
    j["s"] = r.s;
    j["delta"] = r.delta;
    j["rep"] = r.rep;
    j["mu"] = r.mu;
    j["tau"] = r.tau;
    j["status"] = to_string(r.status);
    j["failed"] = r.failed;
    if (!r.failed) {
        j["err1"] = r.metrics.err1;
        j["err2"] = r.metrics.err2;
        j["err2_over_n"] = r.metrics.err2_over_n;
        j["nb1"] = r.metrics.nb1;
        j["nb2"] = r.metrics.nb2;
        j["exact"] = r.metrics.exact;
        j["support"] = support_of(r.theta_hat, 1e-8);
    }
    return j;
}

struct SimulateArgs {
    std::string config, preset, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> reps, threads;
    bool raw = false, markdown = false, fresh_design = false;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out)
{
    if (!a.seed) throw UsageError("simulate requires --seed");
    if ((a.raw || a.markdown) && (a.out.empty() || a.out == "-"))
        throw UsageError("--raw and --markdown need --out");
    SimConfig c;
    try {
        if (!a.preset.empty()) c = preset(a.preset);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw std::runtime_error(a.config + ": cannot open");
        Json j;
        try {
            j = Json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(a.config + ": " + e.what());
        }
        c = apply_sim_json(c, j);
    }
    c.seed = *a.seed;
    if (a.reps) c.reps = *a.reps;
    if (a.threads) c.threads = *a.threads;
    if (a.fresh_design) c.fresh_design = true;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const ExperimentResult res = run_experiment(c);
    std::ostringstream csv;
    write_rows_csv(csv, res.rows);
    if (a.raw) {
        Json arr = Json::array();
        for (const auto& r : res.records) arr.push_back(rep_json(r));
        write_file_atomic(a.out + ".raw.json", arr.dump(1) + "\n");
    }
    if (a.markdown) {
        std::ostringstream md;
        write_rows_markdown(md, res.rows);
        write_file_atomic(a.out + ".md", md.str());
    }
    detail::emit(a.out, csv.str(), out);
    return kOk;
}

struct SensitivityArgs {
    std::string gram, design, dhat, q = "inf", out;
    std::size_t s = 1;
    bool empirical = false, lower_bound = false, timing = false, header = false;
    std::size_t max_lps = 100000;
};

inline int cmd_sensitivity(const SensitivityArgs& a, std::ostream& out)
{
    GramMatrix psi;
    if (a.empirical) {
        if (a.design.empty() || a.dhat.empty()) throw UsageError("--empirical needs --design and --dhat");
        const Matrix z = read_csv(a.design, a.header);
        const Vector d = read_vector_csv(a.dhat, a.header);
        psi = empirical_gram(z, CompensationDiagonal{d, {}});
    } else {
        if (a.gram.empty()) throw UsageError("sensitivity needs --gram or --empirical");
        psi = GramMatrix(read_csv(a.gram, a.header), 1e-9);
    }
    if (a.s == 0 || a.s > psi.dim()) throw UsageError("--s must lie in [1, p]");

    SensitivityOptions opt;
    opt.max_lps = a.max_lps;
    opt.star_fallback = false;
    const auto t0 = std::chrono::steady_clock::now();
    SensitivityResult r;
    {
        if (a.q.rfind("star:", 0) == 0) {
            std::size_t k = 0;
            try {
                k = std::stoul(a.q.substr(5));
            } catch (const std::exception&) {
                throw UsageError("--q star:k needs a coordinate number");
            }
            if (k == 0 || k > psi.dim()) throw UsageError("--q star:k: k must lie in [1, p]");
            if (a.lower_bound) {
                r = kappa_lower_bound(psi, a.s, opt);
                r.norm = NormSpec::coordinate(k - 1);
            } else {
                r = kappa_star(psi, a.s, k - 1, opt);
            }
        } else {
            double q = 0.0;
            if (a.q == "inf") q = kInf;
            else {
                try {
                    q = std::stod(a.q);
                } catch (const std::exception&) {
                    throw UsageError("--q must be a number >= 1, inf or star:k");
                }
                if (!(q >= 1.0)) throw UsageError("--q must be >= 1");
            }
            if (a.lower_bound) {
                r = kappa_lower_bound(psi, a.s, opt);
                r.value = kappa_q_from_inf(r.value, a.s, q);
                r.norm = NormSpec::lq(q);
            } else if (std::isinf(q)) {
                r = kappa_inf_exact(psi, a.s, opt);
            } else if (q == 1.0) {
                r = kappa_one(psi, a.s, opt);
            } else if (q == 2.0 && psi.dim() <= 6) {
                r = kappa_q_vertex(psi, a.s, q, 6, opt);
            } else {
                r = kappa_inf_exact(psi, a.s, opt);
                r.value = kappa_q_from_inf(r.value, a.s, q);
                r.kind = SensitivityKind::LowerBound;
                r.certificate.reset();
                r.norm = NormSpec::lq(q);
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Json j;
    j["value"] = detail::number_or_null(r.value);
    j["kind"] = to_string(r.kind);
    j["s"] = r.s;
    j["q"] = a.q;
    if (r.certificate) j["certificate"] = *r.certificate;
    else j["certificate"] = nullptr;
    j["lp_count"] = r.lp_count;
    if (r.crosscheck) j["crosscheck"] = *r.crosscheck;
    if (a.timing) j["wall_time"] = secs;
    detail::emit(a.out, j.dump(2) + "\n", out);
    return kOk;
}

struct ThresholdArgs {
    double gamma_xi = 0.0, gamma_Xi = 0.0, m2 = 0.0, m4 = 0.0, pi = 0.0, eps = 0.0;
    std::optional<double> gamma0, t0, l1;
    std::size_t n = 0, p = 0;
    std::string out;
};

inline int cmd_thresholds(const ThresholdArgs& a, std::ostream& out)
{
    NoiseParams prm;
    prm.gamma_xi = a.gamma_xi;
    prm.gamma_Xi = a.gamma_Xi;
    prm.m2 = a.m2;
    prm.m4 = a.m4;
    prm.epsilon = a.eps;
    prm.n = a.n;
    prm.p = a.p;
    prm = with_default_constants(prm);
    if (a.gamma0) prm.gamma0 = *a.gamma0;
    if (a.t0) prm.t0 = *a.t0;
    Thresholds t;
    try {
        prm.validate();
        const double b = a.pi > 0.0 ? b_missing(a.eps, a.pi, a.m4, a.n, a.p) : 0.0;
        t = assemble_thresholds(subgaussian_deltas(prm), b);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    Json in;
    in["gamma_xi"] = prm.gamma_xi;
    in["gamma_Xi"] = prm.gamma_Xi;
    in["gamma0"] = prm.gamma0;
    in["t0"] = prm.t0;
    in["m2"] = prm.m2;
    in["m4"] = prm.m4;
    in["pi"] = a.pi;
    in["n"] = prm.n;
    in["p"] = prm.p;
    in["eps"] = prm.epsilon;
    Json j;
    j["inputs"] = in;
    j["delta"] = Json(std::vector<double>(t.delta.begin(), t.delta.end()));
    j["b"] = t.b;
    j["mu_eps"] = t.mu_eps;
    j["tau_eps"] = t.tau_eps;
    if (a.l1) j["nu"] = nu_bound(t, t.delta[0], *a.l1);
    detail::emit(a.out, j.dump(2) + "\n", out);
    return kOk;
}

/// Parses argv and dispatches. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Matrix-uncertainty selectors: estimation, simulation, sensitivities, thresholds"};
    app.require_subcommand(1);

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate", "Solve one selector on CSV data");
    est->add_option("--design", ea.design, "Design matrix CSV (masked design for missing/--pi modes)")->required();
    est->add_option("--response", ea.response, "Response vector CSV")->required();
    est->add_option("--mode", ea.mode, "mu | cmu | dantzig | missing")->required();
    est->add_option("--mu", ea.mu, "Relaxation mu >= 0");
    est->add_option("--tau", ea.tau, "Slack tau >= 0")->required();
    est->add_option("--pi", ea.pi, "Known missing probability");
    est->add_flag("--estimate-pi", ea.estimate_pi, "Estimate the missing probability from zeros");
    est->add_option("--dhat", ea.dhat, "Compensation diagonal CSV (cmu mode)");
    est->add_option("--domain", ea.domain, "nonneg | free");
    est->add_option("--out", ea.out, "Output JSON path (default stdout)");
    est->add_flag("--header", ea.header, "Skip the first line of every CSV");
    est->add_option("--dump-lp", ea.dump_lp)->group("");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo study");
    sim->add_option("--config", sa.config, "JSON config overriding the preset");
    sim->add_option("--preset", sa.preset, "table1..table5, full, reduced, estimated-pi");
    sim->add_option("--seed", sa.seed, "Base seed (required)");
    sim->add_option("--out", sa.out, "Output CSV path (default stdout)");
    sim->add_option("--reps", sa.reps, "Override the number of replications");
    sim->add_option("--threads", sa.threads, "Worker threads (default MUSEL_THREADS or all cores)");
    sim->add_flag("--raw", sa.raw, "Also write per-replication JSON to OUT.raw.json");
    sim->add_flag("--markdown", sa.markdown, "Also write table layout to OUT.md");
    sim->add_flag("--fresh-design", sa.fresh_design, "Draw a new design for every replication");

    SensitivityArgs na;
    auto* sen = app.add_subcommand("sensitivity", "Compute a sensitivity of a Gram matrix");
    sen->add_option("--gram", na.gram, "Gram matrix CSV");
    sen->add_option("--s", na.s, "Sparsity level")->required();
    sen->add_option("--q", na.q, "1 | 2 | inf | star:k (k is 1-based); other q >= 1 give a lower bound");
    sen->add_flag("--empirical", na.empirical, "Use (1/n)Z'Z - diag(D-hat)");
    sen->add_option("--design", na.design, "Design CSV for --empirical");
    sen->add_option("--dhat", na.dhat, "Compensation diagonal CSV for --empirical");
    sen->add_flag("--lower-bound", na.lower_bound, "Cheap valid lower bound instead of exact enumeration");
    sen->add_option("--max-lps", na.max_lps, "LP budget of exact enumeration");
    sen->add_flag("--timing", na.timing, "Add wall_time to the output");
    sen->add_flag("--header", na.header, "Skip the first line of every CSV");
    sen->add_option("--out", na.out, "Output JSON path (default stdout)");

    ThresholdArgs ta;
    auto* thr = app.add_subcommand("thresholds", "Noise thresholds for a given confidence level");
    thr->add_option("--gamma-xi", ta.gamma_xi, "Response noise subgaussian constant")->required();
    thr->add_option("--gamma-Xi", ta.gamma_Xi, "Design noise subgaussian constant")->required();
    thr->add_option("--m2", ta.m2, "max_j (1/n) sum_i X_ij^2")->required();
    thr->add_option("--m4", ta.m4, "max_j (1/n) sum_i X_ij^4");
    thr->add_option("--pi", ta.pi, "Missing probability");
    thr->add_option("--n", ta.n, "Sample size")->required();
    thr->add_option("--p", ta.p, "Dimension")->required();
    thr->add_option("--eps", ta.eps, "Confidence level epsilon in (0, 1)")->required();
    thr->add_option("--gamma0", ta.gamma0, "Subexponential scale (default from the gammas)");
    thr->add_option("--t0", ta.t0, "Subexponential range (default from the gammas)");
    thr->add_option("--l1", ta.l1, "|theta*|_1, to also report nu");
    thr->add_option("--out", ta.out, "Output JSON path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (*est) return cmd_estimate(ea, out);
        if (*sim) return cmd_simulate(sa, out);
        if (*sen) return cmd_sensitivity(na, out);
        if (*thr) return cmd_thresholds(ta, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const BudgetExceeded& e) {
        err << "error: " << e.what() << "\nrerun with --lower-bound for a cheaper valid lower bound\n";
        return kBudgetExceeded;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    std::vector<const char*> argv{"musel"};
    for (const auto& s : args) argv.push_back(s.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace musel::cli
