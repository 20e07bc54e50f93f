#include <musel/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

using namespace musel;
namespace fs = std::filesystem;
using Json = cli::Json;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("musel_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& text) const
    {
        std::ofstream(path(name)) << text;
        return path(name);
    }

    std::string write_matrix(const std::string& name, const Matrix& m) const
    {
        std::ostringstream os;
        write_csv(os, m);
        return write(name, os.str());
    }

    std::string write_vector(const std::string& name, const Vector& v) const
    {
        return write_matrix(name, Matrix(v.size(), 1, v));
    }

    static std::string slurp(const std::string& p)
    {
        std::ifstream in(p);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    fs::path dir_;
};

Matrix gaussian(std::size_t n, std::size_t p, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) m(i, j) = g(rng);
    return m;
}

Matrix equicorrelated(std::size_t p, double rho)
{
    Matrix m(p, p, rho);
    for (std::size_t i = 0; i < p; ++i) m(i, i) = 1.0;
    return m;
}

}  // namespace

TEST_F(CliTest, EstimateZeroResponseGivesZero)
{
    const std::string z = write_matrix("z.csv", gaussian(8, 4, 1));
    const std::string y = write_vector("y.csv", Vector(8, 0.0));
    const Outcome o = run_cli({"estimate", "--design", z, "--response", y, "--mode", "mu", "--mu", "0.1", "--tau", "0.01"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    const Json j = Json::parse(o.out);
    EXPECT_EQ(j["theta"].get<std::vector<double>>(), Vector(4, 0.0));
    EXPECT_EQ(j["l1"].get<double>(), 0.0);
    EXPECT_EQ(j["status"], "optimal");
}

TEST_F(CliTest, EstimateMatchesLibraryAndIsFeasible)
{
    const Matrix x = gaussian(12, 6, 2);
    Vector theta(6, 0.0);
    theta[1] = 0.7;
    theta[4] = 0.3;
    const Vector yv = matvec(x, theta);
    const std::string z = write_matrix("z.csv", x);
    const std::string y = write_vector("y.csv", yv);
    for (const std::string mode : {"mu", "dantzig"}) {
        const Outcome o = run_cli({"estimate", "--design", z, "--response", y, "--mode", mode, "--mu", "0.05", "--tau",
                                   "0.02", "--out", path("est.json")});
        ASSERT_EQ(o.code, cli::kOk) << o.err;
        const Json j = Json::parse(slurp(path("est.json")));
        SelectorConfig cfg;
        cfg.mu = mode == "mu" ? 0.05 : 0.0;
        cfg.tau = 0.02;
        const Estimate e = solve_mu_selector(read_csv(z), read_vector_csv(y), cfg);
        const Vector got = j["theta"].get<std::vector<double>>();
        for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(got[k], e.theta[k], 1e-9) << mode;
        EXPECT_LE(j["feasibility_residual"].get<double>(), 1e-7) << mode;
    }
}

TEST_F(CliTest, EstimateFreeDomainReportsRounds)
{
    const std::string z = write_matrix("z.csv", gaussian(10, 5, 3));
    const std::string y = write_vector("y.csv", gaussian(10, 1, 4).data());
    const Outcome o = run_cli(
        {"estimate", "--design", z, "--response", y, "--mode", "mu", "--mu", "0.1", "--tau", "0.05", "--domain", "free"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    const Json j = Json::parse(o.out);
    EXPECT_TRUE(j["certified"].get<bool>());
    EXPECT_GE(j["rounds"].get<int>(), 1);
    EXPECT_LE(j["feasibility_residual"].get<double>(), 1e-7);
}

TEST_F(CliTest, EstimateMissingModeNeedsPi)
{
    const std::string z = write_matrix("z.csv", gaussian(8, 4, 5));
    const std::string y = write_vector("y.csv", Vector(8, 1.0));
    EXPECT_EQ(run_cli({"estimate", "--design", z, "--response", y, "--mode", "missing", "--tau", "0.1"}).code,
              cli::kUsage);
    EXPECT_EQ(run_cli({"estimate", "--design", z, "--response", y, "--mode", "missing", "--tau", "0.1", "--pi", "0.1",
                       "--estimate-pi"})
                  .code,
              cli::kUsage);
    const Outcome o =
        run_cli({"estimate", "--design", z, "--response", y, "--mode", "missing", "--tau", "0.1", "--mu", "0.1", "--pi", "0.2"});
    EXPECT_NE(o.code, cli::kUsage) << o.err;
    EXPECT_EQ(Json::parse(o.out)["pi_used"].get<double>(), 0.2);
}

TEST_F(CliTest, EstimateMalformedCsvNamesPosition)
{
    const std::string z = write("z.csv", "1,2\n3,abc\n");
    const std::string y = write("y.csv", "1\n2\n");
    const Outcome o = run_cli({"estimate", "--design", z, "--response", y, "--mode", "mu", "--tau", "0.1"});
    EXPECT_EQ(o.code, cli::kInputError);
    EXPECT_NE(o.err.find("row 2, column 2"), std::string::npos) << o.err;
}

TEST_F(CliTest, EstimateRaggedCsvAndLengthMismatch)
{
    const std::string z = write("z.csv", "1,2\n3\n");
    const std::string y = write("y.csv", "1\n2\n");
    const Outcome ragged = run_cli({"estimate", "--design", z, "--response", y, "--mode", "mu", "--tau", "0.1"});
    EXPECT_EQ(ragged.code, cli::kInputError);
    EXPECT_NE(ragged.err.find("row 2"), std::string::npos) << ragged.err;

    const std::string z2 = write("z2.csv", "1,2\n3,4\n");
    const std::string y3 = write("y3.csv", "1\n2\n3\n");
    EXPECT_EQ(run_cli({"estimate", "--design", z2, "--response", y3, "--mode", "mu", "--tau", "0.1"}).code,
              cli::kInputError);
}

TEST_F(CliTest, EstimateInfeasibleExitCode)
{
    const std::string z = write("z.csv", "1\n");
    const std::string y = write("y.csv", "-1\n");
    const Outcome o = run_cli({"estimate", "--design", z, "--response", y, "--mode", "dantzig", "--tau", "0.1"});
    EXPECT_EQ(o.code, cli::kInfeasible) << o.out;
    EXPECT_EQ(Json::parse(o.out)["status"], "infeasible");
}

TEST_F(CliTest, SimulateNeedsSeed)
{
    const std::string cfg = write("c.json", R"({"n":20,"p":10,"reps":2})");
    const Outcome o = run_cli({"simulate", "--config", cfg});
    EXPECT_EQ(o.code, cli::kUsage);
    EXPECT_NE(o.err.find("--seed"), std::string::npos);
}

TEST_F(CliTest, SimulateRejectsUnknownKeyByName)
{
    const std::string cfg = write("c.json", R"({"n":20,"p":10,"replications":2})");
    const Outcome o = run_cli({"simulate", "--config", cfg, "--seed", "1"});
    EXPECT_EQ(o.code, cli::kUsage);
    EXPECT_NE(o.err.find("replications"), std::string::npos) << o.err;

    const std::string typed = write("t.json", R"({"n":"twenty"})");
    const Outcome t = run_cli({"simulate", "--config", typed, "--seed", "1"});
    EXPECT_EQ(t.code, cli::kUsage);
    EXPECT_NE(t.err.find("'n'"), std::string::npos) << t.err;
}

TEST_F(CliTest, SimulateInvalidConfigIsUsageError)
{
    const std::string cfg = write("c.json", R"({"n":20,"p":10,"s_list":[11]})");
    EXPECT_EQ(run_cli({"simulate", "--config", cfg, "--seed", "1"}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"simulate", "--preset", "nope", "--seed", "1"}).code, cli::kUsage);
}

TEST_F(CliTest, SimulateIsByteReproducible)
{
    const std::string cfg =
        write("c.json", R"({"n":20,"p":10,"reps":2,"s_list":[1,2],"delta_list":[0,0.05],"estimators":["MU","CMU","Dantzig"]})");
    const Outcome a = run_cli({"simulate", "--config", cfg, "--seed", "42", "--threads", "1"});
    const Outcome b = run_cli({"simulate", "--config", cfg, "--seed", "42", "--threads", "3"});
    ASSERT_EQ(a.code, cli::kOk) << a.err;
    EXPECT_EQ(a.out, b.out);
    const Outcome c = run_cli({"simulate", "--config", cfg, "--seed", "43", "--threads", "1"});
    EXPECT_NE(a.out, c.out);
}

TEST_F(CliTest, SimulateRowCountAndSideFiles)
{
    const std::string cfg =
        write("c.json", R"({"n":20,"p":10,"reps":2,"s_list":[1],"delta_list":[0.0,0.05,0.1]})");
    const std::string out = path("t.csv");
    const Outcome o = run_cli({"simulate", "--config", cfg, "--seed", "5", "--out", out, "--raw", "--markdown"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    EXPECT_TRUE(o.out.empty());
    std::ifstream in(out);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 1U + 3U * 2U);

    const Json raw = Json::parse(slurp(out + ".raw.json"));
    EXPECT_EQ(raw.size(), 3U * 2U * 2U);
    EXPECT_NE(slurp(out + ".md").find('|'), std::string::npos);

    EXPECT_EQ(run_cli({"simulate", "--config", cfg, "--seed", "5", "--raw"}).code, cli::kUsage);
}

TEST_F(CliTest, SimulateOverridesApply)
{
    const std::string cfg = write("c.json", R"({"n":20,"p":10,"reps":5,"s_list":[1],"delta_list":[0.05]})");
    const std::string out = path("t.csv");
    ASSERT_EQ(run_cli({"simulate", "--config", cfg, "--seed", "5", "--reps", "1", "--out", out, "--raw"}).code, cli::kOk);
    EXPECT_EQ(Json::parse(slurp(out + ".raw.json")).size(), 2U);
}

TEST_F(CliTest, SensitivityIdentity)
{
    Matrix eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    const std::string g = write_matrix("g.csv", eye);
    const Outcome o = run_cli({"sensitivity", "--gram", g, "--s", "1", "--q", "inf"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    const Json j = Json::parse(o.out);
    EXPECT_NEAR(j["value"].get<double>(), 1.0, 1e-9);
    EXPECT_EQ(j["kind"], "Exact");
    EXPECT_FALSE(j.contains("wall_time"));
    EXPECT_TRUE(Json::parse(run_cli({"sensitivity", "--gram", g, "--s", "1", "--timing"}).out).contains("wall_time"));
}

TEST_F(CliTest, SensitivityCoordinateOnEquicorrelated)
{
    const std::string g = write_matrix("g.csv", equicorrelated(2, 0.5));
    const Outcome o = run_cli({"sensitivity", "--gram", g, "--s", "1", "--q", "star:2"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    EXPECT_NEAR(Json::parse(o.out)["value"].get<double>(), 0.5, 1e-9);
    EXPECT_EQ(run_cli({"sensitivity", "--gram", g, "--s", "1", "--q", "star:3"}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"sensitivity", "--gram", g, "--s", "3"}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"sensitivity", "--gram", g, "--s", "1", "--q", "0.5"}).code, cli::kUsage);
}

TEST_F(CliTest, SensitivityLqKinds)
{
    const std::string g = write_matrix("g.csv", equicorrelated(3, 0.3));
    const Json two = Json::parse(run_cli({"sensitivity", "--gram", g, "--s", "2", "--q", "2"}).out);
    EXPECT_EQ(two["kind"], "Exact");
    const Json three = Json::parse(run_cli({"sensitivity", "--gram", g, "--s", "2", "--q", "3"}).out);
    EXPECT_EQ(three["kind"], "LowerBound");
    EXPECT_LE(three["value"].get<double>(), two["value"].get<double>() * 10.0);
}

TEST_F(CliTest, SensitivityEmpiricalMatchesLibrary)
{
    const Matrix z = gaussian(30, 4, 6);
    const Vector d{0.01, 0.02, 0.0, 0.05};
    const std::string zp = write_matrix("z.csv", z);
    const std::string dp = write_vector("d.csv", d);
    const Outcome o = run_cli({"sensitivity", "--empirical", "--design", zp, "--dhat", dp, "--s", "2", "--q", "inf"});
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    const SensitivityResult r = kappa_inf_exact(empirical_gram(read_csv(zp), CompensationDiagonal{read_vector_csv(dp), {}}), 2);
    EXPECT_EQ(Json::parse(o.out)["value"].get<double>(), r.value);
    EXPECT_EQ(run_cli({"sensitivity", "--empirical", "--design", zp, "--s", "2"}).code, cli::kUsage);
}

TEST_F(CliTest, SensitivityBudgetExceeded)
{
    const std::string g = write_matrix("g.csv", equicorrelated(12, 0.1));
    const Outcome o = run_cli({"sensitivity", "--gram", g, "--s", "4", "--q", "star:1", "--max-lps", "10"});
    EXPECT_EQ(o.code, cli::kBudgetExceeded);
    EXPECT_NE(o.err.find("--lower-bound"), std::string::npos);
    const Outcome lb = run_cli({"sensitivity", "--gram", g, "--s", "4", "--q", "star:1", "--lower-bound"});
    ASSERT_EQ(lb.code, cli::kOk) << lb.err;
    EXPECT_EQ(Json::parse(lb.out)["kind"], "LowerBound");
}

TEST_F(CliTest, ThresholdsFiniteAndMatchLibrary)
{
    const std::vector<std::string> base{"thresholds", "--gamma-xi", "0.5", "--gamma-Xi", "0.3", "--m2", "1.2",
                                        "--m4", "3", "--pi", "0.1", "--n", "100", "--p", "500"};
    auto args = base;
    args.insert(args.end(), {"--eps", "0.5", "--l1", "1.5"});
    const Outcome o = run_cli(args);
    ASSERT_EQ(o.code, cli::kOk) << o.err;
    const Json j = Json::parse(o.out);

    NoiseParams prm;
    prm.gamma_xi = 0.5;
    prm.gamma_Xi = 0.3;
    prm.m2 = 1.2;
    prm.m4 = 3.0;
    prm.epsilon = 0.5;
    prm.n = 100;
    prm.p = 500;
    prm = with_default_constants(prm);
    const Thresholds t = assemble_thresholds(subgaussian_deltas(prm), b_missing(0.5, 0.1, 3.0, 100, 500));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_TRUE(std::isfinite(j["delta"][i].get<double>()));
        EXPECT_EQ(j["delta"][i].get<double>(), t.delta[i]) << i;
    }
    EXPECT_EQ(j["b"].get<double>(), t.b);
    EXPECT_EQ(j["mu_eps"].get<double>(), t.mu_eps);
    EXPECT_EQ(j["tau_eps"].get<double>(), t.tau_eps);
    EXPECT_EQ(j["nu"].get<double>(), nu_bound(t, t.delta[0], 1.5));
    EXPECT_EQ(j["inputs"]["gamma0"].get<double>(), prm.gamma0);
}

TEST_F(CliTest, ThresholdsScaleWithN)
{
    auto at = [](const std::string& n) {
        const Outcome o = run_cli({"thresholds", "--gamma-xi", "1", "--gamma-Xi", "1", "--m2", "1", "--n", n, "--p",
                                   "50", "--eps", "0.05", "--t0", "1e12"});
        EXPECT_EQ(o.code, cli::kOk) << o.err;
        return Json::parse(o.out)["delta"][1].get<double>();
    };
    EXPECT_NEAR(at("200") / at("100"), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST_F(CliTest, ThresholdsRejectInvalid)
{
    for (const std::string eps : {"0", "1", "1.5", "-0.1"}) {
        const Outcome o = run_cli({"thresholds", "--gamma-xi", "1", "--gamma-Xi", "1", "--m2", "1", "--n", "100", "--p",
                                   "50", "--eps", eps});
        EXPECT_EQ(o.code, cli::kUsage) << eps;
    }
    EXPECT_EQ(run_cli({"thresholds", "--gamma-xi", "1"}).code, cli::kUsage);
}

TEST_F(CliTest, UsageErrors)
{
    EXPECT_EQ(run_cli({}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"estimate", "--design", "a.csv"}).code, cli::kUsage);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, BinaryExitCodes)
{
    const std::string bin = MUSEL_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int raw = std::system((bin + " " + args + " >" + path("o.txt") + " 2>" + path("e.txt")).c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    EXPECT_EQ(status("simulate --preset table1"), cli::kUsage);
    EXPECT_EQ(status("estimate --design " + path("missing.csv") + " --response x --mode mu --tau 0.1"), cli::kInputError);
    const std::string g = write("g.csv", "1,0\n0,1\n");
    EXPECT_EQ(status("sensitivity --gram " + g + " --s 1"), cli::kOk);
    EXPECT_NE(slurp(path("o.txt")).find("\"Exact\""), std::string::npos);
}
