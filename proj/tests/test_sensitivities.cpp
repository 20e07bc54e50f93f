#include <musel/random.hpp>
#include <musel/sensitivities.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace musel;

namespace {

GramMatrix two_by_two(double r) { return GramMatrix(Matrix(2, 2, {1.0, r, r, 1.0})); }

// Unit-diagonal Gram matrix of a random normalized design.
GramMatrix random_gram(std::size_t n, std::size_t p, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix x(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) x(i, j) = g(rng);
    return gram(normalize_design(x));
}

void expect_certificate(const GramMatrix& psi, const SensitivityResult& r)
{
    ASSERT_TRUE(r.certificate.has_value());
    const Vector& d = *r.certificate;
    bool in_some_cone = false;
    for_each_subset(psi.dim(), r.s, [&](const IndexSet& j) { in_some_cone = in_some_cone || in_cone(d, j, 1e-9); });
    EXPECT_TRUE(in_some_cone);
    EXPECT_NEAR(certificate_value(psi, d, r.norm), r.value, 1e-7);
}

}  // namespace

TEST(InCone, Cases)
{
    EXPECT_TRUE(in_cone(Vector{1.0, 0.0, 0.0}, IndexSet{0}));
    EXPECT_FALSE(in_cone(Vector{0.0, 1.0, 0.0}, IndexSet{0}));
    EXPECT_TRUE(in_cone(Vector{1.0, -0.5, 0.5}, IndexSet{0}));
    EXPECT_FALSE(in_cone(Vector{1.0, -0.5, 0.6}, IndexSet{0}));
}

TEST(KappaInf, IdentityIsOne)
{
    const GramMatrix id(Matrix::identity(4));
    for (std::size_t s = 1; s <= 3; ++s) {
        const SensitivityResult r = kappa_inf_exact(id, s);
        EXPECT_EQ(r.kind, SensitivityKind::Exact);
        EXPECT_NEAR(r.value, 1.0, 1e-9);
        expect_certificate(id, r);
    }
}

TEST(KappaInf, TwoDimensionalGrid)
{
    const GramMatrix psi = two_by_two(0.5);
    EXPECT_NEAR(kappa_inf_exact(psi, 1).value, 0.5, 1e-9);
    EXPECT_NEAR(oracle::kappa_2d_grid(psi.matrix(), kInf), 0.5, 1e-6);
    for (double r : {-0.7, -0.2, 0.3, 0.9}) {
        const GramMatrix m = two_by_two(r);
        EXPECT_NEAR(kappa_inf_exact(m, 1).value, oracle::kappa_2d_grid(m.matrix(), kInf), 1e-6) << r;
    }
}

TEST(KappaInf, BudgetIsEnforced)
{
    SensitivityOptions opt;
    opt.max_lps = 10;
    EXPECT_THROW(kappa_inf_exact(GramMatrix(Matrix::identity(4)), 2, opt), BudgetExceeded);
    EXPECT_THROW(kappa_inf_exact(GramMatrix(Matrix::identity(4)), 0), std::invalid_argument);
    EXPECT_THROW(kappa_inf_exact(GramMatrix(Matrix::identity(4)), 5), std::invalid_argument);
}

TEST(KappaOne, IdentityValues)
{
    const GramMatrix id(Matrix::identity(4));
    const SensitivityResult one = kappa_one(id, 1), two = kappa_one(id, 2);
    EXPECT_NEAR(one.value, 0.5, 1e-9);
    EXPECT_NEAR(two.value, 0.25, 1e-9);
    EXPECT_EQ(one.kind, SensitivityKind::Exact);
    ASSERT_TRUE(one.crosscheck.has_value());
    expect_certificate(id, two);
}

TEST(KappaOne, LabelledLowerBoundWithoutCrossCheck)
{
    SensitivityOptions opt;
    opt.one_crosscheck_max_p = 0;
    const SensitivityResult r = kappa_one(GramMatrix(Matrix::identity(3)), 1, opt);
    EXPECT_EQ(r.kind, SensitivityKind::LowerBound);
    EXPECT_FALSE(r.crosscheck.has_value());
    EXPECT_NEAR(r.value, 0.5, 1e-9);
}

TEST(KappaOne, TwoDimensionalGrid)
{
    for (double r : {-0.6, 0.1, 0.5, 0.8}) {
        const GramMatrix m = two_by_two(r);
        EXPECT_NEAR(kappa_one(m, 1).value, oracle::kappa_2d_grid(m.matrix(), 1.0), 1e-6) << r;
    }
}

TEST(KappaQFromInf, Values)
{
    EXPECT_EQ(kappa_q_from_inf(0.7, 3, kInf), 0.7);
    EXPECT_DOUBLE_EQ(kappa_q_from_inf(1.0, 1, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(kappa_q_from_inf(1.0, 2, 2.0), 0.5);
    EXPECT_THROW(kappa_q_from_inf(1.0, 1, 0.5), std::invalid_argument);
}

TEST(KappaStar, IdentityAndTwoDimensional)
{
    const GramMatrix id(Matrix::identity(3));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(kappa_star(id, 2, k).value, 1.0, 1e-9);
    const GramMatrix psi = two_by_two(0.5);
    const SensitivityResult r = kappa_star(psi, 1, 0);
    EXPECT_EQ(r.kind, SensitivityKind::Exact);
    EXPECT_NEAR(r.value, 0.5, 1e-9);
    EXPECT_NEAR(oracle::kappa_star_2d_grid(psi.matrix(), 0), 0.5, 1e-6);
    expect_certificate(psi, r);
    for (double c : {-0.4, 0.2, 0.7}) {
        const GramMatrix m = two_by_two(c);
        for (std::size_t k = 0; k < 2; ++k)
            EXPECT_NEAR(kappa_star(m, 1, k).value, oracle::kappa_star_2d_grid(m.matrix(), k), 1e-6) << c;
    }
}

TEST(KappaStar, FallbackIsLabelled)
{
    SensitivityOptions opt;
    opt.max_lps = 2;
    const GramMatrix psi = random_gram(20, 4, 3);
    const SensitivityResult r = kappa_star(psi, 2, 1, opt);
    EXPECT_EQ(r.kind, SensitivityKind::LowerBound);
    EXPECT_TRUE(r.norm.is_coordinate());
    EXPECT_LE(r.value, kappa_star(psi, 2, 1).value + 1e-9);
    opt.star_fallback = false;
    EXPECT_THROW(kappa_star(psi, 2, 1, opt), BudgetExceeded);
}

TEST(KappaLowerBound, BelowExactAndMonotone)
{
    EXPECT_NEAR(kappa_lower_bound(GramMatrix(Matrix::identity(4)), 2).value, 1.0, 1e-9);
    const GramMatrix psi(Matrix(3, 3, {1.0, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 1.0}));
    EXPECT_LE(kappa_lower_bound(psi, 1).value, kappa_inf_exact(psi, 1).value + 1e-9);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GramMatrix g = random_gram(10, 5, seed);
        double prev = kInf;
        for (std::size_t s = 1; s <= 4; ++s) {
            const double v = kappa_lower_bound(g, s).value;
            EXPECT_LE(v, prev + 1e-12);
            EXPECT_LE(v, kappa_inf_exact(g, s).value + 1e-9);
            prev = v;
        }
    }
}

TEST(KappaVertex, IdentityAndTwoDimensional)
{
    EXPECT_NEAR(kappa_q_vertex(GramMatrix(Matrix::identity(4)), 1, 1.0).value, 0.5, 1e-9);
    EXPECT_NEAR(kappa_q_vertex(GramMatrix(Matrix::identity(4)), 1, 2.0).value, 1.0 / std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(kappa_q_vertex(GramMatrix(Matrix::identity(4)), 2, 2.0).value, 0.5, 1e-9);
    for (double r : {-0.5, 0.3, 0.8})
        for (double q : {1.0, 1.5, 2.0, kInf}) {
            const GramMatrix m = two_by_two(r);
            EXPECT_NEAR(kappa_q_vertex(m, 1, q).value, oracle::kappa_2d_grid(m.matrix(), q), 1e-6) << r << " " << q;
        }
    EXPECT_THROW(kappa_q_vertex(GramMatrix(Matrix::identity(7)), 1, 2.0), BudgetExceeded);
}

TEST(KappaVertex, SingularGramGivesZero)
{
    const GramMatrix psi(Matrix(2, 2, {1.0, 1.0, 1.0, 1.0}));
    EXPECT_EQ(kappa_q_vertex(psi, 1, 2.0).value, 0.0);
    EXPECT_NEAR(kappa_inf_exact(psi, 1).value, 0.0, 1e-12);
}

TEST(Sensitivities, ExactFormsAgreeWithEachOther)
{
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const GramMatrix psi = random_gram(12, 4, 40 + seed);
        for (std::size_t s : {1U, 2U}) {
            const SensitivityResult inf = kappa_inf_exact(psi, s);
            const SensitivityResult one = kappa_one(psi, s);
            EXPECT_NEAR(kappa_q_vertex(psi, s, kInf).value, inf.value, 1e-7);
            // the split LP may undercut the exact value; it is promoted only on agreement
            ASSERT_TRUE(one.crosscheck.has_value());
            EXPECT_NEAR(kappa_q_vertex(psi, s, 1.0).value, *one.crosscheck, 1e-7);
            EXPECT_LE(one.value, *one.crosscheck + 1e-9);
            EXPECT_EQ(one.kind == SensitivityKind::Exact, std::abs(one.value - *one.crosscheck) <= 1e-5);
            expect_certificate(psi, inf);
            if (one.kind == SensitivityKind::Exact) expect_certificate(psi, one);
            expect_certificate(psi, kappa_q_vertex(psi, s, 2.0));
        }
    }
}

TEST(Sensitivities, RandomSearchNeverBeatsExact)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const GramMatrix psi = random_gram(10, 4, 60 + seed);
        for (std::size_t s : {1U, 2U})
            for (double q : {1.0, 2.0, kInf}) {
                const double exact = kappa_q_vertex(psi, s, q).value;
                const double search = oracle::kappa_random_search(psi.matrix(), s, q, 20000, seed);
                EXPECT_LE(exact, search + 1e-9);
                EXPECT_LE(search, 1.5 * exact + 1e-3) << "search far above the exact value";
            }
    }
}

TEST(Sensitivities, FixedSizeSubsetsSuffice)
{
    SensitivityOptions all;
    all.all_subset_sizes = true;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const GramMatrix psi = random_gram(10, 4, 80 + seed);
        for (std::size_t s : {2U, 3U}) {
            EXPECT_NEAR(kappa_inf_exact(psi, s).value, kappa_inf_exact(psi, s, all).value, 1e-10);
            EXPECT_NEAR(kappa_one(psi, s).value, kappa_one(psi, s, all).value, 1e-10);
            EXPECT_NEAR(kappa_star(psi, s, 0).value, kappa_star(psi, s, 0, all).value, 1e-10);
        }
    }
}

// The (k1)–(k4) chain and κ_k* ≥ κ_∞ on random normalized designs.
TEST(Sensitivities, BoundChainHolds)
{
    int coherence_cases = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const std::size_t p = 3 + seed % 2;
        const GramMatrix psi = random_gram(seed % 3 == 0 ? 200 : 15, p, 1000 + seed);
        const double rho = coherence(psi);
        for (std::size_t s = 1; s <= 2; ++s) {
            const double inf = kappa_inf_exact(psi, s).value;
            const double one = kappa_one(psi, s).value;
            const double two = kappa_q_vertex(psi, s, 2.0).value;
            EXPECT_GE(one, kappa_q_from_inf(inf, s, 1.0) - 1e-9);
            EXPECT_GE(two, kappa_q_from_inf(inf, s, 2.0) - 1e-9);
            if (rho < 1.0 / (2.0 * static_cast<double>(s))) {
                ++coherence_cases;
                EXPECT_GE(inf, 1.0 - 2.0 * rho * static_cast<double>(s) - 1e-9);
            }
            const double re_s = re_constant_bruteforce(psi, s, 60);
            EXPECT_GE(one, re_s / (4.0 * static_cast<double>(s)) - 1e-6);
            if (2 * s <= p) {
                const double re_2s = re_constant_bruteforce(psi, 2 * s, 60);
                EXPECT_GE(two, c_q(2.0) / std::sqrt(static_cast<double>(s)) * re_2s - 1e-6);
            }
            for (std::size_t k = 0; k < p; ++k) EXPECT_GE(kappa_star(psi, s, k).value, inf - 1e-9);
        }
    }
    EXPECT_GT(coherence_cases, 5);
}

TEST(EmpiricalGram, Compensation)
{
    const Matrix z(2, 2, {1.0, 2.0, 3.0, 4.0});
    const GramMatrix plain = empirical_gram(z, {Vector(2, 0.0), Vector(2, 0.0)});
    EXPECT_EQ(plain.matrix(), gram(z).matrix());
    const GramMatrix comp = empirical_gram(z, {Vector{0.5, 1.0}, Vector(2, 0.1)});
    EXPECT_DOUBLE_EQ(comp(0, 0), 4.5);
    EXPECT_DOUBLE_EQ(comp(1, 1), 9.0);
    EXPECT_DOUBLE_EQ(comp(0, 1), 7.0);
    EXPECT_THROW(empirical_gram(z, {Vector{0.5}, Vector{0.1}}), DimensionError);
}

TEST(EmpiricalGram, ErrorShrinksWithN)
{
    // |Ψ̂ − Ψ|_∞ should roughly halve when n quadruples
    auto median_error = [](std::size_t n) {
        std::vector<double> errs;
        for (std::uint64_t seed = 0; seed < 21; ++seed) {
            Rng rng(derive_seed(17, {n, seed}));
            std::normal_distribution<double> g(0.0, 1.0), noise(0.0, 0.3);
            Matrix x(n, 20), z(n, 20);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < 20; ++j) {
                    x(i, j) = g(rng);
                    z(i, j) = x(i, j) + noise(rng);
                }
            const GramMatrix hat = empirical_gram(z, {Vector(20, 0.09), Vector(20, 0.0)});
            errs.push_back(norm_inf(subtract(hat.matrix().data(), gram(x).matrix().data())));
        }
        std::nth_element(errs.begin(), errs.begin() + 10, errs.end());
        return errs[10];
    };
    const double ratio = median_error(100) / median_error(400);
    EXPECT_GT(ratio, 1.4);
    EXPECT_LT(ratio, 2.8);
}

TEST(ErrorBounds, HandValues)
{
    SensitivityResult k1;
    k1.norm = NormSpec::lq(1.0);
    k1.value = 0.5;
    const Theorem1Report r = theorem1_bounds(0.38, {k1}, 1.5);
    ASSERT_EQ(r.lq.size(), 1U);
    EXPECT_NEAR(r.lq[0].second.value, 0.76, 1e-15);
    EXPECT_NEAR(r.prediction.value, 0.2888, 1e-15);

    const Theorem1Report zero = theorem1_bounds(0.0, {k1}, 1.5);
    EXPECT_EQ(zero.lq[0].second.value, 0.0);
    EXPECT_EQ(zero.prediction.value, 0.0);

    SensitivityResult flat = k1;
    flat.value = 0.0;
    const Theorem1Report vac = theorem1_bounds(0.38, {flat}, 1.5);
    EXPECT_TRUE(vac.lq[0].second.vacuous);
    EXPECT_TRUE(std::isinf(vac.lq[0].second.value));
    EXPECT_NEAR(vac.prediction.value, 1.14, 1e-15);
}

TEST(ConeConditionBounds, HandValues)
{
    const auto b = theorem2_bounds(1.0, 1, kInf, 1.0, std::nullopt, 0.4);
    ASSERT_EQ(b.size(), 3U);
    EXPECT_DOUBLE_EQ(b[0].value, 4.0);
    EXPECT_NEAR(b[2].value, 5.0, 1e-12);
    EXPECT_DOUBLE_EQ(c_q(2.0), 0.25);
    EXPECT_THROW(theorem2_bounds(1.0, 1, kInf, std::nullopt, std::nullopt, 0.5), std::invalid_argument);
    const auto re2 = theorem2_bounds(1.0, 4, 2.0, std::nullopt, 0.5, std::nullopt);
    ASSERT_EQ(re2.size(), 1U);
    EXPECT_DOUBLE_EQ(re2[0].value, 16.0);
}

TEST(ConfidenceIntervals, HandValues)
{
    Estimate e;
    e.theta = {1.0, 0.0};
    SensitivityResult kq;
    kq.norm = NormSpec::lq(2.0);
    kq.value = 0.5;
    SensitivityResult kstar;
    kstar.norm = NormSpec::coordinate(0);
    kstar.value = 0.5;
    kstar.s = 2;
    const ConfidenceReport r = theorem3_ci(e, 0.05, 0.01, {kq, kstar}, 0.5);
    EXPECT_NEAR(r.lq[0].second.value, 0.12 / 0.45, 1e-15);
    EXPECT_NEAR(r.lq[0].second.value, 0.2667, 1e-4);
    EXPECT_EQ(r.s_used, 2U);
    EXPECT_NEAR(r.intervals[0].first, 1.0 - 0.12 / 0.45, 1e-15);

    const ConfidenceReport dantzig = theorem3_ci(e, 0.0, 0.01, {kq}, 0.5);
    EXPECT_NEAR(dantzig.lq[0].second.value, 0.04, 1e-15);

    const ConfidenceReport vac = theorem3_ci(e, 0.1, 0.01, {kq}, 0.1);
    EXPECT_EQ(vac.shrink, 0.0);
    EXPECT_TRUE(vac.lq[0].second.vacuous);
}

TEST(Interpolation, HolderBetweenOneAndTwo)
{
    Rng rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> uq(1.0, 2.0);
    for (int t = 0; t < 500; ++t) {
        Vector d(6);
        for (auto& v : d) v = g(rng);
        const double q = std::max(1.0 + 1e-9, uq(rng));
        const double lhs = std::pow(norm_q(d, q), q);
        const double rhs = std::pow(norm1(d), 2.0 - q) * std::pow(norm2(d), 2.0 * (q - 1.0));
        EXPECT_LE(lhs, rhs * (1.0 + 1e-10));
    }
}
