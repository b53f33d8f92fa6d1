#include <gtest/gtest.h>

#include <atomic>
#include <mutex>
#include <random>

#include "ecgrom/identify.hpp"

using namespace ecgrom;

namespace {

EcgTrace einthoven_trace(std::size_t n, double dt, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    EcgTrace e;
    e.dt = dt;
    e.lead_names = {"I", "II", "III", "aVR"};
    for (std::size_t k = 0; k < n; ++k) {
        VectorXd r(4);
        for (auto& x : r) x = g(rng);
        e.append(r);
    }
    return e;
}

double sphere(const Theta& t, const Theta& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += (t[i] - c[i]) * (t[i] - c[i]);
    return s;
}

SearchBox unit_box(std::size_t d) { return {Theta(d, 0.0), Theta(d, 1.0), {}}; }

GaConfig small_config(std::uint64_t seed) {
    GaConfig c;
    c.N_p = 20;
    c.N_g = 8;
    c.N_ex = 100;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Cost, MatchesBruteForceSum) {
    const EcgTrace a = einthoven_trace(5, 0.5, 1), b = einthoven_trace(5, 0.5, 2);
    double ref = 0.0;
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t j = 0; j < 3; ++j) ref += (a.at(k, j) - b.at(k, j)) * (a.at(k, j) - b.at(k, j));
    EXPECT_NEAR(cost_j(a, b), 0.5 * ref, 1e-14);
    EXPECT_EQ(cost_j(a, a), 0.0);
}

TEST(Cost, ConstantLeadOffsetAndOtherLeadsIgnored) {
    const EcgTrace ref = einthoven_trace(40, 0.5, 3);
    EcgTrace sim = ref;
    for (std::size_t k = 0; k < sim.num_samples(); ++k) {
        sim.data[k * 4] += 0.3;      // lead I
        sim.data[k * 4 + 3] += 9.0;  // aVR is not part of the cost
    }
    EXPECT_NEAR(cost_j(sim, ref), 0.5 * 40 * 0.09, 1e-12);
    EXPECT_THROW(cost_j(einthoven_trace(39, 0.5, 3), ref), ConfigError);
    EXPECT_THROW(cost_j(einthoven_trace(40, 0.25, 3), ref), ConfigError);
    const auto eval = [&](const Theta&) { return sim; };
    EXPECT_NEAR(cost_j(Theta{1.0}, ref, eval), cost_j(sim, ref), 0.0);
}

TEST(MeanRelativeError, TabulatedIdentificationResults) {
    EXPECT_NEAR(mean_relative_error({0.95, 9.3e-4, 185, 126}), 9.6, 0.05);
    EXPECT_NEAR(mean_relative_error({0.93, 1.05e-3, 162, 128}), 11.7, 0.05);
    EXPECT_NEAR(mean_relative_error({0.86, 1e-3, 179, 123.5}), 5.2, 0.05);
    EXPECT_NEAR(mean_relative_error({0.83, 1.02e-3, 184.2, 123.1}), 4.1, 0.05);
    EXPECT_NEAR(mean_relative_error({0.83, 1.01e-3, 189, 123.2}), 3.0, 0.5);
    EXPECT_EQ(mean_relative_error(params4_reference()), 0.0);
    EXPECT_THROW(mean_relative_error({1.0, 2.0}), ConfigError);
}

TEST(MeanRelativeError, ClosedForm) {
    EXPECT_DOUBLE_EQ(mean_relative_error({0.88, 1e-3, 200, 120}), 2.5);
    EXPECT_DOUBLE_EQ(mean_relative_error({0.8, 1e-3, 200, 0}), 25.0);
}

TEST(Budget, TotalsMatchTheBudget) {
    for (auto [np, ng, nex] : {std::tuple{80, 15, 600}, {40, 10, 200}, {30, 10, 150}, {120, 12, 850}, {300, 20, 1700}}) {
        GaConfig c;
        c.N_p = np;
        c.N_g = ng;
        c.N_ex = nex;
        const auto s = budget_schedule(c);
        ASSERT_EQ(static_cast<int>(s.size()), ng);
        EXPECT_EQ(std::accumulate(s.begin(), s.end(), 0), nex) << np << "/" << ng;
        const int full = (ng + 2) / 3;
        // Early generations are sampled in full while the budget lasts.
        for (int g = 0; g < full; ++g) EXPECT_EQ(s[g], std::min(np, std::max(0, nex - g * np)));
        for (int g = full + 1; g < ng; ++g) EXPECT_LE(s[g], s[g - 1]);
        EXPECT_EQ(budget_schedule(c, 0), np);
    }
}

TEST(Budget, SaturatedAndInfeasible) {
    GaConfig c;
    c.N_p = 10;
    c.N_g = 7;
    c.N_ex = 70;
    for (int v : budget_schedule(c)) EXPECT_EQ(v, 10);
    c.N_ex = 9;
    EXPECT_THROW(budget_schedule(c), ConfigError);
    c.N_ex = 70;
    EXPECT_THROW(budget_schedule(c, 7), ConfigError);
    c.N_p = 1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Database, ReusesDuplicates) {
    EvalDatabase db;
    EXPECT_EQ(db.add({1.0, 2.0}, 5.0), 5.0);
    EXPECT_EQ(db.add({1.0, 2.0 + 1e-14}, 7.0), 5.0);
    EXPECT_EQ(db.size(), 1u);
    db.add({1.0, 2.1}, 3.0);
    EXPECT_EQ(db.best().second, 3.0);
    EXPECT_FALSE(db.find({0.0, 0.0}));
}

TEST(Surrogate, InterpolatesTheDatabase) {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const SearchBox box{{0.0, 1e-3, 100.0}, {1.0, 2e-3, 300.0}, {}};
    std::vector<std::pair<Theta, double>> data;
    auto f = [&](const Theta& t) {
        const Theta z = box.normalize(t);
        return 3.0 * z[0] * z[0] + (z[1] - 0.3) * (z[1] - 0.3) + 2.0 * z[0] * z[2] + 1.0;
    };
    for (int i = 0; i < 50; ++i) {
        Theta t{u(rng), 1e-3 + 1e-3 * u(rng), 100.0 + 200.0 * u(rng)};
        data.emplace_back(t, f(t));
    }
    const RbfSurrogate s = RbfSurrogate::fit(data, box);
    EXPECT_TRUE(s.linear_tail());
    for (const auto& [t, y] : data) EXPECT_LE(std::abs(s(t) - y), 1e-8 * std::max(1.0, std::abs(y)));

    double mean = 0.0;
    for (const auto& d : data) mean += d.second / 50.0;
    std::vector<double> es, em;
    for (int i = 0; i < 100; ++i) {
        Theta t{u(rng), 1e-3 + 1e-3 * u(rng), 100.0 + 200.0 * u(rng)};
        es.push_back(std::abs(s(t) - f(t)));
        em.push_back(std::abs(f(t) - mean));
    }
    std::sort(es.begin(), es.end());
    std::sort(em.begin(), em.end());
    EXPECT_LT(es[50], em[50]);
}

TEST(Surrogate, SinglePointIsConstant) {
    const RbfSurrogate s = RbfSurrogate::fit({{{0.4, 0.4}, 2.5}}, unit_box(2));
    EXPECT_FALSE(s.linear_tail());
    EXPECT_NEAR(s({0.1, 0.9}), 2.5, 1e-12);
    EXPECT_NEAR(s({0.4, 0.4}), 2.5, 1e-12);
    EXPECT_THROW(RbfSurrogate::fit({}, unit_box(2)), ConfigError);
}

TEST(Surrogate, DegenerateSitesFallBackToRegularization) {
    // A repeated site with conflicting values has no interpolant.
    const std::vector<std::pair<Theta, double>> data{
        {{0.1, 0.1}, 1.0}, {{0.1, 0.1}, 2.0}, {{0.5, 0.2}, 0.0}, {{0.9, 0.7}, 3.0}};
    const RbfSurrogate s = RbfSurrogate::fit(data, unit_box(2));
    EXPECT_TRUE(s.regularized());
    EXPECT_TRUE(std::isfinite(s({0.5, 0.1})));
}

// 100 seeds of a 2D quadratic: the optimum is found in at least 95.
TEST(Ga, QuadraticFixture) {
    const Theta star{0.3, 0.7};
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        GaConfig c;
        c.N_p = 40;
        c.N_g = 30;
        c.N_ex = 1200;
        c.use_surrogate = false;
        c.seed = seed;
        const GaResult r = ga_minimize([&](const Theta& t) { return sphere(t, star); }, unit_box(2), c);
        hits += std::sqrt(sphere(r.best_theta, star)) <= 0.05;
    }
    EXPECT_GE(hits, 95);
}

TEST(Ga, ElitismAndBoxInvariants) {
    std::mutex mu;
    bool outside = false;
    const SearchBox box{{-1.0, 2.0, 0.0}, {1.0, 3.0, 10.0}, {}};
    CostFunction f = [&](const Theta& t) {
        {
            std::lock_guard<std::mutex> lk(mu);
            outside = outside || !box.contains(t);
        }
        return std::sin(5.0 * t[0]) + (t[1] - 2.9) * (t[1] - 2.9) + 0.01 * t[2];
    };
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        GaConfig c = small_config(seed);
        c.mutation_sigma0 = 2.0;  // large steps exercise the clamping
        const GaResult r = ga_minimize(f, box, c);
        ASSERT_TRUE(r.completed);
        ASSERT_EQ(static_cast<int>(r.history.size()), c.N_g);
        for (std::size_t g = 1; g < r.history.size(); ++g) EXPECT_LE(r.history[g].best_cost, r.history[g - 1].best_cost);
        EXPECT_TRUE(box.contains(r.best_theta));
        // The reported optimum carries an exact cost.
        EXPECT_EQ(r.best_cost, f(r.best_theta));
    }
    EXPECT_FALSE(outside);
}

TEST(Ga, ExactEvaluationsNeverExceedTheBudget) {
    std::atomic<int> calls{0};
    CostFunction f = [&](const Theta& t) {
        ++calls;
        return sphere(t, {0.2, 0.2, 0.9});
    };
    // A budget tight enough that late generations lean on the surrogate.
    GaConfig c = small_config(5);
    c.N_ex = 70;
    const GaResult r = ga_minimize(f, unit_box(3), c);
    EXPECT_EQ(calls.load(), r.exact_evaluations);
    EXPECT_LE(r.exact_evaluations, c.N_ex);
    int per_gen = 0, surrogate = 0;
    for (const auto& g : r.history) {
        per_gen += g.exact_evaluations;
        surrogate += g.surrogate_evaluations;
    }
    EXPECT_EQ(per_gen, r.exact_evaluations);
    EXPECT_GT(surrogate, 0);
    EXPECT_EQ(r.history.front().exact_evaluations, c.N_p);
}

TEST(Ga, DuplicatesAreEvaluatedOnce) {
    std::atomic<int> calls{0};
    CostFunction f = [&](const Theta& t) {
        ++calls;
        return t[0];
    };
    GaConfig c;
    c.N_p = 6;
    c.N_g = 1;
    c.N_ex = 6;
    const std::vector<Theta> init(6, Theta{0.5, 0.5});
    const GaResult r = ga_minimize(f, unit_box(2), c, init);
    EXPECT_EQ(calls.load(), 1);
    EXPECT_EQ(r.exact_evaluations, 1);
    EXPECT_EQ(r.best_theta, (Theta{0.5, 0.5}));
}

TEST(Ga, DeterministicAndIndependentOfWorkers) {
    CostFunction f = [](const Theta& t) { return sphere(t, {0.6, 0.1, 0.4}) + 0.1 * std::cos(9.0 * t[1]); };
    GaConfig c = small_config(11);
    const GaResult a = ga_minimize(f, unit_box(3), c);
    const GaResult b = ga_minimize(f, unit_box(3), c);
    c.workers = 4;
    const GaResult w = ga_minimize(f, unit_box(3), c);
    for (const GaResult* r : {&b, &w}) {
        ASSERT_EQ(r->history.size(), a.history.size());
        for (std::size_t g = 0; g < a.history.size(); ++g) {
            EXPECT_EQ(r->history[g].best_cost, a.history[g].best_cost);
            EXPECT_EQ(r->history[g].best_theta, a.history[g].best_theta);
            EXPECT_EQ(r->history[g].exact_evaluations, a.history[g].exact_evaluations);
        }
        EXPECT_EQ(r->best_theta, a.best_theta);
    }
    c.workers = 1;
    c.seed = 12;
    EXPECT_NE(ga_minimize(f, unit_box(3), c).best_theta, a.best_theta);
}

TEST(Ga, EvaluatorFailureKeepsPartialHistory) {
    std::atomic<int> calls{0};
    CostFunction f = [&](const Theta& t) {
        if (++calls > 30) throw NumericalError("solver diverged");
        return t[0];
    };
    const GaResult r = ga_minimize(f, unit_box(2), small_config(1));
    EXPECT_FALSE(r.completed);
    EXPECT_NE(r.error.find("solver diverged"), std::string::npos);
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.best_theta.size(), 2u);
}

TEST(Ga, RejectsInvalidInput) {
    CostFunction f = [](const Theta&) { return 0.0; };
    EXPECT_THROW(ga_minimize(f, {{1.0}, {0.0}, {}}, small_config(1)), ConfigError);
    EXPECT_THROW(ga_minimize(f, unit_box(2), small_config(1), {Theta{0.1}}), ConfigError);
    GaConfig c = small_config(1);
    c.workers = 0;
    EXPECT_THROW(ga_minimize(f, unit_box(2), c), ConfigError);
}

TEST(Geometry, ClosestPointOnTriangleMatchesSampling) {
    const Point2 a{0.0, 0.0}, b{2.0, 0.3}, c{0.5, 1.5};
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(-2.0, 4.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Point2 p{u(rng), u(rng)};
        const Point2 q = closest_point_on_triangle(p, a, b, c);
        double best = std::numeric_limits<double>::infinity();
        const int n = 300;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; i + j <= n; ++j) {
                const double s = static_cast<double>(i) / n, t = static_cast<double>(j) / n;
                best = std::min(best, distance(p, a + s * (b - a) + t * (c - a)));
            }
        EXPECT_LE(distance(p, q), best + 1e-12);
        EXPECT_GE(distance(p, q), best - 0.02);
    }
}

TEST(LvMaskTest, ProjectionLandsInTheLeftVentricle) {
    GeometryConfig g;
    g.h = 0.2;
    const Mesh m = build_idealized_geometry(g);
    const LvMask mask(m);
    const Point2 inside{g.lv_center.x + 2.5, g.lv_center.y};
    EXPECT_TRUE(mask.contains(inside));
    EXPECT_EQ(mask.project(inside), inside);
    EXPECT_FALSE(mask.contains(g.lv_center));
    const Point2 q = mask.project(g.lv_center);
    EXPECT_TRUE(mask.contains(q));
    const SearchBox box = mask.search_box();
    EXPECT_LE(box.lower[0], g.lv_center.x - 2.9);
    EXPECT_GE(box.upper[1], g.lv_center.y + 3.4);
    const Theta t = box.admit({100.0, -100.0});
    EXPECT_TRUE(mask.contains({t[0], t[1]}));
}

// Every candidate seen by the cost lies in the mask.
TEST(LvMaskTest, GaCandidatesStayInside) {
    GeometryConfig g;
    g.h = 0.2;
    const Mesh m = build_idealized_geometry(g);
    const LvMask mask(m);
    std::atomic<int> outside{0};
    CostFunction f = [&](const Theta& t) {
        if (!mask.contains({t[0], t[1]}, 1e-9)) ++outside;
        return distance({t[0], t[1]}, {11.5, 8.0});
    };
    GaConfig c = small_config(2);
    c.mutation_probability = 1.0;
    c.mutation_sigma0 = 1.0;
    const GaResult r = ga_minimize(f, mask.search_box(), c);
    EXPECT_EQ(outside.load(), 0);
    EXPECT_LT(r.best_cost, 0.5);
}

TEST(Params4, CoordinateMapping) {
    const MembraneParams p = membrane_from_params4({0.8, 1e-3, 200.0, 120.0});
    EXPECT_DOUBLE_EQ(p.tau_in, 16.0);
    EXPECT_EQ(p.C_m, 1e-3);
    EXPECT_EQ(p.A_m, 200.0);
    const SearchBox box = params4_box();
    EXPECT_EQ(box.lower, (Theta{0.5, 5e-4, 100.0, 50.0}));
    EXPECT_EQ(box.upper, (Theta{1.5, 2e-3, 300.0, 150.0}));
    EXPECT_THROW(membrane_from_params4({1.0}), ConfigError);
}
