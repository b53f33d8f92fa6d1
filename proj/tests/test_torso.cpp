#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ecgrom/experiments.hpp"

using namespace ecgrom;

namespace {

const DeskModel& desk() {
    static const DeskModel d([] {
        RunConfig c;
        c.geometry.h = 0.2;
        return c;
    }());
    return d;
}

VectorXd random_vector(Eigen::Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
    return v;
}

} // namespace

TEST(Transfer, ShapeAndRowSums) {
    const TransferMatrix& tm = desk().ecg.transfer;
    EXPECT_EQ(tm.rows(), 6);
    EXPECT_EQ(tm.cols(), static_cast<Eigen::Index>(desk().mesh.heart_boundary_nodes().size()));
    for (Eigen::Index r = 0; r < tm.rows(); ++r) EXPECT_NEAR(tm.matrix.row(r).sum(), 1.0, 1e-8);
}

TEST(Transfer, DiscreteMaximumPrincipleOnTheDefaultMesh) {
    const Mesh m = build_idealized_geometry(GeometryConfig{});
    const auto cond = make_conductivity(m);
    const TransferMatrix tm = build_transfer_matrix(m, cond.sigma_t);
    EXPECT_GE(tm.matrix.minCoeff(), -1e-6);
    EXPECT_LE(tm.matrix.maxCoeff(), 1.0 + 1e-6);
    for (Eigen::Index r = 0; r < tm.rows(); ++r) EXPECT_NEAR(tm.matrix.row(r).sum(), 1.0, 1e-8);
}

TEST(Transfer, AgreesWithDirectTorsoSolve) {
    const TorsoProblem torso(desk().mesh, desk().cond.sigma_t);
    const TransferMatrix& tm = desk().ecg.transfer;
    const VectorXd b = random_vector(tm.cols(), 7);
    const VectorXd full = torso.solve(b);
    const VectorXd phi = electrode_potentials(tm, b);
    for (std::size_t e = 0; e < tm.electrode_nodes.size(); ++e)
        EXPECT_NEAR(phi[static_cast<Eigen::Index>(e)], full[tm.electrode_nodes[e]], 1e-10);
}

TEST(Transfer, LinearityAndConstants) {
    const TransferMatrix& tm = desk().ecg.transfer;
    const VectorXd a = random_vector(tm.cols(), 1), b = random_vector(tm.cols(), 2);
    const VectorXd fa = electrode_potentials(tm, a), fb = electrode_potentials(tm, b);
    EXPECT_LT((electrode_potentials(tm, a + b) - fa - fb).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((electrode_potentials(tm, 2.0 * a) - 2.0 * fa).cwiseAbs().maxCoeff(), 1e-12);
    const VectorXd c = electrode_potentials(tm, VectorXd::Constant(tm.cols(), 3.5));
    EXPECT_LT((c.array() - 3.5).abs().maxCoeff(), 1e-8);
    EXPECT_THROW(electrode_potentials(tm, VectorXd::Zero(3)), ConfigError);
}

TEST(Transfer, TorsoProblemRejectsBadInput) {
    EXPECT_THROW(TorsoProblem(desk().mesh, VectorXd::Ones(3)), ConfigError);
    VectorXd s = desk().cond.sigma_t;
    s[0] = 0.0;
    EXPECT_THROW(TorsoProblem(desk().mesh, s), ConfigError);
}

TEST(Leads, Definitions) {
    const auto l = compute_leads({{"R", 0.0}, {"L", 1.0}, {"F", 2.0}});
    EXPECT_EQ(l.at("I"), 1.0);
    EXPECT_EQ(l.at("II"), 2.0);
    EXPECT_EQ(l.at("III"), 1.0);
    EXPECT_EQ(l.at("I") - l.at("II") + l.at("III"), 0.0);
    EXPECT_EQ(l.at("aVR"), -1.5);
    EXPECT_EQ(l.count("V1"), 0u);
    const auto z = compute_leads({{"R", 4.0}, {"L", 4.0}, {"F", 4.0}, {"V1", 4.0}});
    for (const auto& [n, v] : z) EXPECT_NEAR(v, 0.0, 1e-15) << n;
    EXPECT_THROW(compute_leads({{"R", 0.0}, {"L", 1.0}}), ConfigError);
}

TEST(Leads, AugmentedSumAndPrecordials) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 100; ++k) {
        const double r = u(rng), l = u(rng), f = u(rng), v2 = u(rng);
        const auto x = compute_leads({{"R", r}, {"L", l}, {"F", f}, {"V2", v2}});
        EXPECT_NEAR(x.at("aVR") + x.at("aVL") + x.at("aVF"), 0.0, 1e-12);
        EXPECT_NEAR(x.at("I") - x.at("II") + x.at("III"), 0.0, 1e-12);
        EXPECT_NEAR(x.at("V2"), v2 - (r + l + f) / 3.0, 1e-12);
    }
}

TEST(Leads, StandardOrder) {
    EXPECT_EQ(desk().ecg.lead_names(), standard_lead_names());
}

TEST(Ecg, ConstantOffsetInvariance) {
    const VectorXd ue = random_vector(static_cast<Eigen::Index>(desk().mesh.num_heart_nodes()), 11);
    const VectorXd a = desk().ecg.leads_from_heart(ue);
    const VectorXd b = desk().ecg.leads_from_heart((ue.array() + 17.0).matrix());
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

// Every recorded ECG sample equals leads formed from a direct torso solve.
TEST(Ecg, TimeLoopMatchesDirectSolves) {
    const DeskModel& d = desk();
    RunOptions o = d.options(25.0, 1);
    const Trajectory t = d.full(d.healthy_field(), o);
    ASSERT_EQ(t.snapshots.size(), 51u);
    const TorsoProblem torso(d.mesh, d.cond.sigma_t);
    const auto& tm = d.ecg.transfer;
    double worst = 0.0;
    for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
        const VectorXd full = torso.solve(tm.boundary_values(t.snapshots[k].u_e));
        VectorXd phi(static_cast<Eigen::Index>(tm.electrode_nodes.size()));
        for (std::size_t e = 0; e < tm.electrode_nodes.size(); ++e) phi[static_cast<Eigen::Index>(e)] = full[tm.electrode_nodes[e]];
        const VectorXd leads = d.ecg.leads.apply(phi);
        for (std::size_t j = 0; j < t.ecg.num_leads(); ++j)
            worst = std::max(worst, std::abs(leads[static_cast<Eigen::Index>(j)] - t.ecg.at(k, j)));
    }
    EXPECT_LE(worst, 1e-9);
}

TEST(EcgCsv, RoundTripIsExact) {
    EcgTrace e;
    e.dt = 0.5;
    e.lead_names = {"I", "II", "III"};
    const VectorXd r1 = (VectorXd(3) << 0.1, -2.0 / 3.0, 1e-17).finished();
    const VectorXd r2 = (VectorXd(3) << 12345.678901234567, 0.0, -1e5).finished();
    e.append(r1);
    e.append(r2);
    std::stringstream ss;
    write_ecg_csv(ss, e);
    const std::string text = ss.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,I,II,III");
    EXPECT_NE(text.find("\n0.500000,"), std::string::npos);
    const EcgTrace r = read_ecg_csv(ss);
    EXPECT_EQ(r.lead_names, e.lead_names);
    EXPECT_EQ(r.data, e.data);
    EXPECT_EQ(r.dt, 0.5);
}

TEST(EcgCsv, RejectsMalformedInput) {
    std::stringstream a("x,I\n0,1\n");
    EXPECT_THROW(read_ecg_csv(a), ConfigError);
    std::stringstream b("t,I,II\n0,1\n");
    EXPECT_THROW(read_ecg_csv(b), ConfigError);
    EcgTrace e;
    e.lead_names = {"I"};
    EXPECT_THROW(e.append(VectorXd::Zero(2)), ConfigError);
    EXPECT_THROW(e.append(VectorXd::Constant(1, std::nan(""))), NumericalError);
}
