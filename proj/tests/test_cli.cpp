#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ecgrom/cli.hpp"

using namespace ecgrom;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ecgrom");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), err);
    return {code, err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("ecgrom_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        config_ = path("run.json");
        json c{{"geometry", {{"h", 0.25}}}, {"time", {{"T", 5.0}}}, {"snapshots", {{"stride", 1}}}};
        write_file(config_, c.dump());
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
    std::string config_;
};

} // namespace

TEST_F(CliTest, NonPositiveTimeIsAConfigError) {
    const Outcome o = run_cli({"simulate", "-c", config_, "--T", "0", "-o", path("sim")});
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.err.find("error: T must be positive"), std::string::npos) << o.err;
}

TEST_F(CliTest, ParseErrorsExitWithTwo) {
    EXPECT_EQ(run_cli({"simulate", "--no-such-flag"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"pod-build", "-n", "3"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"simulate", "--T", "abc"}).code, cli::kExitConfig);
    const Outcome o = run_cli({"simulate", "-c", path("missing.json")});
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.err.find("missing.json"), std::string::npos) << o.err;
}

TEST_F(CliTest, BadConfigKeyNamesItsPointer) {
    write_file(config_, R"({"membrane": {"tau_in": 0.3, "tau_inn": 1}})");
    const Outcome o = run_cli({"simulate", "-c", config_, "-o", path("sim")});
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.err.find("/membrane/tau_inn: unknown key"), std::string::npos) << o.err;
}

TEST_F(CliTest, SolverFailureExitsWithThree) {
    write_file(config_, R"({"geometry": {"h": 0.25}, "time": {"T": 2.0},
                           "solver": {"backend": "pcg", "tol": 1e-14, "max_iterations": 1}})");
    const Outcome o = run_cli({"simulate", "-c", config_, "-o", path("sim")});
    EXPECT_EQ(o.code, cli::kExitNumerical);
    EXPECT_NE(o.err.find("numerical failure: "), std::string::npos) << o.err;
}

TEST_F(CliTest, SimulatePodBuildAndRom) {
    ASSERT_EQ(run_cli({"simulate", "-c", config_, "-o", path("full"), "--probe", "9,11.5"}).code, cli::kExitOk);
    for (const char* f : {"ecg.csv", "snapshots.bin", "probes.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir_ / "full" / f)) << f;
    const EcgTrace ecg = read_ecg_csv(path("full/ecg.csv"));
    EXPECT_EQ(ecg.num_samples(), 11u);

    // 11 snapshots: 50 modes cannot be extracted.
    const Outcome too_many = run_cli({"pod-build", "-s", path("full/snapshots.bin"), "-n", "50", "-o", path("b.bin")});
    EXPECT_EQ(too_many.code, cli::kExitConfig);
    EXPECT_NE(too_many.err.find("n_modes=50"), std::string::npos) << too_many.err;
    EXPECT_FALSE(fs::exists(path("b.bin")));

    ASSERT_EQ(run_cli({"pod-build", "-s", path("full/snapshots.bin"), "-n", "8", "-o", path("b.bin")}).code, cli::kExitOk);
    EXPECT_EQ(load_basis(path("b.bin")).n_modes(), 8);
    EXPECT_TRUE(fs::exists(path("b.bin.manifest.json")));

    const Outcome rom_bad = run_cli({"simulate", "-c", config_, "--rom", path("b.bin"), "--n-modes", "9", "-o", path("rom")});
    EXPECT_EQ(rom_bad.code, cli::kExitConfig);
    EXPECT_NE(rom_bad.err.find("exceeds the 8 modes"), std::string::npos) << rom_bad.err;

    ASSERT_EQ(run_cli({"simulate", "-c", config_, "--rom", path("b.bin"), "-o", path("rom"), "--no-snapshots"}).code,
              cli::kExitOk);
    EXPECT_FALSE(fs::exists(dir_ / "rom" / "snapshots.bin"));
    const json man = json::parse(read_file(path("rom/manifest.json")));
    EXPECT_EQ(man.at("model"), "rom");
    EXPECT_EQ(man.at("n_modes"), 8);

    // 5 ms is too short for an ST window; comparisons need a longer run.
    EXPECT_EQ(run_cli({"analyze", "--ecg", path("rom/ecg.csv"), "--reference", path("full/ecg.csv"), "-o", path("ana")}).code,
              cli::kExitConfig);
    ASSERT_EQ(run_cli({"analyze", "--ecg", path("rom/ecg.csv"), "-o", path("ana")}).code, cli::kExitOk);
    const json m = json::parse(read_file(path("ana/metrics.json")));
    EXPECT_EQ(m.at("samples"), 11);
    EXPECT_EQ(m.at("leads").size(), 9u);

    ASSERT_EQ(run_cli({"plot-data", "--ecg", path("full/ecg.csv"), "-o", path("plot")}).code, cli::kExitOk);
    EXPECT_TRUE(fs::exists(dir_ / "plot" / "lead_V3.csv"));
}

TEST_F(CliTest, ManifestsAreReproducible) {
    ASSERT_EQ(run_cli({"simulate", "-c", config_, "-o", path("a")}).code, cli::kExitOk);
    const json first = json::parse(read_file(path("a/manifest.json")));
    ASSERT_EQ(run_cli({"simulate", "-c", config_, "-o", path("a")}).code, cli::kExitOk);
    const json second = json::parse(read_file(path("a/manifest.json")));
    EXPECT_EQ(first.at("stable_hash"), second.at("stable_hash"));
    EXPECT_EQ(first.at("outputs"), second.at("outputs"));
    EXPECT_EQ(first.at("inputs").at(config_), file_hash(config_));
}

TEST_F(CliTest, MeshCommandHonoursTheElementSize) {
    ASSERT_EQ(run_cli({"mesh", "--element-size", "0.25", "-o", path("mesh")}).code, cli::kExitOk);
    const json man = json::parse(read_file(path("mesh/manifest.json")));
    EXPECT_EQ(man.at("config").at("geometry").at("h"), 0.25);
    EXPECT_GT(man.at("mesh").at("num_heart_nodes").get<int>(), 0);
    EXPECT_EQ(run_cli({"mesh", "--element-size", "-1", "-o", path("mesh")}).code, cli::kExitConfig);
}

TEST_F(CliTest, WorkerEnvironmentIsValidated) {
    ::setenv(cli::kWorkersEnv, "many", 1);
    const Outcome o = run_cli({"identify", "-r", path("ref.csv"), "--basis", path("b.bin")});
    ::unsetenv(cli::kWorkersEnv);
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.err.find("ECGROM_WORKERS"), std::string::npos) << o.err;

    ::setenv(cli::kWorkersEnv, "3", 1);
    EXPECT_EQ(cli::workers_from_env(1), 3);
    ::setenv(cli::kWorkersEnv, "0", 1);
    EXPECT_THROW(cli::workers_from_env(1), ConfigError);
    ::unsetenv(cli::kWorkersEnv);
    EXPECT_EQ(cli::workers_from_env(2), 2);
}

TEST_F(CliTest, IdentifyRejectsInconsistentArguments) {
    EXPECT_EQ(run_cli({"identify", "-r", path("ref.csv")}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"identify", "-r", path("ref.csv"), "--basis", "a", "--dictionary", "d"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"identify", "-r", path("ref.csv"), "--basis", "a", "--mode", "shape"}).code, cli::kExitConfig);
    const Outcome o = run_cli({"identify", "-r", path("ref.csv"), "--basis", "a", "--N-p", "40", "--N-ex", "10"});
    EXPECT_EQ(o.code, cli::kExitConfig);
    EXPECT_NE(o.err.find("N_ex=10"), std::string::npos) << o.err;
}

TEST_F(CliTest, UnknownExperiment) {
    const Outcome o = run_cli({"reproduce", "e9", "-o", path("e9.json")});
    EXPECT_EQ(o.code, cli::kExitConfig);
}
