#include <gtest/gtest.h>

#include <filesystem>

#include "ecgrom/config.hpp"

using namespace ecgrom;

namespace {

std::string error_of(const json& j) {
    try {
        parse_run_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("ecgrom_test_config_" + name)).string();
}

} // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const RunConfig c = parse_run_config(json::object());
    const RunConfig d;
    EXPECT_EQ(c.T, 400.0);
    EXPECT_EQ(c.dt, 0.5);
    EXPECT_EQ(c.snapshot_stride, 4);
    EXPECT_EQ(c.solver.backend, SolverBackend::direct);
    EXPECT_EQ(c.output_dir, "out");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_FALSE(c.infarct);
    EXPECT_EQ(to_json(c), to_json(d));
}

TEST(Config, UnknownKeysAreReportedWithTheirPointer) {
    EXPECT_EQ(error_of({{"bogus", 1}}), "/bogus: unknown key");
    EXPECT_EQ(error_of({{"membrane", {{"tau_in", 0.3}, {"tau_inn", 1}}}}), "/membrane/tau_inn: unknown key");
    EXPECT_EQ(error_of({{"membrane", {{"tau_close", {{"LV_mid", 100}}}}}}), "/membrane/tau_close/LV_mid: unknown key");
    EXPECT_EQ(error_of({{"stimulus", {{"sites", {{{"center", {1, 2}}, {"r", 1}}}}}}}), "/stimulus/sites/0/r: unknown key");
}

TEST(Config, TypeAndRangeErrors) {
    EXPECT_EQ(error_of({{"time", {{"T", 0}}}}), "/time/T: T must be positive");
    EXPECT_EQ(error_of({{"time", {{"T", -5.0}}}}), "/time/T: T must be positive");
    EXPECT_EQ(error_of({{"time", {{"dt", "half"}}}}), "/time/dt: expected a number");
    EXPECT_EQ(error_of({{"geometry", {{"h", 0.0}}}}), "/geometry/h: must be positive");
    EXPECT_EQ(error_of({{"snapshots", {{"stride", 1.5}}}}), "/snapshots/stride: expected an integer");
    EXPECT_EQ(error_of({{"solver", {{"backend", "lu"}}}}), "/solver/backend: expected \"direct\" or \"pcg\"");
    EXPECT_EQ(error_of({{"geometry", {{"lv_center", {1}}}}}), "/geometry/lv_center: expected [x, y]");
    EXPECT_EQ(error_of({{"stimulus", {{"onsets", {0, 10, 10}}}}}), "/stimulus/onsets: must be strictly increasing");
    EXPECT_EQ(error_of({{"version", 7}}), "/version: unsupported schema version 7");
    EXPECT_EQ(error_of(json::array()), "/: expected an object");
    const std::string e = error_of({{"geometry", {{"min_quality", 2.0}}}});
    EXPECT_EQ(e.rfind("/geometry/min_quality: value 2", 0), 0u) << e;
}

TEST(Config, PacingExpandsToOnsets) {
    const RunConfig c = parse_run_config({{"stimulus", {{"pacing", {{"beats", 3}, {"first_period", 500}, {"decrement", 100}}}}}});
    ASSERT_EQ(c.stimulus.onsets.size(), 3u);
    EXPECT_EQ(c.stimulus.onsets[1] - c.stimulus.onsets[0], 500.0);
    EXPECT_EQ(c.stimulus.onsets[2] - c.stimulus.onsets[1], 400.0);
}

TEST(Config, JsonRoundTrip) {
    RunConfig c;
    c.T = 123.5;
    c.dt = 0.25;
    c.snapshot_stride = 2;
    c.tau_close.mcell = 155.0;
    c.membrane.tau_in = 0.31;
    c.stimulus.sites = {{{1.0, -2.0}, 0.4}};
    c.stimulus.onsets = {0.0, 300.0};
    c.electrodes["V1"] = {3.0, 4.0};
    c.infarct = InfarctSpec{{0.5, 0.5}, 0.6, 8.0};
    c.solver.backend = SolverBackend::pcg;
    c.rom_basis = "b.bin";
    c.rom_modes = 40;
    c.seed = 99;
    const json j = to_json(c);
    const RunConfig r = parse_run_config(j);
    EXPECT_EQ(to_json(r), j);
    EXPECT_EQ(r.tau_close.mcell, 155.0);
    ASSERT_TRUE(r.infarct);
    EXPECT_EQ(r.infarct->tau_out_divisor, 8.0);
    EXPECT_EQ(r.electrodes.at("V1").y, 4.0);
}

TEST(Config, InvalidJsonFile) {
    const std::string p = temp_path("broken.json");
    write_file(p, "{\"time\": {\"T\": 10,}");
    EXPECT_THROW(load_run_config(p), ConfigError);
    write_file(p, "{\"time\": {\"T\": 10}}");
    EXPECT_EQ(load_run_config(p).T, 10.0);
    std::filesystem::remove(p);
    EXPECT_THROW(load_run_config(p), ConfigError);
}

TEST(Hash, GitBlobHash) {
    EXPECT_EQ(content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    EXPECT_EQ(content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Manifest, StableHashIgnoresTimings) {
    RunManifest a("simulate"), b("simulate");
    a.config(to_json(RunConfig{}));
    b.config(to_json(RunConfig{}));
    a.phase("setup");
    b.phase("setup");
    b.phase("integrate");
    EXPECT_EQ(a.stable_hash(), b.stable_hash());
    b.set("steps", 800);
    EXPECT_NE(a.stable_hash(), b.stable_hash());

    const std::string p = temp_path("manifest.json");
    a.write(p);
    const json j = json::parse(read_file(p));
    EXPECT_EQ(j.at("stable_hash"), a.stable_hash());
    EXPECT_EQ(j.at("command"), "simulate");
    EXPECT_TRUE(j.at("timings").contains("setup"));
    std::filesystem::remove(p);
}

TEST(Build, StimulusOutsideTheHeartIsRejected) {
    RunConfig c;
    c.geometry.h = 0.25;
    const Mesh m = build_mesh(c);
    EXPECT_FALSE(build_stimulus(m, c).support.empty());
    c.stimulus.sites = {{{1.0, 1.0}, 0.2}};
    try {
        build_stimulus(m, c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_STREQ(e.what(), "/stimulus/sites: no heart node inside any stimulus disc");
    }
}

TEST(Build, RunOptionsValidateTheTime) {
    RunConfig c;
    c.T = 0.0;
    EXPECT_THROW(build_run_options(c), ConfigError);
    c.T = 10.0;
    c.snapshot_stride = 0;
    EXPECT_THROW(build_run_options(c), ConfigError);
}
