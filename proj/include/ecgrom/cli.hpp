#pragma once

// Command-line driver: mesh | simulate | pod-build | analyze | identify |
// plot-data | reproduce. Every subcommand writes manifest.json next to its
// outputs. Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecgrom/config.hpp"
#include "ecgrom/experiments.hpp"
#include "ecgrom/identify.hpp"
#include "ecgrom/io.hpp"
#include "ecgrom/postproc.hpp"

namespace ecgrom::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Environment variable that overrides the default worker count of `identify`
/// and `reproduce` when no --workers flag is given.
inline constexpr const char* kWorkersEnv = "ECGROM_WORKERS";

inline int workers_from_env(int fallback) {
    const char* s = std::getenv(kWorkersEnv);
    if (!s || !*s) return fallback;
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw ConfigError(std::string(kWorkersEnv) + ": expected an integer in [1, 1024]");
    return static_cast<int>(v);
}

inline Point2 parse_point(const std::string& s, const std::string& flag) {
    std::istringstream is(s);
    double x = 0.0, y = 0.0;
    char comma = 0;
    if (!(is >> x >> comma >> y) || comma != ',' || !(is >> std::ws).eof())
        throw ConfigError(flag + ": expected 'x,y', got '" + s + "'");
    return {x, y};
}

inline fs::path prepare_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
    return fs::path(dir);
}

inline RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

/// Probe samples, one row per step: t,p0,p1,...
inline void write_probe_csv(const std::string& path, const Trajectory& tr) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os << 't';
    for (std::size_t p = 0; p < tr.probe_traces.size(); ++p) os << ",p" << p;
    os << '\n' << std::setprecision(17);
    const std::size_t n = tr.probe_traces.empty() ? 0 : tr.probe_traces[0].size();
    for (std::size_t k = 0; k < n; ++k) {
        os << std::fixed << std::setprecision(3) << static_cast<double>(k) * tr.dt << std::defaultfloat
           << std::setprecision(17);
        for (const auto& trace : tr.probe_traces) os << ',' << trace[k];
        os << '\n';
    }
}

struct ProbeTable {
    double dt = 0.0;
    std::vector<std::vector<double>> columns;
};

inline ProbeTable read_probe_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("t", 0) != 0) throw ConfigError(path + ": missing probe header");
    const auto ncol = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    ProbeTable t;
    t.columns.assign(ncol, {});
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != ncol + 1) throw ConfigError(path + ": row with wrong column count");
        times.push_back(row[0]);
        for (std::size_t c = 0; c < ncol; ++c) t.columns[c].push_back(row[c + 1]);
    }
    if (times.size() < 2) throw ConfigError(path + ": fewer than two samples");
    t.dt = times[1] - times[0];
    return t;
}

inline void write_restitution_csv(const std::string& path, const std::vector<RestitutionPoint>& pts) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os << "beat,di,apd\n" << std::setprecision(17);
    for (const auto& p : pts) os << p.beat << ',' << p.di << ',' << p.apd << '\n';
}

// Subcommands -----------------------------------------------------------------------

struct MeshArgs {
    std::string config, out = "out";
    std::optional<double> h;
};

inline void cmd_mesh(const MeshArgs& a) {
    RunConfig cfg = config_or_default(a.config);
    if (a.h) cfg.geometry.h = *a.h;
    cfg.geometry.validate();
    RunManifest man("mesh");
    if (!a.config.empty()) man.input(a.config);
    man.config(to_json(cfg));
    const Mesh mesh = build_mesh(cfg);
    man.phase("build");
    const fs::path dir = prepare_dir(a.out);
    const std::string bin = (dir / "mesh.bin").string(), nodes = (dir / "nodes.csv").string(),
                      elems = (dir / "elements.csv").string();
    save_mesh(bin, mesh);
    write_mesh_csv(nodes, elems, mesh);
    man.phase("write");
    for (const auto& p : {bin, nodes, elems}) man.output(p);
    man.set("mesh", {{"num_nodes", mesh.num_nodes()}, {"num_elements", mesh.num_elements()},
                     {"num_heart_nodes", mesh.num_heart_nodes()}});
    man.write((dir / "manifest.json").string());
}

struct SimulateArgs {
    std::string config, out;
    std::optional<double> T, dt;
    std::optional<int> stride;
    std::optional<std::string> infarct_center;
    std::optional<double> infarct_radius;
    std::string rom;
    std::optional<int> n_modes;
    std::vector<std::string> probes;
    bool no_snapshots = false;
};

inline void cmd_simulate(const SimulateArgs& a) {
    RunConfig cfg = config_or_default(a.config);
    if (a.T) cfg.T = *a.T;
    if (a.dt) cfg.dt = *a.dt;
    if (a.stride) cfg.snapshot_stride = *a.stride;
    if (!a.rom.empty()) cfg.rom_basis = a.rom;
    if (a.n_modes) cfg.rom_modes = *a.n_modes;
    if (!a.out.empty()) cfg.output_dir = a.out;
    if (a.infarct_center || a.infarct_radius) {
        InfarctSpec s = cfg.infarct.value_or(InfarctSpec{});
        if (a.infarct_center) s.center = parse_point(*a.infarct_center, "--infarct-center");
        if (a.infarct_radius) s.radius = *a.infarct_radius;
        cfg.infarct = s;
    }
    RunOptions opt = build_run_options(cfg);

    RunManifest man("simulate");
    if (!a.config.empty()) man.input(a.config);
    man.config(to_json(cfg));
    const DeskModel desk(cfg);
    ParamField field = desk.healthy_field();
    if (cfg.infarct) {
        if (!(cfg.infarct->radius > 0.0)) cfg.infarct->radius = desk.default_infarct_radius();
        field = apply_infarct(field, *cfg.infarct, desk.mesh);
        man.set("infarct", {{"center", {cfg.infarct->center.x, cfg.infarct->center.y}},
                            {"radius", cfg.infarct->radius},
                            {"tau_out_divisor", cfg.infarct->tau_out_divisor}});
    }
    for (const auto& p : a.probes)
        opt.probes.push_back(desk.mesh.heart_local(desk.mesh.nearest_node(parse_point(p, "--probe"), desk.mesh.heart_nodes())));
    opt.keep_snapshots = !a.no_snapshots;
    man.phase("setup");

    Trajectory tr;
    if (cfg.rom_basis.empty()) {
        tr = desk.full(field, opt);
        man.set("model", "full");
    } else {
        man.input(cfg.rom_basis);
        PodBasis b = load_basis(cfg.rom_basis);
        if (cfg.rom_modes > 0 && cfg.rom_modes < b.n_modes()) b = b.truncated(cfg.rom_modes);
        if (cfg.rom_modes > b.n_modes())
            throw ConfigError("--n-modes=" + std::to_string(cfg.rom_modes) + " exceeds the " +
                              std::to_string(b.n_modes()) + " modes of " + cfg.rom_basis);
        const PreparedBasis pb = PreparedBasis::make(std::move(b), desk.matrices);
        tr = desk.rom(field, pb, opt);
        man.set("model", "rom");
        man.set("n_modes", pb.basis.n_modes());
    }
    man.phase("integrate");

    const fs::path dir = prepare_dir(cfg.output_dir);
    std::vector<std::string> outputs;
    const std::string ecg_path = (dir / "ecg.csv").string();
    write_ecg_csv(ecg_path, tr.ecg);
    outputs.push_back(ecg_path);
    if (opt.keep_snapshots) {
        SnapshotMatrix B;
        collect_into(B, tr, "run", SnapshotPlan::every(1));
        const json source{{"command", "simulate"}, {"config", to_json(cfg)}, {"model", man.json_value().at("model")}};
        const std::string snap_path = (dir / "snapshots.bin").string();
        save_container(snap_path, snapshot_container(B, {{"source", source}, {"source_hash", content_hash(source.dump())}}));
        outputs.push_back(snap_path);
    }
    if (!opt.probes.empty()) {
        const std::string probe_path = (dir / "probes.csv").string();
        write_probe_csv(probe_path, tr);
        outputs.push_back(probe_path);
        man.set("probe_nodes", opt.probes);
    }
    man.phase("write");
    for (const auto& p : outputs) man.output(p);
    man.set("steps", tr.steps);
    man.set("max_ue_mean", tr.max_ue_mean);
    man.set("max_einthoven", tr.max_einthoven);
    man.write((dir / "manifest.json").string());
}

struct PodBuildArgs {
    std::vector<std::string> snapshots;
    int n_modes = 0;
    double v_rest = MembraneParams{}.V_min;
    double ue_scale = 1.0;
    std::string out = "basis.bin";
    std::vector<double> theta;
};

inline void cmd_pod_build(const PodBuildArgs& a) {
    if (a.snapshots.empty()) throw ConfigError("pod-build: no snapshot files given");
    RunManifest man("pod-build");
    SnapshotMatrix all;
    json sources = json::array();
    for (const auto& path : a.snapshots) {
        man.input(path);
        const Container c = load_container(path);
        const SnapshotMatrix b = snapshots_from_container(c);
        if (all.n != 0 && b.n != all.n) throw ConfigError(path + ": snapshot size differs from the previous files");
        if (all.n == 0) {
            all.n = b.n;
            all.data.resize(2 * b.n, 0);
        }
        const auto p0 = all.data.cols();
        all.data.conservativeResize(2 * b.n, p0 + b.cols());
        all.data.rightCols(b.cols()) = b.data;
        all.times.insert(all.times.end(), b.times.begin(), b.times.end());
        for (const auto& l : b.labels) all.labels.push_back(path + ":" + l);
        sources.push_back({{"file", path}, {"hash", file_hash(path)}, {"columns", b.cols()}, {"meta", c.meta}});
    }
    man.phase("load");
    PodBasis basis = compute_basis(all, a.n_modes, {a.v_rest, a.ue_scale});
    basis.theta = a.theta;
    basis.manifest = json{{"command", "pod-build"}, {"sources", sources}, {"n_modes", a.n_modes},
                          {"v_rest", a.v_rest}, {"ue_scale", a.ue_scale}}
                         .dump();
    man.phase("decompose");
    const fs::path out(a.out);
    if (out.has_parent_path()) prepare_dir(out.parent_path().string());
    save_basis(a.out, basis);
    man.phase("write");
    man.output(a.out);
    man.config({{"n_modes", a.n_modes}, {"v_rest", a.v_rest}, {"ue_scale", a.ue_scale}, {"theta", a.theta}});
    man.set("snapshot_columns", all.cols());
    man.set("orthonormality_defect", orthonormality_defect(basis.modes));
    man.write(a.out + ".manifest.json");
}

struct AnalyzeArgs {
    std::string ecg, probes, reference, baseline, out = "analysis";
    double threshold = MembraneParams{}.V_gate;
    int probe_column = 0;
    StWindowOptions st;
};

inline void cmd_analyze(const AnalyzeArgs& a) {
    if (a.ecg.empty() && a.probes.empty()) throw ConfigError("analyze: give --ecg and/or --probes");
    RunManifest man("analyze");
    man.config({{"threshold", a.threshold}, {"probe_column", a.probe_column},
                {"st", {{"slope_threshold", a.st.slope_threshold}, {"search_end", a.st.search_end},
                        {"begin_offset", a.st.begin_offset}, {"end_offset", a.st.end_offset}}}});
    const fs::path dir = prepare_dir(a.out);
    json metrics = json::object();
    std::vector<std::string> outputs;
    if (!a.probes.empty()) {
        man.input(a.probes);
        const ProbeTable t = read_probe_csv(a.probes);
        if (a.probe_column < 0 || static_cast<std::size_t>(a.probe_column) >= t.columns.size())
            throw ConfigError("--probe-column " + std::to_string(a.probe_column) + " out of range");
        const auto& v = t.columns[static_cast<std::size_t>(a.probe_column)];
        const auto pts = detect_apd_di(v, t.dt, a.threshold);
        const std::string rpath = (dir / "restitution.csv").string();
        write_restitution_csv(rpath, pts);
        outputs.push_back(rpath);
        const auto apd = first_apd(v, t.dt, a.threshold);
        metrics["restitution"] = restitution_json(pts);
        metrics["first_apd"] = apd ? json(*apd) : json(nullptr);
        metrics["restitution_monotone"] = restitution_monotone(pts, 1.0);
    }
    if (!a.ecg.empty()) {
        man.input(a.ecg);
        const EcgTrace ecg = read_ecg_csv(a.ecg);
        json leads = json::object();
        for (const auto& name : ecg.lead_names) {
            const auto v = ecg.lead(name);
            const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
            leads[name] = {{"min", *mn}, {"max", *mx}};
        }
        metrics["samples"] = ecg.num_samples();
        metrics["dt"] = ecg.dt;
        metrics["leads"] = leads;
        const std::string base_path = !a.baseline.empty() ? a.baseline : a.reference;
        if (!base_path.empty()) {
            man.input(base_path);
            const EcgTrace base = read_ecg_csv(base_path);
            const auto w = st_window(base, a.st);
            metrics["st_window"] = {w.first, w.second};
            metrics["st_offset"] = st_offset(ecg, w.first, w.second, base);
            if (!a.reference.empty()) {
                const EcgTrace ref = read_ecg_csv(a.reference);
                const EcgMetrics m = compare_ecg(ref, ecg, w);
                json cmp = json::object();
                for (const auto& [name, lm] : m.leads)
                    cmp[name] = {{"l2_mismatch", lm.l2_mismatch}, {"relative_l2", lm.relative_l2},
                                 {"correlation", lm.correlation}, {"st_offset", lm.st_offset}};
                metrics["comparison"] = cmp;
                metrics["cost_j"] = cost_j(ecg, ref);
            }
        }
    }
    const std::string mpath = (dir / "metrics.json").string();
    write_file(mpath, metrics.dump(2) + "\n");
    outputs.push_back(mpath);
    man.phase("analyze");
    for (const auto& p : outputs) man.output(p);
    man.write((dir / "manifest.json").string());
}

struct IdentifyArgs {
    std::string config, reference, mode = "params4", basis, dictionary, out = "identify.json";
    GaConfig ga;
    std::optional<int> workers;
    std::optional<double> T;
    double radius = 0.0;
    double divisor = 10.0;
    std::optional<int> n_modes;
};

inline std::vector<std::string> dictionary_files(const std::string& dir) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path().string());
    if (ec) throw ConfigError("cannot read dictionary directory " + dir + ": " + ec.message());
    if (files.empty()) throw ConfigError("dictionary directory " + dir + " holds no .bin basis files");
    std::sort(files.begin(), files.end());
    return files;
}

inline void cmd_identify(IdentifyArgs a) {
    if (a.reference.empty()) throw ConfigError("identify: --reference is required");
    if (a.mode != "params4" && a.mode != "infarct") throw ConfigError("--mode: expected params4 or infarct");
    if (a.basis.empty() == a.dictionary.empty()) throw ConfigError("identify: give exactly one of --basis and --dictionary");
    if (a.mode == "infarct" && !a.dictionary.empty()) throw ConfigError("identify: infarct mode takes a single --basis");
    a.ga.workers = a.workers ? *a.workers : workers_from_env(a.ga.workers);
    a.ga.validate();
    RunConfig cfg = config_or_default(a.config);
    if (a.T) cfg.T = *a.T;
    RunManifest man("identify");
    if (!a.config.empty()) man.input(a.config);
    man.input(a.reference);
    const EcgTrace ref = read_ecg_csv(a.reference);
    const DeskModel desk(cfg);
    const RunOptions o = build_run_options(cfg);
    if (std::abs(ref.dt - o.dt) > 1e-9 || ref.num_samples() != o.steps() + 1)
        throw ConfigError("reference ECG has " + std::to_string(ref.num_samples()) + " samples at dt " +
                          std::to_string(ref.dt) + ", the run needs " + std::to_string(o.steps() + 1) + " at dt " +
                          std::to_string(o.dt));
    const ForwardContext ctx(desk.mesh, desk.cond, desk.ecg, desk.stimulus, o);
    std::vector<std::string> files = a.basis.empty() ? dictionary_files(a.dictionary) : std::vector<std::string>{a.basis};
    std::vector<PreparedBasis> dict;
    for (const auto& f : files) {
        man.input(f);
        PodBasis b = load_basis(f);
        if (a.n_modes && *a.n_modes < b.n_modes()) b = b.truncated(*a.n_modes);
        if (!a.dictionary.empty() && b.theta.size() != 4) throw ConfigError(f + ": dictionary bases need a four-value theta tag");
        dict.push_back(PreparedBasis::make(std::move(b), desk.matrices));
    }
    man.phase("setup");
    GaResult res;
    json extra = json::object();
    if (a.mode == "params4") {
        std::vector<const PreparedBasis*> ptrs;
        for (const auto& b : dict) ptrs.push_back(&b);
        res = identify_params4(ctx, ref, ptrs, a.ga, {}, cfg.membrane, cfg.tau_close);
        if (!res.best_theta.empty()) extra["mean_relative_error_vs_default_reference"] = mean_relative_error(res.best_theta);
    } else {
        const double radius = a.radius > 0.0 ? a.radius : desk.default_infarct_radius();
        res = identify_infarct(ctx, ref, LvMask(desk.mesh), dict.front(), desk.healthy_field(), a.ga, radius, a.divisor);
        extra["radius"] = radius;
    }
    man.phase("search");
    json out = ga_result_json(res);
    out["mode"] = a.mode;
    out["method"] = a.dictionary.empty() ? "M1" : "M2";
    out["bases"] = files.size();
    out["seed"] = a.ga.seed;
    for (auto& [k, v] : extra.items()) out[k] = v;
    const fs::path p(a.out);
    if (p.has_parent_path()) prepare_dir(p.parent_path().string());
    write_file(a.out, out.dump(2) + "\n");
    man.config({{"run", to_json(cfg)},
                {"mode", a.mode},
                {"ga", {{"N_p", a.ga.N_p}, {"N_g", a.ga.N_g}, {"N_ex", a.ga.N_ex}, {"use_surrogate", a.ga.use_surrogate},
                        {"seed", a.ga.seed}}}});
    man.output(a.out);
    man.write(a.out + ".manifest.json");
    if (!res.completed) throw NumericalError("identify: " + res.error);
}

struct PlotDataArgs {
    std::string ecg, out = "plot";
};

inline void cmd_plot_data(const PlotDataArgs& a) {
    RunManifest man("plot-data");
    man.input(a.ecg);
    const EcgTrace ecg = read_ecg_csv(a.ecg);
    const fs::path dir = prepare_dir(a.out);
    for (std::size_t j = 0; j < ecg.num_leads(); ++j) {
        const std::string path = (dir / ("lead_" + ecg.lead_names[j] + ".csv")).string();
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot write " + path);
        os << "t," << ecg.lead_names[j] << '\n';
        for (std::size_t k = 0; k < ecg.num_samples(); ++k)
            os << std::fixed << std::setprecision(3) << ecg.time(k) << ',' << std::defaultfloat << std::setprecision(17)
               << ecg.at(k, j) << '\n';
        os.close();
        man.output(path);
    }
    man.write((dir / "manifest.json").string());
}

struct ReproduceArgs {
    std::string experiment, config, out;
    std::optional<int> workers;
};

inline void cmd_reproduce(const ReproduceArgs& a) {
    const RunConfig cfg = config_or_default(a.config);
    const int workers = a.workers ? *a.workers : workers_from_env(1);
    RunManifest man("reproduce " + a.experiment);
    if (!a.config.empty()) man.input(a.config);
    man.config(to_json(cfg));
    const json report = reproduce_experiment(a.experiment, cfg, workers, &std::cerr);
    man.phase("run");
    const std::string out = a.out.empty() ? a.experiment + ".json" : a.out;
    const fs::path p(out);
    if (p.has_parent_path()) prepare_dir(p.parent_path().string());
    write_file(out, report.dump(2) + "\n");
    man.output(out);
    man.write(out + ".manifest.json");
}

// Dispatch ---------------------------------------------------------------------------

inline int run(int argc, char** argv, std::ostream& err = std::cerr) {
    CLI::App app{"Bidomain ECG simulation with POD reduced models and GA identification", "ecgrom"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kArtifactVersion);

    MeshArgs mesh;
    auto* c_mesh = app.add_subcommand("mesh", "Build the 2D heart-torso mesh");
    c_mesh->add_option("-c,--config", mesh.config, "run configuration (JSON)");
    c_mesh->add_option("-o,--out", mesh.out, "output directory");
    c_mesh->add_option("--element-size", mesh.h, "element size h (cm)");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Run the full-order or reduced model and record the ECG");
    c_sim->add_option("-c,--config", sim.config, "run configuration (JSON)");
    c_sim->add_option("-o,--out", sim.out, "output directory");
    c_sim->add_option("--T", sim.T, "final time (ms)");
    c_sim->add_option("--dt", sim.dt, "time step (ms)");
    c_sim->add_option("--stride", sim.stride, "snapshot stride (steps)");
    c_sim->add_option("--infarct-center", sim.infarct_center, "infarct center 'x,y' (cm)");
    c_sim->add_option("--infarct-radius", sim.infarct_radius, "infarct radius (cm)");
    c_sim->add_option("--rom", sim.rom, "POD basis file; switches to the reduced model");
    c_sim->add_option("--n-modes", sim.n_modes, "modes kept from the basis");
    c_sim->add_option("--probe", sim.probes, "record V_m at the heart node nearest to 'x,y' (repeatable)");
    c_sim->add_flag("--no-snapshots", sim.no_snapshots, "skip the snapshot file");

    PodBuildArgs pod;
    auto* c_pod = app.add_subcommand("pod-build", "Compute a POD basis from snapshot files");
    c_pod->add_option("-s,--snapshots", pod.snapshots, "snapshot files")->required();
    c_pod->add_option("-n,--n-modes", pod.n_modes, "number of modes")->required();
    c_pod->add_option("-o,--out", pod.out, "basis file");
    c_pod->add_option("--v-rest", pod.v_rest, "V_m centering offset (mV)");
    c_pod->add_option("--ue-scale", pod.ue_scale, "weight of the u_e block");
    c_pod->add_option("--theta", pod.theta, "parameter tag stored with the basis");

    AnalyzeArgs ana;
    auto* c_ana = app.add_subcommand("analyze", "Restitution and ECG metrics");
    c_ana->add_option("--ecg", ana.ecg, "ECG CSV");
    c_ana->add_option("--probes", ana.probes, "probe CSV written by simulate");
    c_ana->add_option("--probe-column", ana.probe_column, "probe column index");
    c_ana->add_option("--reference", ana.reference, "reference ECG CSV for comparison metrics");
    c_ana->add_option("--baseline", ana.baseline, "healthy ECG CSV for the ST window and offsets");
    c_ana->add_option("--threshold", ana.threshold, "APD threshold (mV)");
    c_ana->add_option("--st-slope", ana.st.slope_threshold, "QRS-end slope threshold (mV/ms)");
    c_ana->add_option("--st-search-end", ana.st.search_end, "QRS-end search limit (ms)");
    c_ana->add_option("--st-begin", ana.st.begin_offset, "ST window start after QRS end (ms)");
    c_ana->add_option("--st-end", ana.st.end_offset, "ST window end after QRS end (ms)");
    c_ana->add_option("-o,--out", ana.out, "output directory");

    IdentifyArgs idn;
    auto* c_idn = app.add_subcommand("identify", "GA identification against a reference ECG");
    c_idn->add_option("-c,--config", idn.config, "run configuration (JSON)");
    c_idn->add_option("-r,--reference", idn.reference, "reference ECG CSV")->required();
    c_idn->add_option("--mode", idn.mode, "params4 | infarct");
    c_idn->add_option("--basis", idn.basis, "single basis file (M1)");
    c_idn->add_option("--dictionary", idn.dictionary, "directory of tagged basis files (M2)");
    c_idn->add_option("--n-modes", idn.n_modes, "modes kept from each basis");
    c_idn->add_option("--T", idn.T, "final time (ms)");
    c_idn->add_option("--radius", idn.radius, "infarct radius (cm)");
    c_idn->add_option("--divisor", idn.divisor, "tau_out divisor inside the infarct");
    c_idn->add_option("--N-p", idn.ga.N_p, "population size");
    c_idn->add_option("--N-g", idn.ga.N_g, "generations");
    c_idn->add_option("--N-ex", idn.ga.N_ex, "exact evaluation budget");
    c_idn->add_option("--selection-fraction", idn.ga.selection_fraction, "share of the population kept as parents");
    c_idn->add_option("--mutation-sigma", idn.ga.mutation_sigma0, "initial mutation width (fraction of the box)");
    c_idn->add_option("--mutation-probability", idn.ga.mutation_probability, "mutation probability");
    c_idn->add_flag("!--no-surrogate", idn.ga.use_surrogate, "evaluate every individual exactly");
    c_idn->add_option("--seed", idn.ga.seed, "random seed");
    c_idn->add_option("--workers", idn.workers, std::string("concurrent exact evaluations (default: $") + kWorkersEnv + " or 1)");
    c_idn->add_option("-o,--out", idn.out, "result JSON");

    PlotDataArgs plot;
    auto* c_plot = app.add_subcommand("plot-data", "Split an ECG CSV into per-lead CSV files");
    c_plot->add_option("--ecg", plot.ecg, "ECG CSV")->required();
    c_plot->add_option("-o,--out", plot.out, "output directory");

    ReproduceArgs rep;
    auto* c_rep = app.add_subcommand("reproduce", "Run a named experiment and write its report");
    c_rep->add_option("experiment", rep.experiment, "e1_tau_close | e2_four_params | e3_restitution | e4_infarcts | "
                                                    "e5_ident4 | e6_ident_infarct | performance")
        ->required();
    c_rep->add_option("-c,--config", rep.config, "base run configuration (JSON)");
    c_rep->add_option("-o,--out", rep.out, "report JSON");
    c_rep->add_option("--workers", rep.workers, "concurrent exact evaluations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success&) {
        app.exit(CLI::Success{}, std::cout, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cout, err);
        return kExitConfig;
    }

    try {
        if (c_mesh->parsed()) cmd_mesh(mesh);
        else if (c_sim->parsed()) cmd_simulate(sim);
        else if (c_pod->parsed()) cmd_pod_build(pod);
        else if (c_ana->parsed()) cmd_analyze(ana);
        else if (c_idn->parsed()) cmd_identify(idn);
        else if (c_plot->parsed()) cmd_plot_data(plot);
        else if (c_rep->parsed()) cmd_reproduce(rep);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "error: malformed number (" << e.what() << ")\n";
        return kExitConfig;
    }
    return kExitOk;
}

} // namespace ecgrom::cli
