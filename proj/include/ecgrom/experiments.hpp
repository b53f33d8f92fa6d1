#pragma once

// Desk-scale experiment drivers. Each returns a JSON report; the acceptance
// suite and the `reproduce` subcommand consume the same reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "ecgrom/config.hpp"
#include "ecgrom/identify.hpp"
#include "ecgrom/postproc.hpp"

namespace ecgrom {

/// Mesh, operators and stimulus of one configuration, shared by every run of
/// an experiment. Not copyable: runs keep pointers into it.
class DeskModel {
public:
    explicit DeskModel(RunConfig cfg = {})
        : config(std::move(cfg)),
          mesh(build_mesh(config)),
          cond(make_conductivity(mesh, config.conductivity)),
          ecg(build_transfer_matrix(mesh, cond.sigma_t)),
          stimulus(build_stimulus(mesh, config)),
          matrices(HeartMatrices::assemble(mesh, cond)) {}

    DeskModel(const DeskModel&) = delete;
    DeskModel& operator=(const DeskModel&) = delete;

    RunConfig config;
    Mesh mesh;
    ConductivityField cond;
    EcgOperator ecg;
    StimulusProtocol stimulus;
    HeartMatrices matrices;

    RunOptions options(double T, int stride = 4) const {
        RunOptions o;
        o.T = T;
        o.dt = config.dt;
        o.snapshot_stride = stride;
        o.validate();
        return o;
    }

    ParamField field(const MembraneParams& p, const RegionTauClose& tc) const { return make_param_field(mesh, p, tc); }
    ParamField healthy_field() const { return field(config.membrane, config.tau_close); }

    Trajectory full(const ParamField& f, const RunOptions& o, const StimulusProtocol* stim = nullptr) const {
        const Tissue tissue(mesh, f, matrices);
        FullOrderModel model(tissue, o.dt, config.solver);
        return integrate(model, tissue, stim ? *stim : stimulus, &ecg, o);
    }

    Trajectory rom(const ParamField& f, const PreparedBasis& b, const RunOptions& o,
                   const StimulusProtocol* stim = nullptr) const {
        const Tissue tissue(mesh, f, matrices);
        RomModel model(tissue, b.basis, b.projection, o.dt);
        return integrate(model, tissue, stim ? *stim : stimulus, &ecg, o);
    }

    PreparedBasis basis(const SnapshotMatrix& b, Eigen::Index n_modes, std::vector<double> theta = {}) const {
        PodBasis basis = compute_basis(b, n_modes, {config.membrane.V_min, 1.0});
        basis.theta = std::move(theta);
        return PreparedBasis::make(std::move(basis), matrices);
    }

    /// LV mid-wall point at `angle` (radians from the +x axis).
    Point2 lv_midwall(double angle) const {
        const auto& g = config.geometry;
        const Ellipse mid{g.lv_center, g.lv_axis_x - 0.5 * g.lv_wall, g.lv_axis_y - 0.5 * g.lv_wall};
        return mid.at_angle(angle);
    }

    double default_infarct_radius() const { return 0.15 * config.geometry.heart_outer_radius(); }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

inline json lead_correlations(const EcgTrace& ref, const EcgTrace& other) {
    json j = json::object();
    for (const auto& name : ref.lead_names) j[name] = pearson_correlation(ref.lead(name), other.lead(name));
    return j;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Relative error of the u_e block alone.
inline double ue_relative_error(const Trajectory& ref, const Trajectory& other) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ref.snapshots.size(); ++k) {
        num += (ref.snapshots[k].u_e - other.snapshots[k].u_e).squaredNorm();
        den += ref.snapshots[k].u_e.squaredNorm();
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

inline json theta_json(const Theta& t) { return json(t); }

inline void note(std::ostream* log, const std::string& s) {
    if (log) *log << s << std::endl;
}

} // namespace detail

// e1: tau_close perturbation --------------------------------------------------------

struct E1Options {
    RunConfig base;
    double basis_epi = 100.0, basis_rv = 100.0;
    double target_epi = 80.0, target_rv = 130.0;
    int n_modes = 80;
    double T = 500.0;
    int stride = 4;
};

inline json run_e1(const E1Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const DeskModel desk(opt.base);
    RegionTauClose tb = opt.base.tau_close, tt = opt.base.tau_close;
    tb.epi = opt.basis_epi;
    tb.rv = opt.basis_rv;
    tt.epi = opt.target_epi;
    tt.rv = opt.target_rv;
    const RunOptions o = desk.options(opt.T, opt.stride);
    const auto fb = desk.field(opt.base.membrane, tb), ft = desk.field(opt.base.membrane, tt);
    const Trajectory train = desk.full(fb, o);
    SnapshotMatrix B;
    collect_into(B, train, "basis", SnapshotPlan::every(1));
    const PreparedBasis basis = desk.basis(B, opt.n_modes);
    detail::note(log, "e1: basis of " + std::to_string(opt.n_modes) + " modes from " + std::to_string(B.cols()) + " snapshots");
    const Trajectory full = desk.full(ft, o);
    const Trajectory rom = desk.rom(ft, basis, o);
    json r;
    r["experiment"] = "e1_tau_close";
    r["heart_nodes"] = desk.mesh.num_heart_nodes();
    r["basis_tau_close"] = {{"epi", opt.basis_epi}, {"RV", opt.basis_rv}};
    r["target_tau_close"] = {{"epi", opt.target_epi}, {"RV", opt.target_rv}};
    r["n_modes"] = opt.n_modes;
    r["snapshots"] = B.cols();
    r["T"] = opt.T;
    r["spacetime_relative_error"] = spacetime_relative_error(full, rom);
    r["ue_relative_error"] = detail::ue_relative_error(full, rom);
    r["full_vs_basis_run_error"] = spacetime_relative_error(full, train);
    r["lead_correlations"] = detail::lead_correlations(full.ecg, rom.ecg);
    r["orthonormality_defect"] = orthonormality_defect(basis.basis.modes);
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// e2: four-parameter perturbation ----------------------------------------------------

struct E2Options {
    RunConfig base;
    Theta basis_theta{1.5, 2e-3, 100.0, 50.0};
    Theta target_theta{0.8, 1e-3, 200.0, 120.0};
    int n_modes = 80;
    double T = 400.0;
    int stride = 4;
};

inline json run_e2(const E2Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const DeskModel desk(opt.base);
    const RunOptions o = desk.options(opt.T, opt.stride);
    const auto fb = field_from_params4(desk.mesh, opt.basis_theta, opt.base.membrane, opt.base.tau_close);
    const auto ft = field_from_params4(desk.mesh, opt.target_theta, opt.base.membrane, opt.base.tau_close);
    const Trajectory train = desk.full(fb, o);
    SnapshotMatrix B;
    collect_into(B, train, "basis", SnapshotPlan::every(1));
    const PreparedBasis basis = desk.basis(B, opt.n_modes, opt.basis_theta);
    detail::note(log, "e2: basis built");
    const Trajectory full = desk.full(ft, o);
    const Trajectory rom = desk.rom(ft, basis, o);
    json r;
    r["experiment"] = "e2_four_params";
    r["basis_theta"] = opt.basis_theta;
    r["target_theta"] = opt.target_theta;
    r["n_modes"] = opt.n_modes;
    r["spacetime_relative_error"] = spacetime_relative_error(full, rom);
    r["ue_relative_error"] = detail::ue_relative_error(full, rom);
    r["lead_correlations"] = detail::lead_correlations(full.ecg, rom.ecg);
    r["cost_j"] = cost_j(rom.ecg, full.ecg);
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// e3: restitution under accelerating pacing ------------------------------------------

struct E3Options {
    RunConfig base;
    int beats = 12;
    double first_period = 1090.0;
    double decrement = 50.0;
    double basis_T = 400.0;
    int stride = 4;
    int n_modes = 100;
    double tail = 600.0;         // simulated time after the last onset
    double probe_angle = 180.0;  // degrees on the RV epicardial ellipse
    double threshold = -67.0;
};

inline std::int32_t rv_epicardial_probe(const DeskModel& desk, double angle_deg) {
    const auto& g = desk.config.geometry;
    if (!g.rv_enabled) throw ConfigError("restitution probe needs a right ventricle");
    const Ellipse out = g.rv_outer();
    // Slightly inside the epicardial surface, towards the RV centre.
    const Point2 surf = out.at_angle(detail::deg(angle_deg));
    const Point2 p = surf + 0.5 * g.h * (1.0 / std::max(distance(surf, out.center), 1e-12)) * (out.center - surf);
    return desk.mesh.heart_local(desk.mesh.nearest_node(p, desk.mesh.heart_nodes()));
}

inline json restitution_json(const std::vector<RestitutionPoint>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back({{"beat", p.beat}, {"di", p.di}, {"apd", p.apd}});
    return a;
}

inline json run_e3(const E3Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = opt.base;
    cfg.stimulus.onsets = pacing_onsets(opt.beats, opt.first_period, opt.decrement);
    const DeskModel desk(cfg);
    const auto field = desk.healthy_field();
    const Trajectory train = desk.full(field, desk.options(opt.basis_T, opt.stride));
    SnapshotMatrix B;
    collect_into(B, train, "first_beat", SnapshotPlan::every(1));
    const PreparedBasis basis = desk.basis(B, opt.n_modes);
    detail::note(log, "e3: basis of " + std::to_string(opt.n_modes) + " modes from the first " +
                          std::to_string(opt.basis_T) + " ms");
    RunOptions L = desk.options(desk.stimulus.onsets.back() + opt.tail);
    L.keep_snapshots = false;
    const auto probe = rv_epicardial_probe(desk, opt.probe_angle);
    L.probes = {probe};
    const Trajectory full = desk.full(field, L);
    detail::note(log, "e3: full-order run done");
    const Trajectory rom = desk.rom(field, basis, L);
    const auto pf = detect_apd_di(full.probe_traces[0], L.dt, opt.threshold);
    const auto pr = detect_apd_di(rom.probe_traces[0], L.dt, opt.threshold);
    double max_diff = pf.size() == pr.size() ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(pf.size(), pr.size()); ++i)
        max_diff = std::max(max_diff, std::abs(pf[i].apd - pr[i].apd));
    json r;
    r["experiment"] = "e3_restitution";
    r["beats"] = opt.beats;
    r["onsets"] = desk.stimulus.onsets;
    r["T"] = L.T;
    r["probe_node"] = probe;
    r["full"] = restitution_json(pf);
    r["rom"] = restitution_json(pr);
    r["max_apd_difference"] = max_diff;
    r["full_monotone"] = restitution_monotone(pf, 1.0);
    r["rom_monotone"] = restitution_monotone(pr, 1.0);
    r["lead_I_correlation"] = pearson_correlation(full.ecg.lead("I"), rom.ecg.lead("I"));
    r["full_wall_seconds"] = full.wall_seconds;
    r["rom_wall_seconds"] = rom.wall_seconds;
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// e4: infarcts and the mixed snapshot basis -----------------------------------------

struct InfarctBasisOptions {
    int n_points = 18;
    double angle_step = 20.0;  // degrees
    double radius = 0.0;       // 0: 15% of the heart outer radius
    double divisor = 10.0;
    std::size_t healthy_snapshots = 100;
    std::size_t per_infarct = 50;
    double split_time = 100.0;
    int n_modes = 100;
    double T = 400.0;
    int stride = 4;
};

struct InfarctBasis {
    Trajectory healthy;
    std::vector<Point2> centers;
    PreparedBasis healthy_basis;
    PreparedBasis mixed;
    double radius = 0.0;
};

inline InfarctBasis build_infarct_bases(const DeskModel& desk, const InfarctBasisOptions& opt, std::ostream* log = nullptr) {
    const RunOptions o = desk.options(opt.T, opt.stride);
    const double radius = opt.radius > 0.0 ? opt.radius : desk.default_infarct_radius();
    const auto healthy = desk.healthy_field();
    Trajectory h = desk.full(healthy, o);
    SnapshotMatrix bh;
    collect_into(bh, h, "healthy", SnapshotPlan::every(1));
    PreparedBasis hb = desk.basis(bh, opt.n_modes);
    SnapshotMatrix bm;
    collect_into(bm, h, "healthy", SnapshotPlan::take(opt.healthy_snapshots));
    std::vector<Point2> centers;
    for (int k = 0; k < opt.n_points; ++k) {
        const Point2 c = desk.lv_midwall(detail::deg(k * opt.angle_step));
        centers.push_back(c);
        const Trajectory t = desk.full(apply_infarct(healthy, {c, radius, opt.divisor}, desk.mesh), o);
        collect_into(bm, t, "infarct_" + std::to_string(k), SnapshotPlan::split(opt.per_infarct, opt.split_time));
    }
    detail::note(log, "infarct basis: " + std::to_string(bm.cols()) + " mixed snapshots");
    PreparedBasis mb = desk.basis(bm, opt.n_modes);
    return {std::move(h), std::move(centers), std::move(hb), std::move(mb), radius};
}

struct E4Options {
    RunConfig base;
    InfarctBasisOptions bases;
    double p_angle = 130.0;  // degrees; off the 20-degree grid
    StWindowOptions st;
};

/// e4 on prebuilt bases; `desk` must be built from `opt.base`.
inline json run_e4(const DeskModel& desk, const InfarctBasis& ib, const E4Options& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunOptions o = desk.options(opt.bases.T, opt.bases.stride);
    const Point2 P = desk.lv_midwall(detail::deg(opt.p_angle));
    const InfarctSpec spec{P, ib.radius, opt.bases.divisor};
    const auto field = apply_infarct(desk.healthy_field(), spec, desk.mesh);
    const Trajectory full = desk.full(field, o);
    const Trajectory rh = desk.rom(field, ib.healthy_basis, o);
    const Trajectory rm = desk.rom(field, ib.mixed, o);
    const double eh = spacetime_relative_error(full, rh), em = spacetime_relative_error(full, rm);
    const auto window = st_window(ib.healthy.ecg, opt.st);
    const auto st_full = st_offset(full.ecg, window.first, window.second, ib.healthy.ecg);
    const auto st_mixed = st_offset(rm.ecg, window.first, window.second, ib.healthy.ecg);
    const auto st_healthy = st_offset(rh.ecg, window.first, window.second, ib.healthy.ecg);

    // Activation inside the infarct relative to the healthy run.
    const auto ids = infarct_element_ids(desk.mesh, spec);
    std::vector<char> inside(desk.mesh.num_heart_nodes(), 0);
    for (auto k : ids)
        for (auto g : desk.mesh.triangles()[static_cast<std::size_t>(desk.mesh.heart_element_global(k))]) {
            const Point2 q = desk.mesh.nodes()[static_cast<std::size_t>(g)];
            if (distance(q, P) < ib.radius) inside[static_cast<std::size_t>(desk.mesh.heart_local(g))] = 1;
        }
    double above_inf = 0.0, above_healthy = 0.0;
    for (std::size_t i = 0; i < inside.size(); ++i)
        if (inside[i]) {
            above_inf += full.time_above_gate[static_cast<Eigen::Index>(i)];
            above_healthy += ib.healthy.time_above_gate[static_cast<Eigen::Index>(i)];
        }

    json r;
    r["experiment"] = "e4_infarcts";
    r["P"] = {P.x, P.y};
    r["radius"] = ib.radius;
    r["centers"] = json::array();
    for (auto c : ib.centers) r["centers"].push_back({c.x, c.y});
    r["n_modes"] = opt.bases.n_modes;
    r["mixed_snapshots"] = opt.bases.healthy_snapshots + opt.bases.per_infarct * ib.centers.size();
    r["healthy_basis_error"] = eh;
    r["mixed_basis_error"] = em;
    r["error_ratio"] = eh / em;
    r["st_window"] = {window.first, window.second};
    r["st_full"] = st_full;
    r["st_rom_mixed"] = st_mixed;
    r["st_rom_healthy"] = st_healthy;
    r["infarct_activation_ratio"] = above_healthy > 0.0 ? above_inf / above_healthy : 0.0;
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

inline json run_e4(const E4Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const DeskModel desk(opt.base);
    const InfarctBasis ib = build_infarct_bases(desk, opt.bases, log);
    json r = run_e4(desk, ib, opt);
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// e5: four-parameter identification -------------------------------------------------

struct E5Options {
    RunConfig base;
    GaConfig ga;  // defaults: N_p 40, N_g 10, N_ex 200
    int seeds = 5;
    std::uint64_t first_seed = 1;
    int n_modes = 80;
    double T = 400.0;
    Theta theta0{1.0, 1e-3, 200.0, 100.0};
    Theta reference = params4_reference();
    std::vector<std::vector<double>> dictionary_axes{
        {0.5, 1.0, 1.5}, {5e-4, 1e-3, 1.5e-3, 2e-3}, {100.0, 200.0, 300.0}, {50.0, 100.0, 150.0}};
    bool run_m1 = true;
    bool run_m2 = true;
};

inline std::vector<Theta> tensor_grid(const std::vector<std::vector<double>>& axes) {
    std::vector<Theta> out{Theta{}};
    for (const auto& ax : axes) {
        std::vector<Theta> next;
        for (const auto& t : out)
            for (double v : ax) {
                Theta u = t;
                u.push_back(v);
                next.push_back(std::move(u));
            }
        out = std::move(next);
    }
    return out;
}

/// Basis from every snapshot (every 2 ms) of a full-order run at theta.
inline PreparedBasis params4_basis(const DeskModel& desk, const Theta& theta, int n_modes, double T) {
    RunOptions o = desk.options(T);
    const auto f = field_from_params4(desk.mesh, theta, desk.config.membrane, desk.config.tau_close);
    const Tissue tissue(desk.mesh, f, desk.matrices);
    FullOrderModel model(tissue, o.dt, desk.config.solver);
    const Trajectory t = integrate(model, tissue, desk.stimulus, nullptr, o);
    SnapshotMatrix B;
    collect_into(B, t, "theta", SnapshotPlan::every(1));
    return desk.basis(B, n_modes, theta);
}

inline json ga_result_json(const GaResult& r) {
    json h = json::array();
    for (const auto& g : r.history)
        h.push_back({{"generation", g.generation},
                     {"best_cost", g.best_cost},
                     {"best_theta", g.best_theta},
                     {"exact", g.exact_evaluations},
                     {"surrogate", g.surrogate_evaluations},
                     {"reused", g.reused},
                     {"regularized", g.surrogate_regularized}});
    return {{"best_theta", r.best_theta}, {"best_cost", r.best_cost}, {"exact_evaluations", r.exact_evaluations},
            {"completed", r.completed},   {"error", r.error},         {"history", h}};
}

inline json run_e5(const E5Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const DeskModel desk(opt.base);
    RunOptions o = desk.options(opt.T);
    const ForwardContext ctx(desk.mesh, desk.cond, desk.ecg, desk.stimulus, o);
    const EcgTrace ref = ctx.full_ecg(field_from_params4(desk.mesh, opt.reference, desk.config.membrane, desk.config.tau_close),
                                      desk.config.solver);
    json r;
    r["experiment"] = "e5_ident4";
    r["reference"] = opt.reference;
    r["ga"] = {{"N_p", opt.ga.N_p}, {"N_g", opt.ga.N_g}, {"N_ex", opt.ga.N_ex}};
    r["n_modes"] = opt.n_modes;
    r["seeds"] = opt.seeds;

    auto run_method = [&](const std::string& name, const std::vector<const PreparedBasis*>& dict) {
        json runs = json::array();
        std::vector<double> errs;
        for (int s = 0; s < opt.seeds; ++s) {
            GaConfig c = opt.ga;
            c.seed = opt.first_seed + static_cast<std::uint64_t>(s);
            const GaResult res = identify_params4(ctx, ref, dict, c, {}, desk.config.membrane, desk.config.tau_close);
            json j = ga_result_json(res);
            j["seed"] = c.seed;
            j["mean_relative_error"] = res.best_theta.empty() ? 100.0 : mean_relative_error(res.best_theta, opt.reference);
            errs.push_back(j["mean_relative_error"].get<double>());
            runs.push_back(j);
            detail::note(log, "e5 " + name + " seed " + std::to_string(c.seed) + ": error " +
                                  std::to_string(errs.back()) + "%");
        }
        r[name] = {{"runs", runs}, {"median_error", detail::median(errs)}};
    };

    if (opt.run_m1) {
        const PreparedBasis b = params4_basis(desk, opt.theta0, opt.n_modes, opt.T);
        r["M1_theta0"] = opt.theta0;
        run_method("M1", {&b});
    }
    if (opt.run_m2) {
        std::vector<PreparedBasis> dict;
        for (const auto& th : tensor_grid(opt.dictionary_axes))
            dict.push_back(params4_basis(desk, th, opt.n_modes, opt.T));
        detail::note(log, "e5: dictionary of " + std::to_string(dict.size()) + " bases");
        std::vector<const PreparedBasis*> ptrs;
        for (const auto& b : dict) ptrs.push_back(&b);
        r["M2_dictionary_size"] = dict.size();
        run_method("M2", ptrs);
    }
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// e6: infarct localization ----------------------------------------------------------

struct E6Options {
    RunConfig base;
    InfarctBasisOptions bases;
    GaConfig ga = [] {
        GaConfig g;
        g.N_p = 30;
        g.N_g = 10;
        g.N_ex = 150;
        return g;
    }();
    int seeds = 5;
    std::uint64_t first_seed = 1;
    double p_angle = 130.0;
};

/// e6 on prebuilt bases; `desk` must be built from `opt.base`.
inline json run_e6(const DeskModel& desk, const InfarctBasis& ib, const E6Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunOptions o = desk.options(opt.bases.T, opt.bases.stride);
    const ForwardContext ctx(desk.mesh, desk.cond, desk.ecg, desk.stimulus, o);
    const auto healthy = desk.healthy_field();
    const Point2 P = desk.lv_midwall(detail::deg(opt.p_angle));
    const EcgTrace ref = ctx.full_ecg(apply_infarct(healthy, {P, ib.radius, opt.bases.divisor}, desk.mesh), desk.config.solver);
    const LvMask mask(desk.mesh);
    json runs = json::array();
    int hits = 0;
    for (int s = 0; s < opt.seeds; ++s) {
        GaConfig c = opt.ga;
        c.seed = opt.first_seed + static_cast<std::uint64_t>(s);
        const GaResult res = identify_infarct(ctx, ref, mask, ib.mixed, healthy, c, ib.radius, opt.bases.divisor);
        json j = ga_result_json(res);
        j["seed"] = c.seed;
        const double d = res.best_theta.size() == 2 ? distance(P, {res.best_theta[0], res.best_theta[1]})
                                                    : std::numeric_limits<double>::infinity();
        j["distance"] = d;
        j["hit"] = d <= ib.radius;
        hits += d <= ib.radius;
        runs.push_back(j);
        detail::note(log, "e6 seed " + std::to_string(c.seed) + ": distance " + std::to_string(d));
    }
    json r;
    r["experiment"] = "e6_ident_infarct";
    r["P"] = {P.x, P.y};
    r["radius"] = ib.radius;
    r["ga"] = {{"N_p", opt.ga.N_p}, {"N_g", opt.ga.N_g}, {"N_ex", opt.ga.N_ex}};
    r["runs"] = runs;
    r["hits"] = hits;
    r["seeds"] = opt.seeds;
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

inline json run_e6(const E6Options& opt, std::ostream* log = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const DeskModel desk(opt.base);
    const InfarctBasis ib = build_infarct_bases(desk, opt.bases, log);
    json r = run_e6(desk, ib, opt, log);
    r["wall_seconds"] = detail::seconds_since(t0);
    return r;
}

// Step timing ---------------------------------------------------------------------

struct PerfOptions {
    RunConfig base = [] {
        RunConfig c;
        c.geometry.h = 0.07;
        return c;
    }();
    int n_modes = 100;
    double basis_T = 400.0;
    int timed_steps = 200;
};

/// Per-step wall time of the full-order model (both backends) and the ROM.
inline json run_performance(const PerfOptions& opt, std::ostream* log = nullptr) {
    const DeskModel desk(opt.base);
    const auto field = desk.healthy_field();
    const Trajectory train = desk.full(field, desk.options(opt.basis_T));
    SnapshotMatrix B;
    collect_into(B, train, "perf", SnapshotPlan::every(1));
    const PreparedBasis basis = desk.basis(B, opt.n_modes);
    const Tissue tissue(desk.mesh, field, desk.matrices);
    RunOptions o = desk.options(opt.timed_steps * desk.config.dt);
    o.keep_snapshots = false;
    auto per_step = [&](auto& stepper) {
        const Trajectory t = integrate(stepper, tissue, desk.stimulus, &desk.ecg, o);
        return t.wall_seconds / static_cast<double>(t.steps);
    };
    FullOrderModel pcg(tissue, o.dt, {SolverBackend::pcg});
    const double t_pcg = per_step(pcg);
    FullOrderModel direct(tissue, o.dt, {SolverBackend::direct});
    const double t_direct = per_step(direct);
    RomModel rom(tissue, basis.basis, basis.projection, o.dt);
    const double t_rom = per_step(rom);
    detail::note(log, "performance: timed " + std::to_string(opt.timed_steps) + " steps per stepper");
    return {{"experiment", "performance"},
            {"heart_nodes", desk.mesh.num_heart_nodes()},
            {"n_modes", opt.n_modes},
            {"full_pcg_ms_per_step", 1e3 * t_pcg},
            {"full_direct_ms_per_step", 1e3 * t_direct},
            {"rom_ms_per_step", 1e3 * t_rom},
            {"rom_over_pcg", t_rom / t_pcg},
            {"rom_over_direct", t_rom / t_direct}};
}

// Dispatch ------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> n{"e1_tau_close", "e2_four_params", "e3_restitution",
                                            "e4_infarcts",  "e5_ident4",      "e6_ident_infarct"};
    return n;
}

/// Runs a named experiment (full name or its e1..e6 prefix) on `base`.
inline json reproduce_experiment(const std::string& name, const RunConfig& base, int workers = 1,
                                 std::ostream* log = nullptr) {
    auto is = [&](const char* full) { return name == full || name == std::string(full).substr(0, 2); };
    if (is("e1_tau_close")) {
        E1Options o;
        o.base = base;
        return run_e1(o, log);
    }
    if (is("e2_four_params")) {
        E2Options o;
        o.base = base;
        return run_e2(o, log);
    }
    if (is("e3_restitution")) {
        E3Options o;
        o.base = base;
        return run_e3(o, log);
    }
    if (is("e4_infarcts")) {
        E4Options o;
        o.base = base;
        return run_e4(o, log);
    }
    if (is("e5_ident4")) {
        E5Options o;
        o.base = base;
        o.ga.workers = workers;
        return run_e5(o, log);
    }
    if (is("e6_ident_infarct")) {
        E6Options o;
        o.base = base;
        o.ga.workers = workers;
        return run_e6(o, log);
    }
    if (name == "performance") {
        PerfOptions o;
        o.base.membrane = base.membrane;
        return run_performance(o, log);
    }
    throw ConfigError("unknown experiment '" + name + "'");
}

} // namespace ecgrom
