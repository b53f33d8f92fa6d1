#pragma once

// Full-order bidomain time stepping: per-element membrane parameter fields,
// stimulus protocols, infarct parameter scaling, the semi-implicit BDF2
// stepper and the generic run loop shared with the reduced model.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ecgrom/errors.hpp"
#include "ecgrom/fem.hpp"
#include "ecgrom/ionic.hpp"
#include "ecgrom/mesh.hpp"
#include "ecgrom/torso_ecg.hpp"

namespace ecgrom {

struct HeartState {
    double time = 0.0;
    VectorXd V;
    VectorXd u_e;
    VectorXd w;
};

// Parameter fields ---------------------------------------------------------

/// Membrane parameters per heart element (order of `mesh.heart_elements()`).
/// A_m and C_m are tissue-wide and taken from the base parameters.
class ParamField {
public:
    ParamField() = default;
    ParamField(const MembraneParams& base, std::size_t n_elements) : base_(base), elems_(n_elements, base) {
        base_.validate();
    }

    const MembraneParams& base() const noexcept { return base_; }
    const MembraneParams& element(std::size_t k) const { return elems_[k]; }
    std::size_t size() const noexcept { return elems_.size(); }

    void set(std::size_t k, const MembraneParams& p) {
        p.validate();
        if (p.A_m != base_.A_m || p.C_m != base_.C_m)
            throw ConfigError("param field: A_m and C_m cannot vary per element");
        if (p.V_min != base_.V_min || p.V_max != base_.V_max || p.V_gate != base_.V_gate)
            throw ConfigError("param field: voltage constants cannot vary per element");
        elems_.at(k) = p;
    }

    friend bool operator==(const ParamField&, const ParamField&) = default;

private:
    MembraneParams base_;
    std::vector<MembraneParams> elems_;
};

/// tau_close per heart region (ms).
struct RegionTauClose {
    double rv = 120.0;
    double endo = 130.0;
    double mcell = 140.0;
    double epi = 90.0;

    double of(Region r) const {
        switch (r) {
        case Region::RV: return rv;
        case Region::LV_endo: return endo;
        case Region::LV_mcell: return mcell;
        case Region::LV_epi: return epi;
        default: throw ConfigError("tau_close requested for a torso region");
        }
    }
};

inline ParamField make_param_field(const Mesh& mesh, const MembraneParams& base, const RegionTauClose& tc = {}) {
    ParamField f(base, mesh.heart_elements().size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        MembraneParams p = base;
        p.tau_close = tc.of(mesh.element_region()[static_cast<std::size_t>(mesh.heart_element_global(k))]);
        f.set(k, p);
    }
    return f;
}

struct InfarctSpec {
    Point2 center;
    double radius = 0.525;
    double tau_out_divisor = 10.0;

    void validate() const {
        if (!(radius > 0.0)) throw ConfigError("infarct: radius must be positive");
        if (!(tau_out_divisor >= 1.0)) throw ConfigError("infarct: tau_out_divisor must be >= 1");
    }
};

/// Heart elements (local index) whose centroid lies within the infarct disc.
inline std::vector<std::size_t> infarct_element_ids(const Mesh& mesh, const InfarctSpec& spec) {
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < mesh.heart_elements().size(); ++k)
        if (distance(mesh.centroid(static_cast<std::size_t>(mesh.heart_element_global(k))), spec.center) <= spec.radius)
            ids.push_back(k);
    return ids;
}

inline ParamField apply_infarct(const ParamField& field, const InfarctSpec& spec, const Mesh& mesh) {
    spec.validate();
    if (field.size() != mesh.heart_elements().size()) throw ConfigError("infarct: param field does not match mesh");
    ParamField out = field;
    const auto ids = infarct_element_ids(mesh, spec);
    if (ids.empty())
        std::clog << "warning: infarct at (" << spec.center.x << ", " << spec.center.y << ") radius " << spec.radius
                  << " contains no heart element\n";
    for (auto k : ids) {
        MembraneParams p = out.element(k);
        p.tau_out /= spec.tau_out_divisor;
        out.set(k, p);
    }
    return out;
}

// Stimulus -----------------------------------------------------------------

struct StimulusSite {
    Point2 center;
    double radius = 0.5;
};

/// Rectangular current pulses on a set of heart nodes. The pulse of onset t0
/// is active for t in (t0, t0 + duration].
struct StimulusProtocol {
    std::vector<std::int32_t> support;  // heart-local node ids
    double amplitude = 0.0;             // mA cm^-2 (per unit membrane area)
    double duration = 2.0;              // ms
    std::vector<double> onsets;         // ms

    void validate() const {
        if (!(duration > 0.0)) throw ConfigError("stimulus: duration must be positive");
        for (std::size_t i = 1; i < onsets.size(); ++i)
            if (!(onsets[i] > onsets[i - 1])) throw ConfigError("stimulus: onsets must be strictly increasing");
    }

    double amplitude_at(double t) const {
        constexpr double eps = 1e-9;
        for (double t0 : onsets)
            if (t > t0 + eps && t <= t0 + duration + eps) return amplitude;
        return 0.0;
    }
};

inline std::vector<std::int32_t> stimulus_support(const Mesh& mesh, const std::vector<StimulusSite>& sites) {
    std::vector<std::int32_t> out;
    for (std::size_t i = 0; i < mesh.num_heart_nodes(); ++i) {
        const Point2 p = mesh.nodes()[static_cast<std::size_t>(mesh.heart_nodes()[i])];
        for (const auto& s : sites)
            if (distance(p, s.center) <= s.radius) {
                out.push_back(static_cast<std::int32_t>(i));
                break;
            }
    }
    return out;
}

/// Septal LV endocardium and RV endocardium, a stand-in for the conduction
/// system's early activation sites.
inline std::vector<StimulusSite> default_stimulus_sites(const GeometryConfig& cfg) {
    std::vector<StimulusSite> sites;
    const double pi = std::acos(-1.0);
    sites.push_back({cfg.lv_inner().at_angle(1.15 * pi), 0.5});
    if (cfg.rv_enabled) sites.push_back({cfg.rv_inner().at_angle(1.25 * pi), 0.5});
    return sites;
}

/// Beat onsets with periods first_period, first_period - decrement, ...
inline std::vector<double> pacing_onsets(int beats, double first_period = 1090.0, double decrement = 50.0,
                                         double start = 0.0) {
    if (beats < 1) throw ConfigError("pacing: at least one beat required");
    std::vector<double> t{start};
    for (int i = 1; i < beats; ++i) {
        const double period = first_period - decrement * (i - 1);
        if (!(period > 0.0)) throw ConfigError("pacing: period became non-positive");
        t.push_back(t.back() + period);
    }
    return t;
}

// Tissue -------------------------------------------------------------------

/// Mesh, parameters and heart matrices shared by full and reduced steppers.
class Tissue {
public:
    Tissue(const Mesh& mesh, ParamField params, const ConductivityField& cond)
        : Tissue(mesh, std::move(params), HeartMatrices::assemble(mesh, cond)) {}

    /// Reuses matrices assembled for the same mesh and conductivities.
    Tissue(const Mesh& mesh, ParamField params, HeartMatrices mats)
        : mesh_(&mesh), params_(std::move(params)), mats_(std::move(mats)) {
        if (params_.size() != mesh.heart_elements().size()) throw ConfigError("tissue: param field does not match mesh");
        if (mats_.M.dim() != static_cast<Eigen::Index>(mesh.num_heart_nodes()))
            throw ConfigError("tissue: matrices do not match mesh");
        const std::size_t ne = mesh.heart_elements().size();
        elem_nodes_.resize(ne);
        elem_weight_.resize(ne);
        const std::size_t n = mesh.num_heart_nodes();
        std::vector<double> area_sum(n, 0.0), open_sum(n, 0.0), close_sum(n, 0.0);
        for (std::size_t k = 0; k < ne; ++k) {
            const auto g = static_cast<std::size_t>(mesh.heart_element_global(k));
            const auto& t = mesh.triangles()[g];
            const double a = mesh.element_area(g);
            elem_weight_[k] = a / 3.0;
            const auto& p = params_.element(k);
            for (int i = 0; i < 3; ++i) {
                const auto loc = mesh.heart_local(t[i]);
                elem_nodes_[k][i] = loc;
                area_sum[loc] += a;
                open_sum[loc] += a * p.tau_open;
                close_sum[loc] += a * p.tau_close;
            }
        }
        const auto& b = params_.base();
        node_gate_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            node_gate_[i] = {open_sum[i] / area_sum[i], close_sum[i] / area_sum[i], b.V_gate, b.V_min, b.V_max};
    }

    const Mesh& mesh() const noexcept { return *mesh_; }
    const ParamField& params() const noexcept { return params_; }
    const HeartMatrices& matrices() const noexcept { return mats_; }
    Eigen::Index n() const noexcept { return static_cast<Eigen::Index>(mesh_->num_heart_nodes()); }
    double A_m() const noexcept { return params_.base().A_m; }
    double C_m() const noexcept { return params_.base().C_m; }

    HeartState initial_state() const {
        const auto& b = params_.base();
        return {0.0, VectorXd::Constant(n(), b.V_min), VectorXd::Zero(n()), VectorXd::Constant(n(), b.rest_gate())};
    }

    /// Per-element mean of the stimulus-support indicator.
    VectorXd stimulus_weights(const StimulusProtocol& s) const {
        std::vector<char> on(static_cast<std::size_t>(n()), 0);
        for (auto i : s.support) {
            if (i < 0 || i >= n()) throw ConfigError("stimulus: support node out of range");
            on[static_cast<std::size_t>(i)] = 1;
        }
        VectorXd wts(static_cast<Eigen::Index>(elem_nodes_.size()));
        for (std::size_t k = 0; k < elem_nodes_.size(); ++k)
            wts[static_cast<Eigen::Index>(k)] =
                (on[elem_nodes_[k][0]] + on[elem_nodes_[k][1]] + on[elem_nodes_[k][2]]) / 3.0;
        return wts;
    }

    /// out_i = A_m sum_e (I_app,e - I_ion(v_e, w_e)) |e|/3 with centroid values.
    void ionic_load(const VectorXd& v, const VectorXd& w, const VectorXd* iapp, VectorXd& out) const {
        out.setZero(n());
        const double am = A_m();
        for (std::size_t k = 0; k < elem_nodes_.size(); ++k) {
            const auto& t = elem_nodes_[k];
            const double vc = (v[t[0]] + v[t[1]] + v[t[2]]) / 3.0;
            const double wc = (w[t[0]] + w[t[1]] + w[t[2]]) / 3.0;
            double src = -i_ion(vc, wc, params_.element(k));
            if (iapp) src += (*iapp)[static_cast<Eigen::Index>(k)];
            const double val = am * src * elem_weight_[k];
            out[t[0]] += val;
            out[t[1]] += val;
            out[t[2]] += val;
        }
    }

    void gate_bdf2(const VectorXd& wk, const VectorXd& wkm1, const VectorXd& v_tilde, double dt, VectorXd& out) const {
        out.resize(n());
        for (Eigen::Index i = 0; i < n(); ++i)
            out[i] = gate_step_bdf2(wk[i], wkm1[i], v_tilde[i], dt, node_gate_[static_cast<std::size_t>(i)]);
    }

    void gate_euler(const VectorXd& wk, const VectorXd& v_tilde, double dt, VectorXd& out) const {
        out.resize(n());
        for (Eigen::Index i = 0; i < n(); ++i)
            out[i] = gate_step_euler(wk[i], v_tilde[i], dt, node_gate_[static_cast<std::size_t>(i)]);
    }

private:
    const Mesh* mesh_;
    ParamField params_;
    HeartMatrices mats_;
    std::vector<std::array<std::int32_t, 3>> elem_nodes_;
    std::vector<double> elem_weight_;
    std::vector<GateParams> node_gate_;
};

// Full-order stepper ---------------------------------------------------------

/// Semi-implicit BDF2 stepper with an implicit Euler first step. Both block
/// matrices are built and factorized once, in the constructor.
class FullOrderModel {
public:
    FullOrderModel(const Tissue& tissue, double dt, SolverOptions opt = {})
        : tissue_(&tissue), dt_(dt),
          a_bdf2_(build_system_matrix(tissue.matrices().M, tissue.matrices().K1, tissue.matrices().K2, tissue.A_m(),
                                      tissue.C_m(), dt, 1.5)),
          a_euler_(build_system_matrix(tissue.matrices().M, tissue.matrices().K1, tissue.matrices().K2, tissue.A_m(),
                                       tissue.C_m(), dt, 1.0)),
          solver_(a_bdf2_, tissue.matrices().lumped, opt), solver_euler_(a_euler_, tissue.matrices().lumped, opt) {
        ++assemblies_;
        reset();
    }

    const Tissue& tissue() const noexcept { return *tissue_; }
    double dt() const noexcept { return dt_; }
    const SparseSym& system_matrix() const noexcept { return a_bdf2_; }
    /// Number of BDF2 system-matrix constructions performed by this instance.
    int system_assemblies() const noexcept { return assemblies_; }
    int last_iterations() const noexcept { return last_iterations_; }

    void reset() { reset(tissue_->initial_state()); }
    void reset(HeartState s) {
        cur_ = std::move(s);
        have_prev_ = false;
    }

    double time() const noexcept { return cur_.time; }
    const HeartState& state() const noexcept { return cur_; }
    const VectorXd& voltage() const noexcept { return cur_.V; }
    double ue_mean() const { return solver_.ue_mean(stacked(cur_)); }
    VectorXd electrodes(const EcgOperator& ecg) const { return ecg.electrodes_from_heart(cur_.u_e); }

    /// Advances by one step with per-element applied current `iapp` at t_{k+1}
    /// (null for none).
    void advance(const VectorXd* iapp) {
        const Tissue& t = *tissue_;
        const auto n = t.n();
        const double c = t.A_m() * t.C_m() / dt_;
        HeartState next;
        next.time = cur_.time + dt_;
        VectorXd load;
        VectorXd rhs = VectorXd::Zero(2 * n);
        VectorXd x;
        try {
            if (!have_prev_) {
                t.gate_euler(cur_.w, cur_.V, dt_, next.w);
                t.ionic_load(cur_.V, next.w, iapp, load);
                rhs.head(n) = c * (t.matrices().M * cur_.V) + load;
                x = solver_euler_.solve(rhs, stacked(cur_));
                last_iterations_ = solver_euler_.last_iterations();
            } else {
                const VectorXd v_tilde = 2.0 * cur_.V - prev_.V;
                t.gate_bdf2(cur_.w, prev_.w, v_tilde, dt_, next.w);
                t.ionic_load(v_tilde, next.w, iapp, load);
                rhs.head(n) = c * (t.matrices().M * (2.0 * cur_.V - 0.5 * prev_.V)) + load;
                VectorXd guess(2 * n);
                guess.head(n) = v_tilde;
                guess.tail(n) = 2.0 * cur_.u_e - prev_.u_e;
                x = solver_.solve(rhs, guess);
                last_iterations_ = solver_.last_iterations();
            }
        } catch (const NumericalError& e) {
            throw NumericalError("step to t=" + std::to_string(next.time) + " ms: " + e.what(), e.residual_history());
        }
        next.V = x.head(n);
        next.u_e = x.tail(n);
        prev_ = std::move(cur_);
        cur_ = std::move(next);
        have_prev_ = true;
    }

    static VectorXd stacked(const HeartState& s) {
        VectorXd x(s.V.size() + s.u_e.size());
        x << s.V, s.u_e;
        return x;
    }

private:
    const Tissue* tissue_;
    double dt_;
    SparseSym a_bdf2_;
    SparseSym a_euler_;
    ConstrainedSolver solver_;
    ConstrainedSolver solver_euler_;
    int assemblies_ = 0;
    int last_iterations_ = 0;
    HeartState cur_;
    HeartState prev_;
    bool have_prev_ = false;
};

// Run loop -------------------------------------------------------------------

struct RunOptions {
    double T = 400.0;
    double dt = 0.5;
    int snapshot_stride = 4;
    bool keep_snapshots = true;
    bool keep_gate = false;                // store w in snapshots
    std::vector<std::int32_t> probes;      // heart-local nodes traced every step

    void validate() const {
        if (!(T > 0.0)) throw ConfigError("T must be positive");
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (snapshot_stride < 1) throw ConfigError("snapshot_stride must be >= 1");
    }

    std::size_t steps() const { return static_cast<std::size_t>(std::ceil(T / dt - 1e-9)); }
};

struct Trajectory {
    double dt = 0.0;
    int snapshot_stride = 1;
    std::vector<HeartState> snapshots;  // steps 0, stride, 2 stride, ...
    EcgTrace ecg;                       // every step including t = 0
    std::vector<std::vector<double>> probe_traces;
    VectorXd first_activation;          // first upward V_gate crossing per node (ms, NaN if none)
    VectorXd time_above_gate;           // ms spent with V > V_gate per node
    std::size_t steps = 0;
    std::size_t bootstrap_steps = 0;
    double max_ue_mean = 0.0;
    double max_einthoven = 0.0;
    double wall_seconds = 0.0;
};

/// Runs any stepper exposing reset/advance/time/voltage/electrodes/ue_mean/state.
template <class Stepper>
Trajectory integrate(Stepper& s, const Tissue& tissue, const StimulusProtocol& stim, const EcgOperator* ecg,
                     const RunOptions& opt) {
    opt.validate();
    stim.validate();
    const auto t_start = std::chrono::steady_clock::now();
    s.reset();
    Trajectory tr;
    tr.dt = opt.dt;
    tr.snapshot_stride = opt.snapshot_stride;
    const double vg = tissue.params().base().V_gate;
    const auto n = tissue.n();
    tr.first_activation = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    tr.time_above_gate = VectorXd::Zero(n);
    tr.probe_traces.assign(opt.probes.size(), {});
    if (ecg) {
        tr.ecg.dt = opt.dt;
        tr.ecg.lead_names = ecg->lead_names();
    }
    const VectorXd weights = tissue.stimulus_weights(stim);
    VectorXd iapp;
    VectorXd v_prev = s.voltage();

    auto record = [&](std::size_t k) {
        const VectorXd& v = s.voltage();
        for (std::size_t p = 0; p < opt.probes.size(); ++p) tr.probe_traces[p].push_back(v[opt.probes[p]]);
        if (ecg) {
            const VectorXd leads = ecg->leads.apply(s.electrodes(*ecg));
            tr.max_einthoven = std::max(tr.max_einthoven, std::abs(leads[0] - leads[1] + leads[2]));
            tr.ecg.append(leads);
        }
        tr.max_ue_mean = std::max(tr.max_ue_mean, std::abs(s.ue_mean()));
        if (k > 0) {
            const double t1 = s.time(), t0 = t1 - opt.dt;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (v[i] > vg) tr.time_above_gate[i] += opt.dt;
                if (std::isnan(tr.first_activation[i]) && v_prev[i] <= vg && v[i] > vg)
                    tr.first_activation[i] = t0 + opt.dt * (vg - v_prev[i]) / (v[i] - v_prev[i]);
            }
            v_prev = v;
        }
        if (opt.keep_snapshots && k % static_cast<std::size_t>(opt.snapshot_stride) == 0) {
            HeartState snap = s.state();
            if (!opt.keep_gate) snap.w.resize(0);
            tr.snapshots.push_back(std::move(snap));
        }
    };

    record(0);
    const std::size_t steps = opt.steps();
    for (std::size_t k = 0; k < steps; ++k) {
        const double amp = stim.amplitude_at(s.time() + opt.dt);
        if (amp != 0.0) iapp = amp * weights;
        s.advance(amp != 0.0 ? &iapp : nullptr);
        if (k == 0) ++tr.bootstrap_steps;
        ++tr.steps;
        record(k + 1);
    }
    tr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return tr;
}

/// Convenience full-order run: assembles the tissue and matrices, runs, and
/// returns the trajectory. The ECG is recorded when `ecg` is given.
inline Trajectory run_full_order(const Mesh& mesh, const ParamField& params, const ConductivityField& cond,
                                 const StimulusProtocol& stim, const std::optional<InfarctSpec>& infarct,
                                 const RunOptions& opt, const EcgOperator* ecg = nullptr, SolverOptions solver = {}) {
    opt.validate();
    const ParamField field = infarct ? apply_infarct(params, *infarct, mesh) : params;
    const Tissue tissue(mesh, field, cond);
    FullOrderModel model(tissue, opt.dt, solver);
    return integrate(model, tissue, stim, ecg, opt);
}

/// Stimulus on the default sites with single-beat onset at t = 0.
inline StimulusProtocol default_stimulus(const Mesh& mesh, const GeometryConfig& cfg, double amplitude = 0.05,
                                         double duration = 2.0, std::vector<double> onsets = {0.0}) {
    StimulusProtocol s;
    s.support = stimulus_support(mesh, default_stimulus_sites(cfg));
    s.amplitude = amplitude;
    s.duration = duration;
    s.onsets = std::move(onsets);
    s.validate();
    return s;
}

} // namespace ecgrom
