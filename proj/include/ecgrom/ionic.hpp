#pragma once

// Mitchell-Schaeffer two-variable membrane model in dimensional form
// (V in mV, t in ms, w scaled so that its rest value is 1/(V_max - V_min)^2).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ecgrom/errors.hpp"

namespace ecgrom {

struct MembraneParams {
    double A_m = 200.0;     // cm^-1
    double C_m = 1e-3;      // mF cm^-2
    double tau_in = 16.0;   // ms
    double tau_out = 360.0;
    double tau_open = 100.0;
    double tau_close = 120.0;
    double V_gate = -67.0;  // mV
    double V_min = -80.0;
    double V_max = 20.0;

    double range() const { return V_max - V_min; }
    double rest_gate() const { return 1.0 / (range() * range()); }

    void validate() const {
        if (!(tau_in > 0 && tau_out > 0 && tau_open > 0 && tau_close > 0))
            throw ConfigError("membrane: all time constants must be positive");
        if (!(V_min < V_gate && V_gate < V_max)) throw ConfigError("membrane: requires V_min < V_gate < V_max");
        if (!(A_m > 0)) throw ConfigError("membrane: A_m must be positive");
        if (!(C_m > 0)) throw ConfigError("membrane: C_m must be positive");
    }

    friend bool operator==(const MembraneParams&, const MembraneParams&) = default;
};

/// Ionic current; enters the voltage equation with a plus sign.
inline double i_ion(double v, double w, const MembraneParams& p) {
    const double range = p.range();
    const double dv = v - p.V_min;
    return -(w / p.tau_in) * dv * dv * (p.V_max - v) / range + dv / (p.tau_out * range);
}

/// Whether the gate is on its opening branch. The switch value itself
/// (v == V_gate) is assigned to the opening branch.
inline bool gate_is_open(double v, double v_gate) { return v <= v_gate; }

inline double gate_rate(double v, double w, const MembraneParams& p) {
    if (gate_is_open(v, p.V_gate)) return w / p.tau_open - 1.0 / (p.tau_open * p.range() * p.range());
    return w / p.tau_close;
}

/// Gate constants needed at a node: the rate g is affine in w, g = a w - b.
struct GateParams {
    double tau_open = 100.0;
    double tau_close = 120.0;
    double V_gate = -67.0;
    double V_min = -80.0;
    double V_max = 20.0;

    static GateParams from(const MembraneParams& p) { return {p.tau_open, p.tau_close, p.V_gate, p.V_min, p.V_max}; }
};

namespace detail {
// g(v, w) = slope * w - source on the branch selected by v.
inline void gate_affine(double v, const GateParams& p, double& slope, double& source) {
    if (gate_is_open(v, p.V_gate)) {
        const double range = p.V_max - p.V_min;
        slope = 1.0 / p.tau_open;
        source = 1.0 / (p.tau_open * range * range);
    } else {
        slope = 1.0 / p.tau_close;
        source = 0.0;
    }
}
} // namespace detail

/// Closed-form solution of (3/2 w - 2 w_k + 1/2 w_km1)/dt + g(v_tilde, w) = 0.
/// The branch is fixed by the extrapolated voltage, never by the unknown w.
inline double gate_step_bdf2(double w_k, double w_km1, double v_tilde, double dt, const GateParams& p) {
    double slope, source;
    detail::gate_affine(v_tilde, p, slope, source);
    return ((2.0 * w_k - 0.5 * w_km1) / dt + source) / (1.5 / dt + slope);
}

inline double gate_step_bdf2(double w_k, double w_km1, double v_tilde, double dt, const MembraneParams& p) {
    return gate_step_bdf2(w_k, w_km1, v_tilde, dt, GateParams::from(p));
}

/// Implicit Euler gate update used for the first step.
inline double gate_step_euler(double w_k, double v_tilde, double dt, const GateParams& p) {
    double slope, source;
    detail::gate_affine(v_tilde, p, slope, source);
    return (w_k / dt + source) / (1.0 / dt + slope);
}

inline double gate_step_euler(double w_k, double v_tilde, double dt, const MembraneParams& p) {
    return gate_step_euler(w_k, v_tilde, dt, GateParams::from(p));
}

/// Single-cell trajectory sampled at every step (index 0 is the initial value).
struct CellTrace {
    double dt = 0.0;
    std::vector<double> v;
    std::vector<double> w;
};

/// Integrates the membrane model alone with the scheme used in the tissue
/// solver: implicit Euler bootstrap, then BDF2 with the ionic current taken at
/// the extrapolated voltage 2 V^k - V^{k-1}. `i_app(t)` is evaluated at t_{k+1}.
inline CellTrace integrate_cell(const MembraneParams& p, double v0, double w0, double dt, std::size_t steps,
                                const std::function<double(double)>& i_app = {}) {
    p.validate();
    if (!(dt > 0.0)) throw ConfigError("integrate_cell: dt must be positive");
    const GateParams gp = GateParams::from(p);
    CellTrace tr;
    tr.dt = dt;
    tr.v.reserve(steps + 1);
    tr.w.reserve(steps + 1);
    tr.v.push_back(v0);
    tr.w.push_back(w0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t_next = static_cast<double>(k + 1) * dt;
        const double iapp = i_app ? i_app(t_next) : 0.0;
        const double vk = tr.v.back(), wk = tr.w.back();
        double v_next, w_next;
        if (k == 0) {
            w_next = gate_step_euler(wk, vk, dt, gp);
            v_next = vk + dt / p.C_m * (iapp - i_ion(vk, w_next, p));
        } else {
            const double vkm1 = tr.v[k - 1], wkm1 = tr.w[k - 1];
            const double v_tilde = 2.0 * vk - vkm1;
            w_next = gate_step_bdf2(wk, wkm1, v_tilde, dt, gp);
            v_next = (2.0 * vk - 0.5 * vkm1 + dt / p.C_m * (iapp - i_ion(v_tilde, w_next, p))) / 1.5;
        }
        tr.v.push_back(v_next);
        tr.w.push_back(w_next);
    }
    return tr;
}

} // namespace ecgrom
