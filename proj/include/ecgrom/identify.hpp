#pragma once

// Model-coupled identification: ECG evaluators built on the full and reduced
// models, the four-parameter problem and infarct-center localization.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ecgrom/bidomain.hpp"
#include "ecgrom/inverse.hpp"
#include "ecgrom/pod.hpp"

namespace ecgrom {

/// Identification coordinates use tau_in / kTauInScale; see the README for the
/// reasoning behind the factor.
inline constexpr double kTauInScale = 20.0;

/// theta = (tau_in, C_m, A_m, tau_close^RV) in identification coordinates.
inline MembraneParams membrane_from_params4(const Theta& theta, MembraneParams base = {}) {
    if (theta.size() != 4) throw ConfigError("params4: four parameters expected");
    base.tau_in = kTauInScale * theta[0];
    base.C_m = theta[1];
    base.A_m = theta[2];
    base.validate();
    return base;
}

inline ParamField field_from_params4(const Mesh& mesh, const Theta& theta, const MembraneParams& base = {},
                                     RegionTauClose tc = {}) {
    tc.rv = theta.at(3);
    return make_param_field(mesh, membrane_from_params4(theta, base), tc);
}

inline SearchBox params4_box() { return {{0.5, 5e-4, 100.0, 50.0}, {1.5, 2e-3, 300.0, 150.0}, {}}; }

/// Shared, immutable context for repeated forward evaluations.
struct ForwardContext {
    const Mesh* mesh = nullptr;
    HeartMatrices matrices;
    const EcgOperator* ecg = nullptr;
    StimulusProtocol stimulus;
    RunOptions run;  // snapshots are not kept by evaluators

    ForwardContext(const Mesh& m, const ConductivityField& cond, const EcgOperator& e, StimulusProtocol s, RunOptions o)
        : mesh(&m), matrices(HeartMatrices::assemble(m, cond)), ecg(&e), stimulus(std::move(s)), run(std::move(o)) {
        run.keep_snapshots = false;
    }

    EcgTrace full_ecg(const ParamField& field, SolverOptions solver = {SolverBackend::direct}) const {
        const Tissue tissue(*mesh, field, matrices);
        FullOrderModel model(tissue, run.dt, solver);
        return integrate(model, tissue, stimulus, ecg, run).ecg;
    }

    EcgTrace rom_ecg(const ParamField& field, const PodBasis& basis, const RomProjection& proj) const {
        const Tissue tissue(*mesh, field, matrices);
        RomModel rom(tissue, basis, proj, run.dt);
        return integrate(rom, tissue, stimulus, ecg, run).ecg;
    }
};

/// A basis with its parameter-independent projections.
struct PreparedBasis {
    PodBasis basis;
    RomProjection projection;

    static PreparedBasis make(PodBasis b, const HeartMatrices& h) {
        RomProjection p = RomProjection::build(h, b);
        return {std::move(b), std::move(p)};
    }
};

/// Four-parameter identification with a single basis (M1) or a dictionary
/// searched by nearest tag (M2).
inline GaResult identify_params4(const ForwardContext& ctx, const EcgTrace& reference,
                                 const std::vector<const PreparedBasis*>& dictionary, const GaConfig& cfg,
                                 const std::vector<Theta>& initial = {}, const MembraneParams& base = {},
                                 const RegionTauClose& tc = {}) {
    if (dictionary.empty()) throw ConfigError("identify: no basis given");
    const SearchBox box = params4_box();
    std::vector<Theta> tags;
    for (auto* b : dictionary) tags.push_back(b->basis.theta);
    CostFunction f = [&](const Theta& th) {
        const auto* b = dictionary.size() == 1 ? dictionary.front() : dictionary[select_basis_index(tags, th, box.widths())];
        return cost_j(ctx.rom_ecg(field_from_params4(*ctx.mesh, th, base, tc), b->basis, b->projection), reference);
    };
    return ga_minimize(f, box, cfg, initial);
}

/// Infarct-center search restricted to the left ventricle.
inline GaResult identify_infarct(const ForwardContext& ctx, const EcgTrace& reference, const LvMask& mask,
                                 const PreparedBasis& basis, const ParamField& healthy, const GaConfig& cfg,
                                 double radius, double divisor = 10.0, const std::vector<Theta>& initial = {}) {
    const SearchBox box = mask.search_box();
    CostFunction f = [&](const Theta& th) {
        const InfarctSpec spec{{th[0], th[1]}, radius, divisor};
        return cost_j(ctx.rom_ecg(apply_infarct(healthy, spec, *ctx.mesh), basis.basis, basis.projection), reference);
    };
    return ga_minimize(f, box, cfg, initial);
}

} // namespace ecgrom
