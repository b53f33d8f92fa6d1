#pragma once

// Torso Laplace problem with Dirichlet data u_e on the heart boundary and an
// insulated body surface, the boundary-to-electrode transfer matrix, and the
// ECG lead definitions.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ecgrom/errors.hpp"
#include "ecgrom/fem.hpp"
#include "ecgrom/mesh.hpp"

namespace ecgrom {

/// Harmonic lifting of heart-boundary data into the torso, factorized once.
class TorsoProblem {
public:
    TorsoProblem(const Mesh& mesh, const VectorXd& sigma_t) : mesh_(&mesh) {
        const auto& torso = mesh.torso_nodes();
        if (sigma_t.size() != static_cast<Eigen::Index>(mesh.torso_elements().size()))
            throw ConfigError("torso: one conductivity per torso element required");
        if ((sigma_t.array() <= 0).any()) throw ConfigError("torso: conductivities must be positive");

        std::vector<char> on_boundary(mesh.num_nodes(), 0);
        for (auto g : mesh.heart_boundary_nodes()) on_boundary[static_cast<std::size_t>(g)] = 1;

        // Torso numbering: interior unknowns first, then heart-boundary nodes.
        index_.assign(mesh.num_nodes(), -1);
        for (auto g : torso)
            if (!on_boundary[g]) {
                index_[g] = static_cast<std::int32_t>(interior_.size());
                interior_.push_back(g);
            }
        for (auto g : mesh.heart_boundary_nodes()) {
            index_[g] = static_cast<std::int32_t>(interior_.size() + boundary_.size());
            boundary_.push_back(g);
        }
        const auto ni = static_cast<Eigen::Index>(interior_.size());
        const auto nb = static_cast<Eigen::Index>(boundary_.size());
        if (nb == 0) throw ConfigError("torso: mesh has no heart boundary nodes");

        const SparseSym k = assemble_stiffness_on(mesh, mesh.torso_elements(), index_, ni + nb, sigma_t);
        kii_ = k.matrix().topLeftCorner(ni, ni);
        kib_ = k.matrix().topRightCorner(ni, nb);
        ldlt_.compute(kii_);
        if (ldlt_.info() != Eigen::Success) throw NumericalError("torso: factorization of the interior stiffness failed");
    }

    const std::vector<std::int32_t>& interior_nodes() const noexcept { return interior_; }
    const std::vector<std::int32_t>& boundary_nodes() const noexcept { return boundary_; }

    /// Torso potential at every global node (NaN outside the torso) for the
    /// given values on `boundary_nodes()`.
    VectorXd solve(const VectorXd& boundary_values) const {
        if (boundary_values.size() != static_cast<Eigen::Index>(boundary_.size()))
            throw ConfigError("torso: boundary data size mismatch");
        const VectorXd ui = ldlt_.solve(-(kib_ * boundary_values));
        if (ldlt_.info() != Eigen::Success) throw NumericalError("torso: direct solve failed");
        VectorXd full = VectorXd::Constant(static_cast<Eigen::Index>(mesh_->num_nodes()), std::nan(""));
        for (std::size_t i = 0; i < interior_.size(); ++i) full[interior_[i]] = ui[static_cast<Eigen::Index>(i)];
        for (std::size_t i = 0; i < boundary_.size(); ++i) full[boundary_[i]] = boundary_values[static_cast<Eigen::Index>(i)];
        return full;
    }

    /// Row of the transfer matrix for torso node g: -(K_II^{-1} e_g)^T K_IB.
    VectorXd transfer_row(std::int32_t g) const {
        const auto idx = index_.at(static_cast<std::size_t>(g));
        if (idx < 0) throw ConfigError("electrode node " + std::to_string(g) + " is not a torso node");
        const auto ni = static_cast<Eigen::Index>(interior_.size());
        const auto nb = static_cast<Eigen::Index>(boundary_.size());
        if (idx >= ni) {
            VectorXd row = VectorXd::Zero(nb);
            row[idx - ni] = 1.0;
            return row;
        }
        VectorXd e = VectorXd::Zero(ni);
        e[idx] = 1.0;
        const VectorXd z = ldlt_.solve(e);
        return -(kib_.transpose() * z);
    }

private:
    const Mesh* mesh_;
    std::vector<std::int32_t> index_;
    std::vector<std::int32_t> interior_;
    std::vector<std::int32_t> boundary_;
    SpMat kii_;
    SpMat kib_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

/// Dense map from heart-boundary u_e values to electrode potentials.
struct TransferMatrix {
    MatrixXd matrix;                            // electrodes x boundary nodes
    std::vector<std::string> electrode_names;
    std::vector<std::int32_t> electrode_nodes;  // global ids
    std::vector<std::int32_t> boundary_nodes;   // global ids, column order
    std::vector<std::int32_t> boundary_heart_local;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }

    /// Gathers the boundary entries of a heart-local u_e vector.
    VectorXd boundary_values(const VectorXd& ue_heart) const {
        VectorXd b(static_cast<Eigen::Index>(boundary_heart_local.size()));
        for (std::size_t i = 0; i < boundary_heart_local.size(); ++i)
            b[static_cast<Eigen::Index>(i)] = ue_heart[boundary_heart_local[i]];
        return b;
    }

    Eigen::Index electrode_index(const std::string& name) const {
        auto it = std::find(electrode_names.begin(), electrode_names.end(), name);
        if (it == electrode_names.end()) throw ConfigError("transfer matrix has no electrode '" + name + "'");
        return static_cast<Eigen::Index>(it - electrode_names.begin());
    }
};

inline TransferMatrix build_transfer_matrix(const Mesh& mesh, const VectorXd& sigma_t,
                                            const std::vector<std::string>& electrodes) {
    TorsoProblem torso(mesh, sigma_t);
    TransferMatrix tm;
    tm.boundary_nodes = torso.boundary_nodes();
    for (auto g : tm.boundary_nodes) tm.boundary_heart_local.push_back(mesh.heart_local(g));
    tm.matrix.resize(static_cast<Eigen::Index>(electrodes.size()), static_cast<Eigen::Index>(tm.boundary_nodes.size()));
    for (std::size_t e = 0; e < electrodes.size(); ++e) {
        const auto g = mesh.electrode(electrodes[e]);
        tm.electrode_names.push_back(electrodes[e]);
        tm.electrode_nodes.push_back(g);
        tm.matrix.row(static_cast<Eigen::Index>(e)) = torso.transfer_row(g).transpose();
    }
    return tm;
}

/// Transfer matrix for every electrode defined on the mesh, in name order.
inline TransferMatrix build_transfer_matrix(const Mesh& mesh, const VectorXd& sigma_t) {
    std::vector<std::string> names;
    for (const auto& [name, g] : mesh.electrodes()) names.push_back(name);
    return build_transfer_matrix(mesh, sigma_t, names);
}

inline VectorXd electrode_potentials(const TransferMatrix& tm, const VectorXd& ue_boundary) {
    if (ue_boundary.size() != tm.cols())
        throw ConfigError("electrode_potentials: expected " + std::to_string(tm.cols()) + " boundary values, got " +
                          std::to_string(ue_boundary.size()));
    return tm.matrix * ue_boundary;
}

// Leads ---------------------------------------------------------------------

inline const std::vector<std::string>& standard_lead_names() {
    static const std::vector<std::string> names{"I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3"};
    return names;
}

/// Forms lead voltages from an electrode-potential vector. Limb electrodes R,
/// L, F are required; a precordial lead is formed for each of V1..V3 present.
/// Every lead is an explicit difference so that I - II + III cancels to rounding.
struct LeadOperator {
    std::vector<std::string> names;
    Eigen::Index r = -1, l = -1, f = -1;
    std::vector<Eigen::Index> precordial;

    static LeadOperator from_electrodes(const std::vector<std::string>& electrodes) {
        auto idx = [&](const std::string& n) -> Eigen::Index {
            auto it = std::find(electrodes.begin(), electrodes.end(), n);
            return it == electrodes.end() ? -1 : static_cast<Eigen::Index>(it - electrodes.begin());
        };
        LeadOperator op;
        op.r = idx("R");
        op.l = idx("L");
        op.f = idx("F");
        if (op.r < 0 || op.l < 0 || op.f < 0) throw ConfigError("leads: electrodes R, L and F are required");
        op.names = {"I", "II", "III", "aVR", "aVL", "aVF"};
        for (const char* v : {"V1", "V2", "V3"}) {
            const auto i = idx(v);
            if (i >= 0) {
                op.names.push_back(v);
                op.precordial.push_back(i);
            }
        }
        return op;
    }

    VectorXd apply(const VectorXd& phi) const {
        VectorXd out(static_cast<Eigen::Index>(names.size()));
        const double pr = phi[r], pl = phi[l], pf = phi[f];
        out[0] = pl - pr;
        out[1] = pf - pr;
        out[2] = pf - pl;
        out[3] = pr - 0.5 * (pl + pf);
        out[4] = pl - 0.5 * (pr + pf);
        out[5] = pf - 0.5 * (pr + pl);
        const double wct = (pr + pl + pf) / 3.0;
        for (std::size_t k = 0; k < precordial.size(); ++k) out[static_cast<Eigen::Index>(6 + k)] = phi[precordial[k]] - wct;
        return out;
    }
};

/// Lead voltages from electrode potentials keyed by name.
inline std::map<std::string, double> compute_leads(const std::map<std::string, double>& phi) {
    std::vector<std::string> names;
    VectorXd values(static_cast<Eigen::Index>(phi.size()));
    for (const auto& [n, v] : phi) {
        values[static_cast<Eigen::Index>(names.size())] = v;
        names.push_back(n);
    }
    const LeadOperator op = LeadOperator::from_electrodes(names);
    const VectorXd leads = op.apply(values);
    std::map<std::string, double> out;
    for (std::size_t k = 0; k < op.names.size(); ++k) out[op.names[k]] = leads[static_cast<Eigen::Index>(k)];
    return out;
}

/// Heart u_e -> electrode potentials -> leads, as used inside time loops.
struct EcgOperator {
    TransferMatrix transfer;
    LeadOperator leads;

    explicit EcgOperator(TransferMatrix tm) : transfer(std::move(tm)), leads(LeadOperator::from_electrodes(transfer.electrode_names)) {}

    const std::vector<std::string>& lead_names() const { return leads.names; }

    VectorXd electrodes_from_heart(const VectorXd& ue_heart) const {
        return transfer.matrix * transfer.boundary_values(ue_heart);
    }
    VectorXd leads_from_heart(const VectorXd& ue_heart) const { return leads.apply(electrodes_from_heart(ue_heart)); }
};

/// Lead voltages sampled at t0 + k dt, one row per sample.
struct EcgTrace {
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<std::string> lead_names;
    std::vector<double> data;  // row-major samples x leads

    std::size_t num_leads() const { return lead_names.size(); }
    std::size_t num_samples() const { return lead_names.empty() ? 0 : data.size() / lead_names.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    double at(std::size_t sample, std::size_t lead) const { return data[sample * num_leads() + lead]; }

    std::size_t lead_index(const std::string& name) const {
        auto it = std::find(lead_names.begin(), lead_names.end(), name);
        if (it == lead_names.end()) throw ConfigError("ECG trace has no lead '" + name + "'");
        return static_cast<std::size_t>(it - lead_names.begin());
    }

    std::vector<double> lead(const std::string& name) const {
        const auto j = lead_index(name);
        std::vector<double> out(num_samples());
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = at(k, j);
        return out;
    }

    void append(const VectorXd& row) {
        if (static_cast<std::size_t>(row.size()) != num_leads()) throw ConfigError("ECG row has the wrong lead count");
        if (!row.allFinite()) throw NumericalError("non-finite ECG value");
        data.insert(data.end(), row.data(), row.data() + row.size());
    }
};

inline void write_ecg_csv(std::ostream& os, const EcgTrace& ecg) {
    os << 't';
    for (const auto& n : ecg.lead_names) os << ',' << n;
    os << '\n';
    for (std::size_t k = 0; k < ecg.num_samples(); ++k) {
        os << std::fixed << std::setprecision(6) << ecg.time(k);
        os << std::defaultfloat << std::setprecision(17);
        for (std::size_t j = 0; j < ecg.num_leads(); ++j) os << ',' << ecg.at(k, j);
        os << '\n';
    }
}

inline void write_ecg_csv(const std::string& path, const EcgTrace& ecg) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    write_ecg_csv(os, ecg);
}

inline EcgTrace read_ecg_csv(std::istream& is) {
    EcgTrace ecg;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("ECG CSV: empty input");
    {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        if (cell != "t") throw ConfigError("ECG CSV: first column must be 't'");
        while (std::getline(ss, cell, ',')) ecg.lead_names.push_back(cell);
    }
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        times.push_back(std::stod(cell));
        std::size_t n = 0;
        while (std::getline(ss, cell, ',')) {
            ecg.data.push_back(std::stod(cell));
            ++n;
        }
        if (n != ecg.lead_names.size()) throw ConfigError("ECG CSV: row with wrong column count");
    }
    if (!times.empty()) ecg.t0 = times.front();
    if (times.size() > 1) ecg.dt = times[1] - times[0];
    return ecg;
}

inline EcgTrace read_ecg_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open ECG file " + path);
    return read_ecg_csv(is);
}

} // namespace ecgrom
