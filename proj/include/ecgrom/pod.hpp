#pragma once

// Proper orthogonal decomposition of bidomain snapshots and the Galerkin
// reduced model. States are stacked as x = (V_m, u_e) on heart nodes; the
// reduced model evolves the fluctuation around the rest state (V_min, 0).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ecgrom/bidomain.hpp"
#include "ecgrom/errors.hpp"
#include "ecgrom/fem.hpp"
#include "ecgrom/torso_ecg.hpp"

namespace ecgrom {

struct SnapshotMatrix {
    Eigen::Index n = 0;   // heart nodes; rows = 2n
    MatrixXd data;        // one (V_m, u_e) column per snapshot
    std::vector<double> times;
    std::vector<std::string> labels;

    Eigen::Index rows() const { return 2 * n; }
    Eigen::Index cols() const { return data.cols(); }

    void append(const HeartState& s, const std::string& label) {
        if (n == 0) n = s.V.size();
        if (s.V.size() != n || s.u_e.size() != n) throw ConfigError("snapshots: state size does not match the matrix");
        if (!s.V.allFinite() || !s.u_e.allFinite()) throw NumericalError("snapshots: non-finite state");
        data.conservativeResize(2 * n, data.cols() + 1);
        data.col(data.cols() - 1) << s.V, s.u_e;
        times.push_back(s.time);
        labels.push_back(label);
    }
};

/// Which of a trajectory's stored snapshots enter the matrix.
struct SnapshotPlan {
    enum class Kind { stride, count, time_split };
    Kind kind = Kind::stride;
    int stride = 1;              // stride: every stride-th stored snapshot
    std::size_t count = 0;       // count / time_split: exact number taken
    double split_time = 100.0;   // time_split: boundary (ms)
    double split_fraction = 0.5; // time_split: share taken with t <= split_time

    static SnapshotPlan every(int s) { return {Kind::stride, s}; }
    static SnapshotPlan take(std::size_t c) { return {Kind::count, 1, c}; }
    static SnapshotPlan split(std::size_t c, double t, double frac = 0.5) { return {Kind::time_split, 1, c, t, frac}; }
};

namespace detail {
// `count` indices spread evenly over [lo, hi).
inline std::vector<std::size_t> spread(std::size_t lo, std::size_t hi, std::size_t count) {
    const std::size_t avail = hi - lo;
    if (count > avail)
        throw ConfigError("snapshot plan asks for " + std::to_string(count) + " snapshots but only " +
                          std::to_string(avail) + " are available");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < count; ++i)
        idx.push_back(lo + static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) * avail / count)));
    return idx;
}
} // namespace detail

inline std::vector<std::size_t> plan_indices(const std::vector<HeartState>& snaps, const SnapshotPlan& plan) {
    const std::size_t m = snaps.size();
    switch (plan.kind) {
    case SnapshotPlan::Kind::stride: {
        if (plan.stride < 1) throw ConfigError("snapshot plan: stride must be >= 1");
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < m; i += static_cast<std::size_t>(plan.stride)) idx.push_back(i);
        return idx;
    }
    case SnapshotPlan::Kind::count: return detail::spread(0, m, plan.count);
    case SnapshotPlan::Kind::time_split: {
        std::size_t split = 0;
        while (split < m && snaps[split].time <= plan.split_time + 1e-9) ++split;
        const auto early = static_cast<std::size_t>(std::llround(plan.split_fraction * static_cast<double>(plan.count)));
        auto idx = detail::spread(0, split, early);
        const auto late = detail::spread(split, m, plan.count - early);
        idx.insert(idx.end(), late.begin(), late.end());
        return idx;
    }
    }
    return {};
}

inline void collect_into(SnapshotMatrix& b, const Trajectory& tr, const std::string& label, const SnapshotPlan& plan) {
    for (auto i : plan_indices(tr.snapshots, plan)) b.append(tr.snapshots[i], label);
}

/// Columns ordered by trajectory, then time.
inline SnapshotMatrix collect(const std::vector<const Trajectory*>& trajectories, const std::vector<std::string>& labels,
                              const SnapshotPlan& plan) {
    if (labels.size() != trajectories.size()) throw ConfigError("collect: one label per trajectory required");
    SnapshotMatrix b;
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
        const auto& tr = *trajectories[k];
        if (!tr.snapshots.empty() && b.n != 0 && tr.snapshots.front().V.size() != b.n)
            throw ConfigError("collect: trajectory " + labels[k] + " was computed on a different mesh");
        collect_into(b, tr, labels[k], plan);
    }
    return b;
}

// Basis ----------------------------------------------------------------------

struct PodBasis {
    MatrixXd modes;                 // 2n x n_modes, orthonormal columns
    VectorXd singular_values;       // all nonzero ones, descending
    double v_rest = -80.0;          // V_m offset removed before decomposition
    double ue_scale = 1.0;          // weight of the u_e block in the decomposition
    std::vector<double> theta;      // parameter tag (dictionary bases)
    std::string manifest = "{}";    // provenance, JSON text

    Eigen::Index n_modes() const { return modes.cols(); }
    Eigen::Index n() const { return modes.rows() / 2; }

    /// Truncated copy keeping the first m modes.
    PodBasis truncated(Eigen::Index m) const {
        if (m < 1 || m > n_modes()) throw ConfigError("basis truncation out of range");
        PodBasis b = *this;
        b.modes = modes.leftCols(m);
        return b;
    }
};

struct BasisOptions {
    double v_rest = -80.0;
    double ue_scale = 1.0;
};

/// Makes the entry of largest magnitude in every column positive.
inline void fix_signs(MatrixXd& q) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        Eigen::Index imax = 0;
        q.col(j).cwiseAbs().maxCoeff(&imax);
        if (q(imax, j) < 0.0) q.col(j) = -q.col(j);
    }
}

/// Method of snapshots: eigen-decomposition of the (weighted) Gram matrix,
/// then a QR pass to restore orthonormality lost to rounding.
inline PodBasis compute_basis(const SnapshotMatrix& b, Eigen::Index n_modes, const BasisOptions& opt = {}) {
    const Eigen::Index p = b.cols(), dim = b.rows();
    if (p == 0) throw ConfigError("compute_basis: empty snapshot matrix");
    if (n_modes < 1 || n_modes > std::min(dim, p))
        throw ConfigError("n_modes=" + std::to_string(n_modes) + " exceeds the snapshot count " + std::to_string(p) +
                          " (or state dimension " + std::to_string(dim) + ")");
    MatrixXd c = b.data;
    c.topRows(b.n).array() -= opt.v_rest;
    const MatrixXd g = c.topRows(b.n).transpose() * c.topRows(b.n) +
                       (opt.ue_scale * opt.ue_scale) * (c.bottomRows(b.n).transpose() * c.bottomRows(b.n));
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g);
    if (eig.info() != Eigen::Success) throw NumericalError("compute_basis: Gram eigen-decomposition failed");
    const VectorXd lambda = eig.eigenvalues().reverse();
    const MatrixXd v = eig.eigenvectors().rowwise().reverse();

    PodBasis basis;
    basis.v_rest = opt.v_rest;
    basis.ue_scale = opt.ue_scale;
    const double lmax = std::max(lambda[0], 0.0);
    Eigen::Index rank = 0;
    while (rank < p && lambda[rank] > lmax * 1e-20 && lambda[rank] > 0.0) ++rank;
    basis.singular_values = lambda.head(rank).cwiseSqrt();
    if (n_modes > rank)
        throw ConfigError("n_modes=" + std::to_string(n_modes) + " exceeds the numerical rank " + std::to_string(rank) +
                          " of the snapshot matrix");
    MatrixXd psi = c * v.leftCols(n_modes);
    for (Eigen::Index j = 0; j < n_modes; ++j) psi.col(j) /= basis.singular_values[j];
    fix_signs(psi);
    Eigen::HouseholderQR<MatrixXd> qr(psi);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, n_modes);
    // Keep each QR column aligned with the eigenvector it came from.
    for (Eigen::Index j = 0; j < n_modes; ++j)
        if (q.col(j).dot(psi.col(j)) < 0.0) q.col(j) = -q.col(j);
    fix_signs(q);
    basis.modes = std::move(q);
    return basis;
}

/// ||B - Psi Psi^T B||_F over the centered snapshots.
inline double reconstruction_error(const SnapshotMatrix& b, const PodBasis& basis) {
    MatrixXd c = b.data;
    c.topRows(b.n).array() -= basis.v_rest;
    return (c - basis.modes * (basis.modes.transpose() * c)).norm();
}

/// Max |Psi^T Psi - I|.
inline double orthonormality_defect(const MatrixXd& psi) {
    return (psi.transpose() * psi - MatrixXd::Identity(psi.cols(), psi.cols())).cwiseAbs().maxCoeff();
}

// Reduced operators ---------------------------------------------------------

struct ReducedOperator {
    MatrixXd matrix;
    Eigen::LLT<MatrixXd> llt;

    static ReducedOperator factorize(MatrixXd m) {
        m = 0.5 * (m + m.transpose());
        ReducedOperator r;
        r.matrix = std::move(m);
        r.llt.compute(r.matrix);
        if (r.llt.info() != Eigen::Success) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(r.matrix, Eigen::EigenvaluesOnly);
            const auto& ev = es.eigenvalues();
            throw NumericalError("reduced operator is not positive definite (eigenvalues in [" +
                                 std::to_string(ev.minCoeff()) + ", " + std::to_string(ev.maxCoeff()) + "])");
        }
        return r;
    }

    VectorXd solve(const VectorXd& b) const { return llt.solve(b); }
};

/// Psi^T A Psi, symmetrized and factorized.
inline ReducedOperator reduce_operator(const SparseSym& a, const MatrixXd& psi) {
    if (psi.rows() != a.dim()) throw ConfigError("reduce_operator: basis and matrix dimensions differ");
    const MatrixXd ap = a.matrix() * psi;
    return ReducedOperator::factorize(psi.transpose() * ap);
}

/// Parameter-independent projections of the heart matrices on a basis:
/// Mr = Psi_V^T M Psi_V and Kr = Psi^T [K1 K1; K1 K2] Psi.
struct RomProjection {
    MatrixXd Mr;
    MatrixXd Kr;
    VectorXd ue_mean_row;  // lumped^T Psi_u / |Omega_H|

    static RomProjection build(const HeartMatrices& h, const PodBasis& basis) {
        const auto n = h.M.dim();
        if (basis.n() != n) throw ConfigError("ROM: basis does not match the heart mesh");
        const auto psi_v = basis.modes.topRows(n);
        const auto psi_u = basis.modes.bottomRows(n);
        RomProjection p;
        p.Mr = psi_v.transpose() * (h.M.matrix() * psi_v);
        const MatrixXd k1v = h.K1.matrix() * psi_v;
        const MatrixXd k1u = h.K1.matrix() * psi_u;
        const MatrixXd k2u = h.K2.matrix() * psi_u;
        p.Kr = psi_v.transpose() * k1v + psi_v.transpose() * k1u + psi_u.transpose() * k1v + psi_u.transpose() * k2u;
        p.ue_mean_row = (h.lumped.transpose() * psi_u).transpose() / h.lumped.sum();
        return p;
    }
};

// Reduced model --------------------------------------------------------------

/// Galerkin ROM with the full-order scheme: w and the ionic load live on the
/// full mesh, the linear solve is the factorized reduced operator.
class RomModel {
public:
    RomModel(const Tissue& tissue, const PodBasis& basis, const RomProjection& proj, double dt)
        : tissue_(&tissue), basis_(&basis), dt_(dt) {
        if (!(dt > 0.0)) throw ConfigError("ROM: dt must be positive");
        const double c = tissue.A_m() * tissue.C_m() / dt;
        mr_c_ = c * proj.Mr;
        op_ = ReducedOperator::factorize(1.5 * mr_c_ + proj.Kr);
        op_euler_ = ReducedOperator::factorize(mr_c_ + proj.Kr);
        ue_mean_row_ = proj.ue_mean_row;
        ++assemblies_;
        reset();
    }

    const PodBasis& basis() const noexcept { return *basis_; }
    const ReducedOperator& reduced_operator() const noexcept { return op_; }
    int system_assemblies() const noexcept { return assemblies_; }
    double time() const noexcept { return time_; }
    const VectorXd& alpha() const noexcept { return a_cur_; }
    const VectorXd& voltage() const noexcept { return v_cur_; }
    double ue_mean() const { return ue_mean_row_.dot(a_cur_); }

    void reset() {
        time_ = 0.0;
        a_cur_ = VectorXd::Zero(basis_->n_modes());
        lift_voltage(a_cur_, v_cur_);
        w_cur_ = VectorXd::Constant(tissue_->n(), tissue_->params().base().rest_gate());
        have_prev_ = false;
    }

    /// Starts from a full state projected on the basis.
    void reset(const HeartState& s) {
        time_ = s.time;
        a_cur_ = project(s);
        lift_voltage(a_cur_, v_cur_);
        w_cur_ = s.w;
        have_prev_ = false;
    }

    VectorXd project(const HeartState& s) const {
        const auto n = tissue_->n();
        const auto& psi = basis_->modes;
        return psi.topRows(n).transpose() * (s.V.array() - basis_->v_rest).matrix() + psi.bottomRows(n).transpose() * s.u_e;
    }

    HeartState state() const { return lift(a_cur_, time_, w_cur_); }

    HeartState lift(const VectorXd& a, double t, const VectorXd& w) const {
        const auto n = tissue_->n();
        HeartState s;
        s.time = t;
        lift_voltage(a, s.V);
        s.u_e = basis_->modes.bottomRows(n) * a;
        s.w = w;
        return s;
    }

    /// Electrode potentials through a cached product T Psi_u restricted to the
    /// heart boundary; rebuilt when a different operator is passed.
    VectorXd electrodes(const EcgOperator& ecg) const {
        if (ecg_cache_owner_ != &ecg) {
            const auto& bl = ecg.transfer.boundary_heart_local;
            const auto n = tissue_->n();
            MatrixXd psi_b(static_cast<Eigen::Index>(bl.size()), basis_->n_modes());
            for (std::size_t i = 0; i < bl.size(); ++i)
                psi_b.row(static_cast<Eigen::Index>(i)) = basis_->modes.row(n + bl[i]);
            ecg_cache_ = ecg.transfer.matrix * psi_b;
            ecg_cache_owner_ = &ecg;
        }
        return ecg_cache_ * a_cur_;
    }

    void advance(const VectorXd* iapp) {
        const Tissue& t = *tissue_;
        const auto n = t.n();
        const auto psi_v = basis_->modes.topRows(n);
        VectorXd w_next, load, rhs;
        if (!have_prev_) {
            t.gate_euler(w_cur_, v_cur_, dt_, w_next);
            t.ionic_load(v_cur_, w_next, iapp, load);
            rhs = mr_c_ * a_cur_ + psi_v.transpose() * load;
            a_prev_ = a_cur_;
            a_cur_ = op_euler_.solve(rhs);
        } else {
            v_tilde_ = 2.0 * v_cur_ - v_prev_;
            t.gate_bdf2(w_cur_, w_prev_, v_tilde_, dt_, w_next);
            t.ionic_load(v_tilde_, w_next, iapp, load);
            rhs = mr_c_ * (2.0 * a_cur_ - 0.5 * a_prev_) + psi_v.transpose() * load;
            a_prev_ = a_cur_;
            a_cur_ = op_.solve(rhs);
        }
        if (!a_cur_.allFinite())
            throw NumericalError("ROM step to t=" + std::to_string(time_ + dt_) + " ms produced non-finite values");
        w_prev_ = std::move(w_cur_);
        w_cur_ = std::move(w_next);
        std::swap(v_prev_, v_cur_);
        lift_voltage(a_cur_, v_cur_);
        time_ += dt_;
        have_prev_ = true;
    }

private:
    void lift_voltage(const VectorXd& a, VectorXd& v) const {
        const auto n = tissue_->n();
        v.noalias() = basis_->modes.topRows(n) * a;
        v.array() += basis_->v_rest;
    }

    const Tissue* tissue_;
    const PodBasis* basis_;
    double dt_;
    MatrixXd mr_c_;
    ReducedOperator op_;
    ReducedOperator op_euler_;
    VectorXd ue_mean_row_;
    int assemblies_ = 0;
    double time_ = 0.0;
    VectorXd a_cur_, a_prev_;
    VectorXd v_cur_, v_prev_, v_tilde_;
    VectorXd w_cur_, w_prev_;
    bool have_prev_ = false;
    mutable const EcgOperator* ecg_cache_owner_ = nullptr;
    mutable MatrixXd ecg_cache_;
};

/// Reduced run; snapshots hold lifted states.
inline Trajectory run_rom(const Tissue& tissue, const PodBasis& basis, const RomProjection& proj,
                          const StimulusProtocol& stim, const RunOptions& opt, const EcgOperator* ecg = nullptr) {
    RomModel rom(tissue, basis, proj, opt.dt);
    return integrate(rom, tissue, stim, ecg, opt);
}

// Basis dictionaries -----------------------------------------------------------

/// Index of the dictionary entry closest to theta in the distance scaled by
/// `widths` per coordinate; ties go to the lower index.
inline std::size_t select_basis_index(const std::vector<std::vector<double>>& tags, const std::vector<double>& theta,
                                      const std::vector<double>& widths) {
    if (tags.empty()) throw ConfigError("select_basis: empty dictionary");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < tags.size(); ++k) {
        if (tags[k].size() != theta.size() || widths.size() != theta.size())
            throw ConfigError("select_basis: parameter dimension mismatch");
        double d = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double z = (tags[k][i] - theta[i]) / widths[i];
            d += z * z;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

inline const PodBasis& select_basis(const std::vector<PodBasis>& dictionary, const std::vector<double>& theta,
                                    const std::vector<double>& widths) {
    std::vector<std::vector<double>> tags;
    for (const auto& b : dictionary) tags.push_back(b.theta);
    return dictionary[select_basis_index(tags, theta, widths)];
}

} // namespace ecgrom
