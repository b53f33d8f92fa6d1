#pragma once

// P1 finite elements on triangles: mass and stiffness assembly, the constant
// bidomain block matrix, and a symmetric solver that enforces a zero-mean
// extracellular potential.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "ecgrom/errors.hpp"
#include "ecgrom/mesh.hpp"

namespace ecgrom {

using SpMat = Eigen::SparseMatrix<double>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Sparse matrix with symmetric values. The pattern is fixed at construction.
class SparseSym {
public:
    SparseSym() = default;
    explicit SparseSym(SpMat m) : mat_(std::move(m)) {
        if (mat_.rows() != mat_.cols()) throw ConfigError("SparseSym: matrix must be square");
        mat_.makeCompressed();
    }

    const SpMat& matrix() const noexcept { return mat_; }
    Eigen::Index dim() const noexcept { return mat_.rows(); }

    double max_abs() const {
        double m = 0.0;
        for (int k = 0; k < mat_.outerSize(); ++k)
            for (SpMat::InnerIterator it(mat_, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }

    /// max |A - A^T| over all entries.
    double max_asymmetry() const {
        const SpMat d = SpMat(mat_.transpose()) - mat_;
        double m = 0.0;
        for (int k = 0; k < d.outerSize(); ++k)
            for (SpMat::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }

    VectorXd operator*(const VectorXd& x) const { return mat_ * x; }

private:
    SpMat mat_;
};

// Local element matrices ---------------------------------------------------

struct P1Gradients {
    double area = 0.0;
    std::array<Point2, 3> grad{};
};

inline P1Gradients p1_gradients(Point2 p0, Point2 p1, Point2 p2) {
    P1Gradients g;
    g.area = signed_area(p0, p1, p2);
    if (!(g.area > 0.0)) throw NumericalError("degenerate or inverted element in assembly");
    const double inv = 1.0 / (2.0 * g.area);
    g.grad[0] = {(p1.y - p2.y) * inv, (p2.x - p1.x) * inv};
    g.grad[1] = {(p2.y - p0.y) * inv, (p0.x - p2.x) * inv};
    g.grad[2] = {(p0.y - p1.y) * inv, (p1.x - p0.x) * inv};
    return g;
}

using Local3 = std::array<std::array<double, 3>, 3>;

inline Local3 p1_mass_local(Point2 p0, Point2 p1, Point2 p2) {
    const double a = signed_area(p0, p1, p2);
    if (!(a > 0.0)) throw NumericalError("degenerate or inverted element in assembly");
    Local3 m{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m[i][j] = a / 12.0 * (i == j ? 2.0 : 1.0);
    return m;
}

inline Local3 p1_stiffness_local(Point2 p0, Point2 p1, Point2 p2, double sigma) {
    const auto g = p1_gradients(p0, p1, p2);
    Local3 k{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) k[i][j] = sigma * g.area * dot(g.grad[i], g.grad[j]);
    return k;
}

// Global assembly -----------------------------------------------------------

namespace detail {
template <class LocalFn>
SparseSym assemble_on(const Mesh& mesh, const std::vector<std::int32_t>& elements,
                      const std::vector<std::int32_t>& local_index, Eigen::Index n, LocalFn&& local) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(elements.size() * 9);
    const auto& nodes = mesh.nodes();
    for (std::size_t k = 0; k < elements.size(); ++k) {
        const auto& t = mesh.triangles()[static_cast<std::size_t>(elements[k])];
        const Local3 m = local(k, nodes[t[0]], nodes[t[1]], nodes[t[2]]);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trip.emplace_back(local_index[t[i]], local_index[t[j]], m[i][j]);
    }
    SpMat a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    return SparseSym(std::move(a));
}
} // namespace detail

/// Consistent P1 mass matrix over the heart (heart-local numbering).
inline SparseSym assemble_mass(const Mesh& mesh) {
    std::vector<std::int32_t> local(mesh.num_nodes());
    for (std::size_t g = 0; g < mesh.num_nodes(); ++g) local[g] = mesh.heart_local(static_cast<std::int32_t>(g));
    return detail::assemble_on(mesh, mesh.heart_elements(), local, static_cast<Eigen::Index>(mesh.num_heart_nodes()),
                               [](std::size_t, Point2 a, Point2 b, Point2 c) { return p1_mass_local(a, b, c); });
}

/// Stiffness matrix over the heart with one conductivity per heart element
/// (same order as `mesh.heart_elements()`).
inline SparseSym assemble_stiffness(const Mesh& mesh, const VectorXd& sigma) {
    if (sigma.size() != static_cast<Eigen::Index>(mesh.heart_elements().size()))
        throw ConfigError("assemble_stiffness: one conductivity per heart element required");
    if ((sigma.array() <= 0.0).any()) throw ConfigError("assemble_stiffness: conductivities must be positive");
    std::vector<std::int32_t> local(mesh.num_nodes());
    for (std::size_t g = 0; g < mesh.num_nodes(); ++g) local[g] = mesh.heart_local(static_cast<std::int32_t>(g));
    return detail::assemble_on(
        mesh, mesh.heart_elements(), local, static_cast<Eigen::Index>(mesh.num_heart_nodes()),
        [&](std::size_t k, Point2 a, Point2 b, Point2 c) { return p1_stiffness_local(a, b, c, sigma[static_cast<Eigen::Index>(k)]); });
}

/// Stiffness over an arbitrary element subset with a caller-provided numbering.
inline SparseSym assemble_stiffness_on(const Mesh& mesh, const std::vector<std::int32_t>& elements,
                                       const std::vector<std::int32_t>& local_index, Eigen::Index n,
                                       const VectorXd& sigma) {
    if (sigma.size() != static_cast<Eigen::Index>(elements.size()))
        throw ConfigError("assemble_stiffness_on: one conductivity per element required");
    return detail::assemble_on(mesh, elements, local_index, n, [&](std::size_t k, Point2 a, Point2 b, Point2 c) {
        return p1_stiffness_local(a, b, c, sigma[static_cast<Eigen::Index>(k)]);
    });
}

/// Row sums of the consistent mass matrix, i.e. the integral of each hat function.
inline VectorXd lumped_mass(const SparseSym& m) {
    return m.matrix() * VectorXd::Ones(m.dim());
}

/// Conductivities in S/cm: intra/extracellular per heart element, torso per torso element.
struct ConductivityField {
    VectorXd sigma_i;
    VectorXd sigma_e;
    VectorXd sigma_t;

    void validate(const Mesh& mesh) const {
        const auto nh = static_cast<Eigen::Index>(mesh.heart_elements().size());
        const auto nt = static_cast<Eigen::Index>(mesh.torso_elements().size());
        if (sigma_i.size() != nh || sigma_e.size() != nh) throw ConfigError("conductivity: heart field size mismatch");
        if (sigma_t.size() != nt) throw ConfigError("conductivity: torso field size mismatch");
        if ((sigma_i.array() <= 0).any() || (sigma_e.array() <= 0).any() || (sigma_t.array() <= 0).any())
            throw ConfigError("conductivity: all values must be positive");
    }
};

struct ConductivityDefaults {
    double sigma_i = 1.5e-3;
    double sigma_e = 3.0e-3;
    double sigma_t = 2.0e-3;
    double lung_factor = 0.5;
    double bone_factor = 0.05;
    double heart_scale = 1.0;  // multiplies sigma_i and sigma_e
};

inline ConductivityField make_conductivity(const Mesh& mesh, const ConductivityDefaults& d = {}) {
    ConductivityField f;
    const auto nh = static_cast<Eigen::Index>(mesh.heart_elements().size());
    f.sigma_i = VectorXd::Constant(nh, d.sigma_i * d.heart_scale);
    f.sigma_e = VectorXd::Constant(nh, d.sigma_e * d.heart_scale);
    f.sigma_t.resize(static_cast<Eigen::Index>(mesh.torso_elements().size()));
    for (std::size_t k = 0; k < mesh.torso_elements().size(); ++k) {
        const Region r = mesh.element_region()[static_cast<std::size_t>(mesh.torso_elements()[k])];
        double s = d.sigma_t;
        if (r == Region::torso_lung) s *= d.lung_factor;
        if (r == Region::torso_bone) s *= d.bone_factor;
        f.sigma_t[static_cast<Eigen::Index>(k)] = s;
    }
    f.validate(mesh);
    return f;
}

/// Heart matrices M, K1 = K(sigma_i), K2 = K(sigma_i + sigma_e).
struct HeartMatrices {
    SparseSym M;
    SparseSym K1;
    SparseSym K2;
    VectorXd lumped;

    static HeartMatrices assemble(const Mesh& mesh, const ConductivityField& c) {
        c.validate(mesh);
        HeartMatrices h;
        h.M = assemble_mass(mesh);
        h.K1 = assemble_stiffness(mesh, c.sigma_i);
        h.K2 = assemble_stiffness(mesh, c.sigma_i + c.sigma_e);
        h.lumped = lumped_mass(h.M);
        return h;
    }
};

/// 2N x 2N block matrix [c M + K1, K1; K1, K2] with c = bdf_coeff A_m C_m / dt.
/// bdf_coeff = 3/2 gives the BDF2 matrix; 1 gives the implicit Euler one.
inline SparseSym build_system_matrix(const SparseSym& M, const SparseSym& K1, const SparseSym& K2, double A_m,
                                     double C_m, double dt, double bdf_coeff = 1.5) {
    if (!(dt > 0.0)) throw ConfigError("build_system_matrix: dt must be positive");
    const auto n = M.dim();
    if (K1.dim() != n || K2.dim() != n) throw ConfigError("build_system_matrix: block dimensions differ");
    const double c = bdf_coeff * A_m * C_m / dt;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(M.matrix().nonZeros() + 4 * K1.matrix().nonZeros()));
    auto add = [&](const SpMat& a, double s, Eigen::Index ro, Eigen::Index co) {
        for (int k = 0; k < a.outerSize(); ++k)
            for (SpMat::InnerIterator it(a, k); it; ++it)
                trip.emplace_back(it.row() + ro, it.col() + co, s * it.value());
    };
    add(M.matrix(), c, 0, 0);
    add(K1.matrix(), 1.0, 0, 0);
    add(K1.matrix(), 1.0, 0, n);
    add(K1.matrix(), 1.0, n, 0);
    add(K2.matrix(), 1.0, n, n);
    SpMat a(2 * n, 2 * n);
    a.setFromTriplets(trip.begin(), trip.end());
    return SparseSym(std::move(a));
}

/// Writes "row col value" triplets (0-based) after a one-line header.
inline void write_coordinate_list(const std::string& path, const SparseSym& a) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    os << "% ecgrom coordinate list v1: rows cols nnz\n";
    os << a.dim() << ' ' << a.dim() << ' ' << a.matrix().nonZeros() << '\n';
    os << std::setprecision(17);
    for (int k = 0; k < a.matrix().outerSize(); ++k)
        for (SpMat::InnerIterator it(a.matrix(), k); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

// Constrained solver ---------------------------------------------------------

enum class SolverBackend { pcg, direct };

struct SolverOptions {
    SolverBackend backend = SolverBackend::pcg;
    double tol = 1e-8;
    int max_iterations = 0;  // 0 -> 10 * dimension
};

/// Solves A x = b for the bidomain block matrix. The u_e block is determined
/// up to a constant; the returned solution has zero lumped-mass mean there.
///
/// The pcg backend deflates the constant u_e direction from the right-hand side
/// and from every preconditioned residual. The direct backend pins the first
/// u_e unknown and shifts afterwards.
class ConstrainedSolver {
public:
    ConstrainedSolver(const SparseSym& a, VectorXd lumped, SolverOptions opt = {})
        : a_(a), lumped_(std::move(lumped)), opt_(opt) {
        n_ = a.dim() / 2;
        if (2 * n_ != a.dim() || lumped_.size() != n_) throw ConfigError("ConstrainedSolver: dimension mismatch");
        mass_total_ = lumped_.sum();
        if (opt_.backend == SolverBackend::pcg) {
            inv_diag_ = a.matrix().diagonal().cwiseInverse();
        } else {
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(static_cast<std::size_t>(a.matrix().nonZeros()));
            for (int k = 0; k < a.matrix().outerSize(); ++k)
                for (SpMat::InnerIterator it(a.matrix(), k); it; ++it)
                    if (it.row() != n_ && it.col() != n_) trip.emplace_back(it.row(), it.col(), it.value());
            trip.emplace_back(n_, n_, 1.0);
            SpMat pinned(a.dim(), a.dim());
            pinned.setFromTriplets(trip.begin(), trip.end());
            ldlt_.compute(pinned);
            if (ldlt_.info() != Eigen::Success) throw NumericalError("direct factorization of the system matrix failed");
        }
    }

    VectorXd solve(const VectorXd& rhs) { return solve(rhs, VectorXd()); }

    VectorXd solve(const VectorXd& rhs, const VectorXd& guess) {
        if (rhs.size() != 2 * n_) throw ConfigError("ConstrainedSolver: rhs dimension mismatch");
        VectorXd b = rhs;
        deflate(b);
        VectorXd x;
        if (opt_.backend == SolverBackend::direct) {
            b[n_] = 0.0;
            x = ldlt_.solve(b);
            last_iterations_ = 1;
        } else {
            x = pcg(b, guess);
        }
        if (!x.allFinite()) throw NumericalError("linear solve produced non-finite values");
        remove_mean(x);
        return x;
    }

    int last_iterations() const noexcept { return last_iterations_; }
    const SolverOptions& options() const noexcept { return opt_; }

    /// Lumped-mass weighted mean of the u_e block.
    double ue_mean(const VectorXd& x) const { return lumped_.dot(x.tail(n_)) / mass_total_; }

private:
    void deflate(VectorXd& v) const { v.tail(n_).array() -= v.tail(n_).mean(); }

    void remove_mean(VectorXd& x) const { x.tail(n_).array() -= ue_mean(x); }

    VectorXd pcg(const VectorXd& b, const VectorXd& guess) {
        const double bnorm = b.norm();
        VectorXd x = guess.size() == b.size() ? guess : VectorXd::Zero(b.size());
        if (bnorm == 0.0) {
            last_iterations_ = 0;
            return VectorXd::Zero(b.size());
        }
        deflate(x);
        VectorXd r = b - a_.matrix() * x;
        deflate(r);
        double res = r.norm();
        std::vector<double> history{res / bnorm};
        const int max_it = opt_.max_iterations > 0 ? opt_.max_iterations : static_cast<int>(10 * b.size());
        int it = 0;
        if (res > opt_.tol * bnorm) {
            VectorXd z = inv_diag_.cwiseProduct(r);
            deflate(z);
            VectorXd p = z;
            double rz = r.dot(z);
            VectorXd ap(b.size());
            for (it = 1; it <= max_it; ++it) {
                ap.noalias() = a_.matrix() * p;
                const double pap = p.dot(ap);
                if (!(pap > 0.0)) throw NumericalError("pcg breakdown: non-positive curvature", history);
                const double alpha = rz / pap;
                x += alpha * p;
                r -= alpha * ap;
                res = r.norm();
                history.push_back(res / bnorm);
                if (res <= opt_.tol * bnorm) break;
                z = inv_diag_.cwiseProduct(r);
                deflate(z);
                const double rz_new = r.dot(z);
                p = z + (rz_new / rz) * p;
                rz = rz_new;
            }
            if (it > max_it)
                throw NumericalError("pcg did not converge in " + std::to_string(max_it) + " iterations (relative residual " +
                                         std::to_string(res / bnorm) + ")",
                                     history);
        }
        last_iterations_ = it;
        return x;
    }

    SparseSym a_;
    VectorXd lumped_;
    SolverOptions opt_;
    Eigen::Index n_ = 0;
    double mass_total_ = 0.0;
    VectorXd inv_diag_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    int last_iterations_ = 0;
};

} // namespace ecgrom
