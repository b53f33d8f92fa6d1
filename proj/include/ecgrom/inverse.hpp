#pragma once

// ECG-mismatch cost, a genetic minimizer with one-elitism and an exact
// evaluation budget backed by a radial-basis surrogate, and the helpers used
// for membrane-parameter and infarct-center identification.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ecgrom/errors.hpp"
#include "ecgrom/fem.hpp"
#include "ecgrom/mesh.hpp"
#include "ecgrom/torso_ecg.hpp"

namespace ecgrom {

using Theta = std::vector<double>;

// Cost -----------------------------------------------------------------------

/// J = dt sum_i (dI_i^2 + dII_i^2 + dIII_i^2) over the Einthoven leads.
inline double cost_j(const EcgTrace& sim, const EcgTrace& ref) {
    if (sim.num_samples() != ref.num_samples()) throw ConfigError("cost_j: traces differ in length");
    if (std::abs(sim.dt - ref.dt) > 1e-12) throw ConfigError("cost_j: traces differ in time step");
    double j = 0.0;
    for (const char* lead : {"I", "II", "III"}) {
        const auto a = sim.lead_index(lead), b = ref.lead_index(lead);
        for (std::size_t k = 0; k < sim.num_samples(); ++k) {
            const double d = sim.at(k, a) - ref.at(k, b);
            j += d * d;
        }
    }
    return ref.dt * j;
}

inline double cost_j(const Theta& theta, const EcgTrace& ref, const std::function<EcgTrace(const Theta&)>& evaluator) {
    return cost_j(evaluator(theta), ref);
}

/// Reference point of the four-parameter problem (tau_in, C_m, A_m, tau_close^RV)
/// in identification coordinates.
inline const Theta& params4_reference() {
    static const Theta ref{0.8, 1e-3, 200.0, 120.0};
    return ref;
}

/// Mean relative error in percent against the four-parameter reference.
inline double mean_relative_error(const Theta& theta, const Theta& ref = params4_reference()) {
    if (theta.size() != 4 || ref.size() != 4) throw ConfigError("mean_relative_error: four parameters expected");
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += std::abs(theta[i] - ref[i]) / std::abs(ref[i]);
    return 100.0 * s / 4.0;
}

// Search space -----------------------------------------------------------------

struct SearchBox {
    Theta lower;
    Theta upper;
    /// Optional map onto the admissible set, applied after clamping.
    std::function<Theta(const Theta&)> projector;

    std::size_t dim() const { return lower.size(); }

    void validate() const {
        if (lower.empty() || lower.size() != upper.size()) throw ConfigError("search box: bounds must have equal, nonzero size");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(lower[i] < upper[i])) throw ConfigError("search box: lower < upper required in every coordinate");
    }

    Theta widths() const {
        Theta w(dim());
        for (std::size_t i = 0; i < dim(); ++i) w[i] = upper[i] - lower[i];
        return w;
    }

    Theta clamp(Theta t) const {
        for (std::size_t i = 0; i < dim(); ++i) t[i] = std::clamp(t[i], lower[i], upper[i]);
        return t;
    }

    Theta admit(const Theta& t) const {
        Theta c = clamp(t);
        return projector ? projector(c) : c;
    }

    bool contains(const Theta& t) const {
        for (std::size_t i = 0; i < dim(); ++i)
            if (t[i] < lower[i] || t[i] > upper[i]) return false;
        return true;
    }

    Theta normalize(const Theta& t) const {
        Theta z(dim());
        for (std::size_t i = 0; i < dim(); ++i) z[i] = (t[i] - lower[i]) / (upper[i] - lower[i]);
        return z;
    }
};

enum class EvalKind { none, exact, surrogate };

struct Individual {
    Theta theta;
    double cost = std::numeric_limits<double>::quiet_NaN();
    EvalKind kind = EvalKind::none;
};

struct GaConfig {
    int N_p = 40;
    int N_g = 10;
    int N_ex = 200;
    double selection_fraction = 0.5;
    double crossover_low = -0.25;
    double crossover_high = 1.25;
    double mutation_sigma0 = 0.1;      // fraction of each interval width
    double mutation_probability = 0.2;
    bool use_surrogate = true;
    std::uint64_t seed = 1;
    int workers = 1;

    void validate() const {
        if (N_p < 2) throw ConfigError("GA: N_p must be >= 2");
        if (N_g < 1) throw ConfigError("GA: N_g must be >= 1");
        if (N_ex < N_p) throw ConfigError("GA: N_ex=" + std::to_string(N_ex) + " is smaller than N_p=" + std::to_string(N_p));
        if (!(selection_fraction > 0.0 && selection_fraction <= 1.0)) throw ConfigError("GA: selection_fraction in (0, 1]");
        if (!(crossover_low < crossover_high)) throw ConfigError("GA: crossover range is empty");
        if (!(mutation_sigma0 >= 0.0)) throw ConfigError("GA: mutation_sigma0 must be >= 0");
        if (!(mutation_probability >= 0.0 && mutation_probability <= 1.0))
            throw ConfigError("GA: mutation_probability in [0, 1]");
        if (workers < 1) throw ConfigError("GA: workers must be >= 1");
    }
};

/// Exact evaluations allowed per generation: N_p for the first ceil(N_g/3)
/// generations, then weights L, L-1, ..., 1 over the remaining L generations,
/// rounded down with the remainder handed to the earliest ones. The total is
/// min(N_ex, N_p N_g).
inline std::vector<int> budget_schedule(const GaConfig& cfg) {
    cfg.validate();
    const int full = (cfg.N_g + 2) / 3;
    std::vector<int> s(static_cast<std::size_t>(cfg.N_g), 0);
    int left = std::min(cfg.N_ex, cfg.N_p * cfg.N_g);
    for (int g = 0; g < full && left > 0; ++g) {
        s[g] = std::min(cfg.N_p, left);
        left -= s[g];
    }
    const int L = cfg.N_g - full;
    if (L > 0 && left > 0) {
        const double wsum = 0.5 * L * (L + 1);
        int assigned = 0;
        for (int i = 0; i < L; ++i) {
            s[full + i] = std::min(cfg.N_p, static_cast<int>(std::floor(left * (L - i) / wsum)));
            assigned += s[full + i];
        }
        int rem = left - assigned;
        while (rem > 0) {
            bool moved = false;
            for (int i = 0; i < L && rem > 0; ++i)
                if (s[full + i] < cfg.N_p) {
                    ++s[full + i];
                    --rem;
                    moved = true;
                }
            if (!moved) break;
        }
    }
    return s;
}

inline int budget_schedule(const GaConfig& cfg, int generation) {
    if (generation < 0 || generation >= cfg.N_g) throw ConfigError("budget_schedule: generation out of range");
    return budget_schedule(cfg)[static_cast<std::size_t>(generation)];
}

// Evaluation database -----------------------------------------------------------

class EvalDatabase {
public:
    explicit EvalDatabase(double tol = 1e-12) : tol_(tol) {}

    std::optional<double> find(const Theta& t) const {
        for (const auto& [th, c] : entries_)
            if (same(th, t)) return c;
        return std::nullopt;
    }

    /// Adds an entry unless an equal one exists; returns the stored cost.
    double add(const Theta& t, double cost) {
        if (auto c = find(t)) return *c;
        entries_.emplace_back(t, cost);
        return cost;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<std::pair<Theta, double>>& entries() const noexcept { return entries_; }

    std::pair<Theta, double> best() const {
        if (entries_.empty()) throw ConfigError("database is empty");
        auto it = std::min_element(entries_.begin(), entries_.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
        return *it;
    }

private:
    bool same(const Theta& a, const Theta& b) const {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::abs(a[i] - b[i]) > tol_ * std::max(1.0, std::abs(a[i]))) return false;
        return true;
    }

    double tol_;
    std::vector<std::pair<Theta, double>> entries_;
};

// Surrogate ----------------------------------------------------------------------

/// Thin-plate spline interpolant with a linear tail on unit-box coordinates.
/// With fewer than n+1 points the tail is constant.
class RbfSurrogate {
public:
    RbfSurrogate() = default;

    static RbfSurrogate fit(const std::vector<std::pair<Theta, double>>& data, const SearchBox& box) {
        if (data.empty()) throw ConfigError("surrogate: no data");
        RbfSurrogate s;
        s.box_ = box;
        const auto m = static_cast<Eigen::Index>(data.size());
        const auto d = static_cast<Eigen::Index>(box.dim());
        s.centers_.resize(m, d);
        VectorXd y(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Theta z = box.normalize(data[static_cast<std::size_t>(i)].first);
            for (Eigen::Index j = 0; j < d; ++j) s.centers_(i, j) = z[static_cast<std::size_t>(j)];
            y[i] = data[static_cast<std::size_t>(i)].second;
        }
        s.linear_ = m >= d + 1;
        const Eigen::Index q = s.linear_ ? d + 1 : 1;
        MatrixXd a = MatrixXd::Zero(m + q, m + q);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) a(i, j) = kernel((s.centers_.row(i) - s.centers_.row(j)).norm());
        for (Eigen::Index i = 0; i < m; ++i) {
            a(i, m) = a(m, i) = 1.0;
            if (s.linear_)
                for (Eigen::Index j = 0; j < d; ++j) a(i, m + 1 + j) = a(m + 1 + j, i) = s.centers_(i, j);
        }
        VectorXd rhs = VectorXd::Zero(m + q);
        rhs.head(m) = y;

        Eigen::FullPivLU<MatrixXd> lu(a);
        VectorXd coef = lu.solve(rhs);
        const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
        if (!coef.allFinite() || (a * coef - rhs).cwiseAbs().maxCoeff() > 1e-10 * scale) {
            s.regularized_ = true;
            const double eps = 1e-10 * std::max(1.0, a.topLeftCorner(m, m).cwiseAbs().maxCoeff());
            a.topLeftCorner(m, m) += eps * MatrixXd::Identity(m, m);
            coef = a.colPivHouseholderQr().solve(rhs);
        }
        s.weights_ = coef.head(m);
        s.tail_ = coef.tail(q);
        return s;
    }

    double operator()(const Theta& t) const {
        const Theta z = box_.normalize(t);
        Eigen::Map<const VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
        double v = tail_[0];
        if (linear_) v += tail_.tail(tail_.size() - 1).dot(zv);
        for (Eigen::Index i = 0; i < centers_.rows(); ++i)
            v += weights_[i] * kernel((centers_.row(i).transpose() - zv).norm());
        return v;
    }

    bool regularized() const noexcept { return regularized_; }
    bool linear_tail() const noexcept { return linear_; }

    static double kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

private:
    SearchBox box_;
    MatrixXd centers_;
    VectorXd weights_;
    VectorXd tail_;
    bool linear_ = false;
    bool regularized_ = false;
};

// Genetic algorithm --------------------------------------------------------------

struct GenerationRecord {
    int generation = 0;
    double best_cost = 0.0;   // best exact cost seen so far
    Theta best_theta;
    int exact_evaluations = 0;
    int surrogate_evaluations = 0;
    int reused = 0;           // costs taken from the database
    bool surrogate_regularized = false;
};

struct GaResult {
    Theta best_theta;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<GenerationRecord> history;
    int exact_evaluations = 0;
    bool completed = true;
    std::string error;
};

using CostFunction = std::function<double(const Theta&)>;

namespace detail {
inline void evaluate_batch(const CostFunction& f, const std::vector<Theta>& thetas, std::vector<double>& out,
                           int workers) {
    out.assign(thetas.size(), 0.0);
    if (workers <= 1 || thetas.size() < 2) {
        for (std::size_t i = 0; i < thetas.size(); ++i) out[i] = f(thetas[i]);
        return;
    }
    std::vector<std::exception_ptr> errs(thetas.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < thetas.size(); i = next++) {
            try {
                out[i] = f(thetas[i]);
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto nw = std::min<std::size_t>(static_cast<std::size_t>(workers), thetas.size());
    for (std::size_t w = 0; w < nw; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}
} // namespace detail

/// Minimizes `cost` over `box`. Individuals in `initial` seed the first
/// population; the rest is drawn uniformly. Results are collated by index so
/// the outcome does not depend on `cfg.workers`.
inline GaResult ga_minimize(const CostFunction& cost, const SearchBox& box, const GaConfig& cfg,
                            const std::vector<Theta>& initial = {}) {
    box.validate();
    cfg.validate();
    const auto schedule = budget_schedule(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t np = static_cast<std::size_t>(cfg.N_p), dim = box.dim();
    const Theta width = box.widths();

    std::vector<Individual> pop(np);
    for (std::size_t i = 0; i < np; ++i) {
        Theta t(dim);
        if (i < initial.size()) {
            t = initial[i];
            if (t.size() != dim) throw ConfigError("GA: initial individual has the wrong dimension");
        } else {
            for (std::size_t j = 0; j < dim; ++j) t[j] = box.lower[j] + unit(rng) * width[j];
        }
        pop[i].theta = box.admit(t);
    }

    EvalDatabase db;
    GaResult res;
    int carry = 0;
    bool have_best = false;
    Individual elite;

    for (int g = 0; g < cfg.N_g; ++g) {
        GenerationRecord rec;
        rec.generation = g;
        std::vector<std::size_t> pending;
        for (std::size_t i = 0; i < np; ++i) {
            if (auto c = db.find(pop[i].theta)) {
                pop[i].cost = *c;
                pop[i].kind = EvalKind::exact;
                ++rec.reused;
            } else {
                pending.push_back(i);
            }
        }
        const int budget = schedule[static_cast<std::size_t>(g)] + carry;
        std::vector<std::size_t> exact_idx = pending;
        if (cfg.use_surrogate && static_cast<int>(pending.size()) > budget && db.size() > 0) {
            const RbfSurrogate s = RbfSurrogate::fit(db.entries(), box);
            rec.surrogate_regularized = s.regularized();
            for (auto i : pending) {
                pop[i].cost = s(pop[i].theta);
                pop[i].kind = EvalKind::surrogate;
            }
            std::stable_sort(exact_idx.begin(), exact_idx.end(),
                             [&](std::size_t a, std::size_t b) { return pop[a].cost < pop[b].cost; });
            exact_idx.resize(static_cast<std::size_t>(std::max(budget, 0)));
            rec.surrogate_evaluations = static_cast<int>(pending.size() - exact_idx.size());
        }
        // Duplicates inside the batch are evaluated once.
        std::vector<Theta> batch;
        std::vector<std::size_t> owner(exact_idx.size());
        for (std::size_t k = 0; k < exact_idx.size(); ++k) {
            const Theta& t = pop[exact_idx[k]].theta;
            std::size_t j = 0;
            while (j < batch.size() && batch[j] != t) ++j;
            if (j == batch.size()) batch.push_back(t);
            owner[k] = j;
        }
        std::vector<double> values;
        try {
            detail::evaluate_batch(cost, batch, values, cfg.workers);
        } catch (const std::exception& e) {
            res.completed = false;
            res.error = "generation " + std::to_string(g) + ": " + e.what();
            break;
        }
        for (std::size_t k = 0; k < exact_idx.size(); ++k) {
            auto& ind = pop[exact_idx[k]];
            ind.cost = db.add(ind.theta, values[owner[k]]);
            ind.kind = EvalKind::exact;
        }
        rec.exact_evaluations = static_cast<int>(batch.size());
        res.exact_evaluations += rec.exact_evaluations;
        carry = std::max(0, budget - rec.exact_evaluations);

        for (const auto& ind : pop)
            if (ind.kind == EvalKind::exact && (!have_best || ind.cost < elite.cost)) {
                elite = ind;
                have_best = true;
            }
        rec.best_cost = elite.cost;
        rec.best_theta = elite.theta;
        res.history.push_back(rec);
        if (g + 1 == cfg.N_g) break;

        // Truncation selection with the elite always first.
        std::vector<std::size_t> order(np);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pop[a].cost < pop[b].cost; });
        const auto keep = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(cfg.selection_fraction * static_cast<double>(np))));
        std::vector<Individual> next;
        next.push_back(elite);
        for (std::size_t k = 0; k < np && next.size() < keep; ++k)
            if (pop[order[k]].theta != elite.theta) next.push_back(pop[order[k]]);
        const std::size_t parents = next.size();

        std::uniform_int_distribution<std::size_t> pick(0, parents - 1);
        std::uniform_real_distribution<double> lam(cfg.crossover_low, cfg.crossover_high);
        while (next.size() < np) {
            const Theta a = next[pick(rng)].theta;
            const Theta b = next[pick(rng)].theta;
            for (int child = 0; child < 2 && next.size() < np; ++child) {
                const double l = lam(rng);
                Theta t(dim);
                for (std::size_t j = 0; j < dim; ++j) t[j] = l * a[j] + (1.0 - l) * b[j];
                next.push_back({box.admit(t), std::numeric_limits<double>::quiet_NaN(), EvalKind::none});
            }
        }
        const double shrink = 1.0 - static_cast<double>(g + 1) / cfg.N_g;
        for (std::size_t i = 1; i < np; ++i) {
            if (unit(rng) >= cfg.mutation_probability) continue;
            Theta t = next[i].theta;
            for (std::size_t j = 0; j < dim; ++j) t[j] += cfg.mutation_sigma0 * width[j] * shrink * gauss(rng);
            next[i] = {box.admit(t), std::numeric_limits<double>::quiet_NaN(), EvalKind::none};
        }
        pop = std::move(next);
    }
    if (have_best) {
        res.best_theta = elite.theta;
        res.best_cost = elite.cost;
    }
    return res;
}

// Infarct search helpers --------------------------------------------------------

/// Closest point to p on triangle (a, b, c).
inline Point2 closest_point_on_triangle(Point2 p, Point2 a, Point2 b, Point2 c) {
    const Point2 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;
    const Point2 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
    const Point2 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Projection onto the union of left-ventricle elements.
class LvMask {
public:
    explicit LvMask(const Mesh& mesh) : mesh_(&mesh) {
        for (std::size_t e = 0; e < mesh.num_elements(); ++e)
            if (is_left_ventricle(mesh.element_region()[e])) elems_.push_back(e);
        if (elems_.empty()) throw ConfigError("mesh has no left-ventricle elements");
    }

    Point2 project(Point2 p) const {
        Point2 best = p;
        double best_d = std::numeric_limits<double>::infinity();
        const auto& nodes = mesh_->nodes();
        for (auto e : elems_) {
            const auto& t = mesh_->triangles()[e];
            const Point2 q = closest_point_on_triangle(p, nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            const double d = distance(p, q);
            if (d < best_d) {
                best_d = d;
                best = q;
                if (d == 0.0) break;
            }
        }
        return best;
    }

    bool contains(Point2 p, double tol = 1e-12) const { return distance(project(p), p) <= tol; }

    /// Bounding box of the LV elements as a search box with this projector.
    SearchBox search_box() const {
        double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
        for (auto e : elems_)
            for (auto n : mesh_->triangles()[e]) {
                const Point2 q = mesh_->nodes()[n];
                x0 = std::min(x0, q.x);
                y0 = std::min(y0, q.y);
                x1 = std::max(x1, q.x);
                y1 = std::max(y1, q.y);
            }
        SearchBox box{{x0, y0}, {x1, y1}, {}};
        box.projector = [this](const Theta& t) {
            const Point2 q = project({t[0], t[1]});
            return Theta{q.x, q.y};
        };
        return box;
    }

private:
    const Mesh* mesh_;
    std::vector<std::size_t> elems_;
};

} // namespace ecgrom
