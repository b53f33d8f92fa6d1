#pragma once

// Derived quantities: APD/DI by threshold crossings, restitution curves,
// space-time relative errors, ECG comparison metrics and ST offsets.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecgrom/bidomain.hpp"
#include "ecgrom/errors.hpp"
#include "ecgrom/torso_ecg.hpp"

namespace ecgrom {

struct RestitutionPoint {
    int beat = 0;
    double apd = 0.0;  // ms
    double di = 0.0;   // ms, preceding diastolic interval
};

struct Crossings {
    std::vector<double> up;
    std::vector<double> down;
};

/// Linearly interpolated threshold crossings of a uniformly sampled trace.
inline Crossings threshold_crossings(const std::vector<double>& v, double dt, double threshold, double t0 = 0.0) {
    Crossings c;
    for (std::size_t k = 1; k < v.size(); ++k) {
        const double a = v[k - 1] - threshold, b = v[k] - threshold;
        const double tc = t0 + dt * (static_cast<double>(k - 1) + a / (a - b));
        if (a <= 0.0 && b > 0.0) c.up.push_back(tc);
        if (a > 0.0 && b <= 0.0) c.down.push_back(tc);
    }
    return c;
}

/// Action potentials as (up, down) crossing pairs; a trailing pulse that has
/// not returned below threshold is dropped, and so is a leading down crossing.
inline std::vector<std::pair<double, double>> action_potentials(const std::vector<double>& v, double dt,
                                                                double threshold, double t0 = 0.0) {
    const Crossings c = threshold_crossings(v, dt, threshold, t0);
    std::vector<std::pair<double, double>> aps;
    std::size_t j = 0;
    for (double up : c.up) {
        while (j < c.down.size() && c.down[j] <= up) ++j;
        if (j == c.down.size()) break;
        aps.emplace_back(up, c.down[j]);
        ++j;
    }
    return aps;
}

/// APD of every complete action potential with a preceding diastolic interval.
/// The first action potential has no DI and is not reported.
inline std::vector<RestitutionPoint> detect_apd_di(const std::vector<double>& v, double dt, double threshold,
                                                   double t0 = 0.0) {
    if (!(dt > 0.0)) throw ConfigError("detect_apd_di: dt must be positive");
    const auto aps = action_potentials(v, dt, threshold, t0);
    std::vector<RestitutionPoint> pts;
    for (std::size_t i = 1; i < aps.size(); ++i)
        pts.push_back({static_cast<int>(i), aps[i].second - aps[i].first, aps[i].first - aps[i - 1].second});
    return pts;
}

/// APD of the first complete action potential, if any.
inline std::optional<double> first_apd(const std::vector<double>& v, double dt, double threshold) {
    const auto aps = action_potentials(v, dt, threshold);
    if (aps.empty()) return std::nullopt;
    return aps.front().second - aps.front().first;
}

/// Points sorted by DI; equal DIs keep their input order.
inline std::vector<RestitutionPoint> restitution_curve(std::vector<RestitutionPoint> pts) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.di < b.di; });
    return pts;
}

/// True when APD does not decrease with DI by more than `tol` (ms).
inline bool restitution_monotone(const std::vector<RestitutionPoint>& pts, double tol = 1.0) {
    const auto c = restitution_curve(pts);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : c) {
        if (p.apd < best - tol) return false;
        best = std::max(best, p.apd);
    }
    return true;
}

/// ||a - b|| / ||a|| over equally sized flattened fields.
inline double spacetime_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("spacetime_relative_error: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
    }
    if (den == 0.0) throw ConfigError("spacetime_relative_error: reference field is zero");
    return std::sqrt(num / den);
}

/// Space-time relative error of the stacked (V_m, u_e) snapshots of two runs.
inline double spacetime_relative_error(const Trajectory& ref, const Trajectory& other) {
    if (ref.snapshots.size() != other.snapshots.size()) throw ConfigError("spacetime_relative_error: snapshot count mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ref.snapshots.size(); ++k) {
        const auto& a = ref.snapshots[k];
        const auto& b = other.snapshots[k];
        if (a.V.size() != b.V.size() || a.u_e.size() != b.u_e.size())
            throw ConfigError("spacetime_relative_error: state size mismatch");
        num += (a.V - b.V).squaredNorm() + (a.u_e - b.u_e).squaredNorm();
        den += a.V.squaredNorm() + a.u_e.squaredNorm();
    }
    if (den == 0.0) throw ConfigError("spacetime_relative_error: reference field is zero");
    return std::sqrt(num / den);
}

inline double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ConfigError("correlation: length mismatch");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
    return sab / std::sqrt(saa * sbb);
}

struct LeadMetrics {
    double l2_mismatch = 0.0;  // sqrt(dt sum (a - b)^2), mV ms^1/2
    double relative_l2 = 0.0;
    double correlation = 0.0;
    double st_offset = 0.0;
};

struct EcgMetrics {
    std::map<std::string, LeadMetrics> leads;
    double st_window_begin = 0.0;
    double st_window_end = 0.0;
};

inline void check_matching(const EcgTrace& a, const EcgTrace& b) {
    if (a.num_samples() != b.num_samples() || a.lead_names != b.lead_names)
        throw ConfigError("ECG traces differ in length or lead set");
    if (std::abs(a.dt - b.dt) > 1e-12) throw ConfigError("ECG traces differ in time step");
}

/// Mean of each lead over [t0, t1] minus the baseline mean over the same window.
inline std::map<std::string, double> st_offset(const EcgTrace& ecg, double t0, double t1, const EcgTrace& baseline) {
    check_matching(ecg, baseline);
    if (!(t1 > t0)) throw ConfigError("ST window must have t1 > t0");
    const std::size_t n = ecg.num_samples();
    if (n == 0 || t0 < ecg.time(0) - 1e-9 || t1 > ecg.time(n - 1) + 1e-9) throw ConfigError("ST window out of range");
    std::map<std::string, double> out;
    for (std::size_t j = 0; j < ecg.num_leads(); ++j) {
        double s = 0.0, sb = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = ecg.time(k);
            if (t < t0 - 1e-9 || t > t1 + 1e-9) continue;
            s += ecg.at(k, j);
            sb += baseline.at(k, j);
            ++cnt;
        }
        out[ecg.lead_names[j]] = cnt ? (s - sb) / static_cast<double>(cnt) : 0.0;
    }
    return out;
}

/// Time of the last sample where |dI/dt| exceeds `slope_threshold` (mV/ms),
/// searched up to `search_end`.
inline double qrs_end(const EcgTrace& ecg, double slope_threshold, double search_end, const std::string& lead = "I") {
    const auto v = ecg.lead(lead);
    double last = ecg.time(0);
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (ecg.time(k) > search_end) break;
        if (std::abs(v[k] - v[k - 1]) / ecg.dt > slope_threshold) last = ecg.time(k);
    }
    return last;
}

struct StWindowOptions {
    double slope_threshold = 0.05;  // mV/ms
    double search_end = 300.0;      // ms
    double begin_offset = 20.0;
    double end_offset = 80.0;
};

inline std::pair<double, double> st_window(const EcgTrace& baseline, const StWindowOptions& opt = {}) {
    const double q = qrs_end(baseline, opt.slope_threshold, opt.search_end);
    const double tmax = baseline.time(baseline.num_samples() - 1);
    return {std::min(q + opt.begin_offset, tmax), std::min(q + opt.end_offset, tmax)};
}

inline EcgMetrics compare_ecg(const EcgTrace& ref, const EcgTrace& other, std::pair<double, double> window) {
    check_matching(ref, other);
    EcgMetrics m;
    m.st_window_begin = window.first;
    m.st_window_end = window.second;
    const auto st = st_offset(other, window.first, window.second, ref);
    for (const auto& name : ref.lead_names) {
        const auto a = ref.lead(name), b = other.lead(name);
        double d = 0.0, r = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            d += (a[k] - b[k]) * (a[k] - b[k]);
            r += a[k] * a[k];
        }
        LeadMetrics lm;
        lm.l2_mismatch = std::sqrt(ref.dt * d);
        lm.relative_l2 = r > 0.0 ? std::sqrt(d / r) : 0.0;
        lm.correlation = pearson_correlation(a, b);
        lm.st_offset = st.at(name);
        m.leads[name] = lm;
    }
    return m;
}

} // namespace ecgrom
