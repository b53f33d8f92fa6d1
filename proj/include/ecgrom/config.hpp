#pragma once

// JSON run configuration (schema version 1) and run manifests.
// Unknown keys and out-of-range values are rejected with a JSON-pointer path.

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ecgrom/bidomain.hpp"
#include "ecgrom/errors.hpp"
#include "ecgrom/fem.hpp"
#include "ecgrom/ionic.hpp"
#include "ecgrom/io.hpp"
#include "ecgrom/mesh.hpp"

namespace ecgrom {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kArtifactVersion = "1.0.0";

struct StimulusConfig {
    double amplitude = 0.05;  // mA cm^-2
    double duration = 2.0;    // ms
    std::vector<double> onsets{0.0};
    std::vector<StimulusSite> sites;  // empty: default sites
};

struct RunConfig {
    GeometryConfig geometry;
    std::map<std::string, Point2> electrodes;  // empty: default layout
    MembraneParams membrane;
    RegionTauClose tau_close;
    ConductivityDefaults conductivity;
    StimulusConfig stimulus;
    double T = 400.0;
    double dt = 0.5;
    int snapshot_stride = 4;
    std::string rom_basis;
    int rom_modes = 0;  // 0: all modes of the basis
    std::optional<InfarctSpec> infarct;
    SolverOptions solver{SolverBackend::direct};
    std::string output_dir = "out";
    std::uint64_t seed = 1;
};

namespace detail {

/// Walks a JSON object, recording which keys were read.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    double number(const std::string& k, double def, double lo, double hi) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError(where(k) + ": expected a number");
        const double x = v.get<double>();
        if (!(x >= lo && x <= hi))
            throw ConfigError(where(k) + ": value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        return x;
    }

    /// Strictly positive number bounded above.
    double positive(const std::string& k, double def, double hi) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError(where(k) + ": expected a number");
        const double x = v.get<double>();
        if (!(x > 0.0)) throw ConfigError(where(k) + ": must be positive");
        if (!(x <= hi)) throw ConfigError(where(k) + ": value " + std::to_string(x) + " above " + std::to_string(hi));
        return x;
    }

    std::int64_t integer(const std::string& k, std::int64_t def, std::int64_t lo, std::int64_t hi) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number_integer()) throw ConfigError(where(k) + ": expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < lo || x > hi) throw ConfigError(where(k) + ": value " + std::to_string(x) + " out of range");
        return x;
    }

    bool boolean(const std::string& k, bool def) {
        if (!mark(k)) return def;
        if (!j_.at(k).is_boolean()) throw ConfigError(where(k) + ": expected a boolean");
        return j_.at(k).get<bool>();
    }

    std::string string(const std::string& k, const std::string& def) {
        if (!mark(k)) return def;
        if (!j_.at(k).is_string()) throw ConfigError(where(k) + ": expected a string");
        return j_.at(k).get<std::string>();
    }

    Point2 point(const std::string& k, Point2 def) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ConfigError(where(k) + ": expected [x, y]");
        return {v[0].get<double>(), v[1].get<double>()};
    }

    std::optional<ObjectReader> object(const std::string& k) {
        if (!mark(k) || j_.at(k).is_null()) return std::nullopt;
        return ObjectReader(j_.at(k), path_ + "/" + k);
    }

    const json* raw(const std::string& k) {
        if (!mark(k)) return nullptr;
        return &j_.at(k);
    }

    std::string where(const std::string& k) const { return k.empty() ? (path_.empty() ? "/" : path_) : path_ + "/" + k; }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
    }

private:
    bool mark(const std::string& k) {
        if (!j_.contains(k)) return false;
        seen_.insert(k);
        return true;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

inline RunConfig parse_run_config(const json& j) {
    RunConfig c;
    detail::ObjectReader root(j, "");
    const auto version = root.integer("version", kConfigVersion, 1, 1000);
    if (version != kConfigVersion) throw ConfigError("/version: unsupported schema version " + std::to_string(version));

    if (auto g = root.object("geometry")) {
        auto& G = c.geometry;
        G.torso_width = g->positive("torso_width", G.torso_width, 200.0);
        G.torso_height = g->positive("torso_height", G.torso_height, 200.0);
        G.lv_center = g->point("lv_center", G.lv_center);
        const Point2 lva = g->point("lv_axes", {G.lv_axis_x, G.lv_axis_y});
        G.lv_axis_x = lva.x;
        G.lv_axis_y = lva.y;
        G.lv_wall = g->number("lv_wall", G.lv_wall, 0.0, 100.0);
        G.rv_enabled = g->boolean("rv_enabled", G.rv_enabled);
        G.rv_offset = g->point("rv_offset", G.rv_offset);
        const Point2 rva = g->point("rv_axes", {G.rv_axis_x, G.rv_axis_y});
        G.rv_axis_x = rva.x;
        G.rv_axis_y = rva.y;
        G.rv_wall = g->number("rv_wall", G.rv_wall, 0.0, 100.0);
        G.h = g->positive("h", G.h, 10.0);
        G.min_quality = g->number("min_quality", G.min_quality, 0.0, 1.0);
        G.lungs_enabled = g->boolean("lungs_enabled", G.lungs_enabled);
        G.bone_enabled = g->boolean("bone_enabled", G.bone_enabled);
        g->finish();
    }
    if (auto e = root.object("electrodes")) {
        for (const char* name : {"R", "L", "F", "V1", "V2", "V3"})
            if (e->has(name)) c.electrodes[name] = e->point(name, {});
        e->finish();
    }
    if (auto m = root.object("membrane")) {
        auto& M = c.membrane;
        M.A_m = m->positive("A_m", M.A_m, 1e4);
        M.C_m = m->positive("C_m", M.C_m, 1.0);
        M.tau_in = m->positive("tau_in", M.tau_in, 1e4);
        M.tau_out = m->positive("tau_out", M.tau_out, 1e5);
        M.tau_open = m->positive("tau_open", M.tau_open, 1e5);
        M.V_gate = m->number("V_gate", M.V_gate, -200.0, 200.0);
        M.V_min = m->number("V_min", M.V_min, -200.0, 200.0);
        M.V_max = m->number("V_max", M.V_max, -200.0, 200.0);
        if (auto t = m->object("tau_close")) {
            c.tau_close.rv = t->positive("RV", c.tau_close.rv, 1e5);
            c.tau_close.endo = t->positive("LV_endo", c.tau_close.endo, 1e5);
            c.tau_close.mcell = t->positive("LV_mcell", c.tau_close.mcell, 1e5);
            c.tau_close.epi = t->positive("LV_epi", c.tau_close.epi, 1e5);
            t->finish();
        }
        m->finish();
        try {
            M.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("/membrane: ") + e.what());
        }
    }
    if (auto s = root.object("conductivity")) {
        auto& K = c.conductivity;
        K.sigma_i = s->positive("sigma_i", K.sigma_i, 1.0);
        K.sigma_e = s->positive("sigma_e", K.sigma_e, 1.0);
        K.sigma_t = s->positive("sigma_t", K.sigma_t, 1.0);
        K.lung_factor = s->positive("lung_factor", K.lung_factor, 100.0);
        K.bone_factor = s->positive("bone_factor", K.bone_factor, 100.0);
        K.heart_scale = s->positive("heart_scale", K.heart_scale, 100.0);
        s->finish();
    }
    if (auto s = root.object("stimulus")) {
        auto& S = c.stimulus;
        S.amplitude = s->number("amplitude", S.amplitude, 0.0, 100.0);
        S.duration = s->positive("duration", S.duration, 1e4);
        if (const json* on = s->raw("onsets")) {
            if (!on->is_array()) throw ConfigError(s->where("onsets") + ": expected an array");
            S.onsets.clear();
            for (const auto& v : *on) {
                if (!v.is_number()) throw ConfigError(s->where("onsets") + ": expected numbers");
                S.onsets.push_back(v.get<double>());
            }
        }
        if (auto p = s->object("pacing")) {
            const auto beats = p->integer("beats", 12, 1, 1000);
            const double first = p->positive("first_period", 1090.0, 1e5);
            const double dec = p->number("decrement", 50.0, 0.0, 1e4);
            const double start = p->number("start", 0.0, 0.0, 1e6);
            p->finish();
            S.onsets = pacing_onsets(static_cast<int>(beats), first, dec, start);
        }
        if (const json* sites = s->raw("sites")) {
            if (!sites->is_array()) throw ConfigError(s->where("sites") + ": expected an array");
            for (std::size_t i = 0; i < sites->size(); ++i) {
                detail::ObjectReader r((*sites)[i], s->where("sites") + "/" + std::to_string(i));
                S.sites.push_back({r.point("center", {}), r.positive("radius", 0.5, 100.0)});
                r.finish();
            }
        }
        s->finish();
        for (std::size_t i = 1; i < S.onsets.size(); ++i)
            if (!(S.onsets[i] > S.onsets[i - 1])) throw ConfigError("/stimulus/onsets: must be strictly increasing");
    }
    if (auto t = root.object("time")) {
        if (t->has("T")) {
            const json& v = *t->raw("T");
            if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError("/time/T: T must be positive");
            c.T = v.get<double>();
        }
        c.dt = t->positive("dt", c.dt, 100.0);
        t->finish();
    }
    if (auto s = root.object("snapshots")) {
        c.snapshot_stride = static_cast<int>(s->integer("stride", c.snapshot_stride, 1, 1000000));
        s->finish();
    }
    if (auto r = root.object("rom")) {
        c.rom_basis = r->string("basis", c.rom_basis);
        c.rom_modes = static_cast<int>(r->integer("n_modes", c.rom_modes, 0, 1000000));
        r->finish();
    }
    if (auto i = root.object("infarct")) {
        InfarctSpec spec;
        spec.center = i->point("center", {});
        spec.radius = i->positive("radius", 0.15 * c.geometry.heart_outer_radius(), 100.0);
        spec.tau_out_divisor = i->number("tau_out_divisor", spec.tau_out_divisor, 1.0, 1e6);
        i->finish();
        c.infarct = spec;
    }
    if (auto s = root.object("solver")) {
        const std::string b = s->string("backend", "direct");
        if (b == "direct") c.solver.backend = SolverBackend::direct;
        else if (b == "pcg") c.solver.backend = SolverBackend::pcg;
        else throw ConfigError("/solver/backend: expected \"direct\" or \"pcg\"");
        c.solver.tol = s->positive("tol", c.solver.tol, 1e-2);
        c.solver.max_iterations = static_cast<int>(s->integer("max_iterations", 0, 0, 100000000));
        s->finish();
    }
    if (auto o = root.object("output")) {
        c.output_dir = o->string("dir", c.output_dir);
        o->finish();
    }
    c.seed = static_cast<std::uint64_t>(root.integer("seed", 1, 0, std::numeric_limits<std::int64_t>::max()));
    root.finish();
    try {
        c.geometry.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("/geometry: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    return parse_run_config(j);
}

inline json to_json(const RunConfig& c) {
    json sites = json::array();
    for (const auto& s : c.stimulus.sites) sites.push_back({{"center", {s.center.x, s.center.y}}, {"radius", s.radius}});
    json electrodes = json::object();
    for (const auto& [k, p] : c.electrodes) electrodes[k] = {p.x, p.y};
    const auto& G = c.geometry;
    const auto& M = c.membrane;
    json j{
        {"version", kConfigVersion},
        {"geometry",
         {{"torso_width", G.torso_width}, {"torso_height", G.torso_height}, {"lv_center", {G.lv_center.x, G.lv_center.y}},
          {"lv_axes", {G.lv_axis_x, G.lv_axis_y}}, {"lv_wall", G.lv_wall}, {"rv_enabled", G.rv_enabled},
          {"rv_offset", {G.rv_offset.x, G.rv_offset.y}}, {"rv_axes", {G.rv_axis_x, G.rv_axis_y}}, {"rv_wall", G.rv_wall},
          {"h", G.h}, {"min_quality", G.min_quality}, {"lungs_enabled", G.lungs_enabled}, {"bone_enabled", G.bone_enabled}}},
        {"membrane",
         {{"A_m", M.A_m}, {"C_m", M.C_m}, {"tau_in", M.tau_in}, {"tau_out", M.tau_out}, {"tau_open", M.tau_open},
          {"V_gate", M.V_gate}, {"V_min", M.V_min}, {"V_max", M.V_max},
          {"tau_close",
           {{"RV", c.tau_close.rv}, {"LV_endo", c.tau_close.endo}, {"LV_mcell", c.tau_close.mcell}, {"LV_epi", c.tau_close.epi}}}}},
        {"conductivity",
         {{"sigma_i", c.conductivity.sigma_i}, {"sigma_e", c.conductivity.sigma_e}, {"sigma_t", c.conductivity.sigma_t},
          {"lung_factor", c.conductivity.lung_factor}, {"bone_factor", c.conductivity.bone_factor},
          {"heart_scale", c.conductivity.heart_scale}}},
        {"stimulus",
         {{"amplitude", c.stimulus.amplitude}, {"duration", c.stimulus.duration}, {"onsets", c.stimulus.onsets}, {"sites", sites}}},
        {"time", {{"T", c.T}, {"dt", c.dt}}},
        {"snapshots", {{"stride", c.snapshot_stride}}},
        {"rom", {{"basis", c.rom_basis}, {"n_modes", c.rom_modes}}},
        {"solver",
         {{"backend", c.solver.backend == SolverBackend::direct ? "direct" : "pcg"}, {"tol", c.solver.tol},
          {"max_iterations", c.solver.max_iterations}}},
        {"output", {{"dir", c.output_dir}}},
        {"seed", c.seed},
    };
    if (!electrodes.empty()) j["electrodes"] = electrodes;
    if (c.infarct)
        j["infarct"] = {{"center", {c.infarct->center.x, c.infarct->center.y}}, {"radius", c.infarct->radius},
                        {"tau_out_divisor", c.infarct->tau_out_divisor}};
    return j;
}

// Manifests ------------------------------------------------------------------------

/// Git-style blob hash: SHA-1 of "blob <size>\0" followed by the content.
inline std::string content_hash(const std::string& bytes) {
    const std::string head = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw NumericalError("hash: cannot allocate digest context");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                    EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw NumericalError("hash: SHA-1 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

inline std::string file_hash(const std::string& path) { return content_hash(read_file(path)); }

class RunManifest {
public:
    explicit RunManifest(std::string command) : start_(std::chrono::steady_clock::now()) {
        j_ = {{"artifact", "ecgrom"}, {"version", kArtifactVersion}, {"command", std::move(command)},
              {"config", json::object()}, {"inputs", json::object()}, {"outputs", json::object()},
              {"timings", json::object()}};
    }

    void config(const json& c) { j_["config"] = c; }
    void input(const std::string& path) { j_["inputs"][path] = file_hash(path); }
    void output(const std::string& path) { j_["outputs"][path] = file_hash(path); }
    void set(const std::string& k, const json& v) { j_[k] = v; }

    /// Records the seconds elapsed since the previous phase mark.
    void phase(const std::string& name) {
        const auto now = std::chrono::steady_clock::now();
        j_["timings"][name] = std::chrono::duration<double>(now - start_).count();
        start_ = now;
    }

    const json& json_value() const { return j_; }

    /// Hash of everything except wall-clock timings.
    std::string stable_hash() const {
        json k = j_;
        k.erase("timings");
        return content_hash(k.dump());
    }

    void write(const std::string& path) const {
        json k = j_;
        k["stable_hash"] = stable_hash();
        write_file(path, k.dump(2) + "\n");
    }

private:
    json j_;
    std::chrono::steady_clock::time_point start_;
};

// Building model objects from a configuration -----------------------------------------

inline Mesh build_mesh(const RunConfig& c) { return build_idealized_geometry(c.geometry, c.electrodes); }

inline StimulusProtocol build_stimulus(const Mesh& mesh, const RunConfig& c) {
    StimulusProtocol s;
    const auto sites = c.stimulus.sites.empty() ? default_stimulus_sites(c.geometry) : c.stimulus.sites;
    s.support = stimulus_support(mesh, sites);
    if (s.support.empty()) throw ConfigError("/stimulus/sites: no heart node inside any stimulus disc");
    s.amplitude = c.stimulus.amplitude;
    s.duration = c.stimulus.duration;
    s.onsets = c.stimulus.onsets;
    s.validate();
    return s;
}

inline RunOptions build_run_options(const RunConfig& c) {
    RunOptions o;
    o.T = c.T;
    o.dt = c.dt;
    o.snapshot_stride = c.snapshot_stride;
    o.validate();
    return o;
}

} // namespace ecgrom
