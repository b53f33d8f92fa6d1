#pragma once

// Binary container used for meshes, snapshot sets and POD bases:
//
//   bytes 0..7   magic "ECGROMC1"
//   bytes 8..15  header length L, uint64 little-endian
//   next L bytes JSON header {"format", "version", "kind", "meta", "blocks": [...]}
//   data         little-endian blocks; each block entry gives name, dtype
//                ("f64" | "i32"), shape and byte offset from the data start.

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ecgrom/bidomain.hpp"
#include "ecgrom/errors.hpp"
#include "ecgrom/mesh.hpp"
#include "ecgrom/pod.hpp"

namespace ecgrom {

using nlohmann::json;

inline constexpr char kContainerMagic[8] = {'E', 'C', 'G', 'R', 'O', 'M', 'C', '1'};
inline constexpr int kContainerVersion = 1;

struct Block {
    std::string dtype;  // f64 | i32
    std::vector<std::int64_t> shape;
    std::vector<double> f64;
    std::vector<std::int32_t> i32;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto s : shape) n *= static_cast<std::size_t>(s);
        return n;
    }
};

struct Container {
    std::string kind;
    json meta = json::object();
    std::map<std::string, Block> blocks;

    void put(const std::string& name, std::vector<double> v, std::vector<std::int64_t> shape) {
        Block b{"f64", std::move(shape), std::move(v), {}};
        if (b.count() != b.f64.size()) throw ConfigError("container: block " + name + " shape mismatch");
        blocks[name] = std::move(b);
    }
    void put(const std::string& name, std::vector<std::int32_t> v, std::vector<std::int64_t> shape) {
        Block b{"i32", std::move(shape), {}, std::move(v)};
        if (b.count() != b.i32.size()) throw ConfigError("container: block " + name + " shape mismatch");
        blocks[name] = std::move(b);
    }
    const Block& get(const std::string& name, const std::string& dtype) const {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw ConfigError("container: missing block '" + name + "'");
        if (it->second.dtype != dtype) throw ConfigError("container: block '" + name + "' has dtype " + it->second.dtype);
        return it->second;
    }
};

namespace detail {
template <class T>
void put_le(std::string& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    auto u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}
template <class T>
T get_le(const char* p) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<T>(u);
}
} // namespace detail

inline std::string serialize(const Container& c) {
    std::string data;
    json blocks = json::array();
    for (const auto& [name, b] : c.blocks) {
        const std::size_t off = data.size();
        if (b.dtype == "f64")
            for (double v : b.f64) detail::put_le(data, v);
        else
            for (std::int32_t v : b.i32) detail::put_le(data, v);
        blocks.push_back({{"name", name}, {"dtype", b.dtype}, {"shape", b.shape}, {"offset", off}, {"nbytes", data.size() - off}});
    }
    const json header{{"format", "ecgrom-container"}, {"version", kContainerVersion}, {"kind", c.kind},
                      {"meta", c.meta}, {"blocks", blocks}};
    const std::string h = header.dump();
    std::string out(kContainerMagic, 8);
    detail::put_le(out, static_cast<std::uint64_t>(h.size()));
    out += h;
    out += data;
    return out;
}

inline Container deserialize(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kContainerMagic, 8) != 0)
        throw ConfigError("container: bad magic");
    const auto hlen = detail::get_le<std::uint64_t>(bytes.data() + 8);
    if (16 + hlen > bytes.size()) throw ConfigError("container: truncated header");
    const json header = json::parse(bytes.substr(16, hlen));
    if (header.at("format") != "ecgrom-container" || header.at("version").get<int>() != kContainerVersion)
        throw ConfigError("container: unsupported format or version");
    Container c;
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.at("meta");
    const std::size_t base = 16 + hlen;
    for (const auto& jb : header.at("blocks")) {
        Block b;
        b.dtype = jb.at("dtype").get<std::string>();
        b.shape = jb.at("shape").get<std::vector<std::int64_t>>();
        const auto off = jb.at("offset").get<std::size_t>();
        const std::size_t n = b.count();
        const std::size_t width = b.dtype == "f64" ? 8 : 4;
        if (b.dtype != "f64" && b.dtype != "i32") throw ConfigError("container: unknown dtype " + b.dtype);
        if (base + off + n * width > bytes.size()) throw ConfigError("container: truncated block");
        const char* p = bytes.data() + base + off;
        if (width == 8) {
            b.f64.resize(n);
            for (std::size_t i = 0; i < n; ++i) b.f64[i] = detail::get_le<double>(p + 8 * i);
        } else {
            b.i32.resize(n);
            for (std::size_t i = 0; i < n; ++i) b.i32[i] = detail::get_le<std::int32_t>(p + 4 * i);
        }
        c.blocks[jb.at("name").get<std::string>()] = std::move(b);
    }
    return c;
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ConfigError("write to " + path + " failed");
}

inline void save_container(const std::string& path, const Container& c) { write_file(path, serialize(c)); }
inline Container load_container(const std::string& path) { return deserialize(read_file(path)); }

// Mesh ---------------------------------------------------------------------------

inline Container mesh_container(const Mesh& m) {
    Container c;
    c.kind = "mesh";
    std::vector<double> xy;
    for (auto p : m.nodes()) {
        xy.push_back(p.x);
        xy.push_back(p.y);
    }
    std::vector<std::int32_t> tri, reg;
    for (const auto& t : m.triangles()) tri.insert(tri.end(), t.begin(), t.end());
    for (auto r : m.element_region()) reg.push_back(static_cast<std::int32_t>(r));
    const auto nn = static_cast<std::int64_t>(m.num_nodes()), ne = static_cast<std::int64_t>(m.num_elements());
    c.put("nodes", std::move(xy), {nn, 2});
    c.put("triangles", std::move(tri), {ne, 3});
    c.put("regions", std::move(reg), {ne});
    json electrodes = json::object();
    for (const auto& [name, g] : m.electrodes()) electrodes[name] = g;
    json tags = json::object();
    for (auto r : kAllRegions) tags[std::string(region_name(r))] = static_cast<int>(r);
    c.meta = {{"num_nodes", nn}, {"num_elements", ne}, {"num_heart_nodes", m.num_heart_nodes()},
              {"electrodes", electrodes}, {"region_tags", tags}, {"units", "cm"}};
    return c;
}

inline Mesh mesh_from_container(const Container& c) {
    if (c.kind != "mesh") throw ConfigError("container holds '" + c.kind + "', expected a mesh");
    const auto& xy = c.get("nodes", "f64").f64;
    const auto& tri = c.get("triangles", "i32").i32;
    const auto& reg = c.get("regions", "i32").i32;
    std::vector<Point2> nodes(xy.size() / 2);
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = {xy[2 * i], xy[2 * i + 1]};
    std::vector<Triangle> tris(tri.size() / 3);
    for (std::size_t e = 0; e < tris.size(); ++e) tris[e] = {tri[3 * e], tri[3 * e + 1], tri[3 * e + 2]};
    std::vector<Region> regions;
    for (auto r : reg) regions.push_back(region_from_int(r));
    std::map<std::string, std::int32_t> electrodes;
    for (const auto& [name, g] : c.meta.at("electrodes").items()) electrodes[name] = g.get<std::int32_t>();
    return Mesh::from_arrays(std::move(nodes), std::move(tris), std::move(regions), std::move(electrodes));
}

inline void save_mesh(const std::string& path, const Mesh& m) { save_container(path, mesh_container(m)); }
inline Mesh load_mesh(const std::string& path) { return mesh_from_container(load_container(path)); }

/// Node and element CSV dumps for plotting.
inline void write_mesh_csv(const std::string& nodes_path, const std::string& elements_path, const Mesh& m) {
    std::ofstream n(nodes_path), e(elements_path);
    if (!n || !e) throw ConfigError("cannot write mesh CSV files");
    n << "id,x,y,heart_local\n" << std::setprecision(17);
    for (std::size_t i = 0; i < m.num_nodes(); ++i)
        n << i << ',' << m.nodes()[i].x << ',' << m.nodes()[i].y << ',' << m.heart_local(static_cast<std::int32_t>(i)) << '\n';
    e << "id,n0,n1,n2,region\n";
    for (std::size_t k = 0; k < m.num_elements(); ++k) {
        const auto& t = m.triangles()[k];
        e << k << ',' << t[0] << ',' << t[1] << ',' << t[2] << ',' << region_name(m.element_region()[k]) << '\n';
    }
}

// Snapshots and bases -----------------------------------------------------------

inline Container snapshot_container(const SnapshotMatrix& b, const json& meta = json::object()) {
    Container c;
    c.kind = "snapshots";
    std::vector<double> data(b.data.data(), b.data.data() + b.data.size());  // column-major
    c.put("states", std::move(data), {b.cols(), b.rows()});
    c.put("times", std::vector<double>(b.times), {static_cast<std::int64_t>(b.times.size())});
    c.meta = meta;
    c.meta["n"] = b.n;
    c.meta["labels"] = b.labels;
    c.meta["layout"] = "column-major, rows = (V_m, u_e) on heart nodes";
    return c;
}

inline SnapshotMatrix snapshots_from_container(const Container& c) {
    if (c.kind != "snapshots") throw ConfigError("container holds '" + c.kind + "', expected snapshots");
    SnapshotMatrix b;
    b.n = c.meta.at("n").get<Eigen::Index>();
    const auto& s = c.get("states", "f64");
    const auto p = static_cast<Eigen::Index>(s.shape.at(0));
    b.data = Eigen::Map<const MatrixXd>(s.f64.data(), 2 * b.n, p);
    b.times = c.get("times", "f64").f64;
    b.labels = c.meta.at("labels").get<std::vector<std::string>>();
    return b;
}

inline Container basis_container(const PodBasis& basis) {
    Container c;
    c.kind = "pod-basis";
    c.put("modes", std::vector<double>(basis.modes.data(), basis.modes.data() + basis.modes.size()),
          {basis.modes.cols(), basis.modes.rows()});
    c.put("singular_values",
          std::vector<double>(basis.singular_values.data(), basis.singular_values.data() + basis.singular_values.size()),
          {basis.singular_values.size()});
    c.meta = {{"n", basis.n()}, {"n_modes", basis.n_modes()}, {"v_rest", basis.v_rest}, {"ue_scale", basis.ue_scale},
              {"theta", basis.theta}, {"manifest", json::parse(basis.manifest)}};
    return c;
}

inline PodBasis basis_from_container(const Container& c) {
    if (c.kind != "pod-basis") throw ConfigError("container holds '" + c.kind + "', expected a POD basis");
    PodBasis b;
    const auto& m = c.get("modes", "f64");
    const auto cols = static_cast<Eigen::Index>(m.shape.at(0)), rows = static_cast<Eigen::Index>(m.shape.at(1));
    b.modes = Eigen::Map<const MatrixXd>(m.f64.data(), rows, cols);
    const auto& sv = c.get("singular_values", "f64").f64;
    b.singular_values = Eigen::Map<const VectorXd>(sv.data(), static_cast<Eigen::Index>(sv.size()));
    b.v_rest = c.meta.at("v_rest").get<double>();
    b.ue_scale = c.meta.at("ue_scale").get<double>();
    b.theta = c.meta.at("theta").get<std::vector<double>>();
    b.manifest = c.meta.at("manifest").dump();
    return b;
}

inline void save_basis(const std::string& path, const PodBasis& b) { save_container(path, basis_container(b)); }
inline PodBasis load_basis(const std::string& path) { return basis_from_container(load_container(path)); }

} // namespace ecgrom
