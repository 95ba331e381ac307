#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mdp/binary_io.hpp"
#include "mdp/error.hpp"
#include "mdp/grid.hpp"

namespace mdp {

/// Embedded metric graph: straight segments between vertices in the unit cube.
struct Graph1D {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 2>> edges;
    double radius = 1e-3;
    std::vector<int> dirichlet_vertices;

    double edge_length(std::size_t e) const
    {
        return norm(vertices[edges[e][1]] - vertices[edges[e][0]]);
    }

    /// Arc coordinate at which each edge starts when the edges are laid end to end.
    std::vector<double> arc_offsets() const
    {
        std::vector<double> out(edges.size() + 1, 0.0);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            out[e + 1] = out[e] + edge_length(e);
        }
        return out;
    }

    double total_length() const { return arc_offsets().back(); }

    std::vector<int> degrees() const
    {
        std::vector<int> deg(vertices.size(), 0);
        for (const auto& e : edges) {
            ++deg[e[0]];
            ++deg[e[1]];
        }
        return deg;
    }

    bool operator==(const Graph1D&) const = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
inline void validate(const Graph1D& g)
{
    constexpr double tol = 1e-12;
    if (g.vertices.empty() || g.edges.empty()) {
        throw std::invalid_argument("Graph1D: empty graph");
    }
    if (!(g.radius > 0.0)) {
        throw std::invalid_argument("Graph1D: radius must be positive");
    }
    for (std::size_t v = 0; v < g.vertices.size(); ++v) {
        for (double c : g.vertices[v]) {
            if (c < -tol || c > 1.0 + tol) {
                throw std::invalid_argument("Graph1D: vertex " + std::to_string(v) + " outside the unit cube");
            }
        }
    }
    const int nv = static_cast<int>(g.vertices.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [a, b] = g.edges[e];
        if (a < 0 || b < 0 || a >= nv || b >= nv) {
            throw std::invalid_argument("Graph1D: edge " + std::to_string(e) + " references a missing vertex");
        }
        if (!(g.edge_length(e) > 0.0)) {
            throw std::invalid_argument("Graph1D: edge " + std::to_string(e) + " has zero length");
        }
    }
    const auto deg = g.degrees();
    for (int v = 0; v < nv; ++v) {
        if (deg[v] == 0) {
            throw std::invalid_argument("Graph1D: vertex " + std::to_string(v) + " is isolated");
        }
    }
    if (g.dirichlet_vertices.empty()) {
        throw std::invalid_argument("Graph1D: Dirichlet set is empty");
    }
    for (int d : g.dirichlet_vertices) {
        if (d < 0 || d >= nv) {
            throw std::invalid_argument("Graph1D: Dirichlet vertex out of range");
        }
    }
}

// ---------------------------------------------------------------------------
// Random bifurcating trees
// ---------------------------------------------------------------------------

/// Parameters of the random tree family. A tree is rooted on the x = 0 face
/// and grows breadth-first; every tip splits into two children whose
/// direction turns by at most max_turn_deg and whose length decays
/// geometrically down to min_length.
struct GraphFamily {
    int min_branches = 1;
    int max_branches = 1;
    double trunk_length = 0.45;
    double length_decay = 0.8;
    double min_length = 0.06;
    double max_turn_deg = 55.0;
    double margin = 0.02;
    double radius = 1e-3;

    static GraphFamily single_segment()
    {
        GraphFamily f;
        f.min_branches = f.max_branches = 1;
        return f;
    }
    static GraphFamily with_branches(int lo, int hi)
    {
        GraphFamily f;
        f.min_branches = lo;
        f.max_branches = hi;
        return f;
    }
};

namespace detail {

inline bool inside_box(const Vec3& p, double margin)
{
    return std::all_of(p.begin(), p.end(), [&](double c) { return c >= margin && c <= 1.0 - margin; });
}

inline Vec3 normalized(const Vec3& v) { return (1.0 / norm(v)) * v; }

/// Unit vector orthogonal to d.
inline Vec3 any_orthogonal(const Vec3& d)
{
    const Vec3 ref = std::abs(d[0]) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    return normalized(cross(d, ref));
}

/// Rotate unit direction d by `polar` radians towards azimuth `azimuth`.
inline Vec3 turn(const Vec3& d, double polar, double azimuth)
{
    const Vec3 u = any_orthogonal(d);
    const Vec3 w = cross(d, u);
    const Vec3 side = std::cos(azimuth) * u + std::sin(azimuth) * w;
    return normalized(std::cos(polar) * d + std::sin(polar) * side);
}

} // namespace detail

/// Deterministic in (family, seed). Throws std::invalid_argument when the
/// requested tree cannot be placed inside the cube within 100 attempts.
inline Graph1D generate_graph(const GraphFamily& family, std::uint64_t seed)
{
    if (family.min_branches < 1 || family.max_branches < family.min_branches) {
        throw std::invalid_argument("generate_graph: invalid branch range");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    int target = family.min_branches;
    if (family.max_branches > family.min_branches) {
        const double lo = std::log(static_cast<double>(family.min_branches));
        const double hi = std::log(static_cast<double>(family.max_branches) + 1.0);
        target = std::clamp(static_cast<int>(std::exp(lo + (hi - lo) * unit(rng))), family.min_branches,
                            family.max_branches);
    }

    const double max_turn = family.max_turn_deg * std::numbers::pi / 180.0;
    const double m = family.margin;

    struct Tip {
        int vertex;
        Vec3 dir;
        double length;
    };

    for (int attempt = 0; attempt < 100; ++attempt) {
        Graph1D g;
        g.radius = family.radius;
        const Vec3 root{0.0, 0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng)};
        g.vertices.push_back(root);

        bool trunk_ok = false;
        Vec3 trunk_dir{};
        double trunk_len = family.trunk_length;
        for (int k = 0; k < 20 && !trunk_ok; ++k) {
            trunk_dir = detail::turn({1.0, 0.0, 0.0}, 0.5 * max_turn * unit(rng), 2.0 * std::numbers::pi * unit(rng));
            if (detail::inside_box(root + trunk_len * trunk_dir, m)) {
                trunk_ok = true;
            }
            else {
                trunk_len = std::max(family.min_length, 0.85 * trunk_len);
            }
        }
        if (!trunk_ok) {
            continue;
        }
        g.vertices.push_back(root + trunk_len * trunk_dir);
        g.edges.push_back({0, 1});

        std::vector<Tip> queue{{1, trunk_dir, trunk_len}};
        std::size_t head = 0;
        while (static_cast<int>(g.edges.size()) < target && head < queue.size()) {
            const Tip tip = queue[head++];
            const int children = std::min(2, target - static_cast<int>(g.edges.size()));
            const double azimuth0 = 2.0 * std::numbers::pi * unit(rng);
            for (int c = 0; c < children; ++c) {
                double len = std::max(family.min_length, tip.length * family.length_decay * (0.8 + 0.4 * unit(rng)));
                for (int k = 0; k < 20; ++k) {
                    const double polar = max_turn * (0.3 + 0.7 * unit(rng));
                    const double azimuth = azimuth0 + c * std::numbers::pi + 0.5 * (unit(rng) - 0.5);
                    const Vec3 dir = detail::turn(tip.dir, polar, azimuth);
                    const Vec3 end = g.vertices[tip.vertex] + len * dir;
                    if (detail::inside_box(end, m)) {
                        g.vertices.push_back(end);
                        const int id = static_cast<int>(g.vertices.size()) - 1;
                        g.edges.push_back({tip.vertex, id});
                        queue.push_back({id, dir, len});
                        break;
                    }
                    len = std::max(0.5 * family.min_length, 0.85 * len);
                }
            }
        }
        if (static_cast<int>(g.edges.size()) != target) {
            continue;
        }

        const auto deg = g.degrees();
        for (int v = 0; v < static_cast<int>(g.vertices.size()); ++v) {
            if (deg[v] == 1 && g.vertices[v][0] <= 1e-12) {
                g.dirichlet_vertices.push_back(v);
            }
        }
        validate(g);
        return g;
    }
    throw std::invalid_argument("generate_graph: could not fit " + std::to_string(target) +
                                " branches in the unit cube after 100 attempts");
}

// ---------------------------------------------------------------------------
// 1D mesh
// ---------------------------------------------------------------------------

struct GraphMesh1D {
    struct Element {
        int a;
        int b;
        double length;
        int edge;
    };

    std::vector<Vec3> nodes;
    std::vector<Element> elements;
    std::vector<int> vertex_node;   ///< graph vertex id -> mesh node id
    std::vector<int> dirichlet_nodes;

    std::size_t node_count() const noexcept { return nodes.size(); }

    double total_length() const
    {
        double s = 0.0;
        for (const auto& e : elements) {
            s += e.length;
        }
        return s;
    }
};

/// Subdivide every edge into ceil(length / h_target) equal elements.
///
/// Graph vertices keep their ids as the first mesh nodes (shared junctions
/// appear once); interior nodes follow edge by edge in edge order.
inline GraphMesh1D refine_graph(const Graph1D& graph, double h_target)
{
    if (!(h_target > 0.0)) {
        throw std::invalid_argument("refine_graph: h_target must be positive");
    }
    GraphMesh1D mesh;
    mesh.nodes = graph.vertices;
    mesh.vertex_node.resize(graph.vertices.size());
    for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
        mesh.vertex_node[v] = static_cast<int>(v);
    }
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        const auto [a, b] = graph.edges[e];
        const double len = graph.edge_length(e);
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / h_target - 1e-9)));
        const Vec3 pa = graph.vertices[a];
        const Vec3 pb = graph.vertices[b];
        int prev = a;
        for (int p = 1; p <= pieces; ++p) {
            int cur = b;
            if (p < pieces) {
                const double t = static_cast<double>(p) / pieces;
                mesh.nodes.push_back(pa + t * (pb - pa));
                cur = static_cast<int>(mesh.nodes.size()) - 1;
            }
            mesh.elements.push_back({prev, cur, len / pieces, static_cast<int>(e)});
            prev = cur;
        }
    }
    for (int d : graph.dirichlet_vertices) {
        mesh.dirichlet_nodes.push_back(mesh.vertex_node[d]);
    }
    std::sort(mesh.dirichlet_nodes.begin(), mesh.dirichlet_nodes.end());
    mesh.dirichlet_nodes.erase(std::unique(mesh.dirichlet_nodes.begin(), mesh.dirichlet_nodes.end()),
                               mesh.dirichlet_nodes.end());
    return mesh;
}

// ---------------------------------------------------------------------------
// Distance fields
// ---------------------------------------------------------------------------

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

/// Nodal samples of the distance to the graph.
struct DistanceField {
    StructuredGrid grid{2};
    std::vector<double> values;
};

inline DistanceField distance_field(const Graph1D& graph, const StructuredGrid& grid)
{
    DistanceField df{grid, std::vector<double>(grid.node_count())};
    for (std::size_t idx = 0; idx < grid.node_count(); ++idx) {
        const Vec3 p = grid.point(idx);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : graph.edges) {
            best = std::min(best, point_segment_distance(p, graph.vertices[e[0]], graph.vertices[e[1]]));
        }
        df.values[idx] = best < 1e-12 ? 0.0 : best;
    }
    return df;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline nlohmann::json graph_to_json(const Graph1D& g)
{
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : g.vertices) {
        j["vertices"].push_back({v[0], v[1], v[2]});
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges) {
        j["edges"].push_back({e[0], e[1]});
    }
    j["radius"] = g.radius;
    j["dirichlet"] = g.dirichlet_vertices;
    return j;
}

inline Graph1D graph_from_json(const nlohmann::json& j)
{
    Graph1D g;
    try {
        for (const auto& v : j.at("vertices")) {
            g.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()});
        }
        for (const auto& e : j.at("edges")) {
            g.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
        }
        g.radius = j.at("radius").get<double>();
        g.dirichlet_vertices = j.at("dirichlet").get<std::vector<int>>();
    }
    catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("graph JSON: ") + ex.what());
    }
    validate(g);
    return g;
}

inline void save_graph(const Graph1D& g, const std::filesystem::path& path)
{
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    os << graph_to_json(g).dump(1) << '\n';
}

inline Graph1D load_graph(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        is >> j;
    }
    catch (const nlohmann::json::exception& ex) {
        throw FormatError(path.string() + ": " + ex.what());
    }
    return graph_from_json(j);
}

/// "MDF1" | u32 n | n^3 f64 values, lexicographic node order.
inline void write_grid_vector(std::ostream& os, int n, const std::vector<double>& values)
{
    detail::require_dims(values.size() == static_cast<std::size_t>(n) * n * n, "write_grid_vector: size is not n^3");
    io::write_magic(os, "MDF1");
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(n));
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

inline std::pair<int, std::vector<double>> read_grid_vector(std::istream& is)
{
    io::expect_magic(is, "MDF1", "grid vector");
    const auto n = io::read_pod<std::uint32_t>(is, "grid vector");
    if (n < 2 || n > 4096) {
        throw FormatError("grid vector: implausible size " + std::to_string(n));
    }
    std::vector<double> values(static_cast<std::size_t>(n) * n * n);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) {
        throw FormatError("grid vector: truncated payload");
    }
    return {static_cast<int>(n), std::move(values)};
}

inline void save_distance_field(const DistanceField& df, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    write_grid_vector(os, df.grid.n(), df.values);
}

inline DistanceField load_distance_field(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    auto [n, values] = read_grid_vector(is);
    return DistanceField{StructuredGrid(n), std::move(values)};
}

} // namespace mdp
