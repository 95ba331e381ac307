#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "mdp/assembly.hpp"
#include "mdp/binary_io.hpp"
#include "mdp/geometry.hpp"
#include "mdp/ilu.hpp"
#include "mdp/krylov.hpp"

namespace mdp {

/// Physics right-hand side of the reduced problem.
///
/// Solves (K11 + 2 pi eps M11) x = f1 by ILU(0)-preconditioned FGMRES to
/// relative tolerance `tol`, then returns f0 - 2 pi eps M01 x (the lift of
/// the Dirichlet nodes is carried by f0).
inline Vector generate_rhs(const CoupledSystem& s, double tol = 1e-4)
{
    const CsrMatrix A11 = s.block11();
    Ilu0Preconditioner ilu(A11);
    SolveReport rep;
    const Vector x = fgmres(A11, ilu, s.f1, FgmresOptions{20, tol, 2000}, rep);
    if (!rep.converged) {
        throw NumericalError("generate_rhs: 1D solve did not converge (relative residual " +
                             std::to_string(rep.final_relative_residual()) + ")");
    }
    return s.f0 + reduced_rhs(s, x);
}

inline Vector normalized(const Vector& v)
{
    const double n = norm2(v);
    if (!(n > 0.0)) {
        throw NumericalError("cannot normalize a zero vector");
    }
    return (1.0 / n) * v;
}

/// Arnoldi with modified Gram-Schmidt on q0 = b/|b|; returns q_{p'} .. q_{p'+p-1}.
/// On breakdown the vectors built so far (within the requested range) are returned.
inline std::vector<Vector> augment_krylov(const LinearOperator& C, const Vector& b, int p = 4, int p_prime = 5,
                                          bool* broke_down = nullptr)
{
    if (broke_down) {
        *broke_down = false;
    }
    std::vector<Vector> q{normalized(b)};
    const int last = p_prime + p - 1;
    while (static_cast<int>(q.size()) <= last) {
        Vector w = C(q.back());
        const double wn = norm2(w);
        for (const Vector& qi : q) {
            axpy(-dot(w, qi), qi, w);
        }
        for (const Vector& qi : q) {
            axpy(-dot(w, qi), qi, w);
        }
        const double h = norm2(w);
        if (!(h > 1e-10 * wn)) {
            if (broke_down) {
                *broke_down = true;
            }
            std::clog << "augment_krylov: Arnoldi breakdown after " << q.size() << " vectors\n";
            break;
        }
        q.push_back((1.0 / h) * w);
    }
    std::vector<Vector> out;
    for (int i = p_prime; i < static_cast<int>(q.size()) && i <= last; ++i) {
        out.push_back(std::move(q[i]));
    }
    return out;
}

inline std::vector<Vector> augment_krylov(const CsrMatrix& C, const Vector& b, int p = 4, int p_prime = 5,
                                          bool* broke_down = nullptr)
{
    return augment_krylov(as_operator(C), b, p, p_prime, broke_down);
}

/// m unit vectors drawn uniformly from the sphere (normalized Gaussians).
inline std::vector<Vector> augment_random(std::size_t n, int m, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Vector> out;
    out.reserve(m);
    for (int k = 0; k < m; ++k) {
        Vector v(n);
        for (double& x : v) {
            x = nd(rng);
        }
        out.push_back(normalized(v));
    }
    return out;
}

enum class SampleTag : std::uint32_t { physics = 0, krylov = 1, random = 2 };

enum class Augmentation { none, krylov, random };

inline std::string to_string(Augmentation a)
{
    switch (a) {
    case Augmentation::none: return "none";
    case Augmentation::krylov: return "krylov";
    case Augmentation::random: return "random";
    }
    return "?";
}

inline Augmentation augmentation_from_string(const std::string& s)
{
    if (s == "none") return Augmentation::none;
    if (s == "krylov" || s == "kry") return Augmentation::krylov;
    if (s == "random" || s == "hf") return Augmentation::random;
    throw std::invalid_argument("unknown augmentation mode '" + s + "'");
}

struct TrainingSample {
    Vector v;
    SampleTag tag = SampleTag::physics;
};

/// Everything the loss needs for one parameter instance.
struct GraphRecord {
    Graph1D graph;
    DistanceField dfield;
    CsrMatrix C;
    std::vector<TrainingSample> samples;
};

struct Dataset {
    int n = 0;
    std::vector<GraphRecord> train;
    std::vector<GraphRecord> validation;

    std::size_t sample_count() const
    {
        std::size_t c = 0;
        for (const auto& g : train) {
            c += g.samples.size();
        }
        return c;
    }
};

struct DatasetOptions {
    int n = 13;
    PhysicalParams params;
    Augmentation augmentation = Augmentation::random;
    int augment_count = 4;   ///< |D| per graph
    int krylov_offset = 5;   ///< p'
    double rhs_tol = 1e-4;
    double validation_fraction = 0.2;
};

/// One record per graph: assembled C, distance field, 1 physics sample plus augmentation.
inline GraphRecord make_record(const Graph1D& g, const DatasetOptions& opt, std::uint64_t seed)
{
    const StructuredGrid grid(opt.n);
    const CoupledSystem s = assemble_coupled_system(grid, g, opt.params);
    GraphRecord r{g, distance_field(g, grid), reduced_operator(s), {}};
    const Vector b = generate_rhs(s, opt.rhs_tol);
    r.samples.push_back({normalized(b), SampleTag::physics});
    if (opt.augmentation == Augmentation::krylov) {
        for (auto& q : augment_krylov(r.C, b, opt.augment_count, opt.krylov_offset)) {
            r.samples.push_back({std::move(q), SampleTag::krylov});
        }
    }
    else if (opt.augmentation == Augmentation::random) {
        for (auto& q : augment_random(grid.node_count(), opt.augment_count, seed)) {
            r.samples.push_back({std::move(q), SampleTag::random});
        }
    }
    return r;
}

/// The last round(fraction * count) graphs form the validation split.
inline Dataset build_dataset(const std::vector<Graph1D>& graphs, const DatasetOptions& opt, std::uint64_t seed)
{
    Dataset d;
    d.n = opt.n;
    const auto n_val = static_cast<std::size_t>(std::lround(opt.validation_fraction * graphs.size()));
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        GraphRecord r = make_record(graphs[i], opt, seed * 1000003ULL + i);
        (i + n_val < graphs.size() ? d.train : d.validation).push_back(std::move(r));
    }
    return d;
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/manifest.json, <dir>/graph_XXXX.{json,mdf,mds}
// ---------------------------------------------------------------------------

inline void write_samples(std::ostream& os, const std::vector<TrainingSample>& samples)
{
    io::write_magic(os, "MDS1");
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.tag));
        io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.v.size()));
        os.write(reinterpret_cast<const char*>(s.v.data()), static_cast<std::streamsize>(s.v.size() * sizeof(double)));
    }
}

inline std::vector<TrainingSample> read_samples(std::istream& is)
{
    io::expect_magic(is, "MDS1", "sample file");
    const auto count = io::read_pod<std::uint32_t>(is, "sample file");
    std::vector<TrainingSample> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto tag = io::read_pod<std::uint32_t>(is, "sample file");
        if (tag > 2) {
            throw FormatError("sample file: unknown tag " + std::to_string(tag));
        }
        const auto len = io::read_pod<std::uint32_t>(is, "sample file");
        TrainingSample s{Vector(len), static_cast<SampleTag>(tag)};
        is.read(reinterpret_cast<char*>(s.v.data()), static_cast<std::streamsize>(len * sizeof(double)));
        if (!is) {
            throw FormatError("sample file: truncated payload");
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir, const DatasetOptions& opt)
{
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["n"] = d.n;
    manifest["augmentation"] = to_string(opt.augmentation);
    manifest["params"] = {{"k_omega", opt.params.k_omega},
                          {"sigma_omega", opt.params.sigma_omega},
                          {"k_lambda", opt.params.k_lambda},
                          {"epsilon", opt.params.epsilon}};
    auto dump = [&](const std::vector<GraphRecord>& recs, const std::string& split) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& r : recs) {
            char stem[32];
            std::snprintf(stem, sizeof stem, "graph_%04zu", list.size() + (split == "validation" ? d.train.size() : 0));
            save_graph(r.graph, dir / (std::string(stem) + ".json"));
            save_distance_field(r.dfield, dir / (std::string(stem) + ".mdf"));
            std::ofstream os(dir / (std::string(stem) + ".mds"), std::ios::binary);
            write_samples(os, r.samples);
            list.push_back(stem);
        }
        manifest[split] = list;
    };
    dump(d.train, "train");
    dump(d.validation, "validation");
    std::ofstream(dir / "manifest.json") << manifest.dump(1) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& dir)
{
    std::ifstream is(dir / "manifest.json");
    if (!is) {
        throw Error("no manifest.json in " + dir.string());
    }
    nlohmann::json manifest;
    is >> manifest;
    Dataset d;
    d.n = manifest.at("n").get<int>();
    PhysicalParams p;
    p.k_omega = manifest.at("params").at("k_omega").get<double>();
    p.sigma_omega = manifest.at("params").at("sigma_omega").get<double>();
    p.k_lambda = manifest.at("params").at("k_lambda").get<double>();
    p.epsilon = manifest.at("params").at("epsilon").get<double>();
    const StructuredGrid grid(d.n);
    auto load = [&](const std::string& split, std::vector<GraphRecord>& out) {
        for (const auto& stem_j : manifest.at(split)) {
            const std::string stem = stem_j.get<std::string>();
            GraphRecord r;
            r.graph = load_graph(dir / (stem + ".json"));
            r.dfield = load_distance_field(dir / (stem + ".mdf"));
            std::ifstream ss(dir / (stem + ".mds"), std::ios::binary);
            r.samples = read_samples(ss);
            r.C = reduced_operator(assemble_coupled_system(grid, r.graph, p));
            out.push_back(std::move(r));
        }
    };
    load("train", d.train);
    load("validation", d.validation);
    return d;
}

} // namespace mdp
