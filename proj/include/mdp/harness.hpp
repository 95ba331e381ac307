#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "mdp/analysis.hpp"
#include "mdp/checkpoint.hpp"
#include "mdp/config.hpp"
#include "mdp/coupled.hpp"
#include "mdp/neural_precond.hpp"
#include "mdp/report.hpp"

namespace mdp {

// ---------------------------------------------------------------------------
// Trained models
// ---------------------------------------------------------------------------

struct NeuralModel {
    std::shared_ptr<const UNetParams> params;
    double alpha = 0.0; ///< training normalization; 0 when unknown
    bool use_distance = true;
    Augmentation augmentation = Augmentation::random;
    int n = 0; ///< training resolution
};

inline std::filesystem::path model_metadata_path(const std::filesystem::path& checkpoint)
{
    std::filesystem::path p = checkpoint;
    p += ".json";
    return p;
}

/// Checkpoint plus a JSON sidecar holding alpha and the training setup.
inline void save_model(const NeuralModel& m, const std::filesystem::path& checkpoint)
{
    if (checkpoint.has_parent_path()) {
        std::filesystem::create_directories(checkpoint.parent_path());
    }
    save_checkpoint(*m.params, checkpoint.string());
    const nlohmann::json j = {{"alpha", m.alpha},
                              {"use_distance", m.use_distance},
                              {"augmentation", to_string(m.augmentation)},
                              {"n", m.n}};
    write_text_file(model_metadata_path(checkpoint), j.dump(2) + "\n");
}

/// Parameters are read at checkpoint precision. Without a sidecar alpha is 0.
inline NeuralModel load_model(const std::filesystem::path& checkpoint)
{
    NeuralModel m;
    m.params = std::make_shared<const UNetParams>(load_checkpoint(checkpoint.string()));
    const auto meta = model_metadata_path(checkpoint);
    if (std::filesystem::exists(meta)) {
        std::ifstream is(meta);
        nlohmann::json j;
        try {
            is >> j;
        }
        catch (const nlohmann::json::parse_error& e) {
            throw FormatError("model metadata '" + meta.string() + "': " + e.what());
        }
        detail::get_if(j, "alpha", m.alpha);
        detail::get_if(j, "use_distance", m.use_distance);
        detail::get_if(j, "n", m.n);
        if (j.contains("augmentation")) {
            m.augmentation = augmentation_from_string(j.at("augmentation").get<std::string>());
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Graph sets and preconditioner construction
// ---------------------------------------------------------------------------

/// Graph i is drawn with seed + i.
inline std::vector<Graph1D> make_graphs(const GraphFamily& family, int count, std::uint64_t seed)
{
    std::vector<Graph1D> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        out.push_back(generate_graph(family, seed + static_cast<std::uint64_t>(i)));
    }
    return out;
}

/// C must outlive the returned preconditioner.
inline std::unique_ptr<Preconditioner> make_preconditioner(const PrecondSpec& spec, const StructuredGrid& grid,
                                                           const CsrMatrix& C, const Graph1D& graph,
                                                           const NeuralModel* model)
{
    switch (spec.kind) {
    case PrecondKind::none: return std::make_unique<IdentityPreconditioner>();
    case PrecondKind::ilu0: return std::make_unique<Ilu0Preconditioner>(C);
    case PrecondKind::gmg: return std::make_unique<GmgPreconditioner>(grid, C, spec.gmg_cycles);
    case PrecondKind::neural: {
        if (model == nullptr || !model->params) {
            throw std::invalid_argument("neural preconditioner selected without a model");
        }
        std::optional<SmoothingConfig> sm;
        if (spec.smoothing) {
            if (!(model->alpha > 0.0)) {
                throw std::invalid_argument("smoothing needs the model's alpha (missing metadata)");
            }
            sm = spec.smoother;
        }
        return std::make_unique<NeuralPreconditioner>(model->params, distance_field(graph, grid), sm,
                                                      spec.smoothing ? &C : nullptr,
                                                      model->alpha > 0.0 ? model->alpha : 1.0, spec.use_distance);
    }
    }
    throw std::invalid_argument("unknown preconditioner kind");
}

namespace detail {

/// Runs body(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(int count, int threads, const std::function<void(int)>& body)
{
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int t = 0; t < std::min(threads, count); ++t) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    body(i);
                }
                catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) {
                        err = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

inline std::string graph_id(std::uint64_t seed) { return "g" + std::to_string(seed); }

inline double ms_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Reduced 3D benchmark
// ---------------------------------------------------------------------------

/// One held-out configuration of the reduced problem.
struct ReducedCase {
    std::string id;
    Graph1D graph;
    StructuredGrid grid{2};
    CsrMatrix C;
    Vector b;
};

inline ReducedCase make_reduced_case(const Graph1D& g, int n, const PhysicalParams& params, double rhs_tol,
                                     std::string id)
{
    ReducedCase c;
    c.id = std::move(id);
    c.graph = g;
    c.grid = StructuredGrid(n);
    const CoupledSystem s = assemble_coupled_system(c.grid, g, params);
    c.C = reduced_operator(s);
    c.b = generate_rhs(s, rhs_tol);
    return c;
}

/// Solves one case; failures become a non-converged row.
inline RunRow solve_reduced_case(const ReducedCase& c, const PrecondSpec& spec, const FgmresOptions& opt,
                                 const NeuralModel* model, int repetitions = 1)
{
    RunRow row;
    row.graph_id = c.id;
    row.n = c.grid.n();
    row.n_h = static_cast<int>(c.grid.node_count());
    row.precond = spec.label();
    try {
        std::vector<double> times;
        for (int rep = 0; rep < std::max(1, repetitions); ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            auto P = make_preconditioner(spec, c.grid, c.C, c.graph, model);
            SolveReport sr;
            const Vector x = fgmres(c.C, *P, c.b, opt, sr);
            times.push_back(detail::ms_since(t0));
            if (rep == 0) {
                row.iterations = sr.iterations;
                row.converged = sr.converged;
                row.rel_residual = norm2(c.b - spmv(c.C, x)) / norm2(c.b);
            }
        }
        row.time_ms = median(times);
        row.time_per_iter_ms = row.iterations > 0 ? row.time_ms / row.iterations : 0.0;
    }
    catch (const std::exception& e) {
        row.iterations = opt.maxit;
        row.converged = false;
        row.rel_residual = 1.0;
        row.error = e.what();
    }
    return row;
}

/// Assembles the held-out graphs of the config and solves each.
inline ReportTable run_reduced_benchmark(const ExperimentConfig& cfg, const NeuralModel* model = nullptr)
{
    ReportTable t;
    t.rows.resize(static_cast<std::size_t>(cfg.test_count));
    detail::parallel_for(cfg.test_count, cfg.threads, [&](int i) {
        const std::uint64_t seed = cfg.test_seed + static_cast<std::uint64_t>(i);
        const std::string id = detail::graph_id(seed);
        try {
            const ReducedCase c = make_reduced_case(generate_graph(cfg.family, seed), cfg.n, cfg.params, cfg.rhs_tol, id);
            t.rows[i] = solve_reduced_case(c, cfg.precond, cfg.fgmres, model, cfg.repetitions);
        }
        catch (const std::exception& e) {
            RunRow r;
            r.graph_id = id;
            r.n = cfg.n;
            r.n_h = cfg.n * cfg.n * cfg.n;
            r.precond = cfg.precond.label();
            r.iterations = cfg.fgmres.maxit;
            r.rel_residual = 1.0;
            r.error = e.what();
            t.rows[i] = r;
        }
    });
    return t;
}

// ---------------------------------------------------------------------------
// Coupled 3D-1D solve
// ---------------------------------------------------------------------------

/// Outer FGMRES on the block system for each held-out graph. The inner
/// preconditioner on C is the configured one.
inline ReportTable run_coupled_benchmark(const ExperimentConfig& cfg, const NeuralModel* model = nullptr)
{
    ReportTable t;
    t.rows.resize(static_cast<std::size_t>(cfg.test_count));
    detail::parallel_for(cfg.test_count, cfg.threads, [&](int i) {
        const std::uint64_t seed = cfg.test_seed + static_cast<std::uint64_t>(i);
        RunRow r;
        r.graph_id = detail::graph_id(seed);
        r.n = cfg.n;
        r.n_h = cfg.n * cfg.n * cfg.n;
        r.precond = "coupled-" + to_string(cfg.coupled) + (cfg.coupled == CoupledPrecond::block ? "/" + cfg.precond.label() : "");
        try {
            const StructuredGrid grid(cfg.n);
            const Graph1D g = generate_graph(cfg.family, seed);
            const CoupledSystem s = assemble_coupled_system(grid, g, cfg.params);
            const CsrMatrix C = reduced_operator(s);
            CoupledStrategy st;
            st.kind = cfg.coupled;
            st.inner_steps = cfg.inner_steps;
            st.outer = cfg.outer;
            if (cfg.coupled == CoupledPrecond::block) {
                st.inner = std::shared_ptr<Preconditioner>(make_preconditioner(cfg.precond, grid, C, g, model));
            }
            std::vector<double> times;
            CoupledSolution sol;
            for (int rep = 0; rep < cfg.repetitions; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                sol = solve_coupled(s, st);
                times.push_back(detail::ms_since(t0));
            }
            r.iterations = sol.report.iterations;
            r.converged = sol.report.converged;
            r.rel_residual = sol.true_relative_residual;
            r.time_ms = median(times);
            r.time_per_iter_ms = r.iterations > 0 ? r.time_ms / r.iterations : 0.0;
        }
        catch (const std::exception& e) {
            r.iterations = cfg.outer.maxit;
            r.rel_residual = 1.0;
            r.error = e.what();
        }
        t.rows[i] = r;
    });
    return t;
}

// ---------------------------------------------------------------------------
// Batched application timing
// ---------------------------------------------------------------------------

struct BatchRow {
    int count = 0;
    double serial_ms = 0.0;
    double batched_ms = 0.0;
    double speedup = 0.0;
    double max_abs_diff = 0.0; ///< batched vs serial outputs
};

inline void write_batch_csv(std::ostream& os, const std::vector<BatchRow>& rows)
{
    os << "N,serial_ms,batched_ms,speedup,max_abs_diff\n";
    char buf[160];
    for (const BatchRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.3f,%.3f,%.3f,%.3e", r.count, r.serial_ms, r.batched_ms, r.speedup,
                      r.max_abs_diff);
        os << buf << '\n';
    }
}

/// Times N serial network applications against one batched application for
/// each N of the config, on distance fields of the held-out graphs.
inline std::vector<BatchRow> run_batch_bench(const ExperimentConfig& cfg, const NeuralModel& model)
{
    int nmax = 0;
    for (int b : cfg.batch_sizes) {
        nmax = std::max(nmax, b);
    }
    const StructuredGrid grid(cfg.n);
    const int n_fields = std::max(1, std::min(nmax, cfg.test_count));
    std::vector<DistanceField> fields;
    for (int i = 0; i < n_fields; ++i) {
        fields.push_back(distance_field(generate_graph(cfg.family, cfg.test_seed + static_cast<std::uint64_t>(i)), grid));
    }
    std::mt19937_64 rng(cfg.test_seed);
    std::normal_distribution<double> nd;
    std::vector<Vector> residuals(static_cast<std::size_t>(nmax), Vector(grid.node_count()));
    for (Vector& r : residuals) {
        for (double& v : r) {
            v = nd(rng);
        }
    }
    std::vector<BatchRow> rows;
    for (int N : cfg.batch_sizes) {
        std::vector<std::pair<Vector, const DistanceField*>> items;
        for (int k = 0; k < N; ++k) {
            items.emplace_back(residuals[k], &fields[k % fields.size()]);
        }
        std::vector<double> ts, tb;
        std::vector<Vector> serial, batched;
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            serial.clear();
            for (const auto& it : items) {
                serial.push_back(apply_neural(*model.params, it.first, *it.second, std::nullopt, nullptr, 1.0,
                                              cfg.precond.use_distance));
            }
            ts.push_back(detail::ms_since(t0));
            t0 = std::chrono::steady_clock::now();
            batched = apply_batched(*model.params, items, cfg.precond.use_distance);
            tb.push_back(detail::ms_since(t0));
        }
        BatchRow row;
        row.count = N;
        row.serial_ms = median(ts);
        row.batched_ms = median(tb);
        row.speedup = row.batched_ms > 0.0 ? row.serial_ms / row.batched_ms : 0.0;
        for (int k = 0; k < N; ++k) {
            for (std::size_t i = 0; i < serial[k].size(); ++i) {
                row.max_abs_diff = std::max(row.max_abs_diff, std::abs(serial[k][i] - batched[k][i]));
            }
        }
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Training and spectra
// ---------------------------------------------------------------------------

inline void write_history_csv(std::ostream& os, const std::vector<EpochStats>& h)
{
    os << "epoch,learning_rate,train_loss,validation_loss,seconds\n";
    char buf[160];
    for (const EpochStats& e : h) {
        std::snprintf(buf, sizeof buf, "%d,%.6e,%.8e,%.8e,%.3f", e.epoch, e.learning_rate, e.train_loss,
                      e.validation_loss, e.seconds);
        os << buf << '\n';
    }
}

/// Training graphs use graph_seed + i; the dataset split keeps the last
/// validation_fraction of them for validation.
inline TrainResult run_training(const ExperimentConfig& cfg, const std::function<void(const EpochStats&)>& on_epoch = {})
{
    const auto graphs = make_graphs(cfg.family, cfg.graph_count, cfg.graph_seed);
    const Dataset data = build_dataset(graphs, cfg.dataset_options(), cfg.graph_seed);
    return train(data, cfg.train_config(), on_epoch);
}

inline NeuralModel model_from(const TrainResult& r, const ExperimentConfig& cfg)
{
    NeuralModel m;
    m.params = std::make_shared<const UNetParams>(round_to_checkpoint(r.params));
    m.alpha = r.alpha;
    m.use_distance = cfg.precond.use_distance;
    m.augmentation = cfg.augmentation;
    m.n = cfg.n;
    return m;
}

/// Frequency-content report for the first held-out graph.
inline SpectrumReport run_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& out_dir)
{
    const StructuredGrid grid(cfg.n);
    const Graph1D g = generate_graph(cfg.family, cfg.test_seed);
    DatasetOptions opt = cfg.dataset_options();
    opt.augmentation = Augmentation::none;
    const GraphRecord rec = make_record(g, opt, cfg.test_seed);
    const CoupledSystem s = assemble_coupled_system(grid, g, cfg.params);
    const Vector b = generate_rhs(s, cfg.rhs_tol);
    const auto kry = augment_krylov(rec.C, b, opt.augment_count, opt.krylov_offset);
    const auto rnd = augment_random(grid.node_count(), opt.augment_count, cfg.test_seed);
    return kernel_spectrum_report(s, rec, kry, rnd, out_dir, cfg.null_vectors);
}

} // namespace mdp
