// mdp: command-line front end for graph generation, training and benchmarks.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "mdp/harness.hpp"

namespace fs = std::filesystem;
using namespace mdp;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "graph seed override");
    sub->add_option("--out", c.out, "output directory override");
    sub->add_option("--checkpoint", c.checkpoint, "neural checkpoint override");
    sub->add_option("--threads", c.threads, "concurrent runs");
}

enum class SeedRole { training, testing };

ExperimentConfig resolve(const Common& c, Mode mode, SeedRole role)
{
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    cfg.mode = mode;
    if (c.seed) {
        if (role == SeedRole::training) {
            cfg.graph_seed = *c.seed;
            cfg.train.seed = *c.seed;
        }
        else {
            cfg.test_seed = *c.seed;
        }
    }
    if (!c.out.empty()) cfg.out = c.out;
    if (!c.checkpoint.empty()) {
        cfg.precond.checkpoint = c.checkpoint;
        cfg.precond.kind = PrecondKind::neural;
    }
    if (c.threads > 0) cfg.threads = c.threads;
    validate(cfg);
    fs::create_directories(cfg.out);
    write_text_file(fs::path(cfg.out) / "config.json", to_json(cfg).dump(2) + "\n");
    return cfg;
}

std::optional<NeuralModel> maybe_model(const ExperimentConfig& cfg)
{
    if (cfg.precond.kind != PrecondKind::neural) {
        return std::nullopt;
    }
    return load_model(cfg.precond.checkpoint);
}

void print_summary(const ReportTable& t)
{
    const Aggregate a = t.aggregate();
    std::printf("%-24s runs %d converged %d mean %.2f (+%.2f / -%.2f) time %.1f ms\n",
                t.rows.empty() ? "-" : t.rows.front().precond.c_str(), a.runs, a.converged, a.mean, a.delta_plus,
                a.delta_minus, a.mean_time_ms);
    for (const RunRow& r : t.rows) {
        if (!r.error.empty()) {
            std::fprintf(stderr, "  %s failed: %s\n", r.graph_id.c_str(), r.error.c_str());
        }
    }
}

int cmd_generate_graphs(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::train, SeedRole::training);
    const fs::path dir = fs::path(cfg.out) / "graphs";
    fs::create_directories(dir);
    const StructuredGrid grid(cfg.n);
    for (int i = 0; i < cfg.graph_count; ++i) {
        const std::uint64_t seed = cfg.graph_seed + static_cast<std::uint64_t>(i);
        const Graph1D g = generate_graph(cfg.family, seed);
        save_graph(g, dir / ("g" + std::to_string(seed) + ".json"));
        save_distance_field(distance_field(g, grid), dir / ("g" + std::to_string(seed) + ".dist"));
    }
    std::printf("wrote %d graphs to %s\n", cfg.graph_count, dir.c_str());
    return 0;
}

int cmd_gen_dataset(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::train, SeedRole::training);
    const auto graphs = make_graphs(cfg.family, cfg.graph_count, cfg.graph_seed);
    const Dataset d = build_dataset(graphs, cfg.dataset_options(), cfg.graph_seed);
    const fs::path dir = fs::path(cfg.out) / "dataset";
    save_dataset(d, dir, cfg.dataset_options());
    std::printf("dataset: %zu training graphs, %zu validation graphs, %zu samples -> %s\n", d.train.size(),
                d.validation.size(), d.sample_count(), dir.c_str());
    return 0;
}

int cmd_train(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::train, SeedRole::training);
    const TrainResult r = run_training(cfg, [](const EpochStats& e) {
        std::printf("epoch %3d lr %.3e train %.5f val %.5f (%.1f s)\n", e.epoch, e.learning_rate, e.train_loss,
                    e.validation_loss, e.seconds);
        std::fflush(stdout);
    });
    const fs::path ckpt = fs::path(cfg.out) / "model.mdu";
    save_model(model_from(r, cfg), ckpt);
    std::ostringstream h;
    write_history_csv(h, r.history);
    write_text_file(fs::path(cfg.out) / "history.csv", h.str());
    std::printf("alpha %.6g  risk %.5f -> %.5f  checkpoint %s\n", r.alpha, r.initial_train_risk, r.final_train_risk,
                ckpt.c_str());
    return 0;
}

int cmd_solve(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::reduced, SeedRole::testing);
    const auto model = maybe_model(cfg);
    const ReportTable t = run_reduced_benchmark(cfg, model ? &*model : nullptr);
    save_report(t, fs::path(cfg.out) / "report.csv");
    print_summary(t);
    return 0;
}

int cmd_solve_coupled(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::coupled, SeedRole::testing);
    const auto model = maybe_model(cfg);
    const ReportTable t = run_coupled_benchmark(cfg, model ? &*model : nullptr);
    save_report(t, fs::path(cfg.out) / "coupled.csv");
    print_summary(t);
    return 0;
}

/// none, ilu0, gmg and (with a checkpoint) the neural variants on one graph set.
int cmd_bench(const Common& c)
{
    const ExperimentConfig base = resolve(c, Mode::reduced, SeedRole::testing);
    const auto model = maybe_model(base);
    std::vector<PrecondSpec> specs(3);
    specs[1].kind = PrecondKind::ilu0;
    specs[2].kind = PrecondKind::gmg;
    specs[2].gmg_cycles = base.precond.gmg_cycles;
    if (model) {
        PrecondSpec nn = base.precond;
        nn.smoothing = false;
        specs.push_back(nn);
        if (model->alpha > 0.0) {
            nn.smoothing = true;
            specs.push_back(nn);
        }
    }
    std::ostringstream summary;
    summary << "precond,runs,converged,mean_iterations,delta_plus,delta_minus,mean_time_ms,mean_time_per_iter_ms\n";
    for (const PrecondSpec& s : specs) {
        ExperimentConfig cfg = base;
        cfg.precond = s;
        const ReportTable t = run_reduced_benchmark(cfg, model ? &*model : nullptr);
        std::string name = s.label();
        for (char& ch : name) {
            if (ch == '(' || ch == ')' || ch == '+') ch = '_';
        }
        save_report(t, fs::path(cfg.out) / ("bench_" + name + ".csv"));
        std::ostringstream one;
        t.write_summary(one);
        summary << one.str().substr(one.str().find('\n') + 1);
        print_summary(t);
    }
    write_text_file(fs::path(base.out) / "bench_summary.csv", summary.str());
    return 0;
}

int cmd_spectrum(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::spectrum, SeedRole::testing);
    const fs::path dir = fs::path(cfg.out) / "spectrum";
    const SpectrumReport rep = run_spectrum(cfg, dir);
    for (const auto& col : rep.columns) {
        std::printf("%-14s", col.name.c_str());
        for (double e : col.stats.energy_fraction) {
            std::printf(" %.4f", e);
        }
        std::printf("  cv %.3f\n", col.stats.flatness_cv());
    }
    std::printf("wrote %zu files to %s\n", rep.files.size(), dir.c_str());
    return 0;
}

int cmd_batch_bench(const Common& c)
{
    const ExperimentConfig cfg = resolve(c, Mode::batch_bench, SeedRole::testing);
    const NeuralModel model = load_model(cfg.precond.checkpoint);
    const auto rows = run_batch_bench(cfg, model);
    std::ostringstream os;
    write_batch_csv(os, rows);
    write_text_file(fs::path(cfg.out) / "batch_bench.csv", os.str());
    std::cout << os.str();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"mixed-dimensional preconditioner benchmarks"};
    app.require_subcommand(1);
    Common common;
    struct Entry {
        const char* name;
        const char* help;
        int (*run)(const Common&);
    };
    const Entry entries[] = {
        {"generate-graphs", "write random graphs and distance fields", cmd_generate_graphs},
        {"gen-dataset", "assemble and store a training dataset", cmd_gen_dataset},
        {"train", "train the U-Net preconditioner", cmd_train},
        {"solve", "reduced 3D solves with the configured preconditioner", cmd_solve},
        {"solve-coupled", "coupled 3D-1D solves with the block preconditioner", cmd_solve_coupled},
        {"bench", "compare none, ILU(0), GMG and neural preconditioners", cmd_bench},
        {"spectrum", "frequency content of kernels, rhs and augmentation sets", cmd_spectrum},
        {"batch-bench", "serial vs batched network application timing", cmd_batch_bench},
    };
    std::vector<std::pair<CLI::App*, const Entry*>> subs;
    for (const Entry& e : entries) {
        CLI::App* s = app.add_subcommand(e.name, e.help);
        add_common(s, common);
        subs.emplace_back(s, &e);
    }
    CLI11_PARSE(app, argc, argv);
    try {
        for (auto& [s, e] : subs) {
            if (s->parsed()) {
                return e->run(common);
            }
        }
    }
    catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 1;
}
