#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mdp/coupled.hpp"
#include "mdp/dataset.hpp"
#include "mdp/neural_precond.hpp"
#include "mdp/training.hpp"

namespace mdp {

enum class Mode { reduced, coupled, train, spectrum, batch_bench };

enum class PrecondKind { none, ilu0, gmg, neural };

inline std::string to_string(Mode m)
{
    switch (m) {
    case Mode::reduced: return "reduced";
    case Mode::coupled: return "coupled";
    case Mode::train: return "train";
    case Mode::spectrum: return "spectrum";
    case Mode::batch_bench: return "batch-bench";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s)
{
    if (s == "reduced") return Mode::reduced;
    if (s == "coupled") return Mode::coupled;
    if (s == "train") return Mode::train;
    if (s == "spectrum") return Mode::spectrum;
    if (s == "batch-bench" || s == "batch_bench") return Mode::batch_bench;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

inline std::string to_string(PrecondKind k)
{
    switch (k) {
    case PrecondKind::none: return "none";
    case PrecondKind::ilu0: return "ilu0";
    case PrecondKind::gmg: return "gmg";
    case PrecondKind::neural: return "neural";
    }
    return "?";
}

inline PrecondKind precond_from_string(const std::string& s)
{
    if (s == "none") return PrecondKind::none;
    if (s == "ilu0" || s == "ilu") return PrecondKind::ilu0;
    if (s == "gmg") return PrecondKind::gmg;
    if (s == "neural") return PrecondKind::neural;
    throw std::invalid_argument("unknown preconditioner '" + s + "'");
}

inline CoupledPrecond coupled_from_string(const std::string& s)
{
    if (s == "none") return CoupledPrecond::none;
    if (s == "block") return CoupledPrecond::block;
    if (s == "exact") return CoupledPrecond::exact;
    throw std::invalid_argument("unknown coupled preconditioner '" + s + "'");
}

inline std::string to_string(CoupledPrecond k)
{
    switch (k) {
    case CoupledPrecond::none: return "none";
    case CoupledPrecond::block: return "block";
    case CoupledPrecond::exact: return "exact";
    }
    return "?";
}

struct PrecondSpec {
    PrecondKind kind = PrecondKind::none;
    int gmg_cycles = 10;
    std::string checkpoint;   ///< neural only
    bool smoothing = false;   ///< Jacobi pre/post-smoothing around the network
    SmoothingConfig smoother;
    bool use_distance = true; ///< false zeroes the distance channel

    std::string label() const
    {
        switch (kind) {
        case PrecondKind::gmg: return "gmg(" + std::to_string(gmg_cycles) + ")";
        case PrecondKind::neural:
            return std::string("neural") + (use_distance ? "" : "-nodist") +
                   (smoothing ? "+jacobi" + std::to_string(smoother.maxit) : "");
        default: return to_string(kind);
        }
    }
};

/// All run parameters of one experiment.
struct ExperimentConfig {
    Mode mode = Mode::reduced;
    int n = 13;
    PhysicalParams params;

    GraphFamily family = GraphFamily::with_branches(1, 30);
    int graph_count = 30;            ///< training graphs (train, gen-dataset)
    std::uint64_t graph_seed = 1;
    int test_count = 20;             ///< held-out graphs (bench, solve, spectrum)
    std::uint64_t test_seed = 900000;

    PrecondSpec precond;
    FgmresOptions fgmres{20, 1e-6, 1000};
    double rhs_tol = 1e-4;
    int repetitions = 3;             ///< timing repetitions; the median is reported
    int threads = 1;                 ///< concurrent runs in a sweep

    CoupledPrecond coupled = CoupledPrecond::block;
    int inner_steps = 3;
    FgmresOptions outer{20, 1e-15, 2000};

    Augmentation augmentation = Augmentation::random;
    double validation_fraction = 0.2;
    TrainConfig train;

    std::vector<int> batch_sizes{1, 5, 10, 20, 50, 100};
    int null_vectors = 3;

    std::string out = "out";

    DatasetOptions dataset_options() const
    {
        DatasetOptions o;
        o.n = n;
        o.params = params;
        o.augmentation = augmentation;
        o.rhs_tol = rhs_tol;
        o.validation_fraction = validation_fraction;
        return o;
    }

    TrainConfig train_config() const
    {
        TrainConfig t = train;
        t.augmentation = augmentation;
        t.use_distance = precond.use_distance;
        return t;
    }
};

/// Throws std::invalid_argument naming the first inconsistent field.
inline void validate(const ExperimentConfig& c)
{
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (c.n < 3) fail("n must be >= 3");
    c.params.validate();
    if (c.family.min_branches < 1 || c.family.max_branches < c.family.min_branches) fail("bad branch range");
    if (c.fgmres.restart < 1 || c.fgmres.maxit < 1 || !(c.fgmres.tol > 0.0)) fail("bad fgmres options");
    if (c.outer.restart < 1 || c.outer.maxit < 1) fail("bad outer fgmres options");
    if (c.repetitions < 1) fail("repetitions must be >= 1");
    if (c.threads < 1) fail("threads must be >= 1");
    if (c.inner_steps < 1) fail("inner_steps must be >= 1");
    if (c.precond.kind == PrecondKind::gmg && c.precond.gmg_cycles < 1) fail("gmg cycles must be >= 1");
    switch (c.mode) {
    case Mode::reduced:
    case Mode::coupled:
    case Mode::spectrum:
        if (c.test_count < 1) fail("test_count must be >= 1");
        break;
    case Mode::train:
        if (c.graph_count < 2) fail("training needs at least two graphs");
        if (c.train.epochs < 0 || c.train.batch_size < 1) fail("bad training options");
        break;
    case Mode::batch_bench:
        if (c.batch_sizes.empty()) fail("batch_sizes is empty");
        for (int b : c.batch_sizes) {
            if (b < 1) fail("batch sizes must be >= 1");
        }
        if (c.precond.kind != PrecondKind::neural) fail("batch-bench needs the neural preconditioner");
        break;
    }
    const bool needs_model = c.precond.kind == PrecondKind::neural &&
                             (c.mode == Mode::reduced || c.mode == Mode::coupled || c.mode == Mode::batch_bench);
    if (needs_model && !std::filesystem::exists(c.precond.checkpoint)) {
        fail("checkpoint '" + c.precond.checkpoint + "' does not exist");
    }
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& v)
{
    if (j.contains(key)) {
        v = j.at(key).get<T>();
    }
}

inline nlohmann::json fgmres_json(const FgmresOptions& o)
{
    return {{"k", o.restart}, {"tol", o.tol}, {"maxit", o.maxit}};
}

inline void fgmres_from(const nlohmann::json& j, FgmresOptions& o)
{
    get_if(j, "k", o.restart);
    get_if(j, "tol", o.tol);
    get_if(j, "maxit", o.maxit);
}

} // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["mode"] = to_string(c.mode);
    j["n"] = c.n;
    j["physics"] = {{"k_omega", c.params.k_omega},
                    {"sigma_omega", c.params.sigma_omega},
                    {"k_lambda", c.params.k_lambda},
                    {"epsilon", c.params.epsilon}};
    j["graphs"] = {{"min_branches", c.family.min_branches}, {"max_branches", c.family.max_branches},
                   {"count", c.graph_count},                {"seed", c.graph_seed},
                   {"test_count", c.test_count},            {"test_seed", c.test_seed}};
    j["precond"] = {{"kind", to_string(c.precond.kind)},
                    {"gmg_cycles", c.precond.gmg_cycles},
                    {"checkpoint", c.precond.checkpoint},
                    {"smoothing", c.precond.smoothing},
                    {"smoothing_maxit", c.precond.smoother.maxit},
                    {"smoothing_omega", c.precond.smoother.omega},
                    {"use_distance", c.precond.use_distance}};
    j["fgmres"] = detail::fgmres_json(c.fgmres);
    j["rhs_tol"] = c.rhs_tol;
    j["repetitions"] = c.repetitions;
    j["threads"] = c.threads;
    j["coupled"] = {{"kind", to_string(c.coupled)}, {"inner_steps", c.inner_steps},
                    {"outer", detail::fgmres_json(c.outer)}};
    j["train"] = {{"augmentation", to_string(c.augmentation)},
                  {"validation_fraction", c.validation_fraction},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"lr_decay", c.train.lr_decay},
                  {"alpha", c.train.alpha},
                  {"seed", c.train.seed}};
    j["batch_sizes"] = c.batch_sizes;
    j["null_vectors"] = c.null_vectors;
    j["out"] = c.out;
    return j;
}

/// Missing keys keep their defaults; unknown enum strings throw.
inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
    using detail::get_if;
    ExperimentConfig c;
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    get_if(j, "n", c.n);
    if (j.contains("physics")) {
        const auto& p = j.at("physics");
        get_if(p, "k_omega", c.params.k_omega);
        get_if(p, "sigma_omega", c.params.sigma_omega);
        get_if(p, "k_lambda", c.params.k_lambda);
        get_if(p, "epsilon", c.params.epsilon);
    }
    if (j.contains("graphs")) {
        const auto& g = j.at("graphs");
        get_if(g, "min_branches", c.family.min_branches);
        get_if(g, "max_branches", c.family.max_branches);
        get_if(g, "count", c.graph_count);
        get_if(g, "seed", c.graph_seed);
        get_if(g, "test_count", c.test_count);
        get_if(g, "test_seed", c.test_seed);
    }
    if (j.contains("precond")) {
        const auto& p = j.at("precond");
        if (p.contains("kind")) c.precond.kind = precond_from_string(p.at("kind").get<std::string>());
        get_if(p, "gmg_cycles", c.precond.gmg_cycles);
        get_if(p, "checkpoint", c.precond.checkpoint);
        get_if(p, "smoothing", c.precond.smoothing);
        get_if(p, "smoothing_maxit", c.precond.smoother.maxit);
        get_if(p, "smoothing_omega", c.precond.smoother.omega);
        get_if(p, "use_distance", c.precond.use_distance);
    }
    if (j.contains("fgmres")) detail::fgmres_from(j.at("fgmres"), c.fgmres);
    get_if(j, "rhs_tol", c.rhs_tol);
    get_if(j, "repetitions", c.repetitions);
    get_if(j, "threads", c.threads);
    if (j.contains("coupled")) {
        const auto& p = j.at("coupled");
        if (p.contains("kind")) c.coupled = coupled_from_string(p.at("kind").get<std::string>());
        get_if(p, "inner_steps", c.inner_steps);
        if (p.contains("outer")) detail::fgmres_from(p.at("outer"), c.outer);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("augmentation")) c.augmentation = augmentation_from_string(t.at("augmentation").get<std::string>());
        get_if(t, "validation_fraction", c.validation_fraction);
        get_if(t, "epochs", c.train.epochs);
        get_if(t, "batch_size", c.train.batch_size);
        get_if(t, "learning_rate", c.train.learning_rate);
        get_if(t, "lr_decay", c.train.lr_decay);
        get_if(t, "alpha", c.train.alpha);
        get_if(t, "seed", c.train.seed);
    }
    get_if(j, "batch_sizes", c.batch_sizes);
    get_if(j, "null_vectors", c.null_vectors);
    get_if(j, "out", c.out);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw Error("cannot open config '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        is >> j;
    }
    catch (const nlohmann::json::parse_error& e) {
        throw FormatError("config '" + path.string() + "': " + e.what());
    }
    return config_from_json(j);
}

} // namespace mdp
