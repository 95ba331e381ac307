#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mdp/dataset.hpp"
#include "mdp/unet.hpp"

namespace mdp {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 5;
    double learning_rate = 1e-3;
    double lr_decay = 0.97;  ///< multiplied into the learning rate after every epoch
    double alpha = 0.0;      ///< <= 0: computed from the training graphs
    /// Which augmentation samples to use besides the physics sample.
    Augmentation augmentation = Augmentation::random;
    bool use_distance = true;
    std::uint64_t seed = 1;  ///< initialization and shuffling
};

struct EpochStats {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;      ///< mean of the batch losses seen during the epoch
    double validation_loss = 0.0; ///< risk on the validation graphs after the epoch
    double seconds = 0.0;
};

struct TrainResult {
    UNetParams params;
    double alpha = 0.0;
    double initial_train_risk = 0.0;
    double final_train_risk = 0.0;
    double initial_validation_risk = 0.0;
    std::vector<EpochStats> history;
};

/// Mean over graphs of ||diag C||_2 / sqrt(N_h).
inline double compute_alpha(const std::vector<GraphRecord>& graphs)
{
    if (graphs.empty()) {
        throw std::invalid_argument("compute_alpha: no graphs");
    }
    double s = 0.0;
    for (const auto& g : graphs) {
        s += norm2(g.C.diagonal()) / std::sqrt(static_cast<double>(g.C.rows));
    }
    return s / static_cast<double>(graphs.size());
}

/// Samples of a record that take part in training under `mode`.
inline std::vector<int> active_samples(const GraphRecord& g, Augmentation mode)
{
    std::vector<int> out;
    for (int s = 0; s < static_cast<int>(g.samples.size()); ++s) {
        const SampleTag t = g.samples[s].tag;
        if (t == SampleTag::physics || (mode == Augmentation::krylov && t == SampleTag::krylov) ||
            (mode == Augmentation::random && t == SampleTag::random)) {
            out.push_back(s);
        }
    }
    return out;
}

/// One (v, d) pair of a batch and its risk weight 1/N_Kj.
struct SampleRef {
    int graph = 0;
    int sample = 0;
    double weight = 1.0;
};

namespace detail {

inline Tensor4 batch_input(const std::vector<GraphRecord>& graphs, const std::vector<SampleRef>& refs, bool use_distance)
{
    const int n = graphs[refs.front().graph].dfield.grid.n();
    Tensor4 x(2, Shape3{n, n, n}, static_cast<int>(refs.size()));
    for (std::size_t b = 0; b < refs.size(); ++b) {
        const GraphRecord& g = graphs[refs[b].graph];
        const Vector& v = g.samples[refs[b].sample].v;
        require_dims(v.size() == x.spatial() && g.dfield.values.size() == x.spatial(),
                     "training: sample size does not match the grid");
        std::copy(v.begin(), v.end(), x.slice(0, static_cast<int>(b)));
        if (use_distance) {
            std::copy(g.dfield.values.begin(), g.dfield.values.end(), x.slice(1, static_cast<int>(b)));
        }
    }
    return x;
}

/// r_b = v_b - alpha^{-1} C y_b for each sample of the batch.
inline std::vector<Vector> batch_residuals(const std::vector<GraphRecord>& graphs, const std::vector<SampleRef>& refs,
                                           const Tensor4& y, double alpha)
{
    std::vector<Vector> r;
    for (std::size_t b = 0; b < refs.size(); ++b) {
        const GraphRecord& g = graphs[refs[b].graph];
        const double* yb = y.slice(0, static_cast<int>(b));
        Vector cy(g.C.rows);
        spmv(g.C, yb, cy.data());
        Vector rb = g.samples[refs[b].sample].v;
        axpy(-1.0 / alpha, cy, rb);
        r.push_back(std::move(rb));
    }
    return r;
}

} // namespace detail

/// Batch loss sum_b w_b ||v_b - alpha^{-1} C U(v_b, d_b)||^2 / sum_b w_b.
/// When g is non-null the parameter gradient is accumulated into it.
inline double batch_loss(const UNetParams& p, const std::vector<GraphRecord>& graphs, const std::vector<SampleRef>& refs,
                         double alpha, bool use_distance, GradStore* g = nullptr)
{
    detail::require_dims(!refs.empty(), "batch_loss: empty batch");
    UNetCache cache;
    const Tensor4 y = unet_forward(p, detail::batch_input(graphs, refs, use_distance), g ? &cache : nullptr);
    const std::vector<Vector> r = detail::batch_residuals(graphs, refs, y, alpha);
    double wsum = 0.0, loss = 0.0;
    for (std::size_t b = 0; b < refs.size(); ++b) {
        wsum += refs[b].weight;
        loss += refs[b].weight * dot(r[b], r[b]);
    }
    loss /= wsum;
    if (g && std::isfinite(loss)) {
        Tensor4 dy(1, y.s, y.batch);
        for (std::size_t b = 0; b < refs.size(); ++b) {
            const double c = -2.0 * refs[b].weight / wsum / alpha;
            const Vector ctr = spmv_transpose(graphs[refs[b].graph].C, r[b]);
            double* d = dy.slice(0, static_cast<int>(b));
            for (std::size_t i = 0; i < ctr.size(); ++i) {
                d[i] = c * ctr[i];
            }
        }
        unet_backward(p, cache, dy, *g);
    }
    return loss;
}

/// Empirical risk (1/N_P) sum_j (1/N_Kj) sum_{v in K_j} ||v - alpha^{-1} C_j U(v, d_j)||^2.
inline double risk(const UNetParams& p, const std::vector<GraphRecord>& graphs, double alpha,
                   Augmentation mode = Augmentation::random, bool use_distance = true, int batch_size = 5)
{
    if (graphs.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (int j = 0; j < static_cast<int>(graphs.size()); ++j) {
        const std::vector<int> act = active_samples(graphs[j], mode);
        double gsum = 0.0;
        for (std::size_t s0 = 0; s0 < act.size(); s0 += batch_size) {
            std::vector<SampleRef> refs;
            for (std::size_t s = s0; s < std::min(act.size(), s0 + batch_size); ++s) {
                refs.push_back({j, act[s], 1.0});
            }
            const Tensor4 y = unet_forward(p, detail::batch_input(graphs, refs, use_distance));
            for (const Vector& r : detail::batch_residuals(graphs, refs, y, alpha)) {
                gsum += dot(r, r);
            }
        }
        total += gsum / static_cast<double>(act.size());
    }
    return total / static_cast<double>(graphs.size());
}

/// Adam on the weighted batch loss sum_b w_b ||r_b||^2 / sum_b w_b, w_b = 1/N_Kj.
inline TrainResult train(const Dataset& data, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = {})
{
    if (data.train.empty()) {
        throw std::invalid_argument("train: empty training set");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 0) {
        throw std::invalid_argument("train: batch_size must be >= 1 and epochs >= 0");
    }
    TrainResult res;
    res.alpha = cfg.alpha > 0.0 ? cfg.alpha : compute_alpha(data.train);
    res.params = init_unet(cfg.seed);
    const double alpha = res.alpha;
    auto train_risk = [&] { return risk(res.params, data.train, alpha, cfg.augmentation, cfg.use_distance); };
    auto val_risk = [&] {
        return risk(res.params, data.validation, alpha, cfg.augmentation, cfg.use_distance);
    };
    res.initial_train_risk = train_risk();
    res.initial_validation_risk = val_risk();
    if (cfg.epochs == 0) {
        res.final_train_risk = res.initial_train_risk;
        return res;
    }

    std::vector<SampleRef> order;
    for (int j = 0; j < static_cast<int>(data.train.size()); ++j) {
        const auto act = active_samples(data.train[j], cfg.augmentation);
        for (int s : act) {
            order.push_back({j, s, 1.0 / static_cast<double>(act.size())});
        }
    }

    std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
    GradStore g(res.params);
    AdamOptions adam;
    adam.lr = cfg.learning_rate;
    long batch_id = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch_id) {
            const auto first = order.begin() + static_cast<std::ptrdiff_t>(b0);
            const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b0 + cfg.batch_size));
            const std::vector<SampleRef> refs(first, last);
            g.zero_grad();
            const double loss = batch_loss(res.params, data.train, refs, alpha, cfg.use_distance, &g);
            if (!std::isfinite(loss)) {
                throw NumericalError("train: non-finite loss in batch " + std::to_string(batch_id) + " (epoch " +
                                     std::to_string(epoch) + ")");
            }
            adam_step(res.params, g, adam);
            loss_sum += loss;
            ++batches;
        }
        EpochStats st;
        st.epoch = epoch;
        st.learning_rate = adam.lr;
        st.train_loss = loss_sum / batches;
        st.validation_loss = val_risk();
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.history.push_back(st);
        if (on_epoch) {
            on_epoch(st);
        }
        adam.lr *= cfg.lr_decay;
    }
    res.final_train_risk = train_risk();
    return res;
}

} // namespace mdp
