#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "synnet/data.hpp"
#include "synnet/loss.hpp"
#include "synnet/metrics.hpp"
#include "synnet/model.hpp"

namespace synnet {

/// Momentum SGD state: velocity mirrors the parameter set.
template <typename T>
struct OptimState {
    ParamSet<T> velocity;
    std::uint64_t iteration = 0;
    std::uint64_t epoch = 0;  // completed epochs
    double lr = 0.01;
    double momentum = 0.9;

    static OptimState for_params(const ParamSet<T>& params, double lr = 0.01, double momentum = 0.9) {
        OptimState s;
        s.velocity = params.zeros_like();
        s.lr = lr;
        s.momentum = momentum;
        return s;
    }
};

/// v <- momentum * v + lr * g;  theta <- theta - v. Batchnorm running
/// statistics are not touched.
template <typename T>
void sgd_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimState<T>& state) {
    if (!params.same_layout(grads) || !params.same_layout(state.velocity)) {
        throw UsageError("sgd_step: parameters, gradients and velocity disagree in layout");
    }
    const T rho = static_cast<T>(state.momentum);
    const T gamma = static_cast<T>(state.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!is_learnable(params.entries()[i].kind)) continue;
        Tensor<T>& theta = params[i];
        Tensor<T>& v = state.velocity[i];
        const Tensor<T>& g = grads[i];
        for (std::size_t j = 0; j < theta.size(); ++j) {
            v[j] = rho * v[j] + gamma * g[j];
            theta[j] -= v[j];
        }
    }
    ++state.iteration;
}

enum class LossKind { L2, WeightedL2, Joint };

inline std::string to_string(LossKind k) {
    switch (k) {
    case LossKind::L2: return "l2";
    case LossKind::WeightedL2: return "weighted_l2";
    case LossKind::Joint: return "joint";
    }
    return "?";
}

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 42;
    LossKind loss = LossKind::Joint;
    LossWeights lambda;
    SsimConfig ssim;
    double edge_beta = 4.0;
    double tv_eps = 1e-8;
    double lr = 0.01;
    double momentum = 0.9;
    bool shuffle = true;
    bool augment = true;
    double train_fraction = 0.8;
    std::vector<std::string> input_modalities{"t1"};
    std::vector<std::string> output_modalities{"t2"};

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
        lambda.validate();
    }

    /// Lambdas actually applied for the selected loss.
    LossWeights effective_lambda() const {
        LossWeights l = lambda;
        if (loss != LossKind::Joint) {
            l.ssim = 0.0;
            l.tv = 0.0;
        }
        return l;
    }

    bool weighted() const { return loss != LossKind::L2; }
};

struct HistoryRow {
    std::uint64_t iter = 0;
    std::uint64_t epoch = 0;
    double l2 = 0, ssim = 0, tv = 0, wd = 0, total = 0;
};

inline std::string history_csv_header() { return "iter,epoch,l2,ssim,tv,wd,total"; }

inline std::string history_csv_row(const HistoryRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%llu,%.17g,%.17g,%.17g,%.17g,%.17g", static_cast<unsigned long long>(r.iter),
                  static_cast<unsigned long long>(r.epoch), r.l2, r.ssim, r.tv, r.wd, r.total);
    return buf;
}

inline std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t epoch) { return RngStream::derive(seed, epoch); }
inline std::uint64_t init_seed(std::uint64_t seed) { return RngStream::derive(seed, ~std::uint64_t{0}); }

/// Loss, gradients and one SGD update for a single mini-batch.
template <typename T>
HistoryRow train_step(const SynNetModel& model, ParamSet<T>& params, OptimState<T>& state, const Batch<T>& batch,
                      const TrainConfig& cfg) {
    const std::size_t div = model.topology.spatial_divisor();
    std::vector<Tensor<T>> inputs;
    CropRecord rec;
    for (const auto& x : batch.inputs) {
        auto [padded, r] = pad_to_multiple(x, div);
        inputs.push_back(std::move(padded));
        rec = r;
    }
    ForwardTrace<T> trace = forward<T>(model, params, inputs, Mode::Train);
    std::vector<Tensor<T>> preds;
    for (const auto& p : trace.predictions) preds.push_back(crop_back(p, rec));
    if (preds.size() != batch.targets.size()) {
        throw UsageError("topology emits " + std::to_string(preds.size()) + " heads but " +
                         std::to_string(batch.targets.size()) + " target modalities were given");
    }
    std::vector<WeightMap<T>> maps;
    if (cfg.weighted()) {
        for (const auto& t : batch.targets) maps.push_back(edge_weight_map(t, cfg.edge_beta));
    }
    const LossWeights lambda = cfg.effective_lambda();
    LossReport<T> rep = joint_loss<T>(preds, batch.targets, params, lambda, cfg.ssim, maps, cfg.tv_eps);
    if (!std::isfinite(rep.total)) {
        throw DivergenceError("total loss became non-finite at iteration " + std::to_string(state.iteration + 1));
    }
    std::vector<Tensor<T>> gpred;
    for (const auto& g : rep.grads) gpred.push_back(uncrop(g, rec));
    ParamSet<T> grads = backward<T>(model, params, trace, gpred);
    const T wd = static_cast<T>(lambda.wd);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (params.entries()[i].kind != ParamKind::ConvWeight) continue;
        Tensor<T>& g = grads[i];
        const Tensor<T>& d = rep.wd_grad[i];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += wd * d[j];
    }
    sgd_step(params, grads, state);
    return HistoryRow{state.iteration, state.epoch, rep.l2, rep.ssim, rep.tv, rep.wd, rep.total};
}

/// Runs epochs state.epoch .. cfg.epochs-1 over the given sample indices.
/// Deterministic in (initial params, dataset, cfg.seed).
template <typename T>
std::vector<HistoryRow> train(const SynNetModel& model, ParamSet<T>& params, OptimState<T>& state, const Dataset<T>& ds,
                              std::span<const std::size_t> indices, const TrainConfig& cfg,
                              const std::function<void(const HistoryRow&)>& on_row = {}) {
    cfg.validate();
    if (indices.empty()) throw UsageError("training set is empty");
    if (cfg.input_modalities.size() != model.topology.in_arms() ||
        cfg.output_modalities.size() != model.topology.out_arms()) {
        throw ConfigError("topology " + to_string(model.topology.kind) + " needs " +
                          std::to_string(model.topology.in_arms()) + " input and " +
                          std::to_string(model.topology.out_arms()) + " output modalities");
    }
    state.lr = cfg.lr;
    state.momentum = cfg.momentum;
    BatchOptions bo{cfg.input_modalities, cfg.output_modalities, cfg.batch_size, cfg.shuffle, cfg.augment};
    std::vector<HistoryRow> history;
    for (; state.epoch < cfg.epochs;) {
        const auto list = batches(ds, indices, bo, epoch_seed(cfg.seed, state.epoch));
        for (const auto& b : list) {
            HistoryRow row = train_step(model, params, state, b, cfg);
            if (on_row) on_row(row);
            history.push_back(row);
        }
        ++state.epoch;
    }
    return history;
}

template <typename T>
std::vector<HistoryRow> train(const SynNetModel& model, ParamSet<T>& params, OptimState<T>& state, const Dataset<T>& ds,
                              const TrainConfig& cfg) {
    const Split split = split_indices(ds.samples.size(), cfg.train_fraction);
    return train(model, params, state, ds, std::span<const std::size_t>(split.train), cfg);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string sample_id;
    std::size_t head = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

/// Infer-mode predictions for one sample, cropped back to its size.
template <typename T>
std::vector<Tensor<T>> predict_sample(const SynNetModel& model, const ParamSet<T>& params,
                                      std::span<const Tensor<T>> inputs) {
    std::vector<Tensor<T>> padded;
    CropRecord rec;
    for (const auto& x : inputs) {
        auto [p, r] = pad_to_multiple(x, model.topology.spatial_divisor());
        padded.push_back(std::move(p));
        rec = r;
    }
    std::vector<Tensor<T>> out;
    for (const auto& p : predict<T>(model, params, padded)) out.push_back(crop_back(p, rec));
    return out;
}

/// PSNR and standard SSIM per sample and head.
template <typename T>
std::vector<EvalRow> evaluate(const SynNetModel& model, const ParamSet<T>& params, const Dataset<T>& ds,
                              std::span<const std::size_t> indices, const std::vector<std::string>& input_modalities,
                              const std::vector<std::string>& output_modalities, const StandardSsimOptions& ssim = {}) {
    if (input_modalities.size() != model.topology.in_arms() || output_modalities.size() != model.topology.out_arms()) {
        throw ConfigError("modalities do not match topology " + to_string(model.topology.kind));
    }
    std::vector<EvalRow> rows;
    for (std::size_t idx : indices) {
        const auto& s = ds.samples.at(idx);
        std::vector<Tensor<T>> inputs;
        for (const auto& m : input_modalities) inputs.push_back(s.at(m));
        const auto preds = predict_sample<T>(model, params, inputs);
        for (std::size_t h = 0; h < preds.size(); ++h) {
            const Tensor<T>& target = s.at(output_modalities[h]);
            rows.push_back({s.id, h, psnr(preds[h], target), ssim_standard(preds[h], target, ssim)});
        }
    }
    return rows;
}

struct EvalSummary {
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

inline EvalSummary summarize(const std::vector<EvalRow>& rows) {
    EvalSummary s;
    if (rows.empty()) return s;
    for (const auto& r : rows) {
        s.mean_psnr += r.psnr_db;
        s.mean_ssim += r.ssim;
    }
    s.mean_psnr /= static_cast<double>(rows.size());
    s.mean_ssim /= static_cast<double>(rows.size());
    return s;
}

} // namespace synnet
