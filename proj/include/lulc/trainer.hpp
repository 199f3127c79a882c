#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lulc/checkpoint.hpp"
#include "lulc/network.hpp"

namespace lulc {

enum class LrPolicy { fixed, step };

struct TrainConfig {
    double base_lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::int64_t iterations = 25000;
    int batch_size = 32;
    LrPolicy policy = LrPolicy::step;
    double gamma = 0.1;            // step policy decay factor
    std::int64_t step_size = 10000;  // iterations between decays
    std::uint64_t seed = 42;
    std::int64_t log_every = 10;
};

void validate_config(const TrainConfig& cfg);

/// Effective learning-rate multiplier of the schedule at an iteration.
inline double lr_at(const TrainConfig& cfg, std::int64_t iter) {
    if (cfg.policy == LrPolicy::fixed) return cfg.base_lr;
    return cfg.base_lr * std::pow(cfg.gamma, static_cast<double>(iter / cfg.step_size));
}

/// v <- momentum*v - effective_lr*(grad + weight_decay*blob); blob <- blob + v.
/// lr_mult == 0 is an exact freeze: blob and velocity are left untouched.
template <typename S>
void sgd_step(Tensor<S>& blob, const Tensor<S>& grad, Tensor<S>& velocity,
              const TrainConfig& cfg, double lr_mult, std::int64_t iter) {
    if (!blob.same_shape(grad) || !blob.same_shape(velocity))
        throw ShapeError("sgd_step shape mismatch: blob " + shape_str(blob.shape()) + ", grad " +
                         shape_str(grad.shape()) + ", velocity " + shape_str(velocity.shape()));
    if (lr_mult == 0.0) return;
    for (std::int64_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(static_cast<double>(grad[i])))
            throw DivergenceError("non-finite gradient at iteration " + std::to_string(iter),
                                  iter);
    const double lr = lr_at(cfg, iter) * lr_mult;
    for (std::int64_t i = 0; i < blob.size(); ++i) {
        const double v = cfg.momentum * static_cast<double>(velocity[i]) -
                         lr * (static_cast<double>(grad[i]) +
                               cfg.weight_decay * static_cast<double>(blob[i]));
        velocity[i] = static_cast<S>(v);
        blob[i] = static_cast<S>(static_cast<double>(blob[i]) + v);
    }
}

struct LabeledData {
    Tensor<float> images;  // [N,C,H,W]
    std::vector<int> labels;
};

struct TrainLogRow {
    std::int64_t iteration = 0;
    double loss = 0;
    double accuracy = 0;  // on the training batch
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogRow> log;
};

/// Runs forward / softmax-xent / backward / sgd_step for cfg.iterations.
/// Deterministic given (start, data, cfg): the per-epoch shuffle is seeded
/// from cfg.seed. meta.mean is carried into the returned checkpoint;
/// meta.iterations is advanced by cfg.iterations.
TrainResult train(const Network<float>& start, const LabeledData& data, const TrainConfig& cfg,
                  CheckpointMeta meta = {});

/// CSV: iteration,loss,train_accuracy
void write_training_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
    struct Entry {
        std::string blob;
        double max_rel_err = 0;
    };
    std::vector<Entry> entries;
    double tolerance = 0;

    bool ok() const {
        for (const auto& e : entries)
            if (!(e.max_rel_err < tolerance)) return false;
        return true;
    }
    std::vector<std::string> failing() const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (!(e.max_rel_err < tolerance)) out.push_back(e.blob);
        return out;
    }
};

/// Central differences at f64 on a per-blob parameter subsample, compared
/// against `analytic` with relative error |a-f| / max(|a|,|f|,1e-4).
GradCheckReport gradient_check_against(Network<double>& net, const Tensor<double>& batch,
                                       const std::vector<int>& labels,
                                       const GradMap<double>& analytic, double epsilon,
                                       double tolerance, int samples_per_blob,
                                       std::uint64_t seed);

/// Computes the analytic gradients itself, then compares.
GradCheckReport gradient_check(const Network<float>& net, const Tensor<float>& batch,
                               const std::vector<int>& labels, double epsilon = 1e-5,
                               double tolerance = 1e-5, int samples_per_blob = 50,
                               std::uint64_t seed = 0);

}  // namespace lulc
