#include "lulc/trainer.hpp"

#include <cstring>
#include <fstream>

#include "lulc/image.hpp"
#include "lulc/rng.hpp"
#include "lulc/text.hpp"

namespace lulc {

void validate_config(const TrainConfig& cfg) {
    if (cfg.base_lr <= 0) throw ParamError("base_lr must be positive");
    if (cfg.momentum < 0 || cfg.momentum >= 1) throw ParamError("momentum must be in [0,1)");
    if (cfg.weight_decay < 0) throw ParamError("weight_decay must be non-negative");
    if (cfg.iterations < 0) throw ParamError("iterations must be non-negative");
    if (cfg.batch_size < 1) throw ParamError("batch_size must be >= 1");
    if (cfg.policy == LrPolicy::step && (cfg.gamma <= 0 || cfg.step_size < 1))
        throw ParamError("step policy needs gamma > 0 and step_size >= 1");
    if (cfg.log_every < 1) throw ParamError("log_every must be >= 1");
}

namespace {

double batch_accuracy(const Tensor<float>& probs, const std::vector<int>& labels) {
    const int n = probs.dim(0), k = probs.dim(1);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        int arg = 0;
        for (int j = 1; j < k; ++j)
            if (probs(i, j) > probs(i, arg)) arg = j;
        hits += arg == labels[static_cast<std::size_t>(i)];
    }
    return static_cast<double>(hits) / n;
}

}  // namespace

TrainResult train(const Network<float>& start, const LabeledData& data, const TrainConfig& cfg,
                  CheckpointMeta meta) {
    validate_config(cfg);
    validate_spec(start.spec);
    const int n = data.images.dim(0);
    if (static_cast<int>(data.labels.size()) != n)
        throw ShapeError("train: " + std::to_string(data.labels.size()) + " labels for " +
                         std::to_string(n) + " images");
    for (int label : data.labels)
        if (label < 0 || label >= start.spec.num_classes)
            throw LabelError("train: label " + std::to_string(label) + " out of range [0, " +
                             std::to_string(start.spec.num_classes) + ")");

    Network<float> net = start;
    auto units = learnable_units(net.spec);
    std::map<std::string, float> lr_mult;
    std::map<std::string, Tensor<float>> velocity;
    for (const auto& u : units) {
        lr_mult[u.name + ".weights"] = u.lr_mult;
        lr_mult[u.name + ".bias"] = u.lr_mult;
        velocity.emplace(u.name + ".weights", Tensor<float>(u.weight_shape));
        velocity.emplace(u.name + ".bias", Tensor<float>({u.bias_len}));
    }

    const int c = net.spec.input_shape[0], h = net.spec.input_shape[1],
              w = net.spec.input_shape[2];
    const std::int64_t sample_len = static_cast<std::int64_t>(c) * h * w;
    const int bs = std::min<int>(cfg.batch_size, n);

    Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle"));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    int pos = n;  // forces a shuffle before the first batch

    TrainResult result;
    Tensor<float> batch({bs, c, h, w});
    std::vector<int> batch_labels(static_cast<std::size_t>(bs));
    for (std::int64_t iter = 0; iter < cfg.iterations; ++iter) {
        if (pos + bs > n) {
            shuffle_rng.shuffle(order);
            pos = 0;
        }
        for (int b = 0; b < bs; ++b) {
            const int src = order[static_cast<std::size_t>(pos + b)];
            std::memcpy(batch.data() + b * sample_len, data.images.data() + src * sample_len,
                        static_cast<std::size_t>(sample_len) * sizeof(float));
            batch_labels[static_cast<std::size_t>(b)] = data.labels[static_cast<std::size_t>(src)];
        }
        pos += bs;

        auto trace = forward_trace(net, batch);
        auto sm = softmax_xent(trace.logits(), batch_labels);
        if (!std::isfinite(sm.loss))
            throw DivergenceError("training diverged (non-finite loss); last good iteration " +
                                      std::to_string(iter),
                                  iter);
        auto grads = backward(net, trace, sm.grad_logits);
        for (auto& [name, grad] : grads)
            sgd_step(net.blobs.at(name), grad, velocity.at(name), cfg, lr_mult.at(name), iter);

        if ((iter + 1) % cfg.log_every == 0 || iter + 1 == cfg.iterations)
            result.log.push_back({iter + 1, sm.loss, batch_accuracy(sm.probs, batch_labels)});
    }

    meta.iterations += cfg.iterations;
    result.checkpoint = make_checkpoint(net, meta);
    return result;
}

void write_training_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
    std::string csv = "iteration,loss,train_accuracy\n";
    for (const auto& row : log)
        csv += std::to_string(row.iteration) + "," + fmt(row.loss) + "," + fmt(row.accuracy) +
               "\n";
    atomic_write_file(path, csv);
}

GradCheckReport gradient_check_against(Network<double>& net, const Tensor<double>& batch,
                                       const std::vector<int>& labels,
                                       const GradMap<double>& analytic, double epsilon,
                                       double tolerance, int samples_per_blob,
                                       std::uint64_t seed) {
    GradCheckReport report;
    report.tolerance = tolerance;
    auto loss = [&] { return softmax_xent(forward(net, batch), labels).loss; };
    for (const auto& [name, grad] : analytic) {
        Tensor<double>& blob = net.blobs.at(name);
        Rng rng(derive_seed(seed, "gradcheck." + name));
        double worst = 0;
        const std::int64_t size = blob.size();
        for (int s = 0; s < samples_per_blob; ++s) {
            std::int64_t i;
            if (size <= samples_per_blob) {
                if (s >= size) break;
                i = s;
            } else {
                i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(size)));
            }
            const double v = blob[i];
            blob[i] = v + epsilon;
            const double up = loss();
            blob[i] = v - epsilon;
            const double dn = loss();
            blob[i] = v;
            const double fd = (up - dn) / (2 * epsilon);
            const double a = grad[i];
            const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
            worst = std::max(worst, err);
        }
        report.entries.push_back({name, worst});
    }
    return report;
}

GradCheckReport gradient_check(const Network<float>& net, const Tensor<float>& batch,
                               const std::vector<int>& labels, double epsilon, double tolerance,
                               int samples_per_blob, std::uint64_t seed) {
    auto net64 = cast_network<double>(net);
    auto batch64 = batch.cast<double>();
    auto trace = forward_trace(net64, batch64);
    auto sm = softmax_xent(trace.logits(), labels);
    auto grads = backward(net64, trace, sm.grad_logits);
    return gradient_check_against(net64, batch64, labels, grads, epsilon, tolerance,
                                  samples_per_blob, seed);
}

}  // namespace lulc
