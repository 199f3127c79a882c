#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lulc/layers.hpp"
#include "lulc/rng.hpp"
#include "lulc/tensor.hpp"

namespace lulc {

enum class LayerKind { conv, pool, lrn, fc, inception };

std::string layer_kind_name(LayerKind k);

/// Output channel widths of the four inception branches (and the two
/// 1x1 reductions feeding the 3x3 and 5x5 paths).
struct InceptionChannels {
    int b1 = 0;
    int b3_reduce = 0;
    int b3 = 0;
    int b5_reduce = 0;
    int b5 = 0;
    int pool_proj = 0;
};

struct LayerDesc {
    std::string name;
    LayerKind kind = LayerKind::conv;
    int out_channels = 0;          // conv
    Size2 kernel{1, 1};            // conv kernel / pool window
    Size2 stride{1, 1};
    Size2 pad{0, 0};
    Activation act = Activation::none;  // conv, fc
    float lr_mult = 1.0f;               // conv, fc, inception
    LrnParams lrn{};                    // lrn
    int units = 0;                      // fc
    InceptionChannels inception{};      // inception
};

LayerDesc conv_layer(std::string name, int out_channels, Size2 kernel, Size2 stride, Size2 pad,
                     Activation act = Activation::relu, float lr_mult = 1.0f);
LayerDesc pool_layer(std::string name, Size2 window, Size2 stride, Size2 pad = {0, 0});
LayerDesc lrn_layer(std::string name, LrnParams p = {});
LayerDesc fc_layer(std::string name, int units, Activation act = Activation::none,
                   float lr_mult = 1.0f);
LayerDesc inception_layer(std::string name, InceptionChannels ch, float lr_mult = 1.0f);

/// Declarative layer graph. Layers run in order; the final layer must be
/// fully connected with units == num_classes.
struct NetworkSpec {
    std::vector<LayerDesc> layers;
    std::array<int, 3> input_shape{0, 0, 0};  // C,H,W
    int num_classes = 0;
};

/// Per-layer output shapes as {C,H,W}; fully-connected outputs are {U,1,1}.
struct ShapeFlow {
    std::vector<std::array<int, 3>> out_shapes;
    std::vector<bool> flat;  // true once the flow has passed a fully-connected layer
};

/// Validates names, chain compatibility, and the classifier head.
/// Throws BuildError naming the offending layer (pair) otherwise.
ShapeFlow validate_spec(const NetworkSpec& spec);

/// One weights+bias blob pair. conv/fc layers own one unit; an inception
/// layer expands into six (name.b1, name.b3r, name.b3, name.b5r, name.b5,
/// name.bp).
struct LearnableUnit {
    std::string name;
    std::vector<int> weight_shape;
    int bias_len = 0;
    float lr_mult = 1.0f;
};

std::vector<LearnableUnit> learnable_units(const NetworkSpec& spec);

template <typename S>
struct Network {
    NetworkSpec spec;
    std::map<std::string, Tensor<S>> blobs;  // "<unit>.weights" / "<unit>.bias"
};

/// Fills one unit's blobs: weights uniform in [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)), biases zero. The stream is derived
/// from (seed, unit name), so initialization is order-independent.
void init_unit(Network<float>& net, const LearnableUnit& unit, std::uint64_t seed,
               std::string_view stream_prefix = "");

Network<float> build_network(const NetworkSpec& spec, std::uint64_t init_seed);

template <typename S>
struct ForwardTrace {
    Tensor<S> input;
    std::vector<Tensor<S>> pre_act;   // layer output before activation
    std::vector<Tensor<S>> post;      // layer output after activation (next layer's input)
    std::map<int, PoolResult<S>> pools;
    std::map<int, InceptionTrace<S>> inceptions;
    const Tensor<S>& logits() const { return post.back(); }
};

template <typename S>
using GradMap = std::map<std::string, Tensor<S>>;

namespace detail {

template <typename S>
const Tensor<S>& unit_weights(const Network<S>& net, const std::string& unit) {
    auto it = net.blobs.find(unit + ".weights");
    if (it == net.blobs.end()) throw LookupError("missing blob " + unit + ".weights");
    return it->second;
}

template <typename S>
const Tensor<S>& unit_bias(const Network<S>& net, const std::string& unit) {
    auto it = net.blobs.find(unit + ".bias");
    if (it == net.blobs.end()) throw LookupError("missing blob " + unit + ".bias");
    return it->second;
}

template <typename S>
LayerParams<S> unit_params(const Network<S>& net, const std::string& unit, float lr_mult) {
    return LayerParams<S>{unit_weights(net, unit), unit_bias(net, unit), lr_mult};
}

template <typename S>
InceptionParams<S> inception_params(const Network<S>& net, const LayerDesc& d) {
    InceptionParams<S> p;
    p.b1 = unit_params(net, d.name + ".b1", d.lr_mult);
    p.b3_reduce = unit_params(net, d.name + ".b3r", d.lr_mult);
    p.b3 = unit_params(net, d.name + ".b3", d.lr_mult);
    p.b5_reduce = unit_params(net, d.name + ".b5r", d.lr_mult);
    p.b5 = unit_params(net, d.name + ".b5", d.lr_mult);
    p.pool_proj = unit_params(net, d.name + ".bp", d.lr_mult);
    return p;
}

/// Flattens an NCHW tensor to [N, C*H*W]; rank-2 tensors pass through.
template <typename S>
Tensor<S> flatten_rows(const Tensor<S>& t) {
    if (t.rank() == 2) return t;
    if (t.rank() == 4) return t.reshaped({t.dim(0), t.dim(1) * t.dim(2) * t.dim(3)});
    throw ShapeError("cannot flatten rank " + std::to_string(t.rank()) + " tensor to rows");
}

}  // namespace detail

template <typename S>
ForwardTrace<S> forward_trace(const Network<S>& net, const Tensor<S>& batch) {
    if (batch.rank() != 4)
        throw ShapeError("network input must be NCHW, got " + shape_str(batch.shape()));
    if (batch.dim(1) != net.spec.input_shape[0] || batch.dim(2) != net.spec.input_shape[1] ||
        batch.dim(3) != net.spec.input_shape[2])
        throw ShapeError("batch shape " + shape_str(batch.shape()) + " does not match spec input " +
                         shape_str({net.spec.input_shape[0], net.spec.input_shape[1],
                                    net.spec.input_shape[2]}));
    ForwardTrace<S> t;
    t.input = batch;
    const Tensor<S>* cur = &t.input;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerDesc& d = net.spec.layers[i];
        switch (d.kind) {
            case LayerKind::conv: {
                auto pre = conv_forward(*cur, detail::unit_params(net, d.name, d.lr_mult),
                                        d.stride, d.pad);
                t.post.push_back(activation_forward(d.act, pre));
                t.pre_act.push_back(std::move(pre));
                break;
            }
            case LayerKind::pool: {
                auto r = maxpool_forward(*cur, d.kernel, d.stride, d.pad);
                t.pre_act.push_back(r.output);
                t.post.push_back(r.output);
                t.pools.emplace(static_cast<int>(i), std::move(r));
                break;
            }
            case LayerKind::lrn: {
                auto out = lrn_forward(*cur, d.lrn);
                t.pre_act.push_back(out);
                t.post.push_back(std::move(out));
                break;
            }
            case LayerKind::fc: {
                auto flat = detail::flatten_rows(*cur);
                auto pre = fc_forward(flat, detail::unit_params(net, d.name, d.lr_mult));
                t.post.push_back(activation_forward(d.act, pre));
                t.pre_act.push_back(std::move(pre));
                break;
            }
            case LayerKind::inception: {
                auto tr = inception_forward_trace(*cur, detail::inception_params<S>(net, d));
                t.pre_act.push_back(tr.output);
                t.post.push_back(tr.output);
                t.inceptions.emplace(static_cast<int>(i), std::move(tr));
                break;
            }
        }
        cur = &t.post.back();
    }
    return t;
}

template <typename S>
Tensor<S> forward(const Network<S>& net, const Tensor<S>& batch) {
    return forward_trace(net, batch).logits();
}

template <typename S>
GradMap<S> backward(const Network<S>& net, const ForwardTrace<S>& trace,
                    const Tensor<S>& grad_logits) {
    GradMap<S> grads;
    Tensor<S> grad = grad_logits;
    for (int i = static_cast<int>(net.spec.layers.size()) - 1; i >= 0; --i) {
        const LayerDesc& d = net.spec.layers[i];
        const Tensor<S>& layer_in = i == 0 ? trace.input : trace.post[static_cast<std::size_t>(i - 1)];
        switch (d.kind) {
            case LayerKind::conv: {
                grad = activation_backward(d.act, trace.pre_act[static_cast<std::size_t>(i)], grad);
                auto g = conv_backward(layer_in, detail::unit_params(net, d.name, d.lr_mult),
                                       d.stride, d.pad, grad);
                grads.emplace(d.name + ".weights", std::move(g.weights));
                grads.emplace(d.name + ".bias", std::move(g.bias));
                grad = std::move(g.input);
                break;
            }
            case LayerKind::pool:
                grad = maxpool_backward(trace.pools.at(i), grad);
                break;
            case LayerKind::lrn:
                grad = lrn_backward(layer_in, d.lrn, grad);
                break;
            case LayerKind::fc: {
                grad = activation_backward(d.act, trace.pre_act[static_cast<std::size_t>(i)], grad);
                auto flat = detail::flatten_rows(layer_in);
                auto g = fc_backward(flat, detail::unit_params(net, d.name, d.lr_mult), grad);
                grads.emplace(d.name + ".weights", std::move(g.weights));
                grads.emplace(d.name + ".bias", std::move(g.bias));
                grad = g.input.reshaped(layer_in.shape());
                break;
            }
            case LayerKind::inception: {
                auto g = inception_backward(layer_in, detail::inception_params<S>(net, d),
                                            trace.inceptions.at(i), grad);
                grads.emplace(d.name + ".b1.weights", std::move(g.b1.weights));
                grads.emplace(d.name + ".b1.bias", std::move(g.b1.bias));
                grads.emplace(d.name + ".b3r.weights", std::move(g.b3_reduce.weights));
                grads.emplace(d.name + ".b3r.bias", std::move(g.b3_reduce.bias));
                grads.emplace(d.name + ".b3.weights", std::move(g.b3.weights));
                grads.emplace(d.name + ".b3.bias", std::move(g.b3.bias));
                grads.emplace(d.name + ".b5r.weights", std::move(g.b5_reduce.weights));
                grads.emplace(d.name + ".b5r.bias", std::move(g.b5_reduce.bias));
                grads.emplace(d.name + ".b5.weights", std::move(g.b5.weights));
                grads.emplace(d.name + ".b5.bias", std::move(g.b5.bias));
                grads.emplace(d.name + ".bp.weights", std::move(g.pool_proj.weights));
                grads.emplace(d.name + ".bp.bias", std::move(g.pool_proj.bias));
                grad = std::move(g.input);
                break;
            }
        }
    }
    return grads;
}

/// The named layer's post-activation output, flattened to [N, D].
template <typename S>
Tensor<S> extract_features(const Network<S>& net, const std::string& layer_name,
                           const Tensor<S>& batch) {
    int idx = -1;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i)
        if (net.spec.layers[i].name == layer_name) idx = static_cast<int>(i);
    if (idx < 0) {
        std::string names;
        for (const auto& l : net.spec.layers) names += (names.empty() ? "" : ", ") + l.name;
        throw LookupError("no layer named '" + layer_name + "'; valid names: " + names);
    }
    // run only the needed prefix of the network
    Network<S> prefix{net.spec, {}};
    prefix.spec.layers.resize(static_cast<std::size_t>(idx) + 1);
    for (const auto& d : prefix.spec.layers)
        for (const auto& [k, v] : net.blobs)
            if (k.rfind(d.name + ".", 0) == 0) prefix.blobs.emplace(k, v);
    auto trace = forward_trace(prefix, batch);
    return detail::flatten_rows(trace.post.back());
}

template <typename To, typename From>
Network<To> cast_network(const Network<From>& net) {
    Network<To> out;
    out.spec = net.spec;
    for (const auto& [name, t] : net.blobs) out.blobs.emplace(name, t.template cast<To>());
    return out;
}

// Reference architectures ---------------------------------------------------

/// Small CNN for desk-scale experiments. input_size must be divisible by 4.
NetworkSpec tiny_cnn_spec(int input_size, int num_classes);

/// The classic five-conv/three-fc reference architecture (227x227 input).
NetworkSpec caffenet_spec(int num_classes = 1000);

}  // namespace lulc
