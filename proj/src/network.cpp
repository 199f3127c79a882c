#include "lulc/network.hpp"

#include <cmath>

namespace lulc {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::lrn: return "lrn";
        case LayerKind::fc: return "fc";
        case LayerKind::inception: return "inception";
    }
    return "?";
}

LayerDesc conv_layer(std::string name, int out_channels, Size2 kernel, Size2 stride, Size2 pad,
                     Activation act, float lr_mult) {
    LayerDesc d;
    d.name = std::move(name);
    d.kind = LayerKind::conv;
    d.out_channels = out_channels;
    d.kernel = kernel;
    d.stride = stride;
    d.pad = pad;
    d.act = act;
    d.lr_mult = lr_mult;
    return d;
}

LayerDesc pool_layer(std::string name, Size2 window, Size2 stride, Size2 pad) {
    LayerDesc d;
    d.name = std::move(name);
    d.kind = LayerKind::pool;
    d.kernel = window;
    d.stride = stride;
    d.pad = pad;
    return d;
}

LayerDesc lrn_layer(std::string name, LrnParams p) {
    LayerDesc d;
    d.name = std::move(name);
    d.kind = LayerKind::lrn;
    d.lrn = p;
    return d;
}

LayerDesc fc_layer(std::string name, int units, Activation act, float lr_mult) {
    LayerDesc d;
    d.name = std::move(name);
    d.kind = LayerKind::fc;
    d.units = units;
    d.act = act;
    d.lr_mult = lr_mult;
    return d;
}

LayerDesc inception_layer(std::string name, InceptionChannels ch, float lr_mult) {
    LayerDesc d;
    d.name = std::move(name);
    d.kind = LayerKind::inception;
    d.inception = ch;
    d.lr_mult = lr_mult;
    return d;
}

namespace {

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    return true;
}

}  // namespace

ShapeFlow validate_spec(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw BuildError("network spec has no layers");
    if (spec.input_shape[0] < 1 || spec.input_shape[1] < 1 || spec.input_shape[2] < 1)
        throw BuildError("bad input shape " + shape_str({spec.input_shape[0], spec.input_shape[1],
                                                         spec.input_shape[2]}));
    if (spec.num_classes < 1)
        throw BuildError("num_classes must be positive, got " + std::to_string(spec.num_classes));
    std::vector<std::string> seen;
    for (const auto& l : spec.layers) {
        if (!valid_name(l.name))
            throw BuildError("bad layer name '" + l.name + "' (alphanumeric, '_' or '-')");
        for (const auto& s : seen)
            if (s == l.name) throw BuildError("duplicate layer name '" + l.name + "'");
        seen.push_back(l.name);
    }

    ShapeFlow flow;
    int c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
    bool flat = false;
    std::string prev = "input";
    for (const auto& l : spec.layers) {
        try {
            switch (l.kind) {
                case LayerKind::conv: {
                    if (flat)
                        throw BuildError("conv layer cannot follow a fully-connected layer");
                    if (l.out_channels < 1) throw BuildError("conv needs out_channels >= 1");
                    Size2 o = conv_out_size(h, w, l.kernel, l.stride, l.pad);
                    c = l.out_channels;
                    h = o.h;
                    w = o.w;
                    break;
                }
                case LayerKind::pool: {
                    if (flat)
                        throw BuildError("pool layer cannot follow a fully-connected layer");
                    Size2 o = conv_out_size(h, w, l.kernel, l.stride, l.pad);
                    h = o.h;
                    w = o.w;
                    break;
                }
                case LayerKind::lrn:
                    if (flat)
                        throw BuildError("lrn layer cannot follow a fully-connected layer");
                    validate_lrn(l.lrn);
                    break;
                case LayerKind::fc: {
                    if (l.units < 1) throw BuildError("fc needs units >= 1");
                    c = l.units;
                    h = w = 1;
                    flat = true;
                    break;
                }
                case LayerKind::inception: {
                    if (flat)
                        throw BuildError("inception layer cannot follow a fully-connected layer");
                    const auto& ch = l.inception;
                    if (ch.b1 < 1 || ch.b3_reduce < 1 || ch.b3 < 1 || ch.b5_reduce < 1 ||
                        ch.b5 < 1 || ch.pool_proj < 1)
                        throw BuildError("inception branch widths must all be >= 1");
                    c = ch.b1 + ch.b3 + ch.b5 + ch.pool_proj;
                    break;
                }
            }
        } catch (const BuildError& e) {
            throw BuildError("layer '" + l.name + "' (after '" + prev + "'): " + e.what());
        } catch (const Error& e) {
            throw BuildError("layer '" + l.name + "' (after '" + prev + "'): " + e.what());
        }
        flow.out_shapes.push_back({c, h, w});
        flow.flat.push_back(flat);
        prev = l.name;
    }
    const LayerDesc& last = spec.layers.back();
    if (last.kind != LayerKind::fc)
        throw BuildError("final layer '" + last.name + "' must be fully-connected");
    if (last.units != spec.num_classes)
        throw BuildError("final layer '" + last.name + "' has " + std::to_string(last.units) +
                         " units but num_classes is " + std::to_string(spec.num_classes));
    return flow;
}

std::vector<LearnableUnit> learnable_units(const NetworkSpec& spec) {
    ShapeFlow flow = validate_spec(spec);
    std::vector<LearnableUnit> units;
    int c = spec.input_shape[0], h = spec.input_shape[1], w = spec.input_shape[2];
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::conv:
                units.push_back({l.name, {l.out_channels, c, l.kernel.h, l.kernel.w},
                                 l.out_channels, l.lr_mult});
                break;
            case LayerKind::fc: {
                const int d = c * h * w;
                units.push_back({l.name, {l.units, d}, l.units, l.lr_mult});
                break;
            }
            case LayerKind::inception: {
                const auto& ch = l.inception;
                units.push_back({l.name + ".b1", {ch.b1, c, 1, 1}, ch.b1, l.lr_mult});
                units.push_back({l.name + ".b3r", {ch.b3_reduce, c, 1, 1}, ch.b3_reduce, l.lr_mult});
                units.push_back({l.name + ".b3", {ch.b3, ch.b3_reduce, 3, 3}, ch.b3, l.lr_mult});
                units.push_back({l.name + ".b5r", {ch.b5_reduce, c, 1, 1}, ch.b5_reduce, l.lr_mult});
                units.push_back({l.name + ".b5", {ch.b5, ch.b5_reduce, 5, 5}, ch.b5, l.lr_mult});
                units.push_back({l.name + ".bp", {ch.pool_proj, c, 1, 1}, ch.pool_proj, l.lr_mult});
                break;
            }
            default: break;
        }
        c = flow.out_shapes[i][0];
        h = flow.out_shapes[i][1];
        w = flow.out_shapes[i][2];
    }
    return units;
}

void init_unit(Network<float>& net, const LearnableUnit& unit, std::uint64_t seed,
               std::string_view stream_prefix) {
    Rng rng(derive_seed(seed, std::string(stream_prefix) + unit.name));
    Tensor<float> w(unit.weight_shape);
    double fan_in, fan_out;
    if (unit.weight_shape.size() == 4) {
        fan_in = static_cast<double>(unit.weight_shape[1]) * unit.weight_shape[2] *
                 unit.weight_shape[3];
        fan_out = static_cast<double>(unit.weight_shape[0]) * unit.weight_shape[2] *
                  unit.weight_shape[3];
    } else {
        fan_in = unit.weight_shape[1];
        fan_out = unit.weight_shape[0];
    }
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(rng.uniform(-a, a));
    net.blobs.insert_or_assign(unit.name + ".weights", std::move(w));
    net.blobs.insert_or_assign(unit.name + ".bias", Tensor<float>({unit.bias_len}));
}

Network<float> build_network(const NetworkSpec& spec, std::uint64_t init_seed) {
    Network<float> net;
    net.spec = spec;
    for (const auto& unit : learnable_units(spec)) init_unit(net, unit, init_seed);
    return net;
}

NetworkSpec tiny_cnn_spec(int input_size, int num_classes) {
    NetworkSpec s;
    s.input_shape = {3, input_size, input_size};
    s.num_classes = num_classes;
    s.layers = {
        conv_layer("conv1", 8, {3, 3}, {1, 1}, {1, 1}, Activation::relu),
        pool_layer("pool1", {2, 2}, {2, 2}),
        conv_layer("conv2", 16, {3, 3}, {1, 1}, {1, 1}, Activation::relu),
        pool_layer("pool2", {2, 2}, {2, 2}),
        fc_layer("fc1", 32, Activation::relu),
        fc_layer("fc2", num_classes),
    };
    return s;
}

NetworkSpec caffenet_spec(int num_classes) {
    NetworkSpec s;
    s.input_shape = {3, 227, 227};
    s.num_classes = num_classes;
    s.layers = {
        conv_layer("conv1", 96, {11, 11}, {4, 4}, {0, 0}, Activation::relu),
        pool_layer("pool1", {3, 3}, {2, 2}),
        lrn_layer("norm1"),
        conv_layer("conv2", 256, {5, 5}, {1, 1}, {2, 2}, Activation::relu),
        pool_layer("pool2", {3, 3}, {2, 2}),
        lrn_layer("norm2"),
        // conv3 width is the canonical 384; some descriptions of this
        // architecture list 344 instead.
        conv_layer("conv3", 384, {3, 3}, {1, 1}, {1, 1}, Activation::relu),
        conv_layer("conv4", 384, {3, 3}, {1, 1}, {1, 1}, Activation::relu),
        conv_layer("conv5", 256, {3, 3}, {1, 1}, {1, 1}, Activation::relu),
        // pooling follows conv1, conv2 and conv5 only
        pool_layer("pool5", {3, 3}, {2, 2}),
        fc_layer("fc6", 4096, Activation::relu),
        fc_layer("fc7", 4096, Activation::relu),
        fc_layer("fc8", num_classes),
    };
    return s;
}

}  // namespace lulc
