#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lulc/tensor.hpp"

namespace lulc {

enum class Activation { none, relu, sigmoid };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        default: return "none";
    }
}

/// Learnable state of one layer. lr_mult == 0 freezes the layer: the
/// optimizer leaves its blobs bitwise untouched.
template <typename S>
struct LayerParams {
    Tensor<S> weights;  // conv: [K,C,kh,kw]; fully-connected: [U,D]
    Tensor<S> bias;     // [K] or [U]
    float lr_mult = 1.0f;
};

/// Across-channel local response normalization window.
struct LrnParams {
    int n = 5;
    double alpha = 1e-4;
    double beta = 0.75;
    double k = 1.0;
};

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)

/// out[n,k] = bias[k] + sum_c weights[k,c] (cross-correlated with) input[n,c]
template <typename S>
Tensor<S> conv_forward(const Tensor<S>& input, const LayerParams<S>& p, Size2 stride, Size2 pad) {
    if (input.rank() != 4 || p.weights.rank() != 4)
        throw ShapeError("conv_forward expects NCHW input and [K,C,kh,kw] weights");
    if (input.dim(1) != p.weights.dim(1))
        throw ShapeError("conv_forward channel mismatch: input " + shape_str(input.shape()) +
                         " vs weights " + shape_str(p.weights.shape()));
    const int n = input.dim(0), k = p.weights.dim(0);
    const Size2 kernel{p.weights.dim(2), p.weights.dim(3)};
    const Size2 out = conv_out_size(input.dim(2), input.dim(3), kernel, stride, pad);
    auto cols = im2col(input, kernel, stride, pad);
    auto wmat = p.weights.reshaped({k, p.weights.dim(1) * kernel.h * kernel.w});
    auto omat = matmul(wmat, cols);  // [K x N*Ho*Wo]
    Tensor<S> result({n, k, out.h, out.w});
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki) {
            const S b = p.bias.size() ? p.bias[ki] : S(0);
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x)
                    result(ni, ki, y, x) = omat(ki, (ni * out.h + y) * out.w + x) + b;
        }
    return result;
}

template <typename S>
struct ConvGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

template <typename S>
ConvGrads<S> conv_backward(const Tensor<S>& input, const LayerParams<S>& p, Size2 stride,
                           Size2 pad, const Tensor<S>& grad_out) {
    const int n = input.dim(0), k = p.weights.dim(0);
    const Size2 kernel{p.weights.dim(2), p.weights.dim(3)};
    const Size2 out = conv_out_size(input.dim(2), input.dim(3), kernel, stride, pad);
    if (grad_out.shape() != std::vector<int>{n, k, out.h, out.w})
        throw ShapeError("conv_backward grad shape " + shape_str(grad_out.shape()) +
                         " does not match forward output " +
                         shape_str({n, k, out.h, out.w}));
    ConvGrads<S> g;
    g.bias = Tensor<S>({k});
    Tensor<S> gmat({k, n * out.h * out.w});
    for (int ni = 0; ni < n; ++ni)
        for (int ki = 0; ki < k; ++ki)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x) {
                    const S v = grad_out(ni, ki, y, x);
                    gmat(ki, (ni * out.h + y) * out.w + x) = v;
                    g.bias[ki] += v;
                }
    auto cols = im2col(input, kernel, stride, pad);
    const int patch = p.weights.dim(1) * kernel.h * kernel.w;
    Tensor<S> gw({k, patch});
    as_matrix(gw).noalias() = as_matrix(gmat) * as_matrix(cols).transpose();
    g.weights = gw.reshaped(p.weights.shape());
    Tensor<S> gcols({patch, n * out.h * out.w});
    auto wmat = p.weights.reshaped({k, patch});
    as_matrix(gcols).noalias() = as_matrix(wmat).transpose() * as_matrix(gmat);
    g.input = col2im(gcols, input.shape(), kernel, stride, pad);
    return g;
}

// ---------------------------------------------------------------------------
// Max pooling

template <typename S>
struct PoolResult {
    Tensor<S> output;
    std::vector<std::int64_t> argmax;  // winner's flat index in the input, per output element
    std::vector<int> input_shape;
};

/// Padded cells never win; ties break to the lowest flat input index.
template <typename S>
PoolResult<S> maxpool_forward(const Tensor<S>& input, Size2 window, Size2 stride,
                              Size2 pad = {0, 0}) {
    if (input.rank() != 4) throw ShapeError("maxpool expects NCHW input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const Size2 out = conv_out_size(h, w, window, stride, pad);
    PoolResult<S> r;
    r.output = Tensor<S>({n, c, out.h, out.w});
    r.argmax.resize(static_cast<std::size_t>(r.output.size()));
    r.input_shape = input.shape();
    std::size_t oi = 0;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x, ++oi) {
                    S best = S(0);
                    std::int64_t best_idx = -1;
                    for (int dy = 0; dy < window.h; ++dy) {
                        const int sy = y * stride.h + dy - pad.h;
                        if (sy < 0 || sy >= h) continue;
                        for (int dx = 0; dx < window.w; ++dx) {
                            const int sx = x * stride.w + dx - pad.w;
                            if (sx < 0 || sx >= w) continue;
                            const S v = input(ni, ci, sy, sx);
                            if (best_idx < 0 || v > best) {
                                best = v;
                                best_idx = input.flat_index(ni, ci, sy, sx);
                            }
                        }
                    }
                    if (best_idx < 0)
                        throw GeometryError("maxpool window contains no valid input cells");
                    r.output[static_cast<std::int64_t>(oi)] = best;
                    r.argmax[oi] = best_idx;
                }
    return r;
}

/// Routes each grad_out element to its recorded argmax position.
template <typename S>
Tensor<S> maxpool_backward(const PoolResult<S>& fwd, const Tensor<S>& grad_out) {
    if (grad_out.shape() != fwd.output.shape())
        throw ShapeError("maxpool_backward grad shape " + shape_str(grad_out.shape()) +
                         " does not match pooled output " + shape_str(fwd.output.shape()));
    Tensor<S> grad_in(fwd.input_shape);
    for (std::int64_t i = 0; i < grad_out.size(); ++i)
        grad_in[fwd.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
    return grad_in;
}

// ---------------------------------------------------------------------------
// Elementwise activations

template <typename S>
Tensor<S> activation_forward(Activation kind, const Tensor<S>& input) {
    if (kind == Activation::none) return input;
    Tensor<S> out(input.shape());
    if (kind == Activation::relu) {
        for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > S(0) ? input[i] : S(0);
    } else {
        for (std::int64_t i = 0; i < input.size(); ++i)
            out[i] = S(1) / (S(1) + std::exp(-input[i]));
    }
    return out;
}

template <typename S>
Tensor<S> activation_backward(Activation kind, const Tensor<S>& input, const Tensor<S>& grad_out) {
    if (!grad_out.same_shape(input))
        throw ShapeError("activation_backward shape mismatch: " + shape_str(input.shape()) +
                         " vs " + shape_str(grad_out.shape()));
    if (kind == Activation::none) return grad_out;
    Tensor<S> grad_in(input.shape());
    if (kind == Activation::relu) {
        for (std::int64_t i = 0; i < input.size(); ++i)
            grad_in[i] = input[i] > S(0) ? grad_out[i] : S(0);
    } else {
        for (std::int64_t i = 0; i < input.size(); ++i) {
            const S s = S(1) / (S(1) + std::exp(-input[i]));
            grad_in[i] = grad_out[i] * s * (S(1) - s);
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Local response normalization (across channels)
//
// out[c] = in[c] / (k + (alpha/n) * sum_{c' in window(c)} in[c']^2)^beta
// window(c) = channels within (n-1)/2 of c, clamped to the valid range.

inline void validate_lrn(const LrnParams& p) {
    if (p.n < 1 || p.n % 2 == 0)
        throw ParamError("LRN window must be odd and >= 1, got " + std::to_string(p.n));
    if (p.alpha < 0 || p.beta <= 0 || p.k <= 0)
        throw ParamError("LRN requires alpha >= 0, beta > 0, k > 0");
}

template <typename S>
Tensor<S> lrn_forward(const Tensor<S>& input, const LrnParams& p) {
    validate_lrn(p);
    if (input.rank() != 4) throw ShapeError("lrn expects NCHW input");
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int half = (p.n - 1) / 2;
    Tensor<S> out(input.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < c; ++ci) {
                    double sum = 0;
                    const int lo = std::max(0, ci - half), hi = std::min(c - 1, ci + half);
                    for (int cj = lo; cj <= hi; ++cj) {
                        const double v = input(ni, cj, y, x);
                        sum += v * v;
                    }
                    const double denom = std::pow(p.k + (p.alpha / p.n) * sum, p.beta);
                    out(ni, ci, y, x) = static_cast<S>(input(ni, ci, y, x) / denom);
                }
    return out;
}

template <typename S>
Tensor<S> lrn_backward(const Tensor<S>& input, const LrnParams& p, const Tensor<S>& grad_out) {
    validate_lrn(p);
    if (!grad_out.same_shape(input))
        throw ShapeError("lrn_backward shape mismatch: " + shape_str(input.shape()) + " vs " +
                         shape_str(grad_out.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int half = (p.n - 1) / 2;
    Tensor<S> grad_in(input.shape());
    std::vector<double> denom(static_cast<std::size_t>(c));
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int ci = 0; ci < c; ++ci) {
                    double sum = 0;
                    const int lo = std::max(0, ci - half), hi = std::min(c - 1, ci + half);
                    for (int cj = lo; cj <= hi; ++cj) {
                        const double v = input(ni, cj, y, x);
                        sum += v * v;
                    }
                    denom[static_cast<std::size_t>(ci)] = p.k + (p.alpha / p.n) * sum;
                }
                // d out_c / d in_j = delta_cj * denom_c^-beta
                //   - 2 beta (alpha/n) in_c in_j denom_c^(-beta-1) for j in window(c)
                for (int cj = 0; cj < c; ++cj) {
                    double acc = grad_out(ni, cj, y, x) *
                                 std::pow(denom[static_cast<std::size_t>(cj)], -p.beta);
                    const int lo = std::max(0, cj - half), hi = std::min(c - 1, cj + half);
                    double cross = 0;
                    for (int ci = lo; ci <= hi; ++ci)
                        cross += grad_out(ni, ci, y, x) * static_cast<double>(input(ni, ci, y, x)) *
                                 std::pow(denom[static_cast<std::size_t>(ci)], -p.beta - 1.0);
                    acc -= 2.0 * p.beta * (p.alpha / p.n) * static_cast<double>(input(ni, cj, y, x)) *
                           cross;
                    grad_in(ni, cj, y, x) = static_cast<S>(acc);
                }
            }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Fully connected: out = input * weights^T + bias

template <typename S>
Tensor<S> fc_forward(const Tensor<S>& input, const LayerParams<S>& p) {
    if (input.rank() != 2 || p.weights.rank() != 2)
        throw ShapeError("fc_forward expects [N,D] input and [U,D] weights");
    if (input.dim(1) != p.weights.dim(1))
        throw ShapeError("fc_forward dimension mismatch: input " + shape_str(input.shape()) +
                         " vs weights " + shape_str(p.weights.shape()));
    const int n = input.dim(0), u = p.weights.dim(0);
    Tensor<S> out({n, u});
    as_matrix(out).noalias() = as_matrix(input) * as_matrix(p.weights).transpose();
    if (p.bias.size())
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < u; ++j) out(i, j) += p.bias[j];
    return out;
}

template <typename S>
struct FcGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

template <typename S>
FcGrads<S> fc_backward(const Tensor<S>& input, const LayerParams<S>& p, const Tensor<S>& grad_out) {
    const int n = input.dim(0), u = p.weights.dim(0), d = p.weights.dim(1);
    if (grad_out.shape() != std::vector<int>{n, u})
        throw ShapeError("fc_backward grad shape " + shape_str(grad_out.shape()) +
                         " does not match output [" + std::to_string(n) + "x" +
                         std::to_string(u) + "]");
    FcGrads<S> g;
    g.input = Tensor<S>({n, d});
    as_matrix(g.input).noalias() = as_matrix(grad_out) * as_matrix(p.weights);
    g.weights = Tensor<S>({u, d});
    as_matrix(g.weights).noalias() = as_matrix(grad_out).transpose() * as_matrix(input);
    g.bias = Tensor<S>({u});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < u; ++j) g.bias[j] += grad_out(i, j);
    return g;
}

// ---------------------------------------------------------------------------
// Softmax + cross-entropy head

template <typename S>
struct SoftmaxResult {
    double loss = 0;        // mean negative log prob of the true class
    Tensor<S> probs;        // rows sum to 1
    Tensor<S> grad_logits;  // (probs - one_hot) / N
};

template <typename S>
SoftmaxResult<S> softmax_xent(const Tensor<S>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_xent expects [N,K] logits");
    const int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("softmax_xent got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw LabelError("label " + std::to_string(label) + " out of range [0, " +
                             std::to_string(k) + ")");
    SoftmaxResult<S> r;
    r.probs = Tensor<S>({n, k});
    r.grad_logits = Tensor<S>({n, k});
    double total = 0;
    for (int i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits(i, j)));
        double sum = 0;
        for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(logits(i, j)) - mx);
        const double log_z = std::log(sum) + mx;
        total += log_z - static_cast<double>(logits(i, labels[static_cast<std::size_t>(i)]));
        for (int j = 0; j < k; ++j) {
            const double pij = std::exp(static_cast<double>(logits(i, j)) - log_z);
            r.probs(i, j) = static_cast<S>(pij);
            const double onehot = j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            r.grad_logits(i, j) = static_cast<S>((pij - onehot) / n);
        }
    }
    r.loss = total / n;
    return r;
}

// ---------------------------------------------------------------------------
// Inception block (four parallel branches, channel concatenation)
//
// Branch geometry is fixed so every branch preserves the spatial extent:
// 1x1 convs are stride 1 pad 0, the 3x3 conv is pad 1, the 5x5 conv is
// pad 2, and the pooling branch is a 3x3/stride 1/pad 1 max pool followed
// by a 1x1 projection.

template <typename S>
struct InceptionParams {
    LayerParams<S> b1;         // 1x1
    LayerParams<S> b3_reduce;  // 1x1 before the 3x3
    LayerParams<S> b3;         // 3x3
    LayerParams<S> b5_reduce;  // 1x1 before the 5x5
    LayerParams<S> b5;         // 5x5
    LayerParams<S> pool_proj;  // 1x1 after the pool
    float lr_mult = 1.0f;
};

template <typename S>
int inception_out_channels(const InceptionParams<S>& p) {
    return p.b1.weights.dim(0) + p.b3.weights.dim(0) + p.b5.weights.dim(0) +
           p.pool_proj.weights.dim(0);
}

/// Concatenates rank-4 tensors along the channel axis.
template <typename S>
Tensor<S> concat_channels(const std::vector<const Tensor<S>*>& parts) {
    const int n = parts[0]->dim(0), h = parts[0]->dim(2), w = parts[0]->dim(3);
    int c_total = 0;
    for (const auto* t : parts) {
        if (t->dim(0) != n || t->dim(2) != h || t->dim(3) != w)
            throw ShapeError("concat_channels: branch extents disagree: " +
                             shape_str(parts[0]->shape()) + " vs " + shape_str(t->shape()));
        c_total += t->dim(1);
    }
    Tensor<S> out({n, c_total, h, w});
    int c_off = 0;
    for (const auto* t : parts) {
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < t->dim(1); ++ci)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) out(ni, c_off + ci, y, x) = (*t)(ni, ci, y, x);
        c_off += t->dim(1);
    }
    return out;
}

template <typename S>
struct InceptionTrace {
    Tensor<S> b3r_out, b5r_out;
    PoolResult<S> pool;
    Tensor<S> output;
};

template <typename S>
InceptionTrace<S> inception_forward_trace(const Tensor<S>& input, const InceptionParams<S>& p) {
    if (p.b3.weights.dim(1) != p.b3_reduce.weights.dim(0) ||
        p.b5.weights.dim(1) != p.b5_reduce.weights.dim(0))
        throw ShapeError("inception: reduction output channels do not feed the following conv");
    InceptionTrace<S> t;
    auto a = conv_forward(input, p.b1, {1, 1}, {0, 0});
    t.b3r_out = conv_forward(input, p.b3_reduce, {1, 1}, {0, 0});
    auto b = conv_forward(t.b3r_out, p.b3, {1, 1}, {1, 1});
    t.b5r_out = conv_forward(input, p.b5_reduce, {1, 1}, {0, 0});
    auto c = conv_forward(t.b5r_out, p.b5, {1, 1}, {2, 2});
    t.pool = maxpool_forward(input, {3, 3}, {1, 1}, {1, 1});
    auto d = conv_forward(t.pool.output, p.pool_proj, {1, 1}, {0, 0});
    t.output = concat_channels<S>({&a, &b, &c, &d});
    return t;
}

template <typename S>
Tensor<S> inception_forward(const Tensor<S>& input, const InceptionParams<S>& p) {
    return inception_forward_trace(input, p).output;
}

template <typename S>
struct InceptionGrads {
    Tensor<S> input;
    ConvGrads<S> b1, b3_reduce, b3, b5_reduce, b5, pool_proj;
};

template <typename S>
InceptionGrads<S> inception_backward(const Tensor<S>& input, const InceptionParams<S>& p,
                                     const InceptionTrace<S>& t, const Tensor<S>& grad_out) {
    if (grad_out.shape() != t.output.shape())
        throw ShapeError("inception_backward grad shape " + shape_str(grad_out.shape()) +
                         " does not match output " + shape_str(t.output.shape()));
    const int n = input.dim(0), h = input.dim(2), w = input.dim(3);
    auto slice = [&](int c_off, int c_cnt) {
        Tensor<S> g({n, c_cnt, h, w});
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c_cnt; ++ci)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) g(ni, ci, y, x) = grad_out(ni, c_off + ci, y, x);
        return g;
    };
    const int c1 = p.b1.weights.dim(0), c3 = p.b3.weights.dim(0), c5 = p.b5.weights.dim(0),
              cp = p.pool_proj.weights.dim(0);
    InceptionGrads<S> g;
    g.b1 = conv_backward(input, p.b1, {1, 1}, {0, 0}, slice(0, c1));
    g.b3 = conv_backward(t.b3r_out, p.b3, {1, 1}, {1, 1}, slice(c1, c3));
    g.b3_reduce = conv_backward(input, p.b3_reduce, {1, 1}, {0, 0}, g.b3.input);
    g.b5 = conv_backward(t.b5r_out, p.b5, {1, 1}, {2, 2}, slice(c1 + c3, c5));
    g.b5_reduce = conv_backward(input, p.b5_reduce, {1, 1}, {0, 0}, g.b5.input);
    g.pool_proj = conv_backward(t.pool.output, p.pool_proj, {1, 1}, {0, 0},
                                slice(c1 + c3 + c5, cp));
    auto pool_grad = maxpool_backward(t.pool, g.pool_proj.input);
    g.input = Tensor<S>(input.shape());
    for (std::int64_t i = 0; i < g.input.size(); ++i)
        g.input[i] = g.b1.input[i] + g.b3_reduce.input[i] + g.b5_reduce.input[i] + pool_grad[i];
    return g;
}

}  // namespace lulc
