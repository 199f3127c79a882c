#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lulc/layers.hpp"
#include "support/oracles.hpp"

using lulc::Activation;
using lulc::LayerParams;
using lulc::LrnParams;
using lulc::Size2;
using lulc::Tensor;

namespace {

template <typename S>
LayerParams<S> make_params(std::vector<int> wshape, lulc::Rng& rng, double scale = 1.0) {
    LayerParams<S> p;
    p.weights = Tensor<S>(std::move(wshape));
    oracle::fill_uniform(p.weights, rng, -scale, scale);
    p.bias = Tensor<S>({p.weights.dim(0)});
    oracle::fill_uniform(p.bias, rng, -scale, scale);
    return p;
}

}  // namespace

TEST_CASE("conv 1x1 identity kernel passes input through") {
    Tensor<float> x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    LayerParams<float> p;
    p.weights = Tensor<float>({1, 1, 1, 1}, {1});
    p.bias = Tensor<float>({1});
    auto y = lulc::conv_forward(x, p, {1, 1}, {0, 0});
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv all-ones 3x3 on all-ones 3x3 input gives 9") {
    Tensor<float> x({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    LayerParams<float> p;
    p.weights = Tensor<float>({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    p.bias = Tensor<float>({1});
    auto y = lulc::conv_forward(x, p, {1, 1}, {0, 0});
    REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.0f));
}

TEST_CASE("96 filters on a 3-channel input yield 96 output channels") {
    lulc::Rng rng(1);
    Tensor<float> x({1, 3, 5, 5});
    oracle::fill_uniform(x, rng);
    auto p = make_params<float>({96, 3, 3, 3}, rng);
    auto y = lulc::conv_forward(x, p, {1, 1}, {1, 1});
    CHECK(y.dim(1) == 96);
}

TEST_CASE("conv matches nested-loop oracle") {
    lulc::Rng rng(2);
    Tensor<float> x({2, 3, 9, 9});
    oracle::fill_uniform(x, rng);
    auto p = make_params<float>({4, 3, 3, 3}, rng);
    auto got = lulc::conv_forward(x, p, {2, 2}, {1, 1});
    std::vector<float> bias(p.bias.data(), p.bias.data() + p.bias.size());
    auto want = oracle::conv_ref(x, p.weights, bias, 2, 2, 1, 1);
    REQUIRE(got.shape() == want.shape());
    CHECK(oracle::max_rel_diff(got, want) < 1e-5);
}

TEST_CASE("conv forward is independent of lr_mult") {
    lulc::Rng rng(3);
    Tensor<float> x({1, 2, 4, 4});
    oracle::fill_uniform(x, rng);
    auto p = make_params<float>({2, 2, 3, 3}, rng);
    p.lr_mult = 0.0f;
    auto a = lulc::conv_forward(x, p, {1, 1}, {1, 1});
    p.lr_mult = 17.0f;
    auto b = lulc::conv_forward(x, p, {1, 1}, {1, 1});
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("conv channel mismatch raises shape error") {
    Tensor<float> x({1, 2, 4, 4});
    LayerParams<float> p;
    p.weights = Tensor<float>({1, 3, 3, 3});
    p.bias = Tensor<float>({1});
    CHECK_THROWS_AS(lulc::conv_forward(x, p, {1, 1}, {1, 1}), lulc::ShapeError);
}

TEST_CASE("conv_backward zero grad gives zero gradients") {
    lulc::Rng rng(4);
    Tensor<float> x({1, 2, 4, 4});
    oracle::fill_uniform(x, rng);
    auto p = make_params<float>({2, 2, 3, 3}, rng);
    Tensor<float> gout({1, 2, 4, 4});
    auto g = lulc::conv_backward(x, p, {1, 1}, {1, 1}, gout);
    for (std::int64_t i = 0; i < g.input.size(); ++i) CHECK(g.input[i] == 0.0f);
    for (std::int64_t i = 0; i < g.weights.size(); ++i) CHECK(g.weights[i] == 0.0f);
    for (std::int64_t i = 0; i < g.bias.size(); ++i) CHECK(g.bias[i] == 0.0f);
}

TEST_CASE("conv_backward of a 1x1 identity kernel routes grad straight through") {
    lulc::Rng rng(5);
    Tensor<float> x({1, 1, 3, 3});
    oracle::fill_uniform(x, rng);
    LayerParams<float> p;
    p.weights = Tensor<float>({1, 1, 1, 1}, {1});
    p.bias = Tensor<float>({1});
    Tensor<float> gout({1, 1, 3, 3});
    oracle::fill_uniform(gout, rng);
    auto g = lulc::conv_backward(x, p, {1, 1}, {0, 0}, gout);
    for (std::int64_t i = 0; i < gout.size(); ++i) CHECK(g.input[i] == gout[i]);
}

TEST_CASE("conv_backward matches finite differences") {
    lulc::Rng rng(6);
    Tensor<double> x({2, 2, 5, 5});
    oracle::fill_uniform(x, rng);
    auto p = make_params<double>({3, 2, 3, 3}, rng);
    Tensor<double> cot({2, 3, 5, 5});
    oracle::fill_uniform(cot, rng);
    const Size2 stride{1, 1}, pad{1, 1};
    auto g = lulc::conv_backward(x, p, stride, pad, cot);
    auto loss = [&] { return oracle::dot_all(lulc::conv_forward(x, p, stride, pad), cot); };
    CHECK(oracle::max_rel_fd(x, g.input, loss, rng) < 1e-6);
    CHECK(oracle::max_rel_fd(p.weights, g.weights, loss, rng) < 1e-6);
    CHECK(oracle::max_rel_fd(p.bias, g.bias, loss, rng) < 1e-6);
}

TEST_CASE("maxpool hand case and constants") {
    Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
    auto r = lulc::maxpool_forward(x, {2, 2}, {2, 2});
    REQUIRE(r.output.size() == 1);
    CHECK(r.output[0] == 4.0f);

    Tensor<float> c({1, 1, 4, 4}, std::vector<float>(16, 2.5f));
    auto rc = lulc::maxpool_forward(c, {2, 2}, {2, 2});
    for (std::int64_t i = 0; i < rc.output.size(); ++i) CHECK(rc.output[i] == 2.5f);
}

TEST_CASE("maxpool matches loop oracle exactly and stays within input bounds") {
    lulc::Rng rng(7);
    Tensor<float> x({1, 2, 6, 6});
    oracle::fill_uniform(x, rng);
    auto r = lulc::maxpool_forward(x, {2, 2}, {2, 2});
    auto want = oracle::maxpool_ref(x, 2, 2, 2, 2);
    REQUIRE(r.output.shape() == want.shape());
    float lo = x[0], hi = x[0];
    for (std::int64_t i = 0; i < x.size(); ++i) {
        lo = std::min(lo, x[i]);
        hi = std::max(hi, x[i]);
    }
    for (std::int64_t i = 0; i < r.output.size(); ++i) {
        CHECK(r.output[i] == want[i]);
        CHECK(r.output[i] >= lo);
        CHECK(r.output[i] <= hi);
    }
}

TEST_CASE("maxpool ties break to the lowest flat index") {
    Tensor<float> x({1, 1, 2, 2}, {7, 7, 7, 7});
    auto r = lulc::maxpool_forward(x, {2, 2}, {2, 2});
    CHECK(r.argmax[0] == 0);
}

TEST_CASE("maxpool_backward routes gradient to the winners") {
    Tensor<float> x({1, 1, 2, 2}, {1, 9, 3, 4});
    auto r = lulc::maxpool_forward(x, {2, 2}, {2, 2});
    Tensor<float> gout({1, 1, 1, 1}, {5});
    auto gin = lulc::maxpool_backward(r, gout);
    CHECK(gin[0] == 0.0f);
    CHECK(gin[1] == 5.0f);
    CHECK(gin[2] == 0.0f);
    CHECK(gin[3] == 0.0f);

    Tensor<float> zeros({1, 1, 1, 1});
    auto gz = lulc::maxpool_backward(r, zeros);
    for (std::int64_t i = 0; i < gz.size(); ++i) CHECK(gz[i] == 0.0f);
}

TEST_CASE("maxpool_backward matches finite differences at non-tied points") {
    lulc::Rng rng(8);
    Tensor<double> x({1, 2, 6, 6});
    oracle::fill_uniform(x, rng);
    Tensor<double> cot({1, 2, 3, 3});
    oracle::fill_uniform(cot, rng);
    auto r = lulc::maxpool_forward(x, {2, 2}, {2, 2});
    auto gin = lulc::maxpool_backward(r, cot);
    auto loss = [&] {
        return oracle::dot_all(lulc::maxpool_forward(x, Size2{2, 2}, Size2{2, 2}).output, cot);
    };
    CHECK(oracle::max_rel_fd(x, gin, loss, rng, 50, 1e-7) < 1e-6);
}

TEST_CASE("activations: hand values") {
    Tensor<float> x({1, 4}, {0.0f, -3.0f, 2.0f, -0.5f});
    auto sig = lulc::activation_forward(Activation::sigmoid, x);
    CHECK(sig(0, 0) == doctest::Approx(0.5f));
    auto rel = lulc::activation_forward(Activation::relu, x);
    CHECK(rel(0, 1) == 0.0f);
    CHECK(rel(0, 2) == 2.0f);
    CHECK(rel(0, 3) == 0.0f);

    Tensor<float> ones({1, 4}, {1, 1, 1, 1});
    auto grel = lulc::activation_backward(Activation::relu, x, ones);
    CHECK(grel(0, 1) == 0.0f);  // derivative is 0 on the negative side
    CHECK(grel(0, 2) == 1.0f);
}

TEST_CASE("sigmoid derivative matches finite differences on 100 random points") {
    lulc::Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        const double x0 = rng.uniform(-4.0, 4.0);
        Tensor<double> x({1, 1}, {x0});
        Tensor<double> one({1, 1}, {1.0});
        auto g = lulc::activation_backward(Activation::sigmoid, x, one);
        auto fd = oracle::central_diff(
            [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, x0, 1e-6);
        CHECK(oracle::rel_err(g[0], fd, 1e-8) < 1e-8);
    }
}

TEST_CASE("lrn with alpha=0, k=1 is the identity") {
    lulc::Rng rng(10);
    Tensor<float> x({1, 4, 3, 3});
    oracle::fill_uniform(x, rng);
    LrnParams p{5, 0.0, 0.75, 1.0};
    auto y = lulc::lrn_forward(x, p);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
}

TEST_CASE("lrn hand arithmetic: 2/(1+4) = 0.4") {
    Tensor<float> x({1, 1, 1, 1}, {2});
    LrnParams p{1, 1.0, 1.0, 1.0};
    auto y = lulc::lrn_forward(x, p);
    CHECK(y[0] == doctest::Approx(0.4f));
}

TEST_CASE("lrn backward matches finite differences") {
    lulc::Rng rng(11);
    Tensor<double> x({2, 6, 3, 3});
    oracle::fill_uniform(x, rng);
    Tensor<double> cot(x.shape());
    oracle::fill_uniform(cot, rng);
    LrnParams p{5, 0.3, 0.75, 2.0};
    auto gin = lulc::lrn_backward(x, p, cot);
    auto loss = [&] { return oracle::dot_all(lulc::lrn_forward(x, p), cot); };
    CHECK(oracle::max_rel_fd(x, gin, loss, rng, 80) < 1e-5);
}

TEST_CASE("lrn parameter validation") {
    Tensor<float> x({1, 2, 2, 2});
    CHECK_THROWS_AS(lulc::lrn_forward(x, LrnParams{2, 1, 1, 1}), lulc::ParamError);
    CHECK_THROWS_AS(lulc::lrn_forward(x, LrnParams{3, 1, -1, 1}), lulc::ParamError);
}

TEST_CASE("fc identity weights pass through; zero input yields bias") {
    Tensor<float> x({2, 3}, {1, 2, 3, 4, 5, 6});
    LayerParams<float> p;
    p.weights = Tensor<float>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    p.bias = Tensor<float>({3});
    auto y = lulc::fc_forward(x, p);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

    Tensor<float> zero({2, 3});
    p.bias = Tensor<float>({3}, {-1, 0.5f, 2});
    auto yb = lulc::fc_forward(zero, p);
    for (int i = 0; i < 2; ++i) {
        CHECK(yb(i, 0) == -1.0f);
        CHECK(yb(i, 1) == 0.5f);
        CHECK(yb(i, 2) == 2.0f);
    }
}

TEST_CASE("fc forward matches matmul oracle and backward matches finite differences") {
    lulc::Rng rng(12);
    Tensor<double> x({4, 6});
    oracle::fill_uniform(x, rng);
    auto p = make_params<double>({3, 6}, rng);
    auto y = lulc::fc_forward(x, p);
    // oracle: x [4x6] * W^T [6x3] + b
    Tensor<double> wt({6, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 6; ++j) wt(j, i) = p.weights(i, j);
    auto want = oracle::matmul_ref(x, wt);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(oracle::rel_err(y(i, j), want(i, j) + p.bias[j]) < 1e-10);

    Tensor<double> cot({4, 3});
    oracle::fill_uniform(cot, rng);
    auto g = lulc::fc_backward(x, p, cot);
    auto loss = [&] { return oracle::dot_all(lulc::fc_forward(x, p), cot); };
    CHECK(oracle::max_rel_fd(x, g.input, loss, rng) < 1e-6);
    CHECK(oracle::max_rel_fd(p.weights, g.weights, loss, rng) < 1e-6);
    CHECK(oracle::max_rel_fd(p.bias, g.bias, loss, rng) < 1e-6);
}

TEST_CASE("softmax_xent uniform logits over 21 classes") {
    Tensor<float> logits({2, 21});
    auto r = lulc::softmax_xent(logits, {3, 17});
    CHECK(r.loss == doctest::Approx(std::log(21.0)).epsilon(1e-6));
    for (int j = 0; j < 21; ++j) CHECK(r.probs(0, j) == doctest::Approx(1.0f / 21).epsilon(1e-6));
}

TEST_CASE("softmax shift invariance and row normalization") {
    lulc::Rng rng(13);
    Tensor<float> logits({3, 5});
    oracle::fill_uniform(logits, rng, -3, 3);
    auto a = lulc::softmax_xent(logits, {0, 2, 4});
    Tensor<float> shifted(logits.shape());
    for (std::int64_t i = 0; i < logits.size(); ++i) shifted[i] = logits[i] + 7.5f;
    auto b = lulc::softmax_xent(shifted, {0, 2, 4});
    for (std::int64_t i = 0; i < a.probs.size(); ++i)
        CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-5));
    for (int i = 0; i < 3; ++i) {
        double row = 0;
        for (int j = 0; j < 5; ++j) {
            CHECK(a.probs(i, j) > 0.0f);
            CHECK(a.probs(i, j) < 1.0f);
            row += a.probs(i, j);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax_xent matches direct f64 evaluation and finite differences") {
    lulc::Rng rng(14);
    Tensor<double> logits({4, 6});
    oracle::fill_uniform(logits, rng, -2, 2);
    std::vector<int> labels = {1, 0, 5, 3};
    auto r = lulc::softmax_xent(logits, labels);
    // direct evaluation
    double loss = 0;
    for (int i = 0; i < 4; ++i) {
        double z = 0;
        for (int j = 0; j < 6; ++j) z += std::exp(logits(i, j));
        loss += -std::log(std::exp(logits(i, labels[i])) / z);
        for (int j = 0; j < 6; ++j)
            CHECK(oracle::rel_err(r.probs(i, j), std::exp(logits(i, j)) / z) < 1e-6);
    }
    CHECK(oracle::rel_err(r.loss, loss / 4) < 1e-6);
    auto fd_loss = [&] { return lulc::softmax_xent(logits, labels).loss; };
    CHECK(oracle::max_rel_fd(logits, r.grad_logits, fd_loss, rng, 24) < 1e-6);
}

TEST_CASE("softmax_xent rejects out-of-range labels") {
    Tensor<float> logits({1, 3});
    CHECK_THROWS_AS(lulc::softmax_xent(logits, {3}), lulc::LabelError);
    CHECK_THROWS_AS(lulc::softmax_xent(logits, {-1}), lulc::LabelError);
}

namespace {

template <typename S>
lulc::InceptionParams<S> make_inception(int c_in, int c1, int r3, int c3, int r5, int c5, int cp,
                                        lulc::Rng& rng) {
    lulc::InceptionParams<S> p;
    p.b1 = make_params<S>({c1, c_in, 1, 1}, rng);
    p.b3_reduce = make_params<S>({r3, c_in, 1, 1}, rng);
    p.b3 = make_params<S>({c3, r3, 3, 3}, rng);
    p.b5_reduce = make_params<S>({r5, c_in, 1, 1}, rng);
    p.b5 = make_params<S>({c5, r5, 5, 5}, rng);
    p.pool_proj = make_params<S>({cp, c_in, 1, 1}, rng);
    return p;
}

}  // namespace

TEST_CASE("inception concatenation arithmetic: 2+3+4+1 channels on 8x8") {
    lulc::Rng rng(15);
    Tensor<float> x({2, 3, 8, 8});
    oracle::fill_uniform(x, rng);
    auto p = make_inception<float>(3, 2, 2, 3, 2, 4, 1, rng);
    auto y = lulc::inception_forward(x, p);
    CHECK(y.shape() == std::vector<int>{2, 10, 8, 8});
    CHECK(lulc::inception_out_channels(p) == 10);
}

TEST_CASE("inception with zero weights and biases emits zeros") {
    Tensor<float> x({1, 2, 4, 4});
    lulc::Rng rng(16);
    oracle::fill_uniform(x, rng);
    lulc::InceptionParams<float> p;
    p.b1.weights = Tensor<float>({1, 2, 1, 1});
    p.b1.bias = Tensor<float>({1});
    p.b3_reduce.weights = Tensor<float>({1, 2, 1, 1});
    p.b3_reduce.bias = Tensor<float>({1});
    p.b3.weights = Tensor<float>({1, 1, 3, 3});
    p.b3.bias = Tensor<float>({1});
    p.b5_reduce.weights = Tensor<float>({1, 2, 1, 1});
    p.b5_reduce.bias = Tensor<float>({1});
    p.b5.weights = Tensor<float>({1, 1, 5, 5});
    p.b5.bias = Tensor<float>({1});
    p.pool_proj.weights = Tensor<float>({1, 2, 1, 1});
    p.pool_proj.bias = Tensor<float>({1});
    auto y = lulc::inception_forward(x, p);
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("inception equals manual composition of conv/pool primitives") {
    lulc::Rng rng(17);
    Tensor<float> x({1, 3, 6, 6});
    oracle::fill_uniform(x, rng);
    auto p = make_inception<float>(3, 2, 2, 3, 1, 2, 2, rng);
    auto got = lulc::inception_forward(x, p);

    auto a = lulc::conv_forward(x, p.b1, {1, 1}, {0, 0});
    auto b = lulc::conv_forward(lulc::conv_forward(x, p.b3_reduce, {1, 1}, {0, 0}), p.b3, {1, 1},
                                {1, 1});
    auto c = lulc::conv_forward(lulc::conv_forward(x, p.b5_reduce, {1, 1}, {0, 0}), p.b5, {1, 1},
                                {2, 2});
    auto d = lulc::conv_forward(lulc::maxpool_forward(x, Size2{3, 3}, Size2{1, 1}, Size2{1, 1}).output,
                                p.pool_proj, {1, 1}, {0, 0});
    const Tensor<float>* parts[] = {&a, &b, &c, &d};
    int off = 0;
    for (const auto* part : parts) {
        for (int ni = 0; ni < 1; ++ni)
            for (int ci = 0; ci < part->dim(1); ++ci)
                for (int y = 0; y < 6; ++y)
                    for (int xx = 0; xx < 6; ++xx)
                        CHECK(got(ni, off + ci, y, xx) == (*part)(ni, ci, y, xx));
        off += part->dim(1);
    }
}

TEST_CASE("inception backward matches finite differences") {
    lulc::Rng rng(18);
    Tensor<double> x({1, 2, 5, 5});
    oracle::fill_uniform(x, rng);
    auto p = make_inception<double>(2, 1, 1, 2, 1, 1, 1, rng);
    auto trace = lulc::inception_forward_trace(x, p);
    Tensor<double> cot(trace.output.shape());
    oracle::fill_uniform(cot, rng);
    auto g = lulc::inception_backward(x, p, trace, cot);
    auto loss = [&] { return oracle::dot_all(lulc::inception_forward(x, p), cot); };
    CHECK(oracle::max_rel_fd(x, g.input, loss, rng, 40, 1e-7) < 1e-5);
    CHECK(oracle::max_rel_fd(p.b3.weights, g.b3.weights, loss, rng, 30, 1e-7) < 1e-5);
    CHECK(oracle::max_rel_fd(p.pool_proj.weights, g.pool_proj.weights, loss, rng, 20, 1e-7) <
          1e-5);
}

TEST_CASE("inception rejects broken channel chains") {
    lulc::Rng rng(19);
    Tensor<float> x({1, 3, 6, 6});
    auto p = make_inception<float>(3, 2, 2, 3, 1, 2, 2, rng);
    p.b3 = make_params<float>({3, 5, 3, 3}, rng);  // expects 5 channels, reduce gives 2
    CHECK_THROWS_AS(lulc::inception_forward(x, p), lulc::ShapeError);
}
