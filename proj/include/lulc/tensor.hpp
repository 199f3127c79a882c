#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lulc/error.hpp"

namespace lulc {

enum class Dtype { f32, f64 };

template <typename Scalar>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
    return std::is_same_v<Scalar, float> ? Dtype::f32 : Dtype::f64;
}

inline std::string dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major N-d array, rank 1..4. Rank-4 tensors follow the
/// NCHW convention: element (n,c,h,w) lives at ((n*C + c)*H + h)*W + w.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(checked_size(shape_)), Scalar(0));
    }

    Tensor(std::vector<int> shape, std::vector<Scalar> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != static_cast<std::int64_t>(data_.size()))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const Scalar& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    Scalar& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    const Scalar& operator()(int i, int j) const {
        return data_[static_cast<std::size_t>(i) * shape_[1] + j];
    }

    std::int64_t flat_index(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Scalar& operator()(int n, int c, int h, int w) {
        return data_[static_cast<std::size_t>(flat_index(n, c, h, w))];
    }
    const Scalar& operator()(int n, int c, int h, int w) const {
        return data_[static_cast<std::size_t>(flat_index(n, c, h, w))];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Reinterprets the buffer under a new shape of equal element count.
    Tensor reshaped(std::vector<int> shape) const {
        Tensor t;
        t.shape_ = std::move(shape);
        if (checked_size(t.shape_) != size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(t.shape_));
        t.data_ = data_;
        return t;
    }

    template <typename T>
    Tensor<T> cast() const {
        std::vector<T> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<T>(data_[i]);
        return Tensor<T>(shape_, std::move(d));
    }

private:
    static std::int64_t checked_size(const std::vector<int>& shape) {
        if (shape.empty() || shape.size() > 4)
            throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
        std::int64_t n = 1;
        for (int e : shape) {
            if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
            n *= e;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<Scalar> data_;
};

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Maps a rank-2 tensor as an Eigen row-major matrix (no copy).
template <typename S>
Eigen::Map<const MatrixRM<S>> as_matrix(const Tensor<S>& t) {
    if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got " + shape_str(t.shape()));
    return Eigen::Map<const MatrixRM<S>>(t.data(), t.dim(0), t.dim(1));
}

template <typename S>
Eigen::Map<MatrixRM<S>> as_matrix(Tensor<S>& t) {
    if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got " + shape_str(t.shape()));
    return Eigen::Map<MatrixRM<S>>(t.data(), t.dim(0), t.dim(1));
}

/// c[i][j] = sum_k a[i][k] * b[k][j]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor<S> c({a.dim(0), b.dim(1)});
    as_matrix(c).noalias() = as_matrix(a) * as_matrix(b);
    return c;
}

/// 2-d extent (kernel, stride, pad, pooling window).
struct Size2 {
    int h = 0;
    int w = 0;
};

/// Output extent of a sliding window. Rejects geometries where the
/// stride does not tile exactly, rather than truncating.
inline int conv_out_extent(int in, int k, int s, int p, const char* axis) {
    if (k < 1 || s < 1 || p < 0)
        throw GeometryError(std::string("bad window parameters on ") + axis + ": kernel=" +
                            std::to_string(k) + " stride=" + std::to_string(s) +
                            " pad=" + std::to_string(p));
    int numer = in + 2 * p - k;
    if (numer < 0 || numer % s != 0)
        throw GeometryError(std::string("window does not tile ") + axis + ": (" +
                            std::to_string(in) + " + 2*" + std::to_string(p) + " - " +
                            std::to_string(k) + ")/" + std::to_string(s) + " + 1 = " +
                            std::to_string(static_cast<double>(numer) / s + 1.0) +
                            " is not a positive integer");
    return numer / s + 1;
}

inline Size2 conv_out_size(int h, int w, Size2 kernel, Size2 stride, Size2 pad) {
    return {conv_out_extent(h, kernel.h, stride.h, pad.h, "height"),
            conv_out_extent(w, kernel.w, stride.w, pad.w, "width")};
}

/// Rearranges receptive fields into columns: output is
/// [C*kh*kw x N*Ho*Wo], one column per output position, zero-padded
/// outside the image. Column (n,ho,wo) lives at (n*Ho + ho)*Wo + wo.
template <typename S>
Tensor<S> im2col(const Tensor<S>& input, Size2 kernel, Size2 stride, Size2 pad) {
    if (input.rank() != 4)
        throw ShapeError("im2col expects NCHW input, got " + shape_str(input.shape()));
    const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const Size2 out = conv_out_size(h, w, kernel, stride, pad);
    Tensor<S> cols({c * kernel.h * kernel.w, n * out.h * out.w});
    const std::int64_t ncols = cols.dim(1);
    S* dst = cols.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < kernel.h; ++ki) {
            for (int kj = 0; kj < kernel.w; ++kj) {
                // row (ci*kh + ki)*kw + kj, filled across all output positions
                for (int ni = 0; ni < n; ++ni) {
                    for (int ho = 0; ho < out.h; ++ho) {
                        const int hi = ho * stride.h + ki - pad.h;
                        for (int wo = 0; wo < out.w; ++wo) {
                            const int wi = wo * stride.w + kj - pad.w;
                            const bool inside = hi >= 0 && hi < h && wi >= 0 && wi < w;
                            *dst++ = inside ? input(ni, ci, hi, wi) : S(0);
                        }
                    }
                }
            }
        }
    }
    (void)ncols;
    return cols;
}

/// Adjoint of im2col: scatter-adds columns back into an NCHW tensor.
template <typename S>
Tensor<S> col2im(const Tensor<S>& cols, const std::vector<int>& input_shape, Size2 kernel,
                 Size2 stride, Size2 pad) {
    if (input_shape.size() != 4)
        throw ShapeError("col2im expects an NCHW target shape, got " + shape_str(input_shape));
    const int n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    const Size2 out = conv_out_size(h, w, kernel, stride, pad);
    const std::vector<int> want = {c * kernel.h * kernel.w, n * out.h * out.w};
    if (cols.shape() != want)
        throw ShapeError("col2im column shape " + shape_str(cols.shape()) + " does not match " +
                         shape_str(want));
    Tensor<S> img(input_shape);
    const S* src = cols.data();
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < kernel.h; ++ki) {
            for (int kj = 0; kj < kernel.w; ++kj) {
                for (int ni = 0; ni < n; ++ni) {
                    for (int ho = 0; ho < out.h; ++ho) {
                        const int hi = ho * stride.h + ki - pad.h;
                        for (int wo = 0; wo < out.w; ++wo) {
                            const int wi = wo * stride.w + kj - pad.w;
                            if (hi >= 0 && hi < h && wi >= 0 && wi < w)
                                img(ni, ci, hi, wi) += *src;
                            ++src;
                        }
                    }
                }
            }
        }
    }
    return img;
}

}  // namespace lulc
