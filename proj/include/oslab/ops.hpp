#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oslab/tensor.hpp"

// Differentiable ops. Every op checks operand shapes and throws ShapeError
// naming the op and the shapes involved.

namespace oslab {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodeOf = typename Tensor<T>::NodeT;

/// `b` broadcasts onto `a` when its shape equals a trailing suffix of a's shape.
inline bool trailing_broadcast(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(const char* op, const Tensor<T>& x, Fwd fwd, Bwd bwd) {
    detail::Buffer<T> out(x.numel());
    const auto xs = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
    return Tensor<T>::make_result(op, x.shape(), std::move(out), {x}, [bwd](NodeOf<T>& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < self.data.size(); ++i)
            in.grad[i] += bwd(in.data[i], self.data[i]) * self.grad[i];
    });
}

template <typename T>
void check_finite(const char* op, const Tensor<T>& x) {
    for (T v : x.data()) {
        if (std::isnan(v)) throw DomainError(std::string(op) + ": NaN input");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise

/// a + b. b may have a's shape or a trailing suffix of it (e.g. bias [N] onto [B,N]).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!detail::trailing_broadcast(a.shape(), b.shape())) detail::shape_mismatch("add", a.shape(), b.shape());
    const std::size_t period = b.numel();
    detail::Buffer<T> out(a.numel());
    const auto as = a.data();
    const auto bs = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[period ? i % period : 0];
    return Tensor<T>::make_result("add", a.shape(), std::move(out), {a, b}, [period](auto& self) {
        auto& pa = Tensor<T>::parent(self, 0);
        auto& pb = Tensor<T>::parent(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i];
            if (pb.requires_grad) pb.grad[i % period] += self.grad[i];
        }
    });
}

/// a - b, same shapes.
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) detail::shape_mismatch("sub", a.shape(), b.shape());
    detail::Buffer<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor<T>::make_result("sub", a.shape(), std::move(out), {a, b}, [](auto& self) {
        auto& pa = Tensor<T>::parent(self, 0);
        auto& pb = Tensor<T>::parent(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i];
            if (pb.requires_grad) pb.grad[i] -= self.grad[i];
        }
    });
}

/// a * b elementwise. Same broadcasting rule as add.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!detail::trailing_broadcast(a.shape(), b.shape())) detail::shape_mismatch("mul", a.shape(), b.shape());
    const std::size_t period = b.numel();
    detail::Buffer<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[period ? i % period : 0];
    return Tensor<T>::make_result("mul", a.shape(), std::move(out), {a, b}, [period](auto& self) {
        auto& pa = Tensor<T>::parent(self, 0);
        auto& pb = Tensor<T>::parent(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const std::size_t j = i % period;
            if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[j];
            if (pb.requires_grad) pb.grad[j] += self.grad[i] * pa.data[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return detail::unary("scale", x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary("add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return scale(x, T{-1});
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary("square", x, [](T v) { return v * v; }, [](T v, T) { return T{2} * v; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary(
        "relu", x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

/// max(x, c) with a constant c; gradient passes where x > c.
template <typename T>
Tensor<T> maximum(const Tensor<T>& x, T c) {
    return detail::unary(
        "maximum", x, [c](T v) { return v > c ? v : c; }, [c](T v, T) { return v > c ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary(
        "sigmoid", x,
        [](T v) { return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v)); },
        [](T, T y) { return y * (T{1} - y); });
}

/// log(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    return detail::unary(
        "softplus", x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
        [](T v, T) { return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v)); });
}

/// Parametric ReLU. slope has one entry per channel (axis 1) or a single shared entry.
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
    if (x.rank() < 2) detail::shape_invalid("prelu", x.shape(), "need rank >= 2");
    const std::size_t channels = x.shape()[1];
    if (slope.numel() != channels && slope.numel() != 1) detail::shape_mismatch("prelu", x.shape(), slope.shape());
    const std::size_t inner = x.numel() / (x.shape()[0] * channels);
    const bool shared = slope.numel() == 1;
    auto channel_of = [=](std::size_t i) { return shared ? std::size_t{0} : (i / inner) % channels; };
    detail::Buffer<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x[i];
        out[i] = v > T{0} ? v : slope[channel_of(i)] * v;
    }
    return Tensor<T>::make_result("prelu", x.shape(), std::move(out), {x, slope}, [channel_of](auto& self) {
        auto& px = Tensor<T>::parent(self, 0);
        auto& ps = Tensor<T>::parent(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T v = px.data[i];
            const std::size_t c = channel_of(i);
            if (px.requires_grad) px.grad[i] += self.grad[i] * (v > T{0} ? T{1} : ps.data[c]);
            if (ps.requires_grad && v <= T{0}) ps.grad[c] += self.grad[i] * v;
        }
    });
}

// ---------------------------------------------------------------------------
// shape

/// Same data, new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel_of(shape) != x.numel()) detail::shape_mismatch("reshape", x.shape(), shape);
    return Tensor<T>::make_result("reshape", std::move(shape), detail::Buffer<T>(x.data().begin(), x.data().end()), {x}, [](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    });
}

/// Rows [begin, end) along axis 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    if (x.rank() < 1 || begin > end || end > x.shape()[0])
        detail::shape_invalid("slice_rows", x.shape(),
                              "rows [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range");
    const std::size_t row = x.numel() / std::max<std::size_t>(x.shape()[0], 1);
    Shape shape = x.shape();
    shape[0] = end - begin;
    detail::Buffer<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                       x.data().begin() + static_cast<std::ptrdiff_t>(end * row));
    const std::size_t offset = begin * row;
    return Tensor<T>::make_result("slice_rows", std::move(shape), std::move(out), {x}, [offset](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[offset + i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// reductions

/// Sum of all elements, shape [].
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s{0};
    for (T v : x.data()) s += v;
    return Tensor<T>::make_result("sum", Shape{}, {s}, {x}, [](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (auto& g : in.grad) g += self.grad[0];
    });
}

/// Mean of all elements, shape [].
template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) detail::shape_invalid("mean", x.shape(), "empty tensor");
    const T inv = T{1} / static_cast<T>(x.numel());
    return scale(sum(x), inv);
}

/// Sum over the last axis of a [B,K] tensor, shape [B].
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& x) {
    if (x.rank() != 2) detail::shape_invalid("sum_rows", x.shape(), "need rank 2");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    detail::Buffer<T> out(rows, T{0});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r] += x[r * cols + c];
    return Tensor<T>::make_result("sum_rows", Shape{rows}, std::move(out), {x}, [cols](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i / cols];
    });
}

/// Euclidean norm of each row of [B,F], shape [B]. Gradient at a zero row is zero.
template <typename T>
Tensor<T> row_l2_norm(const Tensor<T>& x) {
    if (x.rank() != 2) detail::shape_invalid("row_l2_norm", x.shape(), "need rank 2");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    detail::Buffer<T> out(rows, T{0});
    for (std::size_t r = 0; r < rows; ++r) {
        T s{0};
        for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c] * x[r * cols + c];
        out[r] = std::sqrt(s);
    }
    return Tensor<T>::make_result("row_l2_norm", Shape{rows}, std::move(out), {x}, [cols](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < in.grad.size(); ++i) {
            const T n = self.data[i / cols];
            if (n > T{0}) in.grad[i] += self.grad[i / cols] * in.data[i] / n;
        }
    });
}

/// Row-wise log-softmax of [B,K] with max subtraction.
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
    if (x.rank() != 2) detail::shape_invalid("log_softmax", x.shape(), "need rank 2");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    detail::Buffer<T> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * cols;
        const T m = *std::max_element(in, in + cols);
        T s{0};
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - m);
        const T lse = m + std::log(s);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
    }
    return Tensor<T>::make_result("log_softmax", x.shape(), std::move(out), {x}, [rows, cols](auto& self) {
        auto& in = Tensor<T>::parent(self, 0);
        if (!in.requires_grad) return;
        for (std::size_t r = 0; r < rows; ++r) {
            T gs{0};
            for (std::size_t c = 0; c < cols; ++c) gs += self.grad[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                in.grad[i] += self.grad[i] - std::exp(self.data[i]) * gs;
            }
        }
    });
}

/// Row-wise softmax values (no graph).
template <typename T>
std::vector<T> softmax_values(const Tensor<T>& x) {
    NoGradGuard guard;
    auto ls = log_softmax(x);
    std::vector<T> out(ls.values());
    for (auto& v : out) v = std::exp(v);
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra

/// [M,K] x [K,N] -> [M,N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        detail::shape_mismatch("matmul", a.shape(), b.shape());
    const auto m = static_cast<Eigen::Index>(a.shape()[0]);
    const auto k = static_cast<Eigen::Index>(a.shape()[1]);
    const auto n = static_cast<Eigen::Index>(b.shape()[1]);
    detail::Buffer<T> out(static_cast<std::size_t>(m * n));
    detail::MatMap<T>(out.data(), m, n).noalias() =
        detail::CMatMap<T>(a.data().data(), m, k) * detail::CMatMap<T>(b.data().data(), k, n);
    return Tensor<T>::make_result("matmul", Shape{a.shape()[0], b.shape()[1]}, std::move(out), {a, b},
                                  [m, k, n](auto& self) {
                                      auto& pa = Tensor<T>::parent(self, 0);
                                      auto& pb = Tensor<T>::parent(self, 1);
                                      detail::CMatMap<T> g(self.grad.data(), m, n);
                                      if (pa.requires_grad)
                                          detail::MatMap<T>(pa.grad.data(), m, k).noalias() +=
                                              g * detail::CMatMap<T>(pb.data.data(), k, n).transpose();
                                      if (pb.requires_grad)
                                          detail::MatMap<T>(pb.grad.data(), k, n).noalias() +=
                                              detail::CMatMap<T>(pa.data.data(), m, k).transpose() * g;
                                  });
}

/// Fully connected layer: x [B,in], weight [out,in], optional bias [out] -> [B,out].
/// Pass an empty tensor (numel 0) as bias for a bias-free layer.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || x.shape()[1] != weight.shape()[1])
        detail::shape_mismatch("linear", x.shape(), weight.shape());
    const bool has_bias = bias.numel() != 0;
    if (has_bias && bias.shape() != Shape{weight.shape()[0]}) detail::shape_mismatch("linear", weight.shape(), bias.shape());
    const auto batch = static_cast<Eigen::Index>(x.shape()[0]);
    const auto in = static_cast<Eigen::Index>(x.shape()[1]);
    const auto outf = static_cast<Eigen::Index>(weight.shape()[0]);
    detail::Buffer<T> out(static_cast<std::size_t>(batch * outf));
    detail::MatMap<T> y(out.data(), batch, outf);
    y.noalias() = detail::CMatMap<T>(x.data().data(), batch, in) *
                  detail::CMatMap<T>(weight.data().data(), outf, in).transpose();
    if (has_bias) {
        for (Eigen::Index r = 0; r < batch; ++r)
            for (Eigen::Index c = 0; c < outf; ++c) y(r, c) += bias[static_cast<std::size_t>(c)];
    }
    return Tensor<T>::make_result(
        "linear", Shape{x.shape()[0], weight.shape()[0]}, std::move(out), {x, weight, bias},
        [batch, in, outf, has_bias](auto& self) {
            auto& px = Tensor<T>::parent(self, 0);
            auto& pw = Tensor<T>::parent(self, 1);
            auto& pb = Tensor<T>::parent(self, 2);
            detail::CMatMap<T> g(self.grad.data(), batch, outf);
            if (px.requires_grad)
                detail::MatMap<T>(px.grad.data(), batch, in).noalias() +=
                    g * detail::CMatMap<T>(pw.data.data(), outf, in);
            if (pw.requires_grad)
                detail::MatMap<T>(pw.grad.data(), outf, in).noalias() +=
                    g.transpose() * detail::CMatMap<T>(px.data.data(), batch, in);
            if (has_bias && pb.requires_grad) {
                for (Eigen::Index r = 0; r < batch; ++r)
                    for (Eigen::Index c = 0; c < outf; ++c) pb.grad[static_cast<std::size_t>(c)] += g(r, c);
            }
        });
}

// ---------------------------------------------------------------------------
// convolution and pooling

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

namespace detail {

struct ConvGeometry {
    std::size_t channels, height, width, kh, kw, stride, pad, out_h, out_w;
    std::size_t patch() const { return channels * kh * kw; }
    std::size_t pixels() const { return out_h * out_w; }
};

/// cols[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*s + i - p][ox*s + j - p] (zero outside).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                        std::fill(dst, dst + g.out_w, T{0});
                        continue;
                    }
                    const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T{0}
                                                                                           : src[ix];
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* x) {
    for (std::size_t c = 0; c < g.channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    T* dst = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += row[oy * g.out_w + ox];
                    }
                }
            }
}

} // namespace detail

/// 2-D cross-correlation: x [N,C,H,W], weight [O,C,kh,kw], optional bias [O] -> [N,O,OH,OW]
/// with OH = (H + 2p - kh)/s + 1. Implemented as im2col + GEMM per sample.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dParams params = {}) {
    if (x.rank() != 4 || weight.rank() != 4 || x.shape()[1] != weight.shape()[1])
        detail::shape_mismatch("conv2d", x.shape(), weight.shape());
    if (params.stride == 0) detail::shape_invalid("conv2d", weight.shape(), "stride must be positive");
    const bool has_bias = bias.numel() != 0;
    if (has_bias && bias.shape() != Shape{weight.shape()[0]}) detail::shape_mismatch("conv2d", weight.shape(), bias.shape());
    const std::size_t n = x.shape()[0];
    const std::size_t out_c = weight.shape()[0];
    detail::ConvGeometry g{x.shape()[1], x.shape()[2], x.shape()[3], weight.shape()[2], weight.shape()[3],
                           params.stride, params.padding, 0, 0};
    if (g.height + 2 * g.pad < g.kh || g.width + 2 * g.pad < g.kw)
        detail::shape_mismatch("conv2d", x.shape(), weight.shape());
    g.out_h = (g.height + 2 * g.pad - g.kh) / g.stride + 1;
    g.out_w = (g.width + 2 * g.pad - g.kw) / g.stride + 1;

    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pixels = static_cast<Eigen::Index>(g.pixels());
    const auto oc = static_cast<Eigen::Index>(out_c);
    const std::size_t in_stride = g.channels * g.height * g.width;
    const std::size_t out_stride = out_c * g.pixels();

    detail::Buffer<T> out(n * out_stride);
    detail::Buffer<T> cols(g.patch() * g.pixels());
    detail::CMatMap<T> w(weight.data().data(), oc, patch);
    for (std::size_t s = 0; s < n; ++s) {
        detail::im2col(x.data().data() + s * in_stride, g, cols.data());
        detail::MatMap<T> y(out.data() + s * out_stride, oc, pixels);
        y.noalias() = w * detail::CMatMap<T>(cols.data(), patch, pixels);
        if (has_bias) y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.data().data(), oc);
    }
    return Tensor<T>::make_result(
        "conv2d", Shape{n, out_c, g.out_h, g.out_w}, std::move(out), {x, weight, bias},
        [g, n, patch, pixels, oc, in_stride, out_stride, has_bias](auto& self) {
            auto& px = Tensor<T>::parent(self, 0);
            auto& pw = Tensor<T>::parent(self, 1);
            auto& pb = Tensor<T>::parent(self, 2);
            detail::Buffer<T> cols(static_cast<std::size_t>(patch * pixels));
            detail::CMatMap<T> w(pw.data.data(), oc, patch);
            for (std::size_t s = 0; s < n; ++s) {
                detail::CMatMap<T> gy(self.grad.data() + s * out_stride, oc, pixels);
                if (pw.requires_grad) {
                    detail::im2col(px.data.data() + s * in_stride, g, cols.data());
                    detail::MatMap<T>(pw.grad.data(), oc, patch).noalias() +=
                        gy * detail::CMatMap<T>(cols.data(), patch, pixels).transpose();
                }
                if (has_bias && pb.requires_grad) {
                    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(pb.grad.data(), oc) += gy.rowwise().sum();
                }
                if (px.requires_grad) {
                    detail::MatMap<T>(cols.data(), patch, pixels).noalias() = w.transpose() * gy;
                    detail::col2im_add(cols.data(), g, px.grad.data() + s * in_stride);
                }
            }
        });
}

/// Max pooling over k x k windows with the given stride: [N,C,H,W] -> [N,C,(H-k)/s+1,(W-k)/s+1].
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
    if (x.rank() != 4) detail::shape_invalid("max_pool2d", x.shape(), "need rank 4");
    if (kernel == 0 || stride == 0 || x.shape()[2] < kernel || x.shape()[3] < kernel)
        detail::shape_invalid("max_pool2d", x.shape(), "window does not fit");
    const std::size_t planes = x.shape()[0] * x.shape()[1];
    const std::size_t h = x.shape()[2], w = x.shape()[3];
    const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
    detail::Buffer<T> out(planes * oh * ow);
    std::vector<std::uint32_t> argmax(out.size());
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.data().data() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * stride) * w + ox * stride;
                for (std::size_t i = 0; i < kernel; ++i)
                    for (std::size_t j = 0; j < kernel; ++j) {
                        const std::size_t idx = (oy * stride + i) * w + ox * stride + j;
                        if (src[idx] > src[best]) best = idx;
                    }
                const std::size_t o = (p * oh + oy) * ow + ox;
                out[o] = src[best];
                argmax[o] = static_cast<std::uint32_t>(p * h * w + best);
            }
    }
    return Tensor<T>::make_result("max_pool2d", Shape{x.shape()[0], x.shape()[1], oh, ow}, std::move(out), {x},
                                  [argmax = std::move(argmax)](auto& self) {
                                      auto& in = Tensor<T>::parent(self, 0);
                                      if (!in.requires_grad) return;
                                      for (std::size_t o = 0; o < argmax.size(); ++o)
                                          in.grad[argmax[o]] += self.grad[o];
                                  });
}

} // namespace oslab
