#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oslab/rng.hpp"
#include "oslab/tensor.hpp"

namespace oslab {

enum class MixScheme { none, mixup, cutmix, cutout };

inline std::string to_string(MixScheme s) {
    switch (s) {
    case MixScheme::none: return "none";
    case MixScheme::mixup: return "mixup";
    case MixScheme::cutmix: return "cutmix";
    case MixScheme::cutout: return "cutout";
    }
    return "?";
}

inline MixScheme parse_mix_scheme(const std::string& s) {
    if (s == "none") return MixScheme::none;
    if (s == "mixup") return MixScheme::mixup;
    if (s == "cutmix") return MixScheme::cutmix;
    if (s == "cutout") return MixScheme::cutout;
    throw DomainError("unknown mix scheme '" + s + "'");
}

struct MixConfig {
    MixScheme scheme = MixScheme::none;
    double alpha = 1.0;     ///< Beta(alpha, alpha) shape
    bool tempered = false;  ///< train against the rebalanced targets

    void validate() const {
        if (!(alpha > 0.0)) throw DomainError("mix: alpha must be positive");
    }
};

/// Inputs mixed pairwise with per-sample interpolation factors.
template <typename T>
struct MixedBatch {
    Tensor<T> inputs;                  ///< [B,C,H,W]
    std::vector<double> lambda;        ///< weight of the sample's own content, in [0,1]
    Tensor<T> y_linear;                ///< [B,K] lambda*y_i + (1-lambda)*y_partner
    Tensor<T> y_tempered;              ///< [B,K] |2l-1|*y_linear + (1-|2l-1|)/K
    std::vector<std::size_t> partner;  ///< pairing permutation
};

// ---------------------------------------------------------------------------
// Beta(alpha, alpha) sampling

namespace detail {

/// log of a Gamma(shape, 1) variate (Marsaglia-Tsang; shape < 1 boosted via U^(1/shape)).
inline double log_gamma_variate(double shape, Rng& rng) {
    double boost = 0.0;
    if (shape < 1.0) {
        boost = std::log(rng.uniform_open0()) / shape;
        shape += 1.0;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = rng.normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = rng.uniform_open0();
        if (u < 1.0 - 0.0331 * x * x * x * x || std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return std::log(d * v) + boost;
    }
}

} // namespace detail

/// Draw lambda ~ Beta(alpha, alpha) as G1 / (G1 + G2) with Gamma(alpha) variates.
/// Computed in log space so small alpha does not underflow to 0/0.
inline double sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw DomainError("sample_lambda: alpha must be positive, got " + std::to_string(alpha));
    const double lg1 = detail::log_gamma_variate(alpha, rng);
    const double lg2 = detail::log_gamma_variate(alpha, rng);
    const double lambda = 1.0 / (1.0 + std::exp(lg2 - lg1));
    return std::clamp(lambda, 0.0, 1.0);
}

inline std::vector<double> sample_lambdas(std::size_t n, double alpha, Rng& rng) {
    std::vector<double> out(n);
    for (auto& l : out) l = sample_lambda(alpha, rng);
    return out;
}

// ---------------------------------------------------------------------------
// targets

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, std::size_t k) {
    Tensor<T> out({labels.size(), k});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw DomainError("one_hot: label " + std::to_string(labels[i]) + " outside [0," + std::to_string(k) + ")");
        out[i * k + static_cast<std::size_t>(labels[i])] = T{1};
    }
    return out;
}

/// Natural-log entropy; 0 ln 0 is taken as 0.
template <typename T>
double entropy(std::span<const T> p) {
    double h = 0.0;
    for (T v : p)
        if (v > T{0}) h -= static_cast<double>(v) * std::log(static_cast<double>(v));
    return h;
}

/// |2*lambda - 1|, the share of the linear target kept by tempering.
inline double temper_weight(double lambda) { return std::abs(2.0 * lambda - 1.0); }

/// y_tm = |2l-1| * y + (1 - |2l-1|) / K per row.
template <typename T>
Tensor<T> temper_targets(const Tensor<T>& y_linear, const std::vector<double>& lambda, std::size_t k) {
    if (y_linear.rank() != 2 || y_linear.shape()[1] != k)
        detail::shape_invalid("temper_targets", y_linear.shape(), "row width must equal K=" + std::to_string(k));
    if (lambda.size() != y_linear.shape()[0])
        detail::shape_invalid("temper_targets", y_linear.shape(), "one lambda per row required");
    Tensor<T> out(y_linear.shape());
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        const double w = temper_weight(lambda[i]);
        const double floor = (1.0 - w) / static_cast<double>(k);
        for (std::size_t c = 0; c < k; ++c)
            out[i * k + c] = static_cast<T>(w * static_cast<double>(y_linear[i * k + c]) + floor);
    }
    return out;
}

namespace detail {

inline void check_pairing(const std::vector<std::size_t>& pairing, std::size_t n) {
    if (pairing.size() != n) throw DomainError("pairing: expected " + std::to_string(n) + " entries");
    std::vector<bool> seen(n, false);
    for (auto p : pairing) {
        if (p >= n || seen[p]) throw DomainError("pairing: not a permutation of the batch indices");
        seen[p] = true;
    }
}

inline void check_lambda(const std::vector<double>& lambda, std::size_t n) {
    if (lambda.size() != n) throw DomainError("lambda: expected " + std::to_string(n) + " entries");
    for (double l : lambda)
        if (!(l >= 0.0 && l <= 1.0)) throw DomainError("lambda " + std::to_string(l) + " outside [0,1]");
}

template <typename T>
Tensor<T> mix_targets(const Tensor<T>& own, const Tensor<T>& other, const std::vector<std::size_t>& pairing,
                      const std::vector<double>& lambda) {
    const std::size_t n = own.shape()[0], k = own.shape()[1];
    Tensor<T> out({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = pairing[i];
        for (std::size_t c = 0; c < k; ++c)
            out[i * k + c] = static_cast<T>(lambda[i] * static_cast<double>(own[i * k + c]) +
                                            (1.0 - lambda[i]) * static_cast<double>(other[j * k + c]));
    }
    return out;
}

template <typename T>
void check_targets(const Tensor<T>& x, const Tensor<T>& targets) {
    if (x.rank() < 1 || targets.rank() != 2 || targets.shape()[0] != x.shape()[0])
        shape_mismatch("mix", x.shape(), targets.shape());
}

} // namespace detail

/// x~ = l*x_i + (1-l)*x_j and y~ = l*y_i + (1-l)*y_j with j = pairing[i].
/// `targets` are dense rows [B,K] (one-hot for labelled data, uniform for background).
template <typename T>
MixedBatch<T> mixup_batch(const Tensor<T>& x, const Tensor<T>& targets, const std::vector<double>& lambda,
                          const std::vector<std::size_t>& pairing) {
    detail::check_targets(x, targets);
    const std::size_t n = x.shape()[0];
    detail::check_pairing(pairing, n);
    detail::check_lambda(lambda, n);
    const std::size_t per = n ? x.numel() / n : 0;
    Tensor<T> mixed(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T l = static_cast<T>(lambda[i]);
        const T* a = x.data().data() + i * per;
        const T* b = x.data().data() + pairing[i] * per;
        T* dst = mixed.data().data() + i * per;
        for (std::size_t p = 0; p < per; ++p) dst[p] = l * a[p] + (T{1} - l) * b[p];
    }
    auto y = detail::mix_targets(targets, targets, pairing, lambda);
    auto yt = temper_targets(y, lambda, targets.shape()[1]);
    return {mixed, lambda, y, yt, pairing};
}

template <typename T>
MixedBatch<T> mixup_batch(const Tensor<T>& x, const std::vector<int>& labels, std::size_t k,
                          const std::vector<double>& lambda, const std::vector<std::size_t>& pairing) {
    return mixup_batch(x, one_hot<T>(labels, k), lambda, pairing);
}

// ---------------------------------------------------------------------------
// patch schemes

/// Axis-aligned patch [y0, y0+h) x [x0, x0+w) in pixel coordinates.
struct Box {
    std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
    std::size_t area() const { return h * w; }
};

/// Patch whose sides are sqrt(1-l') of the image sides, centred uniformly, clipped to the image.
inline Box sample_box(std::size_t height, std::size_t width, double lambda_prior, Rng& rng) {
    const double ratio = std::sqrt(1.0 - lambda_prior);
    const auto ch = static_cast<std::ptrdiff_t>(std::floor(static_cast<double>(height) * ratio));
    const auto cw = static_cast<std::ptrdiff_t>(std::floor(static_cast<double>(width) * ratio));
    const auto cy = static_cast<std::ptrdiff_t>(rng.below(height));
    const auto cx = static_cast<std::ptrdiff_t>(rng.below(width));
    const auto y0 = std::clamp<std::ptrdiff_t>(cy - ch / 2, 0, static_cast<std::ptrdiff_t>(height));
    const auto y1 = std::clamp<std::ptrdiff_t>(cy + ch / 2 + ch % 2, 0, static_cast<std::ptrdiff_t>(height));
    const auto x0 = std::clamp<std::ptrdiff_t>(cx - cw / 2, 0, static_cast<std::ptrdiff_t>(width));
    const auto x1 = std::clamp<std::ptrdiff_t>(cx + cw / 2 + cw % 2, 0, static_cast<std::ptrdiff_t>(width));
    return {static_cast<std::size_t>(y0), static_cast<std::size_t>(x0), static_cast<std::size_t>(y1 - y0),
            static_cast<std::size_t>(x1 - x0)};
}

namespace detail {

/// Writes `fill(i, c, y, x)` into box i of every channel of sample i; returns lambda = 1 - area/image.
template <typename T, typename Fill>
std::vector<double> paste_boxes(Tensor<T>& out, const std::vector<Box>& boxes, Fill fill) {
    if (out.rank() != 4) shape_invalid("patch", out.shape(), "need [B,C,H,W]");
    const std::size_t n = out.shape()[0], c = out.shape()[1], h = out.shape()[2], w = out.shape()[3];
    if (boxes.size() != n) throw DomainError("patch: one box per sample required");
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Box& b = boxes[i];
        if (b.y0 + b.h > h || b.x0 + b.w > w) throw DomainError("patch: box outside image bounds");
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = b.y0; y < b.y0 + b.h; ++y)
                for (std::size_t x = b.x0; x < b.x0 + b.w; ++x)
                    out[((i * c + ch) * h + y) * w + x] = fill(i, ch, y, x);
        lambda[i] = 1.0 - static_cast<double>(b.area()) / static_cast<double>(h * w);
    }
    return lambda;
}

} // namespace detail

/// Cutmix with explicit boxes: box i of x_i is replaced by the same region of x_pairing[i].
template <typename T>
MixedBatch<T> cutmix_with_boxes(const Tensor<T>& x, const Tensor<T>& targets, const std::vector<std::size_t>& pairing,
                                const std::vector<Box>& boxes) {
    detail::check_targets(x, targets);
    detail::check_pairing(pairing, x.shape()[0]);
    Tensor<T> mixed = x.clone();
    const std::size_t c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    auto lambda = detail::paste_boxes(mixed, boxes, [&](std::size_t i, std::size_t ch, std::size_t y, std::size_t xx) {
        return x[((pairing[i] * c + ch) * h + y) * w + xx];
    });
    auto y = detail::mix_targets(targets, targets, pairing, lambda);
    auto yt = temper_targets(y, lambda, targets.shape()[1]);
    return {mixed, lambda, y, yt, pairing};
}

/// Cutout with explicit boxes: box i is zeroed; the removed share of the target is uniform.
template <typename T>
MixedBatch<T> cutout_with_boxes(const Tensor<T>& x, const Tensor<T>& targets, const std::vector<Box>& boxes) {
    detail::check_targets(x, targets);
    const std::size_t n = x.shape()[0], k = targets.shape()[1];
    Tensor<T> mixed = x.clone();
    auto lambda = detail::paste_boxes(mixed, boxes, [](std::size_t, std::size_t, std::size_t, std::size_t) { return T{0}; });
    std::vector<std::size_t> identity(n);
    for (std::size_t i = 0; i < n; ++i) identity[i] = i;
    Tensor<T> uniform({n, k}, static_cast<T>(1.0 / static_cast<double>(k)));
    auto y = detail::mix_targets(targets, uniform, identity, lambda);
    auto yt = temper_targets(y, lambda, k);
    return {mixed, lambda, y, yt, identity};
}

template <typename T>
MixedBatch<T> cutmix_batch(const Tensor<T>& x, const Tensor<T>& targets, double alpha, Rng& rng) {
    if (x.rank() != 4) detail::shape_invalid("cutmix", x.shape(), "need [B,C,H,W]");
    const std::size_t n = x.shape()[0];
    auto pairing = rng.permutation(n);
    std::vector<Box> boxes(n);
    for (auto& b : boxes) b = sample_box(x.shape()[2], x.shape()[3], sample_lambda(alpha, rng), rng);
    return cutmix_with_boxes(x, targets, pairing, boxes);
}

template <typename T>
MixedBatch<T> cutout_batch(const Tensor<T>& x, const Tensor<T>& targets, double alpha, Rng& rng) {
    if (x.rank() != 4) detail::shape_invalid("cutout", x.shape(), "need [B,C,H,W]");
    std::vector<Box> boxes(x.shape()[0]);
    for (auto& b : boxes) b = sample_box(x.shape()[2], x.shape()[3], sample_lambda(alpha, rng), rng);
    return cutout_with_boxes(x, targets, boxes);
}

/// Mix a batch according to `config`. Scheme none returns the batch unchanged with lambda = 1.
template <typename T>
MixedBatch<T> mix_batch(const MixConfig& config, const Tensor<T>& x, const Tensor<T>& targets, Rng& rng) {
    config.validate();
    const std::size_t n = x.shape()[0];
    switch (config.scheme) {
    case MixScheme::mixup: {
        auto pairing = rng.permutation(n);
        auto lambda = sample_lambdas(n, config.alpha, rng);
        return mixup_batch(x, targets, lambda, pairing);
    }
    case MixScheme::cutmix: return cutmix_batch(x, targets, config.alpha, rng);
    case MixScheme::cutout: return cutout_batch(x, targets, config.alpha, rng);
    case MixScheme::none: break;
    }
    std::vector<std::size_t> identity(n);
    for (std::size_t i = 0; i < n; ++i) identity[i] = i;
    return mixup_batch(x, targets, std::vector<double>(n, 1.0), identity);
}

// ---------------------------------------------------------------------------
// target entropy analysis

struct EntropyPoint {
    double lambda;
    double h_linear;    ///< H(y~)
    double h_tempered;  ///< H(y~_tm)
};

/// Target entropy along a lambda grid for a representative pair: classes 0 and 1
/// (cross-class) or class 0 with itself (same-class).
inline std::vector<EntropyPoint> target_entropy_curve(std::size_t k, const std::vector<double>& grid, bool same_class) {
    if (k < 2) throw DomainError("target_entropy_curve: K must be >= 2");
    std::vector<EntropyPoint> out;
    out.reserve(grid.size());
    for (double l : grid) {
        if (!(l >= 0.0 && l <= 1.0)) throw DomainError("target_entropy_curve: lambda outside [0,1]");
        std::vector<double> y(k, 0.0);
        y[0] += l;
        y[same_class ? 0 : 1] += 1.0 - l;
        const double w = temper_weight(l);
        std::vector<double> yt(k);
        for (std::size_t c = 0; c < k; ++c) yt[c] = w * y[c] + (1.0 - w) / static_cast<double>(k);
        out.push_back({l, entropy<double>(y), entropy<double>(yt)});
    }
    return out;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}

} // namespace oslab
