#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oslab/augment.hpp"
#include "oslab/ops.hpp"

namespace oslab {

enum class LossKind {
    cross_entropy,
    tempered_mixup,
    entropic_open_set,
    objectosphere,
    label_smoothing,
    one_vs_rest,
    center_loss,
    hybrid_tempered_bg,
};

inline const std::vector<std::pair<LossKind, std::string>>& loss_kind_names() {
    static const std::vector<std::pair<LossKind, std::string>> names = {
        {LossKind::cross_entropy, "cross_entropy"},     {LossKind::tempered_mixup, "tempered_mixup"},
        {LossKind::entropic_open_set, "entropic_open_set"}, {LossKind::objectosphere, "objectosphere"},
        {LossKind::label_smoothing, "label_smoothing"}, {LossKind::one_vs_rest, "one_vs_rest"},
        {LossKind::center_loss, "center_loss"},         {LossKind::hybrid_tempered_bg, "hybrid_tempered_bg"},
    };
    return names;
}

inline std::string to_string(LossKind k) {
    for (const auto& [kind, name] : loss_kind_names())
        if (kind == k) return name;
    return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
    for (const auto& [kind, name] : loss_kind_names())
        if (name == s) return kind;
    throw DomainError("unknown loss kind '" + s + "'");
}

/// True for methods trained with an auxiliary background set.
inline bool uses_background(LossKind k) {
    return k == LossKind::entropic_open_set || k == LossKind::objectosphere || k == LossKind::hybrid_tempered_bg;
}

struct LossConfig {
    LossKind kind = LossKind::cross_entropy;
    double zeta = 1.0;            ///< weight of the uniform-target term for mixed samples
    double smoothing = 0.1;       ///< label smoothing epsilon
    double center_weight = 0.01;
    double center_lr = 0.5;       ///< EMA rate of the class centers
    double margin = 5.0;          ///< objectosphere feature-magnitude margin xi
    double objecto_weight = 0.1;

    /// Range checks apply to every field, relevant to `kind` or not.
    void validate() const {
        if (!(zeta >= 0.0)) throw DomainError("loss: zeta must be >= 0");
        if (!(smoothing >= 0.0 && smoothing < 1.0)) throw DomainError("loss: smoothing must be in [0,1)");
        if (!(center_weight >= 0.0)) throw DomainError("loss: center_weight must be >= 0");
        if (!(center_lr > 0.0)) throw DomainError("loss: center_lr must be > 0");
        if (!(margin >= 0.0)) throw DomainError("loss: margin must be >= 0");
        if (!(objecto_weight >= 0.0)) throw DomainError("loss: objecto_weight must be >= 0");
    }
};

inline void to_json(nlohmann::json& j, const LossConfig& c) {
    j = {{"kind", to_string(c.kind)},           {"zeta", c.zeta},
         {"smoothing", c.smoothing},             {"center_weight", c.center_weight},
         {"center_lr", c.center_lr},             {"margin", c.margin},
         {"objecto_weight", c.objecto_weight}};
}

inline void from_json(const nlohmann::json& j, LossConfig& c) {
    LossConfig d;
    if (j.contains("kind")) d.kind = parse_loss_kind(j.at("kind").get<std::string>());
    d.zeta = j.value("zeta", d.zeta);
    d.smoothing = j.value("smoothing", d.smoothing);
    d.center_weight = j.value("center_weight", d.center_weight);
    d.center_lr = j.value("center_lr", d.center_lr);
    d.margin = j.value("margin", d.margin);
    d.objecto_weight = j.value("objecto_weight", d.objecto_weight);
    c = d;
}

namespace detail {

template <typename T>
void check_logits(const char* op, const Tensor<T>& logits, const Tensor<T>& targets) {
    if (logits.rank() != 2 || logits.shape() != targets.shape()) shape_mismatch(op, logits.shape(), targets.shape());
    check_finite(op, logits);
}

/// -sum(weights * log_softmax(logits)); weights are constants.
template <typename T>
Tensor<T> weighted_nll(const Tensor<T>& logits, Tensor<T> weights) {
    return neg(sum(mul(log_softmax(logits), weights)));
}

} // namespace detail

/// Mean over the batch of -sum_k t_k log softmax(logits)_k.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets) {
    detail::check_logits("cross_entropy", logits, targets);
    const std::size_t b = logits.shape()[0];
    if (b == 0) detail::shape_invalid("cross_entropy", logits.shape(), "empty batch");
    return scale(detail::weighted_nll(logits, targets.detach()), T{1} / static_cast<T>(b));
}

/// Per sample: -|2l-1| sum_k y_k log s_k - zeta (1-|2l-1|)/K sum_k log s_k, averaged over the batch.
template <typename T>
Tensor<T> tempered_mixup_loss(const Tensor<T>& logits, const Tensor<T>& y_linear, const std::vector<double>& lambda,
                              double zeta) {
    if (!(zeta >= 0.0)) throw DomainError("tempered_mixup_loss: zeta must be >= 0");
    detail::check_logits("tempered_mixup_loss", logits, y_linear);
    const std::size_t b = logits.shape()[0], k = logits.shape()[1];
    if (lambda.size() != b) detail::shape_invalid("tempered_mixup_loss", logits.shape(), "one lambda per row required");
    Tensor<T> w({b, k});
    for (std::size_t i = 0; i < b; ++i) {
        if (!(lambda[i] >= 0.0 && lambda[i] <= 1.0)) throw DomainError("tempered_mixup_loss: lambda outside [0,1]");
        const double keep = temper_weight(lambda[i]);
        const double floor = zeta * (1.0 - keep) / static_cast<double>(k);
        for (std::size_t c = 0; c < k; ++c)
            w[i * k + c] = static_cast<T>((keep * static_cast<double>(y_linear[i * k + c]) + floor) / static_cast<double>(b));
    }
    return detail::weighted_nll(logits, w);
}

/// Background term of the confidence loss: mean over rows of -(1/K) sum_k log s_k.
template <typename T>
Tensor<T> uniform_target_loss(const Tensor<T>& logits) {
    if (logits.rank() != 2 || logits.shape()[0] == 0) detail::shape_invalid("uniform_target_loss", logits.shape(), "need [B>0,K]");
    detail::check_finite("uniform_target_loss", logits);
    const std::size_t b = logits.shape()[0], k = logits.shape()[1];
    return detail::weighted_nll(logits, Tensor<T>(logits.shape(), static_cast<T>(1.0 / static_cast<double>(b * k))));
}

/// Cross-entropy on known samples plus the uniform-target term on background samples.
/// An empty background batch (zero rows) drops the second term.
template <typename T>
Tensor<T> confidence_loss(const Tensor<T>& logits_known, const Tensor<T>& targets_known,
                          const Tensor<T>& logits_background, std::size_t k) {
    const bool has_known = logits_known.rank() == 2 && logits_known.shape()[0] > 0;
    const bool has_bg = logits_background.rank() == 2 && logits_background.shape()[0] > 0;
    if (has_bg && logits_background.shape()[1] != k)
        detail::shape_invalid("confidence_loss", logits_background.shape(), "background width must equal K");
    if (!has_known && !has_bg) throw DomainError("confidence_loss: both batches empty");
    if (!has_bg) return cross_entropy(logits_known, targets_known);
    if (!has_known) return uniform_target_loss(logits_background);
    return add(cross_entropy(logits_known, targets_known), uniform_target_loss(logits_background));
}

/// (1-eps) * onehot + eps/K.
template <typename T>
Tensor<T> label_smoothing_targets(const std::vector<int>& labels, double eps, std::size_t k) {
    if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("label_smoothing_targets: eps must be in [0,1)");
    Tensor<T> out = one_hot<T>(labels, k);
    for (auto& v : out.data()) v = static_cast<T>((1.0 - eps) * static_cast<double>(v) + eps / static_cast<double>(k));
    return out;
}

/// Mean over B x K of BCE(sigmoid(z), [k == y]) = softplus(z) - t z.
template <typename T>
Tensor<T> one_vs_rest_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.shape()[0] != labels.size() || labels.empty())
        detail::shape_invalid("one_vs_rest_loss", logits.shape(), "need [B,K] with B labels");
    detail::check_finite("one_vs_rest_loss", logits);
    const auto t = one_hot<T>(labels, logits.shape()[1]);
    return mean(sub(softplus(logits), mul(logits, t)));
}

/// Per-class feature centers, updated by exponential moving average toward batch class means.
template <typename T>
struct CenterState {
    Tensor<T> centers;  ///< [K, F]
    double rate = 0.5;

    CenterState() = default;
    CenterState(std::size_t k, std::size_t feature_dim, double update_rate)
        : centers(Shape{k, feature_dim}), rate(update_rate) {}
};

/// weight * mean over the batch of 0.5 ||f_i - c_{y_i}||^2.
template <typename T>
Tensor<T> center_loss(const Tensor<T>& features, const std::vector<int>& labels, const CenterState<T>& state,
                      double weight) {
    if (features.rank() != 2 || features.shape()[0] != labels.size() || labels.empty())
        detail::shape_invalid("center_loss", features.shape(), "need [B,F] with B labels");
    const std::size_t b = features.shape()[0], f = features.shape()[1];
    if (state.centers.shape() != Shape{state.centers.shape()[0], f})
        detail::shape_mismatch("center_loss", features.shape(), state.centers.shape());
    const std::size_t k = state.centers.shape()[0];
    Tensor<T> targets({b, f});
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw DomainError("center_loss: label " + std::to_string(labels[i]) + " outside [0,K)");
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        for (std::size_t d = 0; d < f; ++d) targets[i * f + d] = state.centers[c * f + d];
    }
    return scale(sum(square(sub(features, targets))), static_cast<T>(0.5 * weight / static_cast<double>(b)));
}

/// c_k <- (1-rate) c_k + rate * mean of the batch features labelled k, for classes present.
template <typename T>
void center_update(CenterState<T>& state, const Tensor<T>& features, const std::vector<int>& labels) {
    const std::size_t k = state.centers.shape()[0], f = state.centers.shape()[1];
    if (features.rank() != 2 || features.shape()[1] != f || features.shape()[0] != labels.size())
        detail::shape_mismatch("center_update", features.shape(), state.centers.shape());
    std::vector<double> sums(k * f, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = static_cast<std::size_t>(labels[i]);
        if (c >= k) throw DomainError("center_update: label outside [0,K)");
        ++counts[c];
        for (std::size_t d = 0; d < f; ++d) sums[c * f + d] += static_cast<double>(features[i * f + d]);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (!counts[c]) continue;
        for (std::size_t d = 0; d < f; ++d) {
            const double mean_cd = sums[c * f + d] / static_cast<double>(counts[c]);
            auto& cur = state.centers[c * f + d];
            cur = static_cast<T>((1.0 - state.rate) * static_cast<double>(cur) + state.rate * mean_cd);
        }
    }
}

/// Confidence loss over the combined batch plus
/// weight * mean_i [ known: max(xi - ||f_i||, 0)^2 ; background: ||f_i||^2 ].
/// `targets` rows of background samples are ignored.
template <typename T>
Tensor<T> objectosphere_loss(const Tensor<T>& features, const Tensor<T>& logits, const Tensor<T>& targets,
                             const std::vector<bool>& is_background, double xi, double weight) {
    if (!(xi >= 0.0)) throw DomainError("objectosphere_loss: margin must be >= 0");
    detail::check_logits("objectosphere_loss", logits, targets);
    const std::size_t b = logits.shape()[0], k = logits.shape()[1];
    if (features.rank() != 2 || features.shape()[0] != b || is_background.size() != b)
        detail::shape_mismatch("objectosphere_loss", features.shape(), logits.shape());
    std::size_t n_bg = 0;
    for (bool bg : is_background) n_bg += bg ? 1 : 0;
    const std::size_t n_known = b - n_bg;

    Tensor<T> w({b, k});
    Tensor<T> known_mask({b}), bg_mask({b});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t c = 0; c < k; ++c)
            w[i * k + c] = is_background[i] ? static_cast<T>(1.0 / static_cast<double>(k * n_bg))
                                            : static_cast<T>(static_cast<double>(targets[i * k + c]) / static_cast<double>(n_known));
        known_mask[i] = is_background[i] ? T{0} : T{1};
        bg_mask[i] = is_background[i] ? T{1} : T{0};
    }
    auto entropic = detail::weighted_nll(logits, w);
    auto hinge = square(relu(add_scalar(neg(row_l2_norm(features)), static_cast<T>(xi))));
    auto magnitude = add(mul(hinge, known_mask), mul(sum_rows(square(features)), bg_mask));
    return add(entropic, scale(mean(magnitude), static_cast<T>(weight)));
}

/// Dense targets for a known/background batch: one-hot for known rows, uniform 1/K for background rows.
template <typename T>
Tensor<T> hybrid_targets(const std::vector<int>& labels, const std::vector<bool>& is_background, std::size_t k) {
    if (labels.size() != is_background.size()) throw DomainError("hybrid_targets: size mismatch");
    Tensor<T> out({labels.size(), k});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (is_background[i]) {
            for (std::size_t c = 0; c < k; ++c) out[i * k + c] = static_cast<T>(1.0 / static_cast<double>(k));
        } else {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) throw DomainError("hybrid_targets: label outside [0,K)");
            out[i * k + static_cast<std::size_t>(labels[i])] = T{1};
        }
    }
    return out;
}

/// Tempered Mixup loss over a batch mixed from known and background samples
/// (background targets uniform before mixing).
template <typename T>
Tensor<T> hybrid_tempered_bg_loss(const Tensor<T>& logits, const MixedBatch<T>& mixed, double zeta) {
    return tempered_mixup_loss(logits, mixed.y_linear, mixed.lambda, zeta);
}

} // namespace oslab
