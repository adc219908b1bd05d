#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oslab/checkpoint.hpp"
#include "oslab/ops.hpp"
#include "oslab/rng.hpp"

namespace oslab {

enum class Architecture { lenetpp, small_cnn };

inline std::string to_string(Architecture a) { return a == Architecture::lenetpp ? "lenetpp" : "small_cnn"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "lenetpp") return Architecture::lenetpp;
    if (s == "small_cnn") return Architecture::small_cnn;
    throw DomainError("unknown architecture '" + s + "'");
}

struct ModelConfig {
    Architecture architecture = Architecture::lenetpp;
    std::size_t num_classes = 10;
    std::size_t feature_dim = 2;
    std::array<std::size_t, 3> input_shape{1, 28, 28};  ///< (channels, height, width)
    double width = 1.0;  ///< channel multiplier on every conv layer

    void validate() const {
        if (num_classes < 2) throw DomainError("model: num_classes must be >= 2");
        if (feature_dim < 1) throw DomainError("model: feature_dim must be >= 1");
        if (!(width > 0.0)) throw DomainError("model: width must be positive");
        const auto [c, h, w] = input_shape;
        if (c == 0) throw ShapeError("model: input needs at least one channel");
        const std::size_t min_side = architecture == Architecture::lenetpp ? 8 : 16;
        if (h < min_side || w < min_side)
            throw ShapeError("model: input " + std::to_string(h) + "x" + std::to_string(w) + " too small for " +
                             to_string(architecture) + " (min " + std::to_string(min_side) + ")");
    }

    static ModelConfig lenetpp(std::size_t k = 10) { return {Architecture::lenetpp, k, 2, {1, 28, 28}, 1.0}; }
    static ModelConfig small_cnn(std::size_t k = 10) { return {Architecture::small_cnn, k, 128, {3, 32, 32}, 1.0}; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"architecture", to_string(c.architecture)},
         {"num_classes", c.num_classes},
         {"feature_dim", c.feature_dim},
         {"input_shape", c.input_shape},
         {"width", c.width}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    if (j.contains("architecture")) {
        d.architecture = parse_architecture(j.at("architecture").get<std::string>());
        if (d.architecture == Architecture::small_cnn) d = ModelConfig::small_cnn();
    }
    d.num_classes = j.value("num_classes", d.num_classes);
    d.feature_dim = j.value("feature_dim", d.feature_dim);
    if (j.contains("input_shape")) d.input_shape = j.at("input_shape").get<std::array<std::size_t, 3>>();
    d.width = j.value("width", d.width);
    c = d;
}

template <typename T>
struct ForwardOutput {
    Tensor<T> features;  ///< [B, feature_dim], input of the classifier head
    Tensor<T> logits;    ///< [B, K]
};

/// LeNet++ / small_cnn with a deep-feature layer and a bias-free linear head.
///
/// lenetpp: three stages of (conv5x5, PReLU, conv5x5, PReLU, maxpool 2x2) with
/// 32/64/128 filters, a linear map to `feature_dim`, then the head.
/// small_cnn: four (conv3x3 stride 2, ReLU) blocks with 32/64/128/128 filters,
/// a linear map to `feature_dim`, then the head.
/// The head has no bias, so features at the origin map to a uniform posterior.
template <typename T>
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed) : config_(config) {
        config_.validate();
        Rng rng(derive_seed(seed, 0x1D));
        build(rng);
    }

    const ModelConfig& config() const { return config_; }

    ForwardOutput<T> forward(const Tensor<T>& batch) const {
        const auto [c, h, w] = config_.input_shape;
        if (batch.rank() != 4 || batch.shape()[1] != c || batch.shape()[2] != h || batch.shape()[3] != w)
            detail::shape_mismatch("model.forward", batch.shape(), Shape{0, c, h, w});
        const std::size_t n = batch.shape()[0];
        Tensor<T> x = batch;
        if (config_.architecture == Architecture::lenetpp) {
            for (int s = 1; s <= 3; ++s) {
                const std::string p = "stage" + std::to_string(s);
                x = prelu(conv2d(x, param(p + ".conv1.weight"), param(p + ".conv1.bias"), {1, 2}), param(p + ".prelu1.slope"));
                x = prelu(conv2d(x, param(p + ".conv2.weight"), param(p + ".conv2.bias"), {1, 2}), param(p + ".prelu2.slope"));
                x = max_pool2d(x, 2, 2);
            }
        } else {
            for (int s = 1; s <= 4; ++s) {
                const std::string p = "block" + std::to_string(s);
                x = relu(conv2d(x, param(p + ".conv.weight"), param(p + ".conv.bias"), {2, 1}));
            }
        }
        x = reshape(x, Shape{n, x.numel() / std::max<std::size_t>(n, 1)});
        Tensor<T> features = linear(x, param("feature.weight"), param("feature.bias"));
        Tensor<T> logits = linear(features, param("head.weight"), Tensor<T>());
        return {features, logits};
    }

    /// Parameter handles in a fixed order (aliases, not copies).
    std::vector<Tensor<T>> parameters() const {
        std::vector<Tensor<T>> out;
        for (const auto& p : params_) out.push_back(p.tensor);
        return out;
    }

    const std::vector<NamedTensor<T>>& named_parameters() const { return params_; }

    const Tensor<T>& param(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.tensor;
        throw Error("model: no parameter named " + name);
    }
    Tensor<T>& param(const std::string& name) {
        return const_cast<Tensor<T>&>(static_cast<const Model&>(*this).param(name));
    }

    /// Replace the classifier head with a freshly initialized K-way head.
    void replace_head(std::size_t num_classes, std::uint64_t seed) {
        if (num_classes < 2) throw DomainError("model: num_classes must be >= 2");
        config_.num_classes = num_classes;
        Rng rng(derive_seed(seed, 0x4EAD));
        param("head.weight") = fan_in_uniform({num_classes, config_.feature_dim}, config_.feature_dim, rng);
    }

    Checkpoint<T> to_checkpoint() const {
        Checkpoint<T> ck;
        for (const auto& p : params_) ck.tensors.push_back({p.name, p.tensor.detach()});
        ck.metadata["model"] = config_;
        return ck;
    }

    static Model from_checkpoint(const Checkpoint<T>& ck) {
        Model m(ck.metadata.at("model").template get<ModelConfig>(), 0);
        if (ck.tensors.size() != m.params_.size()) throw Error("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
            auto& dst = m.params_[i];
            const auto& src = ck.tensors[i];
            if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape())
                throw ShapeError("checkpoint: parameter " + src.name + " does not match model layout");
            std::copy(src.tensor.data().begin(), src.tensor.data().end(), dst.tensor.data().begin());
        }
        return m;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.tensor.numel();
        return n;
    }

private:
    std::size_t channels(std::size_t base) const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(base) * config_.width)));
    }

    static Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        t.set_requires_grad();
        return t;
    }
    static Tensor<T> conv_weight(std::size_t out, std::size_t in, std::size_t k, double slope, Rng& rng) {
        const double fan_in = static_cast<double>(in * k * k);
        return uniform({out, in, k, k}, std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in)), rng);
    }
    /// Linear layers: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
    static Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
        return uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    }
    static Tensor<T> filled(Shape shape, T v) {
        Tensor<T> t(std::move(shape), v);
        t.set_requires_grad();
        return t;
    }

    void add(std::string name, Tensor<T> t) { params_.push_back({std::move(name), std::move(t)}); }

    void build(Rng& rng) {
        auto [in_c, h, w] = config_.input_shape;
        if (config_.architecture == Architecture::lenetpp) {
            const std::size_t widths[3] = {channels(32), channels(64), channels(128)};
            for (int s = 0; s < 3; ++s) {
                const std::string p = "stage" + std::to_string(s + 1);
                const std::size_t c = widths[s];
                add(p + ".conv1.weight", conv_weight(c, in_c, 5, 0.25, rng));
                add(p + ".conv1.bias", filled({c}, T{0}));
                add(p + ".prelu1.slope", filled({c}, T(0.25)));
                add(p + ".conv2.weight", conv_weight(c, c, 5, 0.25, rng));
                add(p + ".conv2.bias", filled({c}, T{0}));
                add(p + ".prelu2.slope", filled({c}, T(0.25)));
                in_c = c;
                h /= 2;
                w /= 2;
            }
        } else {
            const std::size_t widths[4] = {channels(32), channels(64), channels(128), channels(128)};
            for (int s = 0; s < 4; ++s) {
                const std::string p = "block" + std::to_string(s + 1);
                add(p + ".conv.weight", conv_weight(widths[s], in_c, 3, 0.0, rng));
                add(p + ".conv.bias", filled({widths[s]}, T{0}));
                in_c = widths[s];
                h = (h - 1) / 2 + 1;
                w = (w - 1) / 2 + 1;
            }
        }
        const std::size_t flat = in_c * h * w;
        add("feature.weight", fan_in_uniform({config_.feature_dim, flat}, flat, rng));
        add("feature.bias", fan_in_uniform({config_.feature_dim}, flat, rng));
        add("head.weight", fan_in_uniform({config_.num_classes, config_.feature_dim}, config_.feature_dim, rng));
    }

    ModelConfig config_;
    std::vector<NamedTensor<T>> params_;
};

} // namespace oslab
