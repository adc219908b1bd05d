#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oslab/augment.hpp"
#include "oslab/checkpoint.hpp"
#include "oslab/data.hpp"
#include "oslab/losses.hpp"
#include "oslab/models.hpp"
#include "oslab/openset.hpp"
#include "oslab/optim.hpp"

namespace oslab {

// ---------------------------------------------------------------------------
// configuration

inline void to_json(nlohmann::json& j, const MixConfig& c) {
    j = {{"scheme", to_string(c.scheme)}, {"alpha", c.alpha}, {"tempered", c.tempered}};
}

inline void from_json(const nlohmann::json& j, MixConfig& c) {
    MixConfig d;
    if (j.contains("scheme")) d.scheme = parse_mix_scheme(j.at("scheme").get<std::string>());
    d.alpha = j.value("alpha", d.alpha);
    d.tempered = j.value("tempered", d.tempered);
    c = d;
}

struct OptimizerConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<DecayPoint> schedule{{15, 0.1}};

    template <typename T>
    OptimState<T> make_state() const {
        return OptimState<T>(learning_rate, momentum, weight_decay, schedule);
    }
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay}};
    j["schedule"] = nlohmann::json::array();
    for (const auto& p : c.schedule) j["schedule"].push_back({{"epoch", p.epoch}, {"multiplier", p.multiplier}});
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
    OptimizerConfig d;
    d.learning_rate = j.value("learning_rate", d.learning_rate);
    d.momentum = j.value("momentum", d.momentum);
    d.weight_decay = j.value("weight_decay", d.weight_decay);
    if (j.contains("schedule")) {
        d.schedule.clear();
        for (const auto& p : j.at("schedule"))
            d.schedule.push_back({p.at("epoch").get<std::size_t>(), p.at("multiplier").get<double>()});
    }
    c = d;
}

/// Procedural dataset used when `known` is "synthetic": classes
/// [0, classes) are known, the next `background_classes` feed the background
/// split and the remaining `unknown_classes` the unknown evaluation split.
struct SyntheticConfig {
    std::size_t classes = 4;
    std::size_t background_classes = 2;
    std::size_t unknown_classes = 2;
    std::size_t train_size = 512;
    std::size_t eval_size = 256;
    std::array<std::size_t, 3> shape{1, 16, 16};
    double noise = 0.15;
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = {{"classes", c.classes},     {"background_classes", c.background_classes},
         {"unknown_classes", c.unknown_classes}, {"train_size", c.train_size},
         {"eval_size", c.eval_size}, {"shape", c.shape},
         {"noise", c.noise}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
    SyntheticConfig d;
    d.classes = j.value("classes", d.classes);
    d.background_classes = j.value("background_classes", d.background_classes);
    d.unknown_classes = j.value("unknown_classes", d.unknown_classes);
    d.train_size = j.value("train_size", d.train_size);
    d.eval_size = j.value("eval_size", d.eval_size);
    if (j.contains("shape")) d.shape = j.at("shape").get<std::array<std::size_t, 3>>();
    d.noise = j.value("noise", d.noise);
    c = d;
}

/// Dataset roles. Sources: known in {mnist, cifar10, synthetic};
/// unknown in {emnist_letters, fashion_mnist, gaussian, cifar10, synthetic};
/// background in {none, emnist_letters, gaussian, synthetic}.
struct DataConfig {
    std::string root;  ///< empty: $OSLAB_DATA_ROOT
    std::string known = "mnist";
    std::vector<int> known_classes;    ///< empty: every class of the source
    std::string unknown = "emnist_letters";
    std::vector<int> unknown_classes;  ///< cifar10 unknowns: test classes used as unknowns
    std::string background = "none";
    int letters_boundary = 13;
    std::size_t train_limit = 0;       ///< 0: whole training set
    std::size_t eval_known_limit = 10000;
    std::size_t unknown_count = 10000;
    std::size_t background_limit = 0;
    double background_ratio = 0.5;     ///< background samples per known sample in a batch
    bool normalize = true;
    double noise_mean = 0.5;
    double noise_std = 1.0;
    std::uint64_t seed = 0;            ///< drives every data subsample, independent of the run seed
    SyntheticConfig synthetic;
};

inline void to_json(nlohmann::json& j, const DataConfig& c) {
    j = {{"root", c.root},
         {"known", c.known},
         {"known_classes", c.known_classes},
         {"unknown", c.unknown},
         {"unknown_classes", c.unknown_classes},
         {"background", c.background},
         {"letters_boundary", c.letters_boundary},
         {"train_limit", c.train_limit},
         {"eval_known_limit", c.eval_known_limit},
         {"unknown_count", c.unknown_count},
         {"background_limit", c.background_limit},
         {"background_ratio", c.background_ratio},
         {"normalize", c.normalize},
         {"noise_mean", c.noise_mean},
         {"noise_std", c.noise_std},
         {"seed", c.seed},
         {"synthetic", c.synthetic}};
}

inline void from_json(const nlohmann::json& j, DataConfig& c) {
    DataConfig d;
    d.root = j.value("root", d.root);
    d.known = j.value("known", d.known);
    d.known_classes = j.value("known_classes", d.known_classes);
    d.unknown = j.value("unknown", d.unknown);
    d.unknown_classes = j.value("unknown_classes", d.unknown_classes);
    d.background = j.value("background", d.background);
    d.letters_boundary = j.value("letters_boundary", d.letters_boundary);
    d.train_limit = j.value("train_limit", d.train_limit);
    d.eval_known_limit = j.value("eval_known_limit", d.eval_known_limit);
    d.unknown_count = j.value("unknown_count", d.unknown_count);
    d.background_limit = j.value("background_limit", d.background_limit);
    d.background_ratio = j.value("background_ratio", d.background_ratio);
    d.normalize = j.value("normalize", d.normalize);
    d.noise_mean = j.value("noise_mean", d.noise_mean);
    d.noise_std = j.value("noise_std", d.noise_std);
    d.seed = j.value("seed", d.seed);
    if (j.contains("synthetic")) d.synthetic = j.at("synthetic").get<SyntheticConfig>();
    c = d;
}

struct ExperimentConfig {
    std::string name;  ///< label used in comparison tables; empty: derived from loss and mix
    std::uint64_t seed = 0;
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    std::string precision = "float32";  ///< float32 | float64
    std::string out_dir = "runs/default";
    std::size_t eval_batch_size = 500;
    std::vector<double> fpr_targets{0.1};
    ModelConfig model = ModelConfig::lenetpp();
    LossConfig loss;
    MixConfig mix;
    OptimizerConfig optimizer;
    DataConfig data;

    std::string display_name() const {
        if (!name.empty()) return name;
        std::string n = to_string(loss.kind);
        if (mix.scheme != MixScheme::none) n += "+" + to_string(mix.scheme) + (mix.tempered ? "(tempered)" : "");
        return n;
    }

    void validate() const {
        model.validate();
        loss.validate();
        mix.validate();
        optimizer.make_state<double>().validate();
        if (batch_size == 0 || eval_batch_size == 0) throw DomainError("config: batch sizes must be positive");
        if (precision != "float32" && precision != "float64")
            throw DomainError("config: precision must be float32 or float64, got '" + precision + "'");
        if (!(data.background_ratio > 0.0)) throw DomainError("config: data.background_ratio must be positive");
        if (uses_background(loss.kind) && data.background == "none")
            throw DomainError("config: loss " + to_string(loss.kind) + " needs data.background");
        const bool plain_only = loss.kind == LossKind::one_vs_rest || loss.kind == LossKind::center_loss ||
                                loss.kind == LossKind::entropic_open_set || loss.kind == LossKind::objectosphere;
        if (plain_only && mix.scheme != MixScheme::none)
            throw DomainError("config: loss " + to_string(loss.kind) + " does not take mixed batches");
        for (double f : fpr_targets)
            if (!(f >= 0.0 && f <= 1.0)) throw DomainError("config: fpr targets must lie in [0,1]");
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw DomainError("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw DomainError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

} // namespace detail

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"name", c.name},
         {"seed", c.seed},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"precision", c.precision},
         {"out_dir", c.out_dir},
         {"eval_batch_size", c.eval_batch_size},
         {"fpr_targets", c.fpr_targets},
         {"model", c.model},
         {"loss", c.loss},
         {"mix", c.mix},
         {"optimizer", c.optimizer},
         {"data", c.data}};
}

/// Missing keys take defaults; unknown keys are rejected so typos in overrides surface.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    detail::check_keys(j, {"name", "seed", "epochs", "batch_size", "precision", "out_dir", "eval_batch_size", "fpr_targets",
                           "model", "loss", "mix", "optimizer", "data"},
                       "");
    ExperimentConfig d;
    d.name = j.value("name", d.name);
    d.seed = j.value("seed", d.seed);
    d.epochs = j.value("epochs", d.epochs);
    d.batch_size = j.value("batch_size", d.batch_size);
    d.precision = j.value("precision", d.precision);
    d.out_dir = j.value("out_dir", d.out_dir);
    d.eval_batch_size = j.value("eval_batch_size", d.eval_batch_size);
    d.fpr_targets = j.value("fpr_targets", d.fpr_targets);
    if (j.contains("model")) {
        detail::check_keys(j["model"], {"architecture", "num_classes", "feature_dim", "input_shape", "width"}, "model");
        d.model = j["model"].get<ModelConfig>();
    }
    if (j.contains("loss")) {
        detail::check_keys(j["loss"], {"kind", "zeta", "smoothing", "center_weight", "center_lr", "margin", "objecto_weight"}, "loss");
        d.loss = j["loss"].get<LossConfig>();
    }
    const bool margin_given = j.contains("loss") && j["loss"].contains("margin");
    if (!margin_given && d.model.architecture == Architecture::small_cnn) d.loss.margin = 10.0;
    if (j.contains("mix")) {
        detail::check_keys(j["mix"], {"scheme", "alpha", "tempered"}, "mix");
        d.mix = j["mix"].get<MixConfig>();
    }
    if (j.contains("optimizer")) {
        detail::check_keys(j["optimizer"], {"learning_rate", "momentum", "weight_decay", "schedule"}, "optimizer");
        d.optimizer = j["optimizer"].get<OptimizerConfig>();
    }
    if (j.contains("data")) {
        detail::check_keys(j["data"], {"root", "known", "known_classes", "unknown", "unknown_classes", "background",
                                       "letters_boundary", "train_limit", "eval_known_limit", "unknown_count",
                                       "background_limit", "background_ratio", "normalize", "noise_mean", "noise_std",
                                       "seed", "synthetic"},
                           "data");
        if (j["data"].contains("synthetic"))
            detail::check_keys(j["data"]["synthetic"], {"classes", "background_classes", "unknown_classes", "train_size",
                                                        "eval_size", "shape", "noise"},
                               "data.synthetic");
        d.data = j["data"].get<DataConfig>();
    }
    c = d;
}

/// Parses the right-hand side of `--set key=value`: JSON when it parses, a plain string otherwise.
inline nlohmann::json parse_override_value(const std::string& text) {
    auto v = nlohmann::json::parse(text, nullptr, false);
    if (v.is_discarded()) return text;
    return v;
}

/// Applies "a.b.c=value" to a config JSON. Intermediate objects must exist
/// (or be created under known objects); the final key is validated on parse.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw DomainError("override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    nlohmann::json* node = &j;
    std::size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw DomainError("override '" + assignment + "' has an empty key");
        if (dot == std::string::npos) {
            (*node)[key] = parse_override_value(assignment.substr(eq + 1));
            return;
        }
        if (!node->contains(key)) (*node)[key] = nlohmann::json::object();
        node = &(*node)[key];
        if (!node->is_object()) throw DomainError("override '" + assignment + "': " + key + " is not an object");
        start = dot + 1;
    }
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config " + path);
        j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw IoError("config " + path + " is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(j, o);
    auto c = j.get<ExperimentConfig>();
    c.validate();
    return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of everything that influences results (the output directory excluded).
inline std::string config_hash(const ExperimentConfig& c) {
    nlohmann::json j = c;
    j.erase("out_dir");
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

/// The evaluation protocol: runs are comparable only when this matches.
inline nlohmann::json eval_protocol(const ExperimentConfig& c) {
    const auto& d = c.data;
    nlohmann::json j = {{"known", d.known},
                        {"known_classes", d.known_classes},
                        {"unknown", d.unknown},
                        {"unknown_classes", d.unknown_classes},
                        {"eval_known_limit", d.eval_known_limit},
                        {"unknown_count", d.unknown_count},
                        {"seed", d.seed}};
    if (d.unknown == "emnist_letters") j["letters_boundary"] = d.letters_boundary;
    if (d.unknown == "gaussian") j["noise"] = {d.noise_mean, d.noise_std};
    if (d.known == "synthetic") j["synthetic"] = d.synthetic;
    return j;
}

// ---------------------------------------------------------------------------
// data resolution

inline std::string resolve_data_root(const DataConfig& d) {
    if (!d.root.empty()) return d.root;
    if (const char* env = std::getenv("OSLAB_DATA_ROOT"); env && *env) return env;
    throw IoError("dataset root not set: give data.root or set OSLAB_DATA_ROOT");
}

template <typename T>
struct ExperimentData {
    DatasetSplit<T> train_known;
    std::optional<DatasetSplit<T>> background;
    DatasetSplit<T> eval_known;
    DatasetSplit<T> eval_unknown;
    std::vector<int> class_map;  ///< source label of each dense class index
    NormStats stats;
};

namespace detail {

template <typename T>
DatasetSplit<T> load_idx_split(const std::string& dir, const std::string& images, const std::string& labels, SplitRole role,
                               const std::string& source, bool transpose) {
    auto img = parse_idx_images<T>(read_maybe_gz(find_data_file(dir, images)));
    auto lab = parse_idx_labels(read_maybe_gz(find_data_file(dir, labels)));
    if (img.shape()[0] != lab.size()) throw IoError(source + ": image and label counts differ");
    if (transpose) img = transpose_images(img);
    return make_split(role, img, lab, source);
}

template <typename T>
DatasetSplit<T> load_mnist(const std::string& root, bool train) {
    const std::string p = train ? "train" : "t10k";
    return load_idx_split<T>(root + "/mnist", p + "-images-idx3-ubyte", p + "-labels-idx1-ubyte",
                             train ? SplitRole::train_known : SplitRole::eval_known, std::string("mnist/") + p, false);
}

template <typename T>
DatasetSplit<T> load_emnist_letters(const std::string& root, bool train) {
    const std::string p = std::string("emnist-letters-") + (train ? "train" : "test");
    return load_idx_split<T>(root + "/emnist", p + "-images-idx3-ubyte", p + "-labels-idx1-ubyte", SplitRole::background,
                             "emnist-letters/" + std::string(train ? "train" : "test"), true);
}

template <typename T>
DatasetSplit<T> load_cifar10(const std::string& root, bool train) {
    const std::string dir = root + "/cifar-10-batches-bin";
    std::vector<std::string> files;
    if (train)
        for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
    else
        files.push_back("test_batch.bin");
    std::vector<std::uint8_t> bytes;
    for (const auto& f : files) {
        auto part = read_maybe_gz(find_data_file(dir, f));
        bytes.insert(bytes.end(), part.begin(), part.end());
    }
    return parse_cifar10<T>(bytes, train ? SplitRole::train_known : SplitRole::eval_known,
                            std::string("cifar10/") + (train ? "train" : "test"));
}

/// Deterministic subsample of `limit` rows (no-op when limit is 0 or >= size).
template <typename T>
DatasetSplit<T> limit_rows(const DatasetSplit<T>& s, std::size_t limit, std::uint64_t seed) {
    if (limit == 0 || limit >= s.size()) return s;
    Rng rng(seed);
    auto order = rng.permutation(s.size());
    order.resize(limit);
    std::sort(order.begin(), order.end());
    return subset(s, order);
}

template <typename T>
DatasetSplit<T> as_unknown(DatasetSplit<T> s) {
    s.role = SplitRole::eval_unknown;
    s.class_filter.reset();
    std::fill(s.labels.begin(), s.labels.end(), kUnknownLabel);
    return s;
}

} // namespace detail

/// Loads, filters, subsamples and normalizes every split a run needs.
template <typename T>
ExperimentData<T> load_experiment_data(const ExperimentConfig& config) {
    const auto& d = config.data;
    const std::uint64_t seed = d.seed;
    ExperimentData<T> out;
    const auto shape = config.model.input_shape;
    std::optional<DatasetSplit<T>> letters_train;
    auto root = [&] { return resolve_data_root(d); };

    if (d.known == "synthetic") {
        const auto& s = d.synthetic;
        const std::size_t total = s.classes + s.background_classes + s.unknown_classes;
        auto train = make_synthetic_classes<T>(s.train_size * total / s.classes, total, s.shape, seed, SplitRole::train_known, s.noise);
        auto eval = make_synthetic_classes<T>(s.eval_size * total / s.classes, total, s.shape, seed, SplitRole::eval_known, s.noise);
        std::vector<int> known(s.classes), bg(s.background_classes), unk(s.unknown_classes);
        std::iota(known.begin(), known.end(), 0);
        std::iota(bg.begin(), bg.end(), static_cast<int>(s.classes));
        std::iota(unk.begin(), unk.end(), static_cast<int>(s.classes + s.background_classes));
        out.train_known = filter_classes(train, known);
        out.eval_known = filter_classes(eval, known);
        out.class_map = known;
        if (d.background == "synthetic") {
            if (bg.empty()) throw DomainError("data: synthetic background needs background_classes > 0");
            auto b = filter_classes(train, bg);
            b.role = SplitRole::background;
            out.background = b;
        }
        if (d.unknown == "synthetic") {
            if (unk.empty()) throw DomainError("data: synthetic unknowns need unknown_classes > 0");
            out.eval_unknown = detail::as_unknown(filter_classes(eval, unk));
        }
    } else if (d.known == "mnist") {
        out.train_known = detail::load_mnist<T>(root(), true);
        out.eval_known = detail::load_mnist<T>(root(), false);
    } else if (d.known == "cifar10") {
        out.train_known = detail::load_cifar10<T>(root(), true);
        out.eval_known = detail::load_cifar10<T>(root(), false);
    } else {
        throw DomainError("data: unknown known-class source '" + d.known + "'");
    }

    if (d.known != "synthetic") {
        std::vector<int> classes = d.known_classes;
        if (classes.empty()) {
            std::set<int> present(out.train_known.labels.begin(), out.train_known.labels.end());
            classes.assign(present.begin(), present.end());
        }
        if (d.unknown == "cifar10") {
            if (d.known != "cifar10") throw DomainError("data: cifar10 unknowns require cifar10 knowns");
            if (d.unknown_classes.empty()) throw DomainError("data: cifar10 unknowns need data.unknown_classes");
            for (int c : d.unknown_classes)
                if (std::find(classes.begin(), classes.end(), c) != classes.end())
                    throw DomainError("data: class " + std::to_string(c) + " is both known and unknown");
            out.eval_unknown = detail::as_unknown(filter_classes(out.eval_known, d.unknown_classes));
        }
        out.train_known = filter_classes(out.train_known, classes);
        out.eval_known = filter_classes(out.eval_known, classes);
        out.class_map = classes;
    }
    out.train_known.role = SplitRole::train_known;
    out.eval_known.role = SplitRole::eval_known;
    if (config.model.num_classes != out.class_map.size())
        throw DomainError("config: model.num_classes is " + std::to_string(config.model.num_classes) + " but the data has " +
                          std::to_string(out.class_map.size()) + " known classes");

    out.train_known = detail::limit_rows(out.train_known, d.train_limit, derive_seed(seed, 0x7121));
    out.eval_known = detail::limit_rows(out.eval_known, d.eval_known_limit, derive_seed(seed, 0xE7A1));

    if (d.unknown == "emnist_letters") {
        auto letters = detail::load_emnist_letters<T>(root(), false);
        out.eval_unknown = split_emnist_letters(letters, d.letters_boundary, d.unknown_count, derive_seed(seed, 0x0A7)).second;
    } else if (d.unknown == "fashion_mnist") {
        auto fm = detail::load_idx_split<T>(root() + "/fashion-mnist", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte",
                                            SplitRole::eval_known, "fashion-mnist/t10k", false);
        out.eval_unknown = detail::as_unknown(detail::limit_rows(fm, d.unknown_count, derive_seed(seed, 0x0A7)));
    } else if (d.unknown == "gaussian") {
        out.eval_unknown = make_gaussian_unknowns<T>(d.unknown_count, shape, d.noise_mean, d.noise_std, derive_seed(seed, 0x0A7));
    } else if (d.unknown == "cifar10" || (d.unknown == "synthetic" && d.known == "synthetic")) {
        out.eval_unknown = detail::limit_rows(out.eval_unknown, d.unknown_count, derive_seed(seed, 0x0A7));
    } else {
        throw DomainError("data: unknown unknown-class source '" + d.unknown + "'");
    }

    if (d.background == "emnist_letters") {
        letters_train = detail::load_emnist_letters<T>(root(), true);
        out.background = split_emnist_letters(*letters_train, d.letters_boundary, 0, seed).first;
    } else if (d.background == "gaussian") {
        auto g = make_gaussian_unknowns<T>(std::max<std::size_t>(d.background_limit, 1000), shape, d.noise_mean, d.noise_std,
                                           derive_seed(seed, 0xB6));
        g.role = SplitRole::background;
        g.source = "gaussian_noise/background";
        out.background = g;
    } else if (d.background != "none" && !(d.background == "synthetic" && d.known == "synthetic")) {
        throw DomainError("data: unknown background source '" + d.background + "'");
    }
    if (out.background) {
        if (out.background->size() == 0) throw DomainError("data: background split is empty");
        out.background = detail::limit_rows(*out.background, d.background_limit, derive_seed(seed, 0xB61));
        out.background->role = SplitRole::background;
    }

    for (const auto* s : {&out.eval_known, &out.eval_unknown}) assert_disjoint(out.train_known, *s);
    if (out.background) assert_disjoint(*out.background, out.eval_unknown);
    if (out.eval_unknown.size() == 0) throw DomainError("data: unknown evaluation split is empty");
    if (out.eval_known.size() == 0) throw DomainError("data: known evaluation split is empty");

    const auto& img = out.train_known.images.shape();
    if (img[1] != shape[0] || img[2] != shape[1] || img[3] != shape[2])
        detail::shape_mismatch("data vs model.input_shape", img, Shape{img[0], shape[0], shape[1], shape[2]});

    if (d.normalize) {
        out.stats = compute_norm_stats(out.train_known);
        out.train_known = normalize(out.train_known, out.stats);
        out.eval_known = normalize(out.eval_known, out.stats);
        out.eval_unknown = normalize(out.eval_unknown, out.stats);
        if (out.background) out.background = normalize(*out.background, out.stats);
    }
    return out;
}

// ---------------------------------------------------------------------------
// training

struct EpochStats {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;  ///< on the training batches, against each sample's own label
};

struct RunReport {
    std::string name;
    std::string config_hash;
    std::vector<EpochStats> epochs;
    double accuracy = 0.0;
    double auosc = 0.0;
    double auroc = 0.0;
    std::map<double, double> ccr_at_fpr;
    std::map<std::string, std::string> files;  ///< role -> path
    nlohmann::json protocol;
    std::vector<int> class_map;
    double wall_time_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const RunReport& r) {
    j = {{"name", r.name}, {"config_hash", r.config_hash}, {"accuracy", r.accuracy}, {"auosc", r.auosc},
         {"auroc", r.auroc}, {"files", r.files},           {"protocol", r.protocol}, {"class_map", r.class_map},
         {"wall_time_seconds", r.wall_time_seconds}};
    j["ccr_at_fpr"] = nlohmann::json::object();
    for (const auto& [f, c] : r.ccr_at_fpr) j["ccr_at_fpr"][detail::format_double(f)] = c;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : r.epochs)
        j["epochs"].push_back({{"epoch", e.epoch}, {"learning_rate", e.learning_rate}, {"loss", e.loss}, {"accuracy", e.accuracy}});
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
    r.name = j.at("name").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.auosc = j.at("auosc").get<double>();
    r.auroc = j.at("auroc").get<double>();
    r.files = j.at("files").get<std::map<std::string, std::string>>();
    r.protocol = j.at("protocol");
    r.class_map = j.value("class_map", std::vector<int>{});
    r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    r.ccr_at_fpr.clear();
    for (const auto& [k, v] : j.at("ccr_at_fpr").items()) r.ccr_at_fpr[detail::parse_double(k, "report")] = v.get<double>();
    r.epochs.clear();
    for (const auto& e : j.at("epochs"))
        r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("learning_rate").get<double>(), e.at("loss").get<double>(),
                            e.at("accuracy").get<double>()});
}

struct EvalResult {
    std::vector<ScoreRecord> records;
    OSCCurve curve;
    std::vector<std::vector<double>> features;  ///< parallel to records
};

/// Scores the known and unknown evaluation splits (known records first).
template <typename T>
EvalResult score_splits(const Model<T>& model, const DatasetSplit<T>& known, const DatasetSplit<T>& unknown,
                        std::size_t batch_size, const std::vector<double>& fpr_targets) {
    if (unknown.size() == 0) throw DomainError("evaluate: unknown split is empty");
    if (known.size() == 0) throw DomainError("evaluate: known split is empty");
    NoGradGuard no_grad;
    EvalResult out;
    for (const auto* split : {&known, &unknown}) {
        const bool is_known = split == &known;
        for (std::size_t start = 0; start < split->size(); start += batch_size) {
            std::vector<std::size_t> idx(std::min(batch_size, split->size() - start));
            std::iota(idx.begin(), idx.end(), start);
            auto fwd = model.forward(gather_images(*split, idx));
            auto scores = score_batch(fwd.logits);
            const std::size_t f = fwd.features.shape()[1];
            for (std::size_t i = 0; i < idx.size(); ++i) {
                out.records.push_back({scores.score[i], scores.predicted[i], is_known ? split->labels[idx[i]] : kUnknownLabel, is_known});
                std::vector<double> row(f);
                for (std::size_t c = 0; c < f; ++c) row[c] = static_cast<double>(fwd.features[i * f + c]);
                out.features.push_back(std::move(row));
            }
        }
    }
    out.curve = osc_curve(out.records, fpr_targets);
    return out;
}

namespace detail {

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    Shape shape = a.shape();
    shape[0] += b.shape()[0];
    Tensor<T> out(shape);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.numel()));
    return out;
}

inline std::size_t argmax_row(std::span<const double> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// Cycles through a split in reshuffled passes, one stream per run.
template <typename T>
class BackgroundSampler {
public:
    BackgroundSampler(const DatasetSplit<T>& split, std::uint64_t seed) : split_(split), rng_(seed) {}

    std::vector<std::size_t> next(std::size_t n) {
        std::vector<std::size_t> out;
        while (out.size() < n) {
            if (pos_ == order_.size()) {
                order_ = rng_.permutation(split_.size());
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    const DatasetSplit<T>& split_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

inline std::string run_path(const std::string& dir, const std::string& file) {
    return (std::filesystem::path(dir) / file).string();
}

} // namespace detail

struct TrainOptions {
    std::ostream* log = nullptr;  ///< progress lines, when set
    bool write_outputs = true;
};

/// Loss for one batch. `known` holds the known-class rows, `bg` (possibly empty) the background rows.
template <typename T>
struct BatchLoss {
    Tensor<T> loss;
    std::size_t correct = 0;
};

template <typename T>
BatchLoss<T> batch_loss(const ExperimentConfig& cfg, const Model<T>& model, const Tensor<T>& known_x,
                        const std::vector<int>& known_y, const Tensor<T>& bg_x, CenterState<T>* centers, Rng& rng) {
    const std::size_t k = cfg.model.num_classes, nk = known_y.size();
    const std::size_t nb = bg_x.rank() == 4 ? bg_x.shape()[0] : 0;
    const auto& lc = cfg.loss;
    BatchLoss<T> out;
    auto count_correct = [&](const Tensor<T>& logits) {
        NoGradGuard no_grad;
        auto s = score_batch(slice_rows(logits.detach(), 0, nk));
        for (std::size_t i = 0; i < nk; ++i) out.correct += s.predicted[i] == known_y[i] ? 1 : 0;
    };

    switch (lc.kind) {
    case LossKind::cross_entropy:
    case LossKind::tempered_mixup:
    case LossKind::label_smoothing: {
        auto targets = lc.kind == LossKind::label_smoothing ? label_smoothing_targets<T>(known_y, lc.smoothing, k)
                                                            : one_hot<T>(known_y, k);
        auto mixed = mix_batch(cfg.mix, known_x, targets, rng);
        auto fwd = model.forward(mixed.inputs);
        count_correct(fwd.logits);
        if (lc.kind == LossKind::tempered_mixup)
            out.loss = tempered_mixup_loss(fwd.logits, mixed.y_linear, mixed.lambda, lc.zeta);
        else
            out.loss = cross_entropy(fwd.logits, cfg.mix.tempered ? mixed.y_tempered : mixed.y_linear);
        break;
    }
    case LossKind::one_vs_rest: {
        auto fwd = model.forward(known_x);
        count_correct(fwd.logits);
        out.loss = one_vs_rest_loss(fwd.logits, known_y);
        break;
    }
    case LossKind::center_loss: {
        auto fwd = model.forward(known_x);
        count_correct(fwd.logits);
        out.loss = add(cross_entropy(fwd.logits, one_hot<T>(known_y, k)), center_loss(fwd.features, known_y, *centers, lc.center_weight));
        center_update(*centers, fwd.features.detach(), known_y);
        break;
    }
    case LossKind::entropic_open_set: {
        auto fwd = model.forward(nb ? detail::concat_rows(known_x, bg_x) : known_x);
        count_correct(fwd.logits);
        auto bg_logits = nb ? slice_rows(fwd.logits, nk, nk + nb) : Tensor<T>(Shape{0, k});
        out.loss = confidence_loss(slice_rows(fwd.logits, 0, nk), one_hot<T>(known_y, k), bg_logits, k);
        break;
    }
    case LossKind::objectosphere: {
        auto fwd = model.forward(nb ? detail::concat_rows(known_x, bg_x) : known_x);
        count_correct(fwd.logits);
        std::vector<int> labels = known_y;
        labels.resize(nk + nb, 0);
        std::vector<bool> is_bg(nk + nb, false);
        std::fill(is_bg.begin() + static_cast<std::ptrdiff_t>(nk), is_bg.end(), true);
        out.loss = objectosphere_loss(fwd.features, fwd.logits, hybrid_targets<T>(labels, is_bg, k), is_bg, lc.margin, lc.objecto_weight);
        break;
    }
    case LossKind::hybrid_tempered_bg: {
        std::vector<int> labels = known_y;
        labels.resize(nk + nb, 0);
        std::vector<bool> is_bg(nk + nb, false);
        std::fill(is_bg.begin() + static_cast<std::ptrdiff_t>(nk), is_bg.end(), true);
        auto x = nb ? detail::concat_rows(known_x, bg_x) : known_x;
        auto mixed = mix_batch(cfg.mix, x, hybrid_targets<T>(labels, is_bg, k), rng);
        auto fwd = model.forward(mixed.inputs);
        count_correct(fwd.logits);
        out.loss = hybrid_tempered_bg_loss(fwd.logits, mixed, lc.zeta);
        break;
    }
    }
    return out;
}

struct TrainResult {
    RunReport report;
    EvalResult eval;
};

namespace detail {

inline void write_json(const std::string& path, const nlohmann::json& j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

inline void write_features(const std::string& path, const EvalResult& eval) {
    auto os = open_out(path);
    const std::size_t f = eval.features.empty() ? 0 : eval.features.front().size();
    for (std::size_t c = 0; c < f; ++c) os << 'f' << c << ',';
    os << "norm,true_label,is_known\n";
    for (std::size_t i = 0; i < eval.records.size(); ++i) {
        double sq = 0.0;
        for (double v : eval.features[i]) {
            os << format_double(v) << ',';
            sq += v * v;
        }
        os << format_double(std::sqrt(sq)) << ',' << eval.records[i].true_label << ',' << (eval.records[i].is_known ? 1 : 0) << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

} // namespace detail

/// Writes score dump, curve files, feature dump (2-D features only) and fills the report's metrics.
template <typename T>
void write_eval_outputs(const EvalResult& eval, const std::string& dir, std::size_t feature_dim, RunReport& report) {
    report.accuracy = eval.curve.accuracy;
    report.auosc = eval.curve.auosc;
    report.auroc = eval.curve.auroc;
    report.ccr_at_fpr = eval.curve.ccr_at_fpr;
    report.files["scores"] = detail::run_path(dir, "scores.csv");
    report.files["curve"] = detail::run_path(dir, "osc.csv");
    report.files["curve_scalars"] = detail::run_path(dir, "osc.json");
    report.files["curve_plot"] = detail::run_path(dir, "osc.svg");
    write_score_dump(eval.records, report.files["scores"]);
    export_curve(eval.curve, report.files["curve"], true);
    if (feature_dim == 2) {
        report.files["features"] = detail::run_path(dir, "features.csv");
        detail::write_features(report.files["features"], eval);
    }
}

/// Trains `config` end to end and evaluates on the open-set protocol.
template <typename T>
TrainResult train_typed(const ExperimentConfig& config, const TrainOptions& options = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    auto data = load_experiment_data<T>(config);
    Model<T> model(config.model, derive_seed(config.seed, 0x30DE1));
    auto opt = config.optimizer.make_state<T>();
    auto params = model.parameters();
    Rng mix_rng(derive_seed(config.seed, 0x313));
    BatchIterator batches(data.train_known.size(), config.batch_size, derive_seed(config.seed, 0xBA7C));
    std::optional<detail::BackgroundSampler<T>> bg_sampler;
    if (data.background && uses_background(config.loss.kind)) bg_sampler.emplace(*data.background, derive_seed(config.seed, 0xB65));
    std::optional<CenterState<T>> centers;
    if (config.loss.kind == LossKind::center_loss)
        centers.emplace(config.model.num_classes, config.model.feature_dim, config.loss.center_lr);

    RunReport report;
    report.name = config.display_name();
    report.config_hash = config_hash(config);
    report.protocol = eval_protocol(config);
    report.class_map = data.class_map;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        opt.set_epoch(epoch);
        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0, batch_no = 0;
        for (const auto& idx : batches.epoch(epoch)) {
            auto x = gather_images(data.train_known, idx);
            auto y = gather_labels(data.train_known, idx);
            Tensor<T> bg_x;
            if (bg_sampler) {
                const auto n_bg = static_cast<std::size_t>(std::lround(config.data.background_ratio * static_cast<double>(idx.size())));
                auto bidx = bg_sampler->next(std::max<std::size_t>(n_bg, 1));
                bg_x = gather_images(*data.background, bidx);
            }
            BatchLoss<T> bl;
            try {
                bl = batch_loss(config, model, x, y, bg_x, centers ? &*centers : nullptr, mix_rng);
                if (!std::isfinite(static_cast<double>(bl.loss.item()))) throw DomainError("loss is not finite");
            } catch (const DomainError& e) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_no) +
                                      ": " + e.what());
            }
            bl.loss.backward();
            sgd_step(params, opt);
            loss_sum += static_cast<double>(bl.loss.item()) * static_cast<double>(idx.size());
            seen += idx.size();
            correct += bl.correct;
            ++batch_no;
        }
        EpochStats st{epoch, opt.current_lr, seen ? loss_sum / static_cast<double>(seen) : 0.0,
                      seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0};
        report.epochs.push_back(st);
        if (options.log)
            *options.log << report.name << " epoch " << epoch + 1 << "/" << config.epochs << " lr " << st.learning_rate << " loss "
                         << st.loss << " train_acc " << st.accuracy << std::endl;
    }

    auto eval = score_splits(model, data.eval_known, data.eval_unknown, config.eval_batch_size, config.fpr_targets);
    if (options.write_outputs) {
        std::filesystem::create_directories(config.out_dir);
        report.files["config"] = detail::run_path(config.out_dir, "config.json");
        report.files["checkpoint"] = detail::run_path(config.out_dir, "model.ckpt");
        detail::write_json(report.files["config"], nlohmann::json(config));
        auto ck = model.to_checkpoint();
        ck.metadata["norm_stats"] = data.stats;
        ck.metadata["class_map"] = data.class_map;
        ck.metadata["experiment"] = config;
        ck.metadata["experiment"].erase("out_dir");
        save_checkpoint(report.files["checkpoint"], ck);
        write_eval_outputs<T>(eval, config.out_dir, config.model.feature_dim, report);
    } else {
        report.accuracy = eval.curve.accuracy;
        report.auosc = eval.curve.auosc;
        report.auroc = eval.curve.auroc;
        report.ccr_at_fpr = eval.curve.ccr_at_fpr;
    }
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.write_outputs) {
        report.files["report"] = detail::run_path(config.out_dir, "report.json");
        detail::write_json(report.files["report"], nlohmann::json(report));
    }
    if (options.log)
        *options.log << report.name << " accuracy " << report.accuracy << " auosc " << report.auosc << " auroc " << report.auroc
                     << std::endl;
    return {report, eval};
}

/// Dispatches on config.precision.
inline TrainResult train(const ExperimentConfig& config, const TrainOptions& options = {}) {
    return config.precision == "float64" ? train_typed<double>(config, options) : train_typed<float>(config, options);
}

// ---------------------------------------------------------------------------
// evaluation of a stored checkpoint

template <typename T>
RunReport evaluate_checkpoint_typed(const std::string& checkpoint_path, const std::string& out_dir,
                                    const std::optional<ExperimentConfig>& override_config) {
    const auto t0 = std::chrono::steady_clock::now();
    auto ck = load_checkpoint<T>(checkpoint_path);
    auto model = Model<T>::from_checkpoint(ck);
    ExperimentConfig config = override_config ? *override_config : ck.metadata.at("experiment").template get<ExperimentConfig>();
    const auto& mc = model.config();
    if (mc.input_shape != config.model.input_shape || mc.num_classes != config.model.num_classes)
        throw ShapeError("evaluate: checkpoint model (" + std::to_string(mc.num_classes) + " classes) does not fit the data config (" +
                         std::to_string(config.model.num_classes) + " classes)");
    auto data_cfg = config;
    data_cfg.data.background = "none";
    data_cfg.data.normalize = false;
    auto data = load_experiment_data<T>(data_cfg);
    if (config.data.normalize) {
        const auto stats = ck.metadata.at("norm_stats").template get<NormStats>();
        data.eval_known = normalize(data.eval_known, stats);
        data.eval_unknown = normalize(data.eval_unknown, stats);
    }
    auto eval = score_splits(model, data.eval_known, data.eval_unknown, config.eval_batch_size, config.fpr_targets);
    RunReport report;
    report.name = config.display_name();
    report.config_hash = config_hash(config);
    report.protocol = eval_protocol(config);
    report.class_map = data.class_map;
    std::filesystem::create_directories(out_dir);
    write_eval_outputs<T>(eval, out_dir, mc.feature_dim, report);
    report.files["checkpoint"] = checkpoint_path;
    report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.files["report"] = detail::run_path(out_dir, "report.json");
    detail::write_json(report.files["report"], nlohmann::json(report));
    return report;
}

/// Re-scores a checkpoint on its (or the given) evaluation protocol.
inline RunReport evaluate_checkpoint(const std::string& checkpoint_path, const std::string& out_dir,
                                     const std::optional<ExperimentConfig>& config = std::nullopt) {
    const auto bytes = read_file_bytes(checkpoint_path);
    if (bytes.size() > 6 && bytes[6] == 8) return evaluate_checkpoint_typed<double>(checkpoint_path, out_dir, config);
    return evaluate_checkpoint_typed<float>(checkpoint_path, out_dir, config);
}

/// Metrics recomputed from a run directory's score dump.
inline OSCCurve recompute_curve(const RunReport& report) {
    std::vector<double> targets;
    for (const auto& [f, c] : report.ccr_at_fpr) targets.push_back(f);
    return osc_curve(read_score_dump(report.files.at("scores")), targets);
}

inline RunReport read_report(const std::string& run_dir) {
    std::ifstream is(detail::run_path(run_dir, "report.json"));
    if (!is) throw IoError("no report.json in " + run_dir);
    auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw IoError(run_dir + "/report.json is not valid JSON");
    return j.get<RunReport>();
}

// ---------------------------------------------------------------------------
// sweeps and comparisons

struct SweepRow {
    double value = 0.0;
    RunReport report;
};

/// One train+evaluate per value of `parameter` ("zeta" or "alpha"), shared seed.
/// Writes `<out_dir>/sweep.csv` with value,accuracy,auosc,auroc,ccr_at_fpr_0.1.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& parameter, const std::vector<double>& values,
                                   const TrainOptions& options = {}) {
    if (parameter != "zeta" && parameter != "alpha") throw DomainError("sweep: parameter must be zeta or alpha");
    if (values.size() < 2) throw DomainError("sweep: need at least two values");
    std::vector<SweepRow> rows;
    for (double v : values) {
        auto cfg = base;
        (parameter == "zeta" ? cfg.loss.zeta : cfg.mix.alpha) = v;
        cfg.out_dir = detail::run_path(base.out_dir, parameter + "_" + detail::format_double(v));
        if (cfg.name.empty()) cfg.name = base.display_name();
        cfg.name += " " + parameter + "=" + detail::format_double(v);
        rows.push_back({v, train(cfg, options).report});
    }
    if (options.write_outputs) {
        std::filesystem::create_directories(base.out_dir);
        auto os = detail::open_out(detail::run_path(base.out_dir, "sweep.csv"));
        os << parameter << ",accuracy,auosc,auroc,ccr_at_fpr_0.1\n";
        for (const auto& r : rows) {
            const auto it = r.report.ccr_at_fpr.find(0.1);
            os << detail::format_double(r.value) << ',' << detail::format_double(r.report.accuracy) << ','
               << detail::format_double(r.report.auosc) << ',' << detail::format_double(r.report.auroc) << ','
               << (it == r.report.ccr_at_fpr.end() ? std::string() : detail::format_double(it->second)) << '\n';
        }
    }
    return rows;
}

struct ComparisonRow {
    std::string method;
    double ccr = 0.0;  ///< CCR at FPR 0.1
    double auosc = 0.0;
    double auroc = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::string markdown() const;
    std::string csv() const;
};

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

} // namespace detail

inline std::string ComparisonTable::markdown() const {
    double best[3] = {-1.0, -1.0, -1.0};
    for (const auto& r : rows) {
        best[0] = std::max(best[0], r.ccr);
        best[1] = std::max(best[1], r.auosc);
        best[2] = std::max(best[2], r.auroc);
    }
    std::ostringstream os;
    os << "| Method | CCR@FPR 1e-1 | AUOSC | AUROC |\n|---|---|---|---|\n";
    auto cell = [](double v, double b) { return v == b ? "**" + detail::fixed4(v) + "**" : detail::fixed4(v); };
    for (const auto& r : rows)
        os << "| " << r.method << " | " << cell(r.ccr, best[0]) << " | " << cell(r.auosc, best[1]) << " | " << cell(r.auroc, best[2])
           << " |\n";
    return os.str();
}

inline std::string ComparisonTable::csv() const {
    std::ostringstream os;
    os << "method,ccr_at_fpr_0.1,auosc,auroc\n";
    for (const auto& r : rows)
        os << r.method << ',' << detail::format_double(r.ccr) << ',' << detail::format_double(r.auosc) << ','
           << detail::format_double(r.auroc) << '\n';
    return os.str();
}

/// Builds the table from finished runs, recomputing every metric from the
/// persisted score dumps. All runs must share one evaluation protocol.
inline ComparisonTable compare_runs(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw DomainError("compare: no runs given");
    ComparisonTable table;
    nlohmann::json protocol;
    for (const auto& dir : run_dirs) {
        auto report = read_report(dir);
        if (protocol.is_null())
            protocol = report.protocol;
        else if (report.protocol != protocol)
            throw DomainError("compare: run " + dir + " uses a different evaluation protocol (" + report.protocol.dump() + " vs " +
                              protocol.dump() + ")");
        auto scores = read_score_dump(detail::run_path(dir, "scores.csv"));
        auto curve = osc_curve(scores, {0.1});
        table.rows.push_back({report.name, curve.ccr_at_fpr.at(0.1), curve.auosc, curve.auroc});
    }
    return table;
}

} // namespace oslab
