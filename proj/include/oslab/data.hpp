#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "oslab/openset.hpp"
#include "oslab/rng.hpp"
#include "oslab/tensor.hpp"

namespace oslab {

// ---------------------------------------------------------------------------
// IDX

enum class IdxErrorKind { wrong_magic, truncated, dimension_overflow, trailing_data };

class IdxError : public Error {
public:
    IdxError(IdxErrorKind kind, const std::string& what) : Error("idx: " + what), kind_(kind) {}
    IdxErrorKind kind() const { return kind_; }

private:
    IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    if (b.size() < at + 4) throw IdxError(IdxErrorKind::truncated, "header truncated at byte " + std::to_string(b.size()));
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

/// Validates magic and header; returns dims and the payload offset.
inline std::vector<std::size_t> idx_header(std::span<const std::uint8_t> bytes, std::uint32_t magic, std::size_t& offset) {
    const std::uint32_t got = read_be32(bytes, 0);
    if (got != magic) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08X", got);
        throw IdxError(IdxErrorKind::wrong_magic, std::string("unexpected magic ") + buf);
    }
    const std::size_t rank = magic & 0xFF;
    std::vector<std::size_t> dims(rank);
    std::uint64_t total = 1;
    constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 40;
    for (std::size_t i = 0; i < rank; ++i) {
        dims[i] = read_be32(bytes, 4 + 4 * i);
        if (dims[i] != 0 && total > kMaxPayload / dims[i])
            throw IdxError(IdxErrorKind::dimension_overflow, "dimension product overflows");
        total *= std::max<std::uint64_t>(dims[i], 1);
    }
    offset = 4 + 4 * rank;
    const std::uint64_t payload = numel_of(dims);
    if (bytes.size() - offset < payload)
        throw IdxError(IdxErrorKind::truncated, "payload has " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                                                     std::to_string(payload));
    if (bytes.size() - offset > payload) throw IdxError(IdxErrorKind::trailing_data, "bytes after payload");
    return dims;
}

} // namespace detail

/// Rank-3 uint8 image stream -> [N,H,W] with pixels scaled to [0,1].
template <typename T>
Tensor<T> parse_idx_images(std::span<const std::uint8_t> bytes) {
    std::size_t offset = 0;
    auto dims = detail::idx_header(bytes, kIdxImagesMagic, offset);
    Tensor<T> out(Shape(dims.begin(), dims.end()));
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(bytes[offset + i]) / T{255};
    return out;
}

/// Rank-1 uint8 label stream.
inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    std::size_t offset = 0;
    auto dims = detail::idx_header(bytes, kIdxLabelsMagic, offset);
    std::vector<int> out(dims[0]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[offset + i];
    return out;
}

/// Either an image tensor or a label list, chosen by the stream's magic.
template <typename T>
struct IdxData {
    bool is_labels = false;
    Tensor<T> images;
    std::vector<int> labels;
};

template <typename T>
IdxData<T> parse_idx(std::span<const std::uint8_t> bytes) {
    const std::uint32_t magic = detail::read_be32(bytes, 0);
    IdxData<T> out;
    if (magic == kIdxLabelsMagic) {
        out.is_labels = true;
        out.labels = parse_idx_labels(bytes);
    } else {
        out.images = parse_idx_images<T>(bytes);
    }
    return out;
}

inline std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::size_t n, std::size_t h,
                                                   std::size_t w) {
    if (pixels.size() != n * h * w) throw DomainError("encode_idx_images: pixel count mismatch");
    std::vector<std::uint8_t> out;
    auto be = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    };
    be(kIdxImagesMagic);
    be(static_cast<std::uint32_t>(n));
    be(static_cast<std::uint32_t>(h));
    be(static_cast<std::uint32_t>(w));
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const std::vector<int>& labels) {
    std::vector<std::uint8_t> out;
    auto be = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
    };
    be(kIdxLabelsMagic);
    be(static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) out.push_back(static_cast<std::uint8_t>(l));
    return out;
}

/// Reads a file, inflating it when gzip-compressed (plain files pass through).
inline std::vector<std::uint8_t> read_maybe_gz(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    for (;;) {
        const int n = gzread(f, buf, sizeof(buf));
        if (n < 0) {
            gzclose(f);
            throw IoError("decompression failed: " + path);
        }
        if (n == 0) break;
        out.insert(out.end(), buf, buf + n);
    }
    // a stream cut before its trailer reads cleanly but fails on close
    if (gzclose(f) != Z_OK) throw IoError("truncated or corrupt gzip stream: " + path);
    return out;
}

inline void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path);
}

/// `dir/name` or `dir/name.gz`, whichever exists.
inline std::string find_data_file(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    for (const auto& candidate : {fs::path(dir) / name, fs::path(dir) / (name + ".gz")})
        if (fs::exists(candidate)) return candidate.string();
    throw IoError("dataset file " + name + "[.gz] not found in " + dir);
}

// ---------------------------------------------------------------------------
// splits

enum class SplitRole { train_known, background, eval_known, eval_unknown };

inline std::string to_string(SplitRole r) {
    switch (r) {
    case SplitRole::train_known: return "train_known";
    case SplitRole::background: return "background";
    case SplitRole::eval_known: return "eval_known";
    case SplitRole::eval_unknown: return "eval_unknown";
    }
    return "?";
}

template <typename T>
struct DatasetSplit {
    SplitRole role = SplitRole::train_known;
    Tensor<T> images;                 ///< [N,C,H,W]
    std::vector<int> labels;          ///< kUnknownLabel for eval_unknown
    std::string source;               ///< e.g. "mnist/train"
    std::optional<std::vector<int>> class_filter;
    std::vector<std::size_t> indices; ///< sample index within `source`

    std::size_t size() const { return labels.size(); }
    std::size_t sample_numel() const { return size() ? images.numel() / size() : 0; }

    void validate() const {
        if (images.rank() != 4 || images.shape()[0] != labels.size() || indices.size() != labels.size())
            detail::shape_invalid("dataset", images.shape(), "images, labels and indices disagree");
        for (int l : labels) {
            if (role == SplitRole::eval_unknown && l != kUnknownLabel) throw Error("dataset: eval_unknown split carries labels");
            if (class_filter && std::find(class_filter->begin(), class_filter->end(), l) == class_filter->end())
                throw Error("dataset: label " + std::to_string(l) + " outside class filter");
        }
    }
};

/// Rows `idx` of a split, keeping its metadata.
template <typename T>
DatasetSplit<T> subset(const DatasetSplit<T>& s, const std::vector<std::size_t>& idx) {
    DatasetSplit<T> out;
    out.role = s.role;
    out.source = s.source;
    out.class_filter = s.class_filter;
    Shape shape = s.images.shape();
    shape[0] = idx.size();
    out.images = Tensor<T>(shape);
    const std::size_t per = s.sample_numel();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(s.images.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                    out.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
        out.labels.push_back(s.labels[idx[i]]);
        out.indices.push_back(s.indices[idx[i]]);
    }
    return out;
}

template <typename T>
DatasetSplit<T> make_split(SplitRole role, Tensor<T> images, std::vector<int> labels, std::string source) {
    DatasetSplit<T> s;
    s.role = role;
    if (images.rank() == 3) images = reshape(images.detach(), Shape{images.shape()[0], 1, images.shape()[1], images.shape()[2]});
    s.images = images.detach();
    s.labels = std::move(labels);
    s.source = std::move(source);
    s.indices.resize(s.labels.size());
    std::iota(s.indices.begin(), s.indices.end(), std::size_t{0});
    s.validate();
    return s;
}

/// Throws when two splits share a sample of the same source.
template <typename T>
void assert_disjoint(const DatasetSplit<T>& a, const DatasetSplit<T>& b) {
    if (a.source != b.source) return;
    std::set<std::size_t> seen(a.indices.begin(), a.indices.end());
    for (auto i : b.indices)
        if (seen.count(i)) throw Error("dataset leakage: sample " + std::to_string(i) + " of " + a.source + " in " +
                                       to_string(a.role) + " and " + to_string(b.role));
}

/// Swap H and W of every image (EMNIST files store images transposed).
template <typename T>
Tensor<T> transpose_images(const Tensor<T>& images) {
    if (images.rank() < 2) detail::shape_invalid("transpose_images", images.shape(), "need rank >= 2");
    Shape shape = images.shape();
    const std::size_t h = shape[shape.size() - 2], w = shape[shape.size() - 1];
    std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
    Tensor<T> out(shape);
    const std::size_t planes = images.numel() / (h * w);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out[p * h * w + x * h + y] = images[p * h * w + y * w + x];
    return out;
}

/// Keep samples whose label is in `classes` and relabel them densely 0..|classes|-1 in the given order.
template <typename T>
DatasetSplit<T> filter_classes(const DatasetSplit<T>& s, const std::vector<int>& classes) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (std::find(classes.begin(), classes.end(), s.labels[i]) != classes.end()) keep.push_back(i);
    auto out = subset(s, keep);
    for (auto& l : out.labels) l = static_cast<int>(std::find(classes.begin(), classes.end(), l) - classes.begin());
    std::vector<int> dense(classes.size());
    std::iota(dense.begin(), dense.end(), 0);
    out.class_filter = dense;
    return out;
}

/// i.i.d. N(mean, std) pixels clipped to [0,1], as an eval_unknown split.
template <typename T>
DatasetSplit<T> make_gaussian_unknowns(std::size_t n, std::array<std::size_t, 3> shape, double mean, double stddev,
                                       std::uint64_t seed) {
    if (n == 0) throw DomainError("make_gaussian_unknowns: n must be positive");
    if (!(stddev >= 0.0)) throw DomainError("make_gaussian_unknowns: std must be non-negative");
    Rng rng(derive_seed(seed, 0x6A55));
    Tensor<T> images({n, shape[0], shape[1], shape[2]});
    for (auto& v : images.data()) v = static_cast<T>(std::clamp(rng.normal(mean, stddev), 0.0, 1.0));
    return make_split(SplitRole::eval_unknown, images, std::vector<int>(n, kUnknownLabel), "gaussian_noise");
}

/// Letters 1..boundary become the background split, letters boundary+1..26 the
/// eval_unknown split (labels erased, subsampled to `unknown_count` with `seed`).
template <typename T>
std::pair<DatasetSplit<T>, DatasetSplit<T>> split_emnist_letters(const DatasetSplit<T>& letters, int boundary = 13,
                                                                 std::size_t unknown_count = 10000,
                                                                 std::uint64_t seed = 0) {
    if (boundary < 0 || boundary > 26) throw DomainError("split_emnist_letters: boundary must be in [0,26]");
    std::set<int> present(letters.labels.begin(), letters.labels.end());
    for (int c = 1; c <= 26; ++c)
        if (!present.count(c)) throw Error("split_emnist_letters: class " + std::to_string(c) + " missing");
    std::vector<std::size_t> bg, unk;
    for (std::size_t i = 0; i < letters.size(); ++i) (letters.labels[i] <= boundary ? bg : unk).push_back(i);
    if (unk.size() > unknown_count) {
        Rng rng(derive_seed(seed, 0xE3));
        rng.shuffle(unk.begin(), unk.end());
        unk.resize(unknown_count);
        std::sort(unk.begin(), unk.end());
    }
    auto background = subset(letters, bg);
    background.role = SplitRole::background;
    std::vector<int> bg_classes(static_cast<std::size_t>(boundary));
    std::iota(bg_classes.begin(), bg_classes.end(), 1);
    background.class_filter = bg_classes;
    auto unknown = subset(letters, unk);
    unknown.role = SplitRole::eval_unknown;
    unknown.class_filter.reset();
    std::fill(unknown.labels.begin(), unknown.labels.end(), kUnknownLabel);
    return {background, unknown};
}

// ---------------------------------------------------------------------------
// normalization

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"std", s.stddev}}; }
inline void from_json(const nlohmann::json& j, NormStats& s) {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("std").get<std::vector<double>>();
}

/// Per-channel mean and population std. Only training splits may supply statistics.
template <typename T>
NormStats compute_norm_stats(const DatasetSplit<T>& split) {
    if (split.role != SplitRole::train_known) throw Error("normalization statistics must come from train_known, got " + to_string(split.role));
    const auto& s = split.images.shape();
    const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
    NormStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < hw; ++p) sum += static_cast<double>(split.images[(i * c + ch) * hw + p]);
        const double count = static_cast<double>(n * hw);
        st.mean[ch] = sum / count;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < hw; ++p) {
                const double d = static_cast<double>(split.images[(i * c + ch) * hw + p]) - st.mean[ch];
                sq += d * d;
            }
        st.stddev[ch] = std::sqrt(sq / count);
        if (!(st.stddev[ch] > 1e-12)) throw DomainError("normalize: channel " + std::to_string(ch) + " has zero std");
    }
    return st;
}

/// (x - mean) / std per channel.
template <typename T>
DatasetSplit<T> normalize(const DatasetSplit<T>& split, const NormStats& stats) {
    const auto& s = split.images.shape();
    const std::size_t c = s[1], hw = s[2] * s[3];
    if (stats.mean.size() != c || stats.stddev.size() != c) throw ShapeError("normalize: stats channel count mismatch");
    for (double sd : stats.stddev)
        if (!(sd > 0.0)) throw DomainError("normalize: std must be positive");
    DatasetSplit<T> out = split;
    out.images = split.images.clone();
    for (std::size_t i = 0; i < out.images.numel(); ++i) {
        const std::size_t ch = (i / hw) % c;
        out.images[i] = static_cast<T>((static_cast<double>(out.images[i]) - stats.mean[ch]) / stats.stddev[ch]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary

/// Records of 1 label byte + 3072 pixel bytes (3x32x32, channel-major).
template <typename T>
DatasetSplit<T> parse_cifar10(std::span<const std::uint8_t> bytes, SplitRole role, const std::string& source) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    if (bytes.size() % kRecord != 0) throw IoError("cifar10 " + source + ": size is not a multiple of 3073");
    const std::size_t n = bytes.size() / kRecord;
    Tensor<T> images({n, 3, 32, 32});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = bytes[i * kRecord];
        if (labels[i] > 9) throw IoError("cifar10 " + source + ": label out of range");
        for (std::size_t p = 0; p < kRecord - 1; ++p)
            images[i * (kRecord - 1) + p] = static_cast<T>(bytes[i * kRecord + 1 + p]) / T{255};
    }
    return make_split(role, images, labels, source);
}

// ---------------------------------------------------------------------------
// batching

/// Reproducible shuffled mini-batches; epoch e uses a stream derived from (seed, e).
class BatchIterator {
public:
    BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool drop_last = false)
        : n_(n), batch_(batch_size), seed_(seed), drop_last_(drop_last) {
        if (batch_size == 0) throw DomainError("batch size must be positive");
    }

    std::vector<std::vector<std::size_t>> epoch(std::size_t e) const {
        Rng rng(derive_seed(seed_, 0xBA7C000 + e));
        auto order = rng.permutation(n_);
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t i = 0; i < n_; i += batch_) {
            const std::size_t end = std::min(n_, i + batch_);
            if (drop_last_ && end - i < batch_) break;
            out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
        }
        return out;
    }

    std::size_t batch_size() const { return batch_; }

private:
    std::size_t n_, batch_;
    std::uint64_t seed_;
    bool drop_last_;
};

/// Images of rows `idx` as one [B,C,H,W] tensor.
template <typename T>
Tensor<T> gather_images(const DatasetSplit<T>& s, std::span<const std::size_t> idx) {
    Shape shape = s.images.shape();
    shape[0] = idx.size();
    Tensor<T> out(shape);
    const std::size_t per = s.sample_numel();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(s.images.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    return out;
}

template <typename T>
std::vector<int> gather_labels(const DatasetSplit<T>& s, std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(s.labels[i]);
    return out;
}

// ---------------------------------------------------------------------------
// synthetic data

/// Procedural K-class images: each class is a fixed random stroke template,
/// every sample adds a random shift and Gaussian pixel noise. Used for smoke
/// runs and tests that must not depend on downloaded datasets.
template <typename T>
DatasetSplit<T> make_synthetic_classes(std::size_t n, std::size_t k, std::array<std::size_t, 3> shape,
                                       std::uint64_t seed, SplitRole role, double noise = 0.15) {
    const auto [c, h, w] = shape;
    std::vector<std::vector<double>> templates(k, std::vector<double>(c * h * w, 0.0));
    Rng trng(derive_seed(seed, 0x7E3A));
    for (auto& t : templates) {
        for (int stroke = 0; stroke < 3; ++stroke) {
            const double y0 = trng.uniform(0.2, 0.8) * static_cast<double>(h), x0 = trng.uniform(0.2, 0.8) * static_cast<double>(w);
            const double y1 = trng.uniform(0.2, 0.8) * static_cast<double>(h), x1 = trng.uniform(0.2, 0.8) * static_cast<double>(w);
            for (int step = 0; step <= 32; ++step) {
                const double a = step / 32.0;
                const auto y = static_cast<std::size_t>(y0 + a * (y1 - y0));
                const auto x = static_cast<std::size_t>(x0 + a * (x1 - x0));
                for (std::size_t ch = 0; ch < c; ++ch) t[(ch * h + y) * w + x] = 1.0;
            }
        }
    }
    // the stream tag keeps train and eval draws apart for the same base seed
    Rng rng(derive_seed(seed, 0x5A00 + static_cast<std::uint64_t>(role)));
    Tensor<T> images({n, c, h, w});
    // balanced labels, so a class gets exactly n / k rows when k divides n
    std::vector<int> labels(n);
    const auto order = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i) labels[order[i]] = static_cast<int>(i % k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto cls = static_cast<std::size_t>(labels[i]);
        const auto dy = static_cast<std::ptrdiff_t>(rng.below(3)) - 1, dx = static_cast<std::ptrdiff_t>(rng.below(3)) - 1;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const auto sy = static_cast<std::ptrdiff_t>(y) - dy, sx = static_cast<std::ptrdiff_t>(x) - dx;
                    double v = 0.0;
                    if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx < static_cast<std::ptrdiff_t>(w))
                        v = templates[cls][(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
                    images[((i * c + ch) * h + y) * w + x] = static_cast<T>(std::clamp(v + rng.normal(0.0, noise), 0.0, 1.0));
                }
    }
    return make_split(role, images, labels, "synthetic/" + to_string(role));
}

} // namespace oslab
