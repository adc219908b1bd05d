#pragma once

// Parameter checkpoint container.
//
//   "OSLAB1"                      6 bytes magic
//   u8  dtype                     4 = float32, 8 = float64
//   u8  reserved                  0
//   u32 tensor count
//   per tensor:
//     u32 name length, name bytes (UTF-8)
//     u32 rank, u64 extent[rank]
//     payload: product(extents) IEEE-754 values
//   u32 metadata length, metadata bytes (UTF-8 JSON)
//
// All integers and payload values are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "oslab/tensor.hpp"

namespace oslab {

inline constexpr char kCheckpointMagic[6] = {'O', 'S', 'L', 'A', 'B', '1'};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
struct Checkpoint {
    std::vector<NamedTensor<T>> tensors;
    nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

template <typename U>
U to_little(U v) {
    static_assert(std::is_integral_v<U>);
    if constexpr (std::endian::native == std::endian::big) {
        U out = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xFF));
        return out;
    } else {
        return v;
    }
}

class ByteWriter {
public:
    template <typename U>
    void put(U v) {
        v = to_little(v);
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(U));
    }
    template <typename F>
    void put_float(F v) {
        using Bits = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
        put(std::bit_cast<Bits>(v));
    }
    void put_raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const char*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<char> bytes;
};

class ByteReader {
public:
    ByteReader(const std::vector<char>& b, std::string source) : bytes_(b), source_(std::move(source)) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return to_little(v);
    }
    template <typename F>
    F get_float() {
        using Bits = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
        return std::bit_cast<F>(get<Bits>());
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint " + source_ + ": truncated");
    }
    const std::vector<char>& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

} // namespace detail

template <typename T>
std::vector<char> encode_checkpoint(const Checkpoint<T>& ckpt) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    detail::ByteWriter w;
    w.put_raw(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.put(static_cast<std::uint8_t>(sizeof(T)));
    w.put(std::uint8_t{0});
    w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        w.put(static_cast<std::uint32_t>(name.size()));
        w.put_raw(name.data(), name.size());
        w.put(static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) w.put(static_cast<std::uint64_t>(d));
        for (T v : tensor.data()) w.put_float(v);
    }
    const std::string meta = ckpt.metadata.dump();
    w.put(static_cast<std::uint32_t>(meta.size()));
    w.put_raw(meta.data(), meta.size());
    return std::move(w.bytes);
}

/// Decodes into precision T; a payload stored at the other precision is converted.
template <typename T>
Checkpoint<T> decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "<memory>") {
    detail::ByteReader r(bytes, source);
    if (r.get_string(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
        throw IoError("checkpoint " + source + ": bad magic");
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != 4 && dtype != 8) throw IoError("checkpoint " + source + ": unknown dtype " + std::to_string(dtype));
    r.get<std::uint8_t>();
    const auto count = r.get<std::uint32_t>();
    Checkpoint<T> out;
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name = r.get_string(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw IoError("checkpoint " + source + ": implausible rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        const std::size_t n = numel_of(shape);
        if (n > bytes.size()) throw IoError("checkpoint " + source + ": truncated payload for " + name);
        std::vector<T> values(n);
        for (auto& v : values) v = dtype == 4 ? static_cast<T>(r.get_float<float>()) : static_cast<T>(r.get_float<double>());
        out.tensors.push_back({std::move(name), Tensor<T>(std::move(shape), std::move(values))});
    }
    const std::string meta = r.get_string(r.get<std::uint32_t>());
    if (!r.at_end()) throw IoError("checkpoint " + source + ": trailing bytes");
    out.metadata = meta.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta);
    return out;
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path);
}

inline std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    return decode_checkpoint<T>(read_file_bytes(path), path);
}

} // namespace oslab
