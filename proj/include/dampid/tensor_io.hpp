#pragma once

// Little-endian binary tensor container.
//
//   bytes 0..3   magic "DSID"
//   u32          format version (1)
//   u32          dtype code (1 = float64, 2 = float32)
//   u32          dimension count
//   u64 x ndim   dimensions
//   payload      row-major, little-endian
//
// Values are held as double in memory; float32 storage rounds on write.

#include <dampid/common.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace dampid::io {

inline constexpr std::array<char, 4> kTensorMagic{'D', 'S', 'I', 'D'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint32_t { Float64 = 1, Float32 = 2 };

struct Tensor {
    std::vector<std::uint64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::uint64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (element_count() != data.size()) throw InvalidArgument("tensor shape does not match data size");
    }

    std::uint64_t element_count() const {
        return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                               [](std::uint64_t a, std::uint64_t b) { return a * b; });
    }
};

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T)))
        throw CorruptContainer(std::string("container truncated while reading ") + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t, DType dtype = DType::Float64) {
    if (t.element_count() != t.data.size()) throw InvalidArgument("tensor shape does not match data size");
    os.write(kTensorMagic.data(), kTensorMagic.size());
    detail::put_le<std::uint32_t>(os, kTensorVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dtype));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le<std::uint64_t>(os, d);
    if (dtype == DType::Float64) {
        for (double v : t.data) detail::put_le<double>(os, v);
    } else {
        for (double v : t.data) detail::put_le<float>(os, static_cast<float>(v));
    }
    if (!os) throw IoError("failed writing tensor payload");
}

inline Tensor read_tensor(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size())) throw CorruptContainer("container truncated before magic");
    if (magic != kTensorMagic) throw CorruptContainer("bad magic: not a DSID tensor container");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != kTensorVersion)
        throw SpecMismatch("unsupported tensor container version " + std::to_string(version));
    const auto code = detail::get_le<std::uint32_t>(is, "dtype");
    if (code != 1 && code != 2) throw CorruptContainer("unknown dtype code " + std::to_string(code));
    const auto ndim = detail::get_le<std::uint32_t>(is, "dimension count");
    if (ndim > 16) throw CorruptContainer("implausible dimension count " + std::to_string(ndim));
    Tensor t;
    t.shape.resize(ndim);
    for (auto& d : t.shape) d = detail::get_le<std::uint64_t>(is, "dimensions");
    const auto n = t.element_count();
    if (n > (std::uint64_t{1} << 34)) throw CorruptContainer("implausible tensor size");
    t.data.resize(n);
    if (static_cast<DType>(code) == DType::Float64) {
        for (auto& v : t.data) v = detail::get_le<double>(is, "payload");
    } else {
        for (auto& v : t.data) v = detail::get_le<float>(is, "payload");
    }
    return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::Float64) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_tensor(os, t, dtype);
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_tensor(is);
}

}  // namespace dampid::io
