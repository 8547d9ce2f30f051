#pragma once

// Weights container:
//
//   bytes 0..3   magic "DSIW"
//   u32          container version (1)
//   u64          JSON header length, then the UTF-8 JSON header
//   u32          tensor count
//   per tensor:  u32 name length, name bytes, one DSID tensor record
//
// The header carries the model spec under "model" plus any caller metadata
// (training config, data fingerprint, feature normalizer). float weights are
// stored as float32 records and double weights as float64, so a round trip
// is bit-exact.

#include <dampid/nn/model.hpp>
#include <dampid/tensor_io.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace dampid::nn {

inline constexpr std::array<char, 4> kWeightsMagic{'D', 'S', 'I', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = {{"cell", to_string(s.cell)},
         {"input_size", s.input_size},
         {"hidden_size", s.hidden_size},
         {"fc1_size", s.fc1_size},
         {"dropout_rate", s.dropout_rate},
         {"output_size", s.output_size}};
}
inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    s.cell = parse_cell_kind(j.at("cell").get<std::string>());
    s.input_size = j.value("input_size", s.input_size);
    s.hidden_size = j.value("hidden_size", s.hidden_size);
    s.fc1_size = j.value("fc1_size", s.fc1_size);
    s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
    s.output_size = j.value("output_size", s.output_size);
}

template <typename T>
struct LoadedModel {
    ModelWeights<T> weights;
    nlohmann::json header;
};

template <typename T>
void write_weights(std::ostream& os, const ModelWeights<T>& w, nlohmann::json metadata = nlohmann::json::object()) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    metadata["model"] = w.spec;
    metadata["scalar"] = std::is_same_v<T, float> ? "float32" : "float64";
    const std::string header = metadata.dump();
    os.write(kWeightsMagic.data(), kWeightsMagic.size());
    io::detail::put_le<std::uint32_t>(os, kWeightsVersion);
    io::detail::put_le<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::uint32_t count = 0;
    w.visit([&](const std::string&, const auto&) { ++count; });
    io::detail::put_le<std::uint32_t>(os, count);
    const auto dtype = std::is_same_v<T, float> ? io::DType::Float32 : io::DType::Float64;
    w.visit([&](const std::string& name, const auto& m) {
        io::detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::Tensor t;
        t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
        t.data.resize(static_cast<std::size_t>(m.size()));
        // row-major payload
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                t.data[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<double>(m(r, c));
        io::write_tensor(os, t, dtype);
    });
    if (!os) throw IoError("failed writing weights container");
}

/// Reads a container; when `expected` is given, its cell kind and sizes must match the file.
template <typename T>
LoadedModel<T> read_weights(std::istream& is, const ModelSpec* expected = nullptr) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size())) throw CorruptContainer("weights container truncated before magic");
    if (magic != kWeightsMagic) throw CorruptContainer("bad magic: not a DSIW weights container");
    const auto version = io::detail::get_le<std::uint32_t>(is, "weights version");
    if (version != kWeightsVersion)
        throw SpecMismatch("unsupported weights container version " + std::to_string(version));
    const auto header_len = io::detail::get_le<std::uint64_t>(is, "header length");
    if (header_len > (1u << 28)) throw CorruptContainer("implausible header length");
    std::string header(header_len, '\0');
    if (!is.read(header.data(), static_cast<std::streamsize>(header_len)))
        throw CorruptContainer("weights container truncated in JSON header");
    LoadedModel<T> out;
    ModelSpec spec;
    try {
        out.header = nlohmann::json::parse(header);
        spec = out.header.at("model").template get<ModelSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptContainer(std::string("malformed weights header: ") + e.what());
    }
    if (expected != nullptr && !(spec == *expected))
        throw SpecMismatch("weights file describes a " + to_string(spec.cell) + " model (hidden " +
                           std::to_string(spec.hidden_size) + "), expected " + to_string(expected->cell) +
                           " (hidden " + std::to_string(expected->hidden_size) + ")");
    out.weights = ModelWeights<T>::zeros(spec);
    const auto count = io::detail::get_le<std::uint32_t>(is, "tensor count");
    std::uint32_t expected_count = 0;
    out.weights.visit([&](const std::string&, const auto&) { ++expected_count; });
    if (count != expected_count)
        throw SpecMismatch("weights file holds " + std::to_string(count) + " tensors, model needs " +
                           std::to_string(expected_count));
    out.weights.visit([&](const std::string& name, auto& m) {
        const auto len = io::detail::get_le<std::uint32_t>(is, "tensor name length");
        if (len > 256) throw CorruptContainer("implausible tensor name length");
        std::string got(len, '\0');
        if (!is.read(got.data(), len)) throw CorruptContainer("weights container truncated in tensor name");
        if (got != name) throw SpecMismatch("expected tensor '" + name + "', found '" + got + "'");
        const auto t = io::read_tensor(is);
        if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(m.rows()) ||
            t.shape[1] != static_cast<std::uint64_t>(m.cols()))
            throw SpecMismatch("tensor '" + name + "' has the wrong shape");
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = static_cast<T>(t.data[static_cast<std::size_t>(r * m.cols() + c)]);
    });
    return out;
}

template <typename T>
void save_weights(const std::filesystem::path& path, const ModelWeights<T>& w,
                  const nlohmann::json& metadata = nlohmann::json::object()) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_weights(os, w, metadata);
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

template <typename T = float>
LoadedModel<T> load_weights(const std::filesystem::path& path, const ModelSpec* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read_weights<T>(is, expected);
}

}  // namespace dampid::nn
