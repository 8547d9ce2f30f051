#pragma once

// Trajectory datasets: generation over the (input, zeta) catalog, persistence
// as a JSON manifest plus one binary (u; y) tensor per trajectory, sliding
// window enumeration and the two cross-validation split schemes.

#include <dampid/common.hpp>
#include <dampid/sim.hpp>
#include <dampid/tensor_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace dampid::dataset {

inline std::vector<double> default_zetas() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}; }

inline std::vector<sim::InputSignal> base_inputs() {
    return {sim::Step{1.0}, sim::Ramp{1.0}, sim::Sine{10.0, 0.5}, sim::Sine{10.0, 1.0}, sim::Sine{10.0, 2.0}};
}

/// Base catalog plus step inputs of magnitude -1, +10 and -10.
inline std::vector<sim::InputSignal> extended_inputs() {
    auto v = base_inputs();
    v.push_back(sim::Step{-1.0});
    v.push_back(sim::Step{10.0});
    v.push_back(sim::Step{-10.0});
    return v;
}

struct DatasetConfig {
    double fs = 1000.0;
    double duration_s = 10.0;
    double omega_n = 1.0;
    std::vector<double> zetas = default_zetas();
    std::vector<sim::InputSignal> inputs = base_inputs();
    std::size_t window_len = 3001;
    double noise_sigma = 0.01;
    std::uint64_t master_seed = 0;

    std::size_t trajectory_len() const {
        return static_cast<std::size_t>(std::llround(duration_s * fs)) + 1;
    }
};

/// Noise seed of one trajectory, derived from the master seed and its (input, zeta) label.
inline std::uint64_t trajectory_seed(std::uint64_t master_seed, const sim::InputSignal& input, double zeta) {
    return derive_seed(master_seed, "noise/" + sim::to_string(input) + "/" + sim::detail::fmt_num(zeta));
}

/// In-memory dataset; trajectory i corresponds to
/// (inputs[i / zetas.size()], zetas[i % zetas.size()]).
struct Dataset {
    DatasetConfig config;
    std::vector<sim::Trajectory> trajectories;
};

inline Dataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.zetas.empty() || cfg.inputs.empty()) throw InvalidArgument("dataset needs at least one zeta and input");
    if (cfg.window_len == 0 || cfg.window_len > cfg.trajectory_len())
        throw InvalidArgument("window length must be in [1, trajectory length]");
    Dataset ds;
    ds.config = cfg;
    ds.trajectories.reserve(cfg.inputs.size() * cfg.zetas.size());
    for (const auto& input : cfg.inputs) {
        for (double zeta : cfg.zetas) {
            sim::CanonicalParams plant{cfg.omega_n, zeta, 1.0};
            ds.trajectories.push_back(sim::make_trajectory(input, plant, cfg.duration_s, cfg.fs, cfg.noise_sigma,
                                                           trajectory_seed(cfg.master_seed, input, zeta)));
        }
    }
    return ds;
}

/// The base (5 inputs) or extended (8 inputs) catalog over zeta = 0.1 .. 0.8.
inline Dataset generate_dataset(bool extended, double noise_sigma, std::uint64_t master_seed) {
    DatasetConfig cfg;
    cfg.inputs = extended ? extended_inputs() : base_inputs();
    cfg.noise_sigma = noise_sigma;
    cfg.master_seed = master_seed;
    return generate_dataset(cfg);
}

inline std::size_t window_count(std::size_t traj_len, std::size_t window_len) {
    if (window_len == 0) throw InvalidArgument("window length must be positive");
    if (traj_len < window_len)
        throw InvalidArgument("trajectory of " + std::to_string(traj_len) + " samples is shorter than the " +
                              std::to_string(window_len) + "-sample window");
    return traj_len - window_len + 1;
}

// ---------------------------------------------------------------------------
// Persistence

struct ManifestEntry {
    std::string input;  ///< canonical input text, see sim::to_string
    double zeta = 0.0;
    std::string path;  ///< relative to the manifest directory
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    double fs = 1000.0;
    double duration_s = 10.0;
    double omega_n = 1.0;
    std::vector<double> zetas;
    std::vector<std::string> inputs;
    std::uint64_t window_len = 3001;
    double noise_sigma = 0.0;
    std::uint64_t master_seed = 0;
    std::vector<ManifestEntry> trajectories;
};

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
    j = {{"input", e.input}, {"zeta", e.zeta}, {"path", e.path}, {"samples", e.samples}, {"seed", e.seed}};
}
inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
    j.at("input").get_to(e.input);
    j.at("zeta").get_to(e.zeta);
    j.at("path").get_to(e.path);
    j.at("samples").get_to(e.samples);
    j.at("seed").get_to(e.seed);
}
inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"fs", m.fs},
         {"duration_s", m.duration_s},
         {"omega_n", m.omega_n},
         {"zetas", m.zetas},
         {"inputs", m.inputs},
         {"window_len", m.window_len},
         {"noise_sigma", m.noise_sigma},
         {"master_seed", m.master_seed},
         {"trajectories", m.trajectories}};
}
inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("fs").get_to(m.fs);
    j.at("duration_s").get_to(m.duration_s);
    m.omega_n = j.value("omega_n", 1.0);
    j.at("zetas").get_to(m.zetas);
    j.at("inputs").get_to(m.inputs);
    j.at("window_len").get_to(m.window_len);
    j.at("noise_sigma").get_to(m.noise_sigma);
    j.at("master_seed").get_to(m.master_seed);
    j.at("trajectories").get_to(m.trajectories);
}

inline std::string trajectory_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "traj_%03zu.dsid", index);
    return buf;
}

inline void save_trajectory(const std::filesystem::path& path, const sim::Trajectory& tr) {
    std::vector<double> payload;
    payload.reserve(2 * tr.size());
    payload.insert(payload.end(), tr.u.begin(), tr.u.end());
    payload.insert(payload.end(), tr.y.begin(), tr.y.end());
    io::save_tensor(path, io::Tensor({2, tr.size()}, std::move(payload)), io::DType::Float64);
}

/// Reads the (u; y) matrix of a trajectory file; metadata fields are left default.
inline sim::Trajectory load_trajectory_samples(const std::filesystem::path& path) {
    auto t = io::load_tensor(path);
    if (t.shape.size() != 2 || t.shape[0] != 2)
        throw SpecMismatch("'" + path.string() + "' is not a 2 x n trajectory tensor");
    sim::Trajectory tr;
    const auto n = static_cast<std::ptrdiff_t>(t.shape[1]);
    tr.u.assign(t.data.begin(), t.data.begin() + n);
    tr.y.assign(t.data.begin() + n, t.data.end());
    return tr;
}

/// Writes manifest.json and one trajectory file per (input, zeta) into `dir`.
inline DatasetManifest write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& cfg = ds.config;
    DatasetManifest m;
    m.fs = cfg.fs;
    m.duration_s = cfg.duration_s;
    m.omega_n = cfg.omega_n;
    m.zetas = cfg.zetas;
    for (const auto& in : cfg.inputs) m.inputs.push_back(sim::to_string(in));
    m.window_len = cfg.window_len;
    m.noise_sigma = cfg.noise_sigma;
    m.master_seed = cfg.master_seed;
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& tr = ds.trajectories[i];
        ManifestEntry e{sim::to_string(tr.input), tr.zeta, trajectory_filename(i), tr.size(), tr.seed};
        save_trajectory(dir / e.path, tr);
        m.trajectories.push_back(e);
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in '" + dir.string() + "'");
    os << nlohmann::json(m).dump(2) << '\n';
    if (!os) throw IoError("failed writing manifest in '" + dir.string() + "'");
    return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
    try {
        return nlohmann::json::parse(is).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptContainer("malformed manifest '" + manifest_path.string() + "': " + e.what());
    }
}

/// Loads a manifest and every trajectory it lists, checking counts and lengths.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    const auto m = read_manifest(manifest_path);
    const auto dir = manifest_path.parent_path();
    Dataset ds;
    auto& cfg = ds.config;
    cfg.fs = m.fs;
    cfg.duration_s = m.duration_s;
    cfg.omega_n = m.omega_n;
    cfg.zetas = m.zetas;
    cfg.window_len = m.window_len;
    cfg.noise_sigma = m.noise_sigma;
    cfg.master_seed = m.master_seed;
    cfg.inputs.clear();
    for (const auto& s : m.inputs) cfg.inputs.push_back(sim::parse_input(s));
    if (m.trajectories.size() != cfg.inputs.size() * cfg.zetas.size())
        throw SpecMismatch("manifest lists " + std::to_string(m.trajectories.size()) + " trajectories, expected " +
                           std::to_string(cfg.inputs.size() * cfg.zetas.size()));
    for (std::size_t i = 0; i < m.trajectories.size(); ++i) {
        const auto& e = m.trajectories[i];
        auto tr = load_trajectory_samples(dir / e.path);
        if (tr.size() != e.samples)
            throw SpecMismatch("'" + e.path + "' holds " + std::to_string(tr.size()) + " samples, manifest declares " +
                               std::to_string(e.samples));
        const auto& expect_input = cfg.inputs[i / cfg.zetas.size()];
        const double expect_zeta = cfg.zetas[i % cfg.zetas.size()];
        if (sim::parse_input(e.input) != expect_input || e.zeta != expect_zeta)
            throw SpecMismatch("manifest entry " + std::to_string(i) + " is out of (input, zeta) order");
        tr.fs = m.fs;
        tr.input = expect_input;
        tr.zeta = e.zeta;
        tr.noise_sigma = m.noise_sigma;
        tr.seed = e.seed;
        ds.trajectories.push_back(std::move(tr));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Windows and splits

struct WindowRef {
    std::uint32_t trajectory = 0;
    std::uint32_t start = 0;
    std::uint32_t length = 0;

    friend auto operator<=>(const WindowRef&, const WindowRef&) = default;
};

/// Every `stride`-th window start of every trajectory, in (trajectory, start) order.
/// stride = 1 gives the full overlapping set.
inline std::vector<WindowRef> enumerate_windows(const Dataset& ds, std::size_t stride = 1) {
    if (stride == 0) throw InvalidArgument("window stride must be positive");
    std::vector<WindowRef> out;
    const auto len = ds.config.window_len;
    for (std::size_t t = 0; t < ds.trajectories.size(); ++t) {
        const auto count = window_count(ds.trajectories[t].size(), len);
        for (std::size_t s = 0; s < count; s += stride)
            out.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(s),
                           static_cast<std::uint32_t>(len)});
    }
    return out;
}

enum class SplitKind { SepZeta, MixZeta };

struct SplitSpec {
    SplitKind kind = SplitKind::MixZeta;
    int fold = 1;
    std::uint64_t seed = 0;
    std::vector<WindowRef> train;
    std::vector<WindowRef> validation;
    std::vector<WindowRef> test;
};

inline constexpr double kValidationFraction = 0.1;

namespace detail {

/// Seeded shuffle of the training half, then the first 10% become validation.
inline void carve_validation(std::vector<WindowRef> pool, std::uint64_t seed, SplitSpec& out) {
    std::mt19937_64 rng(derive_seed(seed, "split/validation"));
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(pool.size())));
    out.validation.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
}

}  // namespace detail

/// The zeta values assigned to the training side of a separate-zeta fold.
/// Fold 1 trains on the 1st, 3rd, 5th, ... distinct zeta (0.1, 0.3, 0.5, 0.7 for
/// the default grid); fold 2 trains on the others.
inline std::set<double> sep_zeta_train_set(const DatasetConfig& cfg, int fold) {
    if (fold != 1 && fold != 2) throw InvalidArgument("fold must be 1 or 2");
    std::vector<double> z(cfg.zetas);
    std::sort(z.begin(), z.end());
    std::set<double> out;
    for (std::size_t i = 0; i < z.size(); ++i)
        if ((i % 2 == 0) == (fold == 1)) out.insert(z[i]);
    return out;
}

inline SplitSpec split_sep_zeta(const Dataset& ds, const std::vector<WindowRef>& windows, int fold,
                                std::uint64_t seed) {
    const auto train_zetas = sep_zeta_train_set(ds.config, fold);
    SplitSpec out;
    out.kind = SplitKind::SepZeta;
    out.fold = fold;
    out.seed = seed;
    std::vector<WindowRef> pool;
    for (const auto& w : windows) {
        if (train_zetas.contains(ds.trajectories.at(w.trajectory).zeta))
            pool.push_back(w);
        else
            out.test.push_back(w);
    }
    detail::carve_validation(std::move(pool), derive_seed(seed, "sep/" + std::to_string(fold)), out);
    return out;
}

/// Random halving of all windows. Fold 1 tests on the first half of the seeded
/// permutation, fold 2 on the second; the other half is train + validation.
inline SplitSpec split_mix_zeta(const std::vector<WindowRef>& windows, std::uint64_t seed, int fold = 1) {
    if (fold != 1 && fold != 2) throw InvalidArgument("fold must be 1 or 2");
    std::vector<WindowRef> perm(windows);
    std::mt19937_64 rng(derive_seed(seed, "mix/halves"));
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto half = static_cast<std::ptrdiff_t>(perm.size() / 2);
    std::vector<WindowRef> first(perm.begin(), perm.begin() + half);
    std::vector<WindowRef> second(perm.begin() + half, perm.end());
    SplitSpec out;
    out.kind = SplitKind::MixZeta;
    out.fold = fold;
    out.seed = seed;
    out.test = fold == 1 ? first : second;
    detail::carve_validation(fold == 1 ? std::move(second) : std::move(first),
                             derive_seed(seed, "mix/" + std::to_string(fold)), out);
    return out;
}

inline SplitSpec make_split(SplitKind kind, const Dataset& ds, const std::vector<WindowRef>& windows, int fold,
                            std::uint64_t seed) {
    return kind == SplitKind::SepZeta ? split_sep_zeta(ds, windows, fold, seed)
                                      : split_mix_zeta(windows, seed, fold);
}

}  // namespace dampid::dataset
