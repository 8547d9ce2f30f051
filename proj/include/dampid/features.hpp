#pragma once

// Short-time Fourier features on a log-spaced 0..10 Hz grid.
//
// A 3001-sample input/output window pair becomes a 168 x 11 real matrix:
// four 42-row blocks [real(U) | real(Y) | phase(U) | phase(Y)], one column
// per STFT frame (L = 2000 samples, hop = 100 samples).

#include <dampid/common.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace dampid::features {

inline constexpr std::size_t kGridSize = 42;
inline constexpr std::size_t kFeatureRows = 4 * kGridSize;

/// Frequencies in Hz: 0, then 10^(i/20 - 1) for i = 0..40 (0.1 Hz .. 10 Hz).
struct FreqGrid {
    std::vector<double> hz;

    std::size_t size() const noexcept { return hz.size(); }
};

inline FreqGrid log_freq_grid() {
    FreqGrid g;
    g.hz.reserve(kGridSize);
    g.hz.push_back(0.0);
    for (int i = 0; i <= 40; ++i) g.hz.push_back(std::pow(10.0, i / 20.0 - 1.0));
    return g;
}

enum class WindowKind { Hann, Rectangular };

/// AbsoluteTime references every frame's phase to sample 0 of the input;
/// FrameLocal restarts the phase ramp at each frame's first sample.
enum class PhaseConvention { AbsoluteTime, FrameLocal };

struct StftConfig {
    std::size_t window_len = 2000;
    std::size_t hop = 100;
    double fs = 1000.0;
    WindowKind window = WindowKind::Hann;
    PhaseConvention phase = PhaseConvention::AbsoluteTime;
};

inline std::string to_string(WindowKind w) { return w == WindowKind::Hann ? "hann" : "rectangular"; }
inline std::string to_string(PhaseConvention p) {
    return p == PhaseConvention::AbsoluteTime ? "absolute_time" : "frame_local";
}

inline void to_json(nlohmann::json& j, const StftConfig& c) {
    j = {{"window_len", c.window_len},
         {"hop", c.hop},
         {"fs", c.fs},
         {"window", to_string(c.window)},
         {"phase_convention", to_string(c.phase)},
         {"grid_hz", log_freq_grid().hz}};
}
inline void from_json(const nlohmann::json& j, StftConfig& c) {
    j.at("window_len").get_to(c.window_len);
    j.at("hop").get_to(c.hop);
    j.at("fs").get_to(c.fs);
    c.window = j.at("window").get<std::string>() == "hann" ? WindowKind::Hann : WindowKind::Rectangular;
    c.phase = j.at("phase_convention").get<std::string>() == "absolute_time" ? PhaseConvention::AbsoluteTime
                                                                              : PhaseConvention::FrameLocal;
}

/// Periodic Hann (0.5 - 0.5 cos(2 pi k / L)) or all-ones window.
inline Eigen::VectorXd make_window(WindowKind kind, std::size_t len) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(len));
    for (std::size_t k = 0; k < len; ++k)
        g[static_cast<Eigen::Index>(k)] =
            kind == WindowKind::Hann
                ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len))
                : 1.0;
    return g;
}

inline std::size_t frame_count(std::size_t signal_len, std::size_t window_len, std::size_t hop) {
    if (signal_len < window_len) return 0;
    return (signal_len - window_len) / hop + 1;
}

/// Complex spectrogram, rows = grid frequencies, columns = frames.
struct Spectrogram {
    Eigen::MatrixXcd values;
    std::size_t hop = 0;
    std::size_t window_len = 0;

    Eigen::Index frequencies() const { return values.rows(); }
    Eigen::Index frames() const { return values.cols(); }
};

/// Precomputed window and phasor tables for a fixed signal length.
///
/// The grid is non-uniform, so every (frame, frequency) bin is a direct sum
///   X[h, m] = sum_k x[m hop + k] g[k] exp(-j 2 pi f_h n_k / fs),
/// with n_k = m hop + k (AbsoluteTime) or n_k = k (FrameLocal).
class StftPlan {
public:
    StftPlan(std::size_t signal_len, StftConfig cfg = {}, FreqGrid grid = log_freq_grid())
        : cfg_(cfg), grid_(std::move(grid)), signal_len_(signal_len) {
        if (cfg_.window_len == 0 || cfg_.hop == 0) throw InvalidArgument("STFT window and hop must be positive");
        if (!(cfg_.fs > 0.0)) throw InvalidArgument("sampling frequency must be positive");
        if (signal_len < cfg_.window_len)
            throw InvalidArgument("signal of " + std::to_string(signal_len) + " samples is shorter than the " +
                                  std::to_string(cfg_.window_len) + "-sample STFT window");
        frames_ = frame_count(signal_len, cfg_.window_len, cfg_.hop);
        window_ = make_window(cfg_.window, cfg_.window_len);
        const auto cols = cfg_.phase == PhaseConvention::AbsoluteTime ? signal_len : cfg_.window_len;
        const auto rows = static_cast<Eigen::Index>(grid_.size());
        cos_.resize(rows, static_cast<Eigen::Index>(cols));
        sin_.resize(rows, static_cast<Eigen::Index>(cols));
        for (Eigen::Index h = 0; h < rows; ++h) {
            const double w = 2.0 * std::numbers::pi * grid_.hz[static_cast<std::size_t>(h)] / cfg_.fs;
            for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(cols); ++n) {
                const double arg = w * static_cast<double>(n);
                cos_(h, n) = std::cos(arg);
                sin_(h, n) = -std::sin(arg);
            }
        }
    }

    const StftConfig& config() const noexcept { return cfg_; }
    const FreqGrid& grid() const noexcept { return grid_; }
    std::size_t signal_len() const noexcept { return signal_len_; }
    std::size_t frames() const noexcept { return frames_; }

    Spectrogram operator()(std::span<const double> x) const {
        if (x.size() != signal_len_)
            throw InvalidArgument("STFT plan built for " + std::to_string(signal_len_) + " samples, got " +
                                  std::to_string(x.size()));
        const auto L = static_cast<Eigen::Index>(cfg_.window_len);
        Spectrogram s;
        s.hop = cfg_.hop;
        s.window_len = cfg_.window_len;
        s.values.resize(static_cast<Eigen::Index>(grid_.size()), static_cast<Eigen::Index>(frames_));
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::VectorXd seg(L);
        for (std::size_t m = 0; m < frames_; ++m) {
            const auto off = static_cast<Eigen::Index>(m * cfg_.hop);
            seg = xv.segment(off, L).cwiseProduct(window_);
            const auto col0 = cfg_.phase == PhaseConvention::AbsoluteTime ? off : Eigen::Index{0};
            const Eigen::VectorXd re = cos_.middleCols(col0, L) * seg;
            const Eigen::VectorXd im = sin_.middleCols(col0, L) * seg;
            for (Eigen::Index h = 0; h < re.size(); ++h)
                s.values(h, static_cast<Eigen::Index>(m)) = {re[h], im[h]};
        }
        return s;
    }

private:
    StftConfig cfg_;
    FreqGrid grid_;
    std::size_t signal_len_;
    std::size_t frames_ = 0;
    Eigen::VectorXd window_;
    Eigen::MatrixXd cos_;
    Eigen::MatrixXd sin_;
};

inline Spectrogram stft(std::span<const double> x, const StftConfig& cfg = {}, const FreqGrid& grid = log_freq_grid()) {
    if (x.size() < cfg.window_len)
        throw InvalidArgument("signal of " + std::to_string(x.size()) + " samples is shorter than the " +
                              std::to_string(cfg.window_len) + "-sample STFT window");
    return StftPlan(x.size(), cfg, grid)(x);
}

/// Phase angle in (-pi, pi]; values with magnitude below 1e-300 have phase 0.
inline double phase_angle(std::complex<double> z) {
    if (std::abs(z) < 1e-300) return 0.0;
    const double a = std::atan2(z.imag(), z.real());
    return a <= -std::numbers::pi ? std::numbers::pi : a;
}

/// 168 x frames feature matrix.
using FeatureTensor = Eigen::MatrixXd;

inline FeatureTensor stack_features(const Spectrogram& su, const Spectrogram& sy) {
    const auto n = su.frequencies();
    const auto frames = su.frames();
    FeatureTensor f(4 * n, frames);
    for (Eigen::Index m = 0; m < frames; ++m) {
        for (Eigen::Index h = 0; h < n; ++h) {
            f(h, m) = su.values(h, m).real();
            f(n + h, m) = sy.values(h, m).real();
            f(2 * n + h, m) = phase_angle(su.values(h, m));
            f(3 * n + h, m) = phase_angle(sy.values(h, m));
        }
    }
    return f;
}

/// Featurizes windows of a fixed length, reusing one plan.
class Featurizer {
public:
    explicit Featurizer(std::size_t window_samples = 3001, StftConfig cfg = {}) : plan_(window_samples, cfg) {}

    const StftPlan& plan() const noexcept { return plan_; }

    FeatureTensor operator()(std::span<const double> u_win, std::span<const double> y_win) const {
        if (u_win.size() != y_win.size())
            throw InvalidArgument("input and output windows differ in length (" + std::to_string(u_win.size()) +
                                  " vs " + std::to_string(y_win.size()) + ")");
        return stack_features(plan_(u_win), plan_(y_win));
    }

private:
    StftPlan plan_;
};

inline FeatureTensor featurize_pair(std::span<const double> u_win, std::span<const double> y_win,
                                    const StftConfig& cfg = {}) {
    if (u_win.size() != y_win.size())
        throw InvalidArgument("input and output windows differ in length (" + std::to_string(u_win.size()) +
                              " vs " + std::to_string(y_win.size()) + ")");
    return Featurizer(u_win.size(), cfg)(u_win, y_win);
}

/// Feature standardization choices. PerRow z-scores every feature row on its
/// own; PerBlock pools the statistics of each 42-row block (real U, real Y,
/// phase U, phase Y), so rows keep their relative scale inside a block.
enum class NormalizeMode { None, PerRow, PerBlock };

inline std::string to_string(NormalizeMode m) {
    switch (m) {
        case NormalizeMode::None: return "none";
        case NormalizeMode::PerRow: return "per_row";
        case NormalizeMode::PerBlock: return "per_block";
    }
    return "?";
}

inline NormalizeMode parse_normalize_mode(const std::string& s) {
    if (s == "none") return NormalizeMode::None;
    if (s == "per_row" || s == "row") return NormalizeMode::PerRow;
    if (s == "per_block" || s == "block") return NormalizeMode::PerBlock;
    throw InvalidArgument("unknown normalization '" + s + "' (expected none, per_row or per_block)");
}

/// Optional standardization, fit on training features only.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd inv_std;

    bool empty() const noexcept { return mean.size() == 0; }

    /// Statistics over every column of every sample, pooled over groups of
    /// `group_rows` consecutive rows; groups with zero spread keep scale 1.
    /// `samples` is any range of matrices with equal row counts (double or float).
    template <typename Range>
    static Normalizer fit(const Range& samples, Eigen::Index group_rows = 1) {
        if (std::begin(samples) == std::end(samples)) throw InvalidArgument("cannot fit a normalizer on zero samples");
        const auto rows = std::begin(samples)->rows();
        if (group_rows < 1 || rows % group_rows != 0)
            throw InvalidArgument("normalizer group size must divide the feature row count");
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows);
        Eigen::VectorXd sq = Eigen::VectorXd::Zero(rows);
        double count = 0.0;
        for (const auto& raw : samples) {
            if (raw.rows() != rows) throw InvalidArgument("normalizer samples differ in row count");
            const Eigen::MatrixXd s = raw.template cast<double>();
            sum += s.rowwise().sum();
            sq += s.array().square().matrix().rowwise().sum();
            count += static_cast<double>(s.cols());
        }
        Normalizer n;
        n.mean.resize(rows);
        n.inv_std.resize(rows);
        for (Eigen::Index g = 0; g < rows; g += group_rows) {
            const double c = count * static_cast<double>(group_rows);
            const double m = sum.segment(g, group_rows).sum() / c;
            const double var = std::max(0.0, sq.segment(g, group_rows).sum() / c - m * m);
            const double sd = std::sqrt(var);
            n.mean.segment(g, group_rows).setConstant(m);
            n.inv_std.segment(g, group_rows).setConstant(sd > 1e-12 * std::max(1.0, std::abs(m)) ? 1.0 / sd : 1.0);
        }
        return n;
    }

    template <typename Range>
    static Normalizer fit(const Range& samples, NormalizeMode mode) {
        switch (mode) {
            case NormalizeMode::None: return {};
            case NormalizeMode::PerRow: return fit(samples, 1);
            case NormalizeMode::PerBlock: return fit(samples, static_cast<Eigen::Index>(kGridSize));
        }
        return {};
    }

    void apply(FeatureTensor& f) const {
        if (empty()) return;
        f = ((f.colwise() - mean).array().colwise() * inv_std.array()).matrix();
    }
};

inline void to_json(nlohmann::json& j, const Normalizer& n) {
    j = {{"mean", std::vector<double>(n.mean.data(), n.mean.data() + n.mean.size())},
         {"inv_std", std::vector<double>(n.inv_std.data(), n.inv_std.data() + n.inv_std.size())}};
}
inline void from_json(const nlohmann::json& j, Normalizer& n) {
    const auto m = j.at("mean").get<std::vector<double>>();
    const auto s = j.at("inv_std").get<std::vector<double>>();
    if (m.size() != s.size()) throw CorruptContainer("normalizer mean/inv_std length mismatch");
    n.mean = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    n.inv_std = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace dampid::features
