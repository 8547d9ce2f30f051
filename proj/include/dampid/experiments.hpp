#pragma once

// Experiment presets, two-fold runs, MAD metrics and error histograms.

#include <dampid/common.hpp>
#include <dampid/dataset.hpp>
#include <dampid/features.hpp>
#include <dampid/nn/model.hpp>
#include <dampid/nn/serialize.hpp>
#include <dampid/nn/train.hpp>
#include <dampid/sim.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace dampid::experiments {

// ---------------------------------------------------------------------------
// Metrics

/// Mean absolute deviation of predictions from targets.
inline double mad(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size())
        throw InvalidArgument("mad: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(targets.size()) + " targets");
    if (predictions.empty()) throw InvalidArgument("mad: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
    return s / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------
// Selection: time intervals and input filters

/// A time span of the trajectory. A window belongs to it when the whole
/// window lies inside, i.e. its start time is in [begin_s, end_s - window duration].
struct Interval {
    double begin_s = 0.0;
    double end_s = 10.0;

    std::string label() const { return sim::detail::fmt_num(begin_s) + "-" + sim::detail::fmt_num(end_s); }

    bool contains(std::size_t start, std::size_t window_len, double fs) const {
        const double t = static_cast<double>(start) / fs;
        const double window_s = static_cast<double>(window_len - 1) / fs;
        constexpr double eps = 1e-9;
        return t >= begin_s - eps && t <= end_s - window_s + eps;
    }

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// The four interval presets used in the histograms: 0-3, 3-6, 6-9 and 7-10 s.
inline std::vector<Interval> interval_presets() { return {{0, 3}, {3, 6}, {6, 9}, {7, 10}}; }

/// Parses "a-b" (seconds).
inline Interval parse_interval(const std::string& text) {
    const auto dash = text.find('-', 1);
    if (dash == std::string::npos) throw InvalidArgument("interval '" + text + "' is not of the form a-b");
    Interval iv;
    try {
        std::size_t used = 0;
        iv.begin_s = std::stod(text.substr(0, dash), &used);
        if (used != dash) throw InvalidArgument("");
        const auto rest = text.substr(dash + 1);
        iv.end_s = std::stod(rest, &used);
        if (used != rest.size()) throw InvalidArgument("");
    } catch (const std::exception&) {
        throw InvalidArgument("interval '" + text + "' is not of the form a-b");
    }
    if (!(iv.end_s > iv.begin_s) || iv.begin_s < 0.0) throw InvalidArgument("interval '" + text + "' is empty");
    return iv;
}

inline std::string input_kind(const sim::InputSignal& s) {
    return std::visit(
        [](const auto& v) -> std::string {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, sim::Step>) return "step";
            else if constexpr (std::is_same_v<V, sim::Ramp>) return "ramp";
            else return "sine";
        },
        s);
}

/// Selects inputs by kind ("step") or exact label ("sine:10:2"). Empty selects all.
struct InputFilter {
    std::vector<std::string> terms;

    bool matches(const sim::InputSignal& s) const {
        if (terms.empty()) return true;
        const auto kind = input_kind(s);
        const auto label = sim::to_string(s);
        return std::any_of(terms.begin(), terms.end(), [&](const std::string& t) { return t == kind || t == label; });
    }

    std::string label() const {
        if (terms.empty()) return "all";
        std::string out;
        for (const auto& t : terms) out += (out.empty() ? "" : "+") + t;
        for (auto& c : out)
            if (c == ':') c = '_';
        return out;
    }

    /// Comma-separated terms; "" or "all" selects everything.
    static InputFilter parse(const std::string& text) {
        InputFilter f;
        if (text.empty() || text == "all") return f;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            if (item != "step" && item != "ramp" && item != "sine") sim::parse_input(item);  // validates
            f.terms.push_back(item);
        }
        return f;
    }

    friend bool operator==(const InputFilter&, const InputFilter&) = default;
};

// ---------------------------------------------------------------------------
// Histograms

/// Mean absolute zeta error per (zeta, input) cell, rows = zetas, columns = inputs.
struct ErrorHistogram2D {
    std::string interval_label;
    std::string input_set = "all";
    std::vector<double> zetas;
    std::vector<std::string> inputs;
    std::vector<double> sum_abs;       ///< row-major zetas x inputs
    std::vector<std::size_t> counts;   ///< row-major zetas x inputs

    ErrorHistogram2D() = default;
    ErrorHistogram2D(std::string interval, std::string input_set_label, std::vector<double> z,
                     std::vector<std::string> in)
        : interval_label(std::move(interval)),
          input_set(std::move(input_set_label)),
          zetas(std::move(z)),
          inputs(std::move(in)),
          sum_abs(zetas.size() * inputs.size(), 0.0),
          counts(zetas.size() * inputs.size(), 0) {}

    std::size_t rows() const noexcept { return zetas.size(); }
    std::size_t cols() const noexcept { return inputs.size(); }

    void add(std::size_t row, std::size_t col, double abs_err) {
        sum_abs.at(row * cols() + col) += abs_err;
        ++counts.at(row * cols() + col);
    }
    std::size_t count(std::size_t row, std::size_t col) const { return counts.at(row * cols() + col); }
    /// NaN for an empty cell.
    double mean(std::size_t row, std::size_t col) const {
        const auto n = count(row, col);
        return n == 0 ? std::nan("") : sum_abs[row * cols() + col] / static_cast<double>(n);
    }
    std::size_t total() const {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
    /// Count-weighted mean of the cell means, i.e. the MAD of every window in the histogram.
    double weighted_mean() const {
        double s = 0.0;
        for (std::size_t r = 0; r < rows(); ++r)
            for (std::size_t c = 0; c < cols(); ++c)
                if (count(r, c) > 0) s += mean(r, c) * static_cast<double>(count(r, c));
        return s / static_cast<double>(total());
    }

    /// Header row of input labels, first column zeta, cells "mean_abs_err:count".
    std::string to_csv() const {
        std::ostringstream os;
        os << "zeta";
        for (const auto& in : inputs) os << ',' << in;
        os << '\n';
        char buf[64];
        for (std::size_t r = 0; r < rows(); ++r) {
            os << sim::detail::fmt_num(zetas[r]);
            for (std::size_t c = 0; c < cols(); ++c) {
                if (count(r, c) == 0) {
                    os << ",nan:0";
                } else {
                    std::snprintf(buf, sizeof buf, ",%.6f:%zu", mean(r, c), count(r, c));
                    os << buf;
                }
            }
            os << '\n';
        }
        return os.str();
    }
};

/// One evaluated window.
struct WindowPrediction {
    dataset::WindowRef window;
    int fold = 0;
    double zeta = 0.0;
    double predicted = 0.0;

    double abs_error() const { return std::abs(predicted - zeta); }
};

namespace detail {

inline std::vector<std::size_t> matching_inputs(const dataset::Dataset& ds, const InputFilter& filter) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.config.inputs.size(); ++i)
        if (filter.matches(ds.config.inputs[i])) out.push_back(i);
    return out;
}

inline bool selected(const dataset::Dataset& ds, const dataset::WindowRef& w, const InputFilter& filter,
                     const Interval& interval) {
    const auto input_index = w.trajectory / ds.config.zetas.size();
    return filter.matches(ds.config.inputs.at(input_index)) && interval.contains(w.start, w.length, ds.config.fs);
}

}  // namespace detail

/// Aggregates recorded predictions of windows starting in `interval` whose input passes `filter`.
inline ErrorHistogram2D histogram_from_predictions(const dataset::Dataset& ds,
                                                   std::span<const WindowPrediction> predictions,
                                                   const Interval& interval, const InputFilter& filter = {}) {
    const auto cols = detail::matching_inputs(ds, filter);
    std::vector<std::string> labels;
    for (auto c : cols) labels.push_back(sim::to_string(ds.config.inputs[c]));
    ErrorHistogram2D h(interval.label(), filter.label(), ds.config.zetas, labels);
    const auto nz = ds.config.zetas.size();
    for (const auto& p : predictions) {
        if (!detail::selected(ds, p.window, filter, interval)) continue;
        const auto input_index = p.window.trajectory / nz;
        const auto col = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), input_index) - cols.begin());
        h.add(p.window.trajectory % nz, col, p.abs_error());
    }
    if (h.total() == 0)
        throw InvalidArgument("no evaluated window starts in " + interval.label() + " s for inputs '" +
                              filter.label() + "'");
    return h;
}

/// MAD over recorded predictions restricted to an input filter and interval.
inline double interval_mad(const dataset::Dataset& ds, std::span<const WindowPrediction> predictions,
                           const InputFilter& filter, const Interval& interval) {
    std::vector<double> p, t;
    for (const auto& w : predictions) {
        if (!detail::selected(ds, w.window, filter, interval)) continue;
        p.push_back(w.predicted);
        t.push_back(w.zeta);
    }
    if (p.empty())
        throw InvalidArgument("no evaluated window starts in " + interval.label() + " s for inputs '" +
                              filter.label() + "'");
    return mad(p, t);
}

// ---------------------------------------------------------------------------
// Feature extraction over datasets

/// Features of dataset windows, computed in parallel chunks and stored as float32.
inline nn::SampleSet featurize_windows(const dataset::Dataset& ds, std::span<const dataset::WindowRef> windows,
                                       const features::Featurizer& featurizer, std::size_t threads = 1) {
    nn::SampleSet set(features::kFeatureRows, featurizer.plan().frames());
    set.reserve(windows.size());
    constexpr std::size_t chunk = 2048;
    std::vector<features::FeatureTensor> buf;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const auto n = std::min(chunk, windows.size() - start);
        buf.assign(n, {});
        parallel_for(n, threads, [&](std::size_t i) {
            const auto& w = windows[start + i];
            const auto& tr = ds.trajectories.at(w.trajectory);
            if (static_cast<std::size_t>(w.start) + w.length > tr.size())
                throw InvalidArgument("window runs past the end of its trajectory");
            buf[i] = featurizer(std::span<const double>(tr.u).subspan(w.start, w.length),
                                std::span<const double>(tr.y).subspan(w.start, w.length));
        });
        for (std::size_t i = 0; i < n; ++i) set.add(buf[i], ds.trajectories[windows[start + i].trajectory].zeta);
    }
    return set;
}

/// Copies the selected samples, standardizing each one when `norm` is non-empty.
inline nn::SampleSet subset(const nn::SampleSet& all, std::span<const std::size_t> idx,
                            const features::Normalizer& norm) {
    nn::SampleSet out(all.rows(), all.steps());
    out.reserve(idx.size());
    for (auto i : idx) {
        features::FeatureTensor f = all.sample(i).cast<double>();
        norm.apply(f);
        out.add(f, all.targets()[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// A trained model ready for inference

class Predictor {
public:
    nn::ModelWeights<float> weights;
    features::Normalizer normalizer;
    features::StftConfig stft;
    std::size_t window_len = 3001;
    std::string model_id = "unnamed";
    nlohmann::json metadata = nlohmann::json::object();

    /// Featurizes and standardizes one window pair.
    features::FeatureTensor features(std::span<const double> u_win, std::span<const double> y_win) const {
        if (u_win.size() != window_len || y_win.size() != window_len)
            throw InvalidArgument("window of " + std::to_string(u_win.size()) + " samples, model expects " +
                                  std::to_string(window_len));
        auto f = featurizer()(u_win, y_win);
        normalizer.apply(f);
        return f;
    }

    double predict(std::span<const double> u_win, std::span<const double> y_win) const {
        const std::vector<features::FeatureTensor> one{features(u_win, y_win)};
        return nn::predict(weights, one).front();
    }

    /// Eval-mode predictions for dataset windows, in input order.
    std::vector<double> predict_windows(const dataset::Dataset& ds, std::span<const dataset::WindowRef> windows,
                                        std::size_t threads = 1) const {
        auto set = featurize_windows(ds, windows, featurizer(), threads);
        if (!normalizer.empty()) {
            std::vector<std::size_t> idx(set.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            set = subset(set, idx, normalizer);
        }
        return nn::predict_set(weights, set);
    }

    nlohmann::json header() const {
        auto h = metadata;
        h["model_id"] = model_id;
        h["stft"] = stft;
        h["window_len"] = window_len;
        if (!normalizer.empty()) h["normalizer"] = normalizer;
        return h;
    }

    void save(const std::filesystem::path& path) const { nn::save_weights(path, weights, header()); }

    static Predictor load(const std::filesystem::path& path) {
        auto loaded = nn::load_weights<float>(path);
        Predictor p;
        p.weights = std::move(loaded.weights);
        const auto& h = loaded.header;
        try {
            p.model_id = h.value("model_id", path.stem().string());
            if (h.contains("stft")) p.stft = h.at("stft").get<features::StftConfig>();
            p.window_len = h.value("window_len", std::size_t{3001});
            if (h.contains("normalizer")) p.normalizer = h.at("normalizer").get<features::Normalizer>();
        } catch (const nlohmann::json::exception& e) {
            throw CorruptContainer("malformed model header in '" + path.string() + "': " + e.what());
        }
        if (!p.normalizer.empty() && p.normalizer.mean.size() != static_cast<Eigen::Index>(p.weights.spec.input_size))
            throw SpecMismatch("normalizer size does not match the model input size");
        p.metadata = h;
        return p;
    }

private:
    const features::Featurizer& featurizer() const {
        if (!featurizer_) featurizer_ = std::make_shared<const features::Featurizer>(window_len, stft);
        return *featurizer_;
    }
    mutable std::shared_ptr<const features::Featurizer> featurizer_;
};

/// Evaluates a model on every window of `ds` (at `stride`) in the interval and
/// input filter, and aggregates the absolute errors per (zeta, input).
inline ErrorHistogram2D error_histogram(const Predictor& model, const dataset::Dataset& ds, const Interval& interval,
                                        const InputFilter& filter = {}, std::size_t stride = 50,
                                        std::size_t threads = 1) {
    if (interval.end_s > ds.config.duration_s + 1e-9)
        throw InvalidArgument("interval " + interval.label() + " s exceeds the trajectory duration");
    std::vector<dataset::WindowRef> windows;
    for (const auto& w : dataset::enumerate_windows(ds, stride))
        if (detail::selected(ds, w, filter, interval)) windows.push_back(w);
    if (windows.empty())
        throw InvalidArgument("no window starts in " + interval.label() + " s for inputs '" + filter.label() + "'");
    const auto pred = model.predict_windows(ds, windows, threads);
    std::vector<WindowPrediction> recs;
    for (std::size_t i = 0; i < windows.size(); ++i)
        recs.push_back({windows[i], 0, ds.trajectories[windows[i].trajectory].zeta, pred[i]});
    return histogram_from_predictions(ds, recs, interval, filter);
}

/// MAD of a model on the windows of `ds` in the interval and input filter.
inline double interval_eval(const Predictor& model, const dataset::Dataset& ds, const InputFilter& filter,
                            const Interval& interval, std::size_t stride = 50, std::size_t threads = 1) {
    return error_histogram(model, ds, interval, filter, stride, threads).weighted_mean();
}

/// Step magnitudes of the generalization study; +-2 and +-5 never appear in training.
inline std::vector<double> generalization_step_magnitudes() { return {-10, -5, -2, -1, 1, 2, 5, 10}; }
inline bool unseen_at_training(double magnitude) {
    const double m = std::abs(magnitude);
    return m == 2.0 || m == 5.0;
}

struct StepGeneralization {
    std::vector<double> magnitudes;
    std::vector<bool> unseen;
    std::vector<ErrorHistogram2D> histograms;  ///< one per interval, columns = step magnitudes
};

/// Generates fresh step-input trajectories for every magnitude and zeta and
/// evaluates per-interval histograms. Nothing here touches a training manifest.
inline StepGeneralization step_generalization_eval(const Predictor& model, double noise_sigma,
                                                   std::uint64_t master_seed, std::size_t stride = 50,
                                                   const std::vector<Interval>& intervals = interval_presets(),
                                                   std::size_t threads = 1) {
    StepGeneralization out;
    out.magnitudes = generalization_step_magnitudes();
    dataset::DatasetConfig cfg;
    cfg.noise_sigma = noise_sigma;
    cfg.master_seed = derive_seed(master_seed, "generalization");
    cfg.inputs.clear();
    for (double m : out.magnitudes) {
        cfg.inputs.push_back(sim::Step{m});
        out.unseen.push_back(unseen_at_training(m));
    }
    const auto ds = dataset::generate_dataset(cfg);
    for (const auto& iv : intervals) {
        auto h = error_histogram(model, ds, iv, {}, stride, threads);
        h.input_set = "steps";
        out.histograms.push_back(std::move(h));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment presets

enum class DatasetKind { Base, Extended };

inline std::string to_string(DatasetKind k) { return k == DatasetKind::Base ? "base" : "extended"; }
inline std::string to_string(dataset::SplitKind k) { return k == dataset::SplitKind::SepZeta ? "sep_zeta" : "mix_zeta"; }

struct ExperimentSpec {
    std::string id;
    DatasetKind dataset = DatasetKind::Base;
    dataset::SplitKind split = dataset::SplitKind::MixZeta;
    nn::CellKind cell = nn::CellKind::BiLSTM;
    nn::TrainConfig train;
    InputFilter eval_inputs;                ///< test MAD restricted to these inputs
    std::optional<Interval> eval_interval;  ///< ... and to windows starting in this interval
    std::string model_id;                   ///< experiment whose models are evaluated (itself unless evaluation-only)

    bool evaluation_only() const { return model_id != id; }

    nn::ModelSpec model_spec() const {
        nn::ModelSpec s;
        s.cell = cell;
        return s;
    }
};

inline std::vector<std::string> experiment_ids() {
    return {"Exp1", "Exp2", "Exp3", "Exp4", "Exp5", "Exp6a", "Exp6b", "Exp7"};
}

/// Accepts "Exp3", "exp3" or "3"; "Exp6" means Exp6a.
inline ExperimentSpec experiment_preset(std::string name) {
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (name.rfind("exp", 0) == 0) name = name.substr(3);
    if (!name.empty() && name.front() == '.') name = name.substr(1);
    if (name == "6") name = "6a";

    ExperimentSpec s;
    s.id = "Exp" + name;
    s.model_id = s.id;
    s.train.batch_size = 1;  // per-sample updates; larger batches underfit at lr 5e-4 on desk-scale data
    if (name == "1" || name == "2" || name == "3") {
        s.split = dataset::SplitKind::SepZeta;
        s.cell = name == "1" ? nn::CellKind::GRU : name == "2" ? nn::CellKind::LSTM : nn::CellKind::BiLSTM;
    } else if (name == "4" || name == "5" || name == "6a") {
        s.cell = name == "4" ? nn::CellKind::GRU : name == "5" ? nn::CellKind::LSTM : nn::CellKind::BiLSTM;
    } else if (name == "6b") {
        s.model_id = "Exp6a";
        s.eval_inputs.terms = {"step"};
        s.eval_interval = Interval{3, 6};
    } else if (name == "7") {
        s.dataset = DatasetKind::Extended;
        s.train.epochs = 150;
        s.train.lr_drop_epochs = {50, 100};
    } else {
        std::string known;
        for (const auto& id : experiment_ids()) known += " " + id;
        throw InvalidArgument("unknown experiment '" + name + "' (known:" + known + ")");
    }
    return s;
}

inline void to_json(nlohmann::json& j, const ExperimentSpec& s) {
    j = {{"id", s.id},
         {"dataset", to_string(s.dataset)},
         {"split", to_string(s.split)},
         {"cell", nn::to_string(s.cell)},
         {"train", s.train},
         {"eval_inputs", s.eval_inputs.terms},
         {"model_id", s.model_id}};
    if (s.eval_interval) j["eval_interval"] = s.eval_interval->label();
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentOptions {
    std::uint64_t master_seed = 0;
    std::size_t stride = 50;          ///< 1 = every window (full scale)
    double noise_sigma = 0.01;
    features::NormalizeMode normalize = features::NormalizeMode::PerBlock;  ///< fit on each fold's training windows
    features::StftConfig stft;
    std::size_t threads = 1;
    std::filesystem::path output_dir;  ///< report goes to output_dir/report; empty: nothing is written
    std::filesystem::path model_dir;   ///< fold models; defaults to output_dir/models
    bool deterministic = false;        ///< omit wall-clock fields from written reports
    bool reuse_models = true;          ///< load persisted fold models whose config hash matches
    std::vector<Interval> intervals = interval_presets();
    std::function<void(int fold, const nn::EpochStats&)> on_epoch;
    std::function<void(const std::string&)> log;
};

struct FoldResult {
    int fold = 0;
    double train_mad = std::nan("");
    double val_mad = std::nan("");
    double test_mad = 0.0;
    std::size_t train_windows = 0;
    std::size_t validation_windows = 0;
    std::size_t test_windows = 0;
    bool loaded = false;  ///< model reused from disk instead of trained
    std::vector<nn::EpochStats> history;
};

struct EvalReport {
    std::string id;
    std::string config_hash;
    ExperimentSpec spec;
    std::vector<FoldResult> folds;
    double train_mad = std::nan("");  ///< fold average; NaN for evaluation-only experiments
    double test_mad = 0.0;            ///< fold average
    std::vector<WindowPrediction> test_predictions;  ///< pooled over folds
    std::vector<ErrorHistogram2D> histograms;        ///< pooled test predictions per interval
    std::vector<std::string> files;                  ///< written artifacts, relative to the output dir
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Everything that changes the trained models of `model_id`.
inline nlohmann::json training_fingerprint(const ExperimentSpec& spec, const ExperimentOptions& opt) {
    return {{"model_id", spec.model_id},
            {"dataset", to_string(spec.dataset)},
            {"split", to_string(spec.split)},
            {"model", spec.model_spec()},
            {"train", spec.train},
            {"master_seed", opt.master_seed},
            {"stride", opt.stride},
            {"noise_sigma", opt.noise_sigma},
            {"normalize", features::to_string(opt.normalize)},
            {"stft", opt.stft}};
}

inline std::string config_hash(const nlohmann::json& j) { return hex64(derive_seed(0, j.dump())); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline nlohmann::json mad_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

/// The dataset an experiment trains on, from the master seed.
inline dataset::Dataset experiment_dataset(DatasetKind kind, const ExperimentOptions& opt) {
    return dataset::generate_dataset(kind == DatasetKind::Extended, opt.noise_sigma,
                                     derive_seed(opt.master_seed, "dataset"));
}

/// Two-fold run: per fold split, (optionally) standardize, train, evaluate
/// train and test MAD; fold MADs are averaged and test predictions pooled.
/// Evaluation-only specs (Exp6b) evaluate the models of `spec.model_id` under
/// their own input / interval filter.
inline EvalReport run_experiment(const ExperimentSpec& spec, const dataset::Dataset& ds,
                                 const ExperimentOptions& opt = {}) {
    auto log = [&](const std::string& m) {
        if (opt.log) opt.log(m);
    };
    if (opt.stride == 0) throw InvalidArgument("stride must be at least 1");
    const auto fingerprint = detail::training_fingerprint(spec, opt);
    EvalReport rep;
    rep.id = spec.id;
    rep.spec = spec;
    {
        auto full = fingerprint;
        full["id"] = spec.id;
        full["eval"] = spec;
        rep.config_hash = detail::config_hash(full);
    }
    const auto model_hash = detail::config_hash(fingerprint);

    const auto windows = dataset::enumerate_windows(ds, opt.stride);
    log(spec.id + ": " + std::to_string(ds.trajectories.size()) + " trajectories, " +
        std::to_string(windows.size()) + " windows (stride " + std::to_string(opt.stride) + ")");
    const features::Featurizer featurizer(ds.config.window_len, opt.stft);
    const auto all = featurize_windows(ds, windows, featurizer, opt.threads);
    auto index_of = [&](const dataset::WindowRef& w) {
        return static_cast<std::size_t>(std::lower_bound(windows.begin(), windows.end(), w) - windows.begin());
    };
    auto indices = [&](const std::vector<dataset::WindowRef>& ws) {
        std::vector<std::size_t> idx;
        idx.reserve(ws.size());
        for (const auto& w : ws) idx.push_back(index_of(w));
        return idx;
    };

    const bool persist = !opt.output_dir.empty() || !opt.model_dir.empty();
    const auto model_dir = opt.model_dir.empty() ? opt.output_dir / "models" : opt.model_dir;
    const auto split_seed = derive_seed(opt.master_seed, "split");
    const auto model_spec = spec.model_spec();
    for (int fold = 1; fold <= 2; ++fold) {
        const auto split = dataset::make_split(spec.split, ds, windows, fold, split_seed);
        const auto train_idx = indices(split.train);
        const auto val_idx = indices(split.validation);
        const auto test_idx = indices(split.test);
        FoldResult fr;
        fr.fold = fold;
        fr.train_windows = train_idx.size();
        fr.validation_windows = val_idx.size();
        fr.test_windows = test_idx.size();

        const auto model_path = model_dir / (spec.model_id + "_fold" + std::to_string(fold) + ".dsiw");
        Predictor model;
        bool have_model = false;
        if (persist && opt.reuse_models && std::filesystem::exists(model_path)) {
            try {
                auto p = Predictor::load(model_path);
                if (p.metadata.value("model_hash", std::string()) == model_hash && p.weights.spec == model_spec) {
                    model = std::move(p);
                    have_model = true;
                    fr.loaded = true;
                    log(spec.id + " fold " + std::to_string(fold) + ": reusing " + model_path.string());
                }
            } catch (const Error& e) {
                log(spec.id + " fold " + std::to_string(fold) + ": ignoring unreadable " + model_path.string() +
                    " (" + e.what() + ")");
            }
        }

        if (!have_model) {
            features::Normalizer norm;
            if (opt.normalize != features::NormalizeMode::None) {
                std::vector<Eigen::Map<const Eigen::MatrixXf>> views;
                views.reserve(train_idx.size());
                for (auto i : train_idx) views.push_back(all.sample(i));
                norm = features::Normalizer::fit(views, opt.normalize);
            }
            const auto train_set = subset(all, train_idx, norm);
            const auto val_set = subset(all, val_idx, norm);
            auto cfg = spec.train;
            cfg.seed = derive_seed(opt.master_seed, "train/" + spec.model_id + "/fold" + std::to_string(fold));
            log(spec.id + " fold " + std::to_string(fold) + ": training " + nn::to_string(spec.cell) + " on " +
                std::to_string(train_set.size()) + " windows, " + std::to_string(cfg.epochs) + " epochs, batch " +
                std::to_string(cfg.batch_size));
            auto result = nn::train<float>(model_spec, cfg, train_set, &val_set, [&](const nn::EpochStats& st) {
                if (opt.on_epoch) opt.on_epoch(fold, st);
            });
            fr.history = std::move(result.history);
            model.weights = std::move(result.weights);
            model.normalizer = std::move(norm);
            model.stft = opt.stft;
            model.window_len = ds.config.window_len;
            model.model_id = spec.model_id + "_fold" + std::to_string(fold);
            model.metadata = {{"model_hash", model_hash}, {"fingerprint", fingerprint}, {"fold", fold},
                              {"train_config", cfg}};
            if (persist) {
                std::filesystem::create_directories(model_dir);
                model.save(model_path);
            }
        }
        if (persist) rep.files.push_back(model_path.generic_string());

        const auto test_set = subset(all, test_idx, model.normalizer);
        const auto test_pred = nn::predict_set(model.weights, test_set);
        std::vector<WindowPrediction> fold_preds;
        for (std::size_t i = 0; i < test_idx.size(); ++i)
            fold_preds.push_back({split.test[i], fold, test_set.targets()[i], test_pred[i]});
        if (spec.evaluation_only() || spec.eval_interval || !spec.eval_inputs.terms.empty()) {
            const auto iv = spec.eval_interval.value_or(Interval{0.0, ds.config.duration_s});
            fr.test_mad = interval_mad(ds, fold_preds, spec.eval_inputs, iv);
        } else {
            fr.test_mad = mad(test_pred, test_set.targets());
        }
        if (!spec.evaluation_only()) {
            const auto train_set = subset(all, train_idx, model.normalizer);
            fr.train_mad = mad(nn::predict_set(model.weights, train_set), train_set.targets());
            if (!val_idx.empty()) {
                const auto val_set = subset(all, val_idx, model.normalizer);
                fr.val_mad = mad(nn::predict_set(model.weights, val_set), val_set.targets());
            }
        }
        log(spec.id + " fold " + std::to_string(fold) + ": train MAD " + std::to_string(fr.train_mad) +
            ", test MAD " + std::to_string(fr.test_mad));
        rep.test_predictions.insert(rep.test_predictions.end(), fold_preds.begin(), fold_preds.end());
        rep.folds.push_back(std::move(fr));
    }

    rep.test_mad = 0.5 * (rep.folds[0].test_mad + rep.folds[1].test_mad);
    if (!spec.evaluation_only()) rep.train_mad = 0.5 * (rep.folds[0].train_mad + rep.folds[1].train_mad);
    for (const auto& iv : opt.intervals) {
        if (iv.end_s > ds.config.duration_s + 1e-9) continue;
        rep.histograms.push_back(histogram_from_predictions(ds, rep.test_predictions, iv, spec.eval_inputs));
    }

    if (!opt.output_dir.empty()) {
        const auto report_dir = opt.output_dir / "report";
        std::filesystem::create_directories(report_dir);
        for (const auto& h : rep.histograms) {
            const auto name = "hist_" + h.interval_label + "_" + h.input_set + ".csv";
            detail::write_text(report_dir / name, h.to_csv());
            rep.files.push_back("report/" + name);
        }
        std::ostringstream csv;
        csv << "fold,trajectory,input,zeta,start_s,predicted,abs_err\n";
        char buf[128];
        for (const auto& p : rep.test_predictions) {
            const auto& in = ds.config.inputs[p.window.trajectory / ds.config.zetas.size()];
            std::snprintf(buf, sizeof buf, "%.3f,%.9g,%.9g\n", p.window.start / ds.config.fs, p.predicted,
                          p.abs_error());
            csv << p.fold << ',' << p.window.trajectory << ',' << sim::to_string(in) << ','
                << sim::detail::fmt_num(p.zeta) << ',' << buf;
        }
        const std::string pred_name = "predictions.csv";
        detail::write_text(report_dir / pred_name, csv.str());
        rep.files.push_back("report/" + pred_name);

        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : rep.folds) {
            nlohmann::json hist = nlohmann::json::array();
            for (const auto& st : f.history)
                hist.push_back({{"epoch", st.epoch}, {"lr", st.lr}, {"train_loss", st.train_loss},
                                {"val_loss", detail::mad_json(st.val_loss)}});
            folds.push_back({{"fold", f.fold},
                             {"train_mad", detail::mad_json(f.train_mad)},
                             {"val_mad", detail::mad_json(f.val_mad)},
                             {"test_mad", f.test_mad},
                             {"train_windows", f.train_windows},
                             {"validation_windows", f.validation_windows},
                             {"test_windows", f.test_windows},
                             {"model_reused", f.loaded},
                             {"history", hist}});
        }
        nlohmann::json hists = nlohmann::json::array();
        for (const auto& h : rep.histograms)
            hists.push_back({{"interval", h.interval_label}, {"inputs", h.input_set}, {"mad", h.weighted_mean()},
                             {"windows", h.total()}});
        nlohmann::json summary = {{"experiment", spec.id},
                                  {"config_hash", rep.config_hash},
                                  {"spec", spec},
                                  {"options", fingerprint},
                                  {"folds", folds},
                                  {"train_mad", detail::mad_json(rep.train_mad)},
                                  {"test_mad", rep.test_mad},
                                  {"histograms", hists},
                                  {"files", rep.files}};
        if (!opt.deterministic) {
            const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            char ts[32];
            std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
            summary["generated_at"] = ts;
        }
        detail::write_text(report_dir / "summary.json", summary.dump(2) + "\n");
    }
    return rep;
}

/// Generates the experiment's dataset from the master seed and runs it.
inline EvalReport run_experiment(const ExperimentSpec& spec, const ExperimentOptions& opt = {}) {
    return run_experiment(spec, experiment_dataset(spec.dataset, opt), opt);
}

}  // namespace dampid::experiments
