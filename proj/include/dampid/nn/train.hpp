#pragma once

// Mini-batch SGD with momentum, step learning-rate schedule, MSE loss.

#include <dampid/common.hpp>
#include <dampid/nn/model.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dampid::nn {

struct TrainConfig {
    double momentum = 0.9;
    double initial_lr = 5e-4;
    int epochs = 45;
    int lr_drop_every = 15;  ///< 0 disables periodic drops
    double lr_drop_factor = 0.1;
    std::vector<int> lr_drop_epochs;  ///< explicit drops; overrides lr_drop_every when non-empty
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    double gradient_threshold = 0.0;  ///< global L2 clipping; 0 disables

    void validate() const {
        if (!(initial_lr > 0.0)) throw InvalidArgument("learning rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
        if (batch_size == 0) throw InvalidArgument("batch size must be at least 1");
        if (epochs < 0) throw InvalidArgument("epoch count must be non-negative");
        if (lr_drop_every < 0) throw InvalidArgument("lr_drop_every must be non-negative");
        if (!(gradient_threshold >= 0.0)) throw InvalidArgument("gradient threshold must be non-negative");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"optimizer", "sgdm"},
         {"momentum", c.momentum},
         {"initial_lr", c.initial_lr},
         {"epochs", c.epochs},
         {"lr_drop_every", c.lr_drop_every},
         {"lr_drop_factor", c.lr_drop_factor},
         {"lr_drop_epochs", c.lr_drop_epochs},
         {"batch_size", c.batch_size},
         {"seed", c.seed},
         {"gradient_threshold", c.gradient_threshold},
         {"loss", "mse"}};
}

/// Reads any subset of the fields; missing keys keep their current value.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.momentum = j.value("momentum", c.momentum);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.epochs = j.value("epochs", c.epochs);
    c.lr_drop_every = j.value("lr_drop_every", c.lr_drop_every);
    c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
    c.lr_drop_epochs = j.value("lr_drop_epochs", c.lr_drop_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.gradient_threshold = j.value("gradient_threshold", c.gradient_threshold);
}

/// Learning rate for a 1-based epoch: initial_lr * factor^(number of drops
/// completed before this epoch). A drop at epoch d affects epochs d+1 onward.
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 1) throw InvalidArgument("epochs are numbered from 1");
    int drops = 0;
    if (!cfg.lr_drop_epochs.empty()) {
        drops = static_cast<int>(std::count_if(cfg.lr_drop_epochs.begin(), cfg.lr_drop_epochs.end(),
                                               [&](int d) { return epoch > d; }));
    } else if (cfg.lr_drop_every > 0) {
        drops = (epoch - 1) / cfg.lr_drop_every;
    }
    return cfg.initial_lr * std::pow(cfg.lr_drop_factor, drops);
}

/// v' = momentum * v + g;  w' = w - lr * v'.
template <typename T>
void sgd_momentum_step(ModelWeights<T>& weights, const ModelWeights<T>& grads, ModelWeights<T>& velocity, double lr,
                       double momentum) {
    const T mu = static_cast<T>(momentum);
    const T eta = static_cast<T>(lr);
    zip_params(
        [&](const std::string& name, auto& w, const auto& g, auto& v) {
            if (g.rows() != w.rows() || g.cols() != w.cols() || v.rows() != w.rows() || v.cols() != w.cols())
                throw InvalidArgument("shape mismatch in optimizer step for " + name);
            v = mu * v + g;
            w -= eta * v;
        },
        weights, grads, velocity);
}

template <typename T>
double global_norm(const ModelWeights<T>& g) {
    double s = 0.0;
    g.visit([&](const std::string&, const auto& m) { s += m.template cast<double>().squaredNorm(); });
    return std::sqrt(s);
}

/// Feature sequences (rows x steps each) with scalar targets, stored as float32.
class SampleSet {
public:
    SampleSet() = default;
    SampleSet(std::size_t rows, std::size_t steps) : rows_(rows), steps_(steps) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return targets_.size(); }
    bool empty() const noexcept { return targets_.empty(); }
    const std::vector<double>& targets() const noexcept { return targets_; }

    void reserve(std::size_t n) {
        data_.reserve(n * rows_ * steps_);
        targets_.reserve(n);
    }

    template <typename Derived>
    void add(const Eigen::MatrixBase<Derived>& features, double target) {
        if (rows_ == 0 && steps_ == 0) {
            rows_ = static_cast<std::size_t>(features.rows());
            steps_ = static_cast<std::size_t>(features.cols());
        }
        if (static_cast<std::size_t>(features.rows()) != rows_ || static_cast<std::size_t>(features.cols()) != steps_)
            throw InvalidArgument("sample shape " + std::to_string(features.rows()) + "x" +
                                  std::to_string(features.cols()) + " does not match set shape " +
                                  std::to_string(rows_) + "x" + std::to_string(steps_));
        const auto off = data_.size();
        data_.resize(off + rows_ * steps_);
        Eigen::Map<Eigen::MatrixXf>(data_.data() + off, static_cast<Eigen::Index>(rows_),
                                    static_cast<Eigen::Index>(steps_)) = features.template cast<float>();
        targets_.push_back(target);
    }

    Eigen::Map<const Eigen::MatrixXf> sample(std::size_t i) const {
        return {data_.data() + i * rows_ * steps_, static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(steps_)};
    }

    /// I x (steps * B) batch of the given sample indices.
    template <typename T>
    Mat<T> pack(std::span<const std::size_t> idx) const {
        const auto B = static_cast<Eigen::Index>(idx.size());
        Mat<T> x(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(steps_) * B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto s = sample(idx[static_cast<std::size_t>(b)]);
            for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(steps_); ++t)
                x.col(t * B + b) = s.col(t).template cast<T>();
        }
        return x;
    }

    template <typename T>
    Mat<T> pack_targets(std::span<const std::size_t> idx) const {
        Mat<T> y(1, static_cast<Eigen::Index>(idx.size()));
        for (std::size_t b = 0; b < idx.size(); ++b) y(0, static_cast<Eigen::Index>(b)) = static_cast<T>(targets_[idx[b]]);
        return y;
    }

    const std::vector<float>& raw() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t steps_ = 0;
    std::vector<float> data_;
    std::vector<double> targets_;
};

/// Eval-mode predictions for every sample of a set, in batches.
template <typename T>
std::vector<double> predict_set(const ModelWeights<T>& w, const SampleSet& set, std::size_t batch_size = 256) {
    std::vector<double> out;
    out.reserve(set.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        const auto end = std::min(set.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto cache = forward<T>(w, set.pack<T>(idx), static_cast<Eigen::Index>(set.steps()), ForwardMode::Eval);
        for (Eigen::Index b = 0; b < cache.batch; ++b) out.push_back(static_cast<double>(cache.out(0, b)));
    }
    return out;
}

class TrainingDiverged : public Error {
public:
    TrainingDiverged(int epoch, std::size_t iteration, double loss)
        : Error("training diverged at epoch " + std::to_string(epoch) + ", iteration " + std::to_string(iteration) +
                ": loss = " + std::to_string(loss) + " (try a smaller learning rate or a gradient threshold)"),
          epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  ///< mean mini-batch MSE with dropout active
    double val_loss = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct TrainResult {
    ModelWeights<T> weights;
    std::vector<EpochStats> history;
};

/// Trains from `derive_seed(cfg.seed, "init")` weights. Shuffling, dropout and
/// initialization draw from separate seeded streams, so the result is a pure
/// function of (spec, cfg, data).
template <typename T = float>
TrainResult<T> train(const ModelSpec& spec, const TrainConfig& cfg, const SampleSet& train_set,
                     const SampleSet* val_set = nullptr,
                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
    cfg.validate();
    spec.validate();
    if (train_set.empty()) throw InvalidArgument("training set is empty");
    if (train_set.rows() != spec.input_size)
        throw InvalidArgument("training features have " + std::to_string(train_set.rows()) +
                              " rows, model expects " + std::to_string(spec.input_size));
    TrainResult<T> result{init_weights<T>(spec, derive_seed(cfg.seed, "init")), {}};
    auto velocity = ModelWeights<T>::zeros(spec);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::mt19937_64 dropout_rng(derive_seed(cfg.seed, "dropout"));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto steps = static_cast<Eigen::Index>(train_set.steps());
    std::size_t iteration = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto end = std::min(order.size(), start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const auto targets = train_set.pack_targets<T>(idx);
            const auto cache =
                forward<T>(result.weights, train_set.pack<T>(idx), steps, ForwardMode::Train, &dropout_rng);
            const double loss = mse_loss<T>(cache.out, targets);
            ++iteration;
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch, iteration, loss);
            loss_sum += loss * static_cast<double>(idx.size());
            auto grads = backward<T>(result.weights, cache, targets);
            if (cfg.gradient_threshold > 0.0) {
                const double norm = global_norm(grads);
                if (norm > cfg.gradient_threshold) {
                    const T s = static_cast<T>(cfg.gradient_threshold / norm);
                    grads.visit([&](const std::string&, auto& m) { m *= s; });
                }
            }
            sgd_momentum_step(result.weights, grads, velocity, lr, cfg.momentum);
        }
        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = loss_sum / static_cast<double>(order.size());
        if (val_set != nullptr && !val_set->empty()) {
            const auto pred = predict_set(result.weights, *val_set);
            double s = 0.0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const double e = pred[i] - val_set->targets()[i];
                s += e * e;
            }
            st.val_loss = s / static_cast<double>(pred.size());
            if (!std::isfinite(st.val_loss)) throw TrainingDiverged(epoch, iteration, st.val_loss);
        }
        result.history.push_back(st);
        if (on_epoch) on_epoch(st);
    }
    if (!result.weights.all_finite()) throw TrainingDiverged(cfg.epochs, iteration, std::nan(""));
    return result;
}

}  // namespace dampid::nn
