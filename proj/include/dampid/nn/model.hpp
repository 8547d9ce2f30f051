#pragma once

// Recurrent regression network:
//   features (I x T) -> GRU | LSTM | BiLSTM -> last-step state
//   -> fc1 -> ReLU -> dropout -> fc2 -> scalar
//
// Batches are column-major: a sequence batch is I x (T * B) with the columns of
// step t in block [t * B, (t + 1) * B).

#include <dampid/common.hpp>

#include <Eigen/Dense>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dampid::nn {

enum class CellKind { GRU, LSTM, BiLSTM };

inline std::string to_string(CellKind k) {
    switch (k) {
        case CellKind::GRU: return "gru";
        case CellKind::LSTM: return "lstm";
        case CellKind::BiLSTM: return "bilstm";
    }
    return "?";
}

inline CellKind parse_cell_kind(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "gru") return CellKind::GRU;
    if (s == "lstm") return CellKind::LSTM;
    if (s == "bilstm") return CellKind::BiLSTM;
    throw InvalidArgument("unknown cell kind '" + s + "' (expected gru, lstm or bilstm)");
}

/// Gate blocks per direction: GRU [update; reset; candidate], LSTM [input; forget; cell; output].
constexpr int gate_count(CellKind k) { return k == CellKind::GRU ? 3 : 4; }
constexpr int direction_count(CellKind k) { return k == CellKind::BiLSTM ? 2 : 1; }

struct ModelSpec {
    CellKind cell = CellKind::BiLSTM;
    std::size_t input_size = 168;
    std::size_t hidden_size = 256;  ///< per direction
    std::size_t fc1_size = 256;
    double dropout_rate = 0.5;
    std::size_t output_size = 1;

    std::size_t cell_output() const { return hidden_size * static_cast<std::size_t>(direction_count(cell)); }

    void validate() const {
        if (input_size == 0 || hidden_size == 0 || fc1_size == 0 || output_size == 0)
            throw InvalidArgument("all layer sizes must be at least 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout rate must be in [0, 1)");
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Weights of one recurrent direction. W: (G*H) x I, R: (G*H) x H, b: G*H.
template <typename T>
struct DirectionWeights {
    Mat<T> W;
    Mat<T> R;
    Vec<T> b;
};

/// Calls f(name, p0, p1, ...) on corresponding parameters of equally shaped
/// weight sets (weights, gradients, velocities, ...), in serialization order.
template <typename F, typename First, typename... Rest>
void zip_params(F&& f, First& first, Rest&... rest) {
    static constexpr const char* dir_names[] = {"rnn.fwd", "rnn.bwd"};
    if (((rest.dirs.size() != first.dirs.size()) || ...))
        throw InvalidArgument("weight sets differ in direction count");
    for (std::size_t d = 0; d < first.dirs.size(); ++d) {
        const std::string p = dir_names[d];
        f(p + ".W", first.dirs[d].W, rest.dirs[d].W...);
        f(p + ".R", first.dirs[d].R, rest.dirs[d].R...);
        f(p + ".b", first.dirs[d].b, rest.dirs[d].b...);
    }
    f(std::string("fc1.W"), first.fc1_W, rest.fc1_W...);
    f(std::string("fc1.b"), first.fc1_b, rest.fc1_b...);
    f(std::string("fc2.W"), first.fc2_W, rest.fc2_W...);
    f(std::string("fc2.b"), first.fc2_b, rest.fc2_b...);
}

template <typename T>
struct ModelWeights {
    ModelSpec spec;
    std::vector<DirectionWeights<T>> dirs;
    Mat<T> fc1_W;  ///< fc1 x cell_output
    Vec<T> fc1_b;
    Mat<T> fc2_W;  ///< output x fc1
    Vec<T> fc2_b;

    /// Zero-filled weights with the shapes implied by `spec`.
    static ModelWeights zeros(const ModelSpec& spec) {
        spec.validate();
        ModelWeights w;
        w.spec = spec;
        const auto gh = static_cast<Eigen::Index>(gate_count(spec.cell) * spec.hidden_size);
        const auto H = static_cast<Eigen::Index>(spec.hidden_size);
        const auto I = static_cast<Eigen::Index>(spec.input_size);
        for (int d = 0; d < direction_count(spec.cell); ++d)
            w.dirs.push_back({Mat<T>::Zero(gh, I), Mat<T>::Zero(gh, H), Vec<T>::Zero(gh)});
        w.fc1_W = Mat<T>::Zero(static_cast<Eigen::Index>(spec.fc1_size), static_cast<Eigen::Index>(spec.cell_output()));
        w.fc1_b = Vec<T>::Zero(static_cast<Eigen::Index>(spec.fc1_size));
        w.fc2_W = Mat<T>::Zero(static_cast<Eigen::Index>(spec.output_size), static_cast<Eigen::Index>(spec.fc1_size));
        w.fc2_b = Vec<T>::Zero(static_cast<Eigen::Index>(spec.output_size));
        return w;
    }

    /// Calls f(name, tensor) for every parameter in a fixed order.
    template <typename F>
    void visit(F&& f) {
        zip_params(f, *this);
    }
    template <typename F>
    void visit(F&& f) const {
        zip_params(f, *this);
    }

    template <typename U>
    ModelWeights<U> cast() const {
        ModelWeights<U> out;
        out.spec = spec;
        for (const auto& d : dirs) out.dirs.push_back({d.W.template cast<U>(), d.R.template cast<U>(), d.b.template cast<U>()});
        out.fc1_W = fc1_W.template cast<U>();
        out.fc1_b = fc1_b.template cast<U>();
        out.fc2_W = fc2_W.template cast<U>();
        out.fc2_b = fc2_b.template cast<U>();
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit([&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }

    bool all_finite() const {
        bool ok = true;
        visit([&](const std::string&, const auto& m) { ok = ok && m.allFinite(); });
        return ok;
    }
};

template <typename T>
bool operator==(const ModelWeights<T>& a, const ModelWeights<T>& b) {
    if (!(a.spec == b.spec) || a.dirs.size() != b.dirs.size()) return false;
    for (std::size_t d = 0; d < a.dirs.size(); ++d)
        if (a.dirs[d].W != b.dirs[d].W || a.dirs[d].R != b.dirs[d].R || a.dirs[d].b != b.dirs[d].b) return false;
    return a.fc1_W == b.fc1_W && a.fc1_b == b.fc1_b && a.fc2_W == b.fc2_W && a.fc2_b == b.fc2_b;
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Box-Muller on the generator's raw output, independent of the standard library's distributions.
inline double standard_normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void glorot_uniform(Mat<T>& m, std::mt19937_64& rng, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
}

/// Thin Q of the QR decomposition of a Gaussian matrix, columns sign-fixed by diag(R).
template <typename T>
void orthogonal(Mat<T>& m, std::mt19937_64& rng) {
    const bool tall = m.rows() >= m.cols();
    Eigen::MatrixXd g(tall ? m.rows() : m.cols(), tall ? m.cols() : m.rows());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = standard_normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    const Eigen::MatrixXd r = qr.matrixQR();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    if (tall)
        m = q.cast<T>();
    else
        m = q.transpose().cast<T>();
}

}  // namespace detail

/// Glorot-uniform input and dense weights, orthogonal recurrent weights, zero
/// biases except a unit LSTM forget-gate bias. Deterministic in `seed`.
template <typename T = float>
ModelWeights<T> init_weights(const ModelSpec& spec, std::uint64_t seed) {
    auto w = ModelWeights<T>::zeros(spec);
    std::mt19937_64 rng(seed);
    const auto H = static_cast<Eigen::Index>(spec.hidden_size);
    for (auto& d : w.dirs) {
        detail::glorot_uniform(d.W, rng, static_cast<double>(d.W.cols()), static_cast<double>(d.W.rows()));
        detail::orthogonal(d.R, rng);
        if (spec.cell != CellKind::GRU) d.b.segment(H, H).setOnes();
    }
    detail::glorot_uniform(w.fc1_W, rng, static_cast<double>(w.fc1_W.cols()), static_cast<double>(w.fc1_W.rows()));
    detail::glorot_uniform(w.fc2_W, rng, static_cast<double>(w.fc2_W.cols()), static_cast<double>(w.fc2_W.rows()));
    return w;
}

// ---------------------------------------------------------------------------
// Cell steps (batched: every column is an independent sample)

template <typename T, typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& a) {
    return (T(1) + (-a.array()).exp()).inverse();
}

template <typename T>
struct CellState {
    Mat<T> h;  ///< H x B
    Mat<T> c;  ///< H x B, LSTM only

    static CellState zeros(Eigen::Index hidden, Eigen::Index batch, bool with_cell) {
        return {Mat<T>::Zero(hidden, batch), with_cell ? Mat<T>::Zero(hidden, batch) : Mat<T>()};
    }
};

/// One GRU step from the pre-computed input projection xp = W x + b (3H x B).
///   z = s(xp_z + R_z h), r = s(xp_r + R_r h), n = tanh(xp_n + R_n (r . h)),
///   h' = (1 - z) . h + z . n
/// `gates` receives [z; r; n] and `rh` receives r . h.
template <typename T, typename XP>
void gru_step(const Mat<T>& R, const Eigen::MatrixBase<XP>& xp, const Mat<T>& h, Mat<T>& gates, Mat<T>& rh,
              Mat<T>& h_next) {
    const auto H = h.rows();
    gates.resize(3 * H, h.cols());
    Mat<T> zr = xp.topRows(2 * H);
    zr.noalias() += R.topRows(2 * H) * h;
    gates.topRows(2 * H) = sigmoid<T>(zr);
    rh = gates.middleRows(H, H).cwiseProduct(h);
    Mat<T> an = xp.bottomRows(H);
    an.noalias() += R.bottomRows(H) * rh;
    gates.bottomRows(H) = an.array().tanh();
    h_next = h + gates.topRows(H).cwiseProduct(gates.bottomRows(H) - h);
}

/// One LSTM step from xp = W x + b (4H x B).
///   i, f, o = s(.), g = tanh(.), c' = f . c + i . g, h' = o . tanh(c')
/// `gates` receives [i; f; g; o] and `tc` receives tanh(c').
template <typename T, typename XP>
void lstm_step(const Mat<T>& R, const Eigen::MatrixBase<XP>& xp, const Mat<T>& h, const Mat<T>& c, Mat<T>& gates,
               Mat<T>& c_next, Mat<T>& tc, Mat<T>& h_next) {
    const auto H = h.rows();
    Mat<T> a = xp;
    a.noalias() += R * h;
    gates.resize(4 * H, h.cols());
    gates.topRows(2 * H) = sigmoid<T>(a.topRows(2 * H));
    gates.middleRows(2 * H, H) = a.middleRows(2 * H, H).array().tanh();
    gates.bottomRows(H) = sigmoid<T>(a.bottomRows(H));
    c_next = gates.middleRows(H, H).cwiseProduct(c) + gates.topRows(H).cwiseProduct(gates.middleRows(2 * H, H));
    tc = c_next.array().tanh();
    h_next = gates.bottomRows(H).cwiseProduct(tc);
}

/// Advances one direction's state by one input step. For BiLSTM pass either direction's weights.
template <typename T>
CellState<T> cell_step(CellKind kind, const DirectionWeights<T>& w, const Mat<T>& x, const CellState<T>& state) {
    Mat<T> xp = w.W * x;
    xp.colwise() += w.b;
    CellState<T> next;
    Mat<T> gates;
    if (kind == CellKind::GRU) {
        Mat<T> rh;
        gru_step<T>(w.R, xp, state.h, gates, rh, next.h);
    } else {
        Mat<T> tc;
        lstm_step<T>(w.R, xp, state.h, state.c, gates, next.c, tc, next.h);
    }
    return next;
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class ForwardMode { Train, Eval };

/// Activations of one direction, indexed by time step t (not processing order).
template <typename T>
struct DirectionCache {
    bool reversed = false;
    Mat<T> gates;  ///< (G*H) x (T*B), post-activation
    Mat<T> h_prev;  ///< H x (T*B), state entering step t
    Mat<T> c_prev;  ///< LSTM
    Mat<T> c;       ///< LSTM
    Mat<T> tc;      ///< LSTM tanh(c)
    Mat<T> rh;      ///< GRU r . h_prev
    Mat<T> h_last;  ///< H x B, state after the final processed step
};

template <typename T>
struct ForwardCache {
    Eigen::Index steps = 0;
    Eigen::Index batch = 0;
    Mat<T> x;  ///< I x (T*B)
    std::vector<DirectionCache<T>> dirs;
    Mat<T> rep;   ///< cell_output x B
    Mat<T> z1;    ///< fc1 pre-activation
    Mat<T> mask;  ///< dropout scale per fc1 unit (0 or 1/(1-p)); empty when inactive
    Mat<T> d1;    ///< post ReLU and dropout
    Mat<T> out;   ///< output x B
};

namespace detail {

template <typename T>
void run_direction(CellKind kind, const DirectionWeights<T>& w, const Mat<T>& x, Eigen::Index steps,
                   Eigen::Index batch, bool reversed, DirectionCache<T>& cache) {
    const auto H = w.R.cols();
    const auto G = w.R.rows();
    const bool lstm = kind != CellKind::GRU;
    Mat<T> xp(G, steps * batch);
    xp.noalias() = w.W * x;
    xp.colwise() += w.b;

    cache.reversed = reversed;
    cache.gates.resize(G, steps * batch);
    cache.h_prev.resize(H, steps * batch);
    if (lstm) {
        cache.c_prev.resize(H, steps * batch);
        cache.c.resize(H, steps * batch);
        cache.tc.resize(H, steps * batch);
    } else {
        cache.rh.resize(H, steps * batch);
    }
    Mat<T> h = Mat<T>::Zero(H, batch);
    Mat<T> c = lstm ? Mat<T>::Zero(H, batch) : Mat<T>();
    Mat<T> gates, rh, h_next, c_next, tc;
    for (Eigen::Index s = 0; s < steps; ++s) {
        const Eigen::Index t = reversed ? steps - 1 - s : s;
        const Eigen::Index c0 = t * batch;
        cache.h_prev.middleCols(c0, batch) = h;
        if (lstm) {
            cache.c_prev.middleCols(c0, batch) = c;
            lstm_step<T>(w.R, xp.middleCols(c0, batch), h, c, gates, c_next, tc, h_next);
            cache.c.middleCols(c0, batch) = c_next;
            cache.tc.middleCols(c0, batch) = tc;
            c.swap(c_next);
        } else {
            gru_step<T>(w.R, xp.middleCols(c0, batch), h, gates, rh, h_next);
            cache.rh.middleCols(c0, batch) = rh;
        }
        cache.gates.middleCols(c0, batch) = gates;
        h.swap(h_next);
    }
    cache.h_last = std::move(h);
}

/// Backpropagates dh_last (gradient on the final processed state) through one
/// direction and writes dW, dR, db into `grad`.
template <typename T>
void backprop_direction(CellKind kind, const DirectionWeights<T>& w, const Mat<T>& x, Eigen::Index steps,
                        Eigen::Index batch, const DirectionCache<T>& cache, const Mat<T>& dh_last,
                        DirectionWeights<T>& grad) {
    const auto H = w.R.cols();
    const auto G = w.R.rows();
    const bool lstm = kind != CellKind::GRU;
    Mat<T> da(G, steps * batch);
    Mat<T> dh = dh_last;
    Mat<T> dc = lstm ? Mat<T>::Zero(H, batch) : Mat<T>();
    Mat<T> step_da(G, batch);
    for (Eigen::Index s = steps - 1; s >= 0; --s) {
        const Eigen::Index t = cache.reversed ? steps - 1 - s : s;
        const Eigen::Index c0 = t * batch;
        const Mat<T> g = cache.gates.middleCols(c0, batch);
        const Mat<T> hp = cache.h_prev.middleCols(c0, batch);
        if (lstm) {
            const auto i = g.topRows(H).array();
            const auto f = g.middleRows(H, H).array();
            const auto cand = g.middleRows(2 * H, H).array();
            const auto o = g.bottomRows(H).array();
            const Mat<T> tcm = cache.tc.middleCols(c0, batch);
            const auto tca = tcm.array();
            dc.array() += dh.array() * o * (T(1) - tca.square());
            step_da.topRows(H) = (dc.array() * cand * i * (T(1) - i)).matrix();
            step_da.middleRows(H, H) = (dc.array() * cache.c_prev.middleCols(c0, batch).array() * f * (T(1) - f)).matrix();
            step_da.middleRows(2 * H, H) = (dc.array() * i * (T(1) - cand.square())).matrix();
            step_da.bottomRows(H) = (dh.array() * tca * o * (T(1) - o)).matrix();
            dc.array() *= f;
            dh.noalias() = w.R.transpose() * step_da;
        } else {
            const auto z = g.topRows(H).array();
            const auto r = g.middleRows(H, H).array();
            const auto n = g.bottomRows(H).array();
            const Mat<T> dan = (dh.array() * z * (T(1) - n.square())).matrix();
            const Mat<T> drh = w.R.bottomRows(H).transpose() * dan;
            step_da.topRows(H) = (dh.array() * (n - hp.array()) * z * (T(1) - z)).matrix();
            step_da.middleRows(H, H) = (drh.array() * hp.array() * r * (T(1) - r)).matrix();
            step_da.bottomRows(H) = dan;
            Mat<T> dh_prev = (dh.array() * (T(1) - z) + drh.array() * r).matrix();
            dh_prev.noalias() += w.R.topRows(2 * H).transpose() * step_da.topRows(2 * H);
            dh.swap(dh_prev);
        }
        da.middleCols(c0, batch) = step_da;
    }
    grad.W.noalias() = da * x.transpose();
    grad.b = da.rowwise().sum();
    if (lstm) {
        grad.R.noalias() = da * cache.h_prev.transpose();
    } else {
        grad.R.topRows(2 * H).noalias() = da.topRows(2 * H) * cache.h_prev.transpose();
        grad.R.bottomRows(H).noalias() = da.bottomRows(H) * cache.rh.transpose();
    }
}

}  // namespace detail

/// Packs samples (each I x T, one column per step) into the I x (T * B) batch layout.
template <typename T, typename SampleRange>
Mat<T> pack_batch(const SampleRange& samples) {
    const auto B = static_cast<Eigen::Index>(std::size(samples));
    if (B == 0) throw InvalidArgument("empty batch");
    const auto& first = *std::begin(samples);
    const auto I = first.rows();
    const auto steps = first.cols();
    Mat<T> x(I, steps * B);
    Eigen::Index b = 0;
    for (const auto& s : samples) {
        if (s.rows() != I || s.cols() != steps) throw InvalidArgument("samples in a batch differ in shape");
        for (Eigen::Index t = 0; t < steps; ++t) x.col(t * B + b) = s.col(t).template cast<T>();
        ++b;
    }
    return x;
}

/// Runs the network on a packed batch. In Train mode with a positive dropout
/// rate `rng` must be non-null; inverted dropout keeps Eval unscaled.
template <typename T>
ForwardCache<T> forward(const ModelWeights<T>& w, Mat<T> x, Eigen::Index steps, ForwardMode mode,
                        std::mt19937_64* rng = nullptr) {
    const auto& spec = w.spec;
    if (steps <= 0 || x.cols() % steps != 0) throw InvalidArgument("batch columns are not a multiple of the step count");
    if (x.rows() != static_cast<Eigen::Index>(spec.input_size))
        throw InvalidArgument("feature size " + std::to_string(x.rows()) + " does not match model input size " +
                              std::to_string(spec.input_size));
    ForwardCache<T> cache;
    cache.steps = steps;
    cache.batch = x.cols() / steps;
    cache.x = std::move(x);
    const auto B = cache.batch;
    const auto H = static_cast<Eigen::Index>(spec.hidden_size);
    cache.dirs.resize(w.dirs.size());
    cache.rep.resize(static_cast<Eigen::Index>(spec.cell_output()), B);
    for (std::size_t d = 0; d < w.dirs.size(); ++d) {
        detail::run_direction<T>(spec.cell, w.dirs[d], cache.x, steps, B, d == 1, cache.dirs[d]);
        cache.rep.middleRows(static_cast<Eigen::Index>(d) * H, H) = cache.dirs[d].h_last;
    }
    cache.z1.noalias() = w.fc1_W * cache.rep;
    cache.z1.colwise() += w.fc1_b;
    cache.d1 = cache.z1.cwiseMax(T(0));
    if (mode == ForwardMode::Train && spec.dropout_rate > 0.0) {
        if (rng == nullptr) throw InvalidArgument("train-mode dropout needs a random generator");
        const double keep = 1.0 - spec.dropout_rate;
        const T scale = static_cast<T>(1.0 / keep);
        cache.mask.resize(cache.d1.rows(), cache.d1.cols());
        for (Eigen::Index j = 0; j < cache.mask.cols(); ++j)
            for (Eigen::Index i = 0; i < cache.mask.rows(); ++i)
                cache.mask(i, j) = detail::uniform01(*rng) < keep ? scale : T(0);
        cache.d1.array() *= cache.mask.array();
    }
    cache.out.noalias() = w.fc2_W * cache.d1;
    cache.out.colwise() += w.fc2_b;
    return cache;
}

/// Convenience: Eval-mode predictions (first output) for a list of samples.
template <typename T, typename SampleRange>
std::vector<double> predict(const ModelWeights<T>& w, const SampleRange& samples) {
    if (std::size(samples) == 0) return {};
    const auto steps = std::begin(samples)->cols();
    const auto cache = forward<T>(w, pack_batch<T>(samples), steps, ForwardMode::Eval);
    std::vector<double> out(static_cast<std::size_t>(cache.batch));
    for (Eigen::Index b = 0; b < cache.batch; ++b) out[static_cast<std::size_t>(b)] = static_cast<double>(cache.out(0, b));
    return out;
}

/// Mean squared error over every output of every sample, accumulated in double.
template <typename T>
double mse_loss(const Mat<T>& out, const Mat<T>& targets) {
    if (out.rows() != targets.rows() || out.cols() != targets.cols()) throw InvalidArgument("target shape mismatch");
    double s = 0.0;
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double e = static_cast<double>(out(i, j)) - static_cast<double>(targets(i, j));
            s += e * e;
        }
    return s / static_cast<double>(out.size());
}

/// Exact gradients of loss_scale * MSE(out, targets) with respect to every
/// weight, by backpropagation through all time steps.
template <typename T>
ModelWeights<T> backward(const ModelWeights<T>& w, const ForwardCache<T>& cache, const Mat<T>& targets,
                         T loss_scale = T(1)) {
    if (targets.rows() != cache.out.rows() || targets.cols() != cache.out.cols())
        throw InvalidArgument("target shape mismatch");
    auto g = ModelWeights<T>::zeros(w.spec);
    const Mat<T> dout = (cache.out - targets) * (loss_scale * T(2) / static_cast<T>(cache.out.size()));
    g.fc2_W.noalias() = dout * cache.d1.transpose();
    g.fc2_b = dout.rowwise().sum();
    Mat<T> dz1 = w.fc2_W.transpose() * dout;
    if (cache.mask.size() != 0) dz1.array() *= cache.mask.array();
    dz1.array() *= (cache.z1.array() > T(0)).template cast<T>();
    g.fc1_W.noalias() = dz1 * cache.rep.transpose();
    g.fc1_b = dz1.rowwise().sum();
    const Mat<T> drep = w.fc1_W.transpose() * dz1;
    const auto H = static_cast<Eigen::Index>(w.spec.hidden_size);
    for (std::size_t d = 0; d < w.dirs.size(); ++d) {
        const Mat<T> dh_last = drep.middleRows(static_cast<Eigen::Index>(d) * H, H);
        detail::backprop_direction<T>(w.spec.cell, w.dirs[d], cache.x, cache.steps, cache.batch, cache.dirs[d],
                                      dh_last, g.dirs[d]);
    }
    return g;
}

}  // namespace dampid::nn
