// Acceptance report: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--only 1,2,...] [--out DIR] [--strict]
// Without --strict the exit code only reflects errors, not FAIL lines.

#include <dampid/experiments.hpp>
#include <dampid/nn/gradcheck.hpp>
#include <dampid/sim.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <numeric>
#include <optional>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace dampid;
namespace ex = dampid::experiments;

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Outcome {
    int id = 0;
    bool pass = false;
    std::string detail;
};

std::vector<Outcome> g_results;

void report(int id, bool pass, const std::string& detail) {
    g_results.push_back({id, pass, detail});
    std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

void simulator_fidelity() {
    const auto t0 = clock_type::now();
    double worst = 0.0;
    for (double zeta : dataset::default_zetas()) {
        const sim::CanonicalParams c{1.0, zeta, 1.0};
        const auto y = sim::simulate(sim::tustin_discretize(c, 1e-3), std::vector<double>(10001, 1.0));
        for (std::size_t k = 0; k < y.size(); ++k)
            worst = std::max(worst, std::abs(y[k] - sim::analytic_step_response(c, static_cast<double>(k) * 1e-3)));
    }
    const double t = seconds_since(t0);
    report(1, worst < 1e-3 && t < 1.0,
           "max |discrete - analytic| step error " + fmt("%.3e", worst) + " (< 1e-3), " + fmt("%.3f", t) + " s");
}

void tustin_cross_check() {
    double worst = 0.0;
    for (double zeta : dataset::default_zetas()) {
        for (double wn : {1.0, 0.3, 7.0}) {
            const auto ss = sim::tustin_discretize({wn, zeta, 1.0}, 1e-3);
            const auto ref = oracle::bilinear_second_order(wn, zeta, 1.0L, 1e-3L);
            const std::pair<double, long double> pairs[] = {
                {ss.A(0, 0), 0.0L}, {ss.A(0, 1), 1.0L}, {ss.A(1, 0), ref.A10}, {ss.A(1, 1), ref.A11},
                {ss.B(0), 0.0L},    {ss.B(1), 1.0L},    {ss.C(0), ref.C0},     {ss.C(1), ref.C1},
                {ss.D, ref.D}};
            for (const auto& [got, want] : pairs) {
                const long double diff = std::abs(static_cast<long double>(got) - want);
                const long double rel = want == 0.0L ? diff : diff / std::abs(want);
                worst = std::max(worst, static_cast<double>(rel));
            }
        }
    }
    report(2, worst < 1e-12, "max relative entry difference vs independent bilinear substitution " +
                                 fmt("%.3e", worst) + " (< 1e-12)");
}

void feature_shape_and_grid() {
    double t = 0.0;  // library time only; the long-double oracle is excluded
    auto t0 = clock_type::now();
    const auto grid = features::log_freq_grid();
    std::mt19937_64 rng(derive_seed(0, "acceptance/stft"));
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> u(3001), y(3001);
    for (auto& v : u) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    const auto f = features::featurize_pair(u, y);
    t += seconds_since(t0);
    const bool shape_ok = f.rows() == 168 && f.cols() == 11;
    const bool grid_ok = grid.hz.size() == 42 && grid.hz.front() == 0.0 && std::abs(grid.hz.back() - 10.0) < 1e-12 &&
                         std::abs(grid.hz[1] - 0.1) < 1e-12;

    const auto win = oracle::hann_periodic(2000);
    const features::StftPlan plan(3001);
    double worst = 0.0;
    for (int w = 0; w < 100; ++w) {
        std::vector<double> x(3001);
        for (auto& v : x) v = nd(rng);
        t0 = clock_type::now();
        const auto s = plan(x);
        t += seconds_since(t0);
        double err = 0.0, scale = 0.0;
        for (Eigen::Index m = 0; m < 11; ++m) {
            for (Eigen::Index h = 0; h < 42; ++h) {
                const auto ref = oracle::dft_bin(x, static_cast<std::size_t>(m) * 100, win, grid.hz[h], 1000.0, true);
                err = std::max(err, std::abs(s.values(h, m) - ref));
                scale = std::max(scale, std::abs(ref));
            }
        }
        worst = std::max(worst, err / scale);
    }
    report(3, shape_ok && grid_ok && worst < 1e-9 && t < 10.0,
           "features " + std::to_string(f.rows()) + "x" + std::to_string(f.cols()) + ", grid 0.." +
               fmt("%g", grid.hz.back()) + " Hz with f[1]=" + fmt("%g", grid.hz[1]) +
               " Hz, stft vs direct DFT on 100 windows " + fmt("%.3e", worst) + " (< 1e-9), " + fmt("%.2f", t) +
               " s featurizing");
}

void gradient_correctness() {
    const auto t0 = clock_type::now();
    bool ok = true;
    std::ostringstream detail;
    for (auto kind : {nn::CellKind::GRU, nn::CellKind::LSTM, nn::CellKind::BiLSTM}) {
        double worst = 0.0;
        for (int i = 0; i < 20; ++i)
            worst = std::max(worst, nn::gradient_check(kind, derive_seed(0, "acceptance/grad/" + std::to_string(i)))
                                        .max_rel_error);
        ok = ok && worst < 1e-4;
        detail << nn::to_string(kind) << " " << fmt("%.2e", worst) << ", ";
    }
    const double t = seconds_since(t0);
    report(4, ok && t < 30.0, "max relative FD error over 20 models (hidden 8, 3 steps): " + detail.str() + "limit 1e-4, " +
                                  fmt("%.1f", t) + " s");
}

/// Full-size BiLSTM on 64 dataset windows; per-sample updates at lr 5e-4,
/// momentum 0.9, dropout disabled, 200 epochs. MSE is measured in eval mode.
void overfit_sanity(const dataset::Dataset& ds) {
    const auto t0 = clock_type::now();
    auto windows = dataset::enumerate_windows(ds, 50);
    std::mt19937_64 rng(derive_seed(0, "acceptance/overfit"));
    std::shuffle(windows.begin(), windows.end(), rng);
    windows.resize(64);
    const auto raw = ex::featurize_windows(ds, windows, features::Featurizer{});
    std::vector<Eigen::Map<const Eigen::MatrixXf>> views;
    for (std::size_t i = 0; i < raw.size(); ++i) views.push_back(raw.sample(i));
    const auto norm = features::Normalizer::fit(views, features::NormalizeMode::PerBlock);
    std::vector<std::size_t> idx(raw.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto set = ex::subset(raw, idx, norm);

    nn::ModelSpec spec;
    spec.cell = nn::CellKind::BiLSTM;
    spec.dropout_rate = 0.0;
    nn::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.lr_drop_every = 0;
    cfg.seed = derive_seed(0, "acceptance/overfit/train");
    int first_below = 0;
    const auto r = nn::train<float>(spec, cfg, set, &set, [&](const nn::EpochStats& st) {
        if (first_below == 0 && st.val_loss < 1e-3) first_below = st.epoch;
    });
    const auto pred = nn::predict_set(r.weights, set);
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mse += std::pow(pred[i] - set.targets()[i], 2);
    mse /= static_cast<double>(pred.size());
    const double t = seconds_since(t0);
    report(5, mse < 1e-3 && t < 120.0,
           "BiLSTM on 64 windows: train MSE " + fmt("%.3e", mse) + " after 200 epochs (< 1e-3; first below at epoch " +
               std::to_string(first_below) + "), " + fmt("%.1f", t) + " s");
}

ex::EvalReport run_desk(const std::string& id, const dataset::Dataset& ds, const std::filesystem::path& out) {
    const auto spec = ex::experiment_preset(id);
    ex::ExperimentOptions opt;
    opt.output_dir = out / spec.id;
    opt.deterministic = true;
    opt.reuse_models = false;
    const auto t0 = clock_type::now();
    opt.log = [&](const std::string& m) { std::cerr << "  [" << fmt("%.0f", seconds_since(t0)) << " s] " << m << '\n'; };
    auto rep = ex::run_experiment(spec, ds, opt);
    std::cerr << "  " << id << " finished in " << fmt("%.0f", seconds_since(t0)) << " s\n";
    return rep;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool identical(const ex::EvalReport& a, const ex::EvalReport& b) {
    if (!same_bits(a.test_mad, b.test_mad) || !same_bits(a.train_mad, b.train_mad)) return false;
    if (a.folds.size() != b.folds.size() || a.test_predictions.size() != b.test_predictions.size()) return false;
    for (std::size_t i = 0; i < a.folds.size(); ++i)
        if (!same_bits(a.folds[i].test_mad, b.folds[i].test_mad) ||
            !same_bits(a.folds[i].train_mad, b.folds[i].train_mad) ||
            !same_bits(a.folds[i].val_mad, b.folds[i].val_mad))
            return false;
    for (std::size_t i = 0; i < a.test_predictions.size(); ++i)
        if (!same_bits(a.test_predictions[i].predicted, b.test_predictions[i].predicted)) return false;
    for (std::size_t i = 0; i < a.histograms.size(); ++i)
        if (a.histograms[i].to_csv() != b.histograms[i].to_csv()) return false;
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    std::filesystem::path out = std::filesystem::temp_directory_path() / "dampid_acceptance";
    bool strict = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
        } else if (a == "--out" && i + 1 < argc) {
            out = argv[++i];
        } else if (a == "--strict") {
            strict = true;
        } else {
            std::cerr << "usage: acceptance [--only 1,2,...] [--out DIR] [--strict]\n";
            return 2;
        }
    }
    auto want = [&](int id) { return only.empty() || only.contains(id); };

    try {
        if (want(1)) simulator_fidelity();
        if (want(2)) tustin_cross_check();
        if (want(3)) feature_shape_and_grid();
        if (want(4)) gradient_correctness();

        const bool need_data = want(5) || want(6) || want(7) || want(8) || want(9);
        if (need_data) {
            ex::ExperimentOptions opt;
            const auto ds = ex::experiment_dataset(ex::DatasetKind::Base, opt);
            if (want(5)) overfit_sanity(ds);

            std::optional<ex::EvalReport> exp4;
            if (want(6) || want(7) || want(8)) {
                const auto e6 = run_desk("Exp6a", ds, out);
                if (want(6))
                    report(6, e6.test_mad <= 0.08,
                           "desk Exp6a (mixed zeta, stride 50, " + std::to_string(e6.test_predictions.size()) +
                               " test windows, BiLSTM, 45 epochs): test MAD " + fmt("%.4f", e6.test_mad) +
                               " (<= 0.08), train MAD " + fmt("%.4f", e6.train_mad));
                if (want(8)) {
                    const auto step = ex::InputFilter::parse("step");
                    const auto early = ex::interval_mad(ds, e6.test_predictions, step, {0, 3});
                    const auto mid = ex::interval_mad(ds, e6.test_predictions, step, {3, 6});
                    report(8, mid < early,
                           "step inputs, pooled test windows: MAD 3-6 s " + fmt("%.4f", mid) + " < MAD 0-3 s " +
                               fmt("%.4f", early));
                }
                if (want(7)) {
                    exp4 = run_desk("Exp4", ds, out / "rerun_a");
                    const auto& e4 = *exp4;
                    const auto e5 = run_desk("Exp5", ds, out);
                    std::cout << "  cell comparison (desk scale, mixed zeta):\n"
                              << "    experiment  cell    train MAD  test MAD\n";
                    for (const auto* r : {&e4, &e5, &e6})
                        std::cout << "    " << r->id << (r->id.size() < 5 ? "        " : "       ")
                                  << nn::to_string(r->spec.cell) << std::string(8 - nn::to_string(r->spec.cell).size(), ' ')
                                  << fmt("%.4f", r->train_mad) << "     " << fmt("%.4f", r->test_mad) << '\n';
                    const bool finite = std::isfinite(e4.test_mad) && std::isfinite(e5.test_mad) &&
                                        std::isfinite(e6.test_mad);
                    const bool best = e6.test_mad < e4.test_mad && e6.test_mad < e5.test_mad;
                    report(7, finite,
                           std::string("three-row table produced; BiLSTM best: ") + (best ? "yes" : "no") +
                               " (expectation, not gated)");
                }
            }
            if (want(9)) {
                // A full desk-scale run twice from scratch; GRU keeps the rerun short.
                if (!exp4) exp4 = run_desk("Exp4", ds, out / "rerun_a");
                const auto& a = *exp4;
                const auto b = run_desk("Exp4", ds, out / "rerun_b");
                report(9, identical(a, b),
                       "Exp4 retrained twice from identical seeds: test MAD " + fmt("%.17g", a.test_mad) + " vs " +
                           fmt("%.17g", b.test_mad) + ", fold MADs, predictions and histograms bitwise equal: " +
                           (identical(a, b) ? "yes" : "no"));
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    std::size_t passed = 0;
    for (const auto& r : g_results) passed += r.pass ? 1 : 0;
    std::cout << passed << "/" << g_results.size() << " criteria passed" << std::endl;
    return strict && passed != g_results.size() ? 1 : 0;
}
