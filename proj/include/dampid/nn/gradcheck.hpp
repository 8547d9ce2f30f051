#pragma once

// Central finite-difference verification of backward() in double precision.

#include <dampid/nn/model.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace dampid::nn {

struct GradCheckOptions {
    std::size_t input_size = 6;
    std::size_t hidden_size = 8;
    std::size_t fc1_size = 5;
    Eigen::Index steps = 3;
    Eigen::Index batch = 4;
    double epsilon = 1e-5;
    double weight_scale = 0.5;  ///< parameters drawn from U(-scale, scale)
    double denominator_floor = 1e-6;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_param;
    Eigen::Index worst_index = 0;
    std::size_t checked = 0;
};

/// Builds a random small model and batch (dropout off), then compares every
/// analytic gradient entry against (L(w + eps) - L(w - eps)) / (2 eps).
/// Relative error is |a - n| / max(|a|, |n|, denominator_floor).
inline GradCheckResult gradient_check(CellKind kind, std::uint64_t seed, const GradCheckOptions& opt = {}) {
    ModelSpec spec;
    spec.cell = kind;
    spec.input_size = opt.input_size;
    spec.hidden_size = opt.hidden_size;
    spec.fc1_size = opt.fc1_size;
    spec.dropout_rate = 0.0;
    auto w = ModelWeights<double>::zeros(spec);
    std::mt19937_64 rng(seed);
    auto uniform = [&](double a) { return (2.0 * detail::uniform01(rng) - 1.0) * a; };
    w.visit([&](const std::string&, auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(opt.weight_scale);
    });
    Mat<double> x(static_cast<Eigen::Index>(opt.input_size), opt.steps * opt.batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = detail::standard_normal(rng);
    Mat<double> y(1, opt.batch);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = detail::uniform01(rng);

    auto loss_at = [&](const ModelWeights<double>& ww) {
        return mse_loss<double>(forward<double>(ww, x, opt.steps, ForwardMode::Eval).out, y);
    };
    const auto cache = forward<double>(w, x, opt.steps, ForwardMode::Train);
    const auto grads = backward<double>(w, cache, y);

    GradCheckResult res;
    auto probe = w;
    zip_params(
        [&](const std::string& name, auto& p, const auto& g) {
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                const double orig = p.data()[i];
                p.data()[i] = orig + opt.epsilon;
                const double lp = loss_at(probe);
                p.data()[i] = orig - opt.epsilon;
                const double lm = loss_at(probe);
                p.data()[i] = orig;
                const double numeric = (lp - lm) / (2.0 * opt.epsilon);
                const double analytic = g.data()[i];
                const double abs_err = std::abs(analytic - numeric);
                const double rel =
                    abs_err / std::max({std::abs(analytic), std::abs(numeric), opt.denominator_floor});
                res.max_abs_error = std::max(res.max_abs_error, abs_err);
                if (rel > res.max_rel_error || res.checked == 0) {
                    res.max_rel_error = rel;
                    res.worst_param = name;
                    res.worst_index = i;
                }
                ++res.checked;
            }
        },
        probe, grads);
    return res;
}

}  // namespace dampid::nn
