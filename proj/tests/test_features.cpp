#include <catch_amalgamated.hpp>

#include <dampid/features.hpp>
#include <dampid/sim.hpp>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace dampid::features;
using Catch::Approx;

namespace {

std::vector<double> random_signal(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = d(rng);
    return x;
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("log frequency grid has 42 points from 0 to 10 Hz", "[features][grid]") {
    const auto g = log_freq_grid();
    REQUIRE(g.size() == 42);
    CHECK(g.hz[0] == 0.0);
    CHECK(g.hz[1] == Approx(0.1).epsilon(1e-12));
    CHECK(g.hz[2] == Approx(0.1122).margin(5e-5));
    CHECK(g.hz[3] == Approx(0.1259).margin(5e-5));
    CHECK(g.hz[39] == Approx(7.9433).margin(5e-5));
    CHECK(g.hz[40] == Approx(8.9125).margin(5e-5));
    CHECK(std::abs(g.hz[41] - 10.0) < 1e-12);
    CHECK(std::abs(g.hz[21] - 1.0) < 1e-12);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.hz[i] > g.hz[i - 1]);
}

TEST_CASE("window parameters give eleven frames", "[features][stft]") {
    // Fractional window length k = 2/3 of the 3 s window, overlap p = 0.95.
    const double k = 2.0 / 3.0, p = 0.95;
    CHECK((1.0 - k) / (k * (1.0 - p)) + 1.0 == Approx(11.0));
    CHECK(frame_count(3001, 2000, 100) == 11);
    CHECK(frame_count(3000, 2000, 100) == 11);
    const auto s = stft(random_signal(3001, 1));
    CHECK(s.frames() == 11);
    CHECK(s.frequencies() == 42);
    CHECK(s.values.allFinite());
}

TEST_CASE("constant input gives a purely real DC bin equal to c times the window sum", "[features][stft]") {
    const std::vector<double> x(3001, 2.5);
    const auto s = stft(x);
    const auto g = oracle::hann_periodic(2000);
    double gsum = 0.0;
    for (double v : g) gsum += v;
    for (Eigen::Index m = 0; m < s.frames(); ++m) {
        CHECK(s.values(0, m).real() == Approx(2.5 * gsum).epsilon(1e-12));
        CHECK(s.values(0, m).imag() == 0.0);
    }
}

TEST_CASE("a 1 Hz sinusoid peaks in the 1 Hz bin", "[features][stft]") {
    std::vector<double> x(3001);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 1.0 * i / 1000.0);
    const auto s = stft(x);
    Eigen::Index arg = 0;
    s.values.col(0).cwiseAbs().maxCoeff(&arg);
    CHECK(arg == 21);

    // Same conclusion from the direct-DFT oracle.
    const auto g = log_freq_grid();
    const auto win = oracle::hann_periodic(2000);
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t h = 0; h < g.size(); ++h) {
        const double mag = std::abs(oracle::dft_bin(x, 0, win, g.hz[h], 1000.0, true));
        if (mag > best_mag) best_mag = mag, best = h;
    }
    CHECK(best == 21);
}

TEST_CASE("stft agrees with the direct-summation oracle", "[features][stft][oracle]") {
    const auto g = log_freq_grid();
    const auto win = oracle::hann_periodic(2000);
    for (auto conv : {PhaseConvention::AbsoluteTime, PhaseConvention::FrameLocal}) {
        StftConfig cfg;
        cfg.phase = conv;
        const StftPlan plan(3001, cfg);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto x = random_signal(3001, 100 + seed);
            const auto s = plan(x);
            Eigen::MatrixXcd ref(42, 11);
            for (Eigen::Index m = 0; m < 11; ++m)
                for (Eigen::Index h = 0; h < 42; ++h)
                    ref(h, m) = oracle::dft_bin(x, static_cast<std::size_t>(m) * 100, win, g.hz[h], 1000.0,
                                                conv == PhaseConvention::AbsoluteTime);
            CHECK(max_abs(s.values - ref) / max_abs(ref) < 1e-9);
        }
    }
}

TEST_CASE("stft is linear", "[features][stft]") {
    const StftPlan plan(3001);
    const auto x1 = random_signal(3001, 7), x2 = random_signal(3001, 8);
    std::vector<double> mix(3001);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = -1.75 * x1[i] + x2[i];
    const Eigen::MatrixXcd lhs = plan(mix).values;
    const Eigen::MatrixXcd rhs = -1.75 * plan(x1).values + plan(x2).values;
    CHECK(max_abs(lhs - rhs) / max_abs(rhs) < 1e-10);
}

TEST_CASE("stft rejects short signals", "[features][stft][errors]") {
    CHECK_THROWS_AS(stft(std::vector<double>(1999, 1.0)), dampid::InvalidArgument);
    CHECK_THROWS_AS(StftPlan(100), dampid::InvalidArgument);
}

TEST_CASE("phase angle lies in (-pi, pi] and is zero for zero", "[features][phase]") {
    CHECK(phase_angle({0.0, 0.0}) == 0.0);
    CHECK(phase_angle({-0.0, -0.0}) == 0.0);
    CHECK(phase_angle({1e-310, 1e-310}) == 0.0);
    CHECK(phase_angle({-1.0, 0.0}) == Approx(std::numbers::pi));
    CHECK(phase_angle({-1.0, -0.0}) == Approx(std::numbers::pi));
    CHECK(phase_angle({0.0, 1.0}) == Approx(std::numbers::pi / 2));
    CHECK(phase_angle({0.0, -1.0}) == Approx(-std::numbers::pi / 2));
}

TEST_CASE("featurize_pair stacks real and phase blocks into 168 x 11", "[features][featurize]") {
    const auto u = random_signal(3001, 21), y = random_signal(3001, 22);
    const auto f = featurize_pair(u, y);
    REQUIRE(f.rows() == 168);
    REQUIRE(f.cols() == 11);
    const auto su = stft(u), sy = stft(y);
    for (Eigen::Index m = 0; m < 11; ++m) {
        for (Eigen::Index h = 0; h < 42; ++h) {
            CHECK(f(h, m) == su.values(h, m).real());
            CHECK(f(42 + h, m) == sy.values(h, m).real());
            CHECK(f(84 + h, m) == phase_angle(su.values(h, m)));
            CHECK(f(126 + h, m) == phase_angle(sy.values(h, m)));
        }
    }
    const Eigen::MatrixXd phases = f.bottomRows(84);
    CHECK(phases.maxCoeff() <= std::numbers::pi);
    CHECK(phases.minCoeff() > -std::numbers::pi);
}

TEST_CASE("zero output gives zero output blocks", "[features][featurize]") {
    const auto u = random_signal(3001, 31);
    const auto f = featurize_pair(u, std::vector<double>(3001, 0.0));
    CHECK(f.middleRows(42, 42).isZero(0.0));
    CHECK(f.bottomRows(42).isZero(0.0));
}

TEST_CASE("scaling the input scales real parts and keeps phases", "[features][featurize]") {
    const auto u = random_signal(3001, 41), y = random_signal(3001, 42);
    std::vector<double> u3(u);
    for (auto& v : u3) v *= 3.0;
    const auto f = featurize_pair(u, y), f3 = featurize_pair(u3, y);
    CHECK((f3.topRows(42) - 3.0 * f.topRows(42)).cwiseAbs().maxCoeff() < 1e-10 * f.topRows(42).cwiseAbs().maxCoeff());
    CHECK((f3.middleRows(84, 42) - f.middleRows(84, 42)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(f3.middleRows(42, 42) == f.middleRows(42, 42));
}

TEST_CASE("featurize_pair rejects mismatched windows", "[features][errors]") {
    CHECK_THROWS_AS(featurize_pair(std::vector<double>(3001, 1.0), std::vector<double>(3000, 1.0)),
                    dampid::InvalidArgument);
}

TEST_CASE("normalizer standardizes each feature row", "[features][normalize]") {
    std::vector<FeatureTensor> samples;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(5.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        FeatureTensor f(4, 11);
        for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = d(rng);
        f.row(3).setConstant(7.0);  // zero spread
        samples.push_back(f);
    }
    const auto n = Normalizer::fit(samples);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(4), sq = Eigen::VectorXd::Zero(4);
    for (auto f : samples) {
        n.apply(f);
        sum += f.rowwise().sum();
        sq += f.array().square().matrix().rowwise().sum();
    }
    const double count = 50.0 * 11.0;
    for (int r = 0; r < 3; ++r) {
        CHECK(std::abs(sum[r] / count) < 1e-12);
        CHECK(sq[r] / count == Approx(1.0).epsilon(1e-12));
    }
    CHECK(std::abs(sum[3]) < 1e-12);
}
