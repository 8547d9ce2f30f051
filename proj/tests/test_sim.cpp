#include <catch_amalgamated.hpp>

#include <dampid/sim.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace dampid::sim;
using Catch::Approx;

namespace {
const std::vector<double> kZetas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
}

TEST_CASE("canonical_from_physical substitutes the closed forms", "[sim]") {
    auto c = canonical_from_physical({1.0, 1.0, 1.0});
    CHECK(c.omega_n == 1.0);
    CHECK(c.zeta == 0.5);
    CHECK(c.gain == 1.0);

    c = canonical_from_physical({1.0, 0.2, 1.0});
    CHECK(c.omega_n == 1.0);
    CHECK(c.zeta == Approx(0.1).margin(1e-15));

    c = canonical_from_physical({2.0, 1.0, 8.0});
    CHECK(c.omega_n == Approx(2.0));
    CHECK(c.zeta == Approx(1.0 / 8.0));
    CHECK(c.gain == Approx(1.0 / 8.0));
}

TEST_CASE("overdamped and critically damped plants are rejected with the computed zeta", "[sim][errors]") {
    try {
        canonical_from_physical({1.0, 4.0, 1.0});
        FAIL("expected OverdampedExcluded");
    } catch (const OverdampedExcluded& e) {
        CHECK(e.zeta() == 2.0);
    }
    CHECK_THROWS_AS(canonical_from_physical({1.0, 2.0, 1.0}), OverdampedExcluded);
    CHECK_THROWS_AS(canonical_from_physical({0.0, 1.0, 1.0}), dampid::InvalidArgument);
    CHECK_THROWS_AS(canonical_from_physical({1.0, -1.0, 1.0}), dampid::InvalidArgument);
    CHECK_THROWS_AS(tustin_discretize({1.0, 1.5, 1.0}, 1e-3), OverdampedExcluded);
}

TEST_CASE("poles are a stable conjugate pair of modulus omega_n", "[sim]") {
    auto [p1, p2] = poles({1.0, 0.5, 1.0});
    CHECK(p1.real() == Approx(-0.5));
    CHECK(p1.imag() == Approx(std::sqrt(3.0) / 2.0));
    CHECK(p2 == std::conj(p1));

    auto [q1, q2] = poles({1.0, 0.1, 1.0});
    CHECK(q1.real() == Approx(-0.1));
    CHECK(q1.imag() == Approx(std::sqrt(0.99)));

    auto [r1, r2] = poles({2.0, 0.5, 1.0});
    CHECK(r1.real() == Approx(2.0 * p1.real()));
    CHECK(r1.imag() == Approx(2.0 * p1.imag()));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> z(1e-3, 0.999), w(0.01, 100.0);
    for (int i = 0; i < 200; ++i) {
        CanonicalParams c{w(rng), z(rng), 1.0};
        auto [a, b] = poles(c);
        CHECK(a.real() < 0.0);
        CHECK(b == std::conj(a));
        CHECK(std::abs(a) == Approx(c.omega_n).epsilon(1e-12));
    }
}

TEST_CASE("Tustin matrices use alpha = 2/Ts and the closed-form M", "[sim][tustin]") {
    const double Ts = 0.001;
    const double a = 2.0 / Ts;
    CHECK(a == 2000.0);
    // M for wn = 1, zeta = 0.1 in exact arithmetic: 2000^2 + 2*2000*0.1 + 1.
    const double M = a * a + 2.0 * a * 0.1 + 1.0;
    CHECK(M == 4000401.0);
    auto ss = tustin_discretize({1.0, 0.1, 1.0}, Ts);
    CHECK(ss.D == Approx(1.0 / 4000401.0).epsilon(1e-15));
    CHECK(ss.A(0, 0) == 0.0);
    CHECK(ss.A(0, 1) == 1.0);
    CHECK(ss.B(0) == 0.0);
    CHECK(ss.B(1) == 1.0);
}

TEST_CASE("Tustin matrices agree with an independent bilinear substitution", "[sim][tustin]") {
    for (double zeta : kZetas) {
        for (double wn : {1.0, 0.3, 7.0}) {
            for (double gain : {1.0, 0.25}) {
                const auto ss = tustin_discretize({wn, zeta, gain}, 1e-3);
                const auto ref = oracle::bilinear_second_order(wn, zeta, gain, 1e-3L);
                auto rel = [](double got, long double want) {
                    return static_cast<double>(std::abs((static_cast<long double>(got) - want) / want));
                };
                CHECK(rel(ss.A(1, 0), ref.A10) < 1e-12);
                CHECK(rel(ss.A(1, 1), ref.A11) < 1e-12);
                CHECK(rel(ss.C(0), ref.C0) < 1e-12);
                CHECK(rel(ss.C(1), ref.C1) < 1e-12);
                CHECK(rel(ss.D, ref.D) < 1e-12);
            }
        }
    }
}

TEST_CASE("discrete realization matches the bilinear transfer function on the unit circle", "[sim][tustin]") {
    const auto ss = tustin_discretize({1.0, 0.3, 1.0}, 1e-3);
    const auto ref = oracle::bilinear_second_order(1.0L, 0.3L, 1.0L, 1e-3L);
    for (double theta : {1e-4, 1e-3, 0.01, 0.5, 2.0}) {
        const std::complex<double> z = std::polar(1.0, theta);
        const Eigen::Matrix2cd zi = z * Eigen::Matrix2cd::Identity() - ss.A.cast<std::complex<double>>();
        const std::complex<double> h =
            (ss.C.cast<std::complex<double>>() * zi.inverse() * ss.B.cast<std::complex<double>>())(0) + ss.D;
        const std::complex<long double> zl(z.real(), z.imag());
        const auto want = oracle::poly_eval(ref.num, zl) / oracle::poly_eval(ref.den, zl);
        CHECK(std::abs(h - std::complex<double>(static_cast<double>(want.real()), static_cast<double>(want.imag()))) <
              1e-9 * std::abs(want));
    }
}

TEST_CASE("discretization is stable and has DC gain equal to gain", "[sim][tustin]") {
    for (double zeta : kZetas) {
        for (double gain : {1.0, 3.0}) {
            const auto ss = tustin_discretize({1.0, zeta, gain}, 1e-3);
            CHECK(ss.spectral_radius() < 1.0);
            const double dc = (ss.C * (Eigen::Matrix2d::Identity() - ss.A).inverse() * ss.B)(0) + ss.D;
            CHECK(dc == Approx(gain).epsilon(1e-9));
        }
    }
    // Steady state reached by simulation for a quickly settling plant.
    const auto ss = tustin_discretize({1.0, 0.8, 2.5}, 1e-3);
    const auto y = simulate(ss, std::vector<double>(40001, 1.0));
    CHECK(y.back() == Approx(2.5).epsilon(1e-9));
}

TEST_CASE("generate_input follows the catalog definitions", "[sim][input]") {
    CHECK(generate_input(Step{1.0}, 3, 1000.0) == std::vector<double>{1.0, 1.0, 1.0});
    const auto ramp = generate_input(Ramp{1.0}, 1001, 1000.0);
    CHECK(ramp[1000] == Approx(1.0));
    CHECK(ramp[0] == 0.0);
    const auto sine = generate_input(Sine{10.0, 0.5}, 1001, 1000.0);
    CHECK(sine[0] == 0.0);
    CHECK(sine[500] == Approx(10.0));
    CHECK_THROWS_AS(generate_input(Step{1.0}, 0, 1000.0), dampid::InvalidArgument);
    CHECK_THROWS_AS(generate_input(Sine{1.0, 0.0}, 10, 1000.0), dampid::InvalidArgument);
}

TEST_CASE("input specs round-trip through text", "[sim][input]") {
    for (const InputSignal& s : {InputSignal{Step{1.0}}, InputSignal{Step{-10.0}}, InputSignal{Ramp{1.0}},
                                 InputSignal{Sine{10.0, 0.5}}, InputSignal{Sine{10.0, 2.0}}}) {
        CHECK(parse_input(to_string(s)) == s);
    }
    CHECK(to_string(Sine{10.0, 0.5}) == "sine:10:0.5");
    CHECK(parse_input("step") == InputSignal{Step{1.0}});
    CHECK_THROWS_AS(parse_input("square:1"), dampid::InvalidArgument);
    CHECK_THROWS_AS(parse_input("step:abc"), dampid::InvalidArgument);
    CHECK_THROWS_AS(parse_input("step:0"), dampid::InvalidArgument);
}

TEST_CASE("simulate starts from rest and is linear", "[sim][simulate]") {
    const auto ss = tustin_discretize({1.0, 0.2, 1.0}, 1e-3);
    const auto zeros = simulate(ss, std::vector<double>(500, 0.0));
    CHECK(std::all_of(zeros.begin(), zeros.end(), [](double v) { return v == 0.0; }));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> u1(3000), u2(3000), sum(3000), scaled(3000);
    for (std::size_t i = 0; i < u1.size(); ++i) {
        u1[i] = n(rng);
        u2[i] = n(rng);
        sum[i] = u1[i] + u2[i];
        scaled[i] = 3.0 * u1[i];
    }
    const auto y1 = simulate(ss, u1), y2 = simulate(ss, u2), ys = simulate(ss, sum), ya = simulate(ss, scaled);
    double scale = 0.0;
    for (double v : ys) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < u1.size(); ++i) {
        CHECK(std::abs(ys[i] - (y1[i] + y2[i])) <= 1e-12 * scale);
        CHECK(std::abs(ya[i] - 3.0 * y1[i]) <= 1e-12 * scale);
    }
    CHECK_THROWS_AS(simulate(ss, std::vector<double>{}), dampid::InvalidArgument);
}

TEST_CASE("discrete step peak matches the analytic overshoot", "[sim][simulate]") {
    const auto ss = tustin_discretize({1.0, 0.1, 1.0}, 1e-3);
    const auto y = simulate(ss, std::vector<double>(10001, 1.0));
    const double peak = *std::max_element(y.begin(), y.end());
    const double expected = 1.0 + std::exp(-0.1 * std::numbers::pi / std::sqrt(1.0 - 0.01));
    CHECK(expected == Approx(1.7292).margin(5e-5));
    CHECK(std::abs(peak - expected) < 0.005);
}

TEST_CASE("analytic step response limits and first peak", "[sim][analytic]") {
    for (double zeta : kZetas) {
        const CanonicalParams c{1.0, zeta, 1.0};
        CHECK(std::abs(analytic_step_response(c, 0.0)) < 1e-15);
        CHECK(std::abs(analytic_step_response(c, 200.0 / zeta) - 1.0) < 1e-9);
    }
    const CanonicalParams c{1.0, 0.5, 1.0};
    const double wd = std::sqrt(0.75);
    const double t_peak = std::numbers::pi / wd;
    const double want = 1.0 + std::exp(-0.5 * std::numbers::pi / wd);
    CHECK(want == Approx(1.1630).margin(5e-5));
    CHECK(analytic_step_response(c, t_peak) == Approx(want).epsilon(1e-12));
    // Dense scan: the first maximum of the closed form sits at t = pi / wd.
    double best = 0.0, best_t = 0.0;
    for (int i = 0; i <= 200000; ++i) {
        const double t = 8.0 * i / 200000.0;
        const double v = analytic_step_response(c, t);
        if (v > best) best = v, best_t = t;
    }
    CHECK(best == Approx(want).epsilon(1e-9));
    CHECK(best_t == Approx(t_peak).margin(1e-4));
    CHECK(analytic_step_response({1.0, 0.5, 4.0}, t_peak) == Approx(4.0 * want));
}

TEST_CASE("noise-free discrete step response tracks the analytic response", "[sim][analytic]") {
    for (double zeta : kZetas) {
        const CanonicalParams c{1.0, zeta, 1.0};
        const auto y = simulate(tustin_discretize(c, 1e-3), std::vector<double>(10001, 1.0));
        double worst = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k)
            worst = std::max(worst, std::abs(y[k] - analytic_step_response(c, k * 1e-3)));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("measurement noise is seeded, additive and zero-mean", "[sim][noise]") {
    const std::vector<double> y(1000, 2.0);
    CHECK(add_measurement_noise(y, 0.0, 9) == y);
    const auto a = add_measurement_noise(y, 0.01, 42);
    const auto b = add_measurement_noise(y, 0.01, 42);
    CHECK(a == b);
    CHECK(a != add_measurement_noise(y, 0.01, 43));
    CHECK_THROWS_AS(add_measurement_noise(y, -1.0, 1), dampid::InvalidArgument);

    const double sigma = 0.01;
    const std::vector<double> zeros(1000000, 0.0);
    const auto noise = add_measurement_noise(zeros, sigma, 7);
    double mean = 0.0, sq = 0.0;
    for (double v : noise) mean += v, sq += v * v;
    mean /= static_cast<double>(noise.size());
    sq /= static_cast<double>(noise.size());
    CHECK(std::abs(mean) < 4.0 * sigma / 1000.0);
    CHECK(std::sqrt(sq) == Approx(sigma).epsilon(0.01));
}

TEST_CASE("make_trajectory produces 10 001 samples for ten seconds at 1 kHz", "[sim]") {
    const auto tr = make_trajectory(Step{1.0}, {1.0, 0.1, 1.0}, 10.0, 1000.0, 0.01, 5);
    CHECK(tr.u.size() == 10001);
    CHECK(tr.y.size() == 10001);
    CHECK(tr.fs == 1000.0);
    CHECK(tr.zeta == 0.1);
}
