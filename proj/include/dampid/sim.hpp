#pragma once

// Second-order LTI plant: continuous-model relations, Tustin discretization,
// input catalog, discrete simulation and measurement noise.

#include <dampid/common.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dampid::sim {

/// Rotational plant J θ'' + b θ' + k θ = u.
struct PhysicalParams {
    double J = 1.0;  ///< moment of inertia [kg m^2]
    double b = 1.0;  ///< viscous friction [N m s]
    double k = 1.0;  ///< spring constant [N m / rad]
};

/// Standard form  gain * wn^2 / (s^2 + 2 zeta wn s + wn^2).
struct CanonicalParams {
    double omega_n = 1.0;
    double zeta = 0.5;
    double gain = 1.0;
};

/// Raised when a parameter set is not underdamped (zeta >= 1).
class OverdampedExcluded : public InvalidArgument {
public:
    explicit OverdampedExcluded(double zeta)
        : InvalidArgument("damping factor zeta = " + std::to_string(zeta) +
                          " is not underdamped; only 0 < zeta < 1 (complex-conjugate poles, "
                          "oscillatory response) is supported, zeta >= 1 degenerates into two "
                          "real first-order poles with no overshoot"),
          zeta_(zeta) {}

    double zeta() const noexcept { return zeta_; }

private:
    double zeta_;
};

inline void validate(const CanonicalParams& c) {
    if (!(c.omega_n > 0.0) || !std::isfinite(c.omega_n))
        throw InvalidArgument("omega_n must be positive and finite");
    if (!(c.gain > 0.0) || !std::isfinite(c.gain))
        throw InvalidArgument("gain must be positive and finite");
    if (!(c.zeta > 0.0) || !std::isfinite(c.zeta))
        throw InvalidArgument("zeta must be positive and finite");
    if (c.zeta >= 1.0) throw OverdampedExcluded(c.zeta);
}

inline CanonicalParams canonical_from_physical(const PhysicalParams& p) {
    if (!(p.J > 0.0) || !(p.b > 0.0) || !(p.k > 0.0))
        throw InvalidArgument("J, b and k must all be strictly positive");
    CanonicalParams c;
    c.omega_n = std::sqrt(p.k / p.J);
    c.zeta = p.b / std::sqrt(4.0 * p.k * p.J);
    c.gain = 1.0 / p.k;
    if (c.zeta >= 1.0) throw OverdampedExcluded(c.zeta);
    return c;
}

/// Continuous poles -zeta wn ± j wn sqrt(1 - zeta^2); the first has positive imaginary part.
inline std::pair<std::complex<double>, std::complex<double>> poles(const CanonicalParams& c) {
    validate(c);
    const double re = -c.zeta * c.omega_n;
    const double im = c.omega_n * std::sqrt(1.0 - c.zeta * c.zeta);
    return {{re, im}, {re, -im}};
}

struct DiscreteStateSpace {
    Eigen::Matrix2d A;
    Eigen::Vector2d B;
    Eigen::RowVector2d C;
    double D = 0.0;
    double Ts = 0.0;

    double spectral_radius() const { return A.eigenvalues().cwiseAbs().maxCoeff(); }
};

/// Bilinear (Tustin) discretization in controllable canonical form.
///
/// With a = 2/Ts and M = a^2 + 2 a zeta wn + wn^2:
///   A = [[0, 1], [1 - 2(a^2 + wn^2)/M, 2(a^2 - wn^2)/M]],  B = [0, 1]^T,
///   C = gain * 4 a wn^2 / M^2 * [zeta wn, a + zeta wn],    D = gain * wn^2 / M.
inline DiscreteStateSpace tustin_discretize(const CanonicalParams& c, double Ts) {
    validate(c);
    if (!(Ts > 0.0) || !std::isfinite(Ts)) throw InvalidArgument("Ts must be positive");
    const double a = 2.0 / Ts;
    const double wn = c.omega_n;
    const double wn2 = wn * wn;
    const double zw = c.zeta * wn;
    const double M = a * a + 2.0 * a * zw + wn2;

    DiscreteStateSpace ss;
    ss.Ts = Ts;
    ss.A << 0.0, 1.0, 1.0 - 2.0 * (a * a + wn2) / M, 2.0 * (a * a - wn2) / M;
    ss.B << 0.0, 1.0;
    const double cscale = c.gain * 4.0 * a * wn2 / (M * M);
    ss.C << cscale * zw, cscale * (a + zw);
    ss.D = c.gain * wn2 / M;
    return ss;
}

// ---------------------------------------------------------------------------
// Input catalog

struct Step {
    double magnitude = 1.0;
};
struct Ramp {
    double slope = 1.0;
};
struct Sine {
    double amplitude = 1.0;
    double frequency_hz = 1.0;
};

using InputSignal = std::variant<Step, Ramp, Sine>;

inline void validate(const InputSignal& sig) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Step>) {
                if (!std::isfinite(s.magnitude) || s.magnitude == 0.0)
                    throw InvalidArgument("step magnitude must be finite and nonzero");
            } else if constexpr (std::is_same_v<T, Ramp>) {
                if (!std::isfinite(s.slope) || s.slope == 0.0)
                    throw InvalidArgument("ramp slope must be finite and nonzero");
            } else {
                if (!std::isfinite(s.amplitude) || s.amplitude == 0.0)
                    throw InvalidArgument("sine amplitude must be finite and nonzero");
                if (!(s.frequency_hz > 0.0) || !std::isfinite(s.frequency_hz))
                    throw InvalidArgument("sine frequency must be positive");
            }
        },
        sig);
}

namespace detail {
/// Shortest decimal text that round-trips.
inline std::string fmt_num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
}  // namespace detail

/// Canonical text form: "step:<m>", "ramp:<s>", "sine:<amplitude>:<hz>".
inline std::string to_string(const InputSignal& sig) {
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Step>)
                return "step:" + detail::fmt_num(s.magnitude);
            else if constexpr (std::is_same_v<T, Ramp>)
                return "ramp:" + detail::fmt_num(s.slope);
            else
                return "sine:" + detail::fmt_num(s.amplitude) + ":" + detail::fmt_num(s.frequency_hz);
        },
        sig);
}

inline InputSignal parse_input(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        auto next = text.find(':', pos);
        parts.push_back(text.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    auto num = [&](std::size_t i) {
        const std::string& s = parts.at(i);
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw InvalidArgument("bad number '" + s + "' in input spec '" + text + "'");
        return v;
    };
    InputSignal sig;
    if (parts[0] == "step" && parts.size() <= 2) {
        sig = Step{parts.size() == 2 ? num(1) : 1.0};
    } else if (parts[0] == "ramp" && parts.size() <= 2) {
        sig = Ramp{parts.size() == 2 ? num(1) : 1.0};
    } else if (parts[0] == "sine" && parts.size() == 3) {
        sig = Sine{num(1), num(2)};
    } else {
        throw InvalidArgument("unrecognised input spec '" + text +
                              "' (expected step:<m>, ramp:<slope> or sine:<amplitude>:<hz>)");
    }
    validate(sig);
    return sig;
}

inline bool operator==(const Step& a, const Step& b) { return a.magnitude == b.magnitude; }
inline bool operator==(const Ramp& a, const Ramp& b) { return a.slope == b.slope; }
inline bool operator==(const Sine& a, const Sine& b) {
    return a.amplitude == b.amplitude && a.frequency_hz == b.frequency_hz;
}

inline std::vector<double> generate_input(const InputSignal& sig, std::size_t n, double fs) {
    validate(sig);
    if (n == 0) throw InvalidArgument("sample count must be positive");
    if (!(fs > 0.0)) throw InvalidArgument("sampling frequency must be positive");
    std::vector<double> u(n);
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / fs;
                if constexpr (std::is_same_v<T, Step>)
                    u[i] = s.magnitude;
                else if constexpr (std::is_same_v<T, Ramp>)
                    u[i] = s.slope * t;
                else
                    u[i] = s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t);
            }
        },
        sig);
    return u;
}

/// Runs x_{k+1} = A x_k + B u_k, y_k = C x_k + D u_k from rest.
///
/// The canonical-form state is ~1e6 times larger than the output and both
/// poles sit within ~1e-3 of z = 1, so the recursion is carried in extended
/// precision; outputs are rounded to double.
inline std::vector<double> simulate(const DiscreteStateSpace& ss, std::span<const double> u) {
    if (u.empty()) throw InvalidArgument("input sequence is empty");
    using Wide = long double;
    const Wide a00 = ss.A(0, 0), a01 = ss.A(0, 1), a10 = ss.A(1, 0), a11 = ss.A(1, 1);
    const Wide b0 = ss.B(0), b1 = ss.B(1), c0 = ss.C(0), c1 = ss.C(1), d = ss.D;
    std::vector<double> y(u.size());
    Wide x0 = 0, x1 = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const Wide uk = u[k];
        y[k] = static_cast<double>(c0 * x0 + c1 * x1 + d * uk);
        const Wide n0 = a00 * x0 + a01 * x1 + b0 * uk;
        const Wide n1 = a10 * x0 + a11 * x1 + b1 * uk;
        x0 = n0;
        x1 = n1;
    }
    return y;
}

/// Closed-form continuous unit-step response (scaled by the DC gain).
inline double analytic_step_response(const CanonicalParams& c, double t) {
    validate(c);
    if (t < 0.0) throw InvalidArgument("t must be non-negative");
    const double root = std::sqrt(1.0 - c.zeta * c.zeta);
    const double wd = c.omega_n * root;
    const double envelope = std::exp(-c.zeta * c.omega_n * t) / root;
    return c.gain * (1.0 - envelope * std::sin(wd * t + std::atan(root / c.zeta)));
}

/// Adds i.i.d. N(0, sigma^2) noise drawn from a generator seeded with `seed`.
inline std::vector<double> add_measurement_noise(std::span<const double> y, double sigma,
                                                 std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("noise sigma must be non-negative");
    std::vector<double> out(y.begin(), y.end());
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out) v += noise(rng);
    return out;
}

/// One simulated input/output record.
struct Trajectory {
    std::vector<double> u;
    std::vector<double> y;
    double fs = 1000.0;
    InputSignal input = Step{1.0};
    double zeta = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return u.size(); }
};

/// Generates `seconds * fs + 1` samples of the given input, simulates the
/// plant (wn, zeta) and corrupts the output with measurement noise.
inline Trajectory make_trajectory(const InputSignal& input, const CanonicalParams& plant,
                                  double seconds, double fs, double noise_sigma,
                                  std::uint64_t seed) {
    if (!(seconds > 0.0)) throw InvalidArgument("duration must be positive");
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs)) + 1;
    Trajectory tr;
    tr.fs = fs;
    tr.input = input;
    tr.zeta = plant.zeta;
    tr.noise_sigma = noise_sigma;
    tr.seed = seed;
    tr.u = generate_input(input, n, fs);
    const auto ss = tustin_discretize(plant, 1.0 / fs);
    const auto clean = simulate(ss, tr.u);
    tr.y = add_measurement_noise(clean, noise_sigma, seed);
    return tr;
}

}  // namespace dampid::sim
