#pragma once

// Reference computations used only by the tests. Each one takes a different
// route from the library code it checks.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

using Poly = std::vector<long double>;  // coefficients, highest power first

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, 0.0L);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

inline Poly poly_add(Poly a, const Poly& b) {
    if (a.size() < b.size()) a.insert(a.begin(), b.size() - a.size(), 0.0L);
    const auto off = a.size() - b.size();
    for (std::size_t i = 0; i < b.size(); ++i) a[off + i] += b[i];
    return a;
}

inline Poly poly_scale(Poly a, long double s) {
    for (auto& v : a) v *= s;
    return a;
}

struct CanonicalRealization {
    long double A10, A11, C0, C1, D;
    Poly num, den;  // monic denominator, degree 2
};

/// Substitutes s = a (z - 1) / (z + 1) into gain wn^2 / (s^2 + 2 zeta wn s + wn^2),
/// multiplies through by (z + 1)^2, normalizes to a monic denominator and
/// reads off the controllable-canonical realization
///   A = [[0, 1], [-d0, -d1]], B = [0, 1]^T, C = [n0 - d0 n2, n1 - d1 n2], D = n2.
inline CanonicalRealization bilinear_second_order(long double wn, long double zeta, long double gain,
                                                  long double Ts) {
    const long double a = 2.0L / Ts;
    const Poly zm1{1.0L, -1.0L}, zp1{1.0L, 1.0L};
    const Poly s2 = poly_scale(poly_mul(zm1, zm1), a * a);           // s^2 (z+1)^2
    const Poly s1 = poly_scale(poly_mul(zm1, zp1), 2.0L * zeta * wn * a);  // 2 zeta wn s (z+1)^2
    const Poly s0 = poly_scale(poly_mul(zp1, zp1), wn * wn);         // wn^2 (z+1)^2
    Poly den = poly_add(poly_add(s2, s1), s0);
    Poly num = poly_scale(poly_mul(zp1, zp1), gain * wn * wn);
    const long double lead = den[0];
    den = poly_scale(den, 1.0L / lead);
    num = poly_scale(num, 1.0L / lead);
    CanonicalRealization r;
    r.num = num;
    r.den = den;
    const long double n2 = num[0], n1 = num[1], n0 = num[2];
    const long double d1 = den[1], d0 = den[2];
    r.A10 = -d0;
    r.A11 = -d1;
    r.C0 = n0 - d0 * n2;
    r.C1 = n1 - d1 * n2;
    r.D = n2;
    return r;
}

inline std::complex<long double> poly_eval(const Poly& p, std::complex<long double> z) {
    std::complex<long double> acc = 0.0L;
    for (auto c : p) acc = acc * z + c;
    return acc;
}

/// Direct per-term DFT of x[off .. off + L) at frequency f (Hz), each term an
/// independent std::polar evaluation, accumulated in long double.
inline std::complex<double> dft_bin(std::span<const double> x, std::size_t off, std::span<const double> window,
                                    double f, double fs, bool absolute_time) {
    std::complex<long double> acc = 0.0L;
    for (std::size_t k = 0; k < window.size(); ++k) {
        const long double n = static_cast<long double>(absolute_time ? off + k : k);
        const long double arg = -2.0L * std::numbers::pi_v<long double> * f * n / fs;
        acc += static_cast<long double>(x[off + k]) * static_cast<long double>(window[k]) *
               std::polar(1.0L, arg);
    }
    return {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
}

inline std::vector<double> hann_periodic(std::size_t L) {
    std::vector<double> g(L);
    for (std::size_t k = 0; k < L; ++k)
        g[k] = std::pow(std::sin(std::numbers::pi * static_cast<double>(k) / static_cast<double>(L)), 2.0);
    return g;
}

}  // namespace oracle
