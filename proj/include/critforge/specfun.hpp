#pragma once

// Modified Bessel function I0 with first and second derivatives, double
// precision, arguments x >= 0. Power series below the crossover, standard
// large-argument asymptotic expansion above it. Very large arguments
// overflow to +inf, which downstream coefficient formulas absorb as 1/inf.

#include <cmath>
#include <stdexcept>

#include "numerics.hpp"

namespace critforge {

namespace detail {

inline constexpr double kBesselCrossover = 15.0;

inline double i0_series(double x) {
    const double q = 0.25 * x * x;
    KahanSum<double> s;
    s.add(1.0);
    double term = 1.0;
    for (int m = 1; m < 500; ++m) {
        term *= q / (static_cast<double>(m) * static_cast<double>(m));
        s.add(term);
        if (term < 1e-18 * s.value())
            break;
    }
    return s.value();
}

inline double i1_series(double x) {
    const double q = 0.25 * x * x;
    KahanSum<double> s;
    double term = 0.5 * x;
    s.add(term);
    for (int m = 1; m < 500; ++m) {
        term *= q / (static_cast<double>(m) * static_cast<double>(m + 1));
        s.add(term);
        if (term < 1e-18 * s.value())
            break;
    }
    return s.value();
}

// I_nu(x) ~ e^x/sqrt(2 pi x) * sum_k s_k with s_0 = 1 and
// s_k = s_{k-1} * (-1) * (4 nu^2 - (2k-1)^2) / (8 k x); truncated at the
// smallest term (the series is asymptotic, not convergent).
inline double i_asymp(double x, double four_nu_sq) {
    KahanSum<double> s;
    s.add(1.0);
    double term = 1.0;
    double prev_mag = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= -(four_nu_sq - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * k * x);
        const double mag = std::fabs(term);
        if (mag >= prev_mag)
            break;
        s.add(term);
        prev_mag = mag;
        if (mag < 1e-18)
            break;
    }
    return std::exp(x) / std::sqrt(2.0 * M_PI * x) * s.value();
}

inline double i0_asymp(double x) { return i_asymp(x, 0.0); }
inline double i1_asymp(double x) { return i_asymp(x, 4.0); }

inline void check_arg(double x) {
    if (!std::isfinite(x) || x < 0.0)
        throw std::domain_error("bessel: argument must be finite and >= 0");
}

// Internal only; callers needing d1 go through bessel_i0_eval.
inline double bessel_i1(double x) {
    check_arg(x);
    return x <= kBesselCrossover ? i1_series(x) : i1_asymp(x);
}

// Termwise-differentiated power series for I0''. Term T_1 = 1/2 at x = 0.
inline double i0_d2_series(double x) {
    const double q = 0.25 * x * x;
    KahanSum<double> s;
    double term = 0.5;
    s.add(term);
    for (int m = 2; m < 500; ++m) {
        // T_m = (2m)(2m-1) x^{2m-2} / (4^m (m!)^2)
        term *= q * (2.0 * m) * (2.0 * m - 1.0) /
                (static_cast<double>(m) * static_cast<double>(m) *
                 (2.0 * m - 2.0) * (2.0 * m - 3.0));
        s.add(term);
        if (term < 1e-18 * s.value())
            break;
    }
    return s.value();
}

}  // namespace detail

struct BesselEval {
    double value;
    double d1;
    double d2;
};

inline double bessel_i0(double x) {
    detail::check_arg(x);
    return x <= detail::kBesselCrossover ? detail::i0_series(x)
                                         : detail::i0_asymp(x);
}

inline double bessel_i0_d2(double x) {
    detail::check_arg(x);
    if (x <= detail::kBesselCrossover)
        return detail::i0_d2_series(x);
    return bessel_i0(x) - detail::bessel_i1(x) / x;
}

inline BesselEval bessel_i0_eval(double x) {
    return BesselEval{bessel_i0(x), detail::bessel_i1(x), bessel_i0_d2(x)};
}

}  // namespace critforge
