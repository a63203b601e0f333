#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace critforge {

// Compensated accumulator; rounding error stays O(eps) independent of the
// number of terms. Requires strict FP semantics (no -ffast-math).
template <class T = double>
struct KahanSum {
    T sum = T(0);
    T comp = T(0);

    void add(T v) {
        T y = v - comp;
        T t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    T value() const { return sum; }
};

inline double kahan_dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("kahan_dot: size mismatch");
    KahanSum<double> s;
    for (std::size_t i = 0; i < a.size(); ++i)
        s.add(a[i] * b[i]);
    return s.value();
}

// Least-squares slope of log(y) against log(x). All entries must be positive.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("loglog_slope: need >= 2 paired samples");
    const std::size_t n = x.size();
    KahanSum<double> sx, sy, sxx, sxy;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::domain_error("loglog_slope: samples must be positive");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx.add(lx);
        sy.add(ly);
        sxx.add(lx * lx);
        sxy.add(lx * ly);
    }
    const double den = n * sxx.value() - sx.value() * sx.value();
    return (n * sxy.value() - sx.value() * sy.value()) / den;
}

inline void require(bool cond, const char* msg) {
    if (!cond)
        throw std::domain_error(msg);
}

}  // namespace critforge
