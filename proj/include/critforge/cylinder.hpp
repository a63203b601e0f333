#pragma once

// Closed-form interior solution for the unit-conductivity cylinder
//   {x2^2 + x3^2 < a^2, |x1| < H/2}
// with boundary value 1 on the two disks and 2 on the lateral wall:
//
//   u*(r, z) = 1 + sum_k u_k cos(mu_k z) I0(mu_k r),   mu_k = (2k+1) pi / H,
//   u_k = 4 (-1)^k / (pi (2k+1) I0(mu_k a)).
//
// Convention fixed throughout the library: the cylinder axis is x1 (called z
// in the (r,z) meridian plane), and (x2,x3) span the radial directions. The
// solution has a saddle at the origin with Hessian Diag(-2*lambda, lambda,
// lambda), lambda > 0.

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "specfun.hpp"
#include "vec3.hpp"

namespace critforge {

struct CylinderSpec {
    double height_H = 4.0;  // z ranges over (-H/2, H/2)
    double radius_a = 1.0;
    int truncation_K = 200;
};

inline void validate(const CylinderSpec& spec) {
    if (!(std::isfinite(spec.height_H) && spec.height_H > 0.0))
        throw std::domain_error("CylinderSpec: H must be finite and > 0");
    if (!(std::isfinite(spec.radius_a) && spec.radius_a > 0.0))
        throw std::domain_error("CylinderSpec: a must be finite and > 0");
    if (spec.truncation_K < 1)
        throw std::domain_error("CylinderSpec: K must be >= 1");
}

struct SeriesSolution {
    CylinderSpec spec;
    std::vector<double> coeffs;  // u_k; may be shorter than K if the tail underflows
    double offset = 1.0;
};

struct SaddleReport {
    double lambda = 0.0;
    // (d^2/dx1^2, d^2/dx2^2, d^2/dx3^2) of u* at the origin
    std::array<double, 3> hessian_diag{};
    double trace_residual = 0.0;
    // lambda > 0 is verified numerically per (H, a), not assumed.
    bool saddle_certified = false;
};

struct SweepRow {
    double H;
    double a;
    int K;
    double lambda;
    double trace_residual;
};

struct GradSample {
    Vec3 point;
    Vec3 grad;
    double normal_dot;  // nu . (R grad), R = Diag(-1,1,1), nu = point / |point|
};

struct SphereSamples {
    std::vector<GradSample> samples;
    double min_normal_dot = 0.0;
};

inline double mode_wavenumber(const CylinderSpec& spec, int k) {
    return (2.0 * k + 1.0) * M_PI / spec.height_H;
}

// Coefficient u_k straight from the formula; 1/inf underflows cleanly to +0
// when I0 overflows for very large mode arguments.
inline double series_coefficient(const CylinderSpec& spec, int k) {
    const double odd = 2.0 * k + 1.0;
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    return 4.0 * sign / (M_PI * odd * bessel_i0(mode_wavenumber(spec, k) * spec.radius_a));
}

inline SeriesSolution coefficients(const CylinderSpec& spec) {
    validate(spec);
    SeriesSolution s;
    s.spec = spec;
    s.offset = 1.0;
    s.coeffs.reserve(spec.truncation_K);
    for (int k = 0; k < spec.truncation_K; ++k) {
        const double uk = series_coefficient(spec, k);
        if (uk == 0.0)
            break;  // tail below double underflow contributes nothing
        if (!s.coeffs.empty() && !(std::fabs(uk) < std::fabs(s.coeffs.back())))
            throw std::logic_error("coefficients: |u_k| failed to decrease");
        if ((k % 2 == 0) != (uk > 0.0))
            throw std::logic_error("coefficients: sign alternation violated");
        s.coeffs.push_back(uk);
    }
    return s;
}

namespace detail {

// cos((2k+1) pi t) with the structural zero at the disks (t = z/H = +-1/2)
// made exact, matching the termwise vanishing of the series there.
inline double axial_factor(int k, double t) {
    if (t == 0.5 || t == -0.5)
        return 0.0;
    return std::cos((2.0 * k + 1.0) * M_PI * t);
}

inline void check_inside(const CylinderSpec& spec, double r, double z) {
    if (!(r >= 0.0 && r <= spec.radius_a) || !(std::fabs(z) <= 0.5 * spec.height_H))
        throw std::domain_error("eval: point outside the closed cylinder");
}

// I1(y)/y, finite at y = 0 (limit 1/2).
inline double i1_over_x(double y) {
    if (y < 1e-8)
        return 0.5 + y * y / 16.0;
    return bessel_i1(y) / y;
}

}  // namespace detail

inline double eval_u(const SeriesSolution& s, double r, double z) {
    detail::check_inside(s.spec, r, z);
    const double t = z / s.spec.height_H;
    KahanSum<double> sum;
    for (int k = 0; k < static_cast<int>(s.coeffs.size()); ++k) {
        const double mu = mode_wavenumber(s.spec, k);
        sum.add(s.coeffs[k] * detail::axial_factor(k, t) * bessel_i0(mu * r));
    }
    return s.offset + sum.value();
}

// Magnitude of the first omitted term: for interior radii the alternating,
// geometrically decaying structure makes this a tail bound.
inline double eval_tail_bound(const SeriesSolution& s, double r, double z) {
    detail::check_inside(s.spec, r, z);
    const int k = static_cast<int>(s.coeffs.size());
    if (k < s.spec.truncation_K)
        return 0.0;  // series already exhausted double precision
    const double uk = series_coefficient(s.spec, k);
    return std::fabs(uk) * bessel_i0(mode_wavenumber(s.spec, k) * r);
}

// Gradient of u* at a Cartesian point, by termwise differentiation.
inline Vec3 eval_gradient(const SeriesSolution& s, const Vec3& p) {
    const double r = std::hypot(p.y, p.z);
    detail::check_inside(s.spec, r, p.x);
    const double t = p.x / s.spec.height_H;
    KahanSum<double> d_axis;       // d/dx1
    KahanSum<double> radial_over_r;  // (1/r) du/dr, finite on the axis
    for (int k = 0; k < static_cast<int>(s.coeffs.size()); ++k) {
        const double mu = mode_wavenumber(s.spec, k);
        const double uk = s.coeffs[k];
        d_axis.add(-uk * mu * std::sin((2.0 * k + 1.0) * M_PI * t) * bessel_i0(mu * r));
        radial_over_r.add(uk * mu * mu * detail::axial_factor(k, t) *
                          detail::i1_over_x(mu * r));
    }
    return Vec3{d_axis.value(), radial_over_r.value() * p.y, radial_over_r.value() * p.z};
}

inline SaddleReport hessian_at_origin(const SeriesSolution& s) {
    const CylinderSpec& spec = s.spec;
    // Axial second derivative by its dedicated series
    //   -(4 pi / H^2) sum_k (-1)^k (2k+1) / I0((2k+1) pi a / H).
    KahanSum<double> zsum;
    double last_rel = 1.0;
    for (int k = 0; k < spec.truncation_K; ++k) {
        const double odd = 2.0 * k + 1.0;
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        const double denom = bessel_i0(mode_wavenumber(spec, k) * spec.radius_a);
        const double term = sign * odd / denom;
        if (term == 0.0) {
            last_rel = 0.0;
            break;
        }
        zsum.add(term);
        last_rel = std::fabs(term) / std::max(std::fabs(zsum.value()), 1e-300);
    }
    if (last_rel > 1e-10)
        throw std::runtime_error(
            "hessian_at_origin: series not stabilized to 1e-10 by k=K, K=" +
            std::to_string(spec.truncation_K));
    const double d2_axis = -(4.0 * M_PI / (spec.height_H * spec.height_H)) * zsum.value();

    // Radial second derivative from the stored coefficients, I0''(0) = 1/2.
    KahanSum<double> rsum;
    for (int k = 0; k < static_cast<int>(s.coeffs.size()); ++k) {
        const double mu = mode_wavenumber(spec, k);
        rsum.add(s.coeffs[k] * mu * mu);
    }
    const double lambda = 0.5 * rsum.value();

    SaddleReport rep;
    rep.lambda = lambda;
    rep.hessian_diag = {d2_axis, lambda, lambda};
    rep.trace_residual = std::fabs(d2_axis + 2.0 * lambda);
    rep.saddle_certified = lambda > 0.0;
    return rep;
}

inline std::vector<SweepRow> lambda_sweep(const std::vector<double>& H_values,
                                          double a, int K) {
    std::vector<SweepRow> rows;
    rows.reserve(H_values.size());
    for (double H : H_values) {
        const CylinderSpec spec{H, a, K};
        const SaddleReport rep = hessian_at_origin(coefficients(spec));
        rows.push_back(SweepRow{H, a, K, rep.lambda, rep.trace_residual});
    }
    return rows;
}

inline std::string lambda_sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "H,a,K,lambda,trace_residual\r\n";
    char line[160];
    for (const SweepRow& r : rows) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%d,%.17g,%.17g\r\n",
                      r.H, r.a, r.K, r.lambda, r.trace_residual);
        out += line;
    }
    return out;
}

// Gradient samples on the sphere of given radius about the origin, Fibonacci
// lattice, together with min nu.(R grad) over the samples.
inline SphereSamples gradient_on_cylinder_sphere(const SeriesSolution& s,
                                                 double ball_radius,
                                                 int n_samples) {
    if (!(ball_radius > 0.0) ||
        ball_radius >= std::min(s.spec.radius_a, 0.5 * s.spec.height_H))
        throw std::domain_error("gradient_on_cylinder_sphere: ball exits cylinder");
    if (n_samples < 1)
        throw std::domain_error("gradient_on_cylinder_sphere: need >= 1 sample");

    SphereSamples out;
    out.samples.reserve(n_samples);
    out.min_normal_dot = INFINITY;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n_samples; ++i) {
        const double c = 1.0 - 2.0 * (i + 0.5) / n_samples;  // axis component
        const double rho = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double phi = golden * i;
        const Vec3 nu{c, rho * std::cos(phi), rho * std::sin(phi)};
        const Vec3 p = nu * ball_radius;
        const Vec3 g = eval_gradient(s, p);
        const Vec3 Rg{-g.x, g.y, g.z};
        const double nd = dot(nu, Rg);
        out.samples.push_back(GradSample{p, g, nd});
        if (nd < out.min_normal_dot)
            out.min_normal_dot = nd;
    }
    return out;
}

}  // namespace critforge
