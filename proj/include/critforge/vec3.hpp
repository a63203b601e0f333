#pragma once

#include <cmath>

namespace critforge {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

// Distance from p to the segment [a, b].
inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0)
        return norm(p - a);
    double t = dot(p - a, ab) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return norm(p - (a + ab * t));
}

// Distance between segments [a1,b1] and [a2,b2].
inline double segment_segment_distance(const Vec3& a1, const Vec3& b1,
                                        const Vec3& a2, const Vec3& b2) {
    const Vec3 d1 = b1 - a1, d2 = b2 - a2, r = a1 - a2;
    const double A = dot(d1, d1), E = dot(d2, d2), F = dot(d2, r);
    double s = 0.0, t = 0.0;
    if (A <= 1e-30 && E <= 1e-30)
        return norm(r);
    if (A <= 1e-30) {
        t = F / E;
    } else {
        const double C = dot(d1, r);
        if (E <= 1e-30) {
            s = -C / A;
        } else {
            const double B = dot(d1, d2);
            const double den = A * E - B * B;
            s = den > 1e-30 ? (B * F - C * E) / den : 0.0;
            s = s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
            t = (B * s + F) / E;
            if (t < 0.0) {
                t = 0.0;
                s = -C / A;
            } else if (t > 1.0) {
                t = 1.0;
                s = (B - C) / A;
            }
            s = s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
            return norm((a1 + d1 * s) - (a2 + d2 * t));
        }
    }
    s = s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return norm((a1 + d1 * s) - (a2 + d2 * t));
}

}  // namespace critforge
