#pragma once

// Certification of an interior critical point from a discrete field: sample
// the gradient on a sphere enclosing the candidate, check the reflected-field
// sign condition, compute the Brouwer degree from the sampled directions, and
// localize the zero by recursive octant subdivision.
//
// The degree is the signed area of the image of the probe sphere under
// F/|F|, accumulated per triangle with the Van Oosterom-Strackee solid-angle
// formula.  It is integer-valued whenever F does not vanish on the sphere;
// the accumulated sum is snapped to the nearest integer and rejected if it
// is not within 0.05 of one.

#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <critforge/grid.hpp>
#include <critforge/numerics.hpp>
#include <critforge/vec3.hpp>

namespace critforge {

struct SphereProbe {
    Vec3 center{0.0, 0.0, 0.0};
    double radius = 0.0;
    int refinement_level = 0;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

using Reflection = std::array<double, 3>;
inline constexpr Reflection kAxisReflection{-1.0, 1.0, 1.0};

struct DegreeReport {
    double min_normal_dot = 0.0;
    int degree = 0;
    bool zero_found = false;
    Vec3 zero_point{0.0, 0.0, 0.0};
    double min_field_norm_on_sphere = 0.0;
};

namespace detail {

// Unit icosphere at a given subdivision level, outward-oriented faces.
struct UnitSphere {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
};

inline const UnitSphere& unit_sphere(int level) {
    static std::map<int, UnitSphere> cache;
    auto it = cache.find(level);
    if (it != cache.end())
        return it->second;

    UnitSphere s;
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    const double vs[12][3] = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                              {0, -1, p}, {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                              {p, 0, -1}, {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
    for (const auto& v : vs)
        s.vertices.push_back(Vec3{v[0], v[1], v[2]} / norm(Vec3{v[0], v[1], v[2]}));
    s.triangles = {{0, 11, 5}, {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                   {1, 5, 9},  {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const std::pair<int, int> key = a < b ? std::pair{a, b} : std::pair{b, a};
            auto mit = midpoint.find(key);
            if (mit != midpoint.end())
                return mit->second;
            Vec3 m = s.vertices[static_cast<std::size_t>(a)] +
                     s.vertices[static_cast<std::size_t>(b)];
            m = m / norm(m);
            const int idx = static_cast<int>(s.vertices.size());
            s.vertices.push_back(m);
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(s.triangles.size() * 4);
        for (const auto& t : s.triangles) {
            const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        s.triangles = std::move(next);
    }

    for (auto& t : s.triangles) {
        const Vec3& a = s.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = s.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = s.vertices[static_cast<std::size_t>(t[2])];
        if (dot(cross(b - a, c - a), a + b + c) < 0.0)
            std::swap(t[1], t[2]);
    }
    return cache.emplace(level, std::move(s)).first->second;
}

}  // namespace detail

inline SphereProbe make_probe(const Vec3& center, double radius, int refinement_level = 4) {
    require(radius > 0.0, "probe radius must be positive");
    require(refinement_level >= 0 && refinement_level <= 7, "probe refinement out of range");
    const detail::UnitSphere& s = detail::unit_sphere(refinement_level);
    SphereProbe probe;
    probe.center = center;
    probe.radius = radius;
    probe.refinement_level = refinement_level;
    probe.vertices.reserve(s.vertices.size());
    for (const Vec3& v : s.vertices)
        probe.vertices.push_back(center + v * radius);
    probe.triangles = s.triangles;
    return probe;
}

inline double probe_area(const SphereProbe& probe) {
    KahanSum<double> area;
    for (const auto& t : probe.triangles) {
        const Vec3 a = probe.vertices[static_cast<std::size_t>(t[0])];
        const Vec3 b = probe.vertices[static_cast<std::size_t>(t[1])];
        const Vec3 c = probe.vertices[static_cast<std::size_t>(t[2])];
        area.add(0.5 * norm(cross(b - a, c - a)));
    }
    return area.value();
}

namespace detail {

inline double trilinear(const ScalarField& f, const Vec3& p) {
    const Grid3& g = f.grid;
    const double qx = (p.x - g.origin.x) / g.spacing_h - 0.5;
    const double qy = (p.y - g.origin.y) / g.spacing_h - 0.5;
    const double qz = (p.z - g.origin.z) / g.spacing_h - 0.5;
    const int i = static_cast<int>(std::floor(qx));
    const int j = static_cast<int>(std::floor(qy));
    const int k = static_cast<int>(std::floor(qz));
    require(i >= 0 && i + 1 < g.nx && j >= 0 && j + 1 < g.ny && k >= 0 && k + 1 < g.nz,
            "interpolation point outside the cell-center hull");
    const double fx = qx - i, fy = qy - j, fz = qz - k;
    double v = 0.0;
    for (int dk = 0; dk <= 1; ++dk)
        for (int dj = 0; dj <= 1; ++dj)
            for (int di = 0; di <= 1; ++di) {
                const double w = (di ? fx : 1.0 - fx) * (dj ? fy : 1.0 - fy) * (dk ? fz : 1.0 - fz);
                v += w * f.at(g.cell_index(i + di, j + dj, k + dk));
            }
    return v;
}

}  // namespace detail

// Central difference of the trilinear interpolant with step h.  The aligned
// offsets land at the same fractional cell coordinates on both sides, so the
// interpolation error cancels and quadratic fields differentiate exactly.
inline Vec3 sample_gradient(const ScalarField& f, const Vec3& p) {
    const double h = f.grid.spacing_h;
    const Vec3 ex{h, 0.0, 0.0}, ey{0.0, h, 0.0}, ez{0.0, 0.0, h};
    return Vec3{(detail::trilinear(f, p + ex) - detail::trilinear(f, p - ex)) / (2.0 * h),
                (detail::trilinear(f, p + ey) - detail::trilinear(f, p - ey)) / (2.0 * h),
                (detail::trilinear(f, p + ez) - detail::trilinear(f, p - ez)) / (2.0 * h)};
}

namespace detail {

inline void require_probe_margin(const Grid3& g, const Vec3& center, double radius) {
    const double margin = radius + 2.0 * g.spacing_h;
    const Vec3 lo = g.origin;
    const Vec3 hi{g.origin.x + g.spacing_h * g.nx, g.origin.y + g.spacing_h * g.ny,
                  g.origin.z + g.spacing_h * g.nz};
    require(center.x - lo.x >= margin && hi.x - center.x >= margin && center.y - lo.y >= margin &&
                hi.y - center.y >= margin && center.z - lo.z >= margin &&
                hi.z - center.z >= margin,
            "probe sphere too close to the grid boundary");
}

inline Vec3 reflect(const Reflection& r, const Vec3& v) {
    return Vec3{r[0] * v.x, r[1] * v.y, r[2] * v.z};
}

}  // namespace detail

// Minimum over probe vertices of nu . (R grad u), nu the outward unit normal.
// Strict positivity is the certificate that the reflected gradient is
// outward-pointing everywhere on the sphere.
inline double sign_condition(const ScalarField& u, const SphereProbe& probe,
                             const Reflection& reflection = kAxisReflection) {
    detail::require_probe_margin(u.grid, probe.center, probe.radius);
    double best = INFINITY;
    for (const Vec3& v : probe.vertices) {
        const Vec3 nu = (v - probe.center) / probe.radius;
        best = std::min(best, dot(nu, detail::reflect(reflection, sample_gradient(u, v))));
    }
    return best;
}

// Brouwer degree of the field over the probe sphere.  `field` is any
// callable Vec3 -> Vec3; it must not vanish at probe vertices.
template <class F>
int brouwer_degree(const SphereProbe& probe, F&& field) {
    std::vector<Vec3> s(probe.vertices.size());
    double min_norm = INFINITY;
    for (std::size_t i = 0; i < probe.vertices.size(); ++i) {
        s[i] = field(probe.vertices[i]);
        min_norm = std::min(min_norm, norm(s[i]));
    }
    require(min_norm > 0.0, "field vanishes at a probe vertex; degree undefined");

    KahanSum<double> omega;
    for (const auto& t : probe.triangles) {
        const Vec3& a = s[static_cast<std::size_t>(t[0])];
        const Vec3& b = s[static_cast<std::size_t>(t[1])];
        const Vec3& c = s[static_cast<std::size_t>(t[2])];
        const double na = norm(a), nb = norm(b), nc = norm(c);
        const double num = dot(a, cross(b, c));
        const double den = na * nb * nc + dot(a, b) * nc + dot(b, c) * na + dot(c, a) * nb;
        omega.add(2.0 * std::atan2(num, den));
    }
    const double d = omega.value() / (4.0 * std::acos(-1.0));
    const double snapped = std::round(d);
    require(std::fabs(d - snapped) <= 0.05,
            "degree sum is not close to an integer; refine the probe");
    return static_cast<int>(snapped);
}

// Localize a zero of `field` inside the cube {center +- half_side} by
// recursive octant subdivision: an octant survives if the degree over a
// sphere circumscribing it (5% slack) is nonzero.  Stops once the cell
// diameter drops below `tol` and returns the surviving center with the
// smallest field norm.
template <class F>
Vec3 locate_zero(F&& field, const Vec3& center, double half_side, double tol) {
    require(half_side > 0.0 && tol > 0.0, "zero search needs positive extents");
    struct Box {
        Vec3 c;
        double half;
    };
    std::vector<Box> boxes{{center, half_side}};
    Vec3 best_point = center;
    double best_norm = norm(field(center));

    const auto fail = [&](const char* stage, double diameter) {
        std::ostringstream os;
        os << "zero localization failed (" << stage << ") at diameter " << diameter
           << "; smallest field norm seen " << best_norm << " at (" << best_point.x << ", "
           << best_point.y << ", " << best_point.z << ")";
        throw std::runtime_error(os.str());
    };

    while (2.0 * boxes.front().half > tol) {
        std::vector<Box> kept;
        for (const Box& box : boxes) {
            const double ch = 0.5 * box.half;
            for (int oct = 0; oct < 8; ++oct) {
                const Vec3 cc{box.c.x + (oct & 1 ? ch : -ch), box.c.y + (oct & 2 ? ch : -ch),
                              box.c.z + (oct & 4 ? ch : -ch)};
                const double fn = norm(field(cc));
                if (fn < best_norm) {
                    best_norm = fn;
                    best_point = cc;
                }
                const SphereProbe probe = make_probe(cc, 1.05 * std::sqrt(3.0) * ch, 2);
                if (brouwer_degree(probe, field) != 0)
                    kept.push_back({cc, ch});
            }
        }
        if (kept.empty())
            fail("no octant retained", 2.0 * boxes.front().half);
        if (kept.size() > 64)
            fail("ambiguous localization", 2.0 * boxes.front().half);
        boxes = std::move(kept);
    }

    const Box* best_box = &boxes.front();
    double bn = INFINITY;
    for (const Box& box : boxes) {
        const double fn = norm(field(box.c));
        if (fn < bn) {
            bn = fn;
            best_box = &box;
        }
    }
    return best_box->c;
}

// Full certificate for a discrete solution: sign condition, degree of the
// reflected gradient, and (when the degree is nonzero) the located zero.
inline DegreeReport certify_critical_point(const ScalarField& u, const SphereProbe& probe,
                                           const Reflection& reflection = kAxisReflection,
                                           double locate_tol = 1e-3) {
    detail::require_probe_margin(u.grid, probe.center, probe.radius);
    DegreeReport report;
    report.min_normal_dot = INFINITY;
    double min_norm = INFINITY;
    const auto field = [&](const Vec3& p) {
        return detail::reflect(reflection, sample_gradient(u, p));
    };
    for (const Vec3& v : probe.vertices) {
        const Vec3 g = field(v);
        const Vec3 nu = (v - probe.center) / probe.radius;
        report.min_normal_dot = std::min(report.min_normal_dot, dot(nu, g));
        min_norm = std::min(min_norm, norm(g));
    }
    report.min_field_norm_on_sphere = min_norm;
    report.degree = brouwer_degree(probe, field);
    if (report.degree != 0) {
        report.zero_point = locate_zero(field, probe.center, probe.radius, locate_tol);
        report.zero_found = true;
    }
    return report;
}

inline nlohmann::json degree_report_json(const DegreeReport& report, int refinement_level) {
    nlohmann::json j;
    j["min_normal_dot"] = report.min_normal_dot;
    j["degree"] = report.degree;
    j["min_field_norm_on_sphere"] = report.min_field_norm_on_sphere;
    j["refinement_level"] = refinement_level;
    if (report.zero_found)
        j["zero_point"] = {report.zero_point.x, report.zero_point.y, report.zero_point.z};
    else
        j["zero_point"] = nullptr;
    return j;
}

}  // namespace critforge
