#pragma once

// Structured 3D grid with cell-centered fields.
//
// Cells are addressed either by (i,j,k) or by the flat index
// i + nx*(j + ny*k).  A face is addressed by the owning cell plus an axis
// (0=x, 1=y, 2=z) and a side (-1 or +1); the packed key is
// cell*6 + axis*2 + (side>0).  The same geometric interior face therefore has
// two keys, one per adjacent cell; the key fixes an orientation (normal
// pointing from the owning cell through the face), which flux routines rely
// on.  Boundary faces have exactly one key.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <critforge/numerics.hpp>
#include <critforge/vec3.hpp>

namespace critforge {

struct Grid3 {
    Vec3 origin{0.0, 0.0, 0.0};
    double spacing_h = 1.0;
    int nx = 2;
    int ny = 2;
    int nz = 2;

    void validate() const {
        require(spacing_h > 0.0 && std::isfinite(spacing_h), "grid spacing must be positive");
        require(nx >= 2 && ny >= 2 && nz >= 2, "grid dims must be at least 2");
    }

    std::int64_t n_cells() const {
        return static_cast<std::int64_t>(nx) * ny * nz;
    }
    std::int64_t cell_index(int i, int j, int k) const {
        return i + static_cast<std::int64_t>(nx) * (j + static_cast<std::int64_t>(ny) * k);
    }
    void cell_coords(std::int64_t cell, int& i, int& j, int& k) const {
        i = static_cast<int>(cell % nx);
        j = static_cast<int>((cell / nx) % ny);
        k = static_cast<int>(cell / (static_cast<std::int64_t>(nx) * ny));
    }
    Vec3 cell_center(std::int64_t cell) const {
        int i, j, k;
        cell_coords(cell, i, j, k);
        return {origin.x + (i + 0.5) * spacing_h, origin.y + (j + 0.5) * spacing_h,
                origin.z + (k + 0.5) * spacing_h};
    }
    // Neighbor across (axis, side), or -1 when that face lies on the box wall.
    std::int64_t neighbor(std::int64_t cell, int axis, int side) const {
        int c[3];
        cell_coords(cell, c[0], c[1], c[2]);
        c[axis] += side;
        const int lim = axis == 0 ? nx : (axis == 1 ? ny : nz);
        if (c[axis] < 0 || c[axis] >= lim)
            return -1;
        return cell_index(c[0], c[1], c[2]);
    }
};

inline std::int64_t face_key(std::int64_t cell, int axis, int side) {
    return cell * 6 + axis * 2 + (side > 0 ? 1 : 0);
}
inline std::int64_t face_cell(std::int64_t key) {
    return key / 6;
}
inline int face_axis(std::int64_t key) {
    return static_cast<int>((key % 6) / 2);
}
inline int face_side(std::int64_t key) {
    return (key % 2) ? 1 : -1;
}
// Center of the face in space.
inline Vec3 face_center(const Grid3& g, std::int64_t key) {
    Vec3 p = g.cell_center(face_cell(key));
    const double off = 0.5 * g.spacing_h * face_side(key);
    switch (face_axis(key)) {
        case 0: p.x += off; break;
        case 1: p.y += off; break;
        default: p.z += off; break;
    }
    return p;
}
// Key of the same geometric face as seen from the neighboring cell.
inline std::int64_t opposite_face(const Grid3& g, std::int64_t key) {
    const std::int64_t nbr = g.neighbor(face_cell(key), face_axis(key), face_side(key));
    require(nbr >= 0, "boundary face has no opposite key");
    return face_key(nbr, face_axis(key), -face_side(key));
}
inline bool is_boundary_face(const Grid3& g, std::int64_t key) {
    return g.neighbor(face_cell(key), face_axis(key), face_side(key)) < 0;
}

// Deterministically ordered sparse face -> value table.
using FaceMap = std::map<std::int64_t, double>;

// All box-wall faces in ascending key order.
inline std::vector<std::int64_t> boundary_faces(const Grid3& g) {
    std::vector<std::int64_t> out;
    for (std::int64_t c = 0; c < g.n_cells(); ++c)
        for (int axis = 0; axis < 3; ++axis)
            for (int side = -1; side <= 1; side += 2)
                if (g.neighbor(c, axis, side) < 0)
                    out.push_back(face_key(c, axis, side));
    return out;
}

struct ScalarField {
    Grid3 grid;
    std::vector<double> values;

    double& at(std::int64_t cell) { return values[static_cast<std::size_t>(cell)]; }
    double at(std::int64_t cell) const { return values[static_cast<std::size_t>(cell)]; }
};

inline ScalarField make_field(const Grid3& g, double fill = 0.0) {
    return ScalarField{g, std::vector<double>(static_cast<std::size_t>(g.n_cells()), fill)};
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string field_csv(const ScalarField& f) {
    std::string out = "i,j,k,value\r\n";
    for (std::int64_t c = 0; c < f.grid.n_cells(); ++c) {
        int i, j, k;
        f.grid.cell_coords(c, i, j, k);
        out += std::to_string(i) + ',' + std::to_string(j) + ',' + std::to_string(k) + ',' +
               detail::format_g17(f.values[static_cast<std::size_t>(c)]) + "\r\n";
    }
    return out;
}

// Flat little-endian float64 block at <base>.f64 plus a JSON sidecar <base>.json.
inline void write_field_binary(const ScalarField& f, const std::string& base) {
    static_assert(std::endian::native == std::endian::little,
                  "field export assumes a little-endian host");
    {
        std::ofstream os(base + ".f64", std::ios::binary);
        require(os.good(), "cannot open binary field output");
        os.write(reinterpret_cast<const char*>(f.values.data()),
                 static_cast<std::streamsize>(f.values.size() * sizeof(double)));
        require(os.good(), "binary field write failed");
    }
    nlohmann::json side;
    side["dims"] = {f.grid.nx, f.grid.ny, f.grid.nz};
    side["spacing"] = f.grid.spacing_h;
    side["origin"] = {f.grid.origin.x, f.grid.origin.y, f.grid.origin.z};
    side["dtype"] = "float64";
    side["byte_order"] = "little-endian";
    side["count"] = f.values.size();
    side["layout"] = "x-fastest";
    std::ofstream os(base + ".json");
    require(os.good(), "cannot open sidecar output");
    os << side.dump(2) << '\n';
}

}  // namespace critforge
