#pragma once

// Cell-centered finite-volume discretization of div(sigma grad u) = 0 with
// Dirichlet, Neumann and mixed boundary data, solved by Jacobi-preconditioned
// conjugate gradients.
//
// Conventions, used consistently by every routine here and by the callers:
//  * face conductivity = harmonic mean of the two adjacent cell values
//    (exact for layered media at any contrast);
//  * Dirichlet faces are eliminated through a half-cell one-sided difference,
//    coupling 2*sigma_c*h per face;
//  * a Neumann face carries f = sigma du/dnu with nu the face-key normal,
//    which for condition faces always points out of the solved region;
//  * pure-Neumann components are grounded by pinning anchor cells to given
//    values rather than by mean-zero projection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <critforge/grid.hpp>
#include <critforge/numerics.hpp>

namespace critforge {

struct BoundaryCondition {
    FaceMap dirichlet;  // face key -> boundary value
    FaceMap neumann;    // face key -> sigma du/dnu, nu = key normal
    std::vector<std::pair<std::int64_t, double>> anchors;  // cell -> pinned value
};

struct SolverError : std::runtime_error {
    int iterations;
    double residual;
    SolverError(const std::string& msg, int it, double res)
        : std::runtime_error(msg), iterations(it), residual(res) {}
};

// Everything a post-solve flux or trace query needs; shared by the report.
struct SolveContext {
    Grid3 grid;
    std::vector<double> sigma;
    std::vector<std::uint8_t> in_region;
    FaceMap dirichlet;
    FaceMap neumann;
};

struct SolveReport {
    int iterations = 0;
    double final_residual = 0.0;
    ScalarField field;
    std::shared_ptr<const SolveContext> ctx;
};

namespace detail {

struct LinearSystem {
    std::vector<double> diag;
    std::vector<double> rhs;
    std::vector<std::int64_t> row_ptr;
    std::vector<std::int32_t> col;
    std::vector<double> val;

    std::size_t n() const { return diag.size(); }

    void matvec(const std::vector<double>& x, std::vector<double>& y) const {
        const std::size_t nn = n();
        for (std::size_t i = 0; i < nn; ++i) {
            double acc = diag[i] * x[i];
            for (std::int64_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e)
                acc -= val[static_cast<std::size_t>(e)] *
                       x[static_cast<std::size_t>(col[static_cast<std::size_t>(e)])];
            y[i] = acc;
        }
    }
};

struct CgResult {
    int iterations;
    double final_residual;  // preconditioned residual relative to the data
};

// Conjugate gradients with Jacobi preconditioning.  Convergence is declared
// on ||r||_{M^-1} <= tol * ||b||_{M^-1} and re-verified against an explicitly
// recomputed residual before returning (the recurrence residual can drift).
inline CgResult cg_solve(const LinearSystem& sys, std::vector<double>& x, double tol,
                         int max_iter) {
    const std::size_t n = sys.n();
    std::vector<double> r(n), z(n), p(n), q(n);

    double bnorm2 = 0.0;
    {
        KahanSum<double> s;
        for (std::size_t i = 0; i < n; ++i)
            s.add(sys.rhs[i] * sys.rhs[i] / sys.diag[i]);
        bnorm2 = s.value();
    }
    if (bnorm2 == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return {0, 0.0};
    }
    const double target = tol * std::sqrt(bnorm2);

    auto refresh_residual = [&]() {
        sys.matvec(x, r);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = sys.rhs[i] - r[i];
    };
    auto precondition = [&]() {
        KahanSum<double> s;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = r[i] / sys.diag[i];
            s.add(r[i] * z[i]);
        }
        return s.value();
    };

    refresh_residual();
    double rho = precondition();
    if (std::sqrt(std::max(rho, 0.0)) <= target)
        return {0, std::sqrt(std::max(rho, 0.0) / bnorm2)};
    p = z;

    int it = 0;
    while (it < max_iter) {
        ++it;
        sys.matvec(p, q);
        const double pq = kahan_dot(p, q);
        require(pq > 0.0, "conjugate-gradient breakdown: operator not positive definite");
        const double alpha = rho / pq;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        const double rho_new = precondition();
        if (std::sqrt(std::max(rho_new, 0.0)) <= target) {
            refresh_residual();
            const double rho_true = precondition();
            if (std::sqrt(std::max(rho_true, 0.0)) <= target)
                return {it, std::sqrt(std::max(rho_true, 0.0) / bnorm2)};
            rho = rho_true;
            p = z;
            continue;
        }
        const double beta = rho_new / rho;
        rho = rho_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }
    refresh_residual();
    const double res = std::sqrt(std::max(precondition(), 0.0) / bnorm2);
    throw SolverError("conjugate gradients failed to reach tolerance " + std::to_string(tol) +
                          " after " + std::to_string(it) +
                          " iterations (relative residual " + std::to_string(res) + ")",
                      it, res);
}

inline double harmonic_mean(double a, double b) {
    return 2.0 * a * b / (a + b);
}

struct AssembledMixed {
    LinearSystem sys;
    std::vector<std::int64_t> cell_of;  // unknown index -> cell index
    double contrast = 1.0;
};

// Validates the mixed problem and assembles the SPD system over the region
// cells that are not anchored.  Throws on any contract violation: condition
// faces off the region boundary, uncovered region-boundary faces, floating
// or overdetermined components, incompatible pure-Neumann data.
inline AssembledMixed assemble_mixed(const Grid3& grid, const ScalarField& sigma,
                                     const std::vector<std::uint8_t>& in_region,
                                     const BoundaryCondition& bc) {
    grid.validate();
    const std::int64_t n_cells = grid.n_cells();
    require(static_cast<std::int64_t>(sigma.values.size()) == n_cells, "sigma size mismatch");
    require(static_cast<std::int64_t>(in_region.size()) == n_cells, "region mask size mismatch");

    const double h = grid.spacing_h;
    const double area = h * h;

    std::vector<double> anchor_value(static_cast<std::size_t>(n_cells), 0.0);
    std::vector<std::uint8_t> anchored(static_cast<std::size_t>(n_cells), 0);
    for (const auto& [cell, value] : bc.anchors) {
        require(cell >= 0 && cell < n_cells && in_region[static_cast<std::size_t>(cell)],
                "anchor cell outside the solved region");
        require(!anchored[static_cast<std::size_t>(cell)], "duplicate anchor cell");
        anchored[static_cast<std::size_t>(cell)] = 1;
        anchor_value[static_cast<std::size_t>(cell)] = value;
    }

    auto check_condition_face = [&](std::int64_t key) {
        const std::int64_t c = face_cell(key);
        require(c >= 0 && c < n_cells && in_region[static_cast<std::size_t>(c)],
                "condition face not keyed from inside the region");
        const std::int64_t nbr = grid.neighbor(c, face_axis(key), face_side(key));
        require(nbr < 0 || !in_region[static_cast<std::size_t>(nbr)],
                "condition face interior to the region");
    };
    for (const auto& [key, value] : bc.dirichlet) {
        check_condition_face(key);
        require(!bc.neumann.count(key), "face carries both Dirichlet and Neumann data");
        (void)value;
    }
    for (const auto& [key, value] : bc.neumann) {
        check_condition_face(key);
        (void)value;
    }

    // Connected components; per-component grounding and compatibility.
    std::vector<std::int32_t> component(static_cast<std::size_t>(n_cells), -1);
    std::int32_t n_comp = 0;
    {
        std::vector<std::int64_t> stack;
        for (std::int64_t seed = 0; seed < n_cells; ++seed) {
            if (!in_region[static_cast<std::size_t>(seed)] ||
                component[static_cast<std::size_t>(seed)] >= 0)
                continue;
            component[static_cast<std::size_t>(seed)] = n_comp;
            stack.push_back(seed);
            while (!stack.empty()) {
                const std::int64_t c = stack.back();
                stack.pop_back();
                for (int axis = 0; axis < 3; ++axis)
                    for (int side = -1; side <= 1; side += 2) {
                        const std::int64_t nbr = grid.neighbor(c, axis, side);
                        if (nbr >= 0 && in_region[static_cast<std::size_t>(nbr)] &&
                            component[static_cast<std::size_t>(nbr)] < 0) {
                            component[static_cast<std::size_t>(nbr)] = n_comp;
                            stack.push_back(nbr);
                        }
                    }
            }
            ++n_comp;
        }
    }
    require(n_comp > 0, "empty region");
    std::vector<std::uint8_t> comp_dirichlet(static_cast<std::size_t>(n_comp), 0);
    std::vector<std::uint8_t> comp_anchor(static_cast<std::size_t>(n_comp), 0);
    std::vector<KahanSum<double>> comp_flux(static_cast<std::size_t>(n_comp));
    std::vector<KahanSum<double>> comp_flux_abs(static_cast<std::size_t>(n_comp));
    for (const auto& [key, value] : bc.dirichlet) {
        comp_dirichlet[static_cast<std::size_t>(
            component[static_cast<std::size_t>(face_cell(key))])] = 1;
        (void)value;
    }
    for (const auto& [key, f] : bc.neumann) {
        const auto comp = static_cast<std::size_t>(
            component[static_cast<std::size_t>(face_cell(key))]);
        comp_flux[comp].add(f * area);
        comp_flux_abs[comp].add(std::fabs(f) * area);
    }
    for (const auto& [cell, value] : bc.anchors) {
        comp_anchor[static_cast<std::size_t>(component[static_cast<std::size_t>(cell)])] = 1;
        (void)value;
    }
    for (std::size_t comp = 0; comp < static_cast<std::size_t>(n_comp); ++comp) {
        require(comp_dirichlet[comp] || comp_anchor[comp],
                "region component has neither Dirichlet data nor an anchor");
        require(!(comp_dirichlet[comp] && comp_anchor[comp]),
                "anchored region component also has Dirichlet data");
        if (!comp_dirichlet[comp]) {
            const double imbalance = std::fabs(comp_flux[comp].value());
            require(imbalance <= 1e-10 * std::max(1.0, comp_flux_abs[comp].value()),
                    "incompatible Neumann data on a pure-Neumann component");
        }
    }

    AssembledMixed out;
    std::vector<std::int64_t> unknown_of(static_cast<std::size_t>(n_cells), -1);
    for (std::int64_t c = 0; c < n_cells; ++c)
        if (in_region[static_cast<std::size_t>(c)] && !anchored[static_cast<std::size_t>(c)]) {
            unknown_of[static_cast<std::size_t>(c)] =
                static_cast<std::int64_t>(out.cell_of.size());
            out.cell_of.push_back(c);
        }
    require(!out.cell_of.empty(), "no unknowns: all region cells anchored");

    double sigma_min = INFINITY, sigma_max = 0.0;
    for (std::int64_t c = 0; c < n_cells; ++c)
        if (in_region[static_cast<std::size_t>(c)]) {
            const double s = sigma.values[static_cast<std::size_t>(c)];
            require(s >= 0.5 && std::isfinite(s), "conductivity below 1/2 in the region");
            sigma_min = std::min(sigma_min, s);
            sigma_max = std::max(sigma_max, s);
        }
    out.contrast = sigma_max / sigma_min;

    LinearSystem& sys = out.sys;
    const std::size_t n_unknown = out.cell_of.size();
    sys.diag.assign(n_unknown, 0.0);
    sys.rhs.assign(n_unknown, 0.0);
    sys.row_ptr.assign(n_unknown + 1, 0);
    sys.col.reserve(n_unknown * 6);
    sys.val.reserve(n_unknown * 6);

    std::int64_t missing_faces = 0;
    for (std::size_t u = 0; u < n_unknown; ++u) {
        const std::int64_t c = out.cell_of[u];
        const double sc = sigma.values[static_cast<std::size_t>(c)];
        for (int axis = 0; axis < 3; ++axis)
            for (int side = -1; side <= 1; side += 2) {
                const std::int64_t key = face_key(c, axis, side);
                const std::int64_t nbr = grid.neighbor(c, axis, side);
                const bool nbr_in = nbr >= 0 && in_region[static_cast<std::size_t>(nbr)];
                if (auto it = bc.dirichlet.find(key); it != bc.dirichlet.end()) {
                    const double t = 2.0 * sc * h;
                    sys.diag[u] += t;
                    sys.rhs[u] += t * it->second;
                } else if (auto nt = bc.neumann.find(key); nt != bc.neumann.end()) {
                    sys.rhs[u] += nt->second * area;
                } else if (nbr_in) {
                    const double t =
                        harmonic_mean(sc, sigma.values[static_cast<std::size_t>(nbr)]) * h;
                    sys.diag[u] += t;
                    if (anchored[static_cast<std::size_t>(nbr)]) {
                        sys.rhs[u] += t * anchor_value[static_cast<std::size_t>(nbr)];
                    } else {
                        sys.col.push_back(static_cast<std::int32_t>(
                            unknown_of[static_cast<std::size_t>(nbr)]));
                        sys.val.push_back(t);
                    }
                } else {
                    ++missing_faces;
                }
            }
        sys.row_ptr[u + 1] = static_cast<std::int64_t>(sys.col.size());
    }
    require(missing_faces == 0,
            "region-boundary faces without a boundary condition are present");
    return out;
}

}  // namespace detail

// Mixed solve on a sub-region of the grid.  Condition faces must be keyed
// from inside the region and must lie on the region boundary; every
// region-boundary face must carry exactly one condition.  Each connected
// component needs Dirichlet data or an anchor (not both), and pure-Neumann
// components must carry compatible data.
inline SolveReport solve_mixed(const Grid3& grid, const ScalarField& sigma,
                               const std::vector<std::uint8_t>& in_region,
                               const BoundaryCondition& bc, double tol,
                               const ScalarField* initial_guess = nullptr) {
    require(tol > 0.0, "solver tolerance must be positive");
    detail::AssembledMixed am = detail::assemble_mixed(grid, sigma, in_region, bc);
    const std::size_t n_unknown = am.cell_of.size();

    std::vector<double> x(n_unknown, 0.0);
    if (initial_guess) {
        require(static_cast<std::int64_t>(initial_guess->values.size()) == grid.n_cells(),
                "initial guess size mismatch");
        for (std::size_t u = 0; u < n_unknown; ++u)
            x[u] = initial_guess->values[static_cast<std::size_t>(am.cell_of[u])];
    }

    const int max_iter = std::max(
        200, static_cast<int>(50.0 * std::cbrt(static_cast<double>(n_unknown)) *
                              std::sqrt(am.contrast)));
    const detail::CgResult res = detail::cg_solve(am.sys, x, tol, max_iter);

    SolveReport report;
    report.iterations = res.iterations;
    report.final_residual = res.final_residual;
    report.field = make_field(grid, 0.0);
    for (std::size_t u = 0; u < n_unknown; ++u)
        report.field.values[static_cast<std::size_t>(am.cell_of[u])] = x[u];
    for (const auto& [cell, value] : bc.anchors)
        report.field.values[static_cast<std::size_t>(cell)] = value;
    auto ctx = std::make_shared<SolveContext>();
    ctx->grid = grid;
    ctx->sigma = sigma.values;
    ctx->in_region = in_region;
    ctx->dirichlet = bc.dirichlet;
    ctx->neumann = bc.neumann;
    report.ctx = std::move(ctx);
    return report;
}

// Whole-box solve: the condition must cover every wall face exactly once.
inline SolveReport solve(const Grid3& grid, const ScalarField& sigma,
                         const BoundaryCondition& bc, double tol,
                         const ScalarField* initial_guess = nullptr) {
    grid.validate();
    std::int64_t covered = 0;
    for (const auto& [key, value] : bc.dirichlet) {
        require(is_boundary_face(grid, key), "condition face is not a wall face");
        ++covered;
        (void)value;
    }
    for (const auto& [key, value] : bc.neumann) {
        require(is_boundary_face(grid, key), "condition face is not a wall face");
        require(!bc.dirichlet.count(key), "face carries both Dirichlet and Neumann data");
        ++covered;
        (void)value;
    }
    const std::int64_t n_wall =
        2ll * (static_cast<std::int64_t>(grid.nx) * grid.ny +
               static_cast<std::int64_t>(grid.ny) * grid.nz +
               static_cast<std::int64_t>(grid.nz) * grid.nx);
    require(covered == n_wall, "boundary condition does not cover every wall face");
    const std::vector<std::uint8_t> all(static_cast<std::size_t>(grid.n_cells()), 1);
    return solve_mixed(grid, sigma, all, bc, tol, initial_guess);
}

// Discrete flux sum(sigma du/dnu * area) over the given faces, nu being each
// key's normal.  Faces keyed from outside the solved region are evaluated
// from the solved side with the sign flipped, so interface integrals can be
// oriented independently of which side was solved.
inline double flux_integral(const SolveReport& report, const std::vector<std::int64_t>& faces) {
    require(report.ctx != nullptr, "report carries no solve context");
    const SolveContext& ctx = *report.ctx;
    const Grid3& grid = ctx.grid;
    const double h = grid.spacing_h;
    const double area = h * h;
    KahanSum<double> total;
    for (const std::int64_t key : faces) {
        const std::int64_t c = face_cell(key);
        require(c >= 0 && c < grid.n_cells(), "flux face outside the grid");
        const int axis = face_axis(key);
        const int side = face_side(key);
        const std::int64_t nbr = grid.neighbor(c, axis, side);
        const bool c_in = ctx.in_region[static_cast<std::size_t>(c)];
        const bool nbr_in = nbr >= 0 && ctx.in_region[static_cast<std::size_t>(nbr)];
        if (c_in) {
            const double uc = report.field.values[static_cast<std::size_t>(c)];
            const double sc = ctx.sigma[static_cast<std::size_t>(c)];
            if (auto it = ctx.dirichlet.find(key); it != ctx.dirichlet.end()) {
                total.add(2.0 * sc * h * (it->second - uc));
            } else if (auto nt = ctx.neumann.find(key); nt != ctx.neumann.end()) {
                total.add(nt->second * area);
            } else if (nbr_in) {
                const double t =
                    detail::harmonic_mean(sc, ctx.sigma[static_cast<std::size_t>(nbr)]) * h;
                total.add(t * (report.field.values[static_cast<std::size_t>(nbr)] - uc));
            } else {
                require(false, "flux face not adjacent to solved data");
            }
        } else if (nbr_in) {
            const std::int64_t okey = face_key(nbr, axis, -side);
            const double un = report.field.values[static_cast<std::size_t>(nbr)];
            const double sn = ctx.sigma[static_cast<std::size_t>(nbr)];
            if (auto it = ctx.dirichlet.find(okey); it != ctx.dirichlet.end()) {
                total.add(2.0 * sn * h * (un - it->second));
            } else if (auto nt = ctx.neumann.find(okey); nt != ctx.neumann.end()) {
                total.add(-nt->second * area);
            } else {
                require(false, "flux face not adjacent to solved data");
            }
        } else {
            require(false, "flux face not adjacent to the solved region");
        }
    }
    return total.value();
}

// Value of u on a condition face of the solve: the prescribed value on a
// Dirichlet face, the one-sided reconstruction u_c + (h/2) f / sigma_c on a
// Neumann face.
inline double face_trace(const SolveReport& report, std::int64_t key) {
    require(report.ctx != nullptr, "report carries no solve context");
    const SolveContext& ctx = *report.ctx;
    if (auto it = ctx.dirichlet.find(key); it != ctx.dirichlet.end())
        return it->second;
    if (auto nt = ctx.neumann.find(key); nt != ctx.neumann.end()) {
        const std::int64_t c = face_cell(key);
        return report.field.values[static_cast<std::size_t>(c)] +
               0.5 * ctx.grid.spacing_h * nt->second / ctx.sigma[static_cast<std::size_t>(c)];
    }
    require(false, "face carries no boundary condition");
    return 0.0;
}

// Axisymmetric (r,z) grid: cells (i,j) with centers r_i=(i+1/2)h_r,
// z_j = z0 + (j+1/2)h_z; the axis r=0 closes by symmetry (the r=0 face has
// zero weight in the r-weighted flux form d_r(r du/dr) + d_z(r du/dz) = 0).
struct Grid2 {
    double z0 = 0.0;
    double hr = 1.0;
    double hz = 1.0;
    int nr = 2;
    int nz = 2;

    void validate() const {
        require(hr > 0.0 && hz > 0.0, "axisymmetric spacings must be positive");
        require(nr >= 2 && nz >= 2, "axisymmetric dims must be at least 2");
    }
    std::int64_t index(int i, int j) const { return i + static_cast<std::int64_t>(nr) * j; }
    double r_center(int i) const { return (i + 0.5) * hr; }
    double z_center(int j) const { return z0 + (j + 0.5) * hz; }
    double r_wall() const { return nr * hr; }
    double z_top() const { return z0 + nz * hz; }
};

struct AxisymReport {
    int iterations = 0;
    double final_residual = 0.0;
    Grid2 grid;
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<std::size_t>(grid.index(i, j))]; }
};

// Dirichlet problem for the axisymmetric Laplacian; wall_value(r,z) supplies
// the data on the outer wall r = nr*hr and on both end disks.
template <class WallFn>
AxisymReport solve_axisym(const Grid2& grid, WallFn&& wall_value, double tol) {
    grid.validate();
    require(tol > 0.0, "solver tolerance must be positive");
    const std::size_t n = static_cast<std::size_t>(grid.nr) * grid.nz;

    detail::LinearSystem sys;
    sys.diag.assign(n, 0.0);
    sys.rhs.assign(n, 0.0);
    sys.row_ptr.assign(n + 1, 0);
    sys.col.reserve(n * 4);
    sys.val.reserve(n * 4);

    for (int j = 0; j < grid.nz; ++j)
        for (int i = 0; i < grid.nr; ++i) {
            const std::size_t u = static_cast<std::size_t>(grid.index(i, j));
            const double ri = grid.r_center(i);
            // radial faces at r = i*hr and r = (i+1)*hr; the i = 0 inner face
            // sits on the axis and carries zero weight
            if (i > 0) {
                const double t = (i * grid.hr) * grid.hz / grid.hr;
                sys.diag[u] += t;
                sys.col.push_back(static_cast<std::int32_t>(grid.index(i - 1, j)));
                sys.val.push_back(t);
            }
            if (i + 1 < grid.nr) {
                const double t = ((i + 1) * grid.hr) * grid.hz / grid.hr;
                sys.diag[u] += t;
                sys.col.push_back(static_cast<std::int32_t>(grid.index(i + 1, j)));
                sys.val.push_back(t);
            } else {
                const double t = grid.r_wall() * grid.hz / (0.5 * grid.hr);
                sys.diag[u] += t;
                sys.rhs[u] += t * wall_value(grid.r_wall(), grid.z_center(j));
            }
            // axial faces
            if (j > 0) {
                const double t = ri * grid.hr / grid.hz;
                sys.diag[u] += t;
                sys.col.push_back(static_cast<std::int32_t>(grid.index(i, j - 1)));
                sys.val.push_back(t);
            } else {
                const double t = ri * grid.hr / (0.5 * grid.hz);
                sys.diag[u] += t;
                sys.rhs[u] += t * wall_value(ri, grid.z0);
            }
            if (j + 1 < grid.nz) {
                const double t = ri * grid.hr / grid.hz;
                sys.diag[u] += t;
                sys.col.push_back(static_cast<std::int32_t>(grid.index(i, j + 1)));
                sys.val.push_back(t);
            } else {
                const double t = ri * grid.hr / (0.5 * grid.hz);
                sys.diag[u] += t;
                sys.rhs[u] += t * wall_value(ri, grid.z_top());
            }
            sys.row_ptr[u + 1] = static_cast<std::int64_t>(sys.col.size());
        }

    std::vector<double> x(n, 0.0);
    // planar problem: iteration counts scale with the grid diameter ~ sqrt(n)
    const int max_iter =
        std::max(200, static_cast<int>(50.0 * std::sqrt(static_cast<double>(n))));
    const detail::CgResult res = detail::cg_solve(sys, x, tol, max_iter);

    AxisymReport report;
    report.iterations = res.iterations;
    report.final_residual = res.final_residual;
    report.grid = grid;
    report.values = std::move(x);
    return report;
}

}  // namespace critforge
