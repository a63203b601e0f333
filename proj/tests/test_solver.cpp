#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <critforge/cylinder.hpp>
#include <critforge/solver.hpp>

namespace {

using critforge::BoundaryCondition;
using critforge::Grid3;
using critforge::ScalarField;
using critforge::Vec3;

ScalarField constant_sigma(const Grid3& g, double value) {
    ScalarField f = critforge::make_field(g, value);
    return f;
}

BoundaryCondition box_dirichlet(const Grid3& g, const std::function<double(Vec3)>& data) {
    BoundaryCondition bc;
    for (const std::int64_t key : critforge::boundary_faces(g))
        bc.dirichlet[key] = data(critforge::face_center(g, key));
    return bc;
}

Grid3 unit_grid(int n) {
    return Grid3{{0.0, 0.0, 0.0}, 1.0 / n, n, n, n};
}

double max_error_vs(const critforge::SolveReport& rep,
                    const std::function<double(Vec3)>& exact) {
    double worst = 0.0;
    for (std::int64_t c = 0; c < rep.field.grid.n_cells(); ++c)
        worst = std::max(worst,
                         std::fabs(rep.field.at(c) - exact(rep.field.grid.cell_center(c))));
    return worst;
}

// Rasterized cylinder (axis x, radius 1, height 4) in the [-4,4]^3 box, with
// value 1 on axial (disk) faces and 2 on the staircase wall.
struct CylinderProblem {
    Grid3 grid;
    std::vector<std::uint8_t> region;
    BoundaryCondition bc;
};

CylinderProblem make_cylinder_problem(int n) {
    CylinderProblem p;
    p.grid = Grid3{{-4.0, -4.0, -4.0}, 8.0 / n, n, n, n};
    p.region.assign(static_cast<std::size_t>(p.grid.n_cells()), 0);
    for (std::int64_t c = 0; c < p.grid.n_cells(); ++c) {
        const Vec3 q = p.grid.cell_center(c);
        p.region[static_cast<std::size_t>(c)] =
            (std::fabs(q.x) < 2.0 && q.y * q.y + q.z * q.z < 1.0) ? 1 : 0;
    }
    for (std::int64_t c = 0; c < p.grid.n_cells(); ++c) {
        if (!p.region[static_cast<std::size_t>(c)])
            continue;
        for (int axis = 0; axis < 3; ++axis)
            for (int side = -1; side <= 1; side += 2) {
                const std::int64_t nbr = p.grid.neighbor(c, axis, side);
                if (nbr >= 0 && p.region[static_cast<std::size_t>(nbr)])
                    continue;
                p.bc.dirichlet[critforge::face_key(c, axis, side)] = axis == 0 ? 1.0 : 2.0;
            }
    }
    return p;
}

}  // namespace

TEST_CASE("affine data is reproduced exactly") {
    const Grid3 g = unit_grid(16);
    const ScalarField sigma = constant_sigma(g, 1.0);
    const BoundaryCondition bc = box_dirichlet(g, [](Vec3 p) { return p.x; });
    const critforge::SolveReport rep = critforge::solve(g, sigma, bc, 1e-13);
    CHECK(rep.final_residual <= 1e-13);
    CHECK(max_error_vs(rep, [](Vec3 p) { return p.x; }) <= 1e-10);

    // flux through the x=1 wall equals the wall area for u = x
    std::vector<std::int64_t> wall;
    for (const std::int64_t key : critforge::boundary_faces(g))
        if (critforge::face_axis(key) == 0 && critforge::face_side(key) == 1)
            wall.push_back(key);
    CHECK(critforge::flux_integral(rep, wall) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("harmonic quadratic converges at second order") {
    auto run = [](int n) {
        const Grid3 g = unit_grid(n);
        const BoundaryCondition bc =
            box_dirichlet(g, [](Vec3 p) { return p.x * p.x - p.y * p.y; });
        const critforge::SolveReport rep =
            critforge::solve(g, constant_sigma(g, 1.0), bc, 1e-12);
        return max_error_vs(rep, [](Vec3 p) { return p.x * p.x - p.y * p.y; });
    };
    const double coarse = run(16);
    const double fine = run(32);
    const double ratio = coarse / fine;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("two-layer sandwich is exact at any contrast") {
    const int n = 32;
    const Grid3 g{{0.0, 0.0, 0.0}, 1.0 / n, n, 4, 4};
    for (double eta : {1e-2, 1e-6}) {
        ScalarField sigma = critforge::make_field(g, 1.0);
        for (std::int64_t c = 0; c < g.n_cells(); ++c)
            if (g.cell_center(c).x > 0.5)
                sigma.at(c) = 1.0 / eta;
        BoundaryCondition bc;
        for (const std::int64_t key : critforge::boundary_faces(g)) {
            if (critforge::face_axis(key) == 0)
                bc.dirichlet[key] = critforge::face_side(key) > 0 ? 1.0 : 0.0;
            else
                bc.neumann[key] = 0.0;
        }
        const critforge::SolveReport rep = critforge::solve(g, sigma, bc, 1e-13);
        const double q = 2.0 / (1.0 + eta);
        const double err = max_error_vs(rep, [&](Vec3 p) {
            return p.x <= 0.5 ? q * p.x : q * 0.5 + q * eta * (p.x - 0.5);
        });
        CHECK(err <= 1e-8);
    }
}

TEST_CASE("discrete maximum principle holds for rough random data") {
    std::mt19937 rng(20260817u);
    std::uniform_real_distribution<double> usig(0.5, 100.0);
    std::uniform_real_distribution<double> ug(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const Grid3 g = unit_grid(16);
        ScalarField sigma = critforge::make_field(g, 1.0);
        for (double& s : sigma.values)
            s = usig(rng);
        BoundaryCondition bc;
        double lo = INFINITY, hi = -INFINITY;
        for (const std::int64_t key : critforge::boundary_faces(g)) {
            const double v = ug(rng);
            bc.dirichlet[key] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const critforge::SolveReport rep = critforge::solve(g, sigma, bc, 1e-12);
        for (const double v : rep.field.values) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("assembled operator is symmetric") {
    const Grid3 g = unit_grid(12);
    std::mt19937 rng(7u);
    std::uniform_real_distribution<double> usig(0.5, 3.0);
    ScalarField sigma = critforge::make_field(g, 1.0);
    for (double& s : sigma.values)
        s = usig(rng);
    BoundaryCondition bc;
    for (const std::int64_t key : critforge::boundary_faces(g)) {
        if (critforge::face_axis(key) == 2)
            bc.neumann[key] = 0.0;
        else
            bc.dirichlet[key] = 0.0;
    }
    const std::vector<std::uint8_t> all(static_cast<std::size_t>(g.n_cells()), 1);
    const critforge::detail::AssembledMixed am =
        critforge::detail::assemble_mixed(g, sigma, all, bc);
    std::uniform_real_distribution<double> uval(-1.0, 1.0);
    std::vector<double> u(am.sys.n()), w(am.sys.n()), au(am.sys.n()), aw(am.sys.n());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = uval(rng);
        w[i] = uval(rng);
    }
    am.sys.matvec(u, au);
    am.sys.matvec(w, aw);
    const double lhs = critforge::kahan_dot(au, w);
    const double rhs = critforge::kahan_dot(u, aw);
    const double scale = std::sqrt(critforge::kahan_dot(au, au) * critforge::kahan_dot(w, w));
    CHECK(std::fabs(lhs - rhs) <= 1e-12 * scale);
}

TEST_CASE("cylinder mixed solve sits between its boundary values") {
    const CylinderProblem p = make_cylinder_problem(64);
    const critforge::SolveReport rep =
        critforge::solve_mixed(p.grid, constant_sigma(p.grid, 1.0), p.region, p.bc, 1e-10);
    for (std::int64_t c = 0; c < p.grid.n_cells(); ++c)
        if (p.region[static_cast<std::size_t>(c)]) {
            CHECK(rep.field.at(c) > 1.0);
            CHECK(rep.field.at(c) < 2.0);
        }
}

TEST_CASE("cylinder mixed solve tracks the separated-variables solution") {
    const CylinderProblem p = make_cylinder_problem(64);
    const critforge::SolveReport rep =
        critforge::solve_mixed(p.grid, constant_sigma(p.grid, 1.0), p.region, p.bc, 1e-10);
    const critforge::SeriesSolution series =
        critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 200});
    const Vec3 probes[10] = {{0, 0, 0},          {0.5, 0, 0},        {-0.5, 0, 0},
                             {1, 0, 0},          {0, 0.3, 0},        {0, 0, -0.3},
                             {1.5, 0.2, 0},      {-1, 0, 0.4},       {0.7, 0.5, 0},
                             {-1.5, 0.5, 0}};
    double worst = 0.0;
    for (const Vec3& q : probes) {
        const int i = static_cast<int>(std::floor((q.x + 4.0) / p.grid.spacing_h));
        const int j = static_cast<int>(std::floor((q.y + 4.0) / p.grid.spacing_h));
        const int k = static_cast<int>(std::floor((q.z + 4.0) / p.grid.spacing_h));
        const std::int64_t c = p.grid.cell_index(i, j, k);
        REQUIRE(p.region[static_cast<std::size_t>(c)] == 1);
        const Vec3 ctr = p.grid.cell_center(c);
        const double exact =
            critforge::eval_u(series, std::sqrt(ctr.y * ctr.y + ctr.z * ctr.z), ctr.x);
        worst = std::max(worst, std::fabs(rep.field.at(c) - exact));
    }
    INFO("max probe error " << worst);
    CHECK(worst <= 1e-2);
}

TEST_CASE("constant Dirichlet data yields the constant field") {
    const CylinderProblem p = make_cylinder_problem(32);
    BoundaryCondition bc = p.bc;
    for (auto& [key, value] : bc.dirichlet)
        value = 3.7;
    const critforge::SolveReport rep =
        critforge::solve_mixed(p.grid, constant_sigma(p.grid, 1.0), p.region, bc, 1e-12);
    for (std::int64_t c = 0; c < p.grid.n_cells(); ++c)
        if (p.region[static_cast<std::size_t>(c)])
            CHECK(rep.field.at(c) == Catch::Approx(3.7).margin(1e-9));
}

TEST_CASE("pure-Neumann affine problem is exact and balances its fluxes") {
    const int n = 8;
    const Grid3 g = unit_grid(n);
    BoundaryCondition bc;
    for (const std::int64_t key : critforge::boundary_faces(g)) {
        if (critforge::face_axis(key) == 0)
            bc.neumann[key] = critforge::face_side(key) > 0 ? -1.0 : 1.0;
        else
            bc.neumann[key] = 0.0;
    }
    bc.anchors.emplace_back(0, 0.0);
    const critforge::SolveReport rep =
        critforge::solve(g, constant_sigma(g, 1.0), bc, 1e-13);
    const double x0 = g.cell_center(0).x;
    CHECK(max_error_vs(rep, [&](Vec3 p) { return x0 - p.x; }) <= 1e-9);

    const std::vector<std::int64_t> walls = critforge::boundary_faces(g);
    CHECK(std::fabs(critforge::flux_integral(rep, walls)) <= 1e-10);
    std::vector<std::int64_t> left;
    for (const std::int64_t key : walls)
        if (critforge::face_axis(key) == 0 && critforge::face_side(key) < 0)
            left.push_back(key);
    CHECK(critforge::flux_integral(rep, left) == Catch::Approx(1.0).margin(1e-10));
    CHECK(critforge::face_trace(rep, left[0]) == Catch::Approx(x0).margin(1e-10));
}

TEST_CASE("imbalanced pure-Neumann data is rejected") {
    const Grid3 g = unit_grid(8);
    BoundaryCondition bc;
    for (const std::int64_t key : critforge::boundary_faces(g))
        bc.neumann[key] = 1.0;
    bc.anchors.emplace_back(0, 0.0);
    CHECK_THROWS_AS(critforge::solve(g, constant_sigma(g, 1.0), bc, 1e-10),
                    std::domain_error);
}

TEST_CASE("floating region components are rejected") {
    const Grid3 g = unit_grid(8);
    std::vector<std::uint8_t> region(static_cast<std::size_t>(g.n_cells()), 0);
    // two separated single-cell components
    region[static_cast<std::size_t>(g.cell_index(1, 1, 1))] = 1;
    region[static_cast<std::size_t>(g.cell_index(5, 5, 5))] = 1;
    BoundaryCondition bc;
    for (int axis = 0; axis < 3; ++axis)
        for (int side = -1; side <= 1; side += 2) {
            bc.dirichlet[critforge::face_key(g.cell_index(1, 1, 1), axis, side)] = 1.0;
            bc.neumann[critforge::face_key(g.cell_index(5, 5, 5), axis, side)] = 0.0;
        }
    CHECK_THROWS_AS(
        critforge::solve_mixed(g, constant_sigma(g, 1.0), region, bc, 1e-10),
        std::domain_error);
}

TEST_CASE("malformed boundary conditions are rejected") {
    const Grid3 g = unit_grid(8);
    const ScalarField sigma = constant_sigma(g, 1.0);

    SECTION("face in both maps") {
        BoundaryCondition bc = box_dirichlet(g, [](Vec3) { return 0.0; });
        bc.neumann[bc.dirichlet.begin()->first] = 0.0;
        CHECK_THROWS_AS(critforge::solve(g, sigma, bc, 1e-10), std::domain_error);
    }
    SECTION("wall faces left uncovered") {
        BoundaryCondition bc = box_dirichlet(g, [](Vec3) { return 0.0; });
        bc.dirichlet.erase(bc.dirichlet.begin());
        CHECK_THROWS_AS(critforge::solve(g, sigma, bc, 1e-10), std::domain_error);
    }
    SECTION("condition face interior to the region") {
        BoundaryCondition bc = box_dirichlet(g, [](Vec3) { return 0.0; });
        bc.dirichlet[critforge::face_key(g.cell_index(3, 3, 3), 0, 1)] = 1.0;
        CHECK_THROWS_AS(critforge::solve(g, sigma, bc, 1e-10), std::domain_error);
    }
    SECTION("anchor outside the region") {
        std::vector<std::uint8_t> region(static_cast<std::size_t>(g.n_cells()), 0);
        region[static_cast<std::size_t>(g.cell_index(1, 1, 1))] = 1;
        BoundaryCondition bc;
        for (int axis = 0; axis < 3; ++axis)
            for (int side = -1; side <= 1; side += 2)
                bc.neumann[critforge::face_key(g.cell_index(1, 1, 1), axis, side)] = 0.0;
        bc.anchors.emplace_back(g.cell_index(5, 5, 5), 0.0);
        CHECK_THROWS_AS(critforge::solve_mixed(g, sigma, region, bc, 1e-10),
                        std::domain_error);
    }
    SECTION("conductivity below one half") {
        ScalarField bad = constant_sigma(g, 1.0);
        bad.values[10] = 0.25;
        const BoundaryCondition bc = box_dirichlet(g, [](Vec3) { return 0.0; });
        CHECK_THROWS_AS(critforge::solve(g, bad, bc, 1e-10), std::domain_error);
    }
}

TEST_CASE("warm starts from the solution converge immediately") {
    const Grid3 g = unit_grid(16);
    const ScalarField sigma = constant_sigma(g, 1.0);
    const BoundaryCondition bc = box_dirichlet(g, [](Vec3 p) { return p.x + 2.0 * p.y; });
    const critforge::SolveReport first = critforge::solve(g, sigma, bc, 1e-12);
    const critforge::SolveReport second =
        critforge::solve(g, sigma, bc, 1e-12, &first.field);
    CHECK(second.iterations <= 2);
}

TEST_CASE("repeated solves are bit-identical") {
    const CylinderProblem p = make_cylinder_problem(32);
    const ScalarField sigma = constant_sigma(p.grid, 1.0);
    const critforge::SolveReport a =
        critforge::solve_mixed(p.grid, sigma, p.region, p.bc, 1e-11);
    const critforge::SolveReport b =
        critforge::solve_mixed(p.grid, sigma, p.region, p.bc, 1e-11);
    CHECK(a.field.values == b.field.values);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("flux through a closed interior surface vanishes") {
    const Grid3 g = unit_grid(16);
    const BoundaryCondition bc =
        box_dirichlet(g, [](Vec3 p) { return p.x * p.x - p.y * p.y; });
    const critforge::SolveReport rep =
        critforge::solve(g, constant_sigma(g, 1.0), bc, 1e-12);
    std::vector<std::int64_t> surface;
    auto in_block = [](int i, int j, int k) {
        return i >= 4 && i < 12 && j >= 4 && j < 12 && k >= 4 && k < 12;
    };
    for (int k = 4; k < 12; ++k)
        for (int j = 4; j < 12; ++j)
            for (int i = 4; i < 12; ++i)
                for (int axis = 0; axis < 3; ++axis)
                    for (int side = -1; side <= 1; side += 2) {
                        int q[3] = {i, j, k};
                        q[axis] += side;
                        if (!in_block(q[0], q[1], q[2]))
                            surface.push_back(
                                critforge::face_key(g.cell_index(i, j, k), axis, side));
                    }
    CHECK(std::fabs(critforge::flux_integral(rep, surface)) <= 1e-8);
}

TEST_CASE("axisymmetric constant data yields the constant field") {
    const critforge::Grid2 g{-2.0, 1.0 / 65, 4.0 / 65, 65, 65};
    const critforge::AxisymReport rep =
        critforge::solve_axisym(g, [](double, double) { return 4.2; }, 1e-12);
    for (const double v : rep.values)
        CHECK(v == Catch::Approx(4.2).margin(1e-9));
}

TEST_CASE("axisymmetric solve recovers the interior saddle strength") {
    const int n = 129;
    const critforge::Grid2 g{-2.0, 1.0 / n, 4.0 / n, n, n};
    const critforge::AxisymReport rep = critforge::solve_axisym(
        g,
        [](double, double z) { return std::fabs(z) >= 2.0 - 1e-12 ? 1.0 : 2.0; },
        1e-11);
    const int jc = (n - 1) / 2;
    REQUIRE(std::fabs(g.z_center(jc)) <= 1e-12);
    const double d2z =
        (rep.at(0, jc + 1) - 2.0 * rep.at(0, jc) + rep.at(0, jc - 1)) / (g.hz * g.hz);
    const double lambda_fd = -0.5 * d2z;
    const double lambda_series =
        critforge::hessian_at_origin(
            critforge::coefficients(critforge::CylinderSpec{4.0, 1.0, 200}))
            .lambda;
    CHECK(std::fabs(lambda_fd - lambda_series) <= 0.05 * lambda_series);

    // symmetry closure keeps the radial derivative O(h) on the axis column
    for (int j = 0; j < n; ++j)
        CHECK(std::fabs(rep.at(1, j) - rep.at(0, j)) <= 50.0 * g.hr * g.hr);
}
