#pragma once

// Contrast expansion of the two-handle problem: the solution of the direct
// high-contrast solve is reproduced order by order in the contrast parameter
// by a cascade of unit-conductivity subproblems on the handle bodies and the
// background.
//
// The discrete recursion mirrors the face coupling of the direct solve
// exactly.  Across an interface face the direct scheme couples the handle
// cell and the background cell with weight 2h/(1+eta) = 2h Sum (-eta)^k;
// expanding the direct system in powers of eta shows the coefficient fields
// satisfy:
//  * handle problems driven by the one-sided background flux
//      f_n = (u+_{n-1}(cell) - trace_{n-1}(face)) / (h/2),
//  * background problems driven by the ghost-consistent Dirichlet trace
//      trace_n = u_n(handle cell) + (h/2) f_n.
// With these data the partial sums match the direct solve to O(eta^{N+1});
// any other trace choice leaks an O(h) error into the first-order term.
//
// Dirichlet branch: wall data g enters the order-0 handle solves; all higher
// orders carry zero wall data.  Neumann branch: wall flux g enters the
// order-0 background solve and the order-1 handle solves; the handle
// problems are pure-Neumann, anchored at the cell nearest the wall patch,
// and the free constant a_n on handle 2 is resolved through the reciprocity
// identity with the auxiliary field v (v = 1 on the handle-1 interface, 0 on
// the handle-2 interface, insulated wall), which enforces the next order's
// flux compatibility exactly.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include <critforge/geometry.hpp>
#include <critforge/grid.hpp>
#include <critforge/numerics.hpp>
#include <critforge/solver.hpp>

namespace critforge {

enum class CascadeBranch { DIRICHLET, NEUMANN };

struct CascadeResult {
    CascadeBranch branch = CascadeBranch::DIRICHLET;
    int order_N = 0;
    // terms[n] holds the order-n coefficient field on the whole grid: handle
    // values on handle cells, background values on background cells.
    std::vector<ScalarField> terms;
    double beta1 = 0.0;
    double beta2 = 0.0;
    std::vector<double> a;                       // Neumann constants per order
    std::vector<double> compatibility_residual;  // pre-projection flux imbalance
    double alpha = 0.0;                          // interface capacity of v
    ScalarField v_field;                         // Neumann auxiliary field
};

// Handle cell pinned in anchored solves: the cell of the given label nearest
// the centroid of that handle's wall-contact faces (lowest index on ties).
inline std::int64_t anchor_cell(const RegionMasks& masks, CellLabel which) {
    const std::vector<std::int64_t>& patch = which == CellLabel::HANDLE1 ? masks.d1 : masks.d2;
    require(which != CellLabel::PLUS, "anchors live on handle cells");
    require(!patch.empty(), "handle has no wall-contact faces to anchor against");
    Vec3 centroid{0.0, 0.0, 0.0};
    for (const std::int64_t key : patch)
        centroid += face_center(masks.grid, key);
    centroid = centroid / static_cast<double>(patch.size());

    std::int64_t best = -1;
    double best_d = INFINITY;
    for (std::int64_t c = 0; c < masks.grid.n_cells(); ++c) {
        if (masks.cell[static_cast<std::size_t>(c)] != which)
            continue;
        const double d = norm(masks.grid.cell_center(c) - centroid);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

namespace detail {

struct CascadeSetup {
    std::vector<std::uint8_t> in_h1, in_h2, in_plus;
    ScalarField unit_sigma;
    std::vector<std::int64_t> n1_out, n2_out;  // background-side interface keys
};

inline CascadeSetup cascade_setup(const RegionMasks& masks) {
    CascadeSetup s;
    const std::size_t n = masks.cell.size();
    s.in_h1.assign(n, 0);
    s.in_h2.assign(n, 0);
    s.in_plus.assign(n, 0);
    for (std::size_t c = 0; c < n; ++c)
        (masks.cell[c] == CellLabel::HANDLE1
             ? s.in_h1
             : masks.cell[c] == CellLabel::HANDLE2 ? s.in_h2 : s.in_plus)[c] = 1;
    s.unit_sigma = make_field(masks.grid, 1.0);
    s.n1_out.reserve(masks.n1.size());
    for (const std::int64_t key : masks.n1)
        s.n1_out.push_back(opposite_face(masks.grid, key));
    s.n2_out.reserve(masks.n2.size());
    for (const std::int64_t key : masks.n2)
        s.n2_out.push_back(opposite_face(masks.grid, key));
    return s;
}

inline void check_boundary_data(const RegionMasks& masks, const FaceMap& g) {
    for (const auto& [key, label] : masks.boundary) {
        (void)label;
        require(g.count(key) == 1, "boundary data missing a wall face");
    }
}

inline ScalarField combine_terms(const Grid3& grid, const ScalarField& u1, const ScalarField& u2,
                                 const ScalarField& up) {
    ScalarField t = make_field(grid, 0.0);
    for (std::size_t c = 0; c < t.values.size(); ++c)
        t.values[c] = u1.values[c] + u2.values[c] + up.values[c];
    return t;
}

}  // namespace detail

inline CascadeResult dirichlet_expansion(const RegionMasks& masks, const FaceMap& g,
                                         int order_N = 2, double tol = 1e-10) {
    require(order_N >= 0, "expansion order must be nonnegative");
    detail::check_boundary_data(masks, g);
    const Grid3& grid = masks.grid;
    const double h = grid.spacing_h;
    const detail::CascadeSetup s = detail::cascade_setup(masks);

    CascadeResult result;
    result.branch = CascadeBranch::DIRICHLET;
    result.order_N = order_N;

    // A handle may be absent entirely (single-handle configurations); its
    // coefficient is the zero field and it contributes no traces.
    const bool has_h1 = !masks.n1.empty() || !masks.d1.empty();
    const bool has_h2 = !masks.n2.empty() || !masks.d2.empty();
    const ScalarField zero = make_field(grid, 0.0);

    FaceMap trace1, trace2;
    ScalarField up_prev;
    for (int n = 0; n <= order_N; ++n) {
        BoundaryCondition bc1, bc2;
        if (n == 0) {
            for (const std::int64_t key : masks.d1)
                bc1.dirichlet[key] = g.at(key);
            for (const std::int64_t key : masks.n1)
                bc1.neumann[key] = 0.0;
            for (const std::int64_t key : masks.d2)
                bc2.dirichlet[key] = g.at(key);
            for (const std::int64_t key : masks.n2)
                bc2.neumann[key] = 0.0;
        } else {
            for (const std::int64_t key : masks.d1)
                bc1.dirichlet[key] = 0.0;
            for (const std::int64_t key : masks.d2)
                bc2.dirichlet[key] = 0.0;
            for (std::size_t i = 0; i < masks.n1.size(); ++i)
                bc1.neumann[masks.n1[i]] =
                    (up_prev.at(face_cell(s.n1_out[i])) - trace1.at(masks.n1[i])) * 2.0 / h;
            for (std::size_t i = 0; i < masks.n2.size(); ++i)
                bc2.neumann[masks.n2[i]] =
                    (up_prev.at(face_cell(s.n2_out[i])) - trace2.at(masks.n2[i])) * 2.0 / h;
        }
        const ScalarField f1 =
            has_h1 ? solve_mixed(grid, s.unit_sigma, s.in_h1, bc1, tol).field : zero;
        const ScalarField f2 =
            has_h2 ? solve_mixed(grid, s.unit_sigma, s.in_h2, bc2, tol).field : zero;
        for (const std::int64_t key : masks.n1)
            trace1[key] = f1.at(face_cell(key)) +
                          (n == 0 ? 0.0 : 0.5 * h * bc1.neumann.at(key));
        for (const std::int64_t key : masks.n2)
            trace2[key] = f2.at(face_cell(key)) +
                          (n == 0 ? 0.0 : 0.5 * h * bc2.neumann.at(key));

        BoundaryCondition bcp;
        for (const std::int64_t key : masks.gamma)
            bcp.dirichlet[key] = n == 0 ? g.at(key) : 0.0;
        for (std::size_t i = 0; i < masks.n1.size(); ++i)
            bcp.dirichlet[s.n1_out[i]] = trace1.at(masks.n1[i]);
        for (std::size_t i = 0; i < masks.n2.size(); ++i)
            bcp.dirichlet[s.n2_out[i]] = trace2.at(masks.n2[i]);
        const SolveReport rp = solve_mixed(grid, s.unit_sigma, s.in_plus, bcp, tol);

        result.terms.push_back(detail::combine_terms(grid, f1, f2, rp.field));
        up_prev = rp.field;
    }
    return result;
}

inline CascadeResult dirichlet_limit(const RegionMasks& masks, const FaceMap& g,
                                     double tol = 1e-10) {
    return dirichlet_expansion(masks, g, 0, tol);
}

inline CascadeResult neumann_expansion(const RegionMasks& masks, const FaceMap& g,
                                       int order_N = 2, double tol = 1e-10) {
    require(order_N >= 0, "expansion order must be nonnegative");
    detail::check_boundary_data(masks, g);
    const Grid3& grid = masks.grid;
    const double h = grid.spacing_h;
    const double area = h * h;
    const detail::CascadeSetup s = detail::cascade_setup(masks);
    require(!masks.n1.empty() && !masks.n2.empty(),
            "flux cascade needs both handles to touch the background");

    CascadeResult result;
    result.branch = CascadeBranch::NEUMANN;
    result.order_N = order_N;

    // Auxiliary field: unit potential on the handle-1 interface, grounded on
    // the handle-2 interface, insulated wall.
    BoundaryCondition bcv;
    for (const std::int64_t key : masks.gamma)
        bcv.neumann[key] = 0.0;
    for (const std::int64_t key : s.n1_out)
        bcv.dirichlet[key] = 1.0;
    for (const std::int64_t key : s.n2_out)
        bcv.dirichlet[key] = 0.0;
    const SolveReport rv = solve_mixed(grid, s.unit_sigma, s.in_plus, bcv, tol);
    result.v_field = rv.field;

    // Per-face interface flux of v along the handle-to-background normal.
    FaceMap q1, q2;
    KahanSum<double> alpha_sum;
    for (std::size_t i = 0; i < masks.n1.size(); ++i)
        q1[masks.n1[i]] = 2.0 * h * (rv.field.at(face_cell(s.n1_out[i])) - 1.0);
    for (std::size_t i = 0; i < masks.n2.size(); ++i) {
        const double q = 2.0 * h * rv.field.at(face_cell(s.n2_out[i]));
        q2[masks.n2[i]] = q;
        alpha_sum.add(q);
    }
    result.alpha = alpha_sum.value();
    require(std::fabs(result.alpha) > 1e-10,
            "degenerate geometry: interface capacity of the auxiliary field vanishes");

    KahanSum<double> wall_sum;
    for (const std::int64_t key : masks.d1)
        wall_sum.add(g.at(key) * area);
    for (const std::int64_t key : masks.gamma)
        wall_sum.add(face_trace(rv, key) * g.at(key) * area);
    const double wall_coupling = wall_sum.value();

    const std::int64_t x1 = anchor_cell(masks, CellLabel::HANDLE1);
    const std::int64_t x2 = anchor_cell(masks, CellLabel::HANDLE2);

    FaceMap trace1, trace2;
    ScalarField up_prev;
    for (int n = 0; n <= order_N; ++n) {
        ScalarField u1, u2t;
        FaceMap f1, f2;
        double comp = 0.0;
        if (n == 0) {
            u1 = make_field(grid, 0.0);
            u2t = make_field(grid, 0.0);
            for (const std::int64_t key : masks.n1)
                trace1[key] = 0.0;
            for (const std::int64_t key : masks.n2)
                trace2[key] = 0.0;
        } else {
            for (std::size_t i = 0; i < masks.n1.size(); ++i)
                f1[masks.n1[i]] =
                    (up_prev.at(face_cell(s.n1_out[i])) - trace1.at(masks.n1[i])) * 2.0 / h;
            for (std::size_t i = 0; i < masks.n2.size(); ++i)
                f2[masks.n2[i]] =
                    (up_prev.at(face_cell(s.n2_out[i])) - trace2.at(masks.n2[i])) * 2.0 / h;

            // The previous order's constant resolution makes each handle's
            // flux data compatible up to solver residual; measure that
            // imbalance, reject if it is structural, and project the dust
            // off so the anchored solves see exactly balanced data.
            for (const auto& [faces, fmap, dwall] :
                 {std::tuple{&masks.n1, &f1, &masks.d1}, std::tuple{&masks.n2, &f2, &masks.d2}}) {
                KahanSum<double> total, scale;
                for (const std::int64_t key : *faces) {
                    total.add(fmap->at(key) * area);
                    scale.add(std::fabs(fmap->at(key)) * area);
                }
                if (n == 1)
                    for (const std::int64_t key : *dwall) {
                        total.add(g.at(key) * area);
                        scale.add(std::fabs(g.at(key)) * area);
                    }
                const double imbalance = total.value();
                require(std::fabs(imbalance) <= 1e-6 * std::max(1.0, scale.value()),
                        "cascade flux data incompatible at this order");
                comp = std::max(comp, std::fabs(imbalance));
                const double shift = imbalance / (static_cast<double>(faces->size()) * area);
                for (const std::int64_t key : *faces)
                    (*fmap)[key] -= shift;
            }

            BoundaryCondition bc1, bc2;
            bc1.neumann = f1;
            bc2.neumann = f2;
            for (const std::int64_t key : masks.d1)
                bc1.neumann[key] = n == 1 ? g.at(key) : 0.0;
            for (const std::int64_t key : masks.d2)
                bc2.neumann[key] = n == 1 ? g.at(key) : 0.0;
            bc1.anchors = {{x1, 0.0}};
            bc2.anchors = {{x2, 0.0}};
            u1 = solve_mixed(grid, s.unit_sigma, s.in_h1, bc1, tol).field;
            u2t = solve_mixed(grid, s.unit_sigma, s.in_h2, bc2, tol).field;
            for (const std::int64_t key : masks.n1)
                trace1[key] = u1.at(face_cell(key)) + 0.5 * h * f1.at(key);
            for (const std::int64_t key : masks.n2)
                trace2[key] = u2t.at(face_cell(key)) + 0.5 * h * f2.at(key);
        }
        result.compatibility_residual.push_back(comp);

        KahanSum<double> coupling;
        for (const std::int64_t key : masks.n1)
            coupling.add(trace1.at(key) * q1.at(key));
        for (const std::int64_t key : masks.n2)
            coupling.add(trace2.at(key) * q2.at(key));
        const double a_n =
            -((n == 0 ? wall_coupling : 0.0) + coupling.value()) / result.alpha;
        result.a.push_back(a_n);
        for (std::size_t c = 0; c < u2t.values.size(); ++c)
            if (s.in_h2[c])
                u2t.values[c] += a_n;
        for (const std::int64_t key : masks.n2)
            trace2[key] += a_n;

        BoundaryCondition bcp;
        for (const std::int64_t key : masks.gamma)
            bcp.neumann[key] = n == 0 ? g.at(key) : 0.0;
        for (std::size_t i = 0; i < masks.n1.size(); ++i)
            bcp.dirichlet[s.n1_out[i]] = trace1.at(masks.n1[i]);
        for (std::size_t i = 0; i < masks.n2.size(); ++i)
            bcp.dirichlet[s.n2_out[i]] = trace2.at(masks.n2[i]);
        const SolveReport rp = solve_mixed(grid, s.unit_sigma, s.in_plus, bcp, tol);

        result.terms.push_back(detail::combine_terms(grid, u1, u2t, rp.field));
        up_prev = rp.field;
    }
    result.beta1 = 0.0;
    result.beta2 = result.a.front();
    return result;
}

inline CascadeResult neumann_limit(const RegionMasks& masks, const FaceMap& g,
                                   double tol = 1e-10) {
    return neumann_expansion(masks, g, 0, tol);
}

// Partial sum of the expansion at a given contrast.
inline ScalarField eval_expansion(const CascadeResult& result, double eta) {
    require(!result.terms.empty(), "expansion holds no terms");
    ScalarField out = result.terms.front();
    double w = 1.0;
    for (std::size_t n = 1; n < result.terms.size(); ++n) {
        w *= eta;
        for (std::size_t c = 0; c < out.values.size(); ++c)
            out.values[c] += w * result.terms[n].values[c];
    }
    return out;
}

struct RegionNorms {
    double l2 = 0.0;
    double max = 0.0;
};

inline RegionNorms region_norms(const ScalarField& f, const RegionMasks& masks, CellLabel which) {
    RegionNorms out;
    KahanSum<double> sq;
    for (std::size_t c = 0; c < f.values.size(); ++c) {
        if (masks.cell[c] != which)
            continue;
        sq.add(f.values[c] * f.values[c]);
        out.max = std::max(out.max, std::fabs(f.values[c]));
    }
    const double h = f.grid.spacing_h;
    out.l2 = std::sqrt(sq.value() * h * h * h);
    return out;
}

inline std::string cascade_csv(const CascadeResult& result, const RegionMasks& masks) {
    std::string csv = "n,region,norm_L2,norm_max\r\n";
    for (std::size_t n = 0; n < result.terms.size(); ++n)
        for (const auto& [name, label] :
             {std::pair{"handle1", CellLabel::HANDLE1}, std::pair{"handle2", CellLabel::HANDLE2},
              std::pair{"plus", CellLabel::PLUS}}) {
            const RegionNorms norms = region_norms(result.terms[n], masks, label);
            csv += std::to_string(n) + "," + name + "," + detail::format_g17(norms.l2) + "," +
                   detail::format_g17(norms.max) + "\r\n";
        }
    return csv;
}

inline nlohmann::json cascade_json(const CascadeResult& result) {
    nlohmann::json j;
    j["branch"] = result.branch == CascadeBranch::DIRICHLET ? "dirichlet" : "neumann";
    j["order_N"] = result.order_N;
    j["beta1"] = result.beta1;
    j["beta2"] = result.beta2;
    j["a"] = result.a;
    j["alpha"] = result.alpha;
    j["compatibility_residual"] = result.compatibility_residual;
    return j;
}

}  // namespace critforge
