#pragma once

// Config-driven scenario runner.  A scenario is a named, reproducible
// experiment over the high-contrast laboratory: the config (JSON) pins every
// knob, validation reports problems as a diagnostics list before anything is
// written, and execution is staged so a failure carries the stage label while
// artifacts written by earlier stages survive.  Reruns of the same config
// into the same directory produce byte-identical artifacts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cascade.hpp"
#include "cylinder.hpp"
#include "geometry.hpp"
#include "topology.hpp"

namespace critforge {

// ---- configuration ---------------------------------------------------------

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {
        "fig3_lambda",       "eta_sweep_dirichlet", "eta_sweep_neumann", "pipeline_dirichlet",
        "pipeline_neumann",  "mollify_stability",   "shrinking_patch",   "multi_bc"};
    return names;
}

// Wall-data selection.  Named closed forms; the patch values are constant
// overrides applied on the two handle-contact face sets.
//   reference_ramp : Dirichlet values d1 on the first patch, d2 on the second,
//                    radial ramps between them on the x walls, d2 elsewhere.
//   radial_linear  : Dirichlet values d1 + wall distance from the cylinder
//                    axis on every wall face, patches included (the form the
//                    shrinking-patch study averages; d2 is unused).
//   patch_bumps    : flux density (co-normal derivative): +d1 on the first
//                    patch, a positive radial bump on the wall disk facing the
//                    cylinder, an exactly balancing negative constant on the
//                    second patch, zero elsewhere.  d2 is ignored: the
//                    negative level is fixed by discrete flux balance.
struct DataSpec {
    std::string name = "reference_ramp";
    double d1_value = 1.0;
    double d2_value = 2.0;
};

struct ScenarioConfig {
    std::string scenario = "pipeline_dirichlet";

    // Apparatus.  geometry_b is only read by multi_bc (second apparatus);
    // when absent it defaults to the y-mirror image of geometry.
    DomainSpec geometry = reference_domain_spec();
    std::optional<DomainSpec> geometry_b;
    DataSpec data;

    int grid_n = 32;                 // cells per box edge (cubic grid)
    double eta = 1e-3;               // contrast parameter for single-solve scenarios
    std::vector<double> eta_list = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};  // sweep contrasts
    int series_terms = 200;          // separable-series truncation (fig3_lambda)
    int expansion_order = 1;         // highest retained order in contrast expansions
    double solver_tol = 1e-10;       // relative residual target for linear solves
    double probe_radius = 0.25;      // certification sphere radius
    std::vector<double> eps_cells = {4.0, 2.0};        // mollifier widths, grid spacings
    std::vector<double> rho_list = {0.4, 0.2, 0.1};    // shrinking patch radii
    std::vector<double> height_list = {1.0, 2.0, 4.0, 8.0};  // cylinder heights (fig3_lambda)
    double radius_a = 1.0;           // cylinder radius (fig3_lambda)
    std::string out_dir = "out";     // artifact directory
};

inline bool scenario_uses_flux_data(const std::string& scenario) {
    return scenario == "eta_sweep_neumann" || scenario == "pipeline_neumann";
}

namespace detail {

inline nlohmann::json data_spec_json(const DataSpec& d) {
    nlohmann::json j;
    j["name"] = d.name;
    j["d1_value"] = d.d1_value;
    j["d2_value"] = d.d2_value;
    return j;
}

inline DataSpec parse_data_spec(const nlohmann::json& j, const std::string& scenario) {
    DataSpec d;
    if (scenario_uses_flux_data(scenario))
        d.name = "patch_bumps";
    else if (scenario == "shrinking_patch")
        d.name = "radial_linear";
    if (j.is_null())
        return d;
    require(j.is_object(), "data must be an object");
    if (j.contains("name"))
        d.name = j.at("name").get<std::string>();
    if (j.contains("d1_value"))
        d.d1_value = j.at("d1_value").get<double>();
    if (j.contains("d2_value"))
        d.d2_value = j.at("d2_value").get<double>();
    return d;
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& slot) {
    if (j.contains(key))
        slot = j.at(key).get<T>();
}

}  // namespace detail

// Serialize the fully resolved configuration: every knob appears, defaults
// included, so a run is reproducible from the echoed JSON alone.
inline nlohmann::json scenario_config_json(const ScenarioConfig& cfg) {
    nlohmann::json j;
    j["scenario"] = cfg.scenario;
    j["geometry"] = domain_spec_json(cfg.geometry);
    if (cfg.geometry_b)
        j["geometry_b"] = domain_spec_json(*cfg.geometry_b);
    j["data"] = detail::data_spec_json(cfg.data);
    j["grid_n"] = cfg.grid_n;
    j["eta"] = cfg.eta;
    j["eta_list"] = cfg.eta_list;
    j["series_terms"] = cfg.series_terms;
    j["expansion_order"] = cfg.expansion_order;
    j["solver_tol"] = cfg.solver_tol;
    j["probe_radius"] = cfg.probe_radius;
    j["eps_cells"] = cfg.eps_cells;
    j["rho_list"] = cfg.rho_list;
    j["height_list"] = cfg.height_list;
    j["radius_a"] = cfg.radius_a;
    j["out_dir"] = cfg.out_dir;
    return j;
}

inline ScenarioConfig parse_scenario_config(const nlohmann::json& j) {
    require(j.is_object(), "config must be a JSON object");
    ScenarioConfig cfg;
    detail::read_if(j, "scenario", cfg.scenario);
    if (j.contains("geometry"))
        cfg.geometry = parse_domain_spec(j.at("geometry"));
    if (j.contains("geometry_b"))
        cfg.geometry_b = parse_domain_spec(j.at("geometry_b"));
    cfg.data = detail::parse_data_spec(j.contains("data") ? j.at("data") : nlohmann::json(),
                                       cfg.scenario);
    detail::read_if(j, "grid_n", cfg.grid_n);
    detail::read_if(j, "eta", cfg.eta);
    detail::read_if(j, "eta_list", cfg.eta_list);
    detail::read_if(j, "series_terms", cfg.series_terms);
    detail::read_if(j, "expansion_order", cfg.expansion_order);
    detail::read_if(j, "solver_tol", cfg.solver_tol);
    detail::read_if(j, "probe_radius", cfg.probe_radius);
    detail::read_if(j, "eps_cells", cfg.eps_cells);
    detail::read_if(j, "rho_list", cfg.rho_list);
    detail::read_if(j, "height_list", cfg.height_list);
    detail::read_if(j, "radius_a", cfg.radius_a);
    detail::read_if(j, "out_dir", cfg.out_dir);
    return cfg;
}

// ---- validation -------------------------------------------------------------

namespace detail {

// Mirror an apparatus across the y = 0 plane (centers and patch points flip
// their y coordinate; symmetric extents are unchanged).
inline DomainSpec mirror_y(const DomainSpec& spec) {
    DomainSpec m = spec;
    m.cylinder.center.y = -m.cylinder.center.y;
    for (HandleSpec& hs : m.handles) {
        for (Shell& s : hs.shells)
            s.center.y = -s.center.y;
        for (CapsuleChain& t : hs.tubes)
            for (Vec3& p : t.points)
                p.y = -p.y;
        hs.patch_point.y = -hs.patch_point.y;
    }
    return m;
}

inline void check_geometry(const DomainSpec& spec, int grid_n, const std::string& label,
                           std::vector<std::string>& out) {
    try {
        spec.validate();
        const Grid3 grid = grid_for(spec, grid_n);
        const MaskBuild mb = build_masks_checked(spec, grid);
        for (const std::string& d : mb.diagnostics)
            out.push_back(label + ": " + d);
    } catch (const std::exception& e) {
        out.push_back(label + ": " + e.what());
    }
}

inline std::int64_t shared_tube_cells(const RegionMasks& a, const RegionMasks& b) {
    std::int64_t shared = 0;
    for (std::size_t c = 0; c < a.cell.size(); ++c)
        if (a.cell[c] != CellLabel::PLUS && b.cell[c] != CellLabel::PLUS)
            ++shared;
    return shared;
}

}  // namespace detail

// Resolve derived defaults that depend on other fields (currently: the second
// apparatus of multi_bc defaults to the y-mirror of the first).
inline ScenarioConfig resolve_defaults(ScenarioConfig cfg) {
    if (cfg.scenario == "multi_bc" && !cfg.geometry_b)
        cfg.geometry_b = detail::mirror_y(cfg.geometry);
    return cfg;
}

// Semantic validation: returns a list of human-readable diagnostics (empty
// means runnable).  Never throws for a bad configuration; a run refuses to
// start while this list is nonempty.
inline std::vector<std::string> validate_scenario(const ScenarioConfig& raw) {
    const ScenarioConfig cfg = resolve_defaults(raw);
    std::vector<std::string> out;
    const auto& names = scenario_names();
    if (std::find(names.begin(), names.end(), cfg.scenario) == names.end()) {
        out.push_back("unknown scenario '" + cfg.scenario + "'");
        return out;  // nothing else is interpretable
    }

    if (cfg.grid_n < 8)
        out.push_back("grid_n must be at least 8");
    if (!(cfg.solver_tol > 0.0) || cfg.solver_tol > 1e-4)
        out.push_back("solver_tol must lie in (0, 1e-4]");
    if (!(cfg.probe_radius > 0.0))
        out.push_back("probe_radius must be positive");
    if (cfg.series_terms < 1)
        out.push_back("series_terms must be at least 1");
    if (cfg.expansion_order < 0)
        out.push_back("expansion_order must be nonnegative");

    const auto check_eta = [&out](double eta, const std::string& what) {
        if (!(eta > 0.0) || eta >= 1.0)
            out.push_back(what + " must lie in (0, 1)");
        else if (eta < 1e-6)
            out.push_back(what + " = " + detail::format_g17(eta) + " gives contrast " +
                          detail::format_g17(1.0 / eta) +
                          " beyond the conditioning budget; keep it at or above 1e-6");
    };

    const std::string s = cfg.scenario;
    const bool sweeps = s == "eta_sweep_dirichlet" || s == "eta_sweep_neumann";
    const bool single_eta = s == "pipeline_dirichlet" || s == "pipeline_neumann" ||
                            s == "mollify_stability" || s == "multi_bc";
    if (single_eta)
        check_eta(cfg.eta, "eta");
    if (sweeps) {
        if (cfg.eta_list.size() < 2)
            out.push_back("eta_list needs at least two entries to fit a slope");
        for (double e : cfg.eta_list)
            check_eta(e, "eta_list entry");
        if (cfg.expansion_order < 1)
            out.push_back("eta sweeps need expansion_order >= 1");
    }

    if (s == "fig3_lambda") {
        if (cfg.height_list.empty())
            out.push_back("height_list must not be empty");
        for (double H : cfg.height_list)
            if (!(H > 0.0))
                out.push_back("height_list entries must be positive");
        if (!(cfg.radius_a > 0.0))
            out.push_back("radius_a must be positive");
        return out;  // no 3d apparatus involved
    }

    if (s == "mollify_stability" || s == "pipeline_dirichlet" || s == "pipeline_neumann") {
        if (cfg.eps_cells.empty())
            out.push_back("eps_cells must not be empty");
        for (double e : cfg.eps_cells)
            if (!(e >= 2.0))
                out.push_back("eps_cells entries must be at least 2 (mollifier support)");
    }

    if (s == "shrinking_patch") {
        if (cfg.rho_list.empty())
            out.push_back("rho_list must not be empty");
        for (double rho : cfg.rho_list)
            if (!(rho > 0.0) || rho > 0.45)
                out.push_back("rho_list entries must lie in (0, 0.45]");
        if (cfg.data.name != "radial_linear")
            out.push_back("shrinking_patch needs data that varies over the patch; "
                          "set data.name to radial_linear");
        return out;  // the scenario builds its own apparatus per rho
    }

    if (scenario_uses_flux_data(s)) {
        if (cfg.data.name != "patch_bumps")
            out.push_back("scenario '" + s + "' drives flux data; set data.name to patch_bumps");
        if (cfg.geometry.handles[0].empty() || cfg.geometry.handles[1].empty())
            out.push_back("scenario '" + s + "' needs both handles present");
    } else if (cfg.data.name != "reference_ramp" && cfg.data.name != "radial_linear") {
        out.push_back("scenario '" + s + "' drives boundary values; set data.name to " +
                      std::string("reference_ramp or radial_linear"));
    }

    detail::check_geometry(cfg.geometry, cfg.grid_n, "geometry", out);
    if (s == "multi_bc") {
        detail::check_geometry(*cfg.geometry_b, cfg.grid_n, "geometry_b", out);
        const DomainSpec& a = cfg.geometry;
        const DomainSpec& b = *cfg.geometry_b;
        const bool same_box = std::fabs(a.box_lo.x - b.box_lo.x) < 1e-12 &&
                              std::fabs(a.box_lo.y - b.box_lo.y) < 1e-12 &&
                              std::fabs(a.box_lo.z - b.box_lo.z) < 1e-12 &&
                              std::fabs(a.box_hi.x - b.box_hi.x) < 1e-12 &&
                              std::fabs(a.box_hi.y - b.box_hi.y) < 1e-12 &&
                              std::fabs(a.box_hi.z - b.box_hi.z) < 1e-12;
        if (!same_box)
            out.push_back("multi_bc apparatuses must share one box");
        else if (out.empty()) {
            const Grid3 grid = grid_for(a, cfg.grid_n);
            const std::int64_t shared = detail::shared_tube_cells(build_masks(a, grid),
                                                                  build_masks(b, grid));
            if (shared > 0)
                out.push_back("multi_bc tube sets overlap in " + std::to_string(shared) +
                              " cells; the two apparatuses must be disjoint");
        }
    }
    return out;
}

// Validate a raw JSON config: unknown keys, type errors, then semantics.
// On a clean parse *parsed (if given) receives the resolved config.
inline std::vector<std::string> validate_config_json(const nlohmann::json& j,
                                                     ScenarioConfig* parsed = nullptr) {
    std::vector<std::string> out;
    if (!j.is_object()) {
        out.push_back("config must be a JSON object");
        return out;
    }
    static const std::set<std::string> known = {
        "scenario",  "geometry",       "geometry_b", "data",        "grid_n",
        "eta",       "eta_list",       "series_terms", "expansion_order", "solver_tol",
        "probe_radius", "eps_cells",   "rho_list",   "height_list", "radius_a",
        "out_dir"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            out.push_back("unknown config key '" + key + "'");
    }
    if (j.contains("data") && j.at("data").is_object()) {
        static const std::set<std::string> known_data = {"name", "d1_value", "d2_value"};
        for (const auto& [key, value] : j.at("data").items()) {
            (void)value;
            if (!known_data.count(key))
                out.push_back("unknown data key '" + key + "'");
        }
    }
    ScenarioConfig cfg;
    try {
        cfg = parse_scenario_config(j);
    } catch (const std::exception& e) {
        out.push_back(std::string("config parse: ") + e.what());
        return out;
    }
    const std::vector<std::string> sem = validate_scenario(cfg);
    out.insert(out.end(), sem.begin(), sem.end());
    if (out.empty() && parsed)
        *parsed = resolve_defaults(cfg);
    return out;
}

// ---- wall data --------------------------------------------------------------

// Build the selected wall data for one apparatus.  Every form centers its
// radial profile on the apparatus cylinder axis, so a displaced copy of the
// layout gets correspondingly displaced data.
inline FaceMap wall_data(const DomainSpec& spec, const RegionMasks& masks, const DataSpec& d) {
    FaceMap g;
    const Grid3& grid = masks.grid;
    const double xlo = grid.origin.x;
    const double xhi = grid.origin.x + grid.nx * grid.spacing_h;
    const double cy = spec.cylinder.center.y, cz = spec.cylinder.center.z;
    const double a = spec.cylinder.radius > 0.0 ? spec.cylinder.radius : 0.5;
    const double p1r = !spec.handles[0].empty() && spec.handles[0].patch_radius > 0.0
                           ? spec.handles[0].patch_radius
                           : a;
    const auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
    const auto ramp = [&](double t) { return d.d1_value + (d.d2_value - d.d1_value) * t; };

    if (d.name == "reference_ramp") {
        for (const auto& [key, label] : masks.boundary) {
            const Vec3 p = face_center(grid, key);
            const double r = std::hypot(p.y - cy, p.z - cz);
            if (label == FaceLabel::D1)
                g[key] = d.d1_value;
            else if (label == FaceLabel::D2)
                g[key] = d.d2_value;
            else if (std::fabs(p.x - xlo) < 0.5 * grid.spacing_h)
                g[key] = ramp(clamp01((r - 0.76 * a) / (0.24 * a)));
            else if (std::fabs(p.x - xhi) < 0.5 * grid.spacing_h)
                g[key] = ramp(clamp01((r - p1r) / 0.3));
            else
                g[key] = d.d2_value;
        }
        return g;
    }
    if (d.name == "radial_linear") {
        // One closed form on every wall face, patches included: the data a
        // shrinking wall patch averages must vary over the patch, so nothing
        // is pinned here.  d2 is unused.
        for (const auto& [key, label] : masks.boundary) {
            (void)label;
            const Vec3 p = face_center(grid, key);
            g[key] = d.d1_value + std::hypot(p.y - cy, p.z - cz);
        }
        return g;
    }
    if (d.name == "patch_bumps") {
        // Flux density: positive on the first patch and on a bump over the
        // wall disk the cylinder rests on, negative constant on the second
        // patch sized so the discrete total flux is exactly zero.
        require(!masks.d2.empty(), "patch_bumps needs second-handle wall contact");
        const double bump_r = 0.76 * a;
        KahanSum<double> positive;
        for (const auto& [key, label] : masks.boundary) {
            const Vec3 p = face_center(grid, key);
            double v = 0.0;
            if (label == FaceLabel::D1)
                v = d.d1_value;
            else if (label == FaceLabel::GAMMA && std::fabs(p.x - xlo) < 0.5 * grid.spacing_h) {
                const double r = std::hypot(p.y - cy, p.z - cz);
                if (r < bump_r)
                    v = d.d1_value * (1.0 - (r / bump_r) * (r / bump_r));
            }
            g[key] = v;
            positive.add(v);
        }
        const double sink = positive.value() / static_cast<double>(masks.d2.size());
        for (const std::int64_t key : masks.d2)
            g[key] = -sink;
        return g;
    }
    throw std::runtime_error("unknown data form '" + d.name + "'");
}

// ---- shared numerics ---------------------------------------------------------

struct PowerFit {
    double slope = 0.0;                   // least-squares slope of log e vs log x
    std::vector<double> interval_ratios;  // slope over each consecutive pair
};

inline PowerFit fit_loglog(const std::vector<double>& x, const std::vector<double>& e) {
    require(x.size() == e.size() && x.size() >= 2, "slope fit needs matched lists, length >= 2");
    PowerFit fit;
    std::vector<double> lx(x.size()), le(e.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] > 0.0 && e[i] > 0.0, "slope fit needs positive values");
        lx[i] = std::log(x[i]);
        le[i] = std::log(e[i]);
    }
    double mx = 0.0, me = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        me += le[i];
    }
    mx /= static_cast<double>(lx.size());
    me /= static_cast<double>(lx.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        num += (lx[i] - mx) * (le[i] - me);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    require(den > 0.0, "slope fit needs at least two distinct abscissae");
    fit.slope = num / den;
    for (std::size_t i = 0; i + 1 < lx.size(); ++i)
        fit.interval_ratios.push_back((le[i] - le[i + 1]) / (lx[i] - lx[i + 1]));
    return fit;
}

inline nlohmann::json power_fit_json(const PowerFit& fit) {
    nlohmann::json j;
    j["slope"] = fit.slope;
    j["interval_ratios"] = fit.interval_ratios;
    return j;
}

struct AxisScan {
    Vec3 point{0.0, 0.0, 0.0};
    double grad_norm = 0.0;
    double value = 0.0;
};

// Gradient-magnitude argmin along the cylinder axis (ends pulled in three
// spacings so the sampling stencils stay inside the cell-center hull).
inline AxisScan scan_cylinder_axis(const ScalarField& u, const CylinderGeom& cyl,
                                   int samples = 401) {
    require(!cyl.empty(), "axis scan needs a cylinder");
    require(samples >= 2, "axis scan needs at least 2 samples");
    const double span = 0.5 * cyl.height - 3.0 * u.grid.spacing_h;
    require(span > 0.0, "cylinder too short to scan at this resolution");
    Vec3 dir{0.0, 0.0, 0.0};
    (cyl.axis == 0 ? dir.x : cyl.axis == 1 ? dir.y : dir.z) = 1.0;
    AxisScan best;
    best.grad_norm = INFINITY;
    for (int i = 0; i < samples; ++i) {
        const double t = -span + 2.0 * span * i / (samples - 1);
        const Vec3 p = cyl.center + dir * t;
        const double gn = norm(sample_gradient(u, p));
        if (gn < best.grad_norm)
            best = AxisScan{p, gn, detail::trilinear(u, p)};
    }
    return best;
}

// Reflection certifying an axial saddle of the boundary-value branch
// (negative curvature along the cylinder axis)...
inline Reflection value_branch_reflection(int axis) {
    Reflection r{1.0, 1.0, 1.0};
    r[static_cast<std::size_t>(axis)] = -1.0;
    return r;
}

// ...and of the flux branch, whose saddle carries the opposite signature
// (positive curvature along the axis, negative across it).
inline Reflection flux_branch_reflection(int axis) {
    Reflection r{-1.0, -1.0, -1.0};
    r[static_cast<std::size_t>(axis)] = 1.0;
    return r;
}

// ---- scenario runner ---------------------------------------------------------

struct ScenarioResult {
    bool ok = true;
    std::string failure_stage;
    std::string failure_message;
    std::vector<std::string> artifacts;  // file names inside out_dir, write order
    nlohmann::json manifest;             // resolved config + summary + status
};

namespace detail {

inline void write_artifact(const std::filesystem::path& dir, const std::string& name,
                           const std::string& text, ScenarioResult& res) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os.good())
        throw std::runtime_error("cannot open artifact '" + name + "'");
    os << text;
    if (!os.good())
        throw std::runtime_error("artifact write failed for '" + name + "'");
    if (std::find(res.artifacts.begin(), res.artifacts.end(), name) == res.artifacts.end())
        res.artifacts.push_back(name);
}

inline void write_json_artifact(const std::filesystem::path& dir, const std::string& name,
                                const nlohmann::json& j, ScenarioResult& res) {
    write_artifact(dir, name, j.dump(2) + "\n", res);
}

// Run one stage; on failure record the stage label and stop the scenario.
template <class F>
bool stage(ScenarioResult& res, const std::string& label, F&& body) {
    if (!res.ok)
        return false;
    try {
        body();
        return true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.failure_stage = label;
        res.failure_message = e.what();
        return false;
    }
}

inline RegionMasks masks_or_throw(const DomainSpec& spec, const Grid3& grid) {
    MaskBuild mb = build_masks_checked(spec, grid);
    if (!mb.diagnostics.empty()) {
        std::string msg = "infeasible apparatus:";
        for (const std::string& d : mb.diagnostics)
            msg += "\n  " + d;
        throw std::runtime_error(msg);
    }
    return std::move(mb.masks);
}

inline double region_mean(const ScalarField& f, const RegionMasks& masks, CellLabel which) {
    KahanSum<double> sum;
    std::int64_t count = 0;
    for (std::size_t c = 0; c < f.values.size(); ++c)
        if (masks.cell[c] == which) {
            sum.add(f.values[c]);
            ++count;
        }
    require(count > 0, "region mean over an empty region");
    return sum.value() / static_cast<double>(count);
}

struct CoreNorms {
    double max = 0.0;
    double l2 = 0.0;
};

inline CoreNorms core_norms(const ScalarField& f, const std::vector<std::int64_t>& cells) {
    require(!cells.empty(), "core norm over an empty cell set");
    CoreNorms out;
    KahanSum<double> sq;
    for (const std::int64_t c : cells) {
        const double v = f.at(c);
        out.max = std::max(out.max, std::fabs(v));
        sq.add(v * v);
    }
    const double h = f.grid.spacing_h;
    out.l2 = std::sqrt(sq.value() * h * h * h);
    return out;
}

// Certify the axial critical point of a solved field: scan the axis, probe at
// the argmin, and report the certificate plus the located-zero quality ratio
// (gradient there over the largest gradient met on the probe sphere).
struct CertifyOutcome {
    AxisScan scan;
    DegreeReport report;
    double zero_ratio = -1.0;
};

inline CertifyOutcome certify_axial(const ScalarField& field, const CylinderGeom& cyl,
                                    double probe_radius, const Reflection& reflection) {
    CertifyOutcome out;
    out.scan = scan_cylinder_axis(field, cyl);
    const SphereProbe probe = make_probe(out.scan.point, probe_radius, 4);
    out.report = certify_critical_point(field, probe, reflection);
    if (out.report.zero_found) {
        double gmax = 0.0;
        for (const Vec3& v : probe.vertices)
            gmax = std::max(gmax, norm(sample_gradient(field, v)));
        out.zero_ratio = gmax > 0.0 ? norm(sample_gradient(field, out.report.zero_point)) / gmax
                                    : INFINITY;
    }
    return out;
}

inline nlohmann::json certify_json(const CertifyOutcome& c) {
    nlohmann::json j = degree_report_json(c.report, 4);
    j["scan_point"] = {c.scan.point.x, c.scan.point.y, c.scan.point.z};
    j["scan_grad_norm"] = c.scan.grad_norm;
    j["scan_value"] = c.scan.value;
    j["zero_grad_ratio"] = c.zero_ratio;
    return j;
}

// ---- individual scenarios ----

inline void run_fig3_lambda(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                            ScenarioResult& res) {
    std::vector<SweepRow> rows;
    if (!stage(res, "series", [&] {
            rows = lambda_sweep(cfg.height_list, cfg.radius_a, cfg.series_terms);
        }))
        return;
    stage(res, "artifacts", [&] {
        write_artifact(dir, "lambda.csv", lambda_sweep_csv(rows), res);
        nlohmann::json summary;
        for (const SweepRow& r : rows)
            summary["lambda"].push_back(r.lambda);
        summary["trace_residual_max"] = 0.0;
        for (const SweepRow& r : rows)
            summary["trace_residual_max"] =
                std::max(summary["trace_residual_max"].get<double>(), r.trace_residual);
        res.manifest["summary"] = summary;
    });
}

inline void run_eta_sweep(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                          ScenarioResult& res, bool flux_branch) {
    Grid3 grid;
    RegionMasks masks;
    FaceMap g;
    CascadeResult expansion;
    if (!stage(res, "masks", [&] {
            grid = grid_for(cfg.geometry, cfg.grid_n);
            masks = masks_or_throw(cfg.geometry, grid);
        }))
        return;
    if (!stage(res, "boundary-data", [&] { g = wall_data(cfg.geometry, masks, cfg.data); }))
        return;
    if (!stage(res, "expansion", [&] {
            expansion = flux_branch
                            ? neumann_expansion(masks, g, std::max(1, cfg.expansion_order),
                                                cfg.solver_tol)
                            : dirichlet_expansion(masks, g, std::max(1, cfg.expansion_order),
                                                  cfg.solver_tol);
            write_artifact(dir, "expansion.csv", cascade_csv(expansion, masks), res);
        }))
        return;

    const std::vector<std::int64_t> core = core_cylinder_cells(masks, cfg.geometry.cylinder);
    struct Row {
        double eta;
        int iterations;
        double err0_max, err0_l2, err1_max, err1_l2;  // value branch
        double plateau1, plateau2, abs_err;           // flux branch
    };
    std::vector<Row> rows;
    const auto sweep_csv = [&] {
        std::string csv = flux_branch ? "eta,iterations,plateau1,plateau2,abs_err\r\n"
                                      : "eta,iterations,err_order0_max,err_order0_l2,"
                                        "err_order1_max,err_order1_l2\r\n";
        for (const Row& r : rows) {
            csv += format_g17(r.eta) + "," + std::to_string(r.iterations) + ",";
            if (flux_branch)
                csv += format_g17(r.plateau1) + "," + format_g17(r.plateau2) + "," +
                       format_g17(r.abs_err) + "\r\n";
            else
                csv += format_g17(r.err0_max) + "," + format_g17(r.err0_l2) + "," +
                       format_g17(r.err1_max) + "," + format_g17(r.err1_l2) + "\r\n";
        }
        return csv;
    };

    ScalarField warm;  // previous solution primes the next solve
    bool have_warm = false;
    for (const double eta : cfg.eta_list) {
        const bool done = stage(res, "solve eta=" + format_g17(eta), [&] {
            const ConductivityField sigma = conductivity(masks, eta);
            BoundaryCondition bc;
            if (flux_branch) {
                bc.neumann = g;
                bc.anchors = {{anchor_cell(masks, CellLabel::HANDLE1), 0.0}};
            } else {
                bc.dirichlet = g;
            }
            const SolveReport rep =
                solve(grid, sigma, bc, cfg.solver_tol, have_warm ? &warm : nullptr);
            warm = rep.field;
            have_warm = true;
            Row row{};
            row.eta = eta;
            row.iterations = rep.iterations;
            if (flux_branch) {
                row.plateau1 = region_mean(rep.field, masks, CellLabel::HANDLE1);
                row.plateau2 = region_mean(rep.field, masks, CellLabel::HANDLE2);
                row.abs_err = std::fabs(row.plateau2 - expansion.beta2);
            } else {
                ScalarField diff0 = rep.field;
                for (std::size_t c = 0; c < diff0.values.size(); ++c)
                    diff0.values[c] -= expansion.terms[0].values[c];
                ScalarField diff1 = diff0;
                for (std::size_t c = 0; c < diff1.values.size(); ++c)
                    diff1.values[c] -= eta * expansion.terms[1].values[c];
                const CoreNorms n0 = core_norms(diff0, core);
                const CoreNorms n1 = core_norms(diff1, core);
                row.err0_max = n0.max;
                row.err0_l2 = n0.l2;
                row.err1_max = n1.max;
                row.err1_l2 = n1.l2;
            }
            rows.push_back(row);
            write_artifact(dir, "sweep.csv", sweep_csv(), res);
        });
        if (!done)
            return;
    }

    stage(res, "fit", [&] {
        nlohmann::json fit;
        std::vector<double> etas;
        for (const Row& r : rows)
            etas.push_back(r.eta);
        if (flux_branch) {
            std::vector<double> errs;
            for (const Row& r : rows)
                errs.push_back(r.abs_err);
            fit["plateau_error"] = power_fit_json(fit_loglog(etas, errs));
            fit["beta2"] = expansion.beta2;
            fit["alpha"] = expansion.alpha;
            double vmin = INFINITY, vmax = -INFINITY;
            for (const double v : expansion.v_field.values) {
                vmin = std::min(vmin, v);
                vmax = std::max(vmax, v);
            }
            fit["v_min"] = vmin;
            fit["v_max"] = vmax;
        } else {
            std::vector<double> e0, e1;
            for (const Row& r : rows) {
                e0.push_back(r.err0_max);
                e1.push_back(r.err1_max);
            }
            fit["order0"] = power_fit_json(fit_loglog(etas, e0));
            // The next-order remainder is fitted where it still dominates
            // rounding and iteration noise: the three largest contrasts.
            std::vector<std::size_t> idx(rows.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                idx[i] = i;
            std::sort(idx.begin(), idx.end(),
                      [&](std::size_t a, std::size_t b) { return etas[a] > etas[b]; });
            std::vector<double> tx, te;
            for (std::size_t i = 0; i < std::min<std::size_t>(3, idx.size()); ++i) {
                tx.push_back(etas[idx[i]]);
                te.push_back(e1[idx[i]]);
            }
            fit["order1"] = power_fit_json(fit_loglog(tx, te));
            fit["order1_points"] = tx.size();
        }
        fit["norm"] = flux_branch ? "handle2 plateau vs expansion limit"
                                  : "max over cylinder core cells";
        write_json_artifact(dir, "fit.json", fit, res);
        res.manifest["summary"] = fit;
    });
}

inline void run_pipeline(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                         ScenarioResult& res, bool flux_branch) {
    Grid3 grid;
    RegionMasks masks;
    FaceMap g;
    if (!stage(res, "masks", [&] {
            grid = grid_for(cfg.geometry, cfg.grid_n);
            masks = masks_or_throw(cfg.geometry, grid);
        }))
        return;
    if (!stage(res, "boundary-data", [&] { g = wall_data(cfg.geometry, masks, cfg.data); }))
        return;

    nlohmann::json stages = nlohmann::json::array();
    std::string report_csv =
        "stage,eps_cells,iterations,min_normal_dot,degree,zero_x,zero_y,zero_z,zero_grad_ratio\r\n";
    const auto flush = [&] {
        nlohmann::json pipeline;
        pipeline["stages"] = stages;
        write_json_artifact(dir, "pipeline.json", pipeline, res);
        write_artifact(dir, "report.csv", report_csv, res);
    };

    if (flux_branch) {
        const bool done = stage(res, "expansion", [&] {
            const CascadeResult limit = neumann_limit(masks, g, cfg.solver_tol);
            require(limit.alpha > 0.0, "interface capacity must be positive");
            nlohmann::json entry;
            entry["stage"] = "limit";
            entry["beta2"] = limit.beta2;
            entry["alpha"] = limit.alpha;
            stages.push_back(entry);
            flush();
        });
        if (!done)
            return;
    }

    const Reflection reflection = flux_branch
                                      ? flux_branch_reflection(cfg.geometry.cylinder.axis)
                                      : value_branch_reflection(cfg.geometry.cylinder.axis);
    const ConductivityField base_sigma = conductivity(masks, cfg.eta);
    ScalarField warm;
    bool have_warm = false;

    // eps_cells = 0 runs the raw conductivity; positive entries re-solve after
    // smoothing it with a bump kernel that wide (in grid spacings).
    std::vector<double> widths = {0.0};
    widths.insert(widths.end(), cfg.eps_cells.begin(), cfg.eps_cells.end());
    for (const double w : widths) {
        const std::string label =
            w == 0.0 ? "certify" : "certify eps=" + format_g17(w) + "h";
        const bool done = stage(res, label, [&] {
            const ConductivityField sigma =
                w == 0.0 ? base_sigma : mollify(base_sigma, w * grid.spacing_h);
            BoundaryCondition bc;
            if (flux_branch) {
                bc.neumann = g;
                bc.anchors = {{anchor_cell(masks, CellLabel::HANDLE1), 0.0}};
            } else {
                bc.dirichlet = g;
            }
            const SolveReport rep =
                solve(grid, sigma, bc, cfg.solver_tol, have_warm ? &warm : nullptr);
            warm = rep.field;
            have_warm = true;
            const CertifyOutcome c =
                certify_axial(rep.field, cfg.geometry.cylinder, cfg.probe_radius, reflection);
            nlohmann::json entry = certify_json(c);
            entry["stage"] = w == 0.0 ? "direct" : "mollified";
            entry["eps_cells"] = w;
            entry["iterations"] = rep.iterations;
            entry["final_residual"] = rep.final_residual;
            stages.push_back(entry);
            char line[256];
            std::snprintf(line, sizeof line, "%s,%s,%d,%s,%d,%s,%s,%s,%s\r\n",
                          w == 0.0 ? "direct" : "mollified", format_g17(w).c_str(),
                          rep.iterations, format_g17(c.report.min_normal_dot).c_str(),
                          c.report.degree, format_g17(c.report.zero_point.x).c_str(),
                          format_g17(c.report.zero_point.y).c_str(),
                          format_g17(c.report.zero_point.z).c_str(),
                          format_g17(c.zero_ratio).c_str());
            report_csv += line;
            flush();
        });
        if (!done)
            return;
    }

    stage(res, "summary", [&] {
        nlohmann::json summary;
        summary["stages"] = stages.size();
        summary["final_stage"] = stages.back();
        res.manifest["summary"] = summary;
    });
}

inline void run_mollify_stability(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                                  ScenarioResult& res) {
    Grid3 grid;
    RegionMasks masks;
    FaceMap g;
    if (!stage(res, "masks", [&] {
            grid = grid_for(cfg.geometry, cfg.grid_n);
            masks = masks_or_throw(cfg.geometry, grid);
        }))
        return;
    if (!stage(res, "boundary-data", [&] { g = wall_data(cfg.geometry, masks, cfg.data); }))
        return;

    const Reflection reflection = value_branch_reflection(cfg.geometry.cylinder.axis);
    const ConductivityField base_sigma = conductivity(masks, cfg.eta);
    struct Row {
        double eps_cells, eps_abs;
        int iterations;
        double min_normal_dot, retention;
        int degree;
        double zero_ratio;
    };
    std::vector<Row> rows;
    const auto stability_csv = [&] {
        std::string csv =
            "eps_cells,eps_abs,iterations,min_normal_dot,retention,degree,zero_grad_ratio\r\n";
        for (const Row& r : rows)
            csv += format_g17(r.eps_cells) + "," + format_g17(r.eps_abs) + "," +
                   std::to_string(r.iterations) + "," + format_g17(r.min_normal_dot) + "," +
                   format_g17(r.retention) + "," + std::to_string(r.degree) + "," +
                   format_g17(r.zero_ratio) + "\r\n";
        return csv;
    };

    double base_min = 0.0;
    ScalarField warm;
    bool have_warm = false;
    std::vector<double> widths = {0.0};
    widths.insert(widths.end(), cfg.eps_cells.begin(), cfg.eps_cells.end());
    for (const double w : widths) {
        const std::string label = w == 0.0 ? "certify" : "certify eps=" + format_g17(w) + "h";
        const bool done = stage(res, label, [&] {
            const ConductivityField sigma =
                w == 0.0 ? base_sigma : mollify(base_sigma, w * grid.spacing_h);
            BoundaryCondition bc;
            bc.dirichlet = g;
            const SolveReport rep =
                solve(grid, sigma, bc, cfg.solver_tol, have_warm ? &warm : nullptr);
            warm = rep.field;
            have_warm = true;
            const CertifyOutcome c =
                certify_axial(rep.field, cfg.geometry.cylinder, cfg.probe_radius, reflection);
            if (w == 0.0)
                base_min = c.report.min_normal_dot;
            rows.push_back(Row{w, w * grid.spacing_h, rep.iterations, c.report.min_normal_dot,
                               base_min > 0.0 ? c.report.min_normal_dot / base_min : -1.0,
                               c.report.degree, c.zero_ratio});
            write_artifact(dir, "stability.csv", stability_csv(), res);
        });
        if (!done)
            return;
    }
    stage(res, "summary", [&] {
        nlohmann::json summary;
        summary["base_min_normal_dot"] = base_min;
        double worst = INFINITY;
        for (const Row& r : rows)
            if (r.eps_cells > 0.0)
                worst = std::min(worst, r.retention);
        summary["worst_retention"] = worst;
        res.manifest["summary"] = summary;
    });
}

// Fixed probe body behind a wall neck whose radius follows rho: the wall
// patch shrinks while everything else stays put.
inline DomainSpec shrinking_patch_spec(double rho) {
    DomainSpec spec;
    spec.box_lo = {-1.25, -1.25, -1.25};
    spec.box_hi = {1.25, 1.25, 1.25};
    spec.cylinder = CylinderGeom{{-0.45, 0.0, 0.0}, 0, 0.5, 1.6};
    HandleSpec& h1 = spec.handles[0];
    h1.shells.push_back(Shell{0, {1.0, 0.0, 0.0}, 0.0, 0.3, 0.0, 0.15});   // body
    h1.shells.push_back(Shell{0, {1.2, 0.0, 0.0}, 0.0, rho, 0.0, 0.051});  // neck
    h1.patch_point = {1.25, 0.0, 0.0};
    h1.patch_radius = rho + 0.1;
    return spec;
}

inline void run_shrinking_patch(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                                ScenarioResult& res) {
    struct Row {
        double rho;
        std::size_t patch_faces;
        double deviation;
    };
    std::vector<Row> rows;
    const auto deviation_csv = [&] {
        std::string csv = "rho,patch_faces,deviation\r\n";
        for (const Row& r : rows)
            csv += format_g17(r.rho) + "," + std::to_string(r.patch_faces) + "," +
                   format_g17(r.deviation) + "\r\n";
        return csv;
    };

    nlohmann::json specs = nlohmann::json::array();
    for (const double rho : cfg.rho_list) {
        const bool done = stage(res, "limit rho=" + format_g17(rho), [&] {
            const DomainSpec spec = shrinking_patch_spec(rho);
            specs.push_back(domain_spec_json(spec));
            const Grid3 grid = grid_for(spec, cfg.grid_n);
            const RegionMasks masks = masks_or_throw(spec, grid);
            const FaceMap g = wall_data(spec, masks, cfg.data);
            const CascadeResult limit = dirichlet_limit(masks, g, cfg.solver_tol);
            // Largest gap between the probe's equipotential level and the
            // target wall value, read on the probe side of its interface.
            const double target = cfg.data.d1_value;
            double dev = 0.0;
            for (const std::int64_t key : masks.n1)
                dev = std::max(dev,
                               std::fabs(limit.terms[0].at(face_cell(key)) - target));
            rows.push_back(Row{rho, masks.d1.size(), dev});
            write_artifact(dir, "deviation.csv", deviation_csv(), res);
        });
        if (!done)
            return;
    }
    stage(res, "summary", [&] {
        res.manifest["resolved_geometry_per_rho"] = specs;
        nlohmann::json summary;
        bool strictly_decreasing = true;
        for (std::size_t i = 0; i + 1 < rows.size(); ++i)
            if (!(rows[i + 1].deviation < rows[i].deviation))
                strictly_decreasing = false;
        for (const Row& r : rows)
            summary["deviation"].push_back(r.deviation);
        summary["strictly_decreasing"] = strictly_decreasing;
        res.manifest["summary"] = summary;
    });
}

inline void run_multi_bc(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                         ScenarioResult& res) {
    const DomainSpec& spec_a = cfg.geometry;
    const DomainSpec& spec_b = *cfg.geometry_b;
    Grid3 grid;
    RegionMasks masks_a, masks_b;
    if (!stage(res, "masks", [&] {
            grid = grid_for(spec_a, cfg.grid_n);
            masks_a = masks_or_throw(spec_a, grid);
            masks_b = masks_or_throw(spec_b, grid);
            const std::int64_t shared = shared_tube_cells(masks_a, masks_b);
            if (shared != 0)
                throw std::runtime_error("apparatus tube sets overlap in " +
                                         std::to_string(shared) + " cells");
        }))
        return;

    // One conductivity carrying both tube systems; each boundary datum is the
    // ramp family centered on its own apparatus.
    ConductivityField sigma = conductivity(masks_a, cfg.eta);
    for (std::size_t c = 0; c < sigma.values.size(); ++c)
        if (masks_b.cell[c] != CellLabel::PLUS)
            sigma.values[c] = 1.0 / cfg.eta;

    nlohmann::json copies = nlohmann::json::array();
    std::string csv =
        "apparatus,iterations,min_normal_dot,degree,zero_x,zero_y,zero_z,zero_grad_ratio\r\n";
    const std::pair<const DomainSpec*, const RegionMasks*> sides[2] = {{&spec_a, &masks_a},
                                                                       {&spec_b, &masks_b}};
    for (int k = 0; k < 2; ++k) {
        const std::string label = k == 0 ? "first" : "second";
        const bool done = stage(res, "certify " + label, [&] {
            const DomainSpec& spec = *sides[k].first;
            const RegionMasks& masks = *sides[k].second;
            const FaceMap g = wall_data(spec, masks, cfg.data);
            BoundaryCondition bc;
            bc.dirichlet = g;
            const SolveReport rep = solve(grid, sigma, bc, cfg.solver_tol);
            const CertifyOutcome c = certify_axial(
                rep.field, spec.cylinder, cfg.probe_radius,
                value_branch_reflection(spec.cylinder.axis));
            nlohmann::json entry = certify_json(c);
            entry["apparatus"] = label;
            entry["iterations"] = rep.iterations;
            copies.push_back(entry);
            char line[256];
            std::snprintf(line, sizeof line, "%s,%d,%s,%d,%s,%s,%s,%s\r\n", label.c_str(),
                          rep.iterations, format_g17(c.report.min_normal_dot).c_str(),
                          c.report.degree, format_g17(c.report.zero_point.x).c_str(),
                          format_g17(c.report.zero_point.y).c_str(),
                          format_g17(c.report.zero_point.z).c_str(),
                          format_g17(c.zero_ratio).c_str());
            csv += line;
            nlohmann::json multi;
            multi["apparatuses"] = copies;
            write_json_artifact(dir, "multi.json", multi, res);
            write_artifact(dir, "multi.csv", csv, res);
        });
        if (!done)
            return;
    }
    stage(res, "summary", [&] {
        nlohmann::json summary;
        summary["apparatuses"] = copies;
        res.manifest["summary"] = summary;
    });
}

}  // namespace detail

// Execute a scenario.  Validation runs first; while it reports diagnostics
// nothing is written (not even the output directory).  Otherwise the manifest
// is written immediately and rewritten as stages append artifacts, so a
// failed run leaves everything completed so far plus the failure label.
inline ScenarioResult run_scenario(const ScenarioConfig& raw) {
    ScenarioResult res;
    const std::vector<std::string> diagnostics = validate_scenario(raw);
    if (!diagnostics.empty()) {
        res.ok = false;
        res.failure_stage = "validate";
        std::string msg;
        for (const std::string& d : diagnostics)
            msg += (msg.empty() ? "" : "\n") + d;
        res.failure_message = msg;
        return res;
    }
    const ScenarioConfig cfg = resolve_defaults(raw);
    const std::filesystem::path dir(cfg.out_dir);

    nlohmann::json echoed = scenario_config_json(cfg);
    echoed.erase("out_dir");  // run location, not an experiment parameter
    res.manifest["config"] = echoed;

    const auto flush_manifest = [&] {
        res.manifest["artifacts"] = res.artifacts;
        res.manifest["ok"] = res.ok;
        res.manifest["failure_stage"] = res.failure_stage;
        res.manifest["failure_message"] = res.failure_message;
        std::ofstream os(dir / "manifest.json", std::ios::binary);
        require(os.good(), "cannot open manifest.json");
        os << res.manifest.dump(2) << "\n";
        require(os.good(), "manifest write failed");
    };

    detail::stage(res, "init", [&] {
        std::filesystem::create_directories(dir);
        flush_manifest();
    });
    if (!res.ok)
        return res;

    if (cfg.scenario == "fig3_lambda")
        detail::run_fig3_lambda(cfg, dir, res);
    else if (cfg.scenario == "eta_sweep_dirichlet")
        detail::run_eta_sweep(cfg, dir, res, false);
    else if (cfg.scenario == "eta_sweep_neumann")
        detail::run_eta_sweep(cfg, dir, res, true);
    else if (cfg.scenario == "pipeline_dirichlet")
        detail::run_pipeline(cfg, dir, res, false);
    else if (cfg.scenario == "pipeline_neumann")
        detail::run_pipeline(cfg, dir, res, true);
    else if (cfg.scenario == "mollify_stability")
        detail::run_mollify_stability(cfg, dir, res);
    else if (cfg.scenario == "shrinking_patch")
        detail::run_shrinking_patch(cfg, dir, res);
    else
        detail::run_multi_bc(cfg, dir, res);

    try {
        flush_manifest();
    } catch (const std::exception& e) {
        if (res.ok) {
            res.ok = false;
            res.failure_stage = "manifest";
            res.failure_message = e.what();
        }
    }
    return res;
}

}  // namespace critforge
