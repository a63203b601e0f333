// Command-line front end for the scenario runner: validate configs, execute
// scenarios, and print the separable-series lambda table.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "critforge/experiments.hpp"

namespace {

using critforge::ScenarioConfig;
using critforge::ScenarioResult;

int fail(const std::string& msg) {
    std::fprintf(stderr, "critforge: %s\n", msg.c_str());
    return 2;
}

bool load_json(const std::string& path, nlohmann::json& out, std::string& err) {
    std::ifstream is(path, std::ios::binary);
    if (!is.good()) {
        err = "cannot open '" + path + "'";
        return false;
    }
    try {
        out = nlohmann::json::parse(is);
    } catch (const std::exception& e) {
        err = "cannot parse '" + path + "': " + e.what();
        return false;
    }
    return true;
}

void print_diagnostics(const std::vector<std::string>& diagnostics) {
    for (const std::string& d : diagnostics)
        std::fprintf(stderr, "  - %s\n", d.c_str());
}

// Read every artifact of a finished run into memory for byte comparison.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir,
                                            const ScenarioResult& res) {
    std::map<std::string, std::string> bytes;
    std::vector<std::string> names = res.artifacts;
    names.push_back("manifest.json");
    for (const std::string& name : names) {
        std::ifstream is(dir / name, std::ios::binary);
        std::ostringstream os;
        os << is.rdbuf();
        bytes[name] = os.str();
    }
    return bytes;
}

int report_result(const ScenarioResult& res, const std::string& out_dir) {
    if (!res.ok) {
        std::fprintf(stderr, "critforge: stage '%s' failed:\n%s\n", res.failure_stage.c_str(),
                     res.failure_message.c_str());
        if (!res.artifacts.empty())
            std::fprintf(stderr, "artifacts completed before the failure remain in %s\n",
                         out_dir.c_str());
        return 1;
    }
    std::printf("ok: %zu artifact(s) in %s\n", res.artifacts.size() + 1, out_dir.c_str());
    for (const std::string& name : res.artifacts)
        std::printf("  %s\n", name.c_str());
    std::printf("  manifest.json\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"high-contrast conductivity laboratory"};
    app.require_subcommand(1);

    // ---- run ----
    std::string run_config, run_out;
    int run_grid = 0;
    bool seed_check = false;
    CLI::App* run = app.add_subcommand("run", "execute a scenario config");
    run->add_option("config", run_config, "scenario config (JSON)")->required();
    run->add_option("--out", run_out, "override the output directory");
    run->add_option("--grid", run_grid, "override grid_n");
    run->add_flag("--seed-check", seed_check,
                  "run twice and verify the artifacts are byte-identical");

    // ---- validate ----
    std::string val_config;
    CLI::App* val = app.add_subcommand("validate", "check a config without running it");
    val->add_option("config", val_config, "scenario config (JSON)")->required();

    // ---- fig3 ----
    std::vector<double> fig3_H = {1.0, 2.0, 4.0, 8.0};
    double fig3_a = 1.0;
    int fig3_K = 200;
    std::string fig3_out = "out/fig3_lambda";
    CLI::App* fig3 = app.add_subcommand("fig3", "print the lambda table over cylinder heights");
    fig3->add_option("--H", fig3_H, "cylinder heights")->delimiter(',');
    fig3->add_option("--a", fig3_a, "cylinder radius");
    fig3->add_option("--K", fig3_K, "series truncation");
    fig3->add_option("--out", fig3_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (val->parsed()) {
        nlohmann::json j;
        std::string err;
        if (!load_json(val_config, j, err))
            return fail(err);
        const std::vector<std::string> diagnostics = critforge::validate_config_json(j);
        if (!diagnostics.empty()) {
            std::fprintf(stderr, "invalid config (%zu problem(s)):\n", diagnostics.size());
            print_diagnostics(diagnostics);
            return 1;
        }
        std::printf("ok\n");
        return 0;
    }

    if (fig3->parsed()) {
        ScenarioConfig cfg;
        cfg.scenario = "fig3_lambda";
        cfg.height_list = fig3_H;
        cfg.radius_a = fig3_a;
        cfg.series_terms = fig3_K;
        cfg.out_dir = fig3_out;
        const std::vector<std::string> diagnostics = critforge::validate_scenario(cfg);
        if (!diagnostics.empty()) {
            std::fprintf(stderr, "invalid parameters:\n");
            print_diagnostics(diagnostics);
            return 1;
        }
        const std::vector<critforge::SweepRow> rows =
            critforge::lambda_sweep(cfg.height_list, cfg.radius_a, cfg.series_terms);
        std::fputs(critforge::lambda_sweep_csv(rows).c_str(), stdout);
        const ScenarioResult res = critforge::run_scenario(cfg);
        return report_result(res, cfg.out_dir);
    }

    // run
    nlohmann::json j;
    std::string err;
    if (!load_json(run_config, j, err))
        return fail(err);
    if (!run_out.empty())
        j["out_dir"] = run_out;
    if (run->count("--grid"))
        j["grid_n"] = run_grid;
    ScenarioConfig cfg;
    const std::vector<std::string> diagnostics = critforge::validate_config_json(j, &cfg);
    if (!diagnostics.empty()) {
        std::fprintf(stderr, "invalid config (%zu problem(s)):\n", diagnostics.size());
        print_diagnostics(diagnostics);
        return 1;
    }
    const ScenarioResult first = critforge::run_scenario(cfg);
    const int code = report_result(first, cfg.out_dir);
    if (code != 0 || !seed_check)
        return code;

    const std::filesystem::path dir(cfg.out_dir);
    const std::map<std::string, std::string> before = snapshot(dir, first);
    const ScenarioResult second = critforge::run_scenario(cfg);
    if (!second.ok) {
        std::fprintf(stderr, "seed-check: second run failed at stage '%s'\n",
                     second.failure_stage.c_str());
        return 1;
    }
    const std::map<std::string, std::string> after = snapshot(dir, second);
    std::vector<std::string> mismatched;
    for (const auto& [name, bytes] : before)
        if (!after.count(name) || after.at(name) != bytes)
            mismatched.push_back(name);
    if (!mismatched.empty()) {
        std::fprintf(stderr, "seed-check: %zu artifact(s) changed between identical runs:\n",
                     mismatched.size());
        for (const std::string& name : mismatched)
            std::fprintf(stderr, "  %s\n", name.c_str());
        return 1;
    }
    std::printf("seed-check: %zu artifact(s) byte-identical across reruns\n", before.size());
    return 0;
}
