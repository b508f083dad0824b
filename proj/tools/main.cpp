#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "gfm/errors.hpp"
#include "gfm/scenario.hpp"
#include "gfm/stability.hpp"
#include "gfm/verify.hpp"

namespace {

using namespace gfm;

// exit codes: 0 ok, 2 config error, 3 divergence, 4 no feasible operating
// point, 5 property failure

int cmd_run(const std::string& path, const std::string& out_dir, double dt_override,
            double t_end_override) {
    Scenario sc = load_scenario(path);
    if (dt_override > 0.0) sc.sim.dt = dt_override;
    if (t_end_override > 0.0) sc.sim.t_end = t_end_override;
    const RunResult res = run_scenario(sc, out_dir);
    for (const auto& p : res.csv_paths) std::printf("wrote %s\n", p.c_str());
    if (res.exit_code != 0) std::fprintf(stderr, "run ended early: %s\n", res.message.c_str());
    for (size_t k = 0; k < res.summaries.size(); ++k) {
        const auto& s = res.summaries[k];
        std::printf("%s: max |i| %.6g pu, final angle %.6g rad, %s\n",
                    sc.inverters[k].name.c_str(), s.max_i_maxphase, s.final_phi,
                    s.settled ? "settled" : (s.angle_diverged ? "angle diverged" : "not settled"));
    }
    return res.exit_code;
}

int cmd_sweep(const std::string& path, const std::string& grid_path, const std::string& out_dir,
              int jobs) {
    std::ifstream scen_in(path);
    if (!scen_in) throw ConfigError("cannot open scenario file " + path);
    const nlohmann::json base = nlohmann::json::parse(scen_in);

    std::ifstream grid_in(grid_path);
    if (!grid_in) throw ConfigError("cannot open grid file " + grid_path);
    const nlohmann::json grid = nlohmann::json::parse(grid_in);
    if (!grid.is_object()) throw ConfigError("sweep grid must be an object of pointer -> values");

    std::vector<std::string> keys;
    std::vector<std::vector<nlohmann::json>> values;
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        keys.push_back(it.key());
        if (!it.value().is_array()) throw ConfigError("grid entry " + it.key() + " must be an array");
        values.emplace_back(it.value().begin(), it.value().end());
    }
    size_t total = keys.empty() ? 0 : 1;
    for (const auto& v : values) total *= v.size();

    struct Row {
        std::string assignment;
        int exit_code{0};
        double max_i{0.0};
        double final_phi{0.0};
        bool settled{false};
        bool diverged{false};
        std::string error;
    };
    std::vector<Row> rows(total);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t idx = next.fetch_add(1);
            if (idx >= total) return;
            std::vector<std::pair<std::string, nlohmann::json>> patch;
            size_t rem = idx;
            std::string label;
            for (size_t d = 0; d < keys.size(); ++d) {
                const size_t pick = rem % values[d].size();
                rem /= values[d].size();
                patch.emplace_back(keys[d], values[d][pick]);
                std::string value = values[d][pick].dump();
                value.erase(std::remove(value.begin(), value.end(), '"'), value.end());
                label += keys[d] + "=" + value + (d + 1 < keys.size() ? " " : "");
            }
            Row row;
            row.assignment = label;
            try {
                const Scenario sc = patch_scenario(base, patch);
                const RunResult res = run_scenario_collect(sc, nullptr);
                row.exit_code = res.exit_code;
                row.error = res.message;
                for (const auto& s : res.summaries) {
                    row.max_i = std::max(row.max_i, s.max_i_maxphase);
                    row.final_phi = s.final_phi;
                    row.settled = s.settled;
                    row.diverged = row.diverged || s.angle_diverged;
                }
            } catch (const std::exception& e) {
                row.exit_code = 2;
                row.error = e.what();
            }
            rows[idx] = std::move(row);
        }
    };
    std::vector<std::thread> pool;
    const int n_jobs = std::max(1, jobs);
    for (int j = 0; j < n_jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::filesystem::create_directories(out_dir);
    const std::string out_path = out_dir + "/sweep.csv";
    std::string csv = "assignment,exit_code,max_i_maxphase_pu,final_theta_rel_rad,settled,"
                      "angle_diverged,error\n";
    for (const auto& row : rows) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "\"%s\",%d,%.12g,%.12g,%d,%d,\"%s\"\n",
                      row.assignment.c_str(), row.exit_code, row.max_i, row.final_phi,
                      row.settled ? 1 : 0, row.diverged ? 1 : 0, row.error.c_str());
        csv += buf;
    }
    std::ofstream out(out_path, std::ios::binary);
    out << csv;
    std::printf("wrote %s (%zu runs)\n", out_path.c_str(), total);
    return 0;
}

int cmd_verify(const std::string& filter, uint64_t seed, const std::string& scenario_dir) {
    CheckContext ctx;
    ctx.seed = seed;
    ctx.scenario_dir = scenario_dir;
    const auto results = run_checks(ctx, filter);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-55s %s  measured=%.3g tol=%.3g  (%.2fs)\n", r.id.c_str(),
                    r.pass ? "PASS" : "FAIL", r.measured, r.tolerance, r.seconds);
        if (!r.pass) {
            std::printf("    %s\n", r.detail.c_str());
            all_pass = false;
        }
    }
    std::printf("%zu checks, %s\n", results.size(), all_pass ? "all passed" : "FAILURES present");
    return all_pass ? 0 : 5;
}

int cmd_analyze_power_angle(double v_hat, double v_g, double x_v, double x_g, double p_star,
                            const std::string& out) {
    const PowerAngleCurve curve = power_angle_curve(v_hat, v_g, x_v, x_g);
    std::string csv = "delta_rad,p_pu\n";
    for (int k = 0; k <= 360; ++k) {
        const double d = -pi + k * (2.0 * pi / 360.0);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12g,%.12g\n", d, curve.p(d));
        csv += buf;
    }
    std::ofstream f(out, std::ios::binary);
    f << csv;
    const auto eq = equilibria(curve, p_star);
    std::printf("p_max = %.9g pu\n", curve.p_max);
    if (eq)
        std::printf("SEP = %.9g rad, UEP = %.9g rad\n", eq->delta_sep, eq->delta_uep);
    else
        std::printf("no equilibrium for p* = %g\n", p_star);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_analyze_equal_area(double p_max_pre, double p_max_fault, double p_max_post, double p_star,
                           double delta_clear) {
    const PowerAngleCurve pre{p_max_pre, 0.0}, flt{p_max_fault, 0.0}, post{p_max_post, 0.0};
    const auto res = equal_area(pre, flt, post, p_star, delta_clear);
    std::printf("s_plus = %.9g, s_minus = %.9g -> %s\n", res.s_plus, res.s_minus,
                res.stable ? "stable" : "unstable");
    const auto dc = critical_clearing_angle(pre, flt, post, p_star);
    if (dc) {
        std::printf("critical clearing angle = %.9g rad\n", *dc);
        const auto eq_pre = equilibria(pre, p_star);
        const SwingParams swing = swing_from_vsm(5.0, 0.0, p_star, omega0_default);
        if (eq_pre && p_max_fault * 0.999 < p_star) {
            const double t_crit = fault_on_travel_time(swing, flt, eq_pre->delta_sep, *dc);
            std::printf("critical clearing time (T_J = 5 s, undamped) = %.9g s\n", t_crit);
        }
    } else {
        std::printf("stable for any clearing angle up to the post-fault UEP\n");
    }
    return 0;
}

int cmd_analyze_dvoc(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ConfigError("cannot open " + json_path);
    const nlohmann::json j = nlohmann::json::parse(in);
    DvocStabilityInputs d;
    d.eta = j.value("eta", 6.2832);
    d.alpha = j.value("alpha", 0.8);
    d.phi = j.value("phi", pi / 2);
    d.p_star = j.value("p_star", 0.0);
    d.q_star = j.value("q_star", 0.0);
    d.v_star = j.value("v_star", 1.0);
    d.v_lambda_star = j.value("v_lambda_star", d.v_star);
    d.v_lambda_steady = j.value("v_lambda_steady", d.v_star);
    const auto y = j.value("y", std::vector<double>{0.0, -3.0});
    d.y = Cx{y.at(0), y.at(1)};
    const auto res = dvoc_stability_condition(d);
    std::printf("lhs = %.9g, rhs = %.9g -> %s\n", res.lhs, res.rhs,
                res.satisfied ? "satisfied" : "NOT satisfied");
    return res.satisfied ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"crossform: dynamic-phasor fault-ride-through toolkit for grid-forming inverters"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", grid_path, filter, scenario_dir = "scenarios";
    std::string dvoc_json, pa_out = "power_angle.csv";
    double dt_override = 0.0, t_end_override = 0.0;
    uint64_t seed = 0x5eedf00d;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());

    auto* run = app.add_subcommand("run", "run one scenario and write CSV records");
    run->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--dt", dt_override, "override integration step (s)");
    run->add_option("--t-end", t_end_override, "override end time (s)");

    auto* sweep = app.add_subcommand("sweep", "run a scenario over a parameter grid");
    sweep->add_option("scenario", scenario_path, "scenario JSON template")->required();
    sweep->add_option("grid", grid_path, "JSON object: {\"/json/pointer\": [values...]}")
        ->required();
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--jobs", jobs, "parallel workers");

    auto* verify = app.add_subcommand("verify", "run the property-verification suite");
    verify->add_option("--filter", filter, "id prefix filter (e.g. acceptance)");
    verify->add_option("--seed", seed, "seed for the random draws");
    verify->add_option("--scenario-dir", scenario_dir, "bundled scenario directory");

    auto* limiters = app.add_subcommand("limiters", "run the limiter property suite");
    limiters->add_option("--seed", seed, "seed for the random draws");

    auto* analyze = app.add_subcommand("analyze", "analytical transient-stability tools");
    analyze->require_subcommand(1);
    auto* pa = analyze->add_subcommand("power-angle", "emit a power-angle curve table");
    double v_hat = 1.0, v_g = 1.0, x_v = 0.2, x_g = 0.13, p_star = 0.2;
    pa->add_option("--v-hat", v_hat, "reference voltage magnitude (pu)");
    pa->add_option("--v-g", v_g, "grid voltage magnitude (pu)");
    pa->add_option("--x-v", x_v, "virtual reactance (pu)");
    pa->add_option("--x-g", x_g, "grid reactance (pu)");
    pa->add_option("--p-star", p_star, "active power setpoint (pu)");
    pa->add_option("--out", pa_out, "output CSV path");
    auto* ea = analyze->add_subcommand("equal-area", "equal-area verdict and critical clearing");
    double pm_pre = 3.0303, pm_flt = 0.30303, pm_post = 3.0303, dclear = 0.5;
    ea->add_option("--p-max-pre", pm_pre, "pre-fault curve amplitude (pu)");
    ea->add_option("--p-max-fault", pm_flt, "fault-on curve amplitude (pu)");
    ea->add_option("--p-max-post", pm_post, "post-fault curve amplitude (pu)");
    ea->add_option("--p-star", p_star, "active power setpoint (pu)");
    ea->add_option("--delta-clear", dclear, "clearing angle (rad)");
    auto* dv = analyze->add_subcommand("dvoc-condition", "check the oscillator stability condition");
    dv->add_option("params", dvoc_json, "JSON file with eta/alpha/phi/p_star/q_star/v_star/y")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario_path, out_dir, dt_override, t_end_override);
        if (*sweep) return cmd_sweep(scenario_path, grid_path, out_dir, jobs);
        if (*verify) return cmd_verify(filter, seed, scenario_dir);
        if (*limiters) return cmd_verify("limiting", seed, scenario_dir);
        if (*analyze) {
            if (*pa) return cmd_analyze_power_angle(v_hat, v_g, x_v, x_g, p_star, pa_out);
            if (*ea) return cmd_analyze_equal_area(pm_pre, pm_flt, pm_post, p_star, dclear);
            if (*dv) return cmd_analyze_dvoc(dvoc_json);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
