#ifndef GFM_SCENARIO_HPP
#define GFM_SCENARIO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gfm/sim.hpp"

namespace gfm {

/// A fully-validated simulation description: inverters, network, events.
struct Scenario {
    std::string name{"scenario"};
    std::string notes;
    SimConfig sim;
    NetworkConfig network;
    std::vector<InverterConfig> inverters;
    std::vector<FaultEvent> faults;
    std::vector<SetpointEvent> setpoints;
};

/// Parse and validate a scenario document. Unknown keys are rejected with
/// the offending key path; semantic problems raise ConfigError with every
/// violation listed.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// Effective configuration echo: every field explicit, defaults filled in.
/// parse_scenario(scenario_to_json(s)) reproduces s exactly.
nlohmann::json scenario_to_json(const Scenario& s);

/// CSV schema of the record stream (fixed column order).
std::string csv_header();
void append_csv_row(std::string& out, const RecordRow& row);

struct RunResult {
    int exit_code{0}; // 0 ok, 3 divergence, 4 no feasible operating point
    std::string message;
    std::vector<std::string> csv_paths;
    // summary metrics per inverter over the run
    struct Summary {
        double max_i_maxphase{0.0};
        double final_phi{0.0};
        double final_omega{0.0};
        bool settled{false};
        bool angle_diverged{false};
    };
    std::vector<Summary> summaries;
};

/// Run a scenario and write one CSV per inverter plus the effective-config
/// echo into out_dir (created if needed). Files are written atomically.
RunResult run_scenario(const Scenario& scenario, const std::string& out_dir);

/// In-memory run (no files), for tests and sweeps.
RunResult run_scenario_collect(const Scenario& scenario,
                               std::vector<std::vector<RecordRow>>* rows);

/// Apply a JSON-pointer patch ("/inverters/0/regulator": "explicit") to a
/// scenario document and re-validate.
Scenario patch_scenario(const nlohmann::json& doc,
                        const std::vector<std::pair<std::string, nlohmann::json>>& patches);

} // namespace gfm

#endif
