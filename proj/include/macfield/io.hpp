// JSON scenario ingestion (strict: unknown keys rejected) and CSV/JSON
// emitters for trajectories, simulator windows, residual curves, fixed-point
// solutions and equilibrium reports.
#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "macfield/dtmc.hpp"
#include "macfield/fpe.hpp"
#include "macfield/model.hpp"
#include "macfield/ode.hpp"
#include "macfield/stability.hpp"

namespace macfield {

// Document shape:
// {"classes":[{"q":[...],"K":int,"sigma":real}],
//  "delta":int|"inf","N":int,"mode":"scaled"|"raw"}
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_json(const Scenario& s);

// header: t, phi_H_0..[, phi_L_0..], qbar_H[, qbar_L], gamma[, gammaC, piR]
void write_trajectory_csv(std::ostream& os, const Trajectory& t);

// header: window_start, attempts, collided, successes, gamma_hat, occ_H_0..
void write_windows_csv(std::ostream& os, const SimStats& stats, const Scenario& s);

void write_residual_csv(std::ostream& os, const std::function<double(double)>& f,
                        double lo, double hi, int points);

nlohmann::json solutions_json(const std::vector<FpeSolution>& sols, const Scenario& s);
nlohmann::json equilibria_json(const std::vector<EquilibriumReport>& reports,
                               const Scenario& s);
nlohmann::json cycle_json(const CycleReport& c);
nlohmann::json sim_summary_json(const SimStats& stats);

}  // namespace macfield
