// macfield: analyze and simulate the backoff dynamics of single-cell slotted
// CSMA networks. Subcommands solve the stationary fixed-point equations,
// integrate the mean-field occupancy ODE, classify equilibria, run the exact
// finite-N slot simulator, optimize throughput, and reproduce the built-in
// bistability/oscillation benchmark scenarios end to end.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "macfield/dtmc.hpp"
#include "macfield/fpe.hpp"
#include "macfield/io.hpp"
#include "macfield/model.hpp"
#include "macfield/ode.hpp"
#include "macfield/presets.hpp"
#include "macfield/stability.hpp"
#include "macfield/throughput.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace macfield;

namespace {

struct CommonOpts {
  std::string scenario_path;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  long slots = 20000000;
  long window = 2000;
  double horizon = 0.0;
  bool full = false;
};

Scenario resolve_scenario(const std::string& path) {
  if (auto p = preset(path)) return *p;  // allow "example1"/"example2" inline
  return load_scenario(path);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void dump_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

// ---- repro: pipeline checks against the published benchmark numbers ----

struct Check {
  std::string name;
  double value = 0.0;
  std::string expected;
  bool pass = false;
};

class CheckList {
 public:
  void add(const std::string& name, double value, const std::string& expected,
           bool pass) {
    checks_.push_back({name, value, expected, pass});
    std::printf("[%s] %-38s value=%-12.6g expected %s\n", pass ? "PASS" : "FAIL",
                name.c_str(), value, expected.c_str());
  }
  bool all_pass() const {
    for (const auto& c : checks_) {
      if (!c.pass) return false;
    }
    return true;
  }
  json to_json() const {
    json arr = json::array();
    for (const auto& c : checks_)
      arr.push_back({{"name", c.name},
                     {"value", c.value},
                     {"expected", c.expected},
                     {"pass", c.pass}});
    return arr;
  }

 private:
  std::vector<Check> checks_;
};

// first strict local maximum of the autocorrelation at lag >= 2, in windows
int first_acf_peak(const std::vector<double>& series, int max_lag) {
  const int n = static_cast<int>(series.size());
  if (n < max_lag + 2) return -1;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  std::vector<double> ac(max_lag + 2, 0.0);
  double c0 = 0.0;
  for (int i = 0; i < n; ++i) c0 += (series[i] - mean) * (series[i] - mean);
  if (c0 <= 0.0) return -1;
  for (int l = 1; l <= max_lag + 1; ++l) {
    double c = 0.0;
    for (int i = 0; i + l < n; ++i) c += (series[i] - mean) * (series[i + l] - mean);
    ac[l] = c / c0;
  }
  for (int l = 2; l <= max_lag; ++l)
    if (ac[l] > ac[l - 1] && ac[l] > ac[l + 1]) return l;
  return -1;
}

int repro_example1(const CommonOpts& opt) {
  const Scenario s = example1();
  const fs::path out = opt.out_dir;
  fs::create_directories(out);
  CheckList checks;

  const auto rates = scaled_rates(s, 0);
  {
    std::ofstream os(out / "residual.csv");
    write_residual_csv(os, [&](double g) { return homogeneous_residual(g, rates); },
                       0.0, 1.0 - 1e-9, 2000);
  }
  const auto reports = classify_equilibria(s);
  dump_json(out / "equilibria.json", equilibria_json(reports, s));
  {
    std::vector<FpeSolution> sols;
    for (const auto& r : reports) sols.push_back(r.solution);
    dump_json(out / "solutions.json", solutions_json(sols, s));
  }

  const double expected_roots[3] = {0.540, 0.828, 0.952};
  checks.add("fpe.root_count", static_cast<double>(reports.size()), "3",
             reports.size() == 3);
  for (std::size_t i = 0; i < reports.size() && i < 3; ++i)
    checks.add("fpe.gamma" + std::to_string(i + 1), reports[i].gamma,
               std::to_string(expected_roots[i]) + " +-5e-4",
               std::abs(reports[i].gamma - expected_roots[i]) <= 5e-4);
  if (reports.size() == 3) {
    checks.add("stability.pattern.gamma1",
               reports[0].classification == Classification::stable ? 1 : 0, "stable",
               reports[0].classification == Classification::stable);
    checks.add("stability.pattern.gamma2",
               reports[1].classification == Classification::unstable ? 1 : 0,
               "unstable", reports[1].classification == Classification::unstable);
    checks.add("stability.pattern.gamma3",
               reports[2].classification == Classification::stable ? 1 : 0, "stable",
               reports[2].classification == Classification::stable);
  }

  // mean-field trajectory from the all-stage-0 start used by the simulator
  const double horizon = opt.horizon > 0 ? opt.horizon : 4e5;
  const Trajectory traj = integrate(s, all_stage0(s), horizon);
  {
    std::ofstream os(out / "trajectory.csv");
    write_trajectory_csv(os, traj);
  }
  const auto labels = basin_map(s, reports, {all_stage0(s)}, horizon);
  json ode_summary{{"attractor_index", labels[0]},
                   {"gamma_end", traj.gamma.back()},
                   {"time_unit", "slots"},
                   {"cycle", cycle_json(detect_limit_cycle(traj))}};
  checks.add("ode.all_stage0_converges", static_cast<double>(labels[0]),
             "a stable equilibrium (not -1)", labels[0] >= 0);

  // finite-N simulation; window concentration near the two stable branches
  const long slots = opt.full ? 120000000L : opt.slots;
  const SimStats stats = run(s, slots, opt.seed, opt.window);
  {
    std::ofstream os(out / "windows.csv");
    write_windows_csv(os, stats, s);
  }
  long qualifying = 0, in_band = 0;
  for (const auto& w : stats.windows) {
    if (w.slot_start < 1000000 || w.attempts < 50) continue;
    ++qualifying;
    if (std::abs(w.gamma_hat - 0.540) <= 0.05 || std::abs(w.gamma_hat - 0.952) <= 0.05)
      ++in_band;
  }
  const double frac = qualifying ? static_cast<double>(in_band) / qualifying : 0.0;
  checks.add("dtmc.window_concentration", frac, ">= 0.95 (within 0.05 of 0.540/0.952)",
             frac >= 0.95);
  if (opt.full)
    checks.add("dtmc.gamma_hat_overall", stats.gamma_hat_total, "[0.70, 0.95]",
               stats.gamma_hat_total >= 0.70 && stats.gamma_hat_total <= 0.95);

  json summary{{"scenario", scenario_json(s)},
               {"checks", checks.to_json()},
               {"ode", ode_summary},
               {"sim", sim_summary_json(stats)}};
  dump_json(out / "summary.json", summary);
  return checks.all_pass() ? 0 : 1;
}

int repro_example2(const CommonOpts& opt) {
  const Scenario s = example2();
  const fs::path out = opt.out_dir;
  fs::create_directories(out);
  CheckList checks;

  {
    std::ofstream os(out / "residual.csv");
    write_residual_csv(os, [&](double g) { return scenario_residual(g, s); }, 0.0,
                       1.0 - 1e-9, 2000);
  }
  const auto reports = classify_equilibria(s);
  dump_json(out / "equilibria.json", equilibria_json(reports, s));
  {
    std::vector<FpeSolution> sols;
    for (const auto& r : reports) sols.push_back(r.solution);
    dump_json(out / "solutions.json", solutions_json(sols, s));
  }
  checks.add("fpe.root_count", static_cast<double>(reports.size()), "1",
             reports.size() == 1);
  if (!reports.empty()) {
    checks.add("fpe.gamma1", reports[0].gamma, "0.912 +-5e-4",
               std::abs(reports[0].gamma - 0.912) <= 5e-4);
    checks.add("stability.gamma1",
               reports[0].classification == Classification::unstable ? 1 : 0,
               "unstable", reports[0].classification == Classification::unstable);
  }

  const double horizon = opt.horizon > 0 ? opt.horizon : 5e5;
  const Trajectory traj = integrate(s, all_stage0(s), horizon);
  {
    std::ofstream os(out / "trajectory.csv");
    write_trajectory_csv(os, traj);
  }
  const CycleReport cycle = detect_limit_cycle(traj);
  checks.add("ode.limit_cycle", cycle.periodic ? 1 : 0, "periodic", cycle.periodic);
  checks.add("ode.period", cycle.period, "[18000, 21000] slots",
             cycle.period >= 18000 && cycle.period <= 21000);

  const long slots = opt.full ? 120000000L : opt.slots;
  const SimStats stats = run(s, slots, opt.seed, opt.window);
  {
    std::ofstream os(out / "windows.csv");
    write_windows_csv(os, stats, s);
  }
  std::vector<double> ghat;
  for (const auto& w : stats.windows)
    if (!std::isnan(w.gamma_hat)) ghat.push_back(w.gamma_hat);
  const int lag = first_acf_peak(ghat, 50);
  const double lag_slots = static_cast<double>(lag) * opt.window;
  checks.add("dtmc.acf_peak", lag_slots, "[17000, 22000] slots",
             lag > 0 && lag_slots >= 17000 && lag_slots <= 22000);
  checks.add("dtmc.gamma_hat_overall", stats.gamma_hat_total, "[0.84, 0.90]",
             stats.gamma_hat_total >= 0.84 && stats.gamma_hat_total <= 0.90);

  json summary{{"scenario", scenario_json(s)},
               {"checks", checks.to_json()},
               {"ode", {{"cycle", cycle_json(cycle)}, {"time_unit", "slots"}}},
               {"sim", sim_summary_json(stats)}};
  dump_json(out / "summary.json", summary);
  return checks.all_pass() ? 0 : 1;
}

OccupancyState load_occupancy(const std::string& path, const Scenario& s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open occupancy file " + path);
  json j = json::parse(in);
  OccupancyState x;
  x.phi = j.at("phi").get<std::vector<std::vector<double>>>();
  check_occupancy(x, s);
  return x;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field analysis and exact simulation of slotted CSMA backoff"};
  app.require_subcommand(1);
  CommonOpts opt;

  auto add_common = [&](CLI::App* sub, bool wants_scenario) {
    if (wants_scenario)
      sub->add_option("--scenario", opt.scenario_path,
                      "scenario JSON file (or a preset id: example1, example2)")
          ->required();
    sub->add_option("--out", opt.out_dir, "output directory");
    return sub;
  };

  auto* cmd_fpe = add_common(app.add_subcommand("fpe", "solve the fixed-point equations"),
                             true);
  bool fpe_curve = false;
  cmd_fpe->add_flag("--curve", fpe_curve, "also export the residual curve CSV");

  auto* cmd_ode = add_common(
      app.add_subcommand("ode", "integrate the mean-field occupancy ODE"), true);
  cmd_ode->add_option("--horizon", opt.horizon, "integration horizon (time units)")
      ->required();
  std::string init_path;
  cmd_ode->add_option("--init", init_path, "initial occupancy JSON ({\"phi\":[[...]]})");
  double step_override = 0.0;
  cmd_ode->add_option("--step", step_override, "override the automatic RK4 step");

  auto* cmd_stab = add_common(
      app.add_subcommand("stability", "classify equilibria via Jacobian spectra"), true);
  double cycle_horizon = 0.0;
  cmd_stab->add_option("--cycle-horizon", cycle_horizon,
                       "also integrate from all-stage-0 and report limit cycles");

  auto* cmd_sim = add_common(
      app.add_subcommand("sim", "run the exact finite-N slot simulator"), true);
  cmd_sim->add_option("--slots", opt.slots, "number of time-slots");
  cmd_sim->add_option("--seed", opt.seed, "RNG seed");
  cmd_sim->add_option("--window", opt.window, "statistics window length (slots)");

  auto* cmd_thr = app.add_subcommand("throughput", "optimal attempt rate and backoff");
  ThroughputParams tp{100.0, 1.0, 0.0};
  int thr_K = 6;
  cmd_thr->add_option("--L", tp.L, "mean success duration (slots)");
  cmd_thr->add_option("--Lc", tp.L_c, "collision duration (slots, >= 1)");
  cmd_thr->add_option("--Lo", tp.L_o, "per-success overhead (slots)");
  cmd_thr->add_option("--K", thr_K, "highest backoff stage");

  auto* cmd_repro =
      app.add_subcommand("repro", "reproduce a built-in benchmark end to end");
  std::string example_id;
  cmd_repro->add_option("example", example_id, "example1 | example2")->required();
  cmd_repro->add_option("--out", opt.out_dir, "output directory");
  cmd_repro->add_option("--slots", opt.slots, "simulator length (slots)");
  cmd_repro->add_option("--seed", opt.seed, "simulator seed");
  cmd_repro->add_option("--window", opt.window, "statistics window (slots)");
  cmd_repro->add_option("--horizon", opt.horizon, "ODE horizon override");
  cmd_repro->add_flag("--full", opt.full, "full-length simulation (1.2e8 slots)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_fpe->parsed()) {
      const Scenario s = resolve_scenario(opt.scenario_path);
      fs::create_directories(opt.out_dir);
      const auto sols = solve_fpe(s);
      dump_json(fs::path(opt.out_dir) / "solutions.json", solutions_json(sols, s));
      if (fpe_curve) {
        if (s.classes.size() == 2 && s.delta && *s.delta != 0) {
          std::cerr << "note: no single-variable residual for two classes with "
                       "delta > 0; skipping curve\n";
        } else {
          std::ofstream os(fs::path(opt.out_dir) / "residual.csv");
          write_residual_csv(os, [&](double g) { return scenario_residual(g, s); },
                             0.0, 1.0 - 1e-9, 2000);
        }
      }
      std::cout << solutions_json(sols, s).dump(2) << "\n";
      return 0;
    }
    if (cmd_ode->parsed()) {
      const Scenario s = resolve_scenario(opt.scenario_path);
      fs::create_directories(opt.out_dir);
      const OccupancyState x0 =
          init_path.empty() ? all_stage0(s) : load_occupancy(init_path, s);
      OdeControls ctl;
      ctl.step = step_override;
      const Trajectory traj = integrate(s, x0, opt.horizon, ctl);
      std::ofstream os(fs::path(opt.out_dir) / "trajectory.csv");
      write_trajectory_csv(os, traj);
      json j{{"samples", traj.samples()},
             {"step", traj.step},
             {"time_unit", s.mode == RateMode::raw ? "slots" : "scaled"},
             {"gamma_end", traj.gamma.back()},
             {"cycle", cycle_json(detect_limit_cycle(traj))}};
      dump_json(fs::path(opt.out_dir) / "ode_summary.json", j);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (cmd_stab->parsed()) {
      const Scenario s = resolve_scenario(opt.scenario_path);
      fs::create_directories(opt.out_dir);
      const auto reports = classify_equilibria(s);
      json j{{"equilibria", equilibria_json(reports, s)}};
      if (cycle_horizon > 0) {
        const Trajectory traj = integrate(s, all_stage0(s), cycle_horizon);
        j["cycle"] = cycle_json(detect_limit_cycle(traj));
      }
      dump_json(fs::path(opt.out_dir) / "stability.json", j);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (cmd_sim->parsed()) {
      const Scenario s = resolve_scenario(opt.scenario_path);
      fs::create_directories(opt.out_dir);
      const auto t0 = std::chrono::steady_clock::now();
      const SimStats stats = run(s, opt.slots, opt.seed, opt.window);
      json summary = sim_summary_json(stats);
      summary["runtime_seconds"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ofstream os(fs::path(opt.out_dir) / "windows.csv");
      write_windows_csv(os, stats, s);
      dump_json(fs::path(opt.out_dir) / "sim_summary.json", summary);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    if (cmd_thr->parsed()) {
      const double qstar = optimal_qbar(tp.L_c);
      const double mstar = fit_multiplier(1.0, qstar, thr_K);
      std::vector<double> q(thr_K + 1);
      for (int k = 0; k <= thr_K; ++k) q[k] = 1.0 / std::pow(mstar, k);
      json j{{"qstar", qstar},
             {"mstar", mstar},
             {"q_vector", q},
             {"omega_at_qstar", omega(qstar, tp)}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (cmd_repro->parsed()) {
      if (example_id == "example1") return repro_example1(opt);
      if (example_id == "example2") return repro_example2(opt);
      std::cerr << "unknown example id \"" << example_id
                << "\" (expected example1 or example2)\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
