#include "macfield/io.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace macfield {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key))
      throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
}

const char* classification_name(Classification c) {
  switch (c) {
    case Classification::stable: return "stable";
    case Classification::unstable: return "unstable";
    default: return "marginal";
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("scenario: top level must be an object");
  reject_unknown_keys(j, {"classes", "delta", "N", "mode"}, "scenario");
  if (!j.contains("classes") || !j["classes"].is_array())
    throw std::invalid_argument("classes: required array");
  if (!j.contains("N")) throw std::invalid_argument("N: required");
  if (!j.contains("mode")) throw std::invalid_argument("mode: required");

  Scenario s;
  const std::string mode = j["mode"].get<std::string>();
  if (mode == "scaled")
    s.mode = RateMode::scaled;
  else if (mode == "raw")
    s.mode = RateMode::raw;
  else
    throw std::invalid_argument("mode: expected \"scaled\" or \"raw\"");
  s.N = j["N"].get<long>();

  for (const auto& jc : j["classes"]) {
    reject_unknown_keys(jc, {"q", "K", "sigma"}, "classes[]");
    ClassParams c;
    if (!jc.contains("q") || !jc["q"].is_array())
      throw std::invalid_argument("classes[].q: required array");
    c.q = jc["q"].get<std::vector<double>>();
    if (!jc.contains("K")) throw std::invalid_argument("classes[].K: required");
    c.K = jc["K"].get<int>();
    if (!jc.contains("sigma")) throw std::invalid_argument("classes[].sigma: required");
    c.sigma = jc["sigma"].get<double>();
    s.classes.push_back(std::move(c));
  }
  if (j.contains("delta")) {
    if (j["delta"].is_string()) {
      if (j["delta"].get<std::string>() != "inf")
        throw std::invalid_argument("delta: expected an integer or \"inf\"");
    } else {
      s.delta = j["delta"].get<long>();
    }
  }
  return validate(std::move(s));
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

json scenario_json(const Scenario& s) {
  json j;
  j["classes"] = json::array();
  for (const auto& c : s.classes)
    j["classes"].push_back({{"q", c.q}, {"K", c.K}, {"sigma", c.sigma}});
  if (s.delta)
    j["delta"] = *s.delta;
  else
    j["delta"] = "inf";
  j["N"] = s.N;
  j["mode"] = s.mode == RateMode::raw ? "raw" : "scaled";
  return j;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
  os << "t";
  const char* labels[2] = {"H", "L"};
  for (std::size_t c = 0; c < t.num_classes; ++c)
    for (int k = 0; k < t.stages[c]; ++k) os << ",phi_" << labels[c] << "_" << k;
  os << ",qbar_H";
  if (t.num_classes == 2) os << ",qbar_L";
  os << ",gamma";
  if (t.num_classes == 2) os << ",gammaC,piR";
  os << "\n";
  os.precision(12);
  for (std::size_t i = 0; i < t.samples(); ++i) {
    os << t.times[i];
    for (std::size_t c = 0; c < t.num_classes; ++c) {
      const std::size_t w = static_cast<std::size_t>(t.stages[c]);
      for (std::size_t k = 0; k < w; ++k) os << "," << t.phi[c][i * w + k];
    }
    os << "," << t.qbar[0][i];
    if (t.num_classes == 2) os << "," << t.qbar[1][i];
    os << "," << t.gamma[i];
    if (t.num_classes == 2) os << "," << t.gamma_c[i] << "," << t.pi_r[i];
    os << "\n";
  }
}

void write_windows_csv(std::ostream& os, const SimStats& stats, const Scenario& s) {
  os << "window_start,attempts,collided,successes,gamma_hat";
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const std::string label = s.classes.size() == 2 ? (c == 0 ? "H" : "L") : "H";
    for (std::size_t k = 0; k < s.classes[c].q.size(); ++k)
      os << ",occ_" << label << "_" << k;
  }
  os << "\n";
  os.precision(10);
  for (const auto& w : stats.windows) {
    os << w.slot_start << "," << w.attempts << "," << w.collided << "," << w.successes
       << ",";
    if (std::isnan(w.gamma_hat))
      os << "nan";
    else
      os << w.gamma_hat;
    for (double v : w.occupancy) os << "," << v;
    os << "\n";
  }
}

void write_residual_csv(std::ostream& os, const std::function<double(double)>& f,
                        double lo, double hi, int points) {
  os << "gamma,f_gamma\n";
  os.precision(12);
  for (int i = 0; i <= points; ++i) {
    const double g = lo + (hi - lo) * i / points;
    os << g << "," << f(g) << "\n";
  }
}

json solutions_json(const std::vector<FpeSolution>& sols, const Scenario& s) {
  json arr = json::array();
  const double scale = s.mode == RateMode::raw ? static_cast<double>(s.N) : 1.0;
  for (const auto& sol : sols) {
    json j{{"qbar_H", sol.qbar_h},
           {"gamma_H", sol.gamma_h},
           {"gamma_C", sol.gamma_c},
           {"gamma_R", sol.gamma_r},
           {"pi_R", sol.pi_r},
           {"pi_C", sol.pi_c},
           {"residual_norm", sol.residual_norm},
           {"index", sol.multiplicity_index}};
    if (s.classes.size() == 2) j["qbar_L"] = sol.qbar_l;
    if (s.mode == RateMode::raw) {
      j["pbar_H"] = sol.qbar_h / scale;
      if (s.classes.size() == 2) j["pbar_L"] = sol.qbar_l / scale;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

json equilibria_json(const std::vector<EquilibriumReport>& reports, const Scenario& s) {
  json arr = json::array();
  for (const auto& r : reports) {
    json ev = json::array();
    for (const auto& z : r.eigenvalues) ev.push_back({{"re", z.real()}, {"im", z.imag()}});
    json occ = json::array();
    for (const auto& phi : r.occupancy.phi) occ.push_back(phi);
    arr.push_back({{"gamma", r.gamma},
                   {"classification", classification_name(r.classification)},
                   {"eigenvalues", std::move(ev)},
                   {"occupancy", std::move(occ)},
                   {"solution", solutions_json({r.solution}, s)[0]}});
  }
  return arr;
}

json cycle_json(const CycleReport& c) {
  return {{"periodic", c.periodic},
          {"period", c.period},
          {"amplitude", c.amplitude},
          {"confidence", c.confidence}};
}

json sim_summary_json(const SimStats& stats) {
  json j{{"total_slots", stats.total_slots},
         {"window_slots", stats.window_slots},
         {"seed", stats.seed},
         {"windows", stats.windows.size()},
         {"attempts", stats.total_attempts},
         {"collided", stats.total_collided},
         {"successes", stats.total_successes}};
  if (std::isnan(stats.gamma_hat_total))
    j["gamma_hat"] = nullptr;
  else
    j["gamma_hat"] = stats.gamma_hat_total;
  return j;
}

}  // namespace macfield
