#include "macfield/stability.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace macfield {

namespace {
constexpr double kEigTol = 1e-8;
}

std::vector<double> jacobian_fd(
    const std::function<void(std::span<const double>, std::span<double>)>& field,
    std::span<const double> x, double step_scale) {
  const std::size_t n = x.size();
  std::vector<double> jac(n * n);
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
  std::vector<double> fp(n), fm(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double h = step_scale * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    field(xp, fp);
    field(xm, fm);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = (fp[i] - fm[i]) / (2.0 * h);
      if (!std::isfinite(v))
        throw std::runtime_error("jacobian_fd: non-finite entry");
      jac[i * n + j] = v;
    }
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return jac;
}

std::size_t reduced_dim(const Scenario& s) {
  std::size_t d = 0;
  for (const auto& c : s.classes) d += c.q.size() - 1;
  return d;
}

std::vector<double> reduce_state(const Scenario& s, const OccupancyState& x) {
  std::vector<double> out;
  out.reserve(reduced_dim(s));
  for (std::size_t c = 0; c < s.classes.size(); ++c)
    out.insert(out.end(), x.phi[c].begin() + 1, x.phi[c].end());
  return out;
}

OccupancyState expand_state(const Scenario& s, std::span<const double> reduced) {
  OccupancyState x;
  std::size_t at = 0;
  for (const auto& c : s.classes) {
    std::vector<double> phi(c.q.size());
    double tail = 0.0;
    for (std::size_t k = 1; k < c.q.size(); ++k) {
      phi[k] = reduced[at + k - 1];
      tail += phi[k];
    }
    phi[0] = c.sigma - tail;
    x.phi.push_back(std::move(phi));
    at += c.q.size() - 1;
  }
  return x;
}

void reduced_rhs(const Scenario& s, std::span<const double> reduced,
                 std::span<double> out) {
  thread_local std::vector<double> full, dfull;
  full.resize(state_dim(s));
  dfull.resize(full.size());
  std::size_t at = 0, rat = 0;
  for (const auto& c : s.classes) {
    double tail = 0.0;
    for (std::size_t k = 1; k < c.q.size(); ++k) {
      full[at + k] = reduced[rat + k - 1];
      tail += reduced[rat + k - 1];
    }
    full[at] = c.sigma - tail;
    at += c.q.size();
    rat += c.q.size() - 1;
  }
  scenario_rhs(s, full, dfull);
  at = 0;
  rat = 0;
  for (const auto& c : s.classes) {
    for (std::size_t k = 1; k < c.q.size(); ++k) out[rat + k - 1] = dfull[at + k];
    at += c.q.size();
    rat += c.q.size() - 1;
  }
}

OccupancyState equilibrium_state(const Scenario& s, const FpeSolution& sol) {
  OccupancyState x;
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const double g = c == 0 ? sol.gamma_h : sol.gamma_c;
    x.phi.push_back(equilibrium_occupancy(g, s.classes[c]));
  }
  return x;
}

std::vector<EquilibriumReport> classify_equilibria(const Scenario& s) {
  const auto solutions = solve_fpe(s);
  std::vector<EquilibriumReport> out;
  out.reserve(solutions.size());
  for (const auto& sol : solutions) {
    EquilibriumReport rep;
    rep.solution = sol;
    rep.gamma = s.classes.size() == 1 ? sol.gamma_h : sol.gamma_c;
    rep.occupancy = equilibrium_state(s, sol);

    const auto x = reduce_state(s, rep.occupancy);
    if (x.empty()) {  // K = 0 everywhere: the state space is a single point
      rep.classification = Classification::stable;
      out.push_back(std::move(rep));
      continue;
    }
    const auto jac = jacobian_fd(
        [&](std::span<const double> u, std::span<double> du) { reduced_rhs(s, u, du); },
        x);
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        m(i, j) = jac[static_cast<std::size_t>(i * n + j)];
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("classify_equilibria: eigen-solver failed");
    for (Eigen::Index i = 0; i < n; ++i) rep.eigenvalues.push_back(es.eigenvalues()[i]);
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                if (a.real() != b.real()) return a.real() > b.real();
                return a.imag() > b.imag();
              });

    bool any_pos = false, all_neg = true;
    for (const auto& ev : rep.eigenvalues) {
      if (ev.real() > kEigTol) any_pos = true;
      if (!(ev.real() < -kEigTol)) all_neg = false;
    }
    rep.classification = any_pos ? Classification::unstable
                        : all_neg ? Classification::stable
                                  : Classification::marginal;
    out.push_back(std::move(rep));
  }
  return out;
}

CycleReport detect_limit_cycle(const Trajectory& traj, double burn_in_fraction) {
  CycleReport rep;
  const auto& series = traj.qbar.at(0);
  const std::size_t n = series.size();
  if (n < 16) throw std::invalid_argument("detect_limit_cycle: trajectory too short");
  const double t_end = traj.times.back();
  std::size_t i0 = 0;
  while (i0 < n && traj.times[i0] < burn_in_fraction * t_end) ++i0;
  if (n - i0 < 16) throw std::invalid_argument("detect_limit_cycle: trajectory too short");

  double lo = series[i0], hi = series[i0];
  for (std::size_t i = i0; i < n; ++i) {
    lo = std::min(lo, series[i]);
    hi = std::max(hi, series[i]);
  }
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) return rep;  // flat: no cycle
  const double midline = 0.5 * (lo + hi);

  std::vector<double> peak_times, peak_values, troughs;
  double trough = hi;
  bool have_peak = false;
  for (std::size_t i = i0 + 1; i + 1 < n; ++i) {
    if (have_peak) trough = std::min(trough, series[i]);
    if (series[i] > midline && series[i] > series[i - 1] && series[i] > series[i + 1]) {
      if (have_peak) troughs.push_back(trough);  // trough between this peak and the last
      peak_times.push_back(traj.times[i]);
      peak_values.push_back(series[i]);
      have_peak = true;
      trough = series[i];
    }
  }
  if (peak_times.size() < 2) return rep;

  std::vector<double> gaps(peak_times.size() - 1);
  for (std::size_t i = 0; i + 1 < peak_times.size(); ++i)
    gaps[i] = peak_times[i + 1] - peak_times[i];

  // longest run of successive gaps, each within 2% of the running mean;
  // ties go to the latest run so start-up wobble does not win
  std::size_t best_begin = 0, best_len = 0;
  for (std::size_t b = 0; b < gaps.size(); ++b) {
    double mean = gaps[b];
    std::size_t len = 1;
    for (std::size_t i = b + 1; i < gaps.size(); ++i) {
      const double next_mean = (mean * static_cast<double>(len) + gaps[i]) /
                               static_cast<double>(len + 1);
      if (std::abs(gaps[i] - next_mean) > 0.02 * next_mean) break;
      mean = next_mean;
      ++len;
    }
    if (len >= best_len) {
      best_len = len;
      best_begin = b;
    }
  }
  rep.confidence = static_cast<int>(best_len);
  if (best_len < 5) return rep;

  double mean = 0.0;
  for (std::size_t i = best_begin; i < best_begin + best_len; ++i) mean += gaps[i];
  rep.period = mean / static_cast<double>(best_len);
  rep.periodic = true;

  // troughs[i] separates peak i from peak i+1
  double amp = 0.0;
  std::size_t namp = 0;
  for (std::size_t i = best_begin; i < best_begin + best_len && i < troughs.size(); ++i) {
    amp += peak_values[i + 1] - troughs[i];
    ++namp;
  }
  rep.amplitude = namp ? amp / static_cast<double>(namp) : hi - lo;
  return rep;
}

std::vector<int> basin_map(const Scenario& s,
                           const std::vector<EquilibriumReport>& reports,
                           const std::vector<OccupancyState>& starts, double horizon) {
  const double scale = s.mode == RateMode::raw ? static_cast<double>(s.N) : 1.0;
  // native attempt rates of each stable equilibrium
  struct Target {
    int index;
    double qbar[2];
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].classification != Classification::stable) continue;
    Target t{static_cast<int>(i), {0.0, 0.0}};
    t.qbar[0] = reports[i].solution.qbar_h / scale;
    if (s.classes.size() == 2) t.qbar[1] = reports[i].solution.qbar_l / scale;
    targets.push_back(t);
  }

  auto assign_one = [&](const OccupancyState& x0) {
    OdeControls ctl;
    ctl.max_samples = 2;  // only the endpoint matters
    const Trajectory traj = integrate(s, x0, horizon, ctl);
    for (const auto& t : targets) {
      double diff = std::abs(traj.qbar[0].back() - t.qbar[0]);
      if (s.classes.size() == 2)
        diff = std::max(diff, std::abs(traj.qbar[1].back() - t.qbar[1]));
      if (diff <= 1e-4) return t.index;
    }
    return -1;
  };

  std::vector<int> labels(starts.size(), -1);
  const std::size_t workers =
      std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (std::size_t w = 0; w < std::min(workers, starts.size()); ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= starts.size()) return;
        try {
          labels[i] = assign_one(starts[i]);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return labels;
}

}  // namespace macfield
