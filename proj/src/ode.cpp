#include "macfield/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "macfield/fpe.hpp"

namespace macfield {

std::size_t state_dim(const Scenario& s) {
  std::size_t d = 0;
  for (const auto& c : s.classes) d += c.q.size();
  return d;
}

std::vector<double> flatten(const OccupancyState& x) {
  std::vector<double> out;
  for (const auto& v : x.phi) out.insert(out.end(), v.begin(), v.end());
  return out;
}

OccupancyState unflatten(const Scenario& s, std::span<const double> flat) {
  OccupancyState x;
  std::size_t at = 0;
  for (const auto& c : s.classes) {
    x.phi.emplace_back(flat.begin() + at, flat.begin() + at + c.q.size());
    at += c.q.size();
  }
  return x;
}

DerivedPoint derived_at(const Scenario& s, std::span<const double> phi) {
  DerivedPoint d;
  const double scale = s.mode == RateMode::raw ? static_cast<double>(s.N) : 1.0;
  std::size_t at = 0;
  double qbar_scaled[2] = {0.0, 0.0};
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const auto& q = s.classes[c].q;
    double v = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) v += q[k] * phi[at + k];
    d.qbar[c] = v;
    qbar_scaled[c] = v * scale;
    at += q.size();
  }
  if (s.classes.size() == 1) {
    d.gamma_r = d.gamma_c = d.gamma_h = -std::expm1(-qbar_scaled[0]);
    d.pi_r = 1.0;
    d.pi_c = 0.0;
    return d;
  }
  d.gamma_r = -std::expm1(-qbar_scaled[0]);
  d.gamma_c = -std::expm1(-(qbar_scaled[0] + qbar_scaled[1]));
  const PiCoeffs pc = pi_coeffs(d.gamma_r, d.gamma_c, s.delta);
  d.pi_r = pc.pi_r;
  d.pi_c = pc.pi_c;
  d.gamma_h = d.pi_r * d.gamma_r + d.pi_c * d.gamma_c;
  return d;
}

namespace {

// stage rows k >= 1 use the stencil; row 0 is the negated sum, which makes
// the per-class derivative sum exactly zero in floating point as well
void class_stencil(std::span<const double> q, std::span<const double> phi,
                   std::span<double> dphi, double gamma, double weight) {
  double sum = 0.0;
  for (std::size_t k = 1; k < q.size(); ++k) {
    dphi[k] = weight * (q[k - 1] * phi[k - 1] * gamma - q[k] * phi[k]);
    sum += dphi[k];
  }
  dphi[0] = -sum;
}

}  // namespace

void scenario_rhs(const Scenario& s, std::span<const double> phi,
                  std::span<double> dphi, DerivedPoint* derived) {
  const DerivedPoint d = derived_at(s, phi);
  if (derived) *derived = d;
  std::size_t at = 0;
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const auto& q = s.classes[c].q;
    const double gamma = c == 0 ? d.gamma_h : d.gamma_c;
    const double weight = c == 0 ? 1.0 : d.pi_c;
    class_stencil(std::span(q), phi.subspan(at, q.size()), dphi.subspan(at, q.size()),
                  gamma, weight);
    at += q.size();
  }
}

std::vector<double> rhs_homogeneous(std::span<const double> phi, const ClassParams& c,
                                    RateMode mode, long N) {
  if (phi.size() != c.q.size())
    throw std::invalid_argument("rhs_homogeneous: phi length mismatch");
  const double scale = mode == RateMode::raw ? static_cast<double>(N) : 1.0;
  double qbar = 0.0;
  for (std::size_t k = 0; k < c.q.size(); ++k) qbar += c.q[k] * phi[k];
  const double gamma = -std::expm1(-qbar * scale);
  std::vector<double> dphi(c.q.size());
  class_stencil(std::span(c.q), phi, dphi, gamma, 1.0);
  return dphi;
}

OccupancyState rhs_extended(const OccupancyState& x, const Scenario& s) {
  if (s.classes.size() != 2)
    throw std::invalid_argument("rhs_extended: two-class scenario required");
  const auto flat = flatten(x);
  std::vector<double> dflat(flat.size());
  scenario_rhs(s, flat, dflat);
  return unflatten(s, dflat);
}

double auto_step(const Scenario& s, double horizon) {
  double rho = 0.0;
  for (const auto& c : s.classes)
    for (double v : c.q) rho = std::max(rho, v);
  return std::min(0.01 / rho, horizon / 1000.0);
}

namespace {

struct Rk4Scratch {
  std::vector<double> k1, k2, k3, k4, tmp;
  explicit Rk4Scratch(std::size_t n) : k1(n), k2(n), k3(n), k4(n), tmp(n) {}
};

template <class Field>
void rk4_step(Field&& f, std::vector<double>& x, double h, Rk4Scratch& w) {
  const std::size_t n = x.size();
  f(x, w.k1);
  for (std::size_t i = 0; i < n; ++i) w.tmp[i] = x[i] + 0.5 * h * w.k1[i];
  f(w.tmp, w.k2);
  for (std::size_t i = 0; i < n; ++i) w.tmp[i] = x[i] + 0.5 * h * w.k2[i];
  f(w.tmp, w.k3);
  for (std::size_t i = 0; i < n; ++i) w.tmp[i] = x[i] + h * w.k3[i];
  f(w.tmp, w.k4);
  for (std::size_t i = 0; i < n; ++i)
    x[i] += h / 6.0 * (w.k1[i] + 2.0 * (w.k2[i] + w.k3[i]) + w.k4[i]);
}

}  // namespace

Trajectory integrate(const Scenario& s, const OccupancyState& x0, double horizon,
                     const OdeControls& controls) {
  if (!(horizon > 0.0)) throw std::invalid_argument("integrate: horizon must be > 0");
  check_occupancy(x0, s);

  double h = controls.step > 0.0 ? controls.step : auto_step(s, horizon);
  const long nsteps = std::max<long>(1, static_cast<long>(std::ceil(horizon / h)));
  h = horizon / static_cast<double>(nsteps);
  const long stride =
      nsteps <= static_cast<long>(controls.max_samples)
          ? 1
          : (nsteps + static_cast<long>(controls.max_samples) - 1) /
                static_cast<long>(controls.max_samples);

  Trajectory traj;
  traj.mode = s.mode;
  traj.num_classes = s.classes.size();
  for (const auto& c : s.classes) traj.stages.push_back(static_cast<int>(c.q.size()));
  traj.step = h;
  const std::size_t expected = static_cast<std::size_t>(nsteps / stride) + 2;
  traj.times.reserve(expected);
  traj.phi.assign(s.classes.size(), {});
  traj.qbar.assign(s.classes.size(), {});
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    traj.phi[c].reserve(expected * s.classes[c].q.size());
    traj.qbar[c].reserve(expected);
  }
  traj.gamma.reserve(expected);
  if (s.classes.size() == 2) {
    traj.gamma_c.reserve(expected);
    traj.pi_r.reserve(expected);
  }

  std::vector<double> x = flatten(x0);
  Rk4Scratch w(x.size());
  auto field = [&](const std::vector<double>& u, std::vector<double>& du) {
    scenario_rhs(s, u, du);
  };

  auto record = [&](double t) {
    const DerivedPoint d = derived_at(s, x);
    traj.times.push_back(t);
    std::size_t at = 0;
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      traj.phi[c].insert(traj.phi[c].end(), x.begin() + at,
                         x.begin() + at + s.classes[c].q.size());
      traj.qbar[c].push_back(d.qbar[c]);
      at += s.classes[c].q.size();
    }
    traj.gamma.push_back(d.gamma_h);
    if (s.classes.size() == 2) {
      traj.gamma_c.push_back(d.gamma_c);
      traj.pi_r.push_back(d.pi_r);
    }
  };

  auto enforce_invariants = [&](double t) {
    std::size_t at = 0;
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s.classes[c].q.size(); ++k) {
        const double v = x[at + k];
        if (!std::isfinite(v))
          throw std::runtime_error("integrate: non-finite state at t=" +
                                   std::to_string(t));
        if (v < -kOccupancyTol)
          throw std::runtime_error("integrate: phi[" + std::to_string(k) +
                                   "] = " + std::to_string(v) + " below -1e-9 at t=" +
                                   std::to_string(t));
        sum += v;
      }
      if (std::abs(sum - s.classes[c].sigma) > kOccupancyTol)
        throw std::runtime_error("integrate: class mass drifted to " +
                                 std::to_string(sum) + " at t=" + std::to_string(t));
      at += s.classes[c].q.size();
    }
  };

  record(0.0);
  for (long i = 1; i <= nsteps; ++i) {
    rk4_step(field, x, h, w);
    const double t = h * static_cast<double>(i);
    enforce_invariants(t);
    if (i == nsteps || i % stride == 0) record(t);
  }
  return traj;
}

OccupancyState Trajectory::state_at(std::size_t i) const {
  OccupancyState x;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t w = static_cast<std::size_t>(stages[c]);
    x.phi.emplace_back(phi[c].begin() + i * w, phi[c].begin() + (i + 1) * w);
  }
  return x;
}

std::vector<double> rk4_solve(
    const std::function<void(std::span<const double>, std::span<double>)>& field,
    std::vector<double> x0, double horizon, double step) {
  const long nsteps = std::max<long>(1, static_cast<long>(std::ceil(horizon / step)));
  const double h = horizon / static_cast<double>(nsteps);
  Rk4Scratch w(x0.size());
  auto f = [&](const std::vector<double>& u, std::vector<double>& du) {
    field(u, du);
  };
  for (long i = 0; i < nsteps; ++i) rk4_step(f, x0, h, w);
  return x0;
}

}  // namespace macfield
