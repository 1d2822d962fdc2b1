// Mean-field occupancy dynamics and a fixed-step RK4 integrator.
//
// Homogeneous field (per class, stage k >= 1):
//   dphi_k = r_{k-1} phi_{k-1} gamma - r_k phi_k
// with the stage-0 row closing the balance so each class's derivative sums
// to zero exactly. r are the scenario's native rates (q scaled, p raw) and
// gamma comes from the scaled aggregate attempt rate. The two-class field
// weights class H by gammaH = piR*gammaR + piC*gammaC and multiplies the
// whole class-L stencil by piC (its backoff only runs in common slots).
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "macfield/model.hpp"

namespace macfield {

// Per-sample derived quantities along a trajectory.
struct DerivedPoint {
  double qbar[2] = {0.0, 0.0};  // native units per class
  double gamma_h = 0.0;         // the collision probability driving class 0
  double gamma_c = 0.0;
  double gamma_r = 0.0;
  double pi_r = 0.0;
  double pi_c = 1.0;
};

std::size_t state_dim(const Scenario& s);
std::vector<double> flatten(const OccupancyState& x);
OccupancyState unflatten(const Scenario& s, std::span<const double> flat);

// Full degenerate field of a scenario on the flattened state. `derived`
// optionally receives the rates/probabilities at this state.
void scenario_rhs(const Scenario& s, std::span<const double> phi,
                  std::span<double> dphi, DerivedPoint* derived = nullptr);

DerivedPoint derived_at(const Scenario& s, std::span<const double> phi);

// Single-class field; gamma uses the scaled rate (N*pbar when mode is raw).
std::vector<double> rhs_homogeneous(std::span<const double> phi, const ClassParams& c,
                                    RateMode mode, long N);

// Two-class AIFS-weighted field.
OccupancyState rhs_extended(const OccupancyState& x, const Scenario& s);

struct Trajectory {
  RateMode mode = RateMode::scaled;  // raw: times are backoff time-slots
  std::size_t num_classes = 1;
  std::vector<int> stages;                // K_c + 1 per class
  std::vector<double> times;              // strictly increasing
  std::vector<std::vector<double>> phi;   // per class, samples x (K_c+1), row-major
  std::vector<std::vector<double>> qbar;  // per class, native units
  std::vector<double> gamma;              // homogeneous gamma / class-H gamma
  std::vector<double> gamma_c;            // two-class only
  std::vector<double> pi_r;               // two-class only
  double step = 0.0;

  std::size_t samples() const { return times.size(); }
  OccupancyState state_at(std::size_t i) const;
};

struct OdeControls {
  double step = 0.0;                 // 0: min(0.01/max rate, horizon/1000)
  std::size_t max_samples = 100000;  // decimation bound on recorded samples
};

double auto_step(const Scenario& s, double horizon);

// Classic RK4 with the scenario's auto step. Every accepted step asserts the
// per-class mass conservation (|sum phi - sigma| <= 1e-9) and positivity
// (phi_k >= -1e-9); violations throw with the offending time and component.
Trajectory integrate(const Scenario& s, const OccupancyState& x0, double horizon,
                     const OdeControls& controls = {});

// Generic fixed-step RK4 on an arbitrary field, for validation against known
// solutions; returns the state at the horizon.
std::vector<double> rk4_solve(
    const std::function<void(std::span<const double>, std::span<double>)>& field,
    std::vector<double> x0, double horizon, double step);

}  // namespace macfield
