// Equilibrium classification and long-run behaviour diagnostics.
//
// The full occupancy field is degenerate (each class's mass is conserved, so
// its Jacobian is singular along the manifold direction); all linearization
// here happens on the reduced system with stage 0 eliminated through
// phi_0 = sigma - sum_{k>=1} phi_k per class.
#pragma once

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include "macfield/fpe.hpp"
#include "macfield/model.hpp"
#include "macfield/ode.hpp"

namespace macfield {

enum class Classification { stable, unstable, marginal };

struct EquilibriumReport {
  FpeSolution solution;
  double gamma = 0.0;  // homogeneous root, or gamma_c for two classes
  OccupancyState occupancy;
  std::vector<std::complex<double>> eigenvalues;  // reduced-system spectrum
  Classification classification = Classification::marginal;
};

struct CycleReport {
  bool periodic = false;
  double period = 0.0;     // trajectory time units
  double amplitude = 0.0;  // mean peak-to-trough of the attempt-rate series
  int confidence = 0;      // consecutive inter-peak gaps that agree within 2%
};

// Central finite-difference Jacobian, step step_scale * max(1, |x_j|) per
// column; returns a row-major n x n matrix. Throws on non-finite entries.
std::vector<double> jacobian_fd(
    const std::function<void(std::span<const double>, std::span<double>)>& field,
    std::span<const double> x, double step_scale = 1e-6);

// Reduced coordinates: concatenated (phi_1 .. phi_K) per class.
std::size_t reduced_dim(const Scenario& s);
std::vector<double> reduce_state(const Scenario& s, const OccupancyState& x);
OccupancyState expand_state(const Scenario& s, std::span<const double> reduced);
// The occupancy field expressed on the reduced coordinates.
void reduced_rhs(const Scenario& s, std::span<const double> reduced,
                 std::span<double> out);

// Equilibrium occupancies for every fixed-point solution of the scenario.
// Class H's stage distribution uses gamma_h, class L's uses gamma_c.
OccupancyState equilibrium_state(const Scenario& s, const FpeSolution& sol);

// Enumerate fixed points, linearize on the reduced system, classify by the
// eigenvalue real parts (tolerance 1e-8; anything straddling it is marginal).
std::vector<EquilibriumReport> classify_equilibria(const Scenario& s);

// Peak detection on the class-0 attempt-rate series after discarding
// burn_in_fraction of the trajectory: strict local maxima above the midline,
// periodic when >= 5 successive inter-peak gaps agree within 2%.
CycleReport detect_limit_cycle(const Trajectory& traj, double burn_in_fraction = 0.5);

// Integrates from each start and assigns it to the equilibrium (index into
// `reports`) whose per-class attempt rates match within 1e-4 at the horizon;
// -1 marks non-convergent starts. Runs starts concurrently, merged in input
// order.
std::vector<int> basin_map(const Scenario& s,
                           const std::vector<EquilibriumReport>& reports,
                           const std::vector<OccupancyState>& starts, double horizon);

}  // namespace macfield
