// Fixed-point equations of the stationary backoff process.
//
// Homogeneous system: the average attempt rate at collision probability g is
//   Q(g) = sum_k g^k / sum_k (g^k / q_k)
// and the stationary residual is f(g) = 1 - exp(-Q(g)) - g. The finite-N
// Bianchi form is the same expression with q_k = N * p_k.
//
// AIFS-extended two-class system: reserved slots (only class H attempts) see
// gR = 1 - exp(-qbarH), common slots see gC = 1 - exp(-qbarH - qbarL); the
// slot-type chain spends quasi-stationary fractions (piR, piC) in each type,
// class H experiences gH = piR*gR + piC*gC, and the stationary rates must
// reproduce themselves through the per-class stage distributions.
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "macfield/model.hpp"

namespace macfield {

struct FpeSolution {
  double qbar_h = 0.0;  // scaled units (q = N*p for raw-mode scenarios)
  double qbar_l = 0.0;  // zero for one-class scenarios
  double gamma_h = 0.0;
  double gamma_c = 0.0;
  double gamma_r = 0.0;
  double pi_r = 0.0;
  double pi_c = 1.0;
  double residual_norm = 0.0;
  int multiplicity_index = 0;  // position among enumerated roots
};

// sum_k g^k / sum_k (g^k / rate_k); a zero rate with positive weight makes
// the denominator infinite and the ratio 0.
double bianchi_attempt_rate(double gamma, std::span<const double> rates);

// Mean-field stationary residual 1 - exp(-Q(gamma)) - gamma.
double homogeneous_residual(double gamma, std::span<const double> scaled_rates);
// Finite-N form with per-slot probabilities p: 1 - exp(-N*B(gamma)) - gamma.
double homogeneous_residual_finite(double gamma, std::span<const double> p, long N);

// Single-variable residual of a whole scenario: the homogeneous residual for
// one class, or the pooled two-class form (valid when delta = 0, where the
// common-slot collision probability is shared).
double scenario_residual(double gamma, const Scenario& s);

struct RootScan {
  std::vector<double> roots;            // sorted, deduplicated
  std::vector<double> tangency_hints;   // near-zero |f| minima without a crossing
};

// Scans [lo, hi] on a uniform grid, brackets every sign change, refines each
// bracket by bisection to 1e-12 and one finite-difference Newton polish.
RootScan enumerate_roots(const std::function<double(double)>& f, double lo = 0.0,
                         double hi = 1.0 - 1e-9, int grid_points = 20000);

// Stationary stage distribution at collision probability gamma:
// phi_k = sigma * (gamma^k / q_k) / sum_j (gamma^j / q_j). Requires q_k > 0.
std::vector<double> equilibrium_occupancy(double gamma, const ClassParams& c);

struct PiCoeffs {
  double pi_r = 0.0;
  double pi_c = 1.0;
};

// Quasi-stationary slot-type fractions for AIFS gap delta (nullopt = inf).
// All boundary cases (delta = 0, delta = inf, vanishing gammas) resolve to
// their analytic limits, and pi_r + pi_c == 1 exactly.
PiCoeffs pi_coeffs(double gamma_r, double gamma_c, std::optional<long> delta);

struct ExtendedPoint {
  double rhs_h = 0.0, rhs_l = 0.0;  // right-hand sides of the rate equations
  double gamma_r = 0.0, gamma_c = 0.0, gamma_h = 0.0;
  double pi_r = 0.0, pi_c = 1.0;
};

ExtendedPoint extended_eval(double qbar_h, double qbar_l, const Scenario& s);

// (rhs_h - qbar_h, rhs_l - qbar_l); zero exactly at stationary points.
std::pair<double, double> extended_residual(double qbar_h, double qbar_l,
                                            const Scenario& s);

// Class-H collision probability as a closed form in (qbar_h, qbar_l, delta),
// algebraically identical to pi_r*gamma_r + pi_c*gamma_c.
double gamma_h_compact(double qbar_h, double qbar_l, std::optional<long> delta);

// Enumerates stationary solutions of the two-class system over the box
// [0, sigmaH*max qH] x [0, sigmaL*max qL]: damped fixed-point iteration
// seeded from a coarse grid plus Newton starts from sign-structure cells,
// Newton-polished and deduplicated. Throws if nothing converges.
std::vector<FpeSolution> solve_extended(const Scenario& s, int grid = 200);

// One-class scenarios: enumerate_roots on the homogeneous residual; two-class
// scenarios: solve_extended. Solutions are sorted by gamma.
std::vector<FpeSolution> solve_fpe(const Scenario& s);

}  // namespace macfield
