// Domain types and elementary rate/probability primitives for single-cell
// slotted CSMA backoff models: per-class attempt-rate vectors, population
// scenarios, occupancy measures over backoff stages, and the MONO/MINT/BMP
// parameter condition checks.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace macfield {

// Interpretation of the per-stage rate vector of a scenario.
//   scaled: q_k are scaled attempt rates; a node in stage k attempts with
//           probability q_k/N per slot and ODE time runs in accelerated
//           (mean-field) units, one unit = N slots.
//   raw:    the vector holds per-slot attempt probabilities p_k directly;
//           ODE time runs in backoff time-slots.
enum class RateMode { scaled, raw };

struct ClassParams {
  std::vector<double> q;  // per-stage rates, length K+1
  int K = 0;              // index of the highest backoff stage
  double sigma = 1.0;     // population share of this class
};

struct Scenario {
  std::vector<ClassParams> classes;  // 1 entry, or 2 (index 0 = H, 1 = L)
  std::optional<long> delta;         // AIFS gap; nullopt means infinite
  long N = 1;                        // population size
  RateMode mode = RateMode::scaled;
};

// Occupancy measure: per class, the mass of nodes in each backoff stage.
// Each class vector has length K_c+1 and sums to that class's sigma.
struct OccupancyState {
  std::vector<std::vector<double>> phi;
};

struct ConditionReport {
  bool mono = false;       // q_k nonincreasing in k
  bool mint = false;       // q_k <= 1 for all k
  bool bmp = false;        // q_0 < ln 2 and q_{k+1} = q_k/2
  bool uniq_hint = false;  // mono or mint: fixed point known unique
};

inline constexpr double kOccupancyTol = 1e-9;

// Checks every structural invariant and normalizes a one-class scenario's
// delta to infinite (AIFS is inert without a second class). Throws
// std::invalid_argument naming the offending field.
Scenario validate(Scenario s);

ConditionReport check_conditions(const ClassParams& c);

// Average attempt rate of one class: sum_k q_k * phi_k.
double mean_attempt_rate(std::span<const double> phi, const ClassParams& c);

// Collision probability seen in the mean-field limit by any node when the
// aggregate attempt rate is `rate`: 1 - exp(-rate).
double collision_mfl(double rate);

// Finite-population collision probability for a tagged node in stage
// `tagged_stage`: the chance at least one *other* node attempts, given the
// per-stage node counts and per-slot probabilities p.
double collision_finite(std::span<const long> stage_counts,
                        std::span<const double> p, int tagged_stage);

// Per-stage rates in scaled (mean-field) units: q_k as stored, or N*p_k for
// a raw-mode scenario. (The stored q themselves are the rates in the
// scenario's native time unit: q per accelerated unit, or p per slot.)
std::vector<double> scaled_rates(const Scenario& s, std::size_t cls);

// All population mass in backoff stage 0.
OccupancyState all_stage0(const Scenario& s);

// Throws unless phi has the right shape, each component >= -1e-9, and each
// class sums to its sigma within 1e-9.
void check_occupancy(const OccupancyState& x, const Scenario& s);

}  // namespace macfield
