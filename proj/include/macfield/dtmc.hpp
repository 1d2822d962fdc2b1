// Exact discrete-time simulation of the finite-N backoff process on the
// occupancy (per-stage node count) representation.
//
// Slot rules: every node in stage k of an eligible class attempts with its
// per-slot probability; nodes within a stage are exchangeable, so the number
// of attempters per stage is an exact Binomial draw. One attempter total is
// a success (mover returns to stage 0); two or more collide (every attempter
// advances one stage, wrapping from K to 0); none is an idle slot.
//
// AIFS: with two classes, a slot is reserved (class H only) while the count
// of consecutive idle slots since the last activity is below delta, common
// otherwise. One-class scenarios have no slot-type mechanics; every slot is
// common and the class always eligible.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "macfield/model.hpp"

namespace macfield {

struct SimState {
  std::vector<std::vector<long>> counts;  // nodes per stage, per class
  long aifs_counter = 0;                  // idle slots since last non-idle, saturating
  long slot_index = 0;
  std::mt19937_64 rng;
  // scratch for per-stage attempt draws; not part of the logical state
  std::vector<std::vector<long>> attempt_scratch;
};

enum class SlotKind : std::uint8_t { reserved, common };
enum class SlotOutcome : std::uint8_t { idle, success, collision };

struct SlotRecord {
  SlotKind kind = SlotKind::common;
  SlotOutcome outcome = SlotOutcome::idle;
  long attempts = 0;
  std::vector<std::vector<long>> attempts_by_stage;  // filled by step_detailed only
};

struct SimWindow {
  long slot_start = 0;
  long attempts = 0;
  long collided = 0;   // every attempter in a multi-attempt slot counts once
  long successes = 0;  // slots with exactly one attempter
  double gamma_hat = 0.0;          // collided/attempts; NaN marks no attempts
  std::vector<double> occupancy;   // window-mean node fraction, classes concatenated
};

struct SimStats {
  long window_slots = 0;
  long total_slots = 0;
  std::uint64_t seed = 0;
  std::vector<SimWindow> windows;  // full windows only
  long total_attempts = 0;
  long total_collided = 0;
  long total_successes = 0;
  double gamma_hat_total = 0.0;  // NaN when no attempts at all
};

// Exact binomial sampler: CDF inversion from zero for small n*p, from the
// distribution mode otherwise; exponent-underflow cases split recursively.
long binomial_draw(long n, double p, std::mt19937_64& rng);

// Deterministic initial state for a seed. When `initial` is given its
// per-class masses are converted to integer counts by largest-remainder
// rounding (ties to the lower stage); class populations sigma*N must be
// whole numbers. Without it all nodes start in backoff stage 0.
SimState init_state(const Scenario& s, const OccupancyState* initial,
                    std::uint64_t seed);

// Advance one slot. The cheap form leaves attempts_by_stage empty.
SlotRecord step(SimState& st, const Scenario& s);
SlotRecord step_detailed(SimState& st, const Scenario& s);

// Iterate `total_slots` slots collecting disjoint windows of `window_slots`.
SimStats run(const Scenario& s, long total_slots, std::uint64_t seed,
             long window_slots, const OccupancyState* initial = nullptr);

// Per-slot attempt probability of stage k (q_k/N in scaled mode, p_k raw).
double slot_probability(const Scenario& s, std::size_t cls, std::size_t stage);

}  // namespace macfield
