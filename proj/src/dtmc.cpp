#include "macfield/dtmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace macfield {

namespace {

inline double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

long binomial_draw(long n, double p, std::mt19937_64& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial_draw(n, 1.0 - p, rng);
  // (1-p)^n would underflow: a sum of independent halves is the same law
  if (static_cast<double>(n) * -std::log1p(-p) > 600.0) {
    const long n1 = n / 2;
    return binomial_draw(n1, p, rng) + binomial_draw(n - n1, p, rng);
  }
  const double u = u01(rng);
  const double ratio = p / (1.0 - p);
  if (static_cast<double>(n) * p < 10.0) {
    double pmf = std::pow(1.0 - p, static_cast<double>(n));
    double cdf = pmf;
    long k = 0;
    while (u > cdf && k < n) {
      ++k;
      pmf *= ratio * static_cast<double>(n - k + 1) / static_cast<double>(k);
      cdf += pmf;
    }
    return k;
  }
  // inversion outward from the mode keeps the walk short for large n*p
  long mode = static_cast<long>(std::floor(static_cast<double>(n + 1) * p));
  if (mode > n) mode = n;
  const double log_pmf = std::lgamma(static_cast<double>(n) + 1.0) -
                         std::lgamma(static_cast<double>(mode) + 1.0) -
                         std::lgamma(static_cast<double>(n - mode) + 1.0) +
                         static_cast<double>(mode) * std::log(p) +
                         static_cast<double>(n - mode) * std::log1p(-p);
  double up = std::exp(log_pmf), down = up;
  double cdf = up;
  if (u <= cdf) return mode;
  long hi = mode, lo = mode;
  while (lo > 0 || hi < n) {
    if (hi < n) {
      ++hi;
      up *= ratio * static_cast<double>(n - hi + 1) / static_cast<double>(hi);
      cdf += up;
      if (u <= cdf) return hi;
    }
    if (lo > 0) {
      down *= static_cast<double>(lo) / (ratio * static_cast<double>(n - lo + 1));
      --lo;
      cdf += down;
      if (u <= cdf) return lo;
    }
  }
  return mode;  // u within rounding of 1: the mode is as good as any tail state
}

double slot_probability(const Scenario& s, std::size_t cls, std::size_t stage) {
  const double q = s.classes[cls].q[stage];
  return s.mode == RateMode::raw ? q : q / static_cast<double>(s.N);
}

SimState init_state(const Scenario& s, const OccupancyState* initial,
                    std::uint64_t seed) {
  SimState st;
  st.rng.seed(seed);
  st.counts.resize(s.classes.size());
  st.attempt_scratch.resize(s.classes.size());
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const auto& cls = s.classes[c];
    if (s.mode == RateMode::scaled)
      for (double q : cls.q)
        if (q > static_cast<double>(s.N))
          throw std::invalid_argument(
              "init_state: scaled rate exceeds N, per-slot probability above 1");
    const double pop = cls.sigma * static_cast<double>(s.N);
    const long pop_i = std::lround(pop);
    if (std::abs(pop - static_cast<double>(pop_i)) > 1e-9)
      throw std::invalid_argument("init_state: sigma*N is not a whole number of nodes");
    st.attempt_scratch[c].assign(cls.q.size(), 0);
    auto& counts = st.counts[c];
    counts.assign(cls.q.size(), 0);
    if (!initial) {
      counts[0] = pop_i;
      continue;
    }
    // largest-remainder rounding of phi*N, ties to the lower stage
    const auto& phi = initial->phi.at(c);
    if (phi.size() != cls.q.size())
      throw std::invalid_argument("init_state: occupancy stage count mismatch");
    long assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t k = 0; k < phi.size(); ++k) {
      const double target = phi[k] * static_cast<double>(s.N);
      if (target < -1e-9)
        throw std::invalid_argument("init_state: negative occupancy component");
      counts[k] = static_cast<long>(std::floor(std::max(0.0, target) + 1e-12));
      assigned += counts[k];
      remainders.emplace_back(target - static_cast<double>(counts[k]), k);
    }
    long leftover = pop_i - assigned;
    if (leftover < 0 || leftover > static_cast<long>(phi.size()))
      throw std::invalid_argument("init_state: rounding cannot satisfy count totals");
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (long i = 0; i < leftover; ++i) ++counts[remainders[i].second];
  }
  // start saturated (a fresh common slot); with delta infinite the counter
  // stays at zero and every two-class slot remains reserved
  st.aifs_counter = s.delta ? *s.delta : 0;
  return st;
}

namespace {

SlotRecord do_step(SimState& st, const Scenario& s, bool detailed) {
  SlotRecord rec;
  const bool two_class = s.classes.size() == 2;
  const bool reserved =
      two_class && (!s.delta || st.aifs_counter < *s.delta);
  rec.kind = reserved ? SlotKind::reserved : SlotKind::common;

  long total = 0;
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    auto& att = st.attempt_scratch[c];
    const bool eligible = !reserved || c == 0;
    const auto& counts = st.counts[c];
    for (std::size_t k = 0; k < counts.size(); ++k) {
      att[k] = (eligible && counts[k] > 0)
                   ? binomial_draw(counts[k], slot_probability(s, c, k), st.rng)
                   : 0;
      total += att[k];
    }
  }
  rec.attempts = total;

  if (total == 0) {
    rec.outcome = SlotOutcome::idle;
    if (s.delta && st.aifs_counter < *s.delta) ++st.aifs_counter;
  } else if (total == 1) {
    rec.outcome = SlotOutcome::success;
    for (std::size_t c = 0; c < s.classes.size(); ++c)
      for (std::size_t k = 0; k < st.counts[c].size(); ++k)
        if (st.attempt_scratch[c][k] == 1) {
          --st.counts[c][k];
          ++st.counts[c][0];
        }
    st.aifs_counter = 0;
  } else {
    rec.outcome = SlotOutcome::collision;
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      auto& counts = st.counts[c];
      const auto& att = st.attempt_scratch[c];
      const std::size_t stages = counts.size();
      long carry_in = att[stages - 1];  // stage K wraps to stage 0
      for (std::size_t k = 0; k < stages; ++k) {
        counts[k] -= att[k];
        counts[k] += carry_in;
        carry_in = k + 1 < stages ? att[k] : 0;
      }
    }
    st.aifs_counter = 0;
  }
  if (detailed) rec.attempts_by_stage = st.attempt_scratch;
  ++st.slot_index;
  return rec;
}

}  // namespace

SlotRecord step(SimState& st, const Scenario& s) { return do_step(st, s, false); }
SlotRecord step_detailed(SimState& st, const Scenario& s) { return do_step(st, s, true); }

SimStats run(const Scenario& s, long total_slots, std::uint64_t seed,
             long window_slots, const OccupancyState* initial) {
  if (window_slots < 1 || total_slots < window_slots)
    throw std::invalid_argument("run: need total_slots >= window_slots >= 1");
  SimState st = init_state(s, initial, seed);

  SimStats stats;
  stats.window_slots = window_slots;
  stats.total_slots = total_slots;
  stats.seed = seed;
  stats.windows.reserve(static_cast<std::size_t>(total_slots / window_slots));

  std::size_t dim = 0;
  for (const auto& c : s.classes) dim += c.q.size();
  std::vector<long long> occ_sum(dim, 0);

  long wa = 0, wc = 0, ws = 0;
  long window_start = 0;
  for (long t = 0; t < total_slots; ++t) {
    const SlotRecord rec = do_step(st, s, false);
    if (rec.outcome == SlotOutcome::success) {
      wa += 1;
      ws += 1;
    } else if (rec.outcome == SlotOutcome::collision) {
      wa += rec.attempts;
      wc += rec.attempts;
    }
    std::size_t at = 0;
    for (const auto& counts : st.counts)
      for (long v : counts) occ_sum[at++] += v;

    if ((t + 1 - window_start) == window_slots) {
      SimWindow w;
      w.slot_start = window_start;
      w.attempts = wa;
      w.collided = wc;
      w.successes = ws;
      w.gamma_hat = wa > 0 ? static_cast<double>(wc) / static_cast<double>(wa)
                           : std::numeric_limits<double>::quiet_NaN();
      w.occupancy.resize(dim);
      const double norm = static_cast<double>(window_slots) * static_cast<double>(s.N);
      for (std::size_t i = 0; i < dim; ++i) {
        w.occupancy[i] = static_cast<double>(occ_sum[i]) / norm;
        occ_sum[i] = 0;
      }
      stats.total_attempts += wa;
      stats.total_collided += wc;
      stats.total_successes += ws;
      stats.windows.push_back(std::move(w));
      wa = wc = ws = 0;
      window_start = t + 1;
    }
  }
  // trailing partial window folds into the totals only
  stats.total_attempts += wa;
  stats.total_collided += wc;
  stats.total_successes += ws;
  stats.gamma_hat_total =
      stats.total_attempts > 0
          ? static_cast<double>(stats.total_collided) /
                static_cast<double>(stats.total_attempts)
          : std::numeric_limits<double>::quiet_NaN();
  return stats;
}

}  // namespace macfield
