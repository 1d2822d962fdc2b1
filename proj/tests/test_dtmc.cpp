#include <doctest.h>

#include <array>
#include <stdexcept>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "macfield/dtmc.hpp"
#include "macfield/model.hpp"
#include "macfield/presets.hpp"

using namespace macfield;

namespace {

Scenario raw_one_class(std::vector<double> p, long N) {
  Scenario s;
  s.classes.push_back({p, static_cast<int>(p.size()) - 1, 1.0});
  s.N = N;
  s.mode = RateMode::raw;
  return s;  // deliberately unvalidated: some tests use all-zero rates
}

// exact binomial pmf by the multiplicative recurrence
std::vector<double> binom_pmf(long n, double p) {
  std::vector<double> pmf(n + 1, 0.0);
  pmf[0] = std::pow(1.0 - p, static_cast<double>(n));
  for (long k = 1; k <= n; ++k)
    pmf[k] = pmf[k - 1] * (p / (1.0 - p)) * static_cast<double>(n - k + 1) /
             static_cast<double>(k);
  return pmf;
}

}  // namespace

TEST_CASE("binomial sampler matches the exact law on both code paths") {
  std::mt19937_64 rng(41);
  struct Case {
    long n;
    double p;
  };
  // n*p below and above the inversion/mode-path switch at 10
  for (const Case c : {Case{5, 0.2}, Case{40, 0.45}, Case{1200, 1.0 / 3200.0},
                       Case{400, 0.6}, Case{64, 0.25}}) {
    const long draws = 200000;
    std::vector<long> hist(c.n + 1, 0);
    for (long i = 0; i < draws; ++i) ++hist[binomial_draw(c.n, c.p, rng)];
    const auto pmf = binom_pmf(c.n, c.p);
    for (long k = 0; k <= c.n; ++k) {
      const double expect = pmf[k] * draws;
      if (expect < 20.0) continue;  // skip sparse bins
      const double se = std::sqrt(pmf[k] * (1.0 - pmf[k]) * draws);
      CHECK(std::abs(hist[k] - expect) < 4.0 * se);
    }
  }
  // degenerate parameters
  CHECK(binomial_draw(0, 0.5, rng) == 0);
  CHECK(binomial_draw(10, 0.0, rng) == 0);
  CHECK(binomial_draw(10, 1.0, rng) == 10);
  // underflow-splitting path: huge exponent
  const long big = binomial_draw(2000000, 0.25, rng);
  CHECK(big > 490000);
  CHECK(big < 510000);
}

TEST_CASE("init_state rounds occupancies by largest remainder") {
  const Scenario ex1 = example1();
  SimState st = init_state(ex1, nullptr, 7);
  CHECK(st.counts[0][0] == 1200);
  for (std::size_t k = 1; k < st.counts[0].size(); ++k) CHECK(st.counts[0][k] == 0);

  Scenario s = raw_one_class({0.1, 0.1}, 10);
  OccupancyState half;
  half.phi = {{0.5, 0.5}};
  st = init_state(s, &half, 7);
  CHECK(st.counts[0][0] == 5);
  CHECK(st.counts[0][1] == 5);

  OccupancyState skew;
  skew.phi = {{0.55, 0.45}};
  st = init_state(s, &skew, 7);
  CHECK(st.counts[0][0] == 6);  // remainders tie at 0.5; lower stage wins
  CHECK(st.counts[0][1] == 4);

  Scenario fractional = raw_one_class({0.1}, 10);
  fractional.classes[0].sigma = 0.333;  // 3.33 nodes
  CHECK_THROWS_AS(init_state(fractional, nullptr, 7), std::invalid_argument);

  Scenario too_fast;  // scaled rate above N: per-slot probability above 1
  too_fast.classes.push_back({{2.0}, 0, 1.0});
  too_fast.N = 1;
  too_fast.mode = RateMode::scaled;
  CHECK_THROWS_AS(init_state(too_fast, nullptr, 7), std::invalid_argument);
}

TEST_CASE("zero attempt probabilities idle forever") {
  Scenario s = raw_one_class({0.0, 0.0}, 5);
  SimState st = init_state(s, nullptr, 1);
  for (int t = 0; t < 100; ++t) {
    const SlotRecord rec = step(st, s);
    CHECK(rec.outcome == SlotOutcome::idle);
    CHECK(rec.attempts == 0);
  }
  CHECK(st.counts[0][0] == 5);
}

TEST_CASE("two certain attempters collide every slot and wrap at K = 0") {
  Scenario s = raw_one_class({1.0}, 2);
  SimState st = init_state(s, nullptr, 1);
  for (int t = 0; t < 50; ++t) {
    const SlotRecord rec = step(st, s);
    CHECK(rec.outcome == SlotOutcome::collision);
    CHECK(rec.attempts == 2);
    CHECK(st.counts[0][0] == 2);  // collision from the top stage returns to 0
  }
}

TEST_CASE("per-attempt collision fraction matches the two-node analytic value") {
  // two nodes, p = 1/2: conditional on a tagged attempt, the other node
  // attempts with probability 1/2
  Scenario s = raw_one_class({0.5}, 2);
  const SimStats stats = run(s, 1000000, 3, 10000);
  // batch-means standard error over the windows
  std::vector<double> batch;
  for (const auto& w : stats.windows) batch.push_back(w.gamma_hat);
  double mean = 0.0;
  for (double v : batch) mean += v;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (double v : batch) var += (v - mean) * (v - mean);
  var /= static_cast<double>(batch.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(batch.size()));
  CHECK(std::abs(stats.gamma_hat_total - 0.5) < 3.0 * se + 1e-12);
}

TEST_CASE("AIFS slot types follow the idle counter") {
  // class H attempts surely, class L attempts surely, gap of two slots
  Scenario s;
  s.classes.push_back({{1.0}, 0, 0.5});
  s.classes.push_back({{1.0}, 0, 0.5});
  s.delta = 2;
  s.N = 2;
  s.mode = RateMode::raw;
  SimState st = init_state(s, nullptr, 1);

  // starts saturated: first slot is common, both attempt, collision
  SlotRecord rec = step(st, s);
  CHECK(rec.kind == SlotKind::common);
  CHECK(rec.outcome == SlotOutcome::collision);
  // after activity the counter resets: reserved slots where only H attempts
  for (int t = 0; t < 10; ++t) {
    rec = step(st, s);
    CHECK(rec.kind == SlotKind::reserved);
    CHECK(rec.outcome == SlotOutcome::success);
    CHECK(rec.attempts == 1);
  }

  // now silence class H: idle slots climb the counter back to common
  Scenario s2 = s;
  s2.classes[0].q[0] = 0.0;
  SimState st2 = init_state(s2, nullptr, 1);
  const SlotKind expect[] = {SlotKind::common,    // saturated start, L succeeds
                             SlotKind::reserved,  // counter 0: idle
                             SlotKind::reserved,  // counter 1: idle
                             SlotKind::common,    // counter 2 = delta: L again
                             SlotKind::reserved};
  const SlotOutcome out[] = {SlotOutcome::success, SlotOutcome::idle,
                             SlotOutcome::idle, SlotOutcome::success,
                             SlotOutcome::idle};
  for (int t = 0; t < 5; ++t) {
    rec = step(st2, s2);
    CHECK(rec.kind == expect[t]);
    CHECK(rec.outcome == out[t]);
  }
}

TEST_CASE("detailed step records per-stage attempt counts") {
  const Scenario s = example2();
  SimState st = init_state(s, nullptr, 13);
  for (int t = 0; t < 2000; ++t) {
    const SlotRecord rec = step_detailed(st, s);
    REQUIRE(rec.attempts_by_stage.size() == 2);
    long total = 0;
    for (std::size_t c = 0; c < 2; ++c) {
      REQUIRE(rec.attempts_by_stage[c].size() == s.classes[c].q.size());
      for (long a : rec.attempts_by_stage[c]) {
        CHECK(a >= 0);
        total += a;
      }
    }
    CHECK(total == rec.attempts);
    if (rec.outcome == SlotOutcome::idle) CHECK(total == 0);
    if (rec.outcome == SlotOutcome::success) CHECK(total == 1);
    if (rec.outcome == SlotOutcome::collision) CHECK(total >= 2);
  }
  // the cheap form leaves the detail empty
  const SlotRecord cheap = step(st, s);
  CHECK(cheap.attempts_by_stage.empty());
}

TEST_CASE("counts are conserved along a long run") {
  const Scenario s = example2();
  SimState st = init_state(s, nullptr, 9);
  for (int t = 0; t < 20000; ++t) {
    step(st, s);
    long total = 0;
    for (const auto& counts : st.counts)
      for (long v : counts) {
        REQUIRE(v >= 0);
        total += v;
      }
    REQUIRE(total == s.N);
  }
}

TEST_CASE("same seed, same trajectory; different seed, different trajectory") {
  const Scenario s = example1();
  const SimStats a = run(s, 50000, 42, 2000);
  const SimStats b = run(s, 50000, 42, 2000);
  const SimStats c = run(s, 50000, 43, 2000);
  REQUIRE(a.windows.size() == b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i)
    CHECK(a.windows[i].attempts == b.windows[i].attempts);
  CHECK(a.total_attempts != c.total_attempts);
}

TEST_CASE("empirical stationary law matches the brute-force node chain") {
  // N = 3 nodes, two stages; the occupancy chain must reproduce the
  // stationary distribution of the exact per-node chain
  const double p0 = 0.3, p1 = 0.45;
  Scenario s = raw_one_class({p0, p1}, 3);
  s = validate(std::move(s));

  // enumerate the per-node chain on {0,1}^3 directly
  const int nstates = 8;
  std::vector<std::vector<double>> T(nstates, std::vector<double>(nstates, 0.0));
  auto stage_of = [](int state, int node) { return (state >> node) & 1; };
  for (int st = 0; st < nstates; ++st) {
    for (int subset = 0; subset < 8; ++subset) {  // who attempts
      double prob = 1.0;
      for (int node = 0; node < 3; ++node) {
        const double p = stage_of(st, node) ? p1 : p0;
        prob *= (subset >> node) & 1 ? p : 1.0 - p;
      }
      if (prob == 0.0) continue;
      const int attempters = __builtin_popcount(subset);
      int next = st;
      if (attempters == 1) {
        for (int node = 0; node < 3; ++node)
          if ((subset >> node) & 1) next &= ~(1 << node);  // success: stage 0
      } else if (attempters >= 2) {
        for (int node = 0; node < 3; ++node)
          if ((subset >> node) & 1) {
            // collision: stage advances mod 2 (K = 1 wraps to 0)
            if (stage_of(st, node) == 0)
              next |= 1 << node;
            else
              next &= ~(1 << node);
          }
      }
      T[st][next] += prob;
    }
  }
  std::vector<double> pi(nstates, 1.0 / nstates), nxt(nstates);
  for (int it = 0; it < 20000; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int i = 0; i < nstates; ++i)
      for (int j = 0; j < nstates; ++j) nxt[j] += pi[i] * T[i][j];
    pi.swap(nxt);
  }
  // project onto the occupancy: distribution of the number in stage 0
  std::array<double, 4> exact{};
  for (int st = 0; st < nstates; ++st)
    exact[3 - __builtin_popcount(st)] += pi[st];

  // simulate and histogram the stage-0 count with batch-means errors
  const long slots = 1000000, batches = 100, span = slots / batches;
  SimState sim = init_state(s, nullptr, 5);
  std::array<std::vector<double>, 4> batch_freq;
  for (auto& v : batch_freq) v.assign(batches, 0.0);
  for (long b = 0; b < batches; ++b)
    for (long t = 0; t < span; ++t) {
      step(sim, s);
      batch_freq[sim.counts[0][0]][b] += 1.0 / static_cast<double>(span);
    }
  for (int k = 0; k <= 3; ++k) {
    double mean = 0.0;
    for (double v : batch_freq[k]) mean += v;
    mean /= batches;
    double var = 0.0;
    for (double v : batch_freq[k]) var += (v - mean) * (v - mean);
    var /= (batches - 1);
    const double se = std::sqrt(var / batches);
    INFO("stage-0 count ", k, ": sim ", mean, " exact ", exact[k], " se ", se);
    CHECK(std::abs(mean - exact[k]) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("disabling AIFS equals pooling the classes") {
  // two identical half-classes with delta = 0 against one pooled class
  const std::vector<double> p{0.02, 0.01, 0.005};
  Scenario split;
  split.classes.push_back({p, 2, 0.5});
  split.classes.push_back({p, 2, 0.5});
  split.delta = 0;
  split.N = 100;
  split.mode = RateMode::raw;
  split = validate(std::move(split));

  Scenario pooled;
  pooled.classes.push_back({p, 2, 1.0});
  pooled.N = 100;
  pooled.mode = RateMode::raw;
  pooled = validate(std::move(pooled));

  const long slots = 400000, window = 2000;
  const SimStats a = run(split, slots, 11, window);
  const SimStats b = run(pooled, slots, 12, window);

  auto mean_se = [](const SimStats& st) {
    std::vector<double> v;
    for (const auto& w : st.windows)
      if (!std::isnan(w.gamma_hat)) v.push_back(w.gamma_hat);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return std::pair(mean, std::sqrt(var / static_cast<double>(v.size())));
  };
  const auto [ma, sa] = mean_se(a);
  const auto [mb, sb] = mean_se(b);
  CHECK(std::abs(ma - mb) < 4.0 * std::sqrt(sa * sa + sb * sb));
}

TEST_CASE("run partitions windows and marks empty ones") {
  Scenario s = raw_one_class({0.0, 0.0}, 4);
  const SimStats stats = run(s, 10000, 1, 1000);
  CHECK(stats.windows.size() == 10);
  for (const auto& w : stats.windows) {
    CHECK(w.attempts == 0);
    CHECK(std::isnan(w.gamma_hat));
    CHECK(w.occupancy[0] == doctest::Approx(1.0));  // everyone parked at stage 0
  }
  CHECK(std::isnan(stats.gamma_hat_total));
}
