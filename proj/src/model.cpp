#include "macfield/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace macfield {

namespace {

std::string cls_name(std::size_t i, std::size_t n_classes) {
  if (n_classes == 1) return "class";
  return i == 0 ? "class H" : "class L";
}

}  // namespace

Scenario validate(Scenario s) {
  if (s.classes.empty() || s.classes.size() > 2)
    throw std::invalid_argument("classes: expected 1 or 2 entries, got " +
                                std::to_string(s.classes.size()));
  if (s.N < 1)
    throw std::invalid_argument("N: population must be >= 1, got " + std::to_string(s.N));

  double sigma_sum = 0.0;
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    const auto& c = s.classes[i];
    const std::string who = cls_name(i, s.classes.size());
    if (c.K < 0)
      throw std::invalid_argument(who + ".K: must be >= 0");
    if (c.q.size() != static_cast<std::size_t>(c.K) + 1)
      throw std::invalid_argument(who + ".q: dimension mismatch, " +
                                  std::to_string(c.q.size()) + " entries but K = " +
                                  std::to_string(c.K));
    bool any_positive = false;
    for (std::size_t k = 0; k < c.q.size(); ++k) {
      if (!(c.q[k] >= 0.0))
        throw std::invalid_argument(who + ".q[" + std::to_string(k) + "]: negative rate");
      if (s.mode == RateMode::raw && c.q[k] > 1.0)
        throw std::invalid_argument(who + ".q[" + std::to_string(k) +
                                    "]: raw mode holds per-slot probabilities, must lie in [0,1]");
      if (c.q[k] > 0.0) any_positive = true;
    }
    if (!any_positive)
      throw std::invalid_argument(who + ".q: all rates are zero");
    if (!(c.sigma >= 0.0 && c.sigma <= 1.0))
      throw std::invalid_argument(who + ".sigma: must lie in [0,1]");
    sigma_sum += c.sigma;
  }
  if (std::abs(sigma_sum - 1.0) > 1e-12)
    throw std::invalid_argument("sigma: class shares sum to " + std::to_string(sigma_sum) +
                                ", expected 1");
  if (s.delta && *s.delta < 0)
    throw std::invalid_argument("delta: must be >= 0 or infinite");
  if (s.classes.size() == 1) s.delta.reset();  // AIFS inert with one class
  return s;
}

ConditionReport check_conditions(const ClassParams& c) {
  ConditionReport r;
  r.mono = true;
  r.mint = true;
  for (std::size_t k = 0; k < c.q.size(); ++k) {
    if (k + 1 < c.q.size() && c.q[k] < c.q[k + 1]) r.mono = false;
    if (c.q[k] > 1.0) r.mint = false;
  }
  r.bmp = c.q[0] < std::numbers::ln2;
  for (std::size_t k = 0; k + 1 < c.q.size() && r.bmp; ++k) {
    const double half = c.q[k] / 2.0;
    // rates come from user config, so allow decimal-rounding slack
    if (std::abs(c.q[k + 1] - half) > 1e-12 * std::max(half, 1e-300)) r.bmp = false;
  }
  r.uniq_hint = r.mono || r.mint;
  return r;
}

double mean_attempt_rate(std::span<const double> phi, const ClassParams& c) {
  if (phi.size() != c.q.size())
    throw std::invalid_argument("mean_attempt_rate: phi length " +
                                std::to_string(phi.size()) + " but class has " +
                                std::to_string(c.q.size()) + " stages");
  double s = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) s += c.q[k] * phi[k];
  return s;
}

double collision_mfl(double rate) {
  if (!(rate >= 0.0))
    throw std::invalid_argument("collision_mfl: rate must be >= 0");
  return -std::expm1(-rate);
}

double collision_finite(std::span<const long> stage_counts,
                        std::span<const double> p, int tagged_stage) {
  if (stage_counts.size() != p.size())
    throw std::invalid_argument("collision_finite: counts/probability length mismatch");
  if (tagged_stage < 0 || static_cast<std::size_t>(tagged_stage) >= p.size() ||
      stage_counts[tagged_stage] <= 0)
    throw std::invalid_argument("collision_finite: no node in tagged stage");
  // 1 - prod over the *other* nodes of (1 - p_stage); the tagged node's own
  // factor is excluded by dropping one exponent in its stage.
  double log_idle = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    long exponent = stage_counts[k] - (static_cast<int>(k) == tagged_stage ? 1 : 0);
    if (exponent == 0) continue;
    if (stage_counts[k] < 0)
      throw std::invalid_argument("collision_finite: negative count");
    if (p[k] >= 1.0) return 1.0;  // some other node attempts surely
    log_idle += static_cast<double>(exponent) * std::log1p(-p[k]);
  }
  double g = -std::expm1(log_idle);
  if (g < 0.0) g = 0.0;
  if (g > 1.0) g = 1.0;
  return g;
}

std::vector<double> scaled_rates(const Scenario& s, std::size_t cls) {
  std::vector<double> r = s.classes[cls].q;
  if (s.mode == RateMode::raw)
    for (double& v : r) v *= static_cast<double>(s.N);
  return r;
}

OccupancyState all_stage0(const Scenario& s) {
  OccupancyState x;
  x.phi.resize(s.classes.size());
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    x.phi[i].assign(s.classes[i].q.size(), 0.0);
    x.phi[i][0] = s.classes[i].sigma;
  }
  return x;
}

void check_occupancy(const OccupancyState& x, const Scenario& s) {
  if (x.phi.size() != s.classes.size())
    throw std::invalid_argument("occupancy: class count mismatch");
  for (std::size_t i = 0; i < x.phi.size(); ++i) {
    if (x.phi[i].size() != s.classes[i].q.size())
      throw std::invalid_argument("occupancy: stage count mismatch in " +
                                  cls_name(i, x.phi.size()));
    double sum = 0.0;
    for (double v : x.phi[i]) {
      if (!(v >= -kOccupancyTol))
        throw std::invalid_argument("occupancy: component below -1e-9 in " +
                                    cls_name(i, x.phi.size()));
      sum += v;
    }
    if (std::abs(sum - s.classes[i].sigma) > kOccupancyTol)
      throw std::invalid_argument("occupancy: " + cls_name(i, x.phi.size()) +
                                  " mass " + std::to_string(sum) + " != sigma");
  }
}

}  // namespace macfield
