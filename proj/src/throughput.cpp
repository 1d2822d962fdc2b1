#include "macfield/throughput.hpp"

#include <cmath>
#include <stdexcept>

namespace macfield {

double omega(double qbar, const ThroughputParams& p) {
  if (!(qbar >= 0.0)) throw std::invalid_argument("omega: qbar must be >= 0");
  const double p0 = std::exp(-qbar);
  const double p1 = qbar * p0;
  const double pc = 1.0 - p1 - p0;
  const double den = p1 * (p.L + p.L_o) + p0 + pc * p.L_c;
  return p1 * p.L / den;  // qbar = 0: 0 / (P0 = 1), the continuous limit
}

double optimal_qbar(double L_c) {
  if (!(L_c > 0.0)) throw std::invalid_argument("optimal_qbar: L_c must be > 0");
  const double target = 1.0 / L_c - 1.0;
  auto g = [&](double q) { return (q - 1.0) * std::exp(q) - target; };
  double lo = 0.0, hi = 1.0;
  while (g(hi) < 0.0) hi *= 2.0;  // L_c < 1 pushes the root above 1
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double q = 0.5 * (lo + hi);
  for (int it = 0; it < 8; ++it) {  // Newton polish; g' = q e^q
    const double d = q * std::exp(q);
    if (d <= 0.0) break;
    const double step = g(q) / d;
    q -= step;
    if (std::abs(step) < 1e-16) break;
  }
  return q;
}

double fit_multiplier(double q0, double qstar, int K) {
  if (K < 0) throw std::invalid_argument("fit_multiplier: K must be >= 0");
  if (!(q0 >= qstar - 1e-12) || !(q0 <= 1.0 + 1e-12))
    throw std::invalid_argument("fit_multiplier: q0 must lie in [qstar, 1]");
  const double g = -std::expm1(-qstar);  // stationary collision probability
  const double target = qstar / q0;
  if (target >= 1.0) return 1.0;  // q0 = qstar: the flat ladder is exact
  // R(m) = sum g^k / sum g^k m^k, strictly decreasing in m, R(1) = 1
  auto ratio = [&](double m) {
    double num = 0.0, den = 0.0, gk = 1.0, gmk = 1.0;
    for (int k = 0; k <= K; ++k) {
      num += gk;
      den += gmk;
      gk *= g;
      gmk *= g * m;
    }
    return std::isinf(den) ? 0.0 : num / den;
  };
  double lo = 1e-6, hi = 1e-6;
  while (ratio(hi) > target && hi < 1e6) hi *= 10.0;  // log probe for a bracket
  if (ratio(hi) > target)
    throw std::invalid_argument("fit_multiplier: no multiplier in [1e-6, 1e6]");
  lo = hi / 10.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ratio(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace macfield
