#include "macfield/fpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace macfield {

namespace {

constexpr double kRootDedupe = 1e-6;

double finite_or(double v, double fallback) {
  return std::isfinite(v) ? v : fallback;
}

}  // namespace

double bianchi_attempt_rate(double gamma, std::span<const double> rates) {
  double num = 0.0, den = 0.0, gk = 1.0;
  for (std::size_t k = 0; k < rates.size(); ++k) {
    if (gk > 0.0) {
      num += gk;
      den += gk / rates[k];  // rate 0 -> +inf term, ratio collapses to 0
    }
    gk *= gamma;
  }
  if (std::isinf(den)) return 0.0;
  return num / den;
}

double homogeneous_residual(double gamma, std::span<const double> scaled_rates) {
  return -std::expm1(-bianchi_attempt_rate(gamma, scaled_rates)) - gamma;
}

double homogeneous_residual_finite(double gamma, std::span<const double> p, long N) {
  return -std::expm1(-static_cast<double>(N) * bianchi_attempt_rate(gamma, p)) - gamma;
}

double scenario_residual(double gamma, const Scenario& s) {
  if (s.classes.size() == 2 && s.delta && *s.delta != 0)
    throw std::invalid_argument(
        "scenario_residual: two-class single-variable form needs delta = 0");
  double total = 0.0;
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    auto rates = scaled_rates(s, i);
    total += s.classes[i].sigma * bianchi_attempt_rate(gamma, rates);
  }
  return -std::expm1(-total) - gamma;
}

RootScan enumerate_roots(const std::function<double(double)>& f, double lo, double hi,
                         int grid_points) {
  if (!(hi > lo) || grid_points < 2)
    throw std::invalid_argument("enumerate_roots: bad interval or grid");
  RootScan out;
  const double dx = (hi - lo) / grid_points;

  auto refine = [&](double a, double b) {
    double fa = f(a);
    for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
      double m = 0.5 * (a + b);
      double fm = f(m);
      if (fm == 0.0) { a = b = m; break; }
      if ((fa < 0.0) != (fm < 0.0)) {
        b = m;
      } else {
        a = m;
        fa = fm;
      }
    }
    double x = 0.5 * (a + b);
    // one Newton polish via central difference
    const double h = 1e-7;
    double d = (f(std::min(x + h, hi)) - f(std::max(x - h, lo))) / (2.0 * h);
    if (std::isfinite(d) && d != 0.0) {
      double x2 = x - f(x) / d;
      if (x2 >= a - 10 * dx && x2 <= b + 10 * dx && std::abs(f(x2)) <= std::abs(f(x)))
        x = x2;
    }
    return x;
  };

  double xp = lo, fp = f(lo);
  double prev_abs = std::abs(fp);
  bool falling = false;
  for (int i = 1; i <= grid_points; ++i) {
    const double x = lo + dx * i;
    const double fx = f(x);
    if (fp == 0.0) {
      out.roots.push_back(xp);
    } else if ((fp < 0.0) != (fx < 0.0)) {
      out.roots.push_back(refine(xp, x));
    } else {
      // |f| local minimum without a crossing: possible tangential root
      const double cur_abs = std::abs(fx);
      if (falling && cur_abs > prev_abs && prev_abs < 1e-6) out.tangency_hints.push_back(xp);
      falling = cur_abs < prev_abs;
      prev_abs = cur_abs;
    }
    xp = x;
    fp = fx;
  }
  if (fp == 0.0) out.roots.push_back(xp);

  std::sort(out.roots.begin(), out.roots.end());
  std::vector<double> dedup;
  for (double r : out.roots)
    if (dedup.empty() || r - dedup.back() > kRootDedupe) dedup.push_back(r);
  out.roots = std::move(dedup);
  // drop hints that sit next to a genuine root
  std::erase_if(out.tangency_hints, [&](double hgt) {
    for (double r : out.roots)
      if (std::abs(hgt - r) < 1e-3) return true;
    return false;
  });
  return out;
}

std::vector<double> equilibrium_occupancy(double gamma, const ClassParams& c) {
  std::vector<double> phi(c.q.size());
  double gk = 1.0, total = 0.0;
  for (std::size_t k = 0; k < c.q.size(); ++k) {
    if (c.q[k] <= 0.0)
      throw std::invalid_argument("equilibrium_occupancy: zero rate at stage " +
                                  std::to_string(k));
    phi[k] = gk / c.q[k];
    total += phi[k];
    gk *= gamma;
  }
  for (double& v : phi) v *= c.sigma / total;
  return phi;
}

PiCoeffs pi_coeffs(double gamma_r, double gamma_c, std::optional<long> delta) {
  if (!delta) return {1.0, 0.0};
  const long d = *delta;
  if (d == 0) return {0.0, 1.0};
  const double u = 1.0 - gamma_r;  // idle probability of a reserved slot
  double s;                        // expected reserved slots per cycle
  if (gamma_r <= 0.0) {
    s = static_cast<double>(d);
  } else if (d <= 64) {
    s = 0.0;
    double ui = 1.0;
    for (long i = 0; i < d; ++i) { s += ui; ui *= u; }
  } else {
    s = (1.0 - std::pow(u, static_cast<double>(d))) / gamma_r;
  }
  const double ud = std::pow(u, static_cast<double>(d));
  if (gamma_c <= 1e-14) {
    // common slots essentially never end; they dominate unless unreachable
    if (ud > 0.0) return {0.0, 1.0};
    return {1.0, 0.0};
  }
  const double t = ud / gamma_c;  // expected common slots per cycle
  const double pi_r = s / (s + t);
  return {pi_r, 1.0 - pi_r};
}

ExtendedPoint extended_eval(double qbar_h, double qbar_l, const Scenario& s) {
  if (s.classes.size() != 2)
    throw std::invalid_argument("extended_eval: two-class scenario required");
  ExtendedPoint pt;
  pt.gamma_r = -std::expm1(-qbar_h);
  pt.gamma_c = -std::expm1(-(qbar_h + qbar_l));
  const PiCoeffs pc = pi_coeffs(pt.gamma_r, pt.gamma_c, s.delta);
  pt.pi_r = pc.pi_r;
  pt.pi_c = pc.pi_c;
  pt.gamma_h = pt.pi_r * pt.gamma_r + pt.pi_c * pt.gamma_c;
  const auto rh = scaled_rates(s, 0);
  const auto rl = scaled_rates(s, 1);
  pt.rhs_h = s.classes[0].sigma * bianchi_attempt_rate(pt.gamma_h, rh);
  pt.rhs_l = s.classes[1].sigma * bianchi_attempt_rate(pt.gamma_c, rl);
  return pt;
}

std::pair<double, double> extended_residual(double qbar_h, double qbar_l,
                                            const Scenario& s) {
  const ExtendedPoint pt = extended_eval(qbar_h, qbar_l, s);
  return {pt.rhs_h - qbar_h, pt.rhs_l - qbar_l};
}

double gamma_h_compact(double qbar_h, double qbar_l, std::optional<long> delta) {
  if (!delta) return -std::expm1(-qbar_h);
  const long d = *delta;
  if (d == 0) return -std::expm1(-(qbar_h + qbar_l));
  const double gc = -std::expm1(-(qbar_h + qbar_l));
  if (qbar_h * static_cast<double>(d) > 500.0)  // h -> inf limit
    return -std::expm1(-qbar_h);
  double h;
  if (qbar_h < 1e-12) {
    h = static_cast<double>(d) * gc;  // (e^{qH d}-1)/(1-e^{-qH}) -> d
  } else {
    h = std::expm1(qbar_h * static_cast<double>(d)) * gc / (-std::expm1(-qbar_h));
  }
  return 1.0 - (std::exp(-qbar_h) * h + std::exp(-(qbar_h + qbar_l))) / (h + 1.0);
}

namespace {

struct Candidate {
  double qh, ql;
};

// Damped self-map iteration x <- (1-d)x + d*F(x); the stationary rate maps
// are monotone, which keeps this robust over the whole box.
bool damped_fixed_point(const Scenario& s, double& qh, double& ql,
                        const std::vector<Candidate>& found) {
  constexpr double kDamping = 0.5;
  for (int it = 0; it < 300; ++it) {
    const ExtendedPoint pt = extended_eval(qh, ql, s);
    const double nh = (1.0 - kDamping) * qh + kDamping * pt.rhs_h;
    const double nl = (1.0 - kDamping) * ql + kDamping * pt.rhs_l;
    const double move = std::abs(nh - qh) + std::abs(nl - ql);
    qh = nh;
    ql = nl;
    if (move < 1e-12 * (1.0 + qh + ql)) return true;
    if ((it & 15) == 15) {
      for (const auto& c : found)  // already attracted to a known root
        if (std::abs(qh - c.qh) < 1e-5 && std::abs(ql - c.ql) < 1e-5) return true;
    }
  }
  return false;
}

bool newton_polish(const Scenario& s, double& qh, double& ql) {
  double x = qh, y = ql;
  auto res = [&](double a, double b) { return extended_residual(a, b, s); };
  for (int it = 0; it < 40; ++it) {
    const auto [r1, r2] = res(x, y);
    if (std::abs(r1) < 1e-13 && std::abs(r2) < 1e-13) break;
    const double hx = 1e-7 * std::max(1.0, std::abs(x));
    const double hy = 1e-7 * std::max(1.0, std::abs(y));
    const auto [a1, a2] = res(x + hx, y);
    const auto [b1, b2] = res(x - hx, y);
    const auto [c1, c2] = res(x, y + hy);
    const auto [d1, d2] = res(x, y - hy);
    const double j11 = (a1 - b1) / (2 * hx), j12 = (c1 - d1) / (2 * hy);
    const double j21 = (a2 - b2) / (2 * hx), j22 = (c2 - d2) / (2 * hy);
    const double det = j11 * j22 - j12 * j21;
    if (!std::isfinite(det) || std::abs(det) < 1e-300) break;
    const double dx = (r1 * j22 - r2 * j12) / det;
    const double dy = (r2 * j11 - r1 * j21) / det;
    x -= dx;
    y -= dy;
    if (x < 0.0) x = 0.0;
    if (y < 0.0) y = 0.0;
    if (std::abs(dx) + std::abs(dy) < 1e-14 * (1.0 + x + y)) break;
  }
  const auto [r1, r2] = res(x, y);
  if (std::max(std::abs(r1), std::abs(r2)) < 1e-10) {
    qh = x;
    ql = y;
    return true;
  }
  return false;
}

}  // namespace

std::vector<FpeSolution> solve_extended(const Scenario& s, int grid) {
  if (s.classes.size() != 2)
    throw std::invalid_argument("solve_extended: two-class scenario required");
  if (grid < 8) grid = 8;

  const auto rh = scaled_rates(s, 0);
  const auto rl = scaled_rates(s, 1);
  const double wh = s.classes[0].sigma * *std::max_element(rh.begin(), rh.end());
  const double wl = s.classes[1].sigma * *std::max_element(rl.begin(), rl.end());

  std::vector<Candidate> found;
  auto note = [&](double qh, double ql) {
    if (!newton_polish(s, qh, ql)) return;
    for (const auto& c : found)
      if (std::abs(qh - c.qh) < kRootDedupe && std::abs(ql - c.ql) < kRootDedupe) return;
    found.push_back({qh, ql});
  };

  // residual signs on the lattice; cells where both components change sign
  // get a Newton start (covers roots the damped iteration repels from)
  const int n = grid + 1;
  std::vector<double> r1(static_cast<std::size_t>(n) * n), r2(r1.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto [a, b] =
          extended_residual(wh * i / grid, wl * j / grid, s);
      r1[static_cast<std::size_t>(i) * n + j] = a;
      r2[static_cast<std::size_t>(i) * n + j] = b;
    }
  auto sign_change = [&](const std::vector<double>& r, int i, int j) {
    const double v00 = r[static_cast<std::size_t>(i) * n + j];
    const double v01 = r[static_cast<std::size_t>(i) * n + j + 1];
    const double v10 = r[static_cast<std::size_t>(i + 1) * n + j];
    const double v11 = r[static_cast<std::size_t>(i + 1) * n + j + 1];
    const bool s0 = v00 < 0;
    return (v01 < 0) != s0 || (v10 < 0) != s0 || (v11 < 0) != s0;
  };
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      if (sign_change(r1, i, j) && sign_change(r2, i, j))
        note(wh * (i + 0.5) / grid, wl * (j + 0.5) / grid);

  // damped fixed-point iteration from every grid cell
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      double qh = wh * (i + 0.5) / grid;
      double ql = wl * (j + 0.5) / grid;
      if (damped_fixed_point(s, qh, ql, found)) note(qh, ql);
    }

  if (found.empty())
    throw std::runtime_error("solve_extended: no stationary solution converged");

  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    return a.qh + a.ql < b.qh + b.ql;
  });
  std::vector<FpeSolution> out;
  for (const auto& c : found) {
    const ExtendedPoint pt = extended_eval(c.qh, c.ql, s);
    FpeSolution sol;
    sol.qbar_h = c.qh;
    sol.qbar_l = c.ql;
    sol.gamma_h = pt.gamma_h;
    sol.gamma_c = pt.gamma_c;
    sol.gamma_r = pt.gamma_r;
    sol.pi_r = pt.pi_r;
    sol.pi_c = pt.pi_c;
    sol.residual_norm =
        std::max(std::abs(pt.rhs_h - c.qh), std::abs(pt.rhs_l - c.ql));
    sol.multiplicity_index = static_cast<int>(out.size());
    out.push_back(sol);
  }
  return out;
}

std::vector<FpeSolution> solve_fpe(const Scenario& s) {
  if (s.classes.size() == 2) return solve_extended(s);
  const auto rates = scaled_rates(s, 0);
  const auto scan =
      enumerate_roots([&](double g) { return homogeneous_residual(g, rates); });
  if (scan.roots.empty())
    throw std::runtime_error(
        "solve_fpe: no root found although the residual must cross zero");
  std::vector<FpeSolution> out;
  for (double g : scan.roots) {
    FpeSolution sol;
    sol.qbar_h = finite_or(-std::log1p(-g), 0.0);
    sol.gamma_h = sol.gamma_c = sol.gamma_r = g;
    sol.pi_r = 1.0;  // one class: the infinite-gap (all-reserved) convention
    sol.pi_c = 0.0;
    sol.residual_norm = std::abs(homogeneous_residual(g, rates));
    sol.multiplicity_index = static_cast<int>(out.size());
    out.push_back(sol);
  }
  return out;
}

}  // namespace macfield
