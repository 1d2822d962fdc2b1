// Achievable throughput of the saturated cell as a function of the aggregate
// attempt rate, its optimizer, and the backoff-multiplier construction that
// attains the optimum while keeping the rates mild (MINT) and monotone.
#pragma once

namespace macfield {

struct ThroughputParams {
  double L = 1.0;    // mean successful-transmission duration, time-slots
  double L_c = 1.0;  // collision duration, time-slots (>= 1)
  double L_o = 0.0;  // per-success overhead, time-slots
};

// P1*L / (P1*(L+Lo) + P0 + Pc*Lc) with P1 = qbar e^-qbar, P0 = e^-qbar;
// evaluates to 0 at qbar = 0.
double omega(double qbar, const ThroughputParams& p);

// Unique solution of (qbar - 1) e^qbar = 1/L_c - 1; lies in (0, 1] whenever
// L_c >= 1 and maximizes omega.
double optimal_qbar(double L_c);

// Multiplier m such that the geometric class q_k = q0 / m^k has its
// stationary attempt rate equal to qstar. Requires q0 in [qstar, 1].
double fit_multiplier(double q0, double qstar, int K);

}  // namespace macfield
