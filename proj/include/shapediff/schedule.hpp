//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_SCHEDULE_HPP_
#define SHAPEDIFF_SCHEDULE_HPP_

#include <Eigen/Core>

namespace shapediff {

/// Position-noise variances: beta_t = sigmoid(w1*(2t/T - 1))*(w2 - w3) + w3,
/// evaluated at t = 1..T (index 0 of the result is t=1).
Eigen::ArrayXd sigmoid_beta_schedule(int T, double w1 = 6.0, double w2 = 1e-7,
                                     double w3 = 0.01);

/// Feature-noise variances from the squared-cosine profile
/// abar_t = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2),
/// beta_t = 1 - abar_t/abar_{t-1} clipped to <= 0.999. The returned
/// cumulative products are recomputed from the clipped betas so the chain
/// stays self-consistent (the clip only binds at t = T, leaving
/// abar_T ~ 2e-9 instead of an exact 0).
struct CosineSchedule {
  Eigen::ArrayXd beta;       // size T, t = 1..T
  Eigen::ArrayXd alpha_bar;  // size T+1, index t, alpha_bar[0] = 1
};
CosineSchedule cosine_beta_schedule(int T, double s = 0.01);

/// Cumulative products abar_t = prod_{tau<=t}(1 - beta_tau), abar_0 = 1.
/// Result has size T+1 and is indexed by t directly.
Eigen::ArrayXd alpha_bar(const Eigen::ArrayXd& beta);

/// Precomputed variance schedules for both chains, 1-based step indexing with
/// alpha_bar[0] = 1 stored explicitly. Immutable after construction.
struct Schedule {
  int T = 0;
  Eigen::ArrayXd beta_x;       // size T, entry t-1 holds beta_t
  Eigen::ArrayXd beta_v;       // size T
  Eigen::ArrayXd alpha_bar_x;  // size T+1, indexed by t
  Eigen::ArrayXd alpha_bar_v;  // size T+1

  static Schedule make(int T);

  double betaX(int t) const { return beta_x[t - 1]; }
  double betaV(int t) const { return beta_v[t - 1]; }
  double alphaX(int t) const { return 1.0 - beta_x[t - 1]; }
  double alphaV(int t) const { return 1.0 - beta_v[t - 1]; }
  double alphaBarX(int t) const { return alpha_bar_x[t]; }
  double alphaBarV(int t) const { return alpha_bar_v[t]; }
};

}  // namespace shapediff

#endif  // SHAPEDIFF_SCHEDULE_HPP_
