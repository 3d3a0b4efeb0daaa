//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace shapediff {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Eigen::ArrayXd sigmoid_beta_schedule(int T, double w1, double w2, double w3) {
  if (T < 2) throw std::invalid_argument("schedule needs T >= 2");
  Eigen::ArrayXd beta(T);
  for (int t = 1; t <= T; ++t) {
    beta[t - 1] = sigmoid(w1 * (2.0 * t / T - 1.0)) * (w2 - w3) + w3;
  }
  if ((beta <= 0.0).any() || (beta >= 1.0).any())
    throw std::invalid_argument("sigmoid schedule parameters produce beta outside (0,1)");
  return beta;
}

CosineSchedule cosine_beta_schedule(int T, double s) {
  if (T < 2) throw std::invalid_argument("schedule needs T >= 2");
  auto f = [&](double t) {
    const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);

  CosineSchedule out;
  out.beta.resize(T);
  double prev = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double abar_formula = f(static_cast<double>(t)) / f0;
    out.beta[t - 1] = std::min(1.0 - abar_formula / prev, 0.999);
    prev = abar_formula;
  }
  out.alpha_bar = alpha_bar(out.beta);
  return out;
}

Eigen::ArrayXd alpha_bar(const Eigen::ArrayXd& beta) {
  if ((beta <= 0.0).any() || (beta >= 1.0).any())
    throw std::invalid_argument("alpha_bar: beta entries must lie in (0,1)");
  Eigen::ArrayXd out(beta.size() + 1);
  out[0] = 1.0;
  for (Eigen::Index t = 0; t < beta.size(); ++t) out[t + 1] = out[t] * (1.0 - beta[t]);
  return out;
}

Schedule Schedule::make(int T) {
  Schedule s;
  s.T = T;
  s.beta_x = sigmoid_beta_schedule(T);
  s.alpha_bar_x = alpha_bar(s.beta_x);
  CosineSchedule cos = cosine_beta_schedule(T);
  s.beta_v = cos.beta;
  s.alpha_bar_v = cos.alpha_bar;
  return s;
}

}  // namespace shapediff
