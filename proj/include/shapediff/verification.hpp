//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_VERIFICATION_HPP_
#define SHAPEDIFF_VERIFICATION_HPP_

#include <string>
#include <vector>

#include "shapediff/params.hpp"

namespace shapediff {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Closed-form categorical posterior vs exhaustive Bayes over the step and
/// marginal kernels, all class pairs, t in {1, 2, 500, 1000}.
CheckResult check_categorical_posterior();

/// Importance-weighted Monte-Carlo Bayes estimate of E[x_{t-1} | x_t, x_0]
/// vs the closed-form mean, 1e5 samples at t in {2, 10, 500}, 4-sigma bound.
CheckResult check_gaussian_posterior();

/// Step-kernel composition vs closed-form marginals: exact for the
/// categorical chain (transition-matrix products), Monte-Carlo moments for
/// the Gaussian chain.
CheckResult check_forward_marginals();

/// Encoder equivariance, decoder joint-rotation invariance, and denoiser
/// equivariance/invariance (single layer and stacked), 100 random rotations,
/// relative error < 1e-6 in f64.
CheckResult check_equivariance();

/// Central finite differences (h = 1e-5) against the analytic gradients for
/// every trainable tensor of both networks on single-element microbatches.
CheckResult check_gradients();

/// Schedule endpoints, monotonicity, and the smoothness bound on beta_x.
CheckResult check_schedule();

std::vector<CheckResult> run_oracle_suite();

/// Shared helper: central-difference validation of analytic gradients.
/// Entries whose absolute deviation sits below `atol` count as matching: the
/// difference quotient carries ~eps*|loss|/h of cancellation noise, so a
/// pure relative bound is meaningless for near-zero gradients.
struct GradCheckReport {
  double max_rel_err = 0.0;
  long entries = 0;
  std::string worst;
};

template <class LossFn>
GradCheckReport finite_difference_check(ParamStore<double>& params,
                                        const GradMap<double>& analytic, LossFn&& loss,
                                        double h = 1e-5, double atol = 1e-7) {
  GradCheckReport report;
  for (auto& [name, tensor] : params.tensors) {
    auto git = analytic.find(name);
    for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
      for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
        const double saved = tensor(i, j);
        tensor(i, j) = saved + h;
        const double up = loss();
        tensor(i, j) = saved - h;
        const double down = loss();
        tensor(i, j) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = git == analytic.end() ? 0.0 : git->second(i, j);
        const double abs_err = std::abs(fd - an);
        const double rel = abs_err < atol ? 0.0 : abs_err / (std::abs(fd) + std::abs(an));
        ++report.entries;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst = name + "(" + std::to_string(i) + "," + std::to_string(j) + ")";
        }
      }
    }
  }
  return report;
}

}  // namespace shapediff

#endif  // SHAPEDIFF_VERIFICATION_HPP_
