//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_FORWARD_PROCESS_HPP_
#define SHAPEDIFF_FORWARD_PROCESS_HPP_

#include <Eigen/Core>

#include "shapediff/geometry.hpp"
#include "shapediff/rng.hpp"
#include "shapediff/schedule.hpp"

namespace shapediff {

/// Per-atom noisy positions and feature distributions at a diffusion step.
/// Feature rows are one-hot at t = 0 and remain valid probability rows after
/// noising (sampled one-hot during training).
struct DiffusionState {
  Points3 x;          // |M| x 3
  Eigen::MatrixXd v;  // |M| x K, rows sum to 1
  int t = 0;
};

struct GaussianPosterior {
  Points3 mean;
  double variance = 0.0;  // beta_tilde_t, zero only at t = 1
};

struct CategoricalPosterior {
  Eigen::MatrixXd probs;  // |M| x K, rows sum to 1
};

struct NoisedPositions {
  Points3 x_t;
  Points3 eps;  // the standard-normal draw, kept for diagnostics
};

/// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps, eps ~ N(0, I).
NoisedPositions noise_positions(const Points3& x0, int t, const Schedule& sched, Rng& rng);

/// One-hot sample from C(abar_t v_0 + (1 - abar_t)/K) per atom.
Eigen::MatrixXd noise_features(const Eigen::MatrixXd& v0, int t, const Schedule& sched, Rng& rng);

/// Closed-form Normal posterior of x_{t-1} given (x_t, x_0):
///   mu = sqrt(abar_{t-1}) beta_t / (1-abar_t) * x0
///      + sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t) * x_t,
///   beta_tilde = (1-abar_{t-1}) / (1-abar_t) * beta_t.
GaussianPosterior posterior_positions(const Points3& x_t, const Points3& x0, int t,
                                      const Schedule& sched);

/// Closed-form categorical posterior of v_{t-1} given (v_t, v_0):
///   c ~ [alpha_t v_t + (1-alpha_t)/K] (*) [abar_{t-1} v_0 + (1-abar_{t-1})/K],
/// normalized per row. v_0 may be a soft prediction.
CategoricalPosterior posterior_features(const Eigen::MatrixXd& v_t, const Eigen::MatrixXd& v0,
                                        int t, const Schedule& sched);

/// Single-row convenience used by the samplers and losses.
Eigen::VectorXd posterior_feature_row(const Eigen::VectorXd& v_t, const Eigen::VectorXd& v0,
                                      int t, const Schedule& sched);

/// One-hot row for class k.
Eigen::VectorXd one_hot(int k, int num_classes = kNumAtomClasses);

/// Draws a class index from a probability row.
int sample_categorical(const Eigen::VectorXd& probs, Rng& rng);

}  // namespace shapediff

#endif  // SHAPEDIFF_FORWARD_PROCESS_HPP_
