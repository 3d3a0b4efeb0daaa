//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/forward_process.hpp"

#include <cmath>
#include <stdexcept>

namespace shapediff {

namespace {
void check_step(int t, const Schedule& sched) {
  if (t < 1 || t > sched.T) throw std::out_of_range("diffusion step out of range");
}
}  // namespace

NoisedPositions noise_positions(const Points3& x0, int t, const Schedule& sched, Rng& rng) {
  check_step(t, sched);
  const double abar = sched.alphaBarX(t);
  NoisedPositions out;
  out.eps.resize(x0.rows(), 3);
  for (Eigen::Index i = 0; i < x0.rows(); ++i) out.eps.row(i) = rng.normal3().transpose();
  out.x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * out.eps;
  return out;
}

Eigen::MatrixXd noise_features(const Eigen::MatrixXd& v0, int t, const Schedule& sched, Rng& rng) {
  check_step(t, sched);
  const int K = static_cast<int>(v0.cols());
  for (Eigen::Index i = 0; i < v0.rows(); ++i) {
    int ones = 0;
    for (int k = 0; k < K; ++k) {
      if (v0(i, k) == 1.0) ++ones;
      else if (v0(i, k) != 0.0) throw std::invalid_argument("noise_features expects one-hot rows");
    }
    if (ones != 1) throw std::invalid_argument("noise_features expects one-hot rows");
  }
  const double abar = sched.alphaBarV(t);
  Eigen::MatrixXd v_t = Eigen::MatrixXd::Zero(v0.rows(), K);
  for (Eigen::Index i = 0; i < v0.rows(); ++i) {
    Eigen::VectorXd marginal = abar * v0.row(i).transpose() +
                               Eigen::VectorXd::Constant(K, (1.0 - abar) / K);
    v_t(i, sample_categorical(marginal, rng)) = 1.0;
  }
  return v_t;
}

GaussianPosterior posterior_positions(const Points3& x_t, const Points3& x0, int t,
                                      const Schedule& sched) {
  check_step(t, sched);
  const double abar_t = sched.alphaBarX(t);
  const double abar_prev = sched.alphaBarX(t - 1);
  const double beta_t = sched.betaX(t);
  const double alpha_t = sched.alphaX(t);
  const double denom = 1.0 - abar_t;

  GaussianPosterior post;
  post.mean = (std::sqrt(abar_prev) * beta_t / denom) * x0 +
              (std::sqrt(alpha_t) * (1.0 - abar_prev) / denom) * x_t;
  post.variance = (1.0 - abar_prev) / denom * beta_t;
  return post;
}

CategoricalPosterior posterior_features(const Eigen::MatrixXd& v_t, const Eigen::MatrixXd& v0,
                                        int t, const Schedule& sched) {
  check_step(t, sched);
  CategoricalPosterior post;
  post.probs.resize(v_t.rows(), v_t.cols());
  for (Eigen::Index i = 0; i < v_t.rows(); ++i) {
    post.probs.row(i) =
        posterior_feature_row(v_t.row(i).transpose(), v0.row(i).transpose(), t, sched).transpose();
  }
  return post;
}

Eigen::VectorXd posterior_feature_row(const Eigen::VectorXd& v_t, const Eigen::VectorXd& v0,
                                      int t, const Schedule& sched) {
  check_step(t, sched);
  const int K = static_cast<int>(v_t.size());
  const double alpha_t = sched.alphaV(t);
  const double abar_prev = sched.alphaBarV(t - 1);
  const Eigen::ArrayXd left = alpha_t * v_t.array() + (1.0 - alpha_t) / K;
  const Eigen::ArrayXd right = abar_prev * v0.array() + (1.0 - abar_prev) / K;
  Eigen::ArrayXd c = left * right;
  const double sum = c.sum();
  if (sum < 1e-300) throw std::runtime_error("degenerate posterior");
  return (c / sum).matrix();
}

Eigen::VectorXd one_hot(int k, int num_classes) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(num_classes);
  v[k] = 1.0;
  return v;
}

int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  const double u = rng.uniform() * probs.sum();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace shapediff
