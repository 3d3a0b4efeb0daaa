//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_SAMPLING_HPP_
#define SHAPEDIFF_SAMPLING_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapediff/forward_process.hpp"
#include "shapediff/predictor.hpp"
#include "shapediff/schedule.hpp"
#include "shapediff/shape_autoencoder.hpp"
#include "shapediff/training.hpp"

namespace shapediff {

/// Noise injection point for the sampler. Tests couple rotated runs by
/// wrapping the base source and rotating each Gaussian draw.
class SampleNoise {
 public:
  explicit SampleNoise(Rng rng) : rng_(rng) {}
  virtual ~SampleNoise() = default;
  virtual Eigen::Vector3d normal3() { return rng_.normal3(); }
  virtual double uniform01() { return rng_.uniform(); }

 private:
  Rng rng_;
};

struct GuidanceConfig {
  double gamma = 0.2;      // distance threshold (Angstrom)
  int stop_step = 300;     // guidance applies for t >= stop_step
  double sigma_min = 0.2;  // blend weight range
  double sigma_max = 0.8;
  int n_neighbors = 5;     // guidance points averaged per atom
  double phi = 0.049;      // variance of the atom-centered Gaussians
  int points_per_atom = 20;
};

/// Per-step record of what guidance did to one atom.
struct GuidanceEvent {
  int t = 0;
  int atom = 0;
  bool moved = false;
  double mean_dist = 0.0;
};

struct SampleOptions {
  std::optional<GuidanceConfig> guidance;
  // Backward position variance: "as_printed" uses (1 - abar_t); "beta_tilde"
  // uses the ground-truth posterior variance instead.
  std::string posterior_variance = "as_printed";
  bool record_trace = false;
};

/// x_T ~ N(0, I) per coordinate, v_T one-hot uniform over K classes.
inline DiffusionState sample_prior(int n_atoms, int K, SampleNoise& noise, int T) {
  if (n_atoms < 1) throw std::invalid_argument("sample_prior: need at least one atom");
  DiffusionState st;
  st.t = T;
  st.x.resize(n_atoms, 3);
  for (int i = 0; i < n_atoms; ++i) st.x.row(i) = noise.normal3().transpose();
  st.v = Eigen::MatrixXd::Zero(n_atoms, K);
  for (int i = 0; i < n_atoms; ++i) {
    const int k = std::min(K - 1, static_cast<int>(noise.uniform01() * K));
    st.v(i, k) = 1.0;
  }
  return st;
}

/// points_per_atom Gaussian draws around each condition atom (centered frame).
inline Points3 build_guidance_points(const Points3& condition_centered,
                                     const GuidanceConfig& cfg, SampleNoise& noise) {
  const int n = static_cast<int>(condition_centered.rows());
  if (n < 1) throw std::invalid_argument("build_guidance_points: empty condition");
  Points3 q(n * cfg.points_per_atom, 3);
  const double std_dev = std::sqrt(cfg.phi);
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < cfg.points_per_atom; ++p)
      q.row(i * cfg.points_per_atom + p) =
          condition_centered.row(i) + std_dev * noise.normal3().transpose();
  return q;
}

/// Pulls atoms farther than gamma (mean distance over their n nearest
/// guidance points) toward the mean of those points:
/// x* = (1 - sigma) x + sigma * mean, sigma ~ U[sigma_min, sigma_max].
inline Points3 apply_shape_guidance(const Points3& x0_hat, const Points3& q,
                                    const GuidanceConfig& cfg, SampleNoise& noise,
                                    std::vector<GuidanceEvent>* trace = nullptr, int t = 0) {
  const int n_pts = static_cast<int>(q.rows());
  if (n_pts < cfg.n_neighbors)
    throw std::invalid_argument("apply_shape_guidance: fewer guidance points than neighbors");

  Points3 out = x0_hat;
  std::vector<std::pair<double, int>> dist(n_pts);
  for (int i = 0; i < x0_hat.rows(); ++i) {
    for (int j = 0; j < n_pts; ++j)
      dist[j] = {(q.row(j) - x0_hat.row(i)).norm(), j};
    std::partial_sort(dist.begin(), dist.begin() + cfg.n_neighbors, dist.end());
    double mean_dist = 0.0;
    Eigen::RowVector3d mean_point = Eigen::RowVector3d::Zero();
    for (int c = 0; c < cfg.n_neighbors; ++c) {
      mean_dist += dist[c].first;
      mean_point += q.row(dist[c].second);
    }
    mean_dist /= cfg.n_neighbors;
    mean_point /= cfg.n_neighbors;

    const bool moved = mean_dist > cfg.gamma;
    if (moved) {
      const double sigma = cfg.sigma_min + noise.uniform01() * (cfg.sigma_max - cfg.sigma_min);
      out.row(i) = (1.0 - sigma) * x0_hat.row(i) + sigma * mean_point;
    }
    if (trace != nullptr) trace->push_back({t, i, moved, mean_dist});
  }
  return out;
}

/// One ancestral step t -> t-1 given the prediction of the clean sample. At
/// t = 1 the posterior mean / argmax class is returned without sampling.
inline DiffusionState denoise_step(const DiffusionState& state, const Prediction& pred,
                                   const Schedule& sched, SampleNoise& noise,
                                   const std::string& posterior_variance = "as_printed") {
  const int t = state.t;
  if (t < 1) throw std::invalid_argument("denoise_step: t must be >= 1");
  const int K = static_cast<int>(state.v.cols());

  DiffusionState next;
  next.t = t - 1;

  const GaussianPosterior pos = posterior_positions(state.x, pred.x0_hat, t, sched);
  if (t == 1) {
    next.x = pos.mean;
  } else {
    const double var = posterior_variance == "beta_tilde" ? pos.variance
                                                          : 1.0 - sched.alphaBarX(t);
    const double sd = std::sqrt(var);
    next.x = pos.mean;
    for (Eigen::Index i = 0; i < next.x.rows(); ++i)
      next.x.row(i) += sd * noise.normal3().transpose();
  }

  next.v = Eigen::MatrixXd::Zero(state.v.rows(), K);
  for (Eigen::Index i = 0; i < state.v.rows(); ++i) {
    const Eigen::VectorXd c = posterior_feature_row(state.v.row(i).transpose(),
                                                    pred.v0_hat.row(i).transpose(), t, sched);
    if (t == 1) {
      Eigen::Index arg;
      c.maxCoeff(&arg);
      next.v(i, arg) = 1.0;
    } else {
      const double u = noise.uniform01();
      double acc = 0.0;
      int chosen = K - 1;
      for (int k = 0; k < K; ++k) {
        acc += c[k];
        if (u < acc) {
          chosen = k;
          break;
        }
      }
      next.v(i, chosen) = 1.0;
    }
  }
  return next;
}

template <class S>
struct GenerateResult {
  Molecule molecule;
  std::vector<GuidanceEvent> trace;
};

/// Full shape-conditioned generation: embeds the condition surface, runs the
/// ancestral chain from t = T with optional shape guidance for t >= stop_step,
/// and un-centers the result back into the condition's frame. The caller
/// supplies the condition's surface cloud (typically built once and shared
/// across generations).
template <class S>
GenerateResult<S> generate(const Molecule& condition, const PointCloud& cloud,
                           const ShapeAutoencoder<S>& ae, const Predictor<S>& model,
                           const Schedule& sched, const SampleOptions& opts,
                           SampleNoise& noise, const std::vector<int>& atom_count_pool) {
  if (atom_count_pool.empty()) throw std::invalid_argument("generate: empty atom-count pool");

  const ShapeEmbedding<S> h = encode(ae, cloud);
  const Points3 condition_centered =
      condition.positions().rowwise() - cloud.offset.transpose();

  const int n_atoms = atom_count_pool[std::min<int>(
      static_cast<int>(atom_count_pool.size()) - 1,
      static_cast<int>(noise.uniform01() * atom_count_pool.size()))];

  Points3 guide;
  if (opts.guidance) guide = build_guidance_points(condition_centered, *opts.guidance, noise);

  GenerateResult<S> result;
  DiffusionState state = sample_prior(n_atoms, model.cfg.num_classes, noise, sched.T);
  for (int t = sched.T; t >= 1; --t) {
    state.t = t;
    Prediction pred = predict(model, state.x, state.v, h, t);
    if (!pred.x0_hat.allFinite())
      throw std::runtime_error("generate: non-finite prediction at step " + std::to_string(t));
    if (opts.guidance && t >= opts.guidance->stop_step) {
      pred.x0_hat = apply_shape_guidance(pred.x0_hat, guide, *opts.guidance, noise,
                                         opts.record_trace ? &result.trace : nullptr, t);
    }
    state = denoise_step(state, pred, sched, noise, opts.posterior_variance);
  }

  result.molecule.atoms.resize(n_atoms);
  for (int i = 0; i < n_atoms; ++i) {
    Eigen::Index cls;
    state.v.row(i).maxCoeff(&cls);
    const auto [el, aromatic] = atom_class_from_index(static_cast<int>(cls));
    result.molecule.atoms[i] =
        Atom{el, aromatic, state.x.row(i).transpose() + cloud.offset};
  }
  return result;
}

}  // namespace shapediff

#endif  // SHAPEDIFF_SAMPLING_HPP_
