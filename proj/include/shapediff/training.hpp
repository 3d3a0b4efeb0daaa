//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_TRAINING_HPP_
#define SHAPEDIFF_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapediff/forward_process.hpp"
#include "shapediff/parallel.hpp"
#include "shapediff/predictor.hpp"
#include "shapediff/schedule.hpp"
#include "shapediff/shape_autoencoder.hpp"

namespace shapediff {

/// Clipped signal-to-noise weight: min(abar_t/(1-abar_t), delta).
inline double snr_weight(int t, const Schedule& sched, double delta) {
  const double abar = sched.alphaBarX(t);
  if (abar >= 1.0) return delta;
  return std::min(abar / (1.0 - abar), delta);
}

/// w_t * sum_a |x0_hat - x0|^2.
inline double position_loss(const Points3& x0_hat, const Points3& x0, int t,
                            const Schedule& sched, double delta) {
  return snr_weight(t, sched, delta) * (x0_hat - x0).squaredNorm();
}

/// Sum over atoms of KL(c(v_t, v0) || c(v_t, v0_hat)), both posterior rows
/// computed with the same closed form; the predicted posterior is clamped at
/// 1e-30 before the log.
inline double feature_kl_loss(const Eigen::MatrixXd& v0_hat, const Eigen::MatrixXd& v0,
                              const Eigen::MatrixXd& v_t, int t, const Schedule& sched) {
  const Eigen::MatrixXd c_true = posterior_features(v_t, v0, t, sched).probs;
  const Eigen::MatrixXd c_pred = posterior_features(v_t, v0_hat, t, sched).probs;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < c_true.rows(); ++i) {
    for (Eigen::Index k = 0; k < c_true.cols(); ++k) {
      const double p = c_true(i, k);
      if (p <= 0.0) continue;
      kl += p * (std::log(p) - std::log(std::max(c_pred(i, k), 1e-30)));
    }
  }
  return kl;
}

/// One cached training example: positions centered on the surface-cloud mean,
/// one-hot classes, and the frozen shape embedding.
template <class S>
struct DiffusionSample {
  Points3 x0;
  Eigen::MatrixXd v0;
  ShapeEmbedding<S> h;
};

struct DiffTrainConfig {
  PredictorConfig model;
  int T = 1000;
  double delta = 10.0;
  double xi = 100.0;
  std::string weight_scheme = "snr";  // "snr" or "uniform"
  double lr = 1e-3;
  double beta1 = 0.950;
  double beta2 = 0.999;
  double lr_decay = 0.6;
  double min_lr = 1e-5;
  int patience = 10;
  int batch = 4;
  long steps = 2000;
  int eval_interval = 100;
  int n_points = 128;  // surface cloud size used to embed each molecule
};

template <class S>
struct DiffusionBatchItem {
  const DiffusionSample<S>* sample;
  int t;
  Points3 x_t;
  Eigen::MatrixXd v_t;
};

/// Builds the noisy view of one sample at step t with the given stream.
template <class S>
DiffusionBatchItem<S> make_batch_item(const DiffusionSample<S>& sample, const Schedule& sched,
                                      int t, Rng& rng) {
  DiffusionBatchItem<S> item;
  item.sample = &sample;
  item.t = t;
  item.x_t = noise_positions(sample.x0, t, sched, rng).x_t;
  item.v_t = noise_features(sample.v0, t, sched, rng);
  return item;
}

/// In-tape loss of one noisy view: w_t |x0_hat - x0|^2 + xi * KL.
template <class S>
ad::Var<S> sample_loss_var(Ctx<S>& ctx, const DiffTrainConfig& cfg, const Schedule& sched,
                           const DiffusionBatchItem<S>& item) {
  using Mat = typename ad::Tape<S>::Mat;
  const DiffusionSample<S>& s = *item.sample;
  const int t = item.t;
  const int K = static_cast<int>(s.v0.cols());

  PredictOut<S> out = predict_var(ctx, cfg.model,
                                  Eigen::Matrix<S, Eigen::Dynamic, 3>(item.x_t.template cast<S>()),
                                  item.v_t, s.h, t);

  const double w = cfg.weight_scheme == "uniform" ? 1.0 : snr_weight(t, sched, cfg.delta);
  ad::Var<S> diff = ad::sub(out.x0, ctx.constant(Mat(s.x0.template cast<S>())));
  ad::Var<S> pos = ad::scale(ad::sum_all(ad::cmul(diff, diff)), static_cast<S>(w));

  // KL target from the exact posterior of the sampled one-hot v_t.
  const Eigen::MatrixXd c_true = posterior_features(item.v_t, s.v0, t, sched).probs;
  double entropy_part = 0.0;
  for (Eigen::Index i = 0; i < c_true.rows(); ++i)
    for (int k = 0; k < K; ++k)
      if (c_true(i, k) > 0.0) entropy_part += c_true(i, k) * std::log(c_true(i, k));

  const double alpha_t = sched.alphaV(t);
  const double abar_prev = sched.alphaBarV(t - 1);
  Eigen::MatrixXd left = alpha_t * item.v_t.array() + (1.0 - alpha_t) / K;
  ad::Var<S> right = ad::add_scalar(ad::scale(out.v0, static_cast<S>(abar_prev)),
                                    static_cast<S>((1.0 - abar_prev) / K));
  ad::Var<S> c_tilde = ad::cmul(ctx.constant(Mat(left.cast<S>())), right);
  ad::Var<S> sums = ad::matmul(c_tilde, ctx.constant(Mat(Mat::Ones(K, 1))));
  ad::Var<S> c_pred = ad::scale_rows(c_tilde, ad::cwise_recip(sums));
  ad::Var<S> log_pred = ad::cwise_log(ad::clamp_min(c_pred, S(1e-30)));
  ad::Var<S> cross = ad::sum_all(ad::cmul(ctx.constant(Mat(c_true.cast<S>())), log_pred));
  ad::Var<S> kl = ad::add_scalar(ad::scale(cross, S(-1)), static_cast<S>(entropy_part));

  return ad::add(pos, ad::scale(kl, static_cast<S>(cfg.xi)));
}

/// Mean over the batch of per-sample losses; t is drawn uniformly from
/// {1..T} per sample, deterministically from `seed`.
template <class S>
double total_loss(const std::vector<DiffusionSample<S>>& batch, Predictor<S>& model,
                  const Schedule& sched, const DiffTrainConfig& cfg, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng = Rng::stream(seed, "loss", b);
    const int t = 1 + rng.uniform_int(cfg.T);
    DiffusionBatchItem<S> item = make_batch_item(batch[b], sched, t, rng);
    Ctx<S> ctx(model.params);
    total += static_cast<double>(sample_loss_var(ctx, cfg, sched, item).val()(0, 0));
  }
  return total / static_cast<double>(batch.size());
}

/// Gradients of the batch-mean loss; per-sample work runs in parallel with a
/// fixed accumulation order.
template <class S>
GradMap<S> batch_gradients(Predictor<S>& model, const DiffTrainConfig& cfg,
                           const Schedule& sched,
                           const std::vector<DiffusionBatchItem<S>>& items,
                           double* loss_out = nullptr, int threads = 0) {
  const int n = static_cast<int>(items.size());
  std::vector<GradMap<S>> grads(n);
  std::vector<double> losses(n, 0.0);
  parallel_for(n, [&](int i) {
    Ctx<S> ctx(model.params);
    ad::Var<S> loss = sample_loss_var(ctx, cfg, sched, items[i]);
    losses[i] = static_cast<double>(loss.val()(0, 0));
    ctx.backward(loss, static_cast<S>(1.0 / n));
    ctx.accumulate_grads(grads[i]);
  }, threads);

  GradMap<S> out;
  for (int i = 0; i < n; ++i)
    for (auto& [name, g] : grads[i]) {
      auto it = out.find(name);
      if (it == out.end()) out.emplace(name, g);
      else it->second += g;
    }
  for (const auto& [name, g] : out) {
    if (!g.allFinite())
      throw std::runtime_error("non-finite gradient in parameter " + name);
  }
  if (loss_out != nullptr) {
    double total = 0.0;
    for (double l : losses) total += l;
    *loss_out = total / n;
  }
  return out;
}

/// Mutable optimization state, checkpointable for bitwise resume.
template <class S>
struct DiffTrainState {
  Predictor<S> model;
  Adam<S> opt;
  long step = 0;
  double lr = 0.0;
  double initial_val_loss = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::uint64_t seed = 0;
  std::vector<int> atom_counts;  // empirical atom-count pool for generation
  std::vector<TrainLogRow> log;
};

/// Precomputes frozen shape embeddings and centered positions for a dataset.
template <class S>
std::vector<DiffusionSample<S>> prepare_diffusion_samples(
    const std::vector<Molecule>& dataset, const ShapeAutoencoder<S>& ae, int n_points,
    std::uint64_t seed, int threads = 0) {
  std::vector<DiffusionSample<S>> samples(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const PointCloud cloud =
        build_surface_point_cloud(dataset[i], n_points, Rng::stream(seed, "cloud", i).next());
    samples[i].x0 = dataset[i].positions().rowwise() - cloud.offset.transpose();
    samples[i].v0 = dataset[i].features();
    samples[i].h = encode(ae, cloud);
  }, threads);
  return samples;
}

template <class S>
DiffTrainState<S> init_diffusion_training(const DiffTrainConfig& cfg, std::uint64_t seed) {
  DiffTrainState<S> st;
  st.model = init_predictor<S>(cfg.model, seed);
  st.opt.beta1 = cfg.beta1;
  st.opt.beta2 = cfg.beta2;
  st.lr = cfg.lr;
  st.seed = seed;
  return st;
}

/// Runs training steps [state.step+1 .. cfg.steps]. Every draw is keyed on
/// (seed, step), so resuming from a checkpoint continues bit-for-bit.
template <class S>
void train_diffusion_steps(DiffTrainState<S>& st, const DiffTrainConfig& cfg,
                           const Schedule& sched,
                           const std::vector<DiffusionSample<S>>& train,
                           const std::vector<DiffusionSample<S>>& val, int threads = 0) {
  const int n_train = static_cast<int>(train.size());
  if (n_train == 0) throw std::invalid_argument("train_diffusion: empty dataset");

  auto eval_val = [&] {
    if (val.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      Rng rng = Rng::stream(st.seed, "valnoise", i);
      const int t = 1 + rng.uniform_int(cfg.T);
      DiffusionBatchItem<S> item = make_batch_item(val[i], sched, t, rng);
      Ctx<S> ctx(st.model.params);
      total += static_cast<double>(sample_loss_var(ctx, cfg, sched, item).val()(0, 0));
    }
    return total / static_cast<double>(val.size());
  };

  if (st.step == 0 && !val.empty()) {
    st.initial_val_loss = eval_val();
    st.best_val = st.initial_val_loss;
  }

  while (st.step < cfg.steps) {
    const long step = ++st.step;
    Rng pick = Rng::stream(st.seed, "batch", static_cast<std::uint64_t>(step));
    std::vector<DiffusionBatchItem<S>> items;
    items.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      const int idx = pick.uniform_int(n_train);
      Rng rng = Rng::stream(st.seed, "noise", static_cast<std::uint64_t>(step), b);
      const int t = 1 + rng.uniform_int(cfg.T);
      items.push_back(make_batch_item(train[idx], sched, t, rng));
    }

    double train_loss = 0.0;
    GradMap<S> grads = batch_gradients(st.model, cfg, sched, items, &train_loss, threads);
    if (!std::isfinite(train_loss))
      throw std::runtime_error("train_diffusion: loss diverged at step " + std::to_string(step));
    if (st.lr > 0.0) st.opt.update(st.model.params, grads, st.lr);

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      const double v = eval_val();
      st.log.push_back({step, train_loss, v, st.lr});
      if (v < st.best_val - 1e-12) {
        st.best_val = v;
        st.stale = 0;
      } else if (++st.stale >= cfg.patience) {
        st.lr = std::max(cfg.min_lr, st.lr * cfg.lr_decay);
        st.stale = 0;
      }
    }
  }
}

/// End-to-end: embeds the dataset with the frozen autoencoder, holds out a
/// validation slice, trains, and records the atom-count pool for sampling.
template <class S>
DiffTrainState<S> train_diffusion(const std::vector<Molecule>& dataset,
                                  const ShapeAutoencoder<S>& ae, const DiffTrainConfig& cfg,
                                  std::uint64_t seed, int threads = 0) {
  if (dataset.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
  if (ae.cfg.dp != cfg.model.dp)
    throw std::invalid_argument("train_diffusion: embedding width mismatch");

  const Schedule sched = Schedule::make(cfg.T);
  std::vector<DiffusionSample<S>> samples =
      prepare_diffusion_samples(dataset, ae, cfg.n_points, seed, threads);

  const int n_val = std::max<int>(1, static_cast<int>(samples.size()) / 10);
  const int n_train = std::max<int>(1, static_cast<int>(samples.size()) - n_val);
  std::vector<DiffusionSample<S>> train(samples.begin(), samples.begin() + n_train);
  std::vector<DiffusionSample<S>> val(samples.begin() + n_train, samples.end());

  DiffTrainState<S> st = init_diffusion_training<S>(cfg, seed);
  for (const Molecule& m : dataset) st.atom_counts.push_back(m.size());
  train_diffusion_steps(st, cfg, sched, train, val, threads);
  return st;
}

}  // namespace shapediff

#endif  // SHAPEDIFF_TRAINING_HPP_
