//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_SHAPE_AUTOENCODER_HPP_
#define SHAPEDIFF_SHAPE_AUTOENCODER_HPP_

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapediff/geometry.hpp"
#include "shapediff/parallel.hpp"
#include "shapediff/params.hpp"
#include "shapediff/vn.hpp"

namespace shapediff {

template <class S>
using ShapeEmbedding = Eigen::Matrix<S, Eigen::Dynamic, 3>;

struct SeConfig {
  int dp = 32;          // shape embedding channels
  int hidden = 128;     // encoder hidden channels
  int enc_layers = 4;
  int knn = 20;
  int mlp_hidden = 128;  // decoder hidden width
  int mlp_layers = 4;
  double slope = 0.2;

  VnDgcnnConfig dgcnn() const {
    return VnDgcnnConfig{enc_layers, hidden, dp, knn, slope};
  }
  int decoder_input_dim() const { return 2 * dp + 1; }
};

template <class S>
struct ShapeAutoencoder {
  SeConfig cfg;
  ParamStore<S> params;
};

template <class S>
ShapeAutoencoder<S> init_shape_autoencoder(const SeConfig& cfg, std::uint64_t seed) {
  ShapeAutoencoder<S> ae;
  ae.cfg = cfg;
  Rng rng = Rng::stream(seed, "se-init");
  init_vn_dgcnn(ae.params, "enc", cfg.dgcnn(), rng);
  init_vn_invariant(ae.params, "dec.vnin", cfg.dp, rng);
  std::vector<int> dims{cfg.decoder_input_dim()};
  for (int i = 0; i < cfg.mlp_layers - 1; ++i) dims.push_back(cfg.mlp_hidden);
  dims.push_back(1);
  init_mlp(ae.params, "dec.mlp", dims, rng);
  return ae;
}

/// Mean-pooled per-point VN features as a d_p x 3 embedding, in-tape.
template <class S>
ad::Var<S> encode_var(Ctx<S>& ctx, const SeConfig& cfg, const PointCloud& cloud) {
  if (!cloud.centered) throw std::invalid_argument("encode requires a centered point cloud");
  ad::Var<S> f = vn_dgcnn(ctx, "enc", cloud.points, cfg.dgcnn());
  return ad::reshape(ad::mean_rows(f), cfg.dp, 3);
}

template <class S>
ShapeEmbedding<S> encode(const ShapeAutoencoder<S>& ae, const PointCloud& cloud) {
  ParamStore<S>& params = const_cast<ParamStore<S>&>(ae.params);
  Ctx<S> ctx(params);
  return encode_var(ctx, ae.cfg, cloud).val();
}

/// Predicted signed distances for a batch of query points, in-tape.
/// Input per query: concat(<z_q, H^s>, |z_q|^2, VN-In(H^s)).
template <class S>
ad::Var<S> decode_var(Ctx<S>& ctx, const SeConfig& cfg, ad::Var<S> h,
                      const Points3& queries) {
  using Mat = typename ad::Tape<S>::Mat;
  const Eigen::Index m = queries.rows();
  ad::Var<S> q = ctx.constant(queries.cast<S>());
  ad::Var<S> dots = ad::matmul(q, h, false, true);  // [m x d_p]
  Mat sq(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) sq(i, 0) = static_cast<S>(queries.row(i).squaredNorm());
  ad::Var<S> norm2 = ctx.constant(std::move(sq));
  ad::Var<S> inv = ad::repeat_rows(vn_invariant(ctx, "dec.vnin", h), m);
  ad::Var<S> in = ad::concat_cols<S>({dots, norm2, inv});
  return mlp(ctx, "dec.mlp", in, cfg.mlp_layers, static_cast<S>(cfg.slope));
}

template <class S>
S decode(const ShapeAutoencoder<S>& ae, const Eigen::Vector3d& query,
         const ShapeEmbedding<S>& h) {
  ParamStore<S>& params = const_cast<ParamStore<S>&>(ae.params);
  Ctx<S> ctx(params);
  ad::Var<S> hv = ctx.constant(h);
  Points3 q(1, 3);
  q.row(0) = query.transpose();
  return decode_var(ctx, ae.cfg, hv, q).val()(0, 0);
}

/// Squared-error reconstruction loss over one cloud's query samples, in-tape.
template <class S>
ad::Var<S> pretrain_loss_var(Ctx<S>& ctx, const SeConfig& cfg, const PointCloud& cloud,
                             const std::vector<QuerySample>& queries) {
  using Mat = typename ad::Tape<S>::Mat;
  const Eigen::Index m = static_cast<Eigen::Index>(queries.size());
  Points3 q(m, 3);
  Mat target(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    q.row(i) = queries[i].point.transpose();
    target(i, 0) = static_cast<S>(queries[i].signed_distance);
  }
  ad::Var<S> h = encode_var(ctx, cfg, cloud);
  ad::Var<S> pred = decode_var(ctx, cfg, h, q);
  ad::Var<S> diff = ad::sub(pred, ctx.constant(std::move(target)));
  return ad::sum_all(ad::cmul(diff, diff));
}

/// Sum of squared errors over the whole batch (forward only).
template <class S>
double pretrain_loss(const ShapeAutoencoder<S>& ae,
                     const std::vector<std::pair<PointCloud, std::vector<QuerySample>>>& batch) {
  if (batch.empty()) throw std::invalid_argument("pretrain_loss: empty batch");
  double total = 0.0;
  for (const auto& [cloud, queries] : batch) {
    ParamStore<S>& params = const_cast<ParamStore<S>&>(ae.params);
    Ctx<S> ctx(params);
    total += static_cast<double>(pretrain_loss_var(ctx, ae.cfg, cloud, queries).val()(0, 0));
  }
  return total;
}

/// Parameter gradients of the batch loss (sum of per-cloud losses scaled by
/// `seed_scale`, typically 1/batch for training).
template <class S>
GradMap<S> pretrain_gradients(ShapeAutoencoder<S>& ae,
                              const std::vector<std::pair<PointCloud, std::vector<QuerySample>>>& batch,
                              S seed_scale, double* loss_out = nullptr, int threads = 0) {
  const int n = static_cast<int>(batch.size());
  std::vector<GradMap<S>> grads(n);
  std::vector<double> losses(n, 0.0);
  parallel_for(n, [&](int i) {
    Ctx<S> ctx(ae.params);
    ad::Var<S> loss = pretrain_loss_var(ctx, ae.cfg, batch[i].first, batch[i].second);
    losses[i] = static_cast<double>(loss.val()(0, 0));
    ctx.backward(loss, seed_scale);
    ctx.accumulate_grads(grads[i]);
  }, threads);

  GradMap<S> out;
  for (int i = 0; i < n; ++i)
    for (auto& [name, g] : grads[i]) {
      auto it = out.find(name);
      if (it == out.end()) out.emplace(name, g);
      else it->second += g;
    }
  if (loss_out != nullptr) {
    double total = 0.0;
    for (double l : losses) total += l;
    *loss_out = total;
  }
  return out;
}

struct SeFitConfig {
  SeConfig model;
  int steps = 2000;
  int batch = 4;
  int n_points = 128;   // surface samples per molecule
  int n_queries = 256;  // query samples per pass
  double lr = 1e-3;
  double beta1 = 0.950;
  double beta2 = 0.999;
  double lr_decay = 0.6;
  double min_lr = 1e-6;
  int patience = 5;
  int eval_interval = 100;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  long step;
  double train_loss;
  double val_loss;
  double lr;
};

template <class S>
struct SeFitResult {
  ShapeAutoencoder<S> model;
  std::vector<TrainLogRow> log;
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
};

/// Pretrains the autoencoder on surface clouds + signed-distance queries.
/// Query points are redrawn for every visit of a molecule; validation queries
/// stay fixed so the plateau detection is stable.
template <class S>
SeFitResult<S> fit_autoencoder(const std::vector<Molecule>& dataset, const SeFitConfig& cfg,
                               std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("fit_autoencoder: empty dataset");

  const int n_val = std::max<int>(1, static_cast<int>(dataset.size()) / 10);
  const int n_train = std::max<int>(1, static_cast<int>(dataset.size()) - n_val);

  std::vector<PointCloud> clouds(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    clouds[i] = build_surface_point_cloud(dataset[i], cfg.n_points,
                                          Rng::stream(seed, "cloud", i).next());

  std::vector<std::pair<PointCloud, std::vector<QuerySample>>> val_batch;
  for (int i = 0; i < n_val; ++i) {
    const std::size_t idx = n_train + i;
    val_batch.emplace_back(clouds[idx],
                           sample_query_points(dataset[idx], cfg.n_queries,
                                               Rng::stream(seed, "valq", idx).next()));
  }

  SeFitResult<S> result;
  result.model = init_shape_autoencoder<S>(cfg.model, seed);
  Adam<S> opt;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;

  auto eval_val = [&] { return pretrain_loss(result.model, val_batch) / val_batch.size(); };
  result.initial_val_loss = eval_val();

  double lr = cfg.lr;
  double best_val = result.initial_val_loss;
  int stale = 0;
  double last_train = 0.0;

  for (long step = 1; step <= cfg.steps; ++step) {
    Rng pick = Rng::stream(seed, "batch", static_cast<std::uint64_t>(step));
    std::vector<std::pair<PointCloud, std::vector<QuerySample>>> batch;
    for (int b = 0; b < cfg.batch; ++b) {
      const int idx = pick.uniform_int(n_train);
      batch.emplace_back(clouds[idx],
                         sample_query_points(dataset[idx], cfg.n_queries,
                                             Rng::stream(seed, "trainq", step, b).next()));
    }
    double loss = 0.0;
    GradMap<S> grads = pretrain_gradients(result.model, batch,
                                          static_cast<S>(1.0 / cfg.batch), &loss);
    last_train = loss / cfg.batch;
    if (!std::isfinite(last_train))
      throw std::runtime_error("fit_autoencoder: loss diverged (non-finite) at step " +
                               std::to_string(step));
    if (lr > 0.0) opt.update(result.model.params, grads, lr);

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      const double val = eval_val();
      result.log.push_back({step, last_train, val, lr});
      if (val < best_val - 1e-12) {
        best_val = val;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        lr = std::max(cfg.min_lr, lr * cfg.lr_decay);
        stale = 0;
      }
    }
  }
  result.final_val_loss = eval_val();
  return result;
}

}  // namespace shapediff

#endif  // SHAPEDIFF_SHAPE_AUTOENCODER_HPP_
