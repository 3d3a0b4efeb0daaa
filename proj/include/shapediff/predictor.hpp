//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_PREDICTOR_HPP_
#define SHAPEDIFF_PREDICTOR_HPP_

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapediff/autodiff.hpp"
#include "shapediff/geometry.hpp"
#include "shapediff/params.hpp"
#include "shapediff/shape_autoencoder.hpp"
#include "shapediff/vn.hpp"

namespace shapediff {

struct PredictorConfig {
  int dh = 128;       // hidden width
  int layers = 8;     // EQ/INV layer pairs
  int heads = 16;
  int neighbors = 8;  // nearest-neighbor graph size (capped at n-1)
  int dp = 32;        // shape embedding channels, must match the encoder
  int rbf_bins = 16;
  double rbf_max = 10.0;
  int time_dim = 16;  // sinusoidal step encoding width (even)
  int num_classes = kNumAtomClasses;
  double slope = 0.2;

  int head_dim() const { return dh / heads; }
  int edge_dim() const { return 2 * dh + rbf_bins + dp; }
};

template <class S>
struct Predictor {
  PredictorConfig cfg;
  ParamStore<S> params;
};

template <class S>
Predictor<S> init_predictor(const PredictorConfig& cfg, std::uint64_t seed) {
  if (cfg.dh % cfg.heads != 0)
    throw std::invalid_argument("predictor: head count must divide hidden dim");
  Predictor<S> p;
  p.cfg = cfg;
  Rng rng = Rng::stream(seed, "diff-init");
  const int E = cfg.edge_dim();
  const int qk = cfg.heads * cfg.head_dim();

  p.params.init_uniform("emb.w", cfg.dh, cfg.num_classes + cfg.time_dim,
                        cfg.num_classes + cfg.time_dim, rng);
  p.params.init_uniform("emb.b", 1, cfg.dh, cfg.num_classes + cfg.time_dim, rng);
  init_vn_invariant(p.params, "vnin", cfg.dp, rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "l" + std::to_string(l);
    for (const char* gnn : {".inv", ".eq"}) {
      p.params.init_uniform(base + gnn + ".wq", qk, E, E, rng);
      p.params.init_uniform(base + gnn + ".bq", 1, qk, E, rng);
      p.params.init_uniform(base + gnn + ".wk", qk, E, E, rng);
      p.params.init_uniform(base + gnn + ".bk", 1, qk, E, rng);
    }
    p.params.init_uniform(base + ".inv.wv", cfg.dh, E, E, rng);
    p.params.init_uniform(base + ".inv.bv", 1, cfg.dh, E, rng);
    p.params.init_uniform(base + ".eq.wg", cfg.heads, E, E, rng);
    p.params.init_uniform(base + ".eq.bg", 1, cfg.heads, E, rng);
    // VN linear over the stacked feature [x_i; heads of dx; H rows].
    p.params.init_uniform(base + ".vnlin.wx", 1, 1, 1 + cfg.heads + cfg.dp, rng);
    p.params.init_uniform(base + ".vnlin.wd", 1, cfg.heads, 1 + cfg.heads + cfg.dp, rng);
    p.params.init_uniform(base + ".vnlin.wh", 1, cfg.dp, 1 + cfg.heads + cfg.dp, rng);
  }
  init_mlp(p.params, "head", {cfg.dh, cfg.dh, cfg.num_classes}, rng);
  return p;
}

/// Sinusoidal encoding of the diffusion step.
inline Eigen::RowVectorXd time_encoding(int t, int dim) {
  Eigen::RowVectorXd enc(dim);
  const int pairs = dim / 2;
  for (int i = 0; i < pairs; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / pairs);
    enc[2 * i] = std::sin(t * freq);
    enc[2 * i + 1] = std::cos(t * freq);
  }
  return enc;
}

namespace detail {

/// Gaussian radial basis expansion of edge distances, differentiable in the
/// positions feeding `dist`.
template <class S>
ad::Var<S> rbf_expand(Ctx<S>& ctx, ad::Var<S> dist, const PredictorConfig& cfg) {
  using Mat = typename ad::Tape<S>::Mat;
  Mat mu(1, cfg.rbf_bins);
  for (int i = 0; i < cfg.rbf_bins; ++i)
    mu(0, i) = static_cast<S>(cfg.rbf_max * i / (cfg.rbf_bins - 1));
  const S sigma = static_cast<S>(cfg.rbf_max / (cfg.rbf_bins - 1));
  const S gamma = S(1) / (S(2) * sigma * sigma);
  ad::Var<S> ones = ctx.constant(Mat::Ones(1, cfg.rbf_bins));
  ad::Var<S> rep = ad::matmul(dist, ones);                    // [n_e x bins]
  ad::Var<S> centered = ad::add_rowvec(rep, ctx.constant(Mat(-mu)));
  return ad::cwise_exp(ad::scale(ad::cmul(centered, centered), -gamma));
}

/// Scaled per-head dot products between query and key blocks: [n_e x heads].
template <class S>
ad::Var<S> attention_logits(ad::Var<S> q, ad::Var<S> k, int heads, int head_dim) {
  ad::Var<S> prod = ad::cmul(q, k);
  return ad::scale(ad::block_inner_sum(prod, heads),
                   S(1) / std::sqrt(static_cast<S>(head_dim)));
}

}  // namespace detail

template <class S>
struct PredictOut {
  ad::Var<S> x0;      // [n x 3]
  ad::Var<S> v0;      // [n x K], rows softmax-normalized
};

/// Full denoiser forward pass on the tape. Positions evolve through the
/// equivariant layers (the neighbor graph is rebuilt per layer from current
/// positions); features update invariantly and share the edge conditioning.
template <class S>
PredictOut<S> predict_var(Ctx<S>& ctx, const PredictorConfig& cfg,
                          const Eigen::Matrix<S, Eigen::Dynamic, 3>& x_t,
                          const Eigen::MatrixXd& v_t,
                          const ShapeEmbedding<S>& h_shape, int t) {
  using Mat = typename ad::Tape<S>::Mat;
  const int n = static_cast<int>(x_t.rows());
  if (n < 1) throw std::invalid_argument("predict: need at least one atom");
  if (!x_t.allFinite() || !v_t.allFinite())
    throw std::invalid_argument("predict: non-finite input");

  ad::Var<S> h_emb = ctx.constant(Mat(h_shape));
  ad::Var<S> hs_inv = vn_invariant(ctx, "vnin", h_emb);  // [1 x dp]

  Mat h0(n, cfg.num_classes + cfg.time_dim);
  const Eigen::RowVectorXd tenc = time_encoding(t, cfg.time_dim);
  for (int i = 0; i < n; ++i) {
    h0.block(i, 0, 1, cfg.num_classes) = v_t.row(i).cast<S>();
    h0.block(i, cfg.num_classes, 1, cfg.time_dim) = tenc.cast<S>();
  }
  ad::Var<S> h = ad::add_rowvec(ad::matmul(ctx.constant(std::move(h0)), ctx.param("emb.w"),
                                           false, true),
                                ctx.param("emb.b"));
  ad::Var<S> x = ctx.constant(Mat(x_t));

  const int k_eff = std::min(cfg.neighbors, n - 1);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "l" + std::to_string(l);

    ad::Var<S> dsum;  // [n x heads*3] neighborhood displacement, zero when no edges
    if (k_eff >= 1) {
      Points3 pos = x.val().template cast<double>();
      const Eigen::ArrayXXi nbrs = knn_graph(pos, k_eff);
      std::vector<int> src(static_cast<std::size_t>(n) * k_eff), dst(src.size());
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < k_eff; ++c) {
          src[i * k_eff + c] = i;
          dst[i * k_eff + c] = nbrs(i, c);
        }
      const Eigen::Index n_e = static_cast<Eigen::Index>(src.size());

      ad::Var<S> xi = ad::gather_rows(x, src);
      ad::Var<S> xj = ad::gather_rows(x, dst);
      ad::Var<S> diff = ad::sub(xi, xj);
      ad::Var<S> dist = ad::cwise_sqrt(ad::rowwise_sqnorm(diff));
      ad::Var<S> rbf = detail::rbf_expand(ctx, dist, cfg);
      ad::Var<S> hs_rep = ad::repeat_rows(hs_inv, n_e);

      // Feature update first; its output conditions the position update.
      {
        ad::Var<S> hi = ad::gather_rows(h, src);
        ad::Var<S> hj = ad::gather_rows(h, dst);
        ad::Var<S> e = ad::concat_cols<S>({hi, hj, rbf, hs_rep});
        ad::Var<S> q = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".inv.wq"), false, true),
                                      ctx.param(base + ".inv.bq"));
        ad::Var<S> k = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".inv.wk"), false, true),
                                      ctx.param(base + ".inv.bk"));
        ad::Var<S> att = ad::softmax_grouped(
            detail::attention_logits(q, k, cfg.heads, cfg.head_dim()), k_eff);
        ad::Var<S> v = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".inv.wv"), false, true),
                                      ctx.param(base + ".inv.bv"));
        ad::Var<S> agg;  // mean over heads of attention-weighted value sums
        for (int m = 0; m < cfg.heads; ++m) {
          ad::Var<S> per_head =
              ad::segment_sum(ad::scale_rows(v, ad::slice_cols(att, m, 1)), k_eff);
          agg = (m == 0) ? per_head : ad::add(agg, per_head);
        }
        h = ad::add(h, ad::scale(agg, S(1) / static_cast<S>(cfg.heads)));
      }

      // Position update from gated displacement vectors.
      {
        ad::Var<S> hi = ad::gather_rows(h, src);
        ad::Var<S> hj = ad::gather_rows(h, dst);
        ad::Var<S> e = ad::concat_cols<S>({hi, hj, rbf, hs_rep});
        ad::Var<S> q = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".eq.wq"), false, true),
                                      ctx.param(base + ".eq.bq"));
        ad::Var<S> k = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".eq.wk"), false, true),
                                      ctx.param(base + ".eq.bk"));
        ad::Var<S> att = ad::softmax_grouped(
            detail::attention_logits(q, k, cfg.heads, cfg.head_dim()), k_eff);
        ad::Var<S> gate = ad::add_rowvec(ad::matmul(e, ctx.param(base + ".eq.wg"), false, true),
                                         ctx.param(base + ".eq.bg"));
        ad::Var<S> w = ad::cmul(att, gate);
        dsum = ad::segment_sum(ad::row_kron(w, diff), k_eff);  // [n x heads*3]
      }
    } else {
      // Single atom: no neighbor messages, only the VN-linear term acts.
      dsum = ctx.constant(Mat::Zero(n, 3 * cfg.heads));
    }

    // x^{l+1} = x^l + Mean(dx) + VN-Lin([x^l; dx heads; H]).
    ad::Var<S> vnlin = ad::scale_by(x, ctx.param(base + ".vnlin.wx"));
    for (int m = 0; m < cfg.heads; ++m) {
      ad::Var<S> wd_m = ad::slice_cols(ctx.param(base + ".vnlin.wd"), m, 1);
      vnlin = ad::add(vnlin, ad::scale_by(ad::slice_cols(dsum, 3 * m, 3), wd_m));
    }
    ad::Var<S> h_term = ad::matmul(ctx.param(base + ".vnlin.wh"), h_emb);  // [1 x 3]
    vnlin = ad::add_rowvec(vnlin, h_term);

    x = ad::add(ad::add(x, ad::block_mean_cols(dsum, cfg.heads)), vnlin);
  }

  PredictOut<S> out;
  out.x0 = x;
  out.v0 = ad::softmax_rows(mlp(ctx, "head", h, 2, static_cast<S>(cfg.slope)));
  return out;
}

/// Data-level prediction for the samplers.
struct Prediction {
  Points3 x0_hat;
  Eigen::MatrixXd v0_hat;
};

template <class S>
Prediction predict(const Predictor<S>& model, const Points3& x_t, const Eigen::MatrixXd& v_t,
                   const ShapeEmbedding<S>& h_shape, int t) {
  ParamStore<S>& params = const_cast<ParamStore<S>&>(model.params);
  Ctx<S> ctx(params);
  PredictOut<S> out = predict_var(ctx, model.cfg,
                                  Eigen::Matrix<S, Eigen::Dynamic, 3>(x_t.cast<S>()), v_t,
                                  h_shape, t);
  Prediction pred;
  pred.x0_hat = out.x0.val().template cast<double>();
  pred.v0_hat = out.v0.val().template cast<double>();
  return pred;
}

}  // namespace shapediff

#endif  // SHAPEDIFF_PREDICTOR_HPP_
