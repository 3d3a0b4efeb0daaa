//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_VN_HPP_
#define SHAPEDIFF_VN_HPP_

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapediff/autodiff.hpp"
#include "shapediff/geometry.hpp"
#include "shapediff/params.hpp"

namespace shapediff {

// Vector-Neuron features are stored flat as [rows x 3C] with component-major
// column blocks: columns [0,C) hold the x components of the C channels,
// [C,2C) the y components, [2C,3C) the z components. A rotation acts on a
// feature by right-multiplying each channel row-vector with R^T, which keeps
// every op here equivariant by construction (they only mix channels).

/// Channel-mixing linear map: per component c, out_c = X_c * W^T.
/// X is [n x 3*C_in], W is [C_out x C_in], result [n x 3*C_out].
template <class S>
ad::Var<S> vn_linear(ad::Var<S> x, ad::Var<S> w) {
  using Mat = typename ad::Tape<S>::Mat;
  const Eigen::Index c_in = x.cols() / 3;
  const Eigen::Index c_out = w.rows();
  Mat v(x.rows(), 3 * c_out);
  for (int c = 0; c < 3; ++c)
    v.middleCols(c * c_out, c_out) = x.val().middleCols(c * c_in, c_in) * w.val().transpose();
  return ad::detail::make<S>(*x.tape, std::move(v), [x, w, c_in, c_out](ad::Tape<S>& t, const Mat& g) {
    const Mat& X = t.val(x.id);
    const Mat& W = t.val(w.id);
    Mat gx(X.rows(), X.cols());
    Mat gw = Mat::Zero(W.rows(), W.cols());
    for (int c = 0; c < 3; ++c) {
      gx.middleCols(c * c_in, c_in) = g.middleCols(c * c_out, c_out) * W;
      gw += g.middleCols(c * c_out, c_out).transpose() * X.middleCols(c * c_in, c_in);
    }
    t.accumulate(x.id, gx);
    t.accumulate(w.id, gw);
  });
}

/// Direction-gated leaky ReLU over channel 3-vectors. For each (row, channel)
/// with feature q and direction d: q if <q,d> >= 0, otherwise
/// q - (1-slope) * (<q,d>/|d|^2) * d; q unchanged when |d| < 1e-12.
template <class S>
ad::Var<S> vn_leaky_relu_pair(ad::Var<S> q, ad::Var<S> d, S slope) {
  using Mat = typename ad::Tape<S>::Mat;
  using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index C = q.cols() / 3;
  const S dsq_floor = S(1e-12) * S(1e-12);

  auto blocks_dot = [C](const Mat& a, const Mat& b) {
    Arr dot = Arr::Zero(a.rows(), C);
    for (int c = 0; c < 3; ++c)
      dot += a.middleCols(c * C, C).array() * b.middleCols(c * C, C).array();
    return dot;
  };

  const Arr dot = blocks_dot(q.val(), d.val());
  const Arr dsq = blocks_dot(d.val(), d.val());
  const Arr active = ((dot < S(0)) && (dsq >= dsq_floor)).template cast<S>();
  const Arr coef = active * (S(1) - slope) * dot / dsq.max(dsq_floor);

  Mat v(q.rows(), q.cols());
  for (int c = 0; c < 3; ++c)
    v.middleCols(c * C, C) = q.val().middleCols(c * C, C).array() -
                             coef * d.val().middleCols(c * C, C).array();

  return ad::detail::make<S>(
      *q.tape, std::move(v), [q, d, slope, C, dsq_floor, blocks_dot](ad::Tape<S>& t, const Mat& g) {
        const Mat& Q = t.val(q.id);
        const Mat& D = t.val(d.id);
        const Arr dot = blocks_dot(Q, D);
        const Arr dsq = blocks_dot(D, D);
        const Arr active = ((dot < S(0)) && (dsq >= dsq_floor)).template cast<S>();
        const Arr inv_dsq = active / dsq.max(dsq_floor);
        const Arr gdot = blocks_dot(g, D);
        const Arr k = (S(1) - slope) * inv_dsq;

        Mat gq(Q.rows(), Q.cols());
        Mat gd(D.rows(), D.cols());
        const Arr coef_gq = k * gdot;
        const Arr t1 = k * gdot;            // multiplies Q_c
        const Arr t2 = k * dot;             // multiplies G_c
        const Arr t3 = S(2) * k * dot * gdot * inv_dsq;  // multiplies D_c
        for (int c = 0; c < 3; ++c) {
          auto Gc = g.middleCols(c * C, C).array();
          auto Qc = Q.middleCols(c * C, C).array();
          auto Dc = D.middleCols(c * C, C).array();
          gq.middleCols(c * C, C) = Gc - coef_gq * Dc;
          gd.middleCols(c * C, C) = -(t1 * Qc + t2 * Gc - t3 * Dc);
        }
        t.accumulate(q.id, gq);
        t.accumulate(d.id, gd);
      });
}

/// Concatenates two VN features along the channel dimension, preserving the
/// component-major layout.
template <class S>
ad::Var<S> vn_concat(ad::Var<S> a, ad::Var<S> b) {
  using Mat = typename ad::Tape<S>::Mat;
  const Eigen::Index ca = a.cols() / 3, cb = b.cols() / 3;
  Mat v(a.rows(), 3 * (ca + cb));
  for (int c = 0; c < 3; ++c) {
    v.middleCols(c * (ca + cb), ca) = a.val().middleCols(c * ca, ca);
    v.middleCols(c * (ca + cb) + ca, cb) = b.val().middleCols(c * cb, cb);
  }
  return ad::detail::make<S>(*a.tape, std::move(v), [a, b, ca, cb](ad::Tape<S>& t, const Mat& g) {
    Mat ga(g.rows(), 3 * ca), gb(g.rows(), 3 * cb);
    for (int c = 0; c < 3; ++c) {
      ga.middleCols(c * ca, ca) = g.middleCols(c * (ca + cb), ca);
      gb.middleCols(c * cb, cb) = g.middleCols(c * (ca + cb) + ca, cb);
    }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

/// Plain MLP with leaky-ReLU between layers (none after the last). Parameter
/// names: <prefix>.l<i>.w ([out x in]) and .b ([1 x out]).
template <class S>
ad::Var<S> mlp(Ctx<S>& ctx, const std::string& prefix, ad::Var<S> x, int n_layers, S slope) {
  for (int i = 0; i < n_layers; ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    x = ad::add_rowvec(ad::matmul(x, ctx.param(base + ".w"), false, true), ctx.param(base + ".b"));
    if (i + 1 < n_layers) x = ad::leaky_relu(x, slope);
  }
  return x;
}

template <class S>
void init_mlp(ParamStore<S>& params, const std::string& prefix, const std::vector<int>& dims,
              Rng& rng) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    params.init_uniform(base + ".w", dims[i + 1], dims[i], dims[i], rng);
    params.init_uniform(base + ".b", 1, dims[i + 1], dims[i], rng);
  }
}

/// Rotation-invariant readout of a shape embedding H [d_p x 3]: channel-wise
/// inner products against the normalized channel mean, then a 1-layer MLP.
/// Falls back to the fixed direction (1,0,0) when the mean row vanishes.
template <class S>
ad::Var<S> vn_invariant(Ctx<S>& ctx, const std::string& prefix, ad::Var<S> h) {
  using Mat = typename ad::Tape<S>::Mat;
  const Eigen::Index dp = h.rows();
  ad::Var<S> hbar = ad::mean_rows(h);  // [1 x 3]
  ad::Var<S> direction;
  if (hbar.val().norm() < S(1e-12)) {
    Mat e1 = Mat::Zero(1, 3);
    e1(0, 0) = S(1);
    direction = ctx.constant(std::move(e1));
  } else {
    ad::Var<S> inv_norm = ad::cwise_recip(ad::cwise_sqrt(ad::rowwise_sqnorm(hbar)));
    direction = ad::scale_by(hbar, inv_norm);
  }
  ad::Var<S> p = ad::matmul(h, direction, false, true);  // [d_p x 1]
  ad::Var<S> row = ad::reshape(p, 1, dp);
  row = ad::add_rowvec(ad::matmul(row, ctx.param(prefix + ".w"), false, true),
                       ctx.param(prefix + ".b"));
  return ad::leaky_relu(row, S(0.2));
}

template <class S>
void init_vn_invariant(ParamStore<S>& params, const std::string& prefix, int dp, Rng& rng) {
  params.init_uniform(prefix + ".w", dp, dp, dp, rng);
  params.init_uniform(prefix + ".b", 1, dp, dp, rng);
}

/// The raw channel-vs-mean inner products (pre-MLP), exposed for tests.
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, 1> vn_invariant_inner(
    const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& h) {
  Eigen::Matrix<S, 1, Eigen::Dynamic> mean = h.colwise().mean();
  Eigen::Matrix<S, 1, Eigen::Dynamic> u;
  if (mean.norm() < S(1e-12)) {
    u = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(1, 3);
    u(0, 0) = S(1);
  } else {
    u = mean / mean.norm();
  }
  return h * u.transpose();
}

struct VnDgcnnConfig {
  int layers = 4;
  int hidden = 128;
  int out_channels = 32;  // embedding channel count d_p
  int k = 20;
  double slope = 0.2;

  std::vector<int> channel_plan() const {
    std::vector<int> plan{1};
    for (int l = 0; l < layers - 1; ++l) plan.push_back(hidden);
    plan.push_back(out_channels);
    return plan;
  }
};

template <class S>
void init_vn_dgcnn(ParamStore<S>& params, const std::string& prefix, const VnDgcnnConfig& cfg,
                   Rng& rng) {
  const std::vector<int> plan = cfg.channel_plan();
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    params.init_uniform(base + ".w", plan[l + 1], 2 * plan[l], 2 * plan[l], rng);
    params.init_uniform(base + ".u", plan[l + 1], 2 * plan[l], 2 * plan[l], rng);
  }
}

/// Edge-convolution stack over a kNN graph built once from the input points.
/// Edge features stack (x_j - x_i) with x_i per channel; neighbor aggregation
/// is the mean. Coincident points are collapsed to one representative before
/// graph construction and share its features, so clouds with duplicated
/// points embed identically. Returns per-point VN features
/// [n x 3*out_channels].
template <class S>
ad::Var<S> vn_dgcnn(Ctx<S>& ctx, const std::string& prefix, const Points3& points,
                    const VnDgcnnConfig& cfg) {
  const int n = static_cast<int>(points.rows());

  std::map<std::array<double, 3>, int> seen;
  std::vector<int> rep(n);          // point -> unique index
  std::vector<int> unique_rows;     // unique index -> source row
  for (int i = 0; i < n; ++i) {
    const std::array<double, 3> key{points(i, 0), points(i, 1), points(i, 2)};
    auto [it, inserted] = seen.emplace(key, static_cast<int>(unique_rows.size()));
    if (inserted) unique_rows.push_back(i);
    rep[i] = it->second;
  }
  const int nu = static_cast<int>(unique_rows.size());
  if (nu <= cfg.k) throw std::invalid_argument("vn_dgcnn: need more points than neighbors");

  Points3 unique_pts(nu, 3);
  for (int u = 0; u < nu; ++u) unique_pts.row(u) = points.row(unique_rows[u]);

  const Eigen::ArrayXXi nbrs = knn_graph(unique_pts, cfg.k);
  std::vector<int> src(static_cast<std::size_t>(nu) * cfg.k), dst(src.size());
  for (int i = 0; i < nu; ++i)
    for (int c = 0; c < cfg.k; ++c) {
      src[i * cfg.k + c] = i;
      dst[i * cfg.k + c] = nbrs(i, c);
    }

  ad::Var<S> f = ctx.constant(unique_pts.cast<S>());
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    ad::Var<S> fi = ad::gather_rows(f, src);
    ad::Var<S> fj = ad::gather_rows(f, dst);
    ad::Var<S> edge = vn_concat(ad::sub(fj, fi), fi);
    ad::Var<S> y = vn_leaky_relu_pair(vn_linear(edge, ctx.param(base + ".w")),
                                      vn_linear(edge, ctx.param(base + ".u")),
                                      static_cast<S>(cfg.slope));
    f = ad::scale(ad::segment_sum(y, cfg.k), S(1) / static_cast<S>(cfg.k));
  }
  return (nu == n) ? f : ad::gather_rows(f, rep);
}

}  // namespace shapediff

#endif  // SHAPEDIFF_VN_HPP_
