//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "shapediff/autodiff.hpp"
#include "shapediff/geometry.hpp"
#include "shapediff/params.hpp"
#include "shapediff/shape_autoencoder.hpp"
#include "shapediff/vn.hpp"

using namespace shapediff;
using Mat = Eigen::MatrixXd;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "mat");
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

/// Checks d(sum of f(x))/dx against central differences for every entry.
void check_grad(Mat x, const std::function<ad::Var<double>(ad::Tape<double>&, ad::Var<double>)>& f,
                double tol = 1e-6) {
  ad::Tape<double> tape;
  ad::Var<double> in = ad::leaf(tape, x);
  ad::Var<double> out = ad::sum_all(f(tape, in));
  tape.backward(out.id);
  const Mat analytic = tape.grad(in.id);

  const double h = 1e-6;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Mat xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      auto eval = [&](const Mat& m) {
        ad::Tape<double> t2;
        return ad::sum_all(f(t2, ad::leaf(t2, m))).val()(0, 0);
      };
      const double fd = (eval(xp) - eval(xm)) / (2 * h);
      CHECK(std::abs(fd - analytic(i, j)) < tol * std::max(1.0, std::abs(fd)));
    }
  }
}

/// Rotates a flat [n x 3C] VN feature: each channel row-vector maps v -> vR^T.
Mat rotate_vn(const Mat& f, const Eigen::Matrix3d& rot) {
  const Eigen::Index C = f.cols() / 3;
  Mat out(f.rows(), f.cols());
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (Eigen::Index c = 0; c < C; ++c) {
      Eigen::Vector3d v{f(r, c), f(r, C + c), f(r, 2 * C + c)};
      const Eigen::Vector3d w = rot * v;
      out(r, c) = w[0];
      out(r, C + c) = w[1];
      out(r, 2 * C + c) = w[2];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("autodiff core ops match finite differences") {
  const Mat x = random_mat(4, 6, 1);
  const Mat w = random_mat(5, 6, 2);

  check_grad(x, [&](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::matmul(in, ad::constant(t, w), false, true);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::leaky_relu(in, 0.2);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::softmax_rows(in);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::softmax_grouped(in, 2);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::cwise_sqrt(ad::add_scalar(ad::cmul(in, in), 0.3));
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::cwise_log(ad::add_scalar(ad::cmul(in, in), 0.7));
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::segment_sum(ad::gather_rows(in, {0, 1, 1, 2, 3, 0}), 3);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::row_kron(ad::slice_cols(in, 0, 2), ad::slice_cols(in, 2, 3));
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::block_inner_sum(in, 3);
  });
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::scale_rows(in, ad::cwise_recip(ad::add_scalar(ad::rowwise_sqnorm(in), 1.0)));
  });
  check_grad(x, [&](ad::Tape<double>& t, ad::Var<double> in) {
    return ad::scale_by(ad::mean_rows(in), ad::sum_all(ad::slice_cols(in, 0, 1)));
  });
}

TEST_CASE("vn_linear: identity, loop oracle, equivariance") {
  ad::Tape<double> tape;
  const Mat x = random_mat(3, 3 * 4, 5);  // 3 rows, 4 channels

  // W = I leaves the feature unchanged.
  ad::Var<double> xv = ad::constant(tape, x);
  ad::Var<double> eye = ad::constant(tape, Mat(Mat::Identity(4, 4)));
  CHECK((vn_linear(xv, eye).val() - x).cwiseAbs().maxCoeff() == 0.0);

  // Naive double loop over channels and components.
  const Mat w = random_mat(6, 4, 7);
  ad::Var<double> y = vn_linear(xv, ad::constant(tape, w));
  for (int r = 0; r < 3; ++r)
    for (int a = 0; a < 6; ++a)
      for (int c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (int b = 0; b < 4; ++b) expect += w(a, b) * x(r, c * 4 + b);
        CHECK(y.val()(r, c * 6 + a) == doctest::Approx(expect).epsilon(1e-14));
      }

  // f(X R^T) = f(X) R^T.
  const Eigen::Matrix3d rot = random_rotation(9);
  ad::Var<double> yr = vn_linear(ad::constant(tape, rotate_vn(x, rot)), ad::constant(tape, w));
  CHECK((yr.val() - rotate_vn(y.val(), rot)).cwiseAbs().maxCoeff() < 1e-12);

  check_grad(x, [&](ad::Tape<double>& t, ad::Var<double> in) {
    return vn_linear(in, ad::constant(t, w));
  });
}

TEST_CASE("vn leaky relu: gating rules and equivariance") {
  // q orthogonal to d passes through unchanged.
  {
    ad::Tape<double> tape;
    Mat q(1, 3), d(1, 3);
    q << 1, 0, 0;  // single channel: layout [x|y|z]
    d << 0, 1, 0;
    ad::Var<double> out = vn_leaky_relu_pair(ad::constant(tape, q), ad::constant(tape, d), 0.2);
    CHECK((out.val() - q).cwiseAbs().maxCoeff() == 0.0);
  }
  // slope = 1 is the identity on q.
  {
    ad::Tape<double> tape;
    const Mat q = random_mat(4, 3 * 2, 11), d = random_mat(4, 3 * 2, 12);
    ad::Var<double> out = vn_leaky_relu_pair(ad::constant(tape, q), ad::constant(tape, d), 1.0);
    CHECK((out.val() - q).cwiseAbs().maxCoeff() < 1e-14);
  }
  // Vanishing direction leaves q unchanged.
  {
    ad::Tape<double> tape;
    const Mat q = random_mat(2, 3, 13);
    const Mat d = Mat::Zero(2, 3);
    ad::Var<double> out = vn_leaky_relu_pair(ad::constant(tape, q), ad::constant(tape, d), 0.2);
    CHECK((out.val() - q).cwiseAbs().maxCoeff() == 0.0);
  }
  // Equivariance over 100 random feature/rotation pairs.
  Rng rng = Rng::stream(15, "rot");
  for (int trial = 0; trial < 100; ++trial) {
    ad::Tape<double> tape;
    const Mat q = random_mat(2, 3 * 3, 100 + trial), d = random_mat(2, 3 * 3, 200 + trial);
    const Eigen::Matrix3d rot = random_rotation(rng);
    ad::Var<double> base = vn_leaky_relu_pair(ad::constant(tape, q), ad::constant(tape, d), 0.2);
    ad::Var<double> rotated = vn_leaky_relu_pair(ad::constant(tape, rotate_vn(q, rot)),
                                                 ad::constant(tape, rotate_vn(d, rot)), 0.2);
    CHECK((rotated.val() - rotate_vn(base.val(), rot)).cwiseAbs().maxCoeff() < 1e-10);
  }
  // Gradients through both branches.
  const Mat x = random_mat(3, 3 * 2, 17);
  check_grad(x, [](ad::Tape<double>& t, ad::Var<double> in) {
    return vn_leaky_relu_pair(in, ad::scale(in, 0.7), 0.2);
  });
}

TEST_CASE("vn_invariant is rotation-invariant with parallel-row inner products") {
  ParamStore<double> params;
  Rng rng = Rng::stream(19, "init");
  init_vn_invariant(params, "inv", 5, rng);

  const Mat h = random_mat(5, 3, 21);
  Ctx<double> ctx(params);
  const Mat base = vn_invariant(ctx, "inv", ctx.constant(h)).val();

  // Identity rotation reproduces the output exactly.
  {
    Ctx<double> c2(params);
    CHECK((vn_invariant(c2, "inv", c2.constant(h)).val() - base).cwiseAbs().maxCoeff() == 0.0);
  }
  Rng rotrng = Rng::stream(23, "rot");
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Matrix3d rot = random_rotation(rotrng);
    Ctx<double> c2(params);
    const Mat out = vn_invariant(c2, "inv", c2.constant(Mat(h * rot.transpose()))).val();
    CHECK((out - base).cwiseAbs().maxCoeff() < 1e-10);
  }

  // All rows equal: the inner products equal the row norm.
  Mat parallel(4, 3);
  for (int i = 0; i < 4; ++i) parallel.row(i) << 0.3, -1.2, 0.5;
  const Eigen::VectorXd inner = vn_invariant_inner<double>(parallel);
  for (int i = 0; i < 4; ++i)
    CHECK(inner[i] == doctest::Approx(parallel.row(0).norm()).epsilon(1e-12));
}

TEST_CASE("vn_dgcnn features are equivariant and permutation-covariant") {
  VnDgcnnConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.out_channels = 4;
  cfg.k = 3;

  ParamStore<double> params;
  Rng rng = Rng::stream(25, "init");
  init_vn_dgcnn(params, "enc", cfg, rng);

  Rng prng = Rng::stream(27, "pts");
  const int n = 12;
  Points3 pts(n, 3);
  for (int i = 0; i < n; ++i) pts.row(i) = prng.normal3().transpose();

  Ctx<double> ctx(params);
  const Mat base = vn_dgcnn(ctx, "enc", pts, cfg).val();

  // Rotation.
  const Eigen::Matrix3d rot = random_rotation(29);
  Ctx<double> c2(params);
  const Mat rotated = vn_dgcnn(c2, "enc", Points3(pts * rot.transpose()), cfg).val();
  CHECK((rotated - rotate_vn(base, rot)).cwiseAbs().maxCoeff() < 1e-8);

  // Permutation.
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i * 5 + 2) % n;
  Points3 permuted(n, 3);
  for (int i = 0; i < n; ++i) permuted.row(perm[i]) = pts.row(i);
  Ctx<double> c3(params);
  const Mat shuffled = vn_dgcnn(c3, "enc", permuted, cfg).val();
  for (int i = 0; i < n; ++i)
    CHECK((shuffled.row(perm[i]) - base.row(i)).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS(vn_dgcnn(ctx, "enc", Points3(pts.topRows(3)), cfg));  // too few points
}
