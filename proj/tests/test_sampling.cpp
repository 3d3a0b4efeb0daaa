//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>

#include "shapediff/dataset.hpp"
#include "shapediff/metrics.hpp"
#include "shapediff/sampling.hpp"

using namespace shapediff;

namespace {

class RotatedNoise : public SampleNoise {
 public:
  RotatedNoise(Rng rng, Eigen::Matrix3d rot) : SampleNoise(rng), rot_(std::move(rot)) {}
  Eigen::Vector3d normal3() override { return rot_ * SampleNoise::normal3(); }

 private:
  Eigen::Matrix3d rot_;
};

SeConfig tiny_se() { return SeConfig{6, 12, 3, 4, 12, 3, 0.2}; }

PredictorConfig tiny_predictor() {
  PredictorConfig cfg;
  cfg.dh = 12;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.neighbors = 3;
  cfg.dp = 6;
  cfg.rbf_bins = 6;
  cfg.time_dim = 6;
  return cfg;
}

}  // namespace

TEST_CASE("prior sample moments and determinism") {
  const int n = 400, K = kNumAtomClasses;
  SampleNoise noise(Rng::stream(1, "prior"));
  // Pool many draws for the moment checks.
  double sum = 0.0, sumsq = 0.0;
  Eigen::VectorXd class_counts = Eigen::VectorXd::Zero(K);
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const DiffusionState st = sample_prior(n, K, noise, 1000);
    sum += st.x.sum();
    sumsq += st.x.squaredNorm();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < K; ++k) class_counts[k] += st.v(i, k);
  }
  const double N = 3.0 * n * reps;
  CHECK(std::abs(sum / N) < 4.0 / std::sqrt(N));
  CHECK(std::abs(sumsq / N - 1.0) < 4.0 * std::sqrt(2.0 / N));
  const double per_class = static_cast<double>(n) * reps / K;
  const double sigma = std::sqrt(n * reps * (1.0 / K) * (1.0 - 1.0 / K));
  for (int k = 0; k < K; ++k) CHECK(std::abs(class_counts[k] - per_class) < 4.0 * sigma);

  SampleNoise a(Rng::stream(2, "p")), b(Rng::stream(2, "p"));
  const DiffusionState s1 = sample_prior(5, K, a, 1000);
  const DiffusionState s2 = sample_prior(5, K, b, 1000);
  CHECK((s1.x - s2.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s1.v - s2.v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("guidance points: count, variance, and degenerate phi") {
  GuidanceConfig cfg;
  Points3 condition(1, 3);
  condition << 0, 0, 0;

  SampleNoise noise(Rng::stream(3, "g"));
  GuidanceConfig many = cfg;
  many.points_per_atom = 10000;
  const Points3 q = build_guidance_points(condition, many, noise);
  REQUIRE(q.rows() == 10000);
  for (int c = 0; c < 3; ++c) {
    const double var = q.col(c).squaredNorm() / q.rows();
    CHECK(std::abs(var - cfg.phi) < 4.0 * cfg.phi * std::sqrt(2.0 / q.rows()));
  }

  Points3 two(2, 3);
  two << 0, 0, 0, 3, 0, 0;
  const Points3 q2 = build_guidance_points(two, cfg, noise);
  CHECK(q2.rows() == 2 * cfg.points_per_atom);

  GuidanceConfig degenerate = cfg;
  degenerate.phi = 0.0;
  const Points3 q3 = build_guidance_points(two, degenerate, noise);
  for (int i = 0; i < q3.rows(); ++i)
    CHECK((q3.row(i) - two.row(i / cfg.points_per_atom)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shape guidance: threshold gate, convex pull, brute-force oracle") {
  GuidanceConfig cfg;
  cfg.n_neighbors = 3;

  SUBCASE("atoms within gamma stay put") {
    Points3 q(5, 3);
    q << 0.01, 0, 0, -0.01, 0, 0, 0, 0.01, 0, 0, -0.01, 0, 0, 0, 0.01;
    Points3 x(1, 3);
    x << 0.0, 0.0, 0.0;
    SampleNoise noise(Rng::stream(4, "s"));
    std::vector<GuidanceEvent> trace;
    const Points3 out = apply_shape_guidance(x, q, cfg, noise, &trace, 500);
    CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(trace[0].moved);
  }

  SUBCASE("degenerate point set gives the exact convex combination") {
    GuidanceConfig c2 = cfg;
    c2.sigma_min = 0.5;
    c2.sigma_max = 0.5;  // pin sigma
    Points3 q(3, 3);
    q.setZero();  // n copies of the origin
    Points3 x(1, 3);
    x << 5, 0, 0;
    SampleNoise noise(Rng::stream(5, "s"));
    const Points3 out = apply_shape_guidance(x, q, c2, noise);
    CHECK((out.row(0) - Eigen::RowVector3d(2.5, 0, 0)).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("matches a brute-force n-NN mean") {
    Rng rng = Rng::stream(6, "q");
    Points3 q(40, 3);
    for (int i = 0; i < 40; ++i) q.row(i) = rng.normal3().transpose();
    Points3 x(4, 3);
    for (int i = 0; i < 4; ++i) x.row(i) = (2.0 * rng.normal3()).transpose();

    GuidanceConfig c2 = cfg;
    c2.sigma_min = 0.3;
    c2.sigma_max = 0.3;
    SampleNoise noise(Rng::stream(7, "s"));
    const Points3 out = apply_shape_guidance(x, q, c2, noise);
    for (int i = 0; i < 4; ++i) {
      std::vector<std::pair<double, int>> d;
      for (int j = 0; j < 40; ++j) d.emplace_back((q.row(j) - x.row(i)).norm(), j);
      std::sort(d.begin(), d.end());
      double mean_dist = 0.0;
      Eigen::RowVector3d mean_pt = Eigen::RowVector3d::Zero();
      for (int c = 0; c < 3; ++c) {
        mean_dist += d[c].first;
        mean_pt += q.row(d[c].second);
      }
      mean_dist /= 3;
      mean_pt /= 3;
      const Eigen::RowVector3d expect =
          mean_dist > c2.gamma ? Eigen::RowVector3d(0.7 * x.row(i) + 0.3 * mean_pt)
                               : Eigen::RowVector3d(x.row(i));
      CHECK((out.row(i) - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("guided atoms move strictly closer to the point set") {
    Rng rng = Rng::stream(8, "q");
    Points3 q(30, 3);
    for (int i = 0; i < 30; ++i) q.row(i) = (0.5 * rng.normal3()).transpose();
    Points3 x(1, 3);
    x << 4.0, 3.0, -2.0;
    SampleNoise noise(Rng::stream(9, "s"));
    const Points3 out = apply_shape_guidance(x, q, cfg, noise);
    auto mean_nn = [&](const Eigen::RowVector3d& p) {
      std::vector<double> d;
      for (int j = 0; j < 30; ++j) d.push_back((q.row(j) - p).norm());
      std::sort(d.begin(), d.end());
      return (d[0] + d[1] + d[2]) / 3.0;
    };
    CHECK(mean_nn(out.row(0)) < mean_nn(x.row(0)));
  }
}

TEST_CASE("denoise step: substitution identity, printed variance, final step") {
  const Schedule sched = Schedule::make(1000);
  const int K = kNumAtomClasses;
  Rng rng = Rng::stream(10, "d");

  DiffusionState state;
  state.t = 400;
  state.x.resize(2, 3);
  state.x << 0.3, -0.2, 0.9, 1.1, 0.0, -0.4;
  state.v = Eigen::MatrixXd::Zero(2, K);
  state.v(0, 2) = 1.0;
  state.v(1, 7) = 1.0;

  Prediction pred;
  pred.x0_hat.resize(2, 3);
  pred.x0_hat << 0.1, 0.1, 0.2, -0.3, 0.4, 0.0;
  pred.v0_hat = Eigen::MatrixXd::Constant(2, K, 1.0 / K);

  // The sampled mean follows the ground-truth posterior with x0_hat in place
  // of x0, and the printed variance is (1 - abar_t) rather than beta_tilde.
  const GaussianPosterior post = posterior_positions(state.x, pred.x0_hat, 400, sched);
  const int reps = 20000;
  Points3 acc = Points3::Zero(2, 3);
  double dev_sq = 0.0;
  SampleNoise noise(Rng::stream(11, "n"));
  for (int r = 0; r < reps; ++r) {
    const DiffusionState next = denoise_step(state, pred, sched, noise);
    CHECK(next.t == 399);
    acc += next.x;
    dev_sq += (next.x - post.mean).squaredNorm();
  }
  const double printed_var = 1.0 - sched.alphaBarX(400);
  CHECK(printed_var > post.variance);  // the two variance conventions differ
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(acc(i, c) / reps - post.mean(i, c)) <
            4.0 * std::sqrt(printed_var / reps));
  const double est_var = dev_sq / (6.0 * reps);
  CHECK(std::abs(est_var - printed_var) < 4.0 * printed_var * std::sqrt(2.0 / (6.0 * reps)));

  // beta_tilde mode shrinks the step noise to the ground-truth posterior.
  double dev_sq_bt = 0.0;
  for (int r = 0; r < reps; ++r) {
    const DiffusionState next = denoise_step(state, pred, sched, noise, "beta_tilde");
    dev_sq_bt += (next.x - post.mean).squaredNorm();
  }
  const double est_var_bt = dev_sq_bt / (6.0 * reps);
  CHECK(std::abs(est_var_bt - post.variance) <
        4.0 * post.variance * std::sqrt(2.0 / (6.0 * reps)));

  // t = 1 finalization: posterior mean, argmax class, no sampling.
  DiffusionState last = state;
  last.t = 1;
  Prediction final_pred = pred;
  final_pred.v0_hat.setZero();
  final_pred.v0_hat(0, 5) = 1.0;
  final_pred.v0_hat(1, 9) = 1.0;
  const DiffusionState done = denoise_step(last, final_pred, sched, noise);
  CHECK((done.x - final_pred.x0_hat).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(done.v(0, 5) == 1.0);
  CHECK(done.v(1, 9) == 1.0);
}

TEST_CASE("generation: determinism, guidance gate, equivariance") {
  const Schedule sched = Schedule::make(50);  // short chain keeps this fast
  ShapeAutoencoder<double> ae = init_shape_autoencoder<double>(tiny_se(), 20);
  Predictor<double> model = init_predictor<double>(tiny_predictor(), 21);
  const Molecule condition = generate_toy_dataset(1, 22)[0];
  const PointCloud cloud = build_surface_point_cloud(condition, 24, 7);
  const std::vector<int> pool{4, 5, 6};

  SampleOptions opts;
  opts.guidance = GuidanceConfig{};
  opts.guidance->stop_step = 20;
  opts.record_trace = true;

  SUBCASE("same seed reproduces the molecule exactly") {
    SampleNoise n1(Rng::stream(23, "gen")), n2(Rng::stream(23, "gen"));
    const auto r1 = generate(condition, cloud, ae, model, sched, opts, n1, pool);
    const auto r2 = generate(condition, cloud, ae, model, sched, opts, n2, pool);
    REQUIRE(r1.molecule.size() == r2.molecule.size());
    for (int i = 0; i < r1.molecule.size(); ++i) {
      CHECK((r1.molecule.atoms[i].pos - r2.molecule.atoms[i].pos).norm() == 0.0);
      CHECK(r1.molecule.atoms[i].el == r2.molecule.atoms[i].el);
    }
  }

  SUBCASE("guidance events only occur at t >= stop_step and obey the gate") {
    SampleNoise noise(Rng::stream(24, "gen"));
    const auto result = generate(condition, cloud, ae, model, sched, opts, noise, pool);
    REQUIRE(!result.trace.empty());
    int min_t = sched.T + 1;
    for (const GuidanceEvent& e : result.trace) {
      min_t = std::min(min_t, e.t);
      CHECK(e.t >= opts.guidance->stop_step);
      if (e.mean_dist <= opts.guidance->gamma) CHECK_FALSE(e.moved);
    }
    CHECK(min_t == opts.guidance->stop_step);
  }

  SUBCASE("rotating the condition with coupled noise rotates the output") {
    const Eigen::Matrix3d rot = random_rotation(25);
    Molecule rotated = condition;
    for (Atom& a : rotated.atoms) a.pos = rot * a.pos;
    PointCloud rotated_cloud = cloud;
    rotated_cloud.points = cloud.points * rot.transpose();
    rotated_cloud.offset = rot * cloud.offset;

    SampleNoise base_noise(Rng::stream(26, "gen"));
    RotatedNoise coupled(Rng::stream(26, "gen"), rot);
    const auto base = generate(condition, cloud, ae, model, sched, opts, base_noise, pool);
    const auto rot_out =
        generate(rotated, rotated_cloud, ae, model, sched, opts, coupled, pool);

    REQUIRE(base.molecule.size() == rot_out.molecule.size());
    double worst = 0.0;
    for (int i = 0; i < base.molecule.size(); ++i) {
      worst = std::max(worst, (rot_out.molecule.atoms[i].pos -
                               rot * base.molecule.atoms[i].pos).norm());
      CHECK(rot_out.molecule.atoms[i].el == base.molecule.atoms[i].el);
    }
    CHECK(worst < 1e-6);
  }
}
