//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/verification.hpp"

#include <cmath>
#include <sstream>

#include "shapediff/forward_process.hpp"
#include "shapediff/predictor.hpp"
#include "shapediff/sampling.hpp"
#include "shapediff/schedule.hpp"
#include "shapediff/shape_autoencoder.hpp"
#include "shapediff/training.hpp"

namespace shapediff {

namespace {

// Compact f64 model configurations exercising every layer type.
SeConfig small_se_config() {
  SeConfig cfg;
  cfg.dp = 8;
  cfg.hidden = 16;
  cfg.enc_layers = 4;
  cfg.knn = 4;
  cfg.mlp_hidden = 16;
  cfg.mlp_layers = 4;
  return cfg;
}

PredictorConfig small_predictor_config(int layers) {
  PredictorConfig cfg;
  cfg.dh = 16;
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.neighbors = 3;
  cfg.dp = 8;
  cfg.rbf_bins = 8;
  cfg.time_dim = 8;
  return cfg;
}

Molecule random_test_molecule(int n_atoms, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "testmol");
  Molecule mol;
  const Element pool[4] = {Element::C, Element::N, Element::O, Element::S};
  for (int i = 0; i < n_atoms; ++i) {
    Atom a;
    a.el = pool[rng.uniform_int(4)];
    a.pos = 2.5 * rng.normal3();
    mol.atoms.push_back(a);
  }
  return mol;
}

PointCloud random_cloud(int n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "testcloud");
  Points3 pts(n, 3);
  for (int i = 0; i < n; ++i) pts.row(i) = (2.0 * rng.normal3()).transpose();
  PointCloud cloud;
  cloud.points = center_points(pts, &cloud.offset);
  cloud.centered = true;
  return cloud;
}

std::string format_sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace

CheckResult check_categorical_posterior() {
  const Schedule sched = Schedule::make(1000);
  const int K = kNumAtomClasses;
  double max_dev = 0.0;
  for (int t : {1, 2, 500, 1000}) {
    const double beta = sched.betaV(t);
    const double abar_prev = sched.alphaBarV(t - 1);
    for (int c0 = 0; c0 < K; ++c0) {
      for (int ct = 0; ct < K; ++ct) {
        // Independent Bayes computation from the step and marginal kernels.
        Eigen::VectorXd bayes(K);
        for (int k = 0; k < K; ++k) {
          const double step_lik = (k == ct ? 1.0 - beta + beta / K : beta / K);
          const double prior = abar_prev * (k == c0 ? 1.0 : 0.0) + (1.0 - abar_prev) / K;
          bayes[k] = step_lik * prior;
        }
        bayes /= bayes.sum();
        const Eigen::VectorXd closed =
            posterior_feature_row(one_hot(ct, K), one_hot(c0, K), t, sched);
        max_dev = std::max(max_dev, (bayes - closed).cwiseAbs().maxCoeff());
      }
    }
  }
  return {"categorical posterior vs exhaustive Bayes (K=15, t in {1,2,500,1000})",
          max_dev < 1e-12, "max abs deviation " + format_sci(max_dev)};
}

CheckResult check_gaussian_posterior() {
  const Schedule sched = Schedule::make(1000);
  const int N = 100000;
  Rng rng = Rng::stream(99, "iwmc");
  const Eigen::Vector3d x0{0.7, -1.1, 0.4};

  double worst_z = 0.0;
  for (int t : {2, 10, 500}) {
    const double abar_prev = sched.alphaBarX(t - 1);
    const double beta = sched.betaX(t);
    const double alpha = sched.alphaX(t);
    const double abar = sched.alphaBarX(t);
    // A plausible x_t draw from the closed-form marginal.
    Eigen::Vector3d x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * rng.normal3();

    Points3 x0m(1, 3), xtm(1, 3);
    x0m.row(0) = x0.transpose();
    xtm.row(0) = x_t.transpose();
    const Eigen::Vector3d mu = posterior_positions(xtm, x0m, t, sched).mean.row(0).transpose();

    // Sample x_{t-1} ~ q(.|x0), weight by the step likelihood q(x_t|x_{t-1}).
    Eigen::Vector3d wsum_x = Eigen::Vector3d::Zero();
    double wsum = 0.0;
    std::vector<Eigen::Vector3d> draws(N);
    std::vector<double> weights(N);
    for (int s = 0; s < N; ++s) {
      const Eigen::Vector3d xprev =
          std::sqrt(abar_prev) * x0 + std::sqrt(1.0 - abar_prev) * rng.normal3();
      const double logw = -(x_t - std::sqrt(alpha) * xprev).squaredNorm() / (2.0 * beta);
      const double w = std::exp(logw);
      draws[s] = xprev;
      weights[s] = w;
      wsum += w;
      wsum_x += w * xprev;
    }
    const Eigen::Vector3d est = wsum_x / wsum;
    // Delta-method standard error of the self-normalized estimator.
    Eigen::Vector3d se2 = Eigen::Vector3d::Zero();
    for (int s = 0; s < N; ++s)
      se2 += (weights[s] * weights[s]) * (draws[s] - est).cwiseAbs2();
    const Eigen::Vector3d se = (se2 / (wsum * wsum)).cwiseSqrt();
    for (int c = 0; c < 3; ++c)
      worst_z = std::max(worst_z, std::abs(est[c] - mu[c]) / std::max(se[c], 1e-300));
  }
  return {"Gaussian posterior mean vs importance-weighted MC (t in {2,10,500})", worst_z < 4.0,
          "worst |z| = " + format_sci(worst_z) + " (bound 4)"};
}

CheckResult check_forward_marginals() {
  const Schedule sched = Schedule::make(1000);
  const int K = kNumAtomClasses;

  // Categorical: per-step transition-matrix products vs the closed form.
  double max_dev = 0.0;
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(K, K);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(K, K);
  for (int t = 1; t <= sched.T; ++t) {
    const double beta = sched.betaV(t);
    const Eigen::MatrixXd step =
        (1.0 - beta) * Eigen::MatrixXd::Identity(K, K) + (beta / K) * ones;
    prod = step * prod;
    if (t == 1 || t == 2 || t == 500 || t == 1000) {
      const double abar = sched.alphaBarV(t);
      for (int c0 = 0; c0 < K; ++c0) {
        const Eigen::VectorXd composed = prod * one_hot(c0, K);
        const Eigen::VectorXd closed =
            abar * one_hot(c0, K) + Eigen::VectorXd::Constant(K, (1.0 - abar) / K);
        max_dev = std::max(max_dev, (composed - closed).cwiseAbs().maxCoeff());
      }
    }
  }
  if (max_dev >= 1e-12)
    return {"forward marginal consistency", false,
            "categorical composition deviates by " + format_sci(max_dev)};

  // Gaussian: simulate the step chain and compare moments at 4 sigma.
  Rng rng = Rng::stream(7, "chain");
  const double x0 = 1.3;
  const int N = 20000;
  double worst_z = 0.0;
  for (int t_target : {1, 7, 50}) {
    double sum = 0.0, sumsq = 0.0;
    for (int s = 0; s < N; ++s) {
      double x = x0;
      for (int t = 1; t <= t_target; ++t)
        x = std::sqrt(1.0 - sched.betaX(t)) * x + std::sqrt(sched.betaX(t)) * rng.normal();
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / N;
    const double var = sumsq / N - mean * mean;
    const double abar = sched.alphaBarX(t_target);
    const double expect_mean = std::sqrt(abar) * x0;
    const double expect_var = 1.0 - abar;
    const double z_mean = std::abs(mean - expect_mean) / std::sqrt(expect_var / N);
    const double z_var = std::abs(var - expect_var) / (expect_var * std::sqrt(2.0 / (N - 1)));
    worst_z = std::max({worst_z, z_mean, z_var});
  }
  return {"forward marginal consistency (categorical exact, Gaussian 4-sigma)", worst_z < 4.0,
          "categorical max dev " + format_sci(max_dev) + ", Gaussian worst |z| " +
              format_sci(worst_z)};
}

CheckResult check_equivariance() {
  const int kRotations = 100;
  const SeConfig se_cfg = small_se_config();
  ShapeAutoencoder<double> ae = init_shape_autoencoder<double>(se_cfg, 11);
  const PointCloud cloud = random_cloud(24, 21);

  const ShapeEmbedding<double> h = encode(ae, cloud);
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const char* name, double rel) {
    if (rel > worst) {
      worst = rel;
      worst_name = name;
    }
  };

  Rng rng = Rng::stream(5, "rot");
  for (int r = 0; r < kRotations; ++r) {
    const Eigen::Matrix3d rot = random_rotation(rng);

    {  // Encoder: enc(P R^T) = enc(P) R^T.
      PointCloud rotated = cloud;
      rotated.points = cloud.points * rot.transpose();
      const ShapeEmbedding<double> hr = encode(ae, rotated);
      const ShapeEmbedding<double> expected = h * rot.transpose();
      track("encoder", (hr - expected).norm() / expected.norm());
    }
    {  // Decoder: dec(R q, H R^T) = dec(q, H).
      const Eigen::Vector3d q = 1.7 * Eigen::Vector3d(0.3 + 0.01 * r, -0.8, 0.5);
      const double base = decode(ae, q, h);
      const double rotated = decode(ae, Eigen::Vector3d(rot * q),
                                    ShapeEmbedding<double>(h * rot.transpose()));
      track("decoder", std::abs(rotated - base) / std::max(std::abs(base), 1e-9));
    }
  }

  // Denoiser: single layer (per-layer property) and a 2-layer stack.
  for (int layers : {1, 2}) {
    Predictor<double> model = init_predictor<double>(small_predictor_config(layers), 31 + layers);
    const Molecule mol = random_test_molecule(5, 41 + layers);
    const Points3 x = mol.positions();
    const Eigen::MatrixXd v = mol.features();
    const Prediction base = predict(model, x, v, h, 37);
    Rng rng2 = Rng::stream(17 + layers, "rot");
    for (int r = 0; r < kRotations; ++r) {
      const Eigen::Matrix3d rot = random_rotation(rng2);
      const Prediction rotated = predict(model, Points3(x * rot.transpose()), v,
                                         ShapeEmbedding<double>(h * rot.transpose()), 37);
      const Points3 expected = base.x0_hat * rot.transpose();
      track(layers == 1 ? "eq layer" : "eq stack",
            (rotated.x0_hat - expected).norm() / expected.norm());
      track(layers == 1 ? "inv layer" : "inv stack",
            (rotated.v0_hat - base.v0_hat).cwiseAbs().maxCoeff());
    }
  }

  return {"equivariance suite (encoder, decoder, denoiser; 100 rotations)", worst < 1e-6,
          "worst relative error " + format_sci(worst) + " (" + worst_name + ")"};
}

CheckResult check_gradients() {
  std::ostringstream detail;
  bool passed = true;

  {  // Autoencoder loss on a single cloud.
    ShapeAutoencoder<double> ae = init_shape_autoencoder<double>(small_se_config(), 3);
    const Molecule mol = random_test_molecule(4, 51);
    const PointCloud cloud = build_surface_point_cloud(mol, 20, 61);
    const std::vector<QuerySample> queries = sample_query_points(mol, 6, 71);

    auto loss_value = [&] {
      Ctx<double> ctx(ae.params);
      return pretrain_loss_var(ctx, ae.cfg, cloud, queries).val()(0, 0);
    };
    GradMap<double> analytic;
    {
      Ctx<double> ctx(ae.params);
      ad::Var<double> loss = pretrain_loss_var(ctx, ae.cfg, cloud, queries);
      ctx.backward(loss);
      ctx.accumulate_grads(analytic);
    }
    const GradCheckReport report = finite_difference_check(ae.params, analytic, loss_value);
    passed = passed && report.max_rel_err < 1e-4;
    detail << "SE: " << report.entries << " params, max rel err "
           << format_sci(report.max_rel_err) << " at " << report.worst;
  }

  {  // Denoiser loss on a single molecule at a fixed noisy view.
    const Schedule sched = Schedule::make(1000);
    DiffTrainConfig cfg;
    cfg.model = small_predictor_config(2);
    Predictor<double> model = init_predictor<double>(cfg.model, 13);

    const Molecule mol = random_test_molecule(4, 81);
    DiffusionSample<double> sample;
    const PointCloud cloud = build_surface_point_cloud(mol, 20, 91);
    sample.x0 = mol.positions().rowwise() - cloud.offset.transpose();
    sample.v0 = mol.features();
    ShapeAutoencoder<double> ae = init_shape_autoencoder<double>(small_se_config(), 3);
    sample.h = encode(ae, cloud);

    Rng rng = Rng::stream(7, "gradnoise");
    DiffusionBatchItem<double> item = make_batch_item(sample, sched, 17, rng);

    auto loss_value = [&] {
      Ctx<double> ctx(model.params);
      return sample_loss_var(ctx, cfg, sched, item).val()(0, 0);
    };
    GradMap<double> analytic;
    {
      Ctx<double> ctx(model.params);
      ad::Var<double> loss = sample_loss_var(ctx, cfg, sched, item);
      ctx.backward(loss);
      ctx.accumulate_grads(analytic);
    }
    const GradCheckReport report = finite_difference_check(model.params, analytic, loss_value);
    passed = passed && report.max_rel_err < 1e-4;
    detail << "; DIFF: " << report.entries << " params, max rel err "
           << format_sci(report.max_rel_err) << " at " << report.worst;
  }

  return {"gradient contract (central differences, h=1e-5, rel err < 1e-4)", passed,
          detail.str()};
}

CheckResult check_schedule() {
  const Schedule sched = Schedule::make(1000);
  std::ostringstream detail;
  bool passed = true;

  const double beta_mid = sched.betaX(500);
  if (std::abs(beta_mid - 0.00500005) > 1e-12) {
    passed = false;
    detail << "beta_x(T/2) = " << format_sci(beta_mid) << " != 0.00500005; ";
  }
  if (sched.alphaBarV(0) != 1.0) {
    passed = false;
    detail << "abar_v(0) != 1; ";
  }
  // The 0.999 clip on the final feature step leaves a ~2e-9 residue instead
  // of the formula's exact zero.
  if (sched.alphaBarV(1000) > 1e-8) {
    passed = false;
    detail << "abar_v(T) = " << format_sci(sched.alphaBarV(1000)) << " > 1e-8; ";
  }
  for (int t = 1; t <= 1000; ++t) {
    if (sched.alphaBarX(t) > sched.alphaBarX(t - 1) ||
        sched.alphaBarV(t) > sched.alphaBarV(t - 1)) {
      passed = false;
      detail << "abar not monotone at t=" << t << "; ";
      break;
    }
  }
  if ((sched.beta_x >= 0.1).any()) {
    passed = false;
    detail << "beta_x reaches 0.1; ";
  }
  if (sched.alphaBarX(1000) >= 0.01) {
    passed = false;
    detail << "abar_x(T) = " << format_sci(sched.alphaBarX(1000)) << " >= 0.01; ";
  }
  if (passed)
    detail << "beta_x(T/2) = 0.00500005, abar_x(T) = " << format_sci(sched.alphaBarX(1000))
           << ", abar_v(T) = " << format_sci(sched.alphaBarV(1000)) << ", all beta_x < 0.1";
  return {"schedule endpoints and monotonicity", passed, detail.str()};
}

std::vector<CheckResult> run_oracle_suite() {
  return {check_schedule(),          check_categorical_posterior(), check_gaussian_posterior(),
          check_forward_marginals(), check_equivariance(),          check_gradients()};
}

}  // namespace shapediff
