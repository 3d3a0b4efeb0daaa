//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>

#include "shapediff/dataset.hpp"
#include "shapediff/predictor.hpp"
#include "shapediff/training.hpp"
#include "shapediff/verification.hpp"

using namespace shapediff;

namespace {

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

ShapeEmbedding<double> random_embedding(int dp, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "emb");
  ShapeEmbedding<double> h(dp, 3);
  for (int i = 0; i < dp; ++i) h.row(i) = rng.normal3().transpose();
  return h;
}

Molecule random_molecule(int n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "mol");
  Molecule mol;
  const Element pool[3] = {Element::C, Element::N, Element::O};
  for (int i = 0; i < n; ++i)
    mol.atoms.push_back({pool[rng.uniform_int(3)], false, 2.0 * rng.normal3()});
  return mol;
}

void zero_params(ParamStore<double>& params) {
  for (auto& [name, tensor] : params.tensors) tensor.setZero();
}

}  // namespace

TEST_CASE("zero-parameter predictor is the identity on positions") {
  PredictorConfig cfg = tiny_predictor();
  Predictor<double> model = init_predictor<double>(cfg, 1);
  zero_params(model.params);

  Points3 x(1, 3);
  x << 0.3, -0.8, 0.5;
  Eigen::MatrixXd v = one_hot(2, cfg.num_classes).transpose();
  const ShapeEmbedding<double> h = random_embedding(cfg.dp, 2);
  const Prediction pred = predict(model, x, v, h, 100);
  CHECK((pred.x0_hat - x).cwiseAbs().maxCoeff() == 0.0);
  // All-zero feature head yields the uniform softmax.
  CHECK((pred.v0_hat.array() - 1.0 / cfg.num_classes).abs().maxCoeff() < 1e-15);

  CHECK_THROWS(predict(model, Points3(Points3::Constant(1, 3,
                        std::numeric_limits<double>::quiet_NaN())), v, h, 10));
}

TEST_CASE("predictor is equivariant and permutation-covariant") {
  PredictorConfig cfg = tiny_predictor();
  Predictor<double> model = init_predictor<double>(cfg, 3);
  const Molecule mol = random_molecule(6, 4);
  const Points3 x = mol.positions();
  const Eigen::MatrixXd v = mol.features();
  const ShapeEmbedding<double> h = random_embedding(cfg.dp, 5);
  const Prediction base = predict(model, x, v, h, 42);

  SUBCASE("joint rotation") {
    Rng rng = Rng::stream(6, "rot");
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::Matrix3d rot = random_rotation(rng);
      const Prediction rotated = predict(model, Points3(x * rot.transpose()), v,
                                         ShapeEmbedding<double>(h * rot.transpose()), 42);
      CHECK((rotated.x0_hat - base.x0_hat * rot.transpose()).norm() / base.x0_hat.norm() <
            1e-8);
      CHECK((rotated.v0_hat - base.v0_hat).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  SUBCASE("permutation") {
    const int n = mol.size();
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = (i * 5 + 1) % n;
    Points3 px(n, 3);
    Eigen::MatrixXd pv(n, cfg.num_classes);
    for (int i = 0; i < n; ++i) {
      px.row(perm[i]) = x.row(i);
      pv.row(perm[i]) = v.row(i);
    }
    const Prediction shuffled = predict(model, px, pv, h, 42);
    for (int i = 0; i < n; ++i) {
      CHECK((shuffled.x0_hat.row(perm[i]) - base.x0_hat.row(i)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((shuffled.v0_hat.row(perm[i]) - base.v0_hat.row(i)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  SUBCASE("scaling distances changes the features (negative control)") {
    const Prediction scaled = predict(model, Points3(2.0 * x), v, h, 42);
    CHECK((scaled.v0_hat - base.v0_hat).cwiseAbs().maxCoeff() > 1e-8);
  }
}

TEST_CASE("equivariant layer reduces to the VN-linear residual when gates vanish") {
  PredictorConfig cfg = tiny_predictor();
  cfg.layers = 1;
  Predictor<double> model = init_predictor<double>(cfg, 7);
  model.params.at("l0.eq.wg").setZero();
  model.params.at("l0.eq.bg").setZero();

  const Molecule mol = random_molecule(5, 8);
  const Points3 x = mol.positions();
  const ShapeEmbedding<double> h = random_embedding(cfg.dp, 9);
  const Prediction pred = predict(model, x, mol.features(), h, 11);

  // x^{l+1} = x + 0 + VN-Lin(x, 0, H) with the same VN-In direction.
  const double wx = model.params.at("l0.vnlin.wx")(0, 0);
  const Eigen::RowVector3d h_term =
      model.params.at("l0.vnlin.wh").row(0) * Eigen::MatrixXd(h);
  const Points3 expected = (1.0 + wx) * x;
  CHECK((pred.x0_hat - (expected.rowwise() + h_term)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two mirrored atoms with identical features update mirror-symmetrically") {
  PredictorConfig cfg = tiny_predictor();
  cfg.layers = 1;
  Predictor<double> model = init_predictor<double>(cfg, 10);
  // Drop the shape term so the mirror symmetry is exact.
  model.params.at("l0.vnlin.wh").setZero();
  const ShapeEmbedding<double> h = ShapeEmbedding<double>::Zero(cfg.dp, 3);

  Points3 x(2, 3);
  x << 0.9, -0.3, 0.4, -0.9, 0.3, -0.4;
  Eigen::MatrixXd v(2, cfg.num_classes);
  v.row(0) = one_hot(1, cfg.num_classes).transpose();
  v.row(1) = one_hot(1, cfg.num_classes).transpose();

  const Prediction pred = predict(model, x, v, h, 55);
  CHECK((pred.x0_hat.row(0) + pred.x0_hat.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pred.v0_hat.row(0) - pred.v0_hat.row(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("feature path ignores neighbors when the value head is zeroed") {
  PredictorConfig cfg = tiny_predictor();
  cfg.layers = 1;
  Predictor<double> model = init_predictor<double>(cfg, 12);
  model.params.at("l0.inv.wv").setZero();
  model.params.at("l0.inv.bv").setZero();

  PredictorConfig cfg0 = cfg;
  cfg0.layers = 0;
  Predictor<double> passthrough;
  passthrough.cfg = cfg0;
  passthrough.params.tensors["emb.w"] = model.params.at("emb.w");
  passthrough.params.tensors["emb.b"] = model.params.at("emb.b");
  passthrough.params.tensors["vnin.w"] = model.params.at("vnin.w");
  passthrough.params.tensors["vnin.b"] = model.params.at("vnin.b");
  passthrough.params.tensors["head.l0.w"] = model.params.at("head.l0.w");
  passthrough.params.tensors["head.l0.b"] = model.params.at("head.l0.b");
  passthrough.params.tensors["head.l1.w"] = model.params.at("head.l1.w");
  passthrough.params.tensors["head.l1.b"] = model.params.at("head.l1.b");

  const Molecule mol = random_molecule(4, 13);
  const ShapeEmbedding<double> h = random_embedding(cfg.dp, 14);
  const Prediction with_layer = predict(model, mol.positions(), mol.features(), h, 9);
  const Prediction without = predict(passthrough, mol.positions(), mol.features(), h, 9);
  CHECK((with_layer.v0_hat - without.v0_hat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("snr weight: clipping, limits, monotonicity") {
  const Schedule sched = Schedule::make(1000);
  // A synthetic schedule hitting the example values exactly.
  Schedule s = sched;
  s.alpha_bar_x[100] = 0.5;
  CHECK(snr_weight(100, s, 10.0) == doctest::Approx(1.0).epsilon(1e-15));
  s.alpha_bar_x[100] = 0.999;
  CHECK(snr_weight(100, s, 10.0) == doctest::Approx(10.0));
  s.alpha_bar_x[100] = 1e-12;
  CHECK(snr_weight(100, s, 10.0) < 1e-11);
  s.alpha_bar_x[100] = 1.0;
  CHECK(snr_weight(100, s, 10.0) == 10.0);

  // Real schedule: positive everywhere, equal to delta while clipped, then
  // nonincreasing.
  double prev = snr_weight(1, sched, 10.0);
  bool clipped_region_over = prev < 10.0;
  for (int t = 2; t <= 1000; ++t) {
    const double w = snr_weight(t, sched, 10.0);
    CHECK(w > 0.0);
    if (clipped_region_over) CHECK(w <= prev + 1e-15);
    if (w < 10.0) clipped_region_over = true;
    prev = w;
  }
}

TEST_CASE("position loss arithmetic") {
  Schedule s = Schedule::make(1000);
  s.alpha_bar_x[5] = 0.5;  // weight 1
  Points3 x0(1, 3), xh(1, 3);
  x0 << 0, 0, 0;
  xh << 1, 0, 0;
  CHECK(position_loss(xh, x0, 5, s, 10.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(position_loss(x0, x0, 5, s, 10.0) == 0.0);

  Rng rng = Rng::stream(15, "pl");
  Points3 a(4, 3), b(4, 3);
  for (int i = 0; i < 4; ++i) {
    a.row(i) = rng.normal3().transpose();
    b.row(i) = rng.normal3().transpose();
  }
  double manual = 0.0;
  for (int i = 0; i < 4; ++i) manual += (a.row(i) - b.row(i)).squaredNorm();
  manual *= snr_weight(333, s, 10.0);
  CHECK(position_loss(a, b, 333, s, 10.0) == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("feature KL loss: zero at the truth, hand value, nonnegative") {
  const Schedule sched = Schedule::make(1000);
  const int K = kNumAtomClasses;
  Eigen::MatrixXd v0 = one_hot(4, K).transpose();
  Eigen::MatrixXd vt = one_hot(7, K).transpose();
  CHECK(feature_kl_loss(v0, v0, vt, 100, sched) == doctest::Approx(0.0).epsilon(1e-18));

  // Hand KL of two binary posteriors: 0.75 ln 1.5 + 0.25 ln 0.5.
  const double hand = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(hand == doctest::Approx(0.13081).epsilon(1e-4));

  Rng rng = Rng::stream(16, "kl");
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::MatrixXd soft(1, K);
    for (int k = 0; k < K; ++k) soft(0, k) = rng.uniform() + 1e-6;
    soft /= soft.sum();
    const int t = 2 + rng.uniform_int(999);
    CHECK(feature_kl_loss(soft, v0, vt, t, sched) >= -1e-14);
  }
}

TEST_CASE("KL via the closed-form posterior ties to the exhaustive Bayes posterior") {
  const Schedule sched = Schedule::make(1000);
  const int K = kNumAtomClasses;
  Rng rng = Rng::stream(17, "tie");
  for (int t : {2, 500, 1000}) {
    Eigen::MatrixXd v0 = one_hot(rng.uniform_int(K), K).transpose();
    Eigen::MatrixXd vt = one_hot(rng.uniform_int(K), K).transpose();
    Eigen::MatrixXd soft(1, K);
    for (int k = 0; k < K; ++k) soft(0, k) = rng.uniform() + 1e-3;
    soft /= soft.sum();

    // Bayes-composed posteriors from the raw kernels.
    auto bayes = [&](const Eigen::MatrixXd& v0row) {
      Eigen::VectorXd c(K);
      const double beta = sched.betaV(t);
      const double abar_prev = sched.alphaBarV(t - 1);
      Eigen::Index ct;
      vt.row(0).maxCoeff(&ct);
      for (int k = 0; k < K; ++k) {
        const double lik = (k == ct ? 1.0 - beta + beta / K : beta / K);
        double prior = 0.0;
        for (int c0 = 0; c0 < K; ++c0)
          prior += v0row(0, c0) * (abar_prev * (k == c0 ? 1.0 : 0.0) + (1.0 - abar_prev) / K);
        c[k] = lik * prior;
      }
      return Eigen::VectorXd(c / c.sum());
    };
    const Eigen::VectorXd c_true = bayes(v0);
    const Eigen::VectorXd c_pred = bayes(soft);
    double manual = 0.0;
    for (int k = 0; k < K; ++k)
      if (c_true[k] > 0) manual += c_true[k] * (std::log(c_true[k]) - std::log(c_pred[k]));
    CHECK(std::abs(feature_kl_loss(soft, v0, vt, t, sched) - manual) < 1e-12);
  }
}

TEST_CASE("total loss composition, xi=0 reduction, determinism") {
  const Schedule sched = Schedule::make(1000);
  DiffTrainConfig cfg;
  cfg.model = tiny_predictor();
  Predictor<double> model = init_predictor<double>(cfg.model, 20);

  const std::vector<Molecule> mols = generate_toy_dataset(3, 21);
  ShapeAutoencoder<double> ae =
      init_shape_autoencoder<double>(SeConfig{6, 12, 3, 4, 12, 3, 0.2}, 22);
  std::vector<DiffusionSample<double>> batch =
      prepare_diffusion_samples(mols, ae, 24, 23);

  const double full = total_loss(batch, model, sched, cfg, 99);
  CHECK(full == total_loss(batch, model, sched, cfg, 99));  // same seed, same value

  DiffTrainConfig no_kl = cfg;
  no_kl.xi = 0.0;
  const double pos_only = total_loss(batch, model, sched, no_kl, 99);
  CHECK(pos_only < full);

  // The combined per-sample loss equals w|dx|^2 + xi * KL computed separately.
  Rng rng = Rng::stream(99, "loss", 0);
  const int t = 1 + rng.uniform_int(cfg.T);
  DiffusionBatchItem<double> item = make_batch_item(batch[0], sched, t, rng);
  Ctx<double> ctx(model.params);
  const double combined = sample_loss_var(ctx, cfg, sched, item).val()(0, 0);
  const Prediction pred = predict(model, item.x_t, item.v_t, batch[0].h, t);
  const double manual = position_loss(pred.x0_hat, batch[0].x0, t, sched, cfg.delta) +
                        cfg.xi * feature_kl_loss(pred.v0_hat, batch[0].v0, item.v_t, t, sched);
  CHECK(combined == doctest::Approx(manual).epsilon(1e-10));
}

TEST_CASE("predictor loss gradients match finite differences; duplication doubles") {
  const Schedule sched = Schedule::make(1000);
  DiffTrainConfig cfg;
  cfg.model = tiny_predictor();
  Predictor<double> model = init_predictor<double>(cfg.model, 30);

  const std::vector<Molecule> mols = generate_toy_dataset(1, 31);
  ShapeAutoencoder<double> ae =
      init_shape_autoencoder<double>(SeConfig{6, 12, 3, 4, 12, 3, 0.2}, 32);
  std::vector<DiffusionSample<double>> samples = prepare_diffusion_samples(mols, ae, 24, 33);

  Rng rng = Rng::stream(34, "noise");
  DiffusionBatchItem<double> item = make_batch_item(samples[0], sched, 111, rng);

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
  CHECK(report.max_rel_err < 1e-4);

  // A duplicated batch element doubles the (unnormalized) gradient.
  GradMap<double> twice;
  for (int rep = 0; rep < 2; ++rep) {
    Ctx<double> ctx(model.params);
    ad::Var<double> loss = sample_loss_var(ctx, cfg, sched, item);
    ctx.backward(loss);
    ctx.accumulate_grads(twice);
  }
  for (const auto& [name, g] : analytic)
    CHECK((twice.at(name) - 2.0 * g).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("perfect position prediction has zero position-loss gradient") {
  const Schedule sched = Schedule::make(1000);
  DiffTrainConfig cfg;
  cfg.model = tiny_predictor();
  cfg.xi = 0.0;  // isolate the position term
  Predictor<double> model = init_predictor<double>(cfg.model, 40);
  zero_params(model.params);  // identity on positions

  DiffusionSample<double> sample;
  const Molecule mol = random_molecule(4, 41);
  sample.x0 = mol.positions();
  sample.v0 = mol.features();
  sample.h = random_embedding(cfg.model.dp, 42);

  DiffusionBatchItem<double> item;
  item.sample = &sample;
  item.t = 200;
  item.x_t = sample.x0;  // zero-parameter model predicts x0_hat = x_t = x0
  item.v_t = sample.v0;

  Ctx<double> ctx(model.params);
  ad::Var<double> loss = sample_loss_var(ctx, cfg, sched, item);
  CHECK(loss.val()(0, 0) == 0.0);
  ctx.backward(loss);
  GradMap<double> grads;
  ctx.accumulate_grads(grads);
  for (const auto& [name, g] : grads) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}
