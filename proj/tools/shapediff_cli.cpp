//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shapediff/checkpoint.hpp"
#include "shapediff/dataset.hpp"
#include "shapediff/metrics.hpp"
#include "shapediff/parallel.hpp"
#include "shapediff/sampling.hpp"
#include "shapediff/training.hpp"
#include "shapediff/verification.hpp"

namespace fs = std::filesystem;
using namespace shapediff;

namespace {

constexpr int kUsageError = 2;
constexpr int kCheckFailure = 1;

using ConfigMap = std::map<std::string, std::string>;

ConfigMap read_config(const std::string& path) {
  if (path.empty()) return {};
  return load_config_file(path);
}

void apply(const ConfigMap& cfg, const std::string& key, int& out) {
  if (auto it = cfg.find(key); it != cfg.end()) out = std::stoi(it->second);
}
void apply(const ConfigMap& cfg, const std::string& key, long& out) {
  if (auto it = cfg.find(key); it != cfg.end()) out = std::stol(it->second);
}
void apply(const ConfigMap& cfg, const std::string& key, double& out) {
  if (auto it = cfg.find(key); it != cfg.end()) out = std::stod(it->second);
}
void apply(const ConfigMap& cfg, const std::string& key, std::string& out) {
  if (auto it = cfg.find(key); it != cfg.end()) out = it->second;
}

SeFitConfig se_fit_config_from(const ConfigMap& cfg) {
  SeFitConfig fit;
  apply(cfg, "dp", fit.model.dp);
  apply(cfg, "hidden", fit.model.hidden);
  apply(cfg, "enc_layers", fit.model.enc_layers);
  apply(cfg, "knn", fit.model.knn);
  apply(cfg, "mlp_hidden", fit.model.mlp_hidden);
  apply(cfg, "mlp_layers", fit.model.mlp_layers);
  apply(cfg, "steps", fit.steps);
  apply(cfg, "batch", fit.batch);
  apply(cfg, "n_points", fit.n_points);
  apply(cfg, "n_queries", fit.n_queries);
  apply(cfg, "lr", fit.lr);
  apply(cfg, "beta1", fit.beta1);
  apply(cfg, "beta2", fit.beta2);
  apply(cfg, "lr_decay", fit.lr_decay);
  apply(cfg, "min_lr", fit.min_lr);
  apply(cfg, "patience", fit.patience);
  apply(cfg, "eval_interval", fit.eval_interval);
  return fit;
}

DiffTrainConfig diff_config_from(const ConfigMap& cfg, int dp) {
  DiffTrainConfig train;
  train.model.dp = dp;
  apply(cfg, "dh", train.model.dh);
  apply(cfg, "layers", train.model.layers);
  apply(cfg, "heads", train.model.heads);
  apply(cfg, "neighbors", train.model.neighbors);
  apply(cfg, "rbf_bins", train.model.rbf_bins);
  apply(cfg, "rbf_max", train.model.rbf_max);
  apply(cfg, "time_dim", train.model.time_dim);
  apply(cfg, "T", train.T);
  apply(cfg, "delta", train.delta);
  apply(cfg, "xi", train.xi);
  apply(cfg, "weight_scheme", train.weight_scheme);
  apply(cfg, "lr", train.lr);
  apply(cfg, "beta1", train.beta1);
  apply(cfg, "beta2", train.beta2);
  apply(cfg, "lr_decay", train.lr_decay);
  apply(cfg, "min_lr", train.min_lr);
  apply(cfg, "patience", train.patience);
  apply(cfg, "batch", train.batch);
  apply(cfg, "steps", train.steps);
  apply(cfg, "eval_interval", train.eval_interval);
  apply(cfg, "n_points", train.n_points);
  return train;
}

void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  out << "step,train_loss,val_loss,lr\n";
  char buf[160];
  for (const TrainLogRow& row : log) {
    std::snprintf(buf, sizeof(buf), "%ld,%.10g,%.10g,%.10g\n", row.step, row.train_loss,
                  row.val_loss, row.lr);
    out << buf;
  }
}

int cmd_pretrain_shape(const std::string& data, const std::string& out,
                       const std::string& config, std::uint64_t seed) {
  const std::vector<Molecule> dataset = load_dataset(data);
  SeFitConfig fit = se_fit_config_from(read_config(config));
  fit.seed = seed;
  const SeFitResult<float> result = fit_autoencoder<float>(dataset, fit, seed);
  save_shape_checkpoint(result.model, out, fit.steps, seed);
  write_training_log(result.log, out + ".log.csv");
  std::printf("pretrain-shape: %zu molecules, %d steps, val loss %.6g -> %.6g\n",
              dataset.size(), fit.steps, result.initial_val_loss, result.final_val_loss);
  return 0;
}

int cmd_train(const std::string& data, const std::string& shape_ckpt, const std::string& out,
              const std::string& config, std::uint64_t seed) {
  const std::vector<Molecule> dataset = load_dataset(data);
  const ShapeAutoencoder<float> ae = load_shape_checkpoint(shape_ckpt);
  DiffTrainConfig cfg = diff_config_from(read_config(config), ae.cfg.dp);
  const DiffTrainState<float> state = train_diffusion(dataset, ae, cfg, seed);
  save_diffusion_checkpoint(state, cfg, out);
  write_training_log(state.log, out + ".log.csv");
  const double last = state.log.empty() ? 0.0 : state.log.back().val_loss;
  std::printf("train: %zu molecules, %ld steps, val loss %.6g -> %.6g\n", dataset.size(),
              state.step, state.initial_val_loss, last);
  return 0;
}

int cmd_sample(const std::string& condition_path, const std::string& shape_ckpt,
               const std::string& diff_ckpt, int n, bool guide, double gamma, int stop_step,
               const std::string& posterior_variance, std::uint64_t seed,
               const std::string& out_dir) {
  const std::vector<Molecule> conditions = load_dataset(condition_path);
  const ShapeAutoencoder<float> ae = load_shape_checkpoint(shape_ckpt);
  DiffTrainConfig cfg;
  const DiffTrainState<float> state = load_diffusion_checkpoint(diff_ckpt, &cfg);
  const Schedule sched = Schedule::make(cfg.T);

  SampleOptions opts;
  opts.posterior_variance = posterior_variance;
  if (guide) {
    GuidanceConfig g;
    g.gamma = gamma;
    g.stop_step = stop_step;
    opts.guidance = g;
  }

  fs::create_directories(out_dir);
  const int total = static_cast<int>(conditions.size()) * n;
  std::vector<PointCloud> clouds(conditions.size());
  for (std::size_t c = 0; c < conditions.size(); ++c)
    clouds[c] = build_surface_point_cloud(conditions[c], cfg.n_points,
                                          Rng::stream(seed, "cloud", c).next());

  parallel_for(total, [&](int g) {
    const int ci = g / n, si = g % n;
    SampleNoise noise(Rng::stream(seed, "generate", ci, si));
    const auto result = generate(conditions[ci], clouds[ci], ae, state.model, sched, opts,
                                 noise, state.atom_counts);
    char name[64];
    std::snprintf(name, sizeof(name), "gen_c%04d_s%04d.jsonl", ci, si);
    std::ofstream out(fs::path(out_dir) / name);
    out << molecule_to_json_line(result.molecule) << '\n';
  });
  std::printf("sample: wrote %d molecules to %s\n", total, out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& condition_path, const std::string& generated_dir,
             const std::string& out_csv, const std::string& real_path) {
  const std::vector<Molecule> conditions = load_dataset(condition_path);
  const std::vector<Molecule> real =
      real_path.empty() ? conditions : load_dataset(real_path);

  struct Row {
    std::string file;
    int condition;
    bool connected;
    double sim_s;
    double sim_g;
  };
  std::vector<std::pair<std::string, Molecule>> generated;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(generated_dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  for (const std::string& f : files) {
    for (const Molecule& m : load_dataset(f))
      generated.emplace_back(fs::path(f).filename().string(), m);
  }
  if (generated.empty()) throw std::runtime_error("no generated molecules in " + generated_dir);

  std::vector<Row> rows(generated.size());
  parallel_for(static_cast<int>(generated.size()), [&](int i) {
    const auto& [file, mol] = generated[i];
    int ci = 0;
    if (const auto pos = file.find("_c"); pos != std::string::npos)
      ci = std::stoi(file.substr(pos + 2, 4));
    ci = std::min<int>(ci, static_cast<int>(conditions.size()) - 1);
    rows[i] = {file, ci, connectivity(mol), shape_similarity(conditions[ci], mol),
               graph_similarity(conditions[ci], mol)};
  });

  double connected = 0.0, sum_s = 0.0, sum_g = 0.0, max_s = 0.0;
  for (const Row& r : rows) {
    connected += r.connected ? 1.0 : 0.0;
    sum_s += r.sim_s;
    sum_g += r.sim_g;
    max_s = std::max(max_s, r.sim_s);
  }
  const double avg_s = sum_s / rows.size();
  double var_s = 0.0;
  for (const Row& r : rows) var_s += (r.sim_s - avg_s) * (r.sim_s - avg_s);
  const double std_s = std::sqrt(var_s / rows.size());

  std::vector<Molecule> gen_only;
  gen_only.reserve(generated.size());
  for (const auto& [f, m] : generated) gen_only.push_back(m);
  const double div = gen_only.size() >= 2 ? diversity(gen_only) : 0.0;
  double js = std::numeric_limits<double>::quiet_NaN();
  try {
    js = js_divergence_bond_lengths(real, gen_only);
  } catch (const std::exception&) {
    // left as NaN when either side has no bonds
  }

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << "molecule,condition,connected,sim_s,sim_g\n";
  char buf[256];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.6f,%.6f\n", r.file.c_str(), r.condition,
                  r.connected ? 1 : 0, r.sim_s, r.sim_g);
    out << buf;
  }
  out << "\nmetric,value\n";
  out << "connectivity_pct," << 100.0 * connected / rows.size() << "\n";
  out << "avg_sim_s," << avg_s << "\n";
  out << "max_sim_s," << max_s << "\n";
  out << "std_sim_s," << std_s << "\n";
  out << "avg_sim_g," << sum_g / rows.size() << "\n";
  out << "diversity," << div << "\n";
  out << "js_bond_lengths," << js << "\n";
  std::printf("eval: %zu molecules, connectivity %.1f%%, avgSim_s %.3f, maxSim_s %.3f\n",
              rows.size(), 100.0 * connected / rows.size(), avg_s, max_s);
  return 0;
}

int cmd_toy_data(int n, std::uint64_t seed, const std::string& out) {
  save_dataset(generate_toy_dataset(n, seed), out);
  std::printf("toy-data: wrote %d molecules to %s\n", n, out.c_str());
  return 0;
}

int cmd_dump_schedule(int T, const std::string& out_csv) {
  const Schedule sched = Schedule::make(T);
  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << "t,beta_x,beta_v,alpha_bar_x,alpha_bar_v\n";
  char buf[200];
  for (int t = 1; t <= T; ++t) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", t, sched.betaX(t),
                  sched.betaV(t), sched.alphaBarX(t), sched.alphaBarV(t));
    out << buf;
  }
  std::printf("dump-schedule: wrote %d rows to %s\n", T, out_csv.c_str());
  return 0;
}

int cmd_verify() {
  bool all_passed = true;
  for (const CheckResult& r : run_oracle_suite()) {
    std::printf("[%s] %s -- %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shape-conditioned 3D molecule generation via equivariant diffusion"};
  app.require_subcommand(1);

  std::string data, out, config, shape_ckpt, diff_ckpt, condition, generated, real_path;
  std::string posterior_variance = "as_printed";
  std::uint64_t seed = 0;
  int n = 50, stop_step = 300, T = 1000;
  double gamma = 0.2;
  bool guide = false;

  auto* pretrain = app.add_subcommand("pretrain-shape", "pretrain the shape autoencoder");
  pretrain->add_option("--data", data, "training molecules (jsonl)")->required();
  pretrain->add_option("--out", out, "output checkpoint path")->required();
  pretrain->add_option("--config", config, "key=value config file");
  pretrain->add_option("--seed", seed, "rng seed");

  auto* train = app.add_subcommand("train", "train the diffusion denoiser");
  train->add_option("--data", data, "training molecules (jsonl)")->required();
  train->add_option("--shape-ckpt", shape_ckpt, "pretrained shape checkpoint")->required();
  train->add_option("--out", out, "output checkpoint path")->required();
  train->add_option("--config", config, "key=value config file");
  train->add_option("--seed", seed, "rng seed");

  auto* sample = app.add_subcommand("sample", "generate molecules for each condition");
  sample->add_option("--condition", condition, "condition molecules (jsonl)")->required();
  sample->add_option("--shape-ckpt", shape_ckpt, "shape checkpoint")->required();
  sample->add_option("--diff-ckpt", diff_ckpt, "diffusion checkpoint")->required();
  sample->add_option("--n", n, "molecules per condition");
  sample->add_flag("--guide", guide, "enable shape guidance");
  sample->add_option("--gamma", gamma, "guidance distance threshold");
  sample->add_option("--stop-step", stop_step, "guidance stop step S");
  sample->add_option("--posterior-variance", posterior_variance,
                     "backward variance: as_printed or beta_tilde")
      ->check(CLI::IsMember({"as_printed", "beta_tilde"}));
  sample->add_option("--seed", seed, "rng seed");
  sample->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score generated molecules against conditions");
  eval->add_option("--condition", condition, "condition molecules (jsonl)")->required();
  eval->add_option("--generated", generated, "directory of generated molecules")->required();
  eval->add_option("--out", out, "output csv")->required();
  eval->add_option("--real", real_path, "reference set for bond-length JS (default: condition)");

  auto* toy = app.add_subcommand("toy-data", "write a synthetic template dataset");
  toy->add_option("--n", n, "molecule count");
  toy->add_option("--seed", seed, "rng seed");
  toy->add_option("--out", out, "output jsonl path")->required();

  auto* dump = app.add_subcommand("dump-schedule", "write the variance schedules as csv");
  dump->add_option("--T", T, "step count");
  dump->add_option("--out", out, "output csv")->required();

  app.add_subcommand("verify", "run the oracle suite, exit nonzero on failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain_shape(data, out, config, seed);
    if (train->parsed()) return cmd_train(data, shape_ckpt, out, config, seed);
    if (sample->parsed())
      return cmd_sample(condition, shape_ckpt, diff_ckpt, n, guide, gamma, stop_step,
                        posterior_variance, seed, out);
    if (eval->parsed()) return cmd_eval(condition, generated, out, real_path);
    if (toy->parsed()) return cmd_toy_data(n, seed, out);
    if (dump->parsed()) return cmd_dump_schedule(T, out);
    return cmd_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
}
