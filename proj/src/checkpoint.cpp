//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace shapediff {

using nlohmann::json;

namespace {
constexpr char kMagic[10] = {'S', 'H', 'A', 'P', 'E', 'D', 'I', 'F', 'F', '1'};
}

void save_raw_checkpoint(const RawCheckpoint& ckpt, const std::string& path) {
  json manifest = json::array();
  std::vector<float> payload;
  for (const auto& [name, tensor] : ckpt.tensors) {
    manifest.push_back({{"name", name},
                        {"rows", tensor.rows()},
                        {"cols", tensor.cols()},
                        {"offset", payload.size()}});
    payload.insert(payload.end(), tensor.data(), tensor.data() + tensor.size());
  }
  const std::string header = json{{"manifest", manifest}, {"metadata", ckpt.metadata}}.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

RawCheckpoint load_raw_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[10];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  const json j = json::parse(header);

  std::vector<float> payload;
  {
    std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    payload.resize(rest.size() / sizeof(float));
    std::memcpy(payload.data(), rest.data(), payload.size() * sizeof(float));
  }

  RawCheckpoint ckpt;
  ckpt.metadata = j.at("metadata");
  for (const json& entry : j.at("manifest")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + static_cast<std::size_t>(rows * cols) > payload.size())
      throw std::runtime_error("checkpoint payload out of bounds: " + path);
    Eigen::MatrixXf m(rows, cols);
    std::memcpy(m.data(), payload.data() + offset, sizeof(float) * rows * cols);
    ckpt.tensors[entry.at("name").get<std::string>()] = std::move(m);
  }
  return ckpt;
}

json predictor_config_to_json(const PredictorConfig& cfg) {
  return {{"dh", cfg.dh},           {"layers", cfg.layers},
          {"heads", cfg.heads},     {"neighbors", cfg.neighbors},
          {"dp", cfg.dp},           {"rbf_bins", cfg.rbf_bins},
          {"rbf_max", cfg.rbf_max}, {"time_dim", cfg.time_dim},
          {"num_classes", cfg.num_classes}, {"slope", cfg.slope}};
}

PredictorConfig predictor_config_from_json(const json& j) {
  PredictorConfig cfg;
  cfg.dh = j.at("dh");
  cfg.layers = j.at("layers");
  cfg.heads = j.at("heads");
  cfg.neighbors = j.at("neighbors");
  cfg.dp = j.at("dp");
  cfg.rbf_bins = j.at("rbf_bins");
  cfg.rbf_max = j.at("rbf_max");
  cfg.time_dim = j.at("time_dim");
  cfg.num_classes = j.at("num_classes");
  cfg.slope = j.at("slope");
  return cfg;
}

json se_config_to_json(const SeConfig& cfg) {
  return {{"dp", cfg.dp},
          {"hidden", cfg.hidden},
          {"enc_layers", cfg.enc_layers},
          {"knn", cfg.knn},
          {"mlp_hidden", cfg.mlp_hidden},
          {"mlp_layers", cfg.mlp_layers},
          {"slope", cfg.slope}};
}

SeConfig se_config_from_json(const json& j) {
  SeConfig cfg;
  cfg.dp = j.at("dp");
  cfg.hidden = j.at("hidden");
  cfg.enc_layers = j.at("enc_layers");
  cfg.knn = j.at("knn");
  cfg.mlp_hidden = j.at("mlp_hidden");
  cfg.mlp_layers = j.at("mlp_layers");
  cfg.slope = j.at("slope");
  return cfg;
}

json diff_train_config_to_json(const DiffTrainConfig& cfg) {
  return {{"model", predictor_config_to_json(cfg.model)},
          {"T", cfg.T},
          {"delta", cfg.delta},
          {"xi", cfg.xi},
          {"weight_scheme", cfg.weight_scheme},
          {"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"lr_decay", cfg.lr_decay},
          {"min_lr", cfg.min_lr},
          {"patience", cfg.patience},
          {"batch", cfg.batch},
          {"steps", cfg.steps},
          {"eval_interval", cfg.eval_interval},
          {"n_points", cfg.n_points}};
}

DiffTrainConfig diff_train_config_from_json(const json& j) {
  DiffTrainConfig cfg;
  cfg.model = predictor_config_from_json(j.at("model"));
  cfg.T = j.at("T");
  cfg.delta = j.at("delta");
  cfg.xi = j.at("xi");
  cfg.weight_scheme = j.at("weight_scheme");
  cfg.lr = j.at("lr");
  cfg.beta1 = j.at("beta1");
  cfg.beta2 = j.at("beta2");
  cfg.lr_decay = j.at("lr_decay");
  cfg.min_lr = j.at("min_lr");
  cfg.patience = j.at("patience");
  cfg.batch = j.at("batch");
  cfg.steps = j.at("steps");
  cfg.eval_interval = j.at("eval_interval");
  cfg.n_points = j.at("n_points");
  return cfg;
}

void save_shape_checkpoint(const ShapeAutoencoder<float>& ae, const std::string& path,
                           long step, std::uint64_t seed) {
  RawCheckpoint ckpt;
  for (const auto& [name, tensor] : ae.params.tensors) ckpt.tensors["param/" + name] = tensor;
  ckpt.metadata = {{"kind", "shape"},
                   {"config", se_config_to_json(ae.cfg)},
                   {"step", step},
                   {"seed", seed}};
  save_raw_checkpoint(ckpt, path);
}

ShapeAutoencoder<float> load_shape_checkpoint(const std::string& path) {
  const RawCheckpoint ckpt = load_raw_checkpoint(path);
  if (ckpt.metadata.at("kind") != "shape")
    throw std::runtime_error("not a shape checkpoint: " + path);
  ShapeAutoencoder<float> ae;
  ae.cfg = se_config_from_json(ckpt.metadata.at("config"));
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.rfind("param/", 0) == 0) ae.params.tensors[name.substr(6)] = tensor;
  }
  return ae;
}

void save_diffusion_checkpoint(const DiffTrainState<float>& state, const DiffTrainConfig& cfg,
                               const std::string& path) {
  RawCheckpoint ckpt;
  for (const auto& [name, t] : state.model.params.tensors) ckpt.tensors["param/" + name] = t;
  for (const auto& [name, t] : state.opt.m) ckpt.tensors["adam_m/" + name] = t;
  for (const auto& [name, t] : state.opt.v) ckpt.tensors["adam_v/" + name] = t;
  json meta = {{"kind", "diffusion"},
               {"config", diff_train_config_to_json(cfg)},
               {"step", state.step},
               {"seed", state.seed},
               {"lr", state.lr},
               {"stale", state.stale},
               {"adam_step", state.opt.step},
               {"atom_counts", state.atom_counts}};
  if (std::isfinite(state.best_val)) meta["best_val"] = state.best_val;
  ckpt.metadata = std::move(meta);
  save_raw_checkpoint(ckpt, path);
}

DiffTrainState<float> load_diffusion_checkpoint(const std::string& path,
                                                DiffTrainConfig* cfg_out) {
  const RawCheckpoint ckpt = load_raw_checkpoint(path);
  if (ckpt.metadata.at("kind") != "diffusion")
    throw std::runtime_error("not a diffusion checkpoint: " + path);
  const DiffTrainConfig cfg = diff_train_config_from_json(ckpt.metadata.at("config"));
  if (cfg_out != nullptr) *cfg_out = cfg;

  DiffTrainState<float> st;
  st.model.cfg = cfg.model;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("param/", 0) == 0) st.model.params.tensors[name.substr(6)] = t;
    else if (name.rfind("adam_m/", 0) == 0) st.opt.m[name.substr(7)] = t;
    else if (name.rfind("adam_v/", 0) == 0) st.opt.v[name.substr(7)] = t;
  }
  st.opt.beta1 = cfg.beta1;
  st.opt.beta2 = cfg.beta2;
  st.opt.step = ckpt.metadata.at("adam_step").get<long>();
  st.step = ckpt.metadata.at("step").get<long>();
  st.seed = ckpt.metadata.at("seed").get<std::uint64_t>();
  st.lr = ckpt.metadata.at("lr").get<double>();
  st.stale = ckpt.metadata.at("stale").get<int>();
  st.best_val = ckpt.metadata.contains("best_val")
                    ? ckpt.metadata.at("best_val").get<double>()
                    : std::numeric_limits<double>::infinity();
  st.atom_counts = ckpt.metadata.at("atom_counts").get<std::vector<int>>();
  return st;
}

}  // namespace shapediff
