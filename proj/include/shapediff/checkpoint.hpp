//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_CHECKPOINT_HPP_
#define SHAPEDIFF_CHECKPOINT_HPP_

#include <map>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "shapediff/shape_autoencoder.hpp"
#include "shapediff/training.hpp"

namespace shapediff {

// Binary layout:
//   bytes 0..9   magic "SHAPEDIFF1"
//   u32 LE       JSON header length
//   header       {"manifest":[{"name","rows","cols","offset"}...],"metadata":{...}}
//   payload      float32 little-endian values, column-major, offsets in floats
//
// Training runs in f32, so save/load round-trips every tensor bit-for-bit.

struct RawCheckpoint {
  std::map<std::string, Eigen::MatrixXf> tensors;
  nlohmann::json metadata;
};

void save_raw_checkpoint(const RawCheckpoint& ckpt, const std::string& path);
RawCheckpoint load_raw_checkpoint(const std::string& path);

void save_shape_checkpoint(const ShapeAutoencoder<float>& ae, const std::string& path,
                           long step = 0, std::uint64_t seed = 0);
ShapeAutoencoder<float> load_shape_checkpoint(const std::string& path);

void save_diffusion_checkpoint(const DiffTrainState<float>& state, const DiffTrainConfig& cfg,
                               const std::string& path);
/// Restores the full training state (parameters, optimizer moments, step, lr
/// schedule position, atom-count pool) so training resumes bit-for-bit.
DiffTrainState<float> load_diffusion_checkpoint(const std::string& path, DiffTrainConfig* cfg_out);

nlohmann::json predictor_config_to_json(const PredictorConfig& cfg);
PredictorConfig predictor_config_from_json(const nlohmann::json& j);
nlohmann::json se_config_to_json(const SeConfig& cfg);
SeConfig se_config_from_json(const nlohmann::json& j);
nlohmann::json diff_train_config_to_json(const DiffTrainConfig& cfg);
DiffTrainConfig diff_train_config_from_json(const nlohmann::json& j);

}  // namespace shapediff

#endif  // SHAPEDIFF_CHECKPOINT_HPP_
