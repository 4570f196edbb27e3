#pragma once

#include <filesystem>
#include <string>

#include "wxadapt/io/kv_config.hpp"
#include "wxadapt/models/network.hpp"

namespace wxa::models {

struct CheckpointMeta {
  long iteration = 0;
  std::string rng_state;
  io::KeyValueConfig train_config;
};

/// "WXA1" checkpoint: magic, u32 LE header length, JSON header (model config,
/// iteration, rng state, training config, tensor table), then every
/// parameter followed by every batch-norm buffer as raw little-endian f32, in
/// declaration order.
std::vector<std::uint8_t> encode_checkpoint(Detector<float>& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, Detector<float>& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Detector<float> model;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wxa::models
