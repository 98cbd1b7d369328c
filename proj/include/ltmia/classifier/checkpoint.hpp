#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ltmia/classifier/adamw.hpp"
#include "ltmia/classifier/config.hpp"
#include "ltmia/classifier/network.hpp"

namespace ltmia {

inline constexpr std::string_view kCheckpointSchema = "ltmia-checkpoint-v1";

struct TrainingMeta {
  std::size_t epoch = 0;  // 1-based epoch the parameters come from; 0 = untrained
  double val_auc = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const TrainingMeta&) const = default;
};

struct ClassifierCheckpoint {
  ClassifierConfig config;
  InputNorm norm;
  std::vector<float> params;  // flat, in make_network(config) layout order
  TrainingMeta meta;
  std::optional<AdamState> optimizer;

  bool operator==(const ClassifierCheckpoint&) const = default;
};

/// Fresh checkpoint with initialized parameters and identity normalization.
ClassifierCheckpoint initial_checkpoint(const ClassifierConfig& cfg, std::uint64_t seed);

/// Header line (schema, config, normalization, metadata) followed by one line
/// per parameter tensor and, when present, the optimizer moments.
std::string encode_checkpoint(const ClassifierCheckpoint& ckpt);
ClassifierCheckpoint decode_checkpoint(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const ClassifierCheckpoint& ckpt);
ClassifierCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ltmia
