#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace ltmia {

enum class ArchKind { transformer, logreg_flat, mlp_flat, mlp_meanpool };

std::string_view to_string(ArchKind kind);
ArchKind parse_arch(std::string_view text);

struct ClassifierConfig {
  ArchKind arch = ArchKind::transformer;
  std::size_t input_dim = 154;
  std::size_t model_dim = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t head_hidden = 64;
  double dropout = 0.1;
  std::size_t max_positions = 128;
  /// Hidden width of the mlp_flat / mlp_meanpool ablations.
  std::size_t mlp_hidden = 256;

  bool operator==(const ClassifierConfig&) const = default;
};

/// Throws Error{invalid_argument}.
void validate(const ClassifierConfig& cfg);

enum class Sampling { uniform_over_combos, uniform_over_samples };

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 1024;
  std::size_t epochs = 30;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::uniform_over_combos;
  /// Batches per epoch; 0 means ceil(train size / batch size).
  std::size_t steps_per_epoch = 0;
  unsigned threads = 1;
};

void validate(const TrainConfig& cfg);

}  // namespace ltmia
