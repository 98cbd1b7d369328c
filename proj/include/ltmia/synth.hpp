#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltmia/trace.hpp"

namespace ltmia {

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Generator settings. Member records get `delta` added to the target logit
/// of the ground-truth token; each combination carries its own logit scale,
/// offset and noise multiplier drawn from the artifact ranges.
struct SynthConfig {
  std::uint32_t vocab_size = 1000;
  std::size_t positions = 64;
  std::size_t n_members = 1000;
  std::size_t n_nonmembers = 1000;
  double delta = 0.0;
  double noise_sigma = 0.5;
  double base_scale = 2.0;
  UniformRange scale_range{0.7, 1.3};
  UniformRange offset_range{-1.0, 1.0};
  UniformRange noise_range{0.8, 1.2};
  /// The member boost applies only at positions i >= floor(fraction * T).
  double signal_start_fraction = 0.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct ComboArtifacts {
  double scale = 1.0;
  double offset = 0.0;
  double noise_multiplier = 1.0;
};

ComboArtifacts draw_artifacts(const SynthConfig& cfg, std::size_t combo_id);

std::string synth_model_id(std::size_t combo_id);
inline constexpr const char* kSynthDatasetId = "synth-text";
inline constexpr const char* kSynthReferenceId = "synth-reference";

struct SynthSample {
  LogitTrace record;
  // Full logit matrices (T x V, row-major); filled only on request.
  std::vector<float> tgt_logits;
  std::vector<float> ref_logits;
};

/// Sample `index` of combination `combo_id` (members first, then
/// nonmembers). Pure function of (cfg, combo_id, index).
SynthSample generate_sample(const SynthConfig& cfg, std::size_t combo_id, std::size_t index,
                            bool keep_logits = false);

std::vector<LogitTrace> generate_combo(const SynthConfig& cfg, std::size_t combo_id,
                                       unsigned threads = 1);

struct SynthSuite {
  TraceDataset train;    // combos 0 .. n_combos-1
  TraceDataset heldout;  // combos n_combos .. n_combos+heldout-1
};

SynthSuite generate_suite(const SynthConfig& cfg, std::size_t n_combos, std::size_t heldout_combos,
                          unsigned threads = 1);

/// Printable rendering of token ids used as the sample text.
std::string render_tokens(const std::vector<std::uint32_t>& token_ids);

}  // namespace ltmia
