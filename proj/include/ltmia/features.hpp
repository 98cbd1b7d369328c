#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltmia/trace.hpp"

namespace ltmia {

inline constexpr std::size_t kChannels = 154;
inline constexpr std::string_view kFeatureLayout = "ltmia-features-v1";

/// Canonical channel assignment. Changing anything here requires bumping
/// kFeatureLayout.
namespace channel {
// target-only
inline constexpr std::size_t loss_tgt = 0;
inline constexpr std::size_t tgt_top20 = 1;
inline constexpr std::size_t tgt_bot20 = 21;
inline constexpr std::size_t gt_logit_tgt = 41;
inline constexpr std::size_t gt_rank_tgt = 42;
inline constexpr std::size_t mean_loss_tgt = 43;
inline constexpr std::size_t std_loss_tgt = 44;
// reference-only
inline constexpr std::size_t loss_ref = 45;
inline constexpr std::size_t ref_of_tgt_top20 = 46;
inline constexpr std::size_t ref_of_tgt_bot20 = 66;
inline constexpr std::size_t gt_logit_ref = 86;
inline constexpr std::size_t gt_rank_ref = 87;
inline constexpr std::size_t mean_loss_ref = 88;
inline constexpr std::size_t std_loss_ref = 89;
// comparison
inline constexpr std::size_t loss_diff = 90;
inline constexpr std::size_t mean_loss_diff = 91;
inline constexpr std::size_t std_loss_diff = 92;
inline constexpr std::size_t total_llr = 93;
inline constexpr std::size_t rank_in_ref_of_tgt_top20 = 94;
inline constexpr std::size_t rank_in_tgt_of_ref_top20 = 114;
inline constexpr std::size_t rank_in_ref_of_tgt_bot20 = 134;
}  // namespace channel

struct ChannelRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t c) const noexcept { return c >= begin && c < end; }
};

struct FeatureGroup {
  std::string name;
  std::vector<std::size_t> channels;
};

/// (target-only, reference-only, comparison) = [0,45), [45,90), [90,154).
std::array<ChannelRange, 3> feature_group_slices();

/// The three slices as named groups, in the same order.
std::vector<FeatureGroup> default_feature_groups();

/// Logical 128 x 154 matrix plus mask. Only the unmasked prefix of `length`
/// rows is stored; rows at or beyond `length` read as zero.
struct FeatureTensor {
  std::size_t length = 0;
  std::vector<float> values;  // length x kChannels, row-major

  bool mask(std::size_t t) const noexcept { return t < length; }
  float at(std::size_t t, std::size_t c) const noexcept {
    return t < length ? values[t * kChannels + c] : 0.0f;
  }
  std::span<const float> row(std::size_t t) const {
    return std::span<const float>(values).subspan(t * kChannels, kChannels);
  }
  std::span<float> row(std::size_t t) { return std::span<float>(values).subspan(t * kChannels, kChannels); }

  /// Full kMaxPositions x kChannels matrix with zeroed masked rows.
  std::vector<float> dense() const;

  bool operator==(const FeatureTensor&) const = default;
};

/// Throws Error{empty_sequence} for T = 0 and Error{vocab_too_small} for
/// V < 40.
FeatureTensor extract_features(const LogitTrace& record);

/// Featurized dataset used for classifier training and scoring.
struct FeatureSample {
  std::string sample_id;
  Label label = Label::unknown;
  std::size_t combo = 0;  // index into FeatureSet::combos
  FeatureTensor x;
};

struct FeatureSet {
  std::vector<ComboKey> combos;
  std::vector<FeatureSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  FeatureSet subset(std::span<const std::size_t> indices) const;
};

FeatureSet extract_feature_set(const TraceDataset& ds, unsigned threads = 1);

/// Appends `more` to `into`, merging combo tables.
void append_feature_set(FeatureSet& into, const FeatureSet& more);

// Feature dump envelope: one JSON object per line with keys combo, label,
// layout, mask_length, sample_id, values (base64 float32, 128 x 154).
std::string encode_feature_line(const FeatureSample& sample, const ComboKey& combo);
FeatureSample decode_feature_line(std::string_view line, ComboKey* combo);

void write_feature_set(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet load_feature_set(std::span<const std::filesystem::path> paths);

}  // namespace ltmia
