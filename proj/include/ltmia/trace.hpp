#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltmia {

inline constexpr std::string_view kTraceSchema = "ltmia-trace-v1";
inline constexpr std::size_t kMaxPositions = 128;
inline constexpr std::size_t kTopK = 20;
inline constexpr std::uint32_t kMinVocab = 40;

enum class Label { member, nonmember, unknown };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

/// Per-sample sufficient statistics captured from a (target, reference)
/// model pair. Prediction position t (0-based index i = t - 1 in the arrays
/// below) predicts token_ids[t] from token_ids[0..t).
///
/// 20-wide blocks are stored row-major, positions x kTopK.
struct LogitTrace {
  std::string schema_version{kTraceSchema};
  std::string sample_id;
  Label label = Label::unknown;
  std::string target_model_id;
  std::string reference_model_id;
  std::string dataset_id;
  std::uint32_t vocab_size = 0;
  std::string text;
  std::vector<std::uint32_t> token_ids;

  std::vector<float> gt_logprob_tgt;
  std::vector<float> gt_logprob_ref;
  std::vector<float> gt_logit_tgt;
  std::vector<float> gt_logit_ref;
  std::vector<std::uint32_t> gt_rank_tgt;
  std::vector<std::uint32_t> gt_rank_ref;

  std::vector<std::uint32_t> tgt_top20_ids;
  std::vector<float> tgt_top20_logits;
  std::vector<std::uint32_t> tgt_bot20_ids;
  std::vector<float> tgt_bot20_logits;
  std::vector<float> ref_logits_of_tgt_top20;
  std::vector<float> ref_logits_of_tgt_bot20;
  std::vector<std::uint32_t> ref_top20_ids;
  std::vector<float> ref_top20_logits;
  std::vector<float> tgt_logits_of_ref_top20;
  std::vector<std::uint32_t> rank_in_ref_of_tgt_top20;
  std::vector<std::uint32_t> rank_in_ref_of_tgt_bot20;
  std::vector<std::uint32_t> rank_in_tgt_of_ref_top20;

  std::vector<float> mu_logprob_tgt;
  std::vector<float> sigma_logprob_tgt;

  /// Number of prediction positions T.
  std::size_t positions() const noexcept {
    return token_ids.empty() ? 0 : token_ids.size() - 1;
  }

  /// Allocates every per-position array for T positions (zero-filled).
  void resize(std::size_t positions);

  bool operator==(const LogitTrace&) const = default;
};

/// Checks every LogitTrace invariant; throws Error naming the field and
/// position of the first violation.
void validate(const LogitTrace& record);

/// One JSON object, canonical (alphabetical) key order, no trailing newline.
std::string encode_trace(const LogitTrace& record);

/// Parses and fully validates one encoded record.
LogitTrace decode_trace(std::string_view line);

struct ComboKey {
  std::string target_model_id;
  std::string dataset_id;

  std::string str() const { return target_model_id + "/" + dataset_id; }
  auto operator<=>(const ComboKey&) const = default;
};

inline ComboKey combo_of(const LogitTrace& r) { return {r.target_model_id, r.dataset_id}; }

/// Immutable collection of validated records with a combination index.
class TraceDataset {
 public:
  TraceDataset() = default;
  /// Throws Error{duplicate_id} on repeated sample ids.
  explicit TraceDataset(std::vector<LogitTrace> records);

  const std::vector<LogitTrace>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const LogitTrace& operator[](std::size_t i) const { return records_[i]; }

  const std::map<ComboKey, std::vector<std::size_t>>& combos() const noexcept { return combos_; }

  /// New dataset holding the given records, in the given order.
  TraceDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<LogitTrace> records_;
  std::map<ComboKey, std::vector<std::size_t>> combos_;
};

using RecordFilter = std::function<bool(const LogitTrace&)>;

struct LoadOptions {
  RecordFilter filter;
  /// Skip undecodable lines instead of failing. Off by default.
  bool lenient = false;
};

struct LoadStats {
  std::size_t lines = 0;
  std::size_t skipped = 0;
  std::size_t filtered_out = 0;
};

TraceDataset load_dataset(std::span<const std::filesystem::path> paths,
                          const LoadOptions& options = {}, LoadStats* stats = nullptr);

void write_traces(const std::filesystem::path& path, std::span<const LogitTrace> records);

struct SplitFractions {
  double train = 0.9;
  double val = 0.05;
  double test = 0.05;
};

struct DatasetSplit {
  TraceDataset train;
  TraceDataset val;
  TraceDataset test;
};

/// Index-level stratified partition by (combo, label). Each returned index
/// list is in ascending (dataset) order. Every part of every cell gets at
/// least one record.
std::vector<std::vector<std::size_t>> stratified_partition(const TraceDataset& ds,
                                                           std::span<const double> fractions,
                                                           std::uint64_t seed);

DatasetSplit split_dataset(const TraceDataset& ds, const SplitFractions& fractions,
                           std::uint64_t seed);

/// Parses "0.9,0.05,0.05".
SplitFractions parse_split(std::string_view text);

}  // namespace ltmia
