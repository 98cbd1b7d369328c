#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ltmia/attacks.hpp"
#include "ltmia/classifier/trainer.hpp"
#include "ltmia/features.hpp"
#include "ltmia/metrics.hpp"

namespace ltmia {

inline constexpr std::string_view kReportSchema = "ltmia-report-v1";

// ---- report -------------------------------------------------------------

struct ComboMetrics {
  Method method = Method::loss;
  ComboKey combo;
  std::string family;
  double auc = 0.0;
  double tpr_at_fpr_1pct = 0.0;
  double tpr_at_fpr_01pct = 0.0;
  std::size_t n_members = 0;
  std::size_t n_nonmembers = 0;
};

struct FamilyMetrics {
  Method method = Method::loss;
  std::string family;
  std::size_t combos = 0;
  double mean_auc = 0.0;
  double mean_tpr_at_fpr_1pct = 0.0;
  double mean_tpr_at_fpr_01pct = 0.0;
};

struct PairedTest {
  Method a = Method::loss;
  Method b = Method::loss;
  std::size_t shared_combos = 0;
  /// Empty when fewer than five non-zero paired differences exist.
  std::optional<WilcoxonResult> wilcoxon;
  double mean_auc_difference = 0.0;  // mean of auc(a) - auc(b)
};

struct EvalReport {
  std::vector<ComboMetrics> rows;  // sorted by (method, combo)
  std::vector<FamilyMetrics> families;
  std::vector<PairedTest> pairs;
};

/// Maps a combination to its family name; the default puts everything in
/// family "all".
using FamilyOf = std::function<std::string(const ComboKey&)>;

/// Throws Error{single_class} for a (method, combo) cell lacking a label
/// and Error{invalid_argument} for unlabeled scores.
EvalReport build_report(const std::vector<AttackScore>& scores, const FamilyOf& family_of = {});

std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);

// ---- permutation importance --------------------------------------------

struct GroupImportance {
  std::string name;
  std::size_t channels = 0;
  double mean_drop = 0.0;
  std::vector<double> drops;  // one per repeat
};

struct ImportanceReport {
  double baseline_auc = 0.0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  std::vector<GroupImportance> groups;
};

/// Permutation of [0, n) for (group, repeat). The default draws a seeded
/// shuffle; tests inject the identity.
using PermutationProvider =
    std::function<std::vector<std::size_t>(std::size_t n, std::size_t group, std::size_t repeat)>;

/// Sample i takes the group's channels from sample perm[i] at each of its own
/// unmasked positions (zero where perm[i] is shorter); masks are untouched.
FeatureSet permute_group(const FeatureSet& set, const FeatureGroup& group, std::span<const std::size_t> perm);

ImportanceReport permutation_importance(const ClassifierCheckpoint& ckpt, const FeatureSet& eval_set,
                                        const std::vector<FeatureGroup>& groups, std::size_t repeats,
                                        std::uint64_t seed, unsigned threads = 1,
                                        const PermutationProvider& permutation = {});

std::string importance_json(const ImportanceReport& report);

// ---- diversity ablation -------------------------------------------------

struct DiversityConfig {
  std::size_t total_samples = 1600;        // training samples per run, split evenly over combos
  std::vector<std::size_t> combo_counts{1, 4, 8};
  std::size_t test_per_combo = 200;        // in-combo held-out samples ("train AUC")
  std::size_t val_total = 200;             // checkpoint-selection samples, split over combos
  TrainConfig train;
  ClassifierConfig classifier;
  std::uint64_t seed = 0;
};

struct DiversityRow {
  std::size_t combos = 0;
  std::size_t samples_per_combo = 0;
  double train_auc = 0.0;  // held-out samples of the training combinations
  double eval_auc = 0.0;   // held-out combinations
  double gap() const { return train_auc - eval_auc; }
};

/// Combination subsets are nested: the C-combo run uses the first C entries
/// of one seeded ordering of the combinations in `pool`. Samples are label
/// balanced. Throws Error{insufficient_data} when a cell is too small.
std::vector<DiversityRow> diversity_ablation(const FeatureSet& pool, const FeatureSet& heldout,
                                             const DiversityConfig& cfg, unsigned threads = 1);

std::string diversity_json(const std::vector<DiversityRow>& rows);

}  // namespace ltmia
