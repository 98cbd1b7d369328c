#pragma once

#include <span>
#include <vector>

namespace ltmia {

/// A score with a binary membership label (true = member).
struct LabeledScore {
  double score = 0.0;
  bool member = false;
};

/// P(member > nonmember) + 0.5 P(tie), via the rank-sum statistic.
/// Throws Error{single_class} unless both classes are present.
double roc_auc(std::span<const LabeledScore> scores);

/// Fraction of members at or above the smallest observed score whose
/// nonmember exceedance fraction is <= fpr_target (no interpolation).
/// Returns 0 when no observed score reaches the target.
double tpr_at_fpr(std::span<const LabeledScore> scores, double fpr_target);

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double statistic = 0.0;  // min(W+, W-)
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;     // non-zero pairs used
};

/// Signed-rank test over paired differences. Zeros are dropped, tied |d|
/// get average ranks, p uses the normal approximation with tie and
/// continuity corrections. Needs at least 5 non-zero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences);

}  // namespace ltmia
