#include "ltmia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltmia/error.hpp"

namespace ltmia {

namespace {

void require_both_classes(std::size_t members, std::size_t nonmembers) {
  if (members == 0 || nonmembers == 0) {
    throw Error(ErrorKind::single_class, "metric needs at least one member and one nonmember");
  }
}

}  // namespace

double roc_auc(std::span<const LabeledScore> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });

  // Rank sums are kept doubled so tie averages stay integral.
  std::uint64_t member_rank_sum2 = 0;
  std::size_t members = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]].score == scores[order[i]].score) ++j;
    const std::uint64_t avg_rank2 = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (scores[order[k]].member) {
        member_rank_sum2 += avg_rank2;
        ++members;
      }
    }
    i = j;
  }
  const std::size_t nonmembers = scores.size() - members;
  require_both_classes(members, nonmembers);
  // 2U = 2R - n1(n1+1); AUC = U / (n1 n0)
  const std::uint64_t u2 = member_rank_sum2 - static_cast<std::uint64_t>(members) * (members + 1);
  return 0.5 * static_cast<double>(u2) /
         (static_cast<double>(members) * static_cast<double>(nonmembers));
}

double tpr_at_fpr(std::span<const LabeledScore> scores, double fpr_target) {
  if (!(fpr_target >= 0.0 && fpr_target < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "fpr_target must lie in [0, 1)");
  }
  std::vector<double> members, nonmembers;
  for (const auto& s : scores) (s.member ? members : nonmembers).push_back(s.score);
  require_both_classes(members.size(), nonmembers.size());
  std::sort(members.begin(), members.end());
  std::sort(nonmembers.begin(), nonmembers.end());

  const auto allowed = static_cast<std::size_t>(
      std::floor(fpr_target * static_cast<double>(nonmembers.size()) + 1e-9));
  auto count_at_or_above = [](const std::vector<double>& v, double tau) {
    return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), tau));
  };

  // The exceedance count is non-increasing in tau, so the smallest qualifying
  // candidate is found by scanning candidates in ascending order.
  std::vector<double> candidates;
  candidates.reserve(scores.size());
  for (const auto& s : scores) candidates.push_back(s.score);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const auto it = std::partition_point(candidates.begin(), candidates.end(), [&](double tau) {
    return count_at_or_above(nonmembers, tau) > allowed;
  });
  if (it == candidates.end()) return 0.0;
  return static_cast<double>(count_at_or_above(members, *it)) / static_cast<double>(members.size());
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
  std::vector<double> d;
  for (double x : differences) {
    if (x != 0.0) d.push_back(x);
  }
  const std::size_t n = d.size();
  if (n < 5) {
    throw Error(ErrorKind::insufficient_data,
                "Wilcoxon test needs at least 5 non-zero differences, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

  WilcoxonResult res;
  res.n = n;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    const double rank = 0.5 * static_cast<double>((i + 1) + j);
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) (d[order[k]] > 0 ? res.w_plus : res.w_minus) += rank;
    i = j;
  }
  res.statistic = std::min(res.w_plus, res.w_minus);
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double dev = std::max(0.0, std::abs(res.w_plus - mean) - 0.5);
  res.z = var > 0.0 ? dev / std::sqrt(var) : 0.0;
  res.p_value = std::min(1.0, std::erfc(res.z / std::sqrt(2.0)));
  return res;
}

}  // namespace ltmia
