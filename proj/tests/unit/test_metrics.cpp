#include <doctest.h>

#include <cmath>
#include <random>

#include "ltmia/error.hpp"
#include "ltmia/metrics.hpp"
#include "oracles.hpp"

using namespace ltmia;

namespace {

std::vector<LabeledScore> join(const std::vector<double>& m, const std::vector<double>& n) {
  std::vector<LabeledScore> v;
  for (double x : m) v.push_back({x, true});
  for (double x : n) v.push_back({x, false});
  return v;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(roc_auc(join({0.9, 0.8}, {0.2, 0.1})) == 1.0);
  CHECK(roc_auc(join({1, 1, 1}, {1, 1})) == 0.5);
  CHECK(roc_auc(join({3, 1}, {2, 0})) == 0.75);
  CHECK_THROWS_AS(roc_auc(join({1, 2}, {})), Error);
}

TEST_CASE("auc equals brute-force pair counting on random instances") {
  std::mt19937_64 gen(2024);
  std::size_t mismatched = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nm = 1 + gen() % 100, nn = 1 + gen() % 100;
    const int levels = 1 + static_cast<int>(gen() % 30);  // few levels force ties
    std::vector<double> m(nm), n(nn);
    for (auto& x : m) x = static_cast<double>(gen() % levels) * 0.1;
    for (auto& x : n) x = static_cast<double>(gen() % levels) * 0.1;
    const auto v = join(m, n);
    mismatched += roc_auc(v) != oracle::brute_auc(m, n);
    std::vector<LabeledScore> flipped;
    for (const auto& s : v) flipped.push_back({-s.score, !s.member});
    mismatched += roc_auc(flipped) != roc_auc(v);
  }
  CHECK(mismatched == 0);
}

TEST_CASE("tpr at fpr examples") {
  CHECK(tpr_at_fpr(join({0.9, 0.8}, {0.2, 0.1}), 0.0) == 1.0);
  CHECK(tpr_at_fpr(join({0.9, 0.4}, {0.5, 0.1}), 0.0) == 0.5);
  CHECK_THROWS_AS(tpr_at_fpr(join({0.9}, {0.1}), 1.0), Error);
  CHECK_THROWS_AS(tpr_at_fpr(join({0.9}, {}), 0.1), Error);
}

TEST_CASE("tpr at fpr matches threshold enumeration and is monotone") {
  std::mt19937_64 gen(7);
  std::size_t mismatched = 0, non_monotone = 0;
  const double targets[] = {0.0, 0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 0.9};
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t nm = 1 + gen() % 120, nn = 1 + gen() % 120;
    const int levels = 2 + static_cast<int>(gen() % 50);
    std::vector<double> m(nm), n(nn);
    for (auto& x : m) x = static_cast<double>(gen() % levels);
    for (auto& x : n) x = static_cast<double>(gen() % levels) - 3.0;
    const auto v = join(m, n);
    double prev = 2.0;
    for (int k = 7; k >= 0; --k) {
      const double got = tpr_at_fpr(v, targets[k]);
      mismatched += got != oracle::enumerate_tpr(m, n, targets[k]);
      non_monotone += got > prev;
      prev = got;
    }
  }
  CHECK(mismatched == 0);
  CHECK(non_monotone == 0);
}

TEST_CASE("wilcoxon examples") {
  const std::vector<double> sym{1, -1, 2, -2, 3, -3};
  const auto r = wilcoxon_signed_rank(sym);
  CHECK(r.w_plus == r.w_minus);
  CHECK(r.p_value > 0.99);

  std::vector<double> pos(12);
  for (int i = 0; i < 12; ++i) pos[i] = 0.01 * (i + 1);
  const auto p = wilcoxon_signed_rank(pos);
  CHECK(p.w_minus == 0.0);
  CHECK(p.statistic == 0.0);
  CHECK(p.p_value < 0.01);
  CHECK(oracle::exact_wilcoxon(pos).p_value < 0.01);

  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>(8, 0.0)), Error);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2, 0, 0, -1}), Error);
}

TEST_CASE("wilcoxon agrees with exact enumeration for n <= 12") {
  // Rank sums must agree exactly. The p-value is a normal approximation: over
  // every attainable statistic without ties the largest gap to the exact
  // p-value is 0.036 (n = 6); heavily tied inputs reach 0.18 (n = 5).
  std::mt19937_64 gen(99);
  double worst_untied = 0.0, worst_tied = 0.0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 5 + gen() % 8;
    const bool tied = trial % 2 == 0;
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (tied) {
        d[i] = static_cast<double>(static_cast<int>(gen() % 13) - 5) + 0.5;
      } else {
        d[i] = (static_cast<double>(gen() % 1000000) + 1.0 + 1e6 * static_cast<double>(i)) * (gen() % 3 ? 1.0 : -1.0);
      }
    }
    const auto got = wilcoxon_signed_rank(d);
    const auto want = oracle::exact_wilcoxon(d);
    CHECK(got.w_plus == want.w_plus);
    CHECK(got.w_minus == want.w_minus);
    CHECK(got.statistic == std::min(want.w_plus, want.w_minus));
    double& worst = tied ? worst_tied : worst_untied;
    worst = std::max(worst, std::abs(got.p_value - want.p_value));
  }
  MESSAGE("largest |p_normal - p_exact|: untied " << worst_untied << ", tied " << worst_tied);
  CHECK(worst_untied <= 0.04);
  CHECK(worst_tied <= 0.2);
}
