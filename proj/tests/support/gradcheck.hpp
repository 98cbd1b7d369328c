#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltmia/classifier/config.hpp"

namespace gradcheck {

/// Tiny architecture used for finite-difference checks.
ltmia::ClassifierConfig tiny_config(ltmia::ArchKind arch);

struct Mismatch {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct Result {
  std::size_t checked = 0;
  double worst_rel = 0.0;
  std::vector<Mismatch> failures;
};

/// Central differences in double over every parameter of `cfg` on a fixed
/// three-sample batch (lengths 4, 2, 3; dropout active).
/// rel = |a - n| / max(|a|, |n|, 1e-8); pairs with |a - n| <= 1e-10 count as equal.
Result check(const ltmia::ClassifierConfig& cfg, std::uint64_t seed, double h = 1e-3, double tol = 1e-4);

}  // namespace gradcheck
