#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltmia/classifier/config.hpp"
#include "ltmia/classifier/params.hpp"

namespace ltmia {

/// First/second moment estimates, stored in the parameter layout.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// AdamW with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// where the decay term only touches tensors flagged `decay` in the layout.
class AdamW {
 public:
  AdamW(const ParamLayout& layout, const TrainConfig& cfg);
  AdamW(const ParamLayout& layout, const TrainConfig& cfg, AdamState state);

  void step(std::span<float> params, std::span<const double> grad);

  const AdamState& state() const noexcept { return state_; }

 private:
  std::vector<std::uint8_t> decay_;  // per element
  TrainConfig cfg_;
  AdamState state_;
};

}  // namespace ltmia
