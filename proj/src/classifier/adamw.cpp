#include "ltmia/classifier/adamw.hpp"

#include <cmath>

#include "ltmia/error.hpp"

namespace ltmia {

AdamW::AdamW(const ParamLayout& layout, const TrainConfig& cfg)
    : AdamW(layout, cfg, AdamState{std::vector<float>(layout.total(), 0.0f),
                                   std::vector<float>(layout.total(), 0.0f), 0}) {}

AdamW::AdamW(const ParamLayout& layout, const TrainConfig& cfg, AdamState state)
    : decay_(layout.total(), 0), cfg_(cfg), state_(std::move(state)) {
  validate(cfg_);
  if (state_.m.size() != layout.total() || state_.v.size() != layout.total()) {
    throw Error(ErrorKind::shape_mismatch, "optimizer state does not match the parameter layout");
  }
  for (const auto& spec : layout.specs()) {
    if (!spec.decay) continue;
    std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(spec.offset), spec.size(), std::uint8_t{1});
  }
}

void AdamW::step(std::span<float> params, std::span<const double> grad) {
  const std::size_t n = decay_.size();
  if (params.size() != n || grad.size() != n) {
    throw Error(ErrorKind::shape_mismatch, "parameter/gradient size does not match the optimizer");
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  const double lr = cfg_.learning_rate;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grad[k];
    const double m = cfg_.beta1 * state_.m[k] + (1.0 - cfg_.beta1) * g;
    const double v = cfg_.beta2 * state_.v[k] + (1.0 - cfg_.beta2) * g * g;
    state_.m[k] = static_cast<float>(m);
    state_.v[k] = static_cast<float>(v);
    double p = params[k];
    if (decay_[k]) p -= lr * cfg_.weight_decay * p;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
    params[k] = static_cast<float>(p);
  }
}

}  // namespace ltmia
