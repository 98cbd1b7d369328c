#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ltmia/classifier/config.hpp"
#include "ltmia/classifier/params.hpp"
#include "ltmia/features.hpp"

namespace ltmia {

/// Identifies the dropout masks of one sample in one optimizer step. When
/// `active` is false (evaluation) no masks are drawn.
struct DropoutKey {
  bool active = false;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t slot = 0;
};

/// Fixed per-channel affine standardization applied to unmasked rows before
/// the learnable network: x' = (x - shift) * scale. Not trained.
struct InputNorm {
  std::vector<float> shift;
  std::vector<float> scale;

  static InputNorm identity(std::size_t channels);
  /// Mean and inverse standard deviation over unmasked rows of `set`.
  static InputNorm fit(const FeatureSet& set);
  bool operator==(const InputNorm&) const = default;
};

/// Scalar-generic membership network producing one logit per sample.
/// Instantiated for float (training, scoring) and double (gradient checks).
template <typename S>
class Network {
 public:
  virtual ~Network() = default;

  virtual const ParamLayout& layout() const = 0;
  virtual void init(std::span<S> params, std::uint64_t seed) const = 0;

  /// Logit for one (already standardized) sample of `length` rows.
  virtual S forward(std::span<const S> params, std::span<const S> x, std::size_t length,
                    const DropoutKey& dropout) const = 0;

  /// Runs forward, asks `dloss` for dL/dlogit, then adds dL/dparams into
  /// `grad`. Returns the logit.
  virtual S forward_backward(std::span<const S> params, std::span<const S> x, std::size_t length,
                             const DropoutKey& dropout, const std::function<S(S)>& dloss,
                             std::span<S> grad) const = 0;
};

template <typename S>
std::unique_ptr<Network<S>> make_network(const ClassifierConfig& cfg);

/// Learnable parameter count of the architecture described by `cfg`.
std::size_t parameter_count(const ClassifierConfig& cfg);

/// Sinusoidal table, max_positions x d row-major:
/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
std::vector<double> positional_encoding(std::size_t max_positions, std::size_t d);

/// Standardized copy of a feature tensor's unmasked rows.
template <typename S>
std::vector<S> standardize(const FeatureTensor& x, const InputNorm& norm);

/// Mean binary cross-entropy over a batch and its gradient (accumulated in
/// 64-bit, fixed-order reduction independent of `threads`). `grad` is
/// overwritten. labels: 1 = member.
template <typename S>
double batch_loss_and_grad(const Network<S>& net, std::span<const S> params,
                           std::span<const std::vector<S>* const> inputs,
                           std::span<const std::size_t> lengths, std::span<const int> labels,
                           std::span<const DropoutKey> dropout, std::span<double> grad,
                           unsigned threads = 1);

/// Mean BCE without gradients (used by finite-difference checks).
template <typename S>
double batch_loss(const Network<S>& net, std::span<const S> params,
                  std::span<const std::vector<S>* const> inputs, std::span<const std::size_t> lengths,
                  std::span<const int> labels, std::span<const DropoutKey> dropout);

/// Numerically stable log(1 + exp(z)) - y z.
double bce_with_logit(double logit, int label);

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace ltmia
