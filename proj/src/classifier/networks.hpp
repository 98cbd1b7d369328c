#pragma once

// Concrete networks. Internal to the library; use make_network().

#include <Eigen/Dense>

#include "ltmia/classifier/network.hpp"
#include "ltmia/prng.hpp"

namespace ltmia::detail {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
Eigen::Map<const Mat<S>> view(std::span<const S> p, const ParamSpec& spec) {
  return Eigen::Map<const Mat<S>>(p.data() + spec.offset, static_cast<Eigen::Index>(spec.rows),
                                  static_cast<Eigen::Index>(spec.cols));
}

template <typename S>
Eigen::Map<Mat<S>> view(std::span<S> p, const ParamSpec& spec) {
  return Eigen::Map<Mat<S>>(p.data() + spec.offset, static_cast<Eigen::Index>(spec.rows),
                            static_cast<Eigen::Index>(spec.cols));
}

template <typename S>
Eigen::Map<const RowVec<S>> row_view(std::span<const S> p, const ParamSpec& spec) {
  return Eigen::Map<const RowVec<S>>(p.data() + spec.offset, static_cast<Eigen::Index>(spec.size()));
}

template <typename S>
Eigen::Map<RowVec<S>> row_view(std::span<S> p, const ParamSpec& spec) {
  return Eigen::Map<RowVec<S>>(p.data() + spec.offset, static_cast<Eigen::Index>(spec.size()));
}

/// Xavier-uniform weights, zero biases, unit layer-norm gains; each tensor
/// drawn from its own keyed stream.
template <typename S>
void default_init(const ParamLayout& layout, std::span<S> params, std::uint64_t seed);

template <typename S>
class TransformerNetwork final : public Network<S> {
 public:
  explicit TransformerNetwork(const ClassifierConfig& cfg);

  const ParamLayout& layout() const override { return layout_; }
  void init(std::span<S> params, std::uint64_t seed) const override;
  S forward(std::span<const S> params, std::span<const S> x, std::size_t length,
            const DropoutKey& dropout) const override;
  S forward_backward(std::span<const S> params, std::span<const S> x, std::size_t length,
                     const DropoutKey& dropout, const std::function<S(S)>& dloss,
                     std::span<S> grad) const override;

 private:
  struct LayerParams {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  struct LayerCache {
    Mat<S> h_in, q, k, v, ctx, u, f1, g;
    std::vector<Mat<S>> probs, attn_mask;
    Mat<S> out_mask, ff_mask;
    Mat<S> xhat1, xhat2;
    ColVec<S> istd1, istd2;
  };
  struct Cache {
    Mat<S> x, h_out;
    std::vector<LayerCache> layers;
    ColVec<S> alpha;
    RowVec<S> pooled, z1, a1;
  };

  S run(std::span<const S> p, std::span<const S> x, std::size_t length, const DropoutKey& dropout,
        Cache& c) const;

  ClassifierConfig cfg_;
  ParamLayout layout_;
  std::size_t w_in_, b_in_, query_, head_w1_, head_b1_, head_w2_, head_b2_;
  std::vector<LayerParams> layers_;
  Mat<S> pe_;
};

/// logreg_flat and mlp_flat: the flattened 128 x 154 vector through an
/// affine map (hidden = 0) or one rectified hidden layer.
template <typename S>
class FlatNetwork final : public Network<S> {
 public:
  FlatNetwork(const ClassifierConfig& cfg, std::size_t hidden);

  const ParamLayout& layout() const override { return layout_; }
  void init(std::span<S> params, std::uint64_t seed) const override;
  S forward(std::span<const S> params, std::span<const S> x, std::size_t length,
            const DropoutKey& dropout) const override;
  S forward_backward(std::span<const S> params, std::span<const S> x, std::size_t length,
                     const DropoutKey& dropout, const std::function<S(S)>& dloss,
                     std::span<S> grad) const override;

 private:
  ClassifierConfig cfg_;
  std::size_t hidden_;
  ParamLayout layout_;
  std::size_t w1_, b1_, w2_ = 0, b2_ = 0;
};

/// mlp_meanpool: mask-aware mean over positions, then one hidden layer.
template <typename S>
class MeanPoolNetwork final : public Network<S> {
 public:
  explicit MeanPoolNetwork(const ClassifierConfig& cfg);

  const ParamLayout& layout() const override { return layout_; }
  void init(std::span<S> params, std::uint64_t seed) const override;
  S forward(std::span<const S> params, std::span<const S> x, std::size_t length,
            const DropoutKey& dropout) const override;
  S forward_backward(std::span<const S> params, std::span<const S> x, std::size_t length,
                     const DropoutKey& dropout, const std::function<S(S)>& dloss,
                     std::span<S> grad) const override;

 private:
  ClassifierConfig cfg_;
  ParamLayout layout_;
  std::size_t w1_, b1_, w2_, b2_;
};

}  // namespace ltmia::detail
