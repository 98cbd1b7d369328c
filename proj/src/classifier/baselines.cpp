// Ablation classifiers: flattened logistic regression / MLP and the
// mean-pooled MLP.

#include "ltmia/error.hpp"
#include "networks.hpp"

namespace ltmia::detail {

namespace {

void check_input(std::size_t size, std::size_t length, const ClassifierConfig& cfg) {
  if (length == 0 || length > cfg.max_positions || size != length * cfg.input_dim) {
    throw Error(ErrorKind::shape_mismatch, "input does not match length x input_dim");
  }
}

// Mean over the unmasked rows, accumulated in double so that (for realistic
// magnitudes) the result does not depend on row order.
template <typename S>
RowVec<S> masked_mean(std::span<const S> x, std::size_t length, std::size_t dim) {
  const Eigen::Map<const Mat<S>> rows(x.data(), static_cast<Eigen::Index>(length),
                                      static_cast<Eigen::Index>(dim));
  const RowVec<double> sum = rows.template cast<double>().colwise().sum();
  return (sum / static_cast<double>(length)).template cast<S>();
}

}  // namespace

template <typename S>
FlatNetwork<S>::FlatNetwork(const ClassifierConfig& cfg, std::size_t hidden) : cfg_(cfg), hidden_(hidden) {
  validate(cfg_);
  const std::size_t in = cfg.max_positions * cfg.input_dim;
  if (hidden_ == 0) {
    w1_ = layout_.add("flat.weight", in, 1, true);
    b1_ = layout_.add("flat.bias", 1, 1, false);
  } else {
    w1_ = layout_.add("flat.hidden.weight", in, hidden_, true);
    b1_ = layout_.add("flat.hidden.bias", 1, hidden_, false);
    w2_ = layout_.add("flat.out.weight", hidden_, 1, true);
    b2_ = layout_.add("flat.out.bias", 1, 1, false);
  }
}

template <typename S>
void FlatNetwork<S>::init(std::span<S> params, std::uint64_t seed) const {
  default_init(layout_, params, seed);
}

template <typename S>
S FlatNetwork<S>::forward(std::span<const S> p, std::span<const S> x, std::size_t length,
                          const DropoutKey&) const {
  check_input(x.size(), length, cfg_);
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const RowVec<S>> flat(x.data(), n);
  // Masked rows are zero, so only the first length x input_dim weights matter.
  RowVec<S> h = flat * view(p, layout_[w1_]).topRows(n);
  h += row_view(p, layout_[b1_]);
  if (hidden_ == 0) return h(0);
  return h.cwiseMax(S(0)).dot(row_view(p, layout_[w2_])) + p[layout_[b2_].offset];
}

template <typename S>
S FlatNetwork<S>::forward_backward(std::span<const S> p, std::span<const S> x, std::size_t length,
                                   const DropoutKey&, const std::function<S(S)>& dloss,
                                   std::span<S> grad) const {
  check_input(x.size(), length, cfg_);
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const RowVec<S>> flat(x.data(), n);
  RowVec<S> h = flat * view(p, layout_[w1_]).topRows(n);
  h += row_view(p, layout_[b1_]);
  if (hidden_ == 0) {
    const S logit = h(0);
    const S g = dloss(logit);
    view(grad, layout_[w1_]).topRows(n) += g * flat.transpose();
    grad[layout_[b1_].offset] += g;
    return logit;
  }
  const RowVec<S> a = h.cwiseMax(S(0));
  const S logit = a.dot(row_view(p, layout_[w2_])) + p[layout_[b2_].offset];
  const S g = dloss(logit);
  row_view(grad, layout_[w2_]) += g * a;
  grad[layout_[b2_].offset] += g;
  const RowVec<S> dh =
      (g * row_view(p, layout_[w2_])).cwiseProduct((h.array() > S(0)).matrix().template cast<S>());
  view(grad, layout_[w1_]).topRows(n) += flat.transpose() * dh;
  row_view(grad, layout_[b1_]) += dh;
  return logit;
}

template <typename S>
MeanPoolNetwork<S>::MeanPoolNetwork(const ClassifierConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  w1_ = layout_.add("meanpool.hidden.weight", cfg.input_dim, cfg.mlp_hidden, true);
  b1_ = layout_.add("meanpool.hidden.bias", 1, cfg.mlp_hidden, false);
  w2_ = layout_.add("meanpool.out.weight", cfg.mlp_hidden, 1, true);
  b2_ = layout_.add("meanpool.out.bias", 1, 1, false);
}

template <typename S>
void MeanPoolNetwork<S>::init(std::span<S> params, std::uint64_t seed) const {
  default_init(layout_, params, seed);
}

template <typename S>
S MeanPoolNetwork<S>::forward(std::span<const S> p, std::span<const S> x, std::size_t length,
                              const DropoutKey&) const {
  check_input(x.size(), length, cfg_);
  const RowVec<S> mean = masked_mean<S>(x, length, cfg_.input_dim);
  RowVec<S> h = mean * view(p, layout_[w1_]);
  h += row_view(p, layout_[b1_]);
  return h.cwiseMax(S(0)).dot(row_view(p, layout_[w2_])) + p[layout_[b2_].offset];
}

template <typename S>
S MeanPoolNetwork<S>::forward_backward(std::span<const S> p, std::span<const S> x, std::size_t length,
                                       const DropoutKey&, const std::function<S(S)>& dloss,
                                       std::span<S> grad) const {
  check_input(x.size(), length, cfg_);
  const RowVec<S> mean = masked_mean<S>(x, length, cfg_.input_dim);
  RowVec<S> h = mean * view(p, layout_[w1_]);
  h += row_view(p, layout_[b1_]);
  const RowVec<S> a = h.cwiseMax(S(0));
  const S logit = a.dot(row_view(p, layout_[w2_])) + p[layout_[b2_].offset];
  const S g = dloss(logit);
  row_view(grad, layout_[w2_]) += g * a;
  grad[layout_[b2_].offset] += g;
  const RowVec<S> dh =
      (g * row_view(p, layout_[w2_])).cwiseProduct((h.array() > S(0)).matrix().template cast<S>());
  view(grad, layout_[w1_]) += mean.transpose() * dh;
  row_view(grad, layout_[b1_]) += dh;
  return logit;
}

template class FlatNetwork<float>;
template class FlatNetwork<double>;
template class MeanPoolNetwork<float>;
template class MeanPoolNetwork<double>;

}  // namespace ltmia::detail
