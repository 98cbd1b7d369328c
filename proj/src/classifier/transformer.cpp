#include <cmath>

#include "ltmia/error.hpp"
#include "networks.hpp"

namespace ltmia::detail {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename S>
Mat<S> dropout_mask(Prng& rng, Eigen::Index rows, Eigen::Index cols, double p) {
  Mat<S> m(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? S(0) : keep;
  return m;
}

template <typename S>
void layer_norm(const Mat<S>& x, const Eigen::Map<const RowVec<S>>& gamma,
                const Eigen::Map<const RowVec<S>>& beta, Mat<S>& y, Mat<S>& xhat, ColVec<S>& istd) {
  const auto n = static_cast<S>(x.cols());
  xhat.resize(x.rows(), x.cols());
  istd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S mean = x.row(r).sum() / n;
    const S var = (x.row(r).array() - mean).square().sum() / n;
    istd(r) = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    xhat.row(r) = (x.row(r).array() - mean) * istd(r);
  }
  y = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
}

// Returns dL/dx; accumulates dL/dgamma and dL/dbeta.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const ColVec<S>& istd,
                           const Eigen::Map<const RowVec<S>>& gamma, Eigen::Map<RowVec<S>> dgamma,
                           Eigen::Map<RowVec<S>> dbeta) {
  dgamma += dy.cwiseProduct(xhat).colwise().sum();
  dbeta += dy.colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * gamma.array();
  const auto n = static_cast<S>(dy.cols());
  Mat<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const S m1 = dxhat.row(r).sum() / n;
    const S m2 = dxhat.row(r).dot(xhat.row(r)) / n;
    dx.row(r) = istd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
  }
  return dx;
}

}  // namespace

template <typename S>
TransformerNetwork<S>::TransformerNetwork(const ClassifierConfig& cfg) : cfg_(cfg) {
  validate(cfg_);
  const std::size_t d = cfg.model_dim;
  w_in_ = layout_.add("input.weight", cfg.input_dim, d, true);
  b_in_ = layout_.add("input.bias", 1, d, false);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams lp{};
    lp.wq = layout_.add(p + "attn.q.weight", d, d, true);
    lp.bq = layout_.add(p + "attn.q.bias", 1, d, false);
    lp.wk = layout_.add(p + "attn.k.weight", d, d, true);
    lp.bk = layout_.add(p + "attn.k.bias", 1, d, false);
    lp.wv = layout_.add(p + "attn.v.weight", d, d, true);
    lp.bv = layout_.add(p + "attn.v.bias", 1, d, false);
    lp.wo = layout_.add(p + "attn.out.weight", d, d, true);
    lp.bo = layout_.add(p + "attn.out.bias", 1, d, false);
    lp.ln1_g = layout_.add(p + "norm1.gain", 1, d, false);
    lp.ln1_b = layout_.add(p + "norm1.bias", 1, d, false);
    lp.w1 = layout_.add(p + "ff.in.weight", d, cfg.ff_dim, true);
    lp.b1 = layout_.add(p + "ff.in.bias", 1, cfg.ff_dim, false);
    lp.w2 = layout_.add(p + "ff.out.weight", cfg.ff_dim, d, true);
    lp.b2 = layout_.add(p + "ff.out.bias", 1, d, false);
    lp.ln2_g = layout_.add(p + "norm2.gain", 1, d, false);
    lp.ln2_b = layout_.add(p + "norm2.bias", 1, d, false);
    layers_.push_back(lp);
  }
  query_ = layout_.add("pool.query", 1, d, false);
  head_w1_ = layout_.add("head.hidden.weight", d, cfg.head_hidden, true);
  head_b1_ = layout_.add("head.hidden.bias", 1, cfg.head_hidden, false);
  head_w2_ = layout_.add("head.out.weight", cfg.head_hidden, 1, true);
  head_b2_ = layout_.add("head.out.bias", 1, 1, false);

  const auto table = positional_encoding(cfg.max_positions, d);
  pe_.resize(static_cast<Eigen::Index>(cfg.max_positions), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < table.size(); ++i) pe_.data()[i] = static_cast<S>(table[i]);
}

template <typename S>
void TransformerNetwork<S>::init(std::span<S> params, std::uint64_t seed) const {
  default_init(layout_, params, seed);
  // Small random query so the initial pooling is close to a uniform average.
  auto rng = keyed_stream(seed, "init.query");
  const auto& q = layout_[query_];
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.model_dim));
  for (std::size_t i = 0; i < q.size(); ++i) params[q.offset + i] = static_cast<S>(rng.uniform(-bound, bound));
}

template <typename S>
S TransformerNetwork<S>::run(std::span<const S> p, std::span<const S> xin, std::size_t length,
                             const DropoutKey& dk, Cache& c) const {
  const auto T = static_cast<Eigen::Index>(length);
  const auto d = static_cast<Eigen::Index>(cfg_.model_dim);
  const auto H = static_cast<Eigen::Index>(cfg_.heads);
  const Eigen::Index dh = d / H;
  if (length == 0 || length > cfg_.max_positions) {
    throw Error(ErrorKind::shape_mismatch, "sequence length outside [1, max_positions]");
  }
  if (xin.size() != length * cfg_.input_dim) {
    throw Error(ErrorKind::shape_mismatch, "input size does not match length x input_dim");
  }
  const double pdrop = dk.active ? cfg_.dropout : 0.0;
  Prng rng = keyed_stream(dk.seed, "dropout", {dk.epoch, dk.step, dk.slot});
  const S attn_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  c.x = Eigen::Map<const Mat<S>>(xin.data(), T, static_cast<Eigen::Index>(cfg_.input_dim));
  Mat<S> h = c.x * view(p, layout_[w_in_]);
  h.rowwise() += row_view(p, layout_[b_in_]);
  h += pe_.topRows(T);

  c.layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lp = layers_[l];
    auto& lc = c.layers[l];
    lc.h_in = h;
    lc.q = h * view(p, layout_[lp.wq]);
    lc.q.rowwise() += row_view(p, layout_[lp.bq]);
    lc.k = h * view(p, layout_[lp.wk]);
    lc.k.rowwise() += row_view(p, layout_[lp.bk]);
    lc.v = h * view(p, layout_[lp.wv]);
    lc.v.rowwise() += row_view(p, layout_[lp.bv]);

    lc.ctx.resize(T, d);
    lc.probs.resize(static_cast<std::size_t>(H));
    lc.attn_mask.assign(static_cast<std::size_t>(H), Mat<S>());
    for (Eigen::Index hh = 0; hh < H; ++hh) {
      Mat<S> scores = (lc.q.middleCols(hh * dh, dh) * lc.k.middleCols(hh * dh, dh).transpose()) * attn_scale;
      softmax_rows(scores);
      lc.probs[hh] = scores;
      if (pdrop > 0.0) {
        lc.attn_mask[hh] = dropout_mask<S>(rng, T, T, pdrop);
        lc.ctx.middleCols(hh * dh, dh) = scores.cwiseProduct(lc.attn_mask[hh]) * lc.v.middleCols(hh * dh, dh);
      } else {
        lc.ctx.middleCols(hh * dh, dh) = scores * lc.v.middleCols(hh * dh, dh);
      }
    }
    Mat<S> attn = lc.ctx * view(p, layout_[lp.wo]);
    attn.rowwise() += row_view(p, layout_[lp.bo]);
    if (pdrop > 0.0) {
      lc.out_mask = dropout_mask<S>(rng, T, d, pdrop);
      attn = attn.cwiseProduct(lc.out_mask);
    }
    const Mat<S> r1 = lc.h_in + attn;
    layer_norm<S>(r1, row_view(p, layout_[lp.ln1_g]), row_view(p, layout_[lp.ln1_b]), lc.u, lc.xhat1, lc.istd1);

    lc.f1 = lc.u * view(p, layout_[lp.w1]);
    lc.f1.rowwise() += row_view(p, layout_[lp.b1]);
    lc.g = lc.f1.cwiseMax(S(0));
    Mat<S> f2 = lc.g * view(p, layout_[lp.w2]);
    f2.rowwise() += row_view(p, layout_[lp.b2]);
    if (pdrop > 0.0) {
      lc.ff_mask = dropout_mask<S>(rng, T, d, pdrop);
      f2 = f2.cwiseProduct(lc.ff_mask);
    }
    const Mat<S> r2 = lc.u + f2;
    layer_norm<S>(r2, row_view(p, layout_[lp.ln2_g]), row_view(p, layout_[lp.ln2_b]), h, lc.xhat2, lc.istd2);
  }
  c.h_out = h;

  // Learned-query attention pooling.
  const auto query = row_view(p, layout_[query_]);
  const S pool_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));
  c.alpha = (h * query.transpose()) * pool_scale;
  c.alpha = (c.alpha.array() - c.alpha.maxCoeff()).exp();
  c.alpha /= c.alpha.sum();
  c.pooled = c.alpha.transpose() * h;

  c.z1 = c.pooled * view(p, layout_[head_w1_]);
  c.z1 += row_view(p, layout_[head_b1_]);
  c.a1 = c.z1.cwiseMax(S(0));
  return c.a1.dot(row_view(p, layout_[head_w2_])) + p[layout_[head_b2_].offset];
}

template <typename S>
S TransformerNetwork<S>::forward(std::span<const S> params, std::span<const S> x, std::size_t length,
                                 const DropoutKey& dropout) const {
  Cache c;
  return run(params, x, length, dropout, c);
}

template <typename S>
S TransformerNetwork<S>::forward_backward(std::span<const S> p, std::span<const S> x,
                                          std::size_t length, const DropoutKey& dropout,
                                          const std::function<S(S)>& dloss, std::span<S> grad) const {
  Cache c;
  const S logit = run(p, x, length, dropout, c);
  const S g = dloss(logit);
  const auto d = static_cast<Eigen::Index>(cfg_.model_dim);
  const Eigen::Index dh = d / static_cast<Eigen::Index>(cfg_.heads);
  const S attn_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const S pool_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)));

  // Head.
  row_view(grad, layout_[head_w2_]) += g * c.a1;
  grad[layout_[head_b2_].offset] += g;
  RowVec<S> dz1 = g * row_view(p, layout_[head_w2_]);
  dz1 = dz1.cwiseProduct((c.z1.array() > S(0)).matrix().template cast<S>());
  view(grad, layout_[head_w1_]) += c.pooled.transpose() * dz1;
  row_view(grad, layout_[head_b1_]) += dz1;
  const RowVec<S> dpooled = dz1 * view(p, layout_[head_w1_]).transpose();

  // Pooling.
  Mat<S> dh_mat = c.alpha * dpooled;
  const ColVec<S> dalpha = c.h_out * dpooled.transpose();
  const S weighted = c.alpha.dot(dalpha);
  const ColVec<S> ds = c.alpha.cwiseProduct((dalpha.array() - weighted).matrix());
  const auto query = row_view(p, layout_[query_]);
  row_view(grad, layout_[query_]) += (ds.transpose() * c.h_out) * pool_scale;
  dh_mat += (ds * query) * pool_scale;

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& lp = layers_[li];
    const auto& lc = c.layers[li];

    const Mat<S> dr2 = layer_norm_backward<S>(dh_mat, lc.xhat2, lc.istd2, row_view(p, layout_[lp.ln2_g]),
                                              row_view(grad, layout_[lp.ln2_g]),
                                              row_view(grad, layout_[lp.ln2_b]));
    Mat<S> du = dr2;
    Mat<S> df2 = dr2;
    if (lc.ff_mask.size() > 0) df2 = df2.cwiseProduct(lc.ff_mask);
    view(grad, layout_[lp.w2]) += lc.g.transpose() * df2;
    row_view(grad, layout_[lp.b2]) += df2.colwise().sum();
    Mat<S> dg = df2 * view(p, layout_[lp.w2]).transpose();
    dg = dg.cwiseProduct((lc.f1.array() > S(0)).matrix().template cast<S>());
    view(grad, layout_[lp.w1]) += lc.u.transpose() * dg;
    row_view(grad, layout_[lp.b1]) += dg.colwise().sum();
    du += dg * view(p, layout_[lp.w1]).transpose();

    const Mat<S> dr1 = layer_norm_backward<S>(du, lc.xhat1, lc.istd1, row_view(p, layout_[lp.ln1_g]),
                                              row_view(grad, layout_[lp.ln1_g]),
                                              row_view(grad, layout_[lp.ln1_b]));
    Mat<S> da = dr1;
    if (lc.out_mask.size() > 0) da = da.cwiseProduct(lc.out_mask);
    view(grad, layout_[lp.wo]) += lc.ctx.transpose() * da;
    row_view(grad, layout_[lp.bo]) += da.colwise().sum();
    const Mat<S> dctx = da * view(p, layout_[lp.wo]).transpose();

    Mat<S> dq(lc.q.rows(), d), dk(lc.k.rows(), d), dv(lc.v.rows(), d);
    for (std::size_t hh = 0; hh < lc.probs.size(); ++hh) {
      const auto col = static_cast<Eigen::Index>(hh) * dh;
      const Mat<S>& P = lc.probs[hh];
      const bool masked = lc.attn_mask[hh].size() > 0;
      const Mat<S> dctx_h = dctx.middleCols(col, dh);
      if (masked) {
        dv.middleCols(col, dh) = P.cwiseProduct(lc.attn_mask[hh]).transpose() * dctx_h;
      } else {
        dv.middleCols(col, dh) = P.transpose() * dctx_h;
      }
      Mat<S> dP = dctx_h * lc.v.middleCols(col, dh).transpose();
      if (masked) dP = dP.cwiseProduct(lc.attn_mask[hh]);
      const ColVec<S> rowdot = dP.cwiseProduct(P).rowwise().sum();
      const Mat<S> dS = P.cwiseProduct((dP.colwise() - rowdot));
      dq.middleCols(col, dh) = (dS * lc.k.middleCols(col, dh)) * attn_scale;
      dk.middleCols(col, dh) = (dS.transpose() * lc.q.middleCols(col, dh)) * attn_scale;
    }
    view(grad, layout_[lp.wq]) += lc.h_in.transpose() * dq;
    row_view(grad, layout_[lp.bq]) += dq.colwise().sum();
    view(grad, layout_[lp.wk]) += lc.h_in.transpose() * dk;
    row_view(grad, layout_[lp.bk]) += dk.colwise().sum();
    view(grad, layout_[lp.wv]) += lc.h_in.transpose() * dv;
    row_view(grad, layout_[lp.bv]) += dv.colwise().sum();

    dh_mat = dr1;
    dh_mat += dq * view(p, layout_[lp.wq]).transpose();
    dh_mat += dk * view(p, layout_[lp.wk]).transpose();
    dh_mat += dv * view(p, layout_[lp.wv]).transpose();
  }

  view(grad, layout_[w_in_]) += c.x.transpose() * dh_mat;
  row_view(grad, layout_[b_in_]) += dh_mat.colwise().sum();
  return logit;
}

template class TransformerNetwork<float>;
template class TransformerNetwork<double>;

}  // namespace ltmia::detail
