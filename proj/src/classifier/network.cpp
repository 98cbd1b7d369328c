#include "ltmia/classifier/network.hpp"

#include <cmath>

#include "ltmia/error.hpp"
#include "ltmia/parallel.hpp"
#include "networks.hpp"

namespace ltmia {

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::transformer: return "transformer";
    case ArchKind::logreg_flat: return "logreg_flat";
    case ArchKind::mlp_flat: return "mlp_flat";
    case ArchKind::mlp_meanpool: return "mlp_meanpool";
  }
  return "unknown";
}

ArchKind parse_arch(std::string_view text) {
  for (ArchKind k : {ArchKind::transformer, ArchKind::logreg_flat, ArchKind::mlp_flat,
                     ArchKind::mlp_meanpool}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorKind::invalid_argument, "unknown classifier architecture '" + std::string(text) + "'");
}

void validate(const ClassifierConfig& c) {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "classifier: " + what); };
  if (c.input_dim == 0 || c.model_dim == 0 || c.layers == 0 || c.heads == 0 || c.ff_dim == 0 ||
      c.head_hidden == 0 || c.max_positions == 0 || c.mlp_hidden == 0) {
    bad("all dimensions must be positive");
  }
  if (c.model_dim % c.heads != 0) bad("model_dim must be divisible by heads");
  if (c.model_dim % 2 != 0) bad("model_dim must be even for sinusoidal encodings");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) bad("dropout must lie in [0, 1)");
}

void validate(const TrainConfig& c) {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "train: " + what); };
  if (!(c.learning_rate >= 0.0)) bad("learning_rate must be >= 0");
  if (c.batch_size == 0) bad("batch_size must be positive");
  if (c.epochs == 0) bad("epochs must be positive");
  if (!(c.weight_decay >= 0.0)) bad("weight_decay must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) bad("betas must lie in [0, 1)");
  if (!(c.eps > 0.0)) bad("eps must be > 0");
}

std::vector<double> positional_encoding(std::size_t max_positions, std::size_t d) {
  if (d % 2 != 0) throw Error(ErrorKind::invalid_argument, "positional encoding needs an even dimension");
  std::vector<double> pe(max_positions * d);
  for (std::size_t pos = 0; pos < max_positions; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

namespace detail {

template <typename S>
void default_init(const ParamLayout& layout, std::span<S> params, std::uint64_t seed) {
  for (std::size_t t = 0; t < layout.specs().size(); ++t) {
    const auto& spec = layout[t];
    auto out = params.subspan(spec.offset, spec.size());
    const bool is_gain = spec.name.ends_with(".gain");
    if (!spec.decay) {
      std::fill(out.begin(), out.end(), is_gain ? S(1) : S(0));
      continue;
    }
    auto rng = keyed_stream(seed, "init", {t});
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
    for (auto& v : out) v = static_cast<S>(rng.uniform(-bound, bound));
  }
}

template void default_init<float>(const ParamLayout&, std::span<float>, std::uint64_t);
template void default_init<double>(const ParamLayout&, std::span<double>, std::uint64_t);

}  // namespace detail

template <typename S>
std::unique_ptr<Network<S>> make_network(const ClassifierConfig& cfg) {
  switch (cfg.arch) {
    case ArchKind::transformer: return std::make_unique<detail::TransformerNetwork<S>>(cfg);
    case ArchKind::logreg_flat: return std::make_unique<detail::FlatNetwork<S>>(cfg, 0);
    case ArchKind::mlp_flat: return std::make_unique<detail::FlatNetwork<S>>(cfg, cfg.mlp_hidden);
    case ArchKind::mlp_meanpool: return std::make_unique<detail::MeanPoolNetwork<S>>(cfg);
  }
  throw Error(ErrorKind::invalid_argument, "unknown architecture");
}

template std::unique_ptr<Network<float>> make_network<float>(const ClassifierConfig&);
template std::unique_ptr<Network<double>> make_network<double>(const ClassifierConfig&);

std::size_t parameter_count(const ClassifierConfig& cfg) {
  return make_network<float>(cfg)->layout().total();
}

InputNorm InputNorm::identity(std::size_t channels) {
  return {std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f)};
}

InputNorm InputNorm::fit(const FeatureSet& set) {
  std::vector<double> sum(kChannels, 0.0), sq(kChannels, 0.0);
  std::size_t rows = 0;
  for (const auto& s : set.samples) {
    for (std::size_t t = 0; t < s.x.length; ++t) {
      const auto row = s.x.row(t);
      for (std::size_t c = 0; c < kChannels; ++c) sum[c] += row[c];
    }
    rows += s.x.length;
  }
  if (rows == 0) return identity(kChannels);
  InputNorm norm;
  norm.shift.resize(kChannels);
  norm.scale.resize(kChannels);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double mean = sum[c] / static_cast<double>(rows);
    norm.shift[c] = static_cast<float>(mean);
  }
  for (const auto& s : set.samples) {
    for (std::size_t t = 0; t < s.x.length; ++t) {
      const auto row = s.x.row(t);
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double dev = row[c] - static_cast<double>(norm.shift[c]);
        sq[c] += dev * dev;
      }
    }
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
    norm.scale[c] = sd > 1e-8 ? static_cast<float>(1.0 / sd) : 1.0f;
  }
  return norm;
}

template <typename S>
std::vector<S> standardize(const FeatureTensor& x, const InputNorm& norm) {
  if (norm.shift.size() != kChannels || norm.scale.size() != kChannels) {
    throw Error(ErrorKind::shape_mismatch, "input normalization must cover 154 channels");
  }
  std::vector<S> out(x.length * kChannels);
  for (std::size_t t = 0; t < x.length; ++t) {
    const auto row = x.row(t);
    for (std::size_t c = 0; c < kChannels; ++c) {
      out[t * kChannels + c] =
          static_cast<S>((static_cast<double>(row[c]) - norm.shift[c]) * static_cast<double>(norm.scale[c]));
    }
  }
  return out;
}

template std::vector<float> standardize<float>(const FeatureTensor&, const InputNorm&);
template std::vector<double> standardize<double>(const FeatureTensor&, const InputNorm&);

double bce_with_logit(double z, int label) {
  // log(1 + e^z) - y z, computed without overflow.
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - static_cast<double>(label) * z;
}

namespace {

constexpr std::size_t kReductionGroups = 8;

}  // namespace

template <typename S>
double batch_loss_and_grad(const Network<S>& net, std::span<const S> params,
                           std::span<const std::vector<S>* const> inputs,
                           std::span<const std::size_t> lengths, std::span<const int> labels,
                           std::span<const DropoutKey> dropout, std::span<double> grad,
                           unsigned threads) {
  const std::size_t B = inputs.size();
  const std::size_t P = net.layout().total();
  if (B == 0 || lengths.size() != B || labels.size() != B || dropout.size() != B || grad.size() != P) {
    throw Error(ErrorKind::shape_mismatch, "batch arrays disagree in size");
  }
  // Fixed contiguous groups, each reduced sequentially, then summed in group
  // order: the result is independent of the thread count.
  const std::size_t groups = std::min(kReductionGroups, B);
  std::vector<std::vector<double>> partial(groups);
  std::vector<double> loss(groups, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(B);
  parallel_for(groups, threads, [&](std::size_t g) {
    auto& acc = partial[g];
    acc.assign(P, 0.0);
    // fixed alignment keeps the vectorized accumulation order stable
    std::vector<S, Eigen::aligned_allocator<S>> scratch(P);
    for (std::size_t i = B * g / groups; i < B * (g + 1) / groups; ++i) {
      std::fill(scratch.begin(), scratch.end(), S(0));
      const int y = labels[i];
      const S logit = net.forward_backward(
          params, *inputs[i], lengths[i], dropout[i],
          [&](S z) { return static_cast<S>((sigmoid(static_cast<double>(z)) - y) * inv_batch); },
          scratch);
      loss[g] += bce_with_logit(static_cast<double>(logit), y);
      for (std::size_t k = 0; k < P; ++k) acc[k] += static_cast<double>(scratch[k]);
    }
  });
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t k = 0; k < P; ++k) grad[k] += partial[g][k];
    total += loss[g];
  }
  return total * inv_batch;
}

template <typename S>
double batch_loss(const Network<S>& net, std::span<const S> params,
                  std::span<const std::vector<S>* const> inputs, std::span<const std::size_t> lengths,
                  std::span<const int> labels, std::span<const DropoutKey> dropout) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const S logit = net.forward(params, *inputs[i], lengths[i], dropout[i]);
    total += bce_with_logit(static_cast<double>(logit), labels[i]);
  }
  return total / static_cast<double>(inputs.size());
}

#define LTMIA_INSTANTIATE(S)                                                                       \
  template double batch_loss_and_grad<S>(const Network<S>&, std::span<const S>,                    \
                                         std::span<const std::vector<S>* const>,                   \
                                         std::span<const std::size_t>, std::span<const int>,       \
                                         std::span<const DropoutKey>, std::span<double>, unsigned); \
  template double batch_loss<S>(const Network<S>&, std::span<const S>,                             \
                                std::span<const std::vector<S>* const>, std::span<const std::size_t>, \
                                std::span<const int>, std::span<const DropoutKey>);
LTMIA_INSTANTIATE(float)
LTMIA_INSTANTIATE(double)
#undef LTMIA_INSTANTIATE

}  // namespace ltmia
