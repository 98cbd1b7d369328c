#include "ltmia/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>

#include "ltmia/error.hpp"
#include "ltmia/parallel.hpp"
#include "ltmia/prng.hpp"

namespace ltmia {

void validate(const SynthConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "synth: " + what); };
  if (cfg.vocab_size < kMinVocab) bad("vocab_size must be >= 40");
  if (cfg.positions < 1 || cfg.positions > kMaxPositions) bad("positions must lie in [1, 128]");
  if (!(cfg.delta >= 0.0)) bad("delta must be >= 0");
  if (!(cfg.noise_sigma >= 0.0)) bad("noise_sigma must be >= 0");
  if (!(cfg.base_scale > 0.0)) bad("base_scale must be > 0");
  for (const auto& r : {cfg.scale_range, cfg.offset_range, cfg.noise_range}) {
    if (!(r.lo <= r.hi)) bad("artifact range with lo > hi");
  }
  if (!(cfg.scale_range.lo > 0.0)) bad("scale range must be positive");
  if (!(cfg.noise_range.lo >= 0.0)) bad("noise range must be non-negative");
  if (!(cfg.signal_start_fraction >= 0.0 && cfg.signal_start_fraction < 1.0)) {
    bad("signal_start_fraction must lie in [0, 1)");
  }
  if (cfg.n_members + cfg.n_nonmembers == 0) bad("no samples requested");
}

ComboArtifacts draw_artifacts(const SynthConfig& cfg, std::size_t combo_id) {
  auto rng = keyed_stream(cfg.seed, "artifacts", {combo_id});
  ComboArtifacts a;
  a.scale = rng.uniform(cfg.scale_range.lo, cfg.scale_range.hi);
  a.offset = rng.uniform(cfg.offset_range.lo, cfg.offset_range.hi);
  a.noise_multiplier = rng.uniform(cfg.noise_range.lo, cfg.noise_range.hi);
  return a;
}

std::string synth_model_id(std::size_t combo_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-model-%03zu", combo_id);
  return buf;
}

std::string render_tokens(const std::vector<std::uint32_t>& token_ids) {
  std::string text;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (i) text.push_back(' ');
    std::uint32_t v = token_ids[i];
    std::string word;
    do {
      word.push_back(static_cast<char>('a' + v % 26));
      v /= 26;
    } while (v > 0);
    text.append(word.rbegin(), word.rend());
  }
  return text;
}

namespace {

// Ranking keys: ascending key order is descending logit, ties by ascending id.
struct Ranking {
  std::vector<std::uint64_t> keys;    // by token id
  std::vector<std::uint64_t> sorted;  // scratch
  std::array<std::uint32_t, kTopK> top{};
  std::array<std::uint32_t, kTopK> bottom{};  // bottom[k] has rank V - k

  void build(std::span<const float> logits) {
    const std::size_t V = logits.size();
    keys.resize(V);
    for (std::uint32_t j = 0; j < V; ++j) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(logits[j] + 0.0f);  // folds -0 into +0
      // Map to an unsigned key that increases with the float value.
      bits = (bits & 0x80000000u) ? ~bits : (bits | 0x80000000u);
      keys[j] = (static_cast<std::uint64_t>(~bits) << 32) | j;
    }
    sorted = keys;
    const auto k = static_cast<std::ptrdiff_t>(kTopK);
    std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
    std::sort(sorted.begin(), sorted.begin() + k);
    std::nth_element(sorted.begin() + k, sorted.end() - k, sorted.end());
    std::sort(sorted.end() - k, sorted.end());
    for (std::size_t i = 0; i < kTopK; ++i) {
      top[i] = static_cast<std::uint32_t>(sorted[i] & 0xFFFFFFFFu);
      bottom[i] = static_cast<std::uint32_t>(sorted[V - 1 - i] & 0xFFFFFFFFu);
    }
  }

  std::uint32_t rank(std::uint32_t id) const {
    const std::uint64_t key = keys[id];
    std::uint32_t below = 0;
    for (std::uint64_t other : keys) below += other < key;
    return below + 1;
  }
};

void log_softmax(std::span<const float> z, std::vector<double>& out) {
  double m = -INFINITY;
  for (float v : z) m = std::max<double>(m, v);
  double s = 0.0;
  for (float v : z) s += std::exp(static_cast<double>(v) - m);
  const double lse = m + std::log(s);
  out.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = static_cast<double>(z[j]) - lse;
}

}  // namespace

SynthSample generate_sample(const SynthConfig& cfg, std::size_t combo_id, std::size_t index,
                            bool keep_logits) {
  const ComboArtifacts art = draw_artifacts(cfg, combo_id);
  const std::uint32_t V = cfg.vocab_size;
  const std::size_t T = cfg.positions;
  const bool member = index < cfg.n_members;

  SynthSample out;
  LogitTrace& r = out.record;
  r.target_model_id = synth_model_id(combo_id);
  r.reference_model_id = kSynthReferenceId;
  r.dataset_id = kSynthDatasetId;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%06zu", r.target_model_id.c_str(), index);
  r.sample_id = id;
  r.label = member ? Label::member : Label::nonmember;
  r.vocab_size = V;
  r.resize(T);
  if (keep_logits) {
    out.tgt_logits.resize(T * V);
    out.ref_logits.resize(T * V);
  }

  r.token_ids[0] = static_cast<std::uint32_t>(keyed_stream(cfg.seed, "prefix", {combo_id, index}).below(V));
  const auto signal_start = static_cast<std::size_t>(std::floor(cfg.signal_start_fraction * T));
  const double noise_sd = art.noise_multiplier * cfg.noise_sigma;

  std::vector<float> zr(V), zt(V);
  std::vector<double> lp_ref, lp_tgt;
  Ranking rt, rr;

  for (std::size_t i = 0; i < T; ++i) {
    auto rng = keyed_stream(cfg.seed, "position", {combo_id, index, i});
    for (std::uint32_t j = 0; j < V; ++j) zr[j] = static_cast<float>(cfg.base_scale * rng.gaussian());

    // Ground-truth token ~ softmax(reference logits), by inverse CDF.
    log_softmax(zr, lp_ref);
    const double u = rng.uniform();
    double cdf = 0.0;
    std::uint32_t x = V - 1;
    for (std::uint32_t j = 0; j < V; ++j) {
      cdf += std::exp(lp_ref[j]);
      if (u < cdf) {
        x = j;
        break;
      }
    }
    r.token_ids[i + 1] = x;

    for (std::uint32_t j = 0; j < V; ++j) {
      double v = art.scale * zr[j] + art.offset + noise_sd * rng.gaussian();
      if (member && i >= signal_start && j == x) v += cfg.delta;
      zt[j] = static_cast<float>(v);
    }
    log_softmax(zt, lp_tgt);
    if (keep_logits) {
      std::copy(zt.begin(), zt.end(), out.tgt_logits.begin() + static_cast<std::ptrdiff_t>(i * V));
      std::copy(zr.begin(), zr.end(), out.ref_logits.begin() + static_cast<std::ptrdiff_t>(i * V));
    }

    rt.build(zt);
    rr.build(zr);

    r.gt_logprob_tgt[i] = static_cast<float>(lp_tgt[x]);
    r.gt_logprob_ref[i] = static_cast<float>(lp_ref[x]);
    r.gt_logit_tgt[i] = zt[x];
    r.gt_logit_ref[i] = zr[x];
    r.gt_rank_tgt[i] = rt.rank(x);
    r.gt_rank_ref[i] = rr.rank(x);

    double mu = 0.0, second = 0.0;
    for (std::uint32_t j = 0; j < V; ++j) {
      const double p = std::exp(lp_tgt[j]);
      mu += p * lp_tgt[j];
    }
    for (std::uint32_t j = 0; j < V; ++j) {
      const double dev = lp_tgt[j] - mu;
      second += std::exp(lp_tgt[j]) * dev * dev;
    }
    r.mu_logprob_tgt[i] = static_cast<float>(mu);
    r.sigma_logprob_tgt[i] = static_cast<float>(std::sqrt(second));

    for (std::size_t k = 0; k < kTopK; ++k) {
      const std::size_t o = i * kTopK + k;
      const std::uint32_t top = rt.top[k];
      const std::uint32_t bot = rt.bottom[k];
      const std::uint32_t rtop = rr.top[k];
      r.tgt_top20_ids[o] = top;
      r.tgt_top20_logits[o] = zt[top];
      r.tgt_bot20_ids[o] = bot;
      r.tgt_bot20_logits[o] = zt[bot];
      r.ref_logits_of_tgt_top20[o] = zr[top];
      r.ref_logits_of_tgt_bot20[o] = zr[bot];
      r.ref_top20_ids[o] = rtop;
      r.ref_top20_logits[o] = zr[rtop];
      r.tgt_logits_of_ref_top20[o] = zt[rtop];
      r.rank_in_ref_of_tgt_top20[o] = rr.rank(top);
      r.rank_in_ref_of_tgt_bot20[o] = rr.rank(bot);
      r.rank_in_tgt_of_ref_top20[o] = rt.rank(rtop);
    }
  }
  r.text = render_tokens(r.token_ids);
  return out;
}

std::vector<LogitTrace> generate_combo(const SynthConfig& cfg, std::size_t combo_id,
                                       unsigned threads) {
  validate(cfg);
  const std::size_t n = cfg.n_members + cfg.n_nonmembers;
  std::vector<LogitTrace> out(n);
  parallel_for(n, threads, [&](std::size_t s) { out[s] = generate_sample(cfg, combo_id, s).record; });
  return out;
}

SynthSuite generate_suite(const SynthConfig& cfg, std::size_t n_combos, std::size_t heldout_combos,
                          unsigned threads) {
  if (n_combos < 1) throw Error(ErrorKind::invalid_argument, "synth suite needs at least one combo");
  std::vector<LogitTrace> train, heldout;
  for (std::size_t c = 0; c < n_combos + heldout_combos; ++c) {
    auto records = generate_combo(cfg, c, threads);
    auto& dst = c < n_combos ? train : heldout;
    std::move(records.begin(), records.end(), std::back_inserter(dst));
  }
  return {TraceDataset(std::move(train)), TraceDataset(std::move(heldout))};
}

}  // namespace ltmia
