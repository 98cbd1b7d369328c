#include "ltmia/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_set>

#include "ltmia/error.hpp"
#include "ltmia/prng.hpp"

namespace ltmia {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::member: return "member";
    case Label::nonmember: return "nonmember";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Label parse_label(std::string_view text) {
  if (text == "member") return Label::member;
  if (text == "nonmember") return Label::nonmember;
  if (text == "unknown" || text.empty()) return Label::unknown;
  throw Error(ErrorKind::malformed_record, "unknown label '" + std::string(text) + "'");
}

void LogitTrace::resize(std::size_t positions) {
  token_ids.assign(positions + 1, 0);
  for (auto* v : {&gt_logprob_tgt, &gt_logprob_ref, &gt_logit_tgt, &gt_logit_ref, &mu_logprob_tgt,
                  &sigma_logprob_tgt}) {
    v->assign(positions, 0.0f);
  }
  gt_rank_tgt.assign(positions, 1);
  gt_rank_ref.assign(positions, 1);
  for (auto* v : {&tgt_top20_ids, &tgt_bot20_ids, &ref_top20_ids, &rank_in_ref_of_tgt_top20,
                  &rank_in_ref_of_tgt_bot20, &rank_in_tgt_of_ref_top20}) {
    v->assign(positions * kTopK, 0);
  }
  for (auto* v : {&tgt_top20_logits, &tgt_bot20_logits, &ref_logits_of_tgt_top20,
                  &ref_logits_of_tgt_bot20, &ref_top20_logits, &tgt_logits_of_ref_top20}) {
    v->assign(positions * kTopK, 0.0f);
  }
}

namespace {

[[noreturn]] void fail(ErrorKind kind, std::string_view field, std::size_t position,
                       const std::string& what) {
  throw Error(kind, "field '" + std::string(field) + "' position " + std::to_string(position) +
                        ": " + what);
}

[[noreturn]] void fail(ErrorKind kind, std::string_view field, const std::string& what) {
  throw Error(kind, "field '" + std::string(field) + "': " + what);
}

template <typename T>
void check_length(const std::vector<T>& v, std::string_view field, std::size_t expected) {
  if (v.size() != expected) {
    fail(ErrorKind::wrong_array_length, field,
         "expected " + std::to_string(expected) + " values, got " + std::to_string(v.size()));
  }
}

template <typename T>
std::span<const T> block(const std::vector<T>& v, std::size_t i) {
  return std::span<const T>(v).subspan(i * kTopK, kTopK);
}

std::ptrdiff_t find_id(std::span<const std::uint32_t> ids, std::uint32_t id) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? -1 : it - ids.begin();
}

struct Checker {
  const LogitTrace& r;
  std::size_t T;
  std::uint32_t V;

  void finite(const std::vector<float>& v, std::string_view field) const {
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(v[k])) {
        fail(ErrorKind::invariant_violation, field, k / (v.size() / std::max<std::size_t>(T, 1)),
             "non-finite value");
      }
    }
  }

  void ids_in_vocab(const std::vector<std::uint32_t>& v, std::string_view field,
                    std::size_t width) const {
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (v[k] >= V) {
        fail(ErrorKind::invariant_violation, field, k / width,
             "token id " + std::to_string(v[k]) + " outside [0, V)");
      }
    }
  }

  void ranks_in_range(const std::vector<std::uint32_t>& v, std::string_view field,
                      std::size_t width) const {
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (v[k] < 1 || v[k] > V) {
        fail(ErrorKind::rank_out_of_range, field, k / width,
             "rank " + std::to_string(v[k]) + " outside [1, " + std::to_string(V) + "]");
      }
    }
  }

  // Descending logits with ascending-id tie-break (rank order), or the
  // reverse of that order for bottom lists.
  void rank_ordered(const std::vector<float>& logits, const std::vector<std::uint32_t>& ids,
                    std::string_view field, bool descending) const {
    for (std::size_t i = 0; i < T; ++i) {
      const auto l = block(logits, i);
      const auto d = block(ids, i);
      for (std::size_t j = 0; j + 1 < kTopK; ++j) {
        const bool ok = descending
                            ? (l[j] > l[j + 1] || (l[j] == l[j + 1] && d[j] < d[j + 1]))
                            : (l[j] < l[j + 1] || (l[j] == l[j + 1] && d[j] > d[j + 1]));
        if (!ok) {
          fail(ErrorKind::ordering_violation, field, i,
               std::string("entries ") + std::to_string(j) + "," + std::to_string(j + 1) +
                   (descending ? " not in descending order" : " not in ascending order"));
        }
      }
    }
  }

  // Rank (1-based) of `id` in a model, when determinable from its top/bottom
  // lists; 0 otherwise.
  std::uint32_t known_rank(std::span<const std::uint32_t> top, std::span<const std::uint32_t> bot,
                           std::uint32_t id) const {
    if (auto j = find_id(top, id); j >= 0) return static_cast<std::uint32_t>(j + 1);
    if (!bot.empty()) {
      if (auto j = find_id(bot, id); j >= 0) return V - static_cast<std::uint32_t>(j);
    }
    return 0;
  }

  // Cross-checks a stated rank of `id` against the owning model's top (and
  // optionally bottom) lists.
  void rank_consistent(std::uint32_t stated, std::uint32_t id, std::span<const std::uint32_t> top,
                       std::span<const std::uint32_t> bot, std::string_view field,
                       std::size_t i) const {
    const std::uint32_t known = known_rank(top, bot, id);
    if (known != 0 && known != stated) {
      fail(ErrorKind::invariant_violation, field, i,
           "rank " + std::to_string(stated) + " inconsistent with list rank " +
               std::to_string(known));
    }
    if (stated <= kTopK && top[stated - 1] != id) {
      fail(ErrorKind::invariant_violation, field, i,
           "rank " + std::to_string(stated) + " but token is not at that top-list slot");
    }
    if (!bot.empty() && stated > V - kTopK && bot[V - stated] != id) {
      fail(ErrorKind::invariant_violation, field, i,
           "rank " + std::to_string(stated) + " but token is not at that bottom-list slot");
    }
  }

  void distinct(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b,
                std::string_view field, std::size_t i) const {
    std::unordered_set<std::uint32_t> seen;
    for (auto id : a) {
      if (!seen.insert(id).second) fail(ErrorKind::invariant_violation, field, i, "duplicate id");
    }
    for (auto id : b) {
      if (!seen.insert(id).second) fail(ErrorKind::invariant_violation, field, i, "duplicate id");
    }
  }
};

}  // namespace

void validate(const LogitTrace& r) {
  if (r.schema_version != kTraceSchema) {
    throw Error(ErrorKind::unknown_schema, "unknown schema_version '" + r.schema_version + "'");
  }
  if (r.vocab_size < kMinVocab) {
    fail(ErrorKind::invariant_violation, "vocab_size",
         std::to_string(r.vocab_size) + " < " + std::to_string(kMinVocab));
  }
  if (r.token_ids.empty()) fail(ErrorKind::wrong_array_length, "token_ids", "empty");
  if (r.sample_id.empty()) fail(ErrorKind::invariant_violation, "sample_id", "empty");
  const std::size_t T = r.positions();
  if (T > kMaxPositions) {
    fail(ErrorKind::wrong_array_length, "token_ids",
         std::to_string(T) + " positions exceeds " + std::to_string(kMaxPositions));
  }
  const std::uint32_t V = r.vocab_size;

  check_length(r.gt_logprob_tgt, "gt_logprob_tgt", T);
  check_length(r.gt_logprob_ref, "gt_logprob_ref", T);
  check_length(r.gt_logit_tgt, "gt_logit_tgt", T);
  check_length(r.gt_logit_ref, "gt_logit_ref", T);
  check_length(r.gt_rank_tgt, "gt_rank_tgt", T);
  check_length(r.gt_rank_ref, "gt_rank_ref", T);
  check_length(r.mu_logprob_tgt, "mu_logprob_tgt", T);
  check_length(r.sigma_logprob_tgt, "sigma_logprob_tgt", T);
  const std::size_t W = T * kTopK;
  check_length(r.tgt_top20_ids, "tgt_top20_ids", W);
  check_length(r.tgt_top20_logits, "tgt_top20_logits", W);
  check_length(r.tgt_bot20_ids, "tgt_bot20_ids", W);
  check_length(r.tgt_bot20_logits, "tgt_bot20_logits", W);
  check_length(r.ref_logits_of_tgt_top20, "ref_logits_of_tgt_top20", W);
  check_length(r.ref_logits_of_tgt_bot20, "ref_logits_of_tgt_bot20", W);
  check_length(r.ref_top20_ids, "ref_top20_ids", W);
  check_length(r.ref_top20_logits, "ref_top20_logits", W);
  check_length(r.tgt_logits_of_ref_top20, "tgt_logits_of_ref_top20", W);
  check_length(r.rank_in_ref_of_tgt_top20, "rank_in_ref_of_tgt_top20", W);
  check_length(r.rank_in_ref_of_tgt_bot20, "rank_in_ref_of_tgt_bot20", W);
  check_length(r.rank_in_tgt_of_ref_top20, "rank_in_tgt_of_ref_top20", W);

  const Checker c{r, T, V};

  // Pass 1: ranges.
  c.ids_in_vocab(r.token_ids, "token_ids", 1);
  c.ids_in_vocab(r.tgt_top20_ids, "tgt_top20_ids", kTopK);
  c.ids_in_vocab(r.tgt_bot20_ids, "tgt_bot20_ids", kTopK);
  c.ids_in_vocab(r.ref_top20_ids, "ref_top20_ids", kTopK);
  c.ranks_in_range(r.gt_rank_tgt, "gt_rank_tgt", 1);
  c.ranks_in_range(r.gt_rank_ref, "gt_rank_ref", 1);
  c.ranks_in_range(r.rank_in_ref_of_tgt_top20, "rank_in_ref_of_tgt_top20", kTopK);
  c.ranks_in_range(r.rank_in_ref_of_tgt_bot20, "rank_in_ref_of_tgt_bot20", kTopK);
  c.ranks_in_range(r.rank_in_tgt_of_ref_top20, "rank_in_tgt_of_ref_top20", kTopK);
  for (const auto* f : {&r.gt_logprob_tgt, &r.gt_logprob_ref, &r.gt_logit_tgt, &r.gt_logit_ref,
                        &r.mu_logprob_tgt, &r.sigma_logprob_tgt, &r.tgt_top20_logits,
                        &r.tgt_bot20_logits, &r.ref_logits_of_tgt_top20,
                        &r.ref_logits_of_tgt_bot20, &r.ref_top20_logits,
                        &r.tgt_logits_of_ref_top20}) {
    c.finite(*f, "logit/logprob arrays");
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (r.gt_logprob_tgt[i] > 0.0f) fail(ErrorKind::invariant_violation, "gt_logprob_tgt", i, "> 0");
    if (r.gt_logprob_ref[i] > 0.0f) fail(ErrorKind::invariant_violation, "gt_logprob_ref", i, "> 0");
    if (r.sigma_logprob_tgt[i] < 0.0f) {
      fail(ErrorKind::invariant_violation, "sigma_logprob_tgt", i, "< 0");
    }
  }

  // Pass 2: ordering.
  c.rank_ordered(r.tgt_top20_logits, r.tgt_top20_ids, "tgt_top20_logits", true);
  c.rank_ordered(r.ref_top20_logits, r.ref_top20_ids, "ref_top20_logits", true);
  c.rank_ordered(r.tgt_bot20_logits, r.tgt_bot20_ids, "tgt_bot20_logits", false);

  // Pass 3: cross-field consistency.
  for (std::size_t i = 0; i < T; ++i) {
    const auto tt = block(r.tgt_top20_ids, i);
    const auto tb = block(r.tgt_bot20_ids, i);
    const auto rt = block(r.ref_top20_ids, i);
    const auto ttl = block(r.tgt_top20_logits, i);
    const auto tbl = block(r.tgt_bot20_logits, i);
    const auto rtl = block(r.ref_top20_logits, i);
    c.distinct(tt, tb, "tgt_top20_ids/tgt_bot20_ids", i);
    c.distinct(rt, {}, "ref_top20_ids", i);

    const std::uint32_t token = r.token_ids[i + 1];
    if ((r.gt_rank_tgt[i] == 1) != (token == tt[0])) {
      fail(ErrorKind::invariant_violation, "gt_rank_tgt", i,
           "rank 1 must coincide with the target's top-1 token");
    }
    if ((r.gt_rank_ref[i] == 1) != (token == rt[0])) {
      fail(ErrorKind::invariant_violation, "gt_rank_ref", i,
           "rank 1 must coincide with the reference's top-1 token");
    }
    c.rank_consistent(r.gt_rank_tgt[i], token, tt, tb, "gt_rank_tgt", i);
    c.rank_consistent(r.gt_rank_ref[i], token, rt, {}, "gt_rank_ref", i);

    const float tgt_max = ttl[0];
    const float tgt_min = tbl[0];
    const float ref_max = rtl[0];
    auto bounded = [&](float v, float lo, float hi, std::string_view field) {
      if (v > hi || v < lo) fail(ErrorKind::invariant_violation, field, i, "logit outside model range");
    };
    bounded(r.gt_logit_tgt[i], tgt_min, tgt_max, "gt_logit_tgt");
    bounded(r.gt_logit_ref[i], -INFINITY, ref_max, "gt_logit_ref");
    if (auto j = find_id(tt, token); j >= 0 && r.gt_logit_tgt[i] != ttl[j]) {
      fail(ErrorKind::invariant_violation, "gt_logit_tgt", i, "differs from top-20 entry");
    }
    if (auto j = find_id(rt, token); j >= 0 && r.gt_logit_ref[i] != rtl[j]) {
      fail(ErrorKind::invariant_violation, "gt_logit_ref", i, "differs from reference top-20 entry");
    }

    std::set<std::uint32_t> ref_ranks;
    for (std::size_t j = 0; j < kTopK; ++j) {
      const std::uint32_t r_top = r.rank_in_ref_of_tgt_top20[i * kTopK + j];
      const std::uint32_t r_bot = r.rank_in_ref_of_tgt_bot20[i * kTopK + j];
      const std::uint32_t t_of_ref = r.rank_in_tgt_of_ref_top20[i * kTopK + j];
      c.rank_consistent(r_top, tt[j], rt, {}, "rank_in_ref_of_tgt_top20", i);
      c.rank_consistent(r_bot, tb[j], rt, {}, "rank_in_ref_of_tgt_bot20", i);
      c.rank_consistent(t_of_ref, rt[j], tt, tb, "rank_in_tgt_of_ref_top20", i);
      if (!ref_ranks.insert(r_top).second || !ref_ranks.insert(r_bot).second) {
        fail(ErrorKind::invariant_violation, "rank_in_ref_of_tgt_top20/bot20", i,
             "two tokens share a reference rank");
      }
      bounded(r.ref_logits_of_tgt_top20[i * kTopK + j], -INFINITY, ref_max,
              "ref_logits_of_tgt_top20");
      bounded(r.ref_logits_of_tgt_bot20[i * kTopK + j], -INFINITY, ref_max,
              "ref_logits_of_tgt_bot20");
      bounded(r.tgt_logits_of_ref_top20[i * kTopK + j], tgt_min, tgt_max,
              "tgt_logits_of_ref_top20");
      if (auto k = find_id(rt, tt[j]); k >= 0 && r.ref_logits_of_tgt_top20[i * kTopK + j] != rtl[k]) {
        fail(ErrorKind::invariant_violation, "ref_logits_of_tgt_top20", i,
             "differs from reference top-20 entry");
      }
      if (auto k = find_id(tt, rt[j]); k >= 0 && r.tgt_logits_of_ref_top20[i * kTopK + j] != ttl[k]) {
        fail(ErrorKind::invariant_violation, "tgt_logits_of_ref_top20", i,
             "differs from target top-20 entry");
      }
    }
  }
}

TraceDataset::TraceDataset(std::vector<LogitTrace> records) : records_(std::move(records)) {
  std::unordered_set<std::string> ids;
  ids.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!ids.insert(records_[i].sample_id).second) {
      throw Error(ErrorKind::duplicate_id, "duplicate sample_id '" + records_[i].sample_id + "'");
    }
    combos_[combo_of(records_[i])].push_back(i);
  }
}

TraceDataset TraceDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<LogitTrace> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(records_.at(i));
  return TraceDataset(std::move(out));
}

std::vector<std::vector<std::size_t>> stratified_partition(const TraceDataset& ds,
                                                           std::span<const double> fractions,
                                                           std::uint64_t seed) {
  if (fractions.empty()) throw Error(ErrorKind::invalid_argument, "no split fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) {
      throw Error(ErrorKind::invalid_argument, "split fractions must lie in (0, 1]");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_argument, "split fractions must sum to 1");
  }

  std::map<std::pair<ComboKey, Label>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    cells[{combo_of(ds[i]), ds[i].label}].push_back(i);
  }

  const std::size_t parts = fractions.size();
  std::vector<std::vector<std::size_t>> out(parts);
  for (auto& [key, members] : cells) {
    const std::size_t n = members.size();
    std::vector<std::size_t> counts(parts, 0);
    std::size_t assigned = 0;
    for (std::size_t k = 1; k < parts; ++k) {
      counts[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * fractions[k])));
      assigned += counts[k];
    }
    if (n < parts || assigned >= n) {
      throw Error(ErrorKind::insufficient_data,
                  "cell " + key.first.str() + "/" + std::string(to_string(key.second)) + " has " +
                      std::to_string(n) + " records, too few for " + std::to_string(parts) +
                      " split parts");
    }
    counts[0] = n - assigned;

    auto rng = keyed_stream(seed, "split", {fnv1a(key.first.target_model_id),
                                            fnv1a(key.first.dataset_id),
                                            static_cast<std::uint64_t>(key.second)});
    std::vector<std::size_t> order = members;
    rng.shuffle(std::span(order));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < parts; ++k) {
      out[k].insert(out[k].end(), order.begin() + pos, order.begin() + pos + counts[k]);
      pos += counts[k];
    }
  }
  for (auto& part : out) std::sort(part.begin(), part.end());
  return out;
}

DatasetSplit split_dataset(const TraceDataset& ds, const SplitFractions& f, std::uint64_t seed) {
  const double fractions[] = {f.train, f.val, f.test};
  auto parts = stratified_partition(ds, fractions, seed);
  return {ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

SplitFractions parse_split(std::string_view text) {
  std::vector<double> values;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto token = text.substr(0, comma);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw Error(ErrorKind::invalid_argument, "bad split fraction '" + std::string(token) + "'");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (values.size() != 3) {
    throw Error(ErrorKind::invalid_argument, "split needs three fractions train,val,test");
  }
  return {values[0], values[1], values[2]};
}

}  // namespace ltmia
