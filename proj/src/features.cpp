#include "ltmia/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "ltmia/base64.hpp"
#include "ltmia/error.hpp"
#include "ltmia/parallel.hpp"

namespace ltmia {

std::array<ChannelRange, 3> feature_group_slices() {
  return {ChannelRange{0, 45}, ChannelRange{45, 90}, ChannelRange{90, kChannels}};
}

std::vector<FeatureGroup> default_feature_groups() {
  static constexpr const char* kNames[] = {"target", "reference", "comparison"};
  std::vector<FeatureGroup> groups;
  const auto slices = feature_group_slices();
  for (std::size_t g = 0; g < slices.size(); ++g) {
    FeatureGroup group{kNames[g], {}};
    for (std::size_t c = slices[g].begin; c < slices[g].end; ++c) group.channels.push_back(c);
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<float> FeatureTensor::dense() const {
  std::vector<float> out(kMaxPositions * kChannels, 0.0f);
  std::copy(values.begin(), values.end(), out.begin());
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
  double sum = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  for (double x : xs) m.sum += x;
  m.mean = m.sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(xs.size()));
  return m;
}

// Writes block[j] - max(block) for a contiguous 20-logit block.
void write_block(std::span<float> row, std::size_t first, std::span<const float> logits) {
  const float top = *std::max_element(logits.begin(), logits.end());
  for (std::size_t j = 0; j < kTopK; ++j) {
    row[first + j] = static_cast<float>(static_cast<double>(logits[j]) - top);
  }
}

}  // namespace

FeatureTensor extract_features(const LogitTrace& r) {
  const std::size_t T = r.positions();
  if (T == 0) throw Error(ErrorKind::empty_sequence, "sample '" + r.sample_id + "' has no positions");
  if (r.vocab_size < kMinVocab) {
    throw Error(ErrorKind::vocab_too_small,
                "sample '" + r.sample_id + "': vocab_size " + std::to_string(r.vocab_size) + " < 40");
  }
  if (T > kMaxPositions || r.gt_logprob_tgt.size() != T || r.tgt_top20_logits.size() != T * kTopK ||
      r.rank_in_tgt_of_ref_top20.size() != T * kTopK) {
    throw Error(ErrorKind::shape_mismatch, "sample '" + r.sample_id + "' has inconsistent array shapes");
  }

  const double log_v1 = std::log(static_cast<double>(r.vocab_size) + 1.0);
  auto rank_feature = [log_v1](std::uint32_t rank) {
    return static_cast<float>(std::log(static_cast<double>(rank)) / log_v1);
  };

  std::vector<double> loss_tgt(T), loss_ref(T), diff(T);
  for (std::size_t i = 0; i < T; ++i) {
    loss_tgt[i] = -static_cast<double>(r.gt_logprob_tgt[i]);
    loss_ref[i] = -static_cast<double>(r.gt_logprob_ref[i]);
    diff[i] = loss_tgt[i] - loss_ref[i];
  }
  const Moments mt = moments(loss_tgt);
  const Moments mr = moments(loss_ref);
  const Moments md = moments(diff);

  FeatureTensor out;
  out.length = T;
  out.values.assign(T * kChannels, 0.0f);
  for (std::size_t i = 0; i < T; ++i) {
    auto row = out.row(i);
    auto blk = [&](const std::vector<float>& v) {
      return std::span<const float>(v).subspan(i * kTopK, kTopK);
    };
    auto rank_blk = [&](const std::vector<std::uint32_t>& v, std::size_t first) {
      for (std::size_t j = 0; j < kTopK; ++j) row[first + j] = rank_feature(v[i * kTopK + j]);
    };
    const float tgt_top1 = r.tgt_top20_logits[i * kTopK];
    const float ref_top1 = r.ref_top20_logits[i * kTopK];

    row[channel::loss_tgt] = -r.gt_logprob_tgt[i];
    write_block(row, channel::tgt_top20, blk(r.tgt_top20_logits));
    write_block(row, channel::tgt_bot20, blk(r.tgt_bot20_logits));
    row[channel::gt_logit_tgt] = static_cast<float>(static_cast<double>(r.gt_logit_tgt[i]) - tgt_top1);
    row[channel::gt_rank_tgt] = rank_feature(r.gt_rank_tgt[i]);
    row[channel::mean_loss_tgt] = static_cast<float>(mt.mean);
    row[channel::std_loss_tgt] = static_cast<float>(mt.stddev);

    row[channel::loss_ref] = -r.gt_logprob_ref[i];
    write_block(row, channel::ref_of_tgt_top20, blk(r.ref_logits_of_tgt_top20));
    write_block(row, channel::ref_of_tgt_bot20, blk(r.ref_logits_of_tgt_bot20));
    row[channel::gt_logit_ref] = static_cast<float>(static_cast<double>(r.gt_logit_ref[i]) - ref_top1);
    row[channel::gt_rank_ref] = rank_feature(r.gt_rank_ref[i]);
    row[channel::mean_loss_ref] = static_cast<float>(mr.mean);
    row[channel::std_loss_ref] = static_cast<float>(mr.stddev);

    row[channel::loss_diff] = static_cast<float>(diff[i]);
    row[channel::mean_loss_diff] = static_cast<float>(md.mean);
    row[channel::std_loss_diff] = static_cast<float>(md.stddev);
    row[channel::total_llr] = static_cast<float>(md.sum);
    rank_blk(r.rank_in_ref_of_tgt_top20, channel::rank_in_ref_of_tgt_top20);
    rank_blk(r.rank_in_tgt_of_ref_top20, channel::rank_in_tgt_of_ref_top20);
    rank_blk(r.rank_in_ref_of_tgt_bot20, channel::rank_in_ref_of_tgt_bot20);
  }
  return out;
}

FeatureSet FeatureSet::subset(std::span<const std::size_t> indices) const {
  FeatureSet out;
  out.combos = combos;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(samples.at(i));
  return out;
}

FeatureSet extract_feature_set(const TraceDataset& ds, unsigned threads) {
  FeatureSet out;
  std::map<ComboKey, std::size_t> combo_index;
  for (const auto& [key, _] : ds.combos()) {
    combo_index.emplace(key, out.combos.size());
    out.combos.push_back(key);
  }
  out.samples.resize(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    const auto& r = ds[i];
    auto& s = out.samples[i];
    try {
      s.x = extract_features(r);
    } catch (const Error& e) {
      throw Error(e.kind(), "sample '" + r.sample_id + "': " + e.what());
    }
    s.sample_id = r.sample_id;
    s.label = r.label;
    s.combo = combo_index.at(combo_of(r));
  });
  return out;
}

void append_feature_set(FeatureSet& into, const FeatureSet& more) {
  std::vector<std::size_t> remap(more.combos.size());
  for (std::size_t c = 0; c < more.combos.size(); ++c) {
    const auto it = std::find(into.combos.begin(), into.combos.end(), more.combos[c]);
    if (it == into.combos.end()) {
      remap[c] = into.combos.size();
      into.combos.push_back(more.combos[c]);
    } else {
      remap[c] = static_cast<std::size_t>(it - into.combos.begin());
    }
  }
  for (const auto& s : more.samples) {
    into.samples.push_back(s);
    into.samples.back().combo = remap[s.combo];
  }
}

std::string encode_feature_line(const FeatureSample& sample, const ComboKey& combo) {
  nlohmann::json obj;
  obj["sample_id"] = sample.sample_id;
  obj["label"] = std::string(to_string(sample.label));
  obj["combo"] = {{"dataset_id", combo.dataset_id}, {"target_model_id", combo.target_model_id}};
  obj["layout"] = std::string(kFeatureLayout);
  obj["mask_length"] = sample.x.length;
  obj["values"] = base64::encode_f32(sample.x.dense());
  return obj.dump();
}

FeatureSample decode_feature_line(std::string_view line, ComboKey* combo) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_record, std::string("invalid feature line: ") + e.what());
  }
  try {
    if (obj.at("layout").get<std::string>() != kFeatureLayout) {
      throw Error(ErrorKind::unknown_schema, "unknown feature layout");
    }
    FeatureSample s;
    s.sample_id = obj.at("sample_id").get<std::string>();
    s.label = parse_label(obj.at("label").get<std::string>());
    if (combo) {
      combo->target_model_id = obj.at("combo").at("target_model_id").get<std::string>();
      combo->dataset_id = obj.at("combo").at("dataset_id").get<std::string>();
    }
    const auto length = obj.at("mask_length").get<std::size_t>();
    auto dense = base64::decode_f32(obj.at("values").get<std::string>());
    if (dense.size() != kMaxPositions * kChannels || length > kMaxPositions) {
      throw Error(ErrorKind::wrong_array_length, "feature values must be 128 x 154");
    }
    s.x.length = length;
    s.x.values.assign(dense.begin(), dense.begin() + static_cast<std::ptrdiff_t>(length * kChannels));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_record, std::string("invalid feature line: ") + e.what());
  }
}

void write_feature_set(const std::filesystem::path& path, const FeatureSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& s : set.samples) out << encode_feature_line(s, set.combos[s.combo]) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

FeatureSet load_feature_set(std::span<const std::filesystem::path> paths) {
  FeatureSet set;
  std::map<ComboKey, std::size_t> index;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (line.empty()) continue;
      ComboKey key;
      try {
        set.samples.push_back(decode_feature_line(line, &key));
      } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
      auto [it, fresh] = index.try_emplace(key, set.combos.size());
      if (fresh) set.combos.push_back(key);
      set.samples.back().combo = it->second;
    }
  }
  return set;
}

}  // namespace ltmia
