#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ltmia/base64.hpp"
#include "ltmia/error.hpp"
#include "ltmia/trace.hpp"

namespace ltmia {

using nlohmann::json;

namespace {

// Every key of the envelope. nlohmann::json keeps object keys sorted, which
// gives the canonical alphabetical order on output.
constexpr std::string_view kFields[] = {
    "dataset_id",
    "gt_logit_ref",
    "gt_logit_tgt",
    "gt_logprob_ref",
    "gt_logprob_tgt",
    "gt_rank_ref",
    "gt_rank_tgt",
    "label",
    "mu_logprob_tgt",
    "rank_in_ref_of_tgt_bot20",
    "rank_in_ref_of_tgt_top20",
    "rank_in_tgt_of_ref_top20",
    "ref_logits_of_tgt_bot20",
    "ref_logits_of_tgt_top20",
    "ref_top20_ids",
    "ref_top20_logits",
    "reference_model_id",
    "sample_id",
    "schema_version",
    "sigma_logprob_tgt",
    "target_model_id",
    "text",
    "tgt_bot20_ids",
    "tgt_bot20_logits",
    "tgt_logits_of_ref_top20",
    "tgt_top20_ids",
    "tgt_top20_logits",
    "token_ids",
    "vocab_size",
};

template <typename Record, typename Visitor>
void visit_arrays(Record& r, Visitor&& v) {
  v("token_ids", r.token_ids);
  v("gt_logprob_tgt", r.gt_logprob_tgt);
  v("gt_logprob_ref", r.gt_logprob_ref);
  v("gt_logit_tgt", r.gt_logit_tgt);
  v("gt_logit_ref", r.gt_logit_ref);
  v("gt_rank_tgt", r.gt_rank_tgt);
  v("gt_rank_ref", r.gt_rank_ref);
  v("tgt_top20_ids", r.tgt_top20_ids);
  v("tgt_top20_logits", r.tgt_top20_logits);
  v("tgt_bot20_ids", r.tgt_bot20_ids);
  v("tgt_bot20_logits", r.tgt_bot20_logits);
  v("ref_logits_of_tgt_top20", r.ref_logits_of_tgt_top20);
  v("ref_logits_of_tgt_bot20", r.ref_logits_of_tgt_bot20);
  v("ref_top20_ids", r.ref_top20_ids);
  v("ref_top20_logits", r.ref_top20_logits);
  v("tgt_logits_of_ref_top20", r.tgt_logits_of_ref_top20);
  v("rank_in_ref_of_tgt_top20", r.rank_in_ref_of_tgt_top20);
  v("rank_in_ref_of_tgt_bot20", r.rank_in_ref_of_tgt_bot20);
  v("rank_in_tgt_of_ref_top20", r.rank_in_tgt_of_ref_top20);
  v("mu_logprob_tgt", r.mu_logprob_tgt);
  v("sigma_logprob_tgt", r.sigma_logprob_tgt);
}

std::string pack(const std::vector<float>& v) { return base64::encode_f32(v); }
std::string pack(const std::vector<std::uint32_t>& v) { return base64::encode_u32(v); }
void unpack(std::string_view s, std::vector<float>& out) { out = base64::decode_f32(s); }
void unpack(std::string_view s, std::vector<std::uint32_t>& out) { out = base64::decode_u32(s); }

const json& field(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::malformed_record, "missing field '" + std::string(key) + "'");
  }
  return *it;
}

std::string string_field(const json& obj, std::string_view key) {
  const auto& v = field(obj, key);
  if (!v.is_string()) {
    throw Error(ErrorKind::malformed_record, "field '" + std::string(key) + "' must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

std::string encode_trace(const LogitTrace& record) {
  validate(record);
  json obj = json::object();
  obj["schema_version"] = record.schema_version;
  obj["sample_id"] = record.sample_id;
  obj["label"] = std::string(to_string(record.label));
  obj["target_model_id"] = record.target_model_id;
  obj["reference_model_id"] = record.reference_model_id;
  obj["dataset_id"] = record.dataset_id;
  obj["vocab_size"] = record.vocab_size;
  obj["text"] = record.text;
  visit_arrays(record,
               [&](std::string_view key, const auto& values) { obj[std::string(key)] = pack(values); });
  try {
    return obj.dump();
  } catch (const json::type_error& e) {
    throw Error(ErrorKind::invariant_violation, std::string("field 'text': ") + e.what());
  }
}

LogitTrace decode_trace(std::string_view line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::malformed_record, std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw Error(ErrorKind::malformed_record, "record is not a JSON object");

  LogitTrace r;
  r.schema_version = string_field(obj, "schema_version");
  if (r.schema_version != kTraceSchema) {
    throw Error(ErrorKind::unknown_schema, "unknown schema_version '" + r.schema_version + "'");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(std::begin(kFields), std::end(kFields), key) == std::end(kFields)) {
      throw Error(ErrorKind::malformed_record, "unknown field '" + key + "'");
    }
  }
  r.sample_id = string_field(obj, "sample_id");
  r.label = parse_label(string_field(obj, "label"));
  r.target_model_id = string_field(obj, "target_model_id");
  r.reference_model_id = string_field(obj, "reference_model_id");
  r.dataset_id = string_field(obj, "dataset_id");
  r.text = string_field(obj, "text");
  const auto& vocab = field(obj, "vocab_size");
  if (!vocab.is_number_unsigned() || vocab.get<std::uint64_t>() > UINT32_MAX) {
    throw Error(ErrorKind::malformed_record, "field 'vocab_size' must be a 32-bit unsigned integer");
  }
  r.vocab_size = vocab.get<std::uint32_t>();

  visit_arrays(r, [&](std::string_view key, auto& values) {
    const std::string text = string_field(obj, key);
    try {
      unpack(text, values);
    } catch (const Error& e) {
      throw Error(e.kind(), "field '" + std::string(key) + "': " + e.what());
    }
  });
  validate(r);
  return r;
}

TraceDataset load_dataset(std::span<const std::filesystem::path> paths, const LoadOptions& options,
                          LoadStats* stats) {
  LoadStats local;
  std::vector<LogitTrace> records;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open trace file " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++local.lines;
      LogitTrace record;
      try {
        record = decode_trace(line);
      } catch (const Error& e) {
        if (options.lenient) {
          ++local.skipped;
          continue;
        }
        throw Error(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (options.filter && !options.filter(record)) {
        ++local.filtered_out;
        continue;
      }
      records.push_back(std::move(record));
    }
  }
  if (stats) *stats = local;
  return TraceDataset(std::move(records));
}

void write_traces(const std::filesystem::path& path, std::span<const LogitTrace> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write trace file " + path.string());
  for (const auto& r : records) out << encode_trace(r) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace ltmia
