#include "ltmia/attacks.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ltmia/error.hpp"
#include "ltmia/parallel.hpp"

namespace ltmia {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::loss: return "loss";
    case Method::minkpp: return "minkpp";
    case Method::zlib: return "zlib";
    case Method::refloss: return "refloss";
    case Method::ezmia: return "ezmia";
    case Method::ltmia: return "ltmia";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::loss, Method::minkpp, Method::zlib, Method::refloss, Method::ezmia,
                   Method::ltmia}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorKind::invalid_argument, "unknown method '" + std::string(text) + "'");
}

namespace {

AttackScore make_score(const LogitTrace& r, Method method, double score) {
  if (!std::isfinite(score)) {
    throw Error(ErrorKind::invariant_violation,
                std::string(to_string(method)) + " produced a non-finite score");
  }
  return {r.sample_id, method, score, r.label, r.target_model_id, r.dataset_id};
}

void require_positions(const LogitTrace& r) {
  if (r.positions() == 0) throw Error(ErrorKind::empty_sequence, "record has no positions");
}

double mean_of(const std::vector<float>& v) {
  double s = 0.0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

AttackScore attack_loss(const LogitTrace& r) {
  require_positions(r);
  // loss = -logprob, score = -mean(loss) = mean(logprob)
  return make_score(r, Method::loss, mean_of(r.gt_logprob_tgt));
}

AttackScore attack_refloss(const LogitTrace& r) {
  require_positions(r);
  const double mean_loss_ref = -mean_of(r.gt_logprob_ref);
  const double mean_loss_tgt = -mean_of(r.gt_logprob_tgt);
  return make_score(r, Method::refloss, mean_loss_ref - mean_loss_tgt);
}

AttackScore attack_minkpp(const LogitTrace& r, const MinKConfig& cfg) {
  require_positions(r);
  if (!(cfg.k_fraction > 0.0 && cfg.k_fraction <= 1.0) || !(cfg.sigma_floor > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "Min-K%++ needs k_fraction in (0,1] and sigma_floor > 0");
  }
  const std::size_t T = r.positions();
  std::vector<double> s(T);
  for (std::size_t i = 0; i < T; ++i) {
    const double sigma = std::max<double>(r.sigma_logprob_tgt[i], cfg.sigma_floor);
    s[i] = (static_cast<double>(r.gt_logprob_tgt[i]) - r.mu_logprob_tgt[i]) / sigma;
  }
  const auto k = std::min<std::size_t>(
      T, static_cast<std::size_t>(std::ceil(cfg.k_fraction * static_cast<double>(T) - 1e-12)));
  std::sort(s.begin(), s.end());
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += s[i];
  return make_score(r, Method::minkpp, total / static_cast<double>(k));
}

std::size_t deflate_size(std::string_view bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(ErrorKind::io, "deflateInit2 failed");
  }
  std::vector<unsigned char> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const std::size_t size = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(ErrorKind::io, "deflate did not finish");
  return size;
}

AttackScore attack_zlib(const LogitTrace& r) {
  require_positions(r);
  if (r.text.empty()) throw Error(ErrorKind::invalid_argument, "zlib attack needs non-empty text");
  double loss_sum = 0.0;
  for (float lp : r.gt_logprob_tgt) loss_sum -= lp;
  return make_score(r, Method::zlib, -loss_sum / static_cast<double>(deflate_size(r.text)));
}

AttackScore attack_ezmia(const LogitTrace& r) {
  require_positions(r);
  const std::size_t T = r.positions();
  double shift_sum = 0.0;
  std::size_t errors = 0;
  double all_sum = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double shift = std::exp(static_cast<double>(r.gt_logprob_tgt[i])) -
                         std::exp(static_cast<double>(r.gt_logprob_ref[i]));
    all_sum += shift;
    if (r.gt_rank_tgt[i] > 1) {
      shift_sum += shift;
      ++errors;
    }
  }
  const double score = errors > 0 ? shift_sum / static_cast<double>(errors)
                                  : all_sum / static_cast<double>(T);
  return make_score(r, Method::ezmia, score);
}

std::vector<AttackScore> run_attack(const TraceDataset& ds, Method method, const AttackConfig& cfg,
                                    unsigned threads) {
  if (ds.empty()) throw Error(ErrorKind::insufficient_data, "attack on an empty dataset");
  if (method == Method::ltmia) {
    throw Error(ErrorKind::invalid_argument, "ltmia scores come from a trained checkpoint");
  }
  std::vector<AttackScore> out(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    const auto& r = ds[i];
    try {
      switch (method) {
        case Method::loss: out[i] = attack_loss(r); break;
        case Method::refloss: out[i] = attack_refloss(r); break;
        case Method::minkpp: out[i] = attack_minkpp(r, cfg.minkpp); break;
        case Method::zlib: out[i] = attack_zlib(r); break;
        case Method::ezmia: out[i] = attack_ezmia(r); break;
        case Method::ltmia: break;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "sample '" + r.sample_id + "': " + e.what());
    }
  });
  return out;
}

std::string scores_csv_header() { return "sample_id,method,score,label,target_model_id,dataset_id"; }

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void check_csv_field(const std::string& field) {
  if (field.find_first_of(",\n\r\"") != std::string::npos) {
    throw Error(ErrorKind::invalid_argument, "CSV field contains a separator: '" + field + "'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_scores_csv(const std::string& path, const std::vector<AttackScore>& scores) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << scores_csv_header() << '\n';
  for (const auto& s : scores) {
    check_csv_field(s.sample_id);
    check_csv_field(s.target_model_id);
    check_csv_field(s.dataset_id);
    out << s.sample_id << ',' << to_string(s.method) << ',' << format_double(s.score) << ','
        << to_string(s.label) << ',' << s.target_model_id << ',' << s.dataset_id << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

std::vector<AttackScore> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != scores_csv_header()) {
    throw Error(ErrorKind::malformed_record, path + ": unexpected CSV header");
  }
  std::vector<AttackScore> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 6) {
      throw Error(ErrorKind::malformed_record, path + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    AttackScore s;
    s.sample_id = cells[0];
    s.method = parse_method(cells[1]);
    const auto [ptr, ec] = std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), s.score);
    if (ec != std::errc{} || ptr != cells[2].data() + cells[2].size()) {
      throw Error(ErrorKind::malformed_record, path + ":" + std::to_string(line_no) + ": bad score");
    }
    s.label = parse_label(cells[3]);
    s.target_model_id = cells[4];
    s.dataset_id = cells[5];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ltmia
