#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ltmia/trace.hpp"

namespace ltmia {

enum class Method { loss, minkpp, zlib, refloss, ezmia, ltmia };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Membership score; higher means more member-like.
struct AttackScore {
  std::string sample_id;
  Method method = Method::loss;
  double score = 0.0;
  Label label = Label::unknown;
  std::string target_model_id;
  std::string dataset_id;
};

struct MinKConfig {
  double k_fraction = 0.2;
  double sigma_floor = 1e-6;
};

AttackScore attack_loss(const LogitTrace& record);
AttackScore attack_refloss(const LogitTrace& record);
AttackScore attack_minkpp(const LogitTrace& record, const MinKConfig& cfg = {});
AttackScore attack_zlib(const LogitTrace& record);
AttackScore attack_ezmia(const LogitTrace& record);

/// Raw DEFLATE (RFC 1951) at level 6; returns the compressed byte count.
std::size_t deflate_size(std::string_view bytes);

struct AttackConfig {
  MinKConfig minkpp;
};

/// One score per record in record order. Per-record failures are rethrown
/// with the sample id attached. Not valid for Method::ltmia (see classifier).
std::vector<AttackScore> run_attack(const TraceDataset& ds, Method method,
                                    const AttackConfig& cfg = {}, unsigned threads = 1);

// CSV columns: sample_id,method,score,label,target_model_id,dataset_id
std::string scores_csv_header();
void write_scores_csv(const std::string& path, const std::vector<AttackScore>& scores);
std::vector<AttackScore> read_scores_csv(const std::string& path);

}  // namespace ltmia
