#include <algorithm>
#include <charconv>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "ltmia/error.hpp"
#include "ltmia/eval.hpp"

namespace ltmia {

using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

EvalReport build_report(const std::vector<AttackScore>& scores, const FamilyOf& family_of) {
  std::map<std::pair<Method, ComboKey>, std::vector<LabeledScore>> cells;
  for (const auto& s : scores) {
    if (s.label == Label::unknown) {
      throw Error(ErrorKind::invalid_argument, "score for " + s.sample_id + " has no label");
    }
    cells[{s.method, ComboKey{s.target_model_id, s.dataset_id}}].push_back({s.score, s.label == Label::member});
  }
  if (cells.empty()) throw Error(ErrorKind::insufficient_data, "no scores to report");

  EvalReport report;
  for (const auto& [key, cell] : cells) {
    ComboMetrics row;
    row.method = key.first;
    row.combo = key.second;
    row.family = family_of ? family_of(key.second) : std::string("all");
    for (const auto& s : cell) (s.member ? row.n_members : row.n_nonmembers)++;
    try {
      row.auc = roc_auc(cell);
      row.tpr_at_fpr_1pct = tpr_at_fpr(cell, 0.01);
      row.tpr_at_fpr_01pct = tpr_at_fpr(cell, 0.001);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(to_string(key.first)) + " on " + key.second.str() + ": " + e.what());
    }
    report.rows.push_back(std::move(row));
  }

  std::map<std::pair<Method, std::string>, std::vector<const ComboMetrics*>> fam;
  for (const auto& r : report.rows) fam[{r.method, r.family}].push_back(&r);
  for (const auto& [key, rows] : fam) {
    FamilyMetrics f{key.first, key.second, rows.size()};
    for (const auto* r : rows) {
      f.mean_auc += r->auc;
      f.mean_tpr_at_fpr_1pct += r->tpr_at_fpr_1pct;
      f.mean_tpr_at_fpr_01pct += r->tpr_at_fpr_01pct;
    }
    const double n = static_cast<double>(rows.size());
    f.mean_auc /= n;
    f.mean_tpr_at_fpr_1pct /= n;
    f.mean_tpr_at_fpr_01pct /= n;
    report.families.push_back(std::move(f));
  }

  std::map<Method, std::map<ComboKey, double>> auc_by;
  for (const auto& r : report.rows) auc_by[r.method][r.combo] = r.auc;
  for (auto a = auc_by.begin(); a != auc_by.end(); ++a) {
    for (auto b = std::next(a); b != auc_by.end(); ++b) {
      PairedTest t;
      t.a = a->first;
      t.b = b->first;
      std::vector<double> diffs;
      for (const auto& [combo, auc] : a->second) {
        if (auto it = b->second.find(combo); it != b->second.end()) diffs.push_back(auc - it->second);
      }
      t.shared_combos = diffs.size();
      t.mean_auc_difference = mean(diffs);
      const auto nonzero = std::count_if(diffs.begin(), diffs.end(), [](double d) { return d != 0.0; });
      if (nonzero >= 5) t.wilcoxon = wilcoxon_signed_rank(diffs);
      report.pairs.push_back(std::move(t));
    }
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  ordered_json j;
  j["schema"] = std::string(kReportSchema);
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"method", std::string(to_string(r.method))},
                    {"target_model_id", r.combo.target_model_id},
                    {"dataset_id", r.combo.dataset_id},
                    {"family", r.family},
                    {"auc", r.auc},
                    {"tpr_at_fpr_1pct", r.tpr_at_fpr_1pct},
                    {"tpr_at_fpr_01pct", r.tpr_at_fpr_01pct},
                    {"n_members", r.n_members},
                    {"n_nonmembers", r.n_nonmembers}});
  }
  j["combos"] = std::move(rows);
  ordered_json fams = ordered_json::array();
  for (const auto& f : report.families) {
    fams.push_back({{"method", std::string(to_string(f.method))},
                    {"family", f.family},
                    {"combos", f.combos},
                    {"mean_auc", f.mean_auc},
                    {"mean_tpr_at_fpr_1pct", f.mean_tpr_at_fpr_1pct},
                    {"mean_tpr_at_fpr_01pct", f.mean_tpr_at_fpr_01pct}});
  }
  j["families"] = std::move(fams);
  ordered_json pairs = ordered_json::array();
  for (const auto& p : report.pairs) {
    ordered_json e{{"method_a", std::string(to_string(p.a))},
                   {"method_b", std::string(to_string(p.b))},
                   {"shared_combos", p.shared_combos},
                   {"mean_auc_difference", p.mean_auc_difference}};
    if (p.wilcoxon) {
      e["wilcoxon"] = {{"statistic", p.wilcoxon->statistic}, {"w_plus", p.wilcoxon->w_plus},
                       {"w_minus", p.wilcoxon->w_minus},     {"z", p.wilcoxon->z},
                       {"p_value", p.wilcoxon->p_value},     {"n", p.wilcoxon->n}};
    } else {
      e["wilcoxon"] = nullptr;
    }
    pairs.push_back(std::move(e));
  }
  j["paired_tests"] = std::move(pairs);
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
  std::string out = "method,target_model_id,dataset_id,family,auc,tpr_at_fpr_1pct,tpr_at_fpr_01pct,n_members,n_nonmembers\n";
  for (const auto& r : report.rows) {
    out += std::string(to_string(r.method)) + ',' + r.combo.target_model_id + ',' + r.combo.dataset_id + ',' +
           r.family + ',' + fmt(r.auc) + ',' + fmt(r.tpr_at_fpr_1pct) + ',' + fmt(r.tpr_at_fpr_01pct) + ',' +
           std::to_string(r.n_members) + ',' + std::to_string(r.n_nonmembers) + '\n';
  }
  return out;
}

}  // namespace ltmia
