#include <algorithm>

#include <nlohmann/json.hpp>

#include "ltmia/error.hpp"
#include "ltmia/eval.hpp"
#include "ltmia/prng.hpp"

namespace ltmia {

std::vector<DiversityRow> diversity_ablation(const FeatureSet& pool, const FeatureSet& heldout,
                                             const DiversityConfig& cfg, unsigned threads) {
  if (cfg.combo_counts.empty()) throw Error(ErrorKind::invalid_argument, "no combo counts given");
  for (const auto& h : heldout.combos) {
    if (std::find(pool.combos.begin(), pool.combos.end(), h) != pool.combos.end()) {
      throw Error(ErrorKind::invalid_argument, "held-out combination " + h.str() + " is also a training combination");
    }
  }
  // per combo, per label (0 = nonmember, 1 = member)
  std::vector<std::array<std::vector<std::size_t>, 2>> cells(pool.combos.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = pool.samples[i];
    if (s.label == Label::unknown) throw Error(ErrorKind::invalid_argument, "unlabeled sample " + s.sample_id);
    cells[s.combo][s.label == Label::member ? 1 : 0].push_back(i);
  }
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c][0].empty() || !cells[c][1].empty()) order.push_back(c);
  }
  keyed_stream(cfg.seed, "diversity-order", {}).shuffle(std::span<std::size_t>(order));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t y = 0; y < 2; ++y) keyed_stream(cfg.seed, "diversity-split", {c, y}).shuffle(std::span(cells[c][y]));
  }

  std::vector<DiversityRow> rows;
  for (std::size_t C : cfg.combo_counts) {
    if (C == 0 || C > order.size()) {
      throw Error(ErrorKind::insufficient_data,
                  "requested " + std::to_string(C) + " combinations, " + std::to_string(order.size()) + " available");
    }
    const std::size_t per_label_train = cfg.total_samples / C / 2;
    const std::size_t per_label_val = std::max<std::size_t>(1, cfg.val_total / C / 2);
    const std::size_t per_label_test = cfg.test_per_combo / 2;
    if (per_label_train == 0 || per_label_test == 0) {
      throw Error(ErrorKind::insufficient_data, "too few samples per combination for C = " + std::to_string(C));
    }
    std::vector<std::size_t> train_idx, val_idx, test_idx;
    for (std::size_t k = 0; k < C; ++k) {
      const auto& cell = cells[order[k]];
      for (std::size_t y = 0; y < 2; ++y) {
        const auto& v = cell[y];
        if (v.size() < per_label_test + per_label_val + per_label_train) {
          throw Error(ErrorKind::insufficient_data, "combination " + pool.combos[order[k]].str() +
                                                        " has too few samples for C = " + std::to_string(C));
        }
        auto it = v.begin();
        test_idx.insert(test_idx.end(), it, it + static_cast<std::ptrdiff_t>(per_label_test));
        it += static_cast<std::ptrdiff_t>(per_label_test);
        val_idx.insert(val_idx.end(), it, it + static_cast<std::ptrdiff_t>(per_label_val));
        it += static_cast<std::ptrdiff_t>(per_label_val);
        train_idx.insert(train_idx.end(), it, it + static_cast<std::ptrdiff_t>(per_label_train));
      }
    }
    for (auto* v : {&train_idx, &val_idx, &test_idx}) std::sort(v->begin(), v->end());
    TrainConfig tcfg = cfg.train;
    tcfg.threads = threads;
    const auto result = train(pool.subset(train_idx), pool.subset(val_idx), tcfg, cfg.classifier);
    DiversityRow row;
    row.combos = C;
    row.samples_per_combo = 2 * per_label_train;
    row.train_auc = evaluate_auc(result.best, pool.subset(test_idx), threads);
    row.eval_auc = evaluate_auc(result.best, heldout, threads);
    rows.push_back(row);
  }
  return rows;
}

std::string diversity_json(const std::vector<DiversityRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"combos", r.combos},
                   {"samples_per_combo", r.samples_per_combo},
                   {"train_auc", r.train_auc},
                   {"eval_auc", r.eval_auc},
                   {"gap", r.gap()}});
  }
  return nlohmann::ordered_json{{"rows", std::move(arr)}}.dump(2) + "\n";
}

}  // namespace ltmia
