#include <nlohmann/json.hpp>

#include "ltmia/error.hpp"
#include "ltmia/eval.hpp"
#include "ltmia/prng.hpp"

namespace ltmia {

FeatureSet permute_group(const FeatureSet& set, const FeatureGroup& group, std::span<const std::size_t> perm) {
  if (perm.size() != set.size()) throw Error(ErrorKind::shape_mismatch, "permutation size differs from the set");
  FeatureSet out = set;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const FeatureTensor& src = set.samples[perm[i]].x;
    FeatureTensor& dst = out.samples[i].x;
    for (std::size_t t = 0; t < dst.length; ++t) {
      auto row = dst.row(t);
      for (std::size_t c : group.channels) row[c] = src.at(t, c);
    }
  }
  return out;
}

ImportanceReport permutation_importance(const ClassifierCheckpoint& ckpt, const FeatureSet& eval_set,
                                        const std::vector<FeatureGroup>& groups, std::size_t repeats,
                                        std::uint64_t seed, unsigned threads,
                                        const PermutationProvider& permutation) {
  if (repeats == 0) throw Error(ErrorKind::invalid_argument, "importance needs at least one repeat");
  for (const auto& g : groups) {
    for (std::size_t c : g.channels) {
      if (c >= kChannels) throw Error(ErrorKind::invalid_argument, "group " + g.name + " has channel out of range");
    }
  }
  ImportanceReport report;
  report.repeats = repeats;
  report.seed = seed;
  report.baseline_auc = evaluate_auc(ckpt, eval_set, threads);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    GroupImportance gr;
    gr.name = groups[gi].name;
    gr.channels = groups[gi].channels.size();
    double sum = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      std::vector<std::size_t> perm;
      if (permutation) {
        perm = permutation(eval_set.size(), gi, r);
      } else {
        perm = identity_permutation(eval_set.size());
        keyed_stream(seed, "importance", {gi, r}).shuffle(std::span<std::size_t>(perm));
      }
      const double auc = evaluate_auc(ckpt, permute_group(eval_set, groups[gi], perm), threads);
      gr.drops.push_back(report.baseline_auc - auc);
      sum += gr.drops.back();
    }
    gr.mean_drop = sum / static_cast<double>(repeats);
    report.groups.push_back(std::move(gr));
  }
  return report;
}

std::string importance_json(const ImportanceReport& report) {
  nlohmann::ordered_json j;
  j["baseline_auc"] = report.baseline_auc;
  j["repeats"] = report.repeats;
  j["seed"] = report.seed;
  auto groups = nlohmann::ordered_json::array();
  for (const auto& g : report.groups) {
    groups.push_back({{"group", g.name}, {"channels", g.channels}, {"mean_drop", g.mean_drop}, {"drops", g.drops}});
  }
  j["groups"] = std::move(groups);
  return j.dump(2) + "\n";
}

}  // namespace ltmia
