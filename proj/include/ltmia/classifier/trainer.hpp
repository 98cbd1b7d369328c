#pragma once

#include <functional>
#include <vector>

#include "ltmia/attacks.hpp"
#include "ltmia/classifier/checkpoint.hpp"
#include "ltmia/features.hpp"

namespace ltmia {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean over the epoch's batches
  double val_auc = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  ClassifierCheckpoint best;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from scratch; returns the epoch with the highest pooled validation
/// AUC (earliest on ties). Throws Error{single_class} when either set lacks a
/// label and Error{divergence} on a non-finite batch loss.
TrainResult train(const FeatureSet& train_set, const FeatureSet& val_set, const TrainConfig& tcfg,
                  const ClassifierConfig& ccfg, const EpochCallback& on_epoch = {});

/// Batch composition for one step: sample indices into `set`.
std::vector<std::size_t> draw_batch(const FeatureSet& set, const std::vector<std::vector<std::size_t>>& by_combo,
                                    const TrainConfig& cfg, std::size_t epoch, std::size_t step);

/// Raw logits in sample order, evaluation mode.
std::vector<double> predict_logits(const ClassifierCheckpoint& ckpt, const FeatureSet& set,
                                   unsigned threads = 1);

/// Membership probabilities (sigmoid of the logit) in sample order.
std::vector<double> predict(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads = 1);

std::vector<AttackScore> score(const ClassifierCheckpoint& ckpt, const FeatureSet& set,
                               unsigned threads = 1);
std::vector<AttackScore> score(const ClassifierCheckpoint& ckpt, const TraceDataset& ds,
                               unsigned threads = 1);

/// Pooled AUC of `ckpt` on a labeled set.
double evaluate_auc(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads = 1);

}  // namespace ltmia
