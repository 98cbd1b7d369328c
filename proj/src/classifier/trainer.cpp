#include "ltmia/classifier/trainer.hpp"

#include <cmath>
#include <string>

#include "ltmia/classifier/adamw.hpp"
#include "ltmia/error.hpp"
#include "ltmia/metrics.hpp"
#include "ltmia/parallel.hpp"
#include "ltmia/prng.hpp"

namespace ltmia {

namespace {

void require_both_labels(const FeatureSet& set, const char* what) {
  bool member = false, nonmember = false;
  for (const auto& s : set.samples) {
    if (s.label == Label::unknown) {
      throw Error(ErrorKind::invalid_argument, std::string(what) + " sample " + s.sample_id + " has no label");
    }
    (s.label == Label::member ? member : nonmember) = true;
  }
  if (!member || !nonmember) {
    throw Error(ErrorKind::single_class, std::string(what) + " set needs both members and nonmembers");
  }
}

std::vector<std::vector<std::size_t>> index_by_combo(const FeatureSet& set) {
  std::vector<std::vector<std::size_t>> by_combo(set.combos.size());
  for (std::size_t i = 0; i < set.size(); ++i) by_combo[set.samples[i].combo].push_back(i);
  std::erase_if(by_combo, [](const auto& v) { return v.empty(); });
  return by_combo;
}

}  // namespace

std::vector<std::size_t> draw_batch(const FeatureSet& set, const std::vector<std::vector<std::size_t>>& by_combo,
                                    const TrainConfig& cfg, std::size_t epoch, std::size_t step) {
  auto rng = keyed_stream(cfg.seed, "batch", {epoch, step});
  const std::size_t n = std::min(cfg.batch_size, set.size());
  std::vector<std::size_t> batch(n);
  for (auto& idx : batch) {
    if (cfg.sampling == Sampling::uniform_over_samples) {
      idx = rng.below(set.size());
    } else {
      const auto& members = by_combo[rng.below(by_combo.size())];
      idx = members[rng.below(members.size())];
    }
  }
  return batch;
}

TrainResult train(const FeatureSet& train_set, const FeatureSet& val_set, const TrainConfig& tcfg,
                  const ClassifierConfig& ccfg, const EpochCallback& on_epoch) {
  validate(tcfg);
  validate(ccfg);
  require_both_labels(train_set, "training");
  require_both_labels(val_set, "validation");

  ClassifierCheckpoint current = initial_checkpoint(ccfg, tcfg.seed);
  current.norm = InputNorm::fit(train_set);
  current.meta.seed = tcfg.seed;
  const auto net = make_network<float>(ccfg);

  std::vector<std::vector<float>> inputs(train_set.size());
  std::vector<std::size_t> lengths(train_set.size());
  std::vector<int> labels(train_set.size());
  parallel_for(train_set.size(), tcfg.threads, [&](std::size_t i) {
    const auto& s = train_set.samples[i];
    inputs[i] = standardize<float>(s.x, current.norm);
    lengths[i] = s.x.length;
    labels[i] = s.label == Label::member ? 1 : 0;
  });
  const auto by_combo = index_by_combo(train_set);

  const std::size_t batch = std::min(tcfg.batch_size, train_set.size());
  const std::size_t steps =
      tcfg.steps_per_epoch > 0 ? tcfg.steps_per_epoch : (train_set.size() + tcfg.batch_size - 1) / tcfg.batch_size;

  AdamW optimizer(net->layout(), tcfg);
  std::vector<double> grad(net->layout().total());
  std::vector<const std::vector<float>*> b_inputs(batch);
  std::vector<std::size_t> b_lengths(batch);
  std::vector<int> b_labels(batch);
  std::vector<DropoutKey> b_dropout(batch);

  TrainResult result;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto idx = draw_batch(train_set, by_combo, tcfg, epoch, step);
      for (std::size_t j = 0; j < batch; ++j) {
        b_inputs[j] = &inputs[idx[j]];
        b_lengths[j] = lengths[idx[j]];
        b_labels[j] = labels[idx[j]];
        b_dropout[j] = DropoutKey{ccfg.dropout > 0.0, tcfg.seed, epoch, step, j};
      }
      const double loss = batch_loss_and_grad<float>(*net, current.params, b_inputs, b_lengths, b_labels,
                                                     b_dropout, grad, tcfg.threads);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::divergence, "non-finite training loss in epoch " + std::to_string(epoch));
      }
      loss_sum += loss;
      optimizer.step(current.params, grad);
    }
    current.optimizer = optimizer.state();
    current.meta.epoch = epoch;
    current.meta.val_auc = evaluate_auc(current, val_set, tcfg.threads);
    const EpochRecord record{epoch, loss_sum / static_cast<double>(steps), current.meta.val_auc};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (!have_best || record.val_auc > result.best.meta.val_auc) {
      result.best = current;
      have_best = true;
    }
  }
  return result;
}

std::vector<double> predict_logits(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads) {
  const auto net = make_network<float>(ckpt.config);
  if (ckpt.params.size() != net->layout().total()) {
    throw Error(ErrorKind::shape_mismatch, "checkpoint parameters do not match its config");
  }
  std::vector<double> out(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    const auto& x = set.samples[i].x;
    const auto input = standardize<float>(x, ckpt.norm);
    out[i] = static_cast<double>(net->forward(ckpt.params, input, x.length, DropoutKey{}));
  });
  return out;
}

std::vector<double> predict(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads) {
  auto out = predict_logits(ckpt, set, threads);
  for (auto& v : out) v = sigmoid(v);
  return out;
}

std::vector<AttackScore> score(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads) {
  const auto probs = predict(ckpt, set, threads);
  std::vector<AttackScore> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.samples[i];
    const auto& combo = set.combos[s.combo];
    out[i] = AttackScore{s.sample_id, Method::ltmia, probs[i], s.label, combo.target_model_id, combo.dataset_id};
  }
  return out;
}

std::vector<AttackScore> score(const ClassifierCheckpoint& ckpt, const TraceDataset& ds, unsigned threads) {
  return score(ckpt, extract_feature_set(ds, threads), threads);
}

double evaluate_auc(const ClassifierCheckpoint& ckpt, const FeatureSet& set, unsigned threads) {
  const auto logits = predict_logits(ckpt, set, threads);
  std::vector<LabeledScore> scored(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    scored[i] = {logits[i], set.samples[i].label == Label::member};
  }
  return roc_auc(scored);
}

}  // namespace ltmia
