#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gradcheck.hpp"
#include "ltmia/base64.hpp"
#include "ltmia/classifier/adamw.hpp"
#include "ltmia/classifier/checkpoint.hpp"
#include "ltmia/classifier/network.hpp"
#include "ltmia/classifier/trainer.hpp"
#include "ltmia/error.hpp"
#include "ltmia/metrics.hpp"
#include "ltmia/synth.hpp"

using namespace ltmia;

namespace {

constexpr ArchKind kArchs[] = {ArchKind::transformer, ArchKind::logreg_flat, ArchKind::mlp_flat,
                               ArchKind::mlp_meanpool};

FeatureSet synth_features(double delta, std::size_t per_label, std::size_t combos, std::uint64_t seed,
                          std::size_t first_combo = 0) {
  SynthConfig cfg;
  cfg.vocab_size = 60;
  cfg.positions = 16;
  cfg.n_members = per_label;
  cfg.n_nonmembers = per_label;
  cfg.delta = delta;
  cfg.seed = seed;
  FeatureSet out;
  for (std::size_t c = first_combo; c < first_combo + combos; ++c) {
    append_feature_set(out, extract_feature_set(TraceDataset(generate_combo(cfg, c))));
  }
  return out;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 32;
  t.learning_rate = 1e-3;
  t.seed = 5;
  return t;
}

// Minimal set of length-1 samples; `sizes[c]` samples in combo c, alternating labels.
FeatureSet counted_set(const std::vector<std::size_t>& sizes) {
  FeatureSet set;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    set.combos.push_back({"model-" + std::to_string(c), "data"});
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      FeatureSample s;
      s.sample_id = std::to_string(c) + "-" + std::to_string(i);
      s.label = i % 2 ? Label::member : Label::nonmember;
      s.combo = c;
      s.x.length = 1;
      s.x.values.assign(kChannels, 0.0f);
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

}  // namespace

TEST_CASE("analytic gradients match central differences at h = 1e-3") {
  for (ArchKind arch : kArchs) {
    CAPTURE(to_string(arch));
    const auto res = gradcheck::check(gradcheck::tiny_config(arch), 0);
    CHECK(res.checked > 0);
    CHECK(res.failures.empty());
    CHECK(res.worst_rel <= 1e-4);
  }
}

TEST_CASE("transformer gradients agree for every fixture seed at a small step") {
  // At h = 1e-3 some seeds put a ReLU pre-activation within one step of zero.
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    CAPTURE(seed);
    const auto res = gradcheck::check(gradcheck::tiny_config(ArchKind::transformer), seed, 1e-5);
    CHECK(res.failures.empty());
  }
}

TEST_CASE("default classifier stays under the parameter budget") {
  const ClassifierConfig cfg;
  CHECK(parameter_count(cfg) == make_network<float>(cfg)->layout().total());
  CHECK(parameter_count(cfg) < 500000);
  CHECK(parameter_count(cfg) == 293249);
  for (ArchKind arch : kArchs) {
    ClassifierConfig c;
    c.arch = arch;
    CHECK(parameter_count(c) > 0);
  }
}

TEST_CASE("sinusoidal positional encoding") {
  const auto pe = positional_encoding(128, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pe[2 * i] == 0.0);
    CHECK(pe[2 * i + 1] == 1.0);
  }
  for (std::size_t pos = 0; pos < 128; ++pos) {
    CHECK(pe[pos * 8] == doctest::Approx(std::sin(static_cast<double>(pos))));
    for (std::size_t i = 0; i < 4; ++i) {
      const double s = pe[pos * 8 + 2 * i], c = pe[pos * 8 + 2 * i + 1];
      CHECK(s * s + c * c == doctest::Approx(1.0));
    }
  }
  CHECK(pe[5 * 8 + 2] == doctest::Approx(std::sin(5.0 / std::pow(10000.0, 2.0 / 8.0))));
  CHECK_THROWS_AS(positional_encoding(4, 7), Error);
}

TEST_CASE("architecture names") {
  for (ArchKind arch : kArchs) CHECK(parse_arch(to_string(arch)) == arch);
  CHECK_THROWS_AS(parse_arch("lstm"), Error);
}

TEST_CASE("invalid classifier settings") {
  ClassifierConfig c;
  c.heads = 3;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.dropout = 1.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.model_dim = 0;
  CHECK_THROWS_AS(validate(c), Error);
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(validate(t), Error);
}

TEST_CASE("predictions are probabilities and ignore padded rows") {
  const auto set = synth_features(1.0, 10, 1, 3);
  for (ArchKind arch : kArchs) {
    ClassifierConfig cfg;
    cfg.arch = arch;
    const auto ckpt = initial_checkpoint(cfg, 9);
    for (double p : predict(ckpt, set)) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }

    // Garbage written into the rows past the mask is dropped on decode.
    auto sample = set.samples[0];
    auto dense = sample.x.dense();
    for (std::size_t i = sample.x.length * kChannels; i < dense.size(); ++i) dense[i] = 1e6f;
    auto obj = nlohmann::json::parse(encode_feature_line(sample, set.combos[0]));
    obj["values"] = base64::encode_f32(dense);
    ComboKey key;
    const auto noisy = decode_feature_line(obj.dump(), &key);
    FeatureSet one{{key}, {sample}}, two{{key}, {noisy}};
    two.samples[0].combo = one.samples[0].combo = 0;
    CHECK(predict_logits(ckpt, one)[0] == predict_logits(ckpt, two)[0]);
  }
}

TEST_CASE("mean pooling ignores row order") {
  ClassifierConfig cfg;
  cfg.arch = ArchKind::mlp_meanpool;
  const auto ckpt = initial_checkpoint(cfg, 2);
  auto set = synth_features(1.0, 4, 1, 8);
  auto shuffled = set;
  for (auto& s : shuffled.samples) {
    for (std::size_t t = 0; t < s.x.length / 2; ++t) {
      const std::size_t u = s.x.length - 1 - t;
      std::swap_ranges(s.x.row(t).begin(), s.x.row(t).end(), s.x.row(u).begin());
    }
  }
  const auto a = predict_logits(ckpt, set), b = predict_logits(ckpt, shuffled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));

  ClassifierConfig tcfg;
  const auto tckpt = initial_checkpoint(tcfg, 2);
  const auto c = predict_logits(tckpt, set), d = predict_logits(tckpt, shuffled);
  std::size_t moved = 0;
  for (std::size_t i = 0; i < c.size(); ++i) moved += std::abs(c[i] - d[i]) > 1e-6;
  CHECK(moved > 0);  // positions matter to the sequence model
}

TEST_CASE("batch loss is a mean: duplicating every sample changes nothing") {
  const auto cfg = gradcheck::tiny_config(ArchKind::transformer);
  const auto net = make_network<double>(cfg);
  std::vector<double> p(net->layout().total());
  net->init(p, 4);
  std::vector<double> xa(3 * cfg.input_dim, 0.25), xb(2 * cfg.input_dim, -0.5);
  for (std::size_t i = 0; i < xa.size(); ++i) xa[i] += 0.1 * static_cast<double>(i % 5);
  const std::vector<const std::vector<double>*> one{&xa, &xb}, two{&xa, &xa, &xb, &xb};
  const std::vector<std::size_t> l1{3, 2}, l2{3, 3, 2, 2};
  const std::vector<int> y1{1, 0}, y2{1, 1, 0, 0};
  const std::vector<DropoutKey> d1(2), d2(4);
  std::vector<double> g1(p.size()), g2(p.size());
  const double a = batch_loss_and_grad<double>(*net, p, one, l1, y1, d1, g1);
  const double b = batch_loss_and_grad<double>(*net, p, two, l2, y2, d2, g2);
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("gradient reduction does not depend on the thread count") {
  const auto set = synth_features(1.0, 20, 1, 6);
  ClassifierConfig cfg;
  const auto net = make_network<float>(cfg);
  const auto ckpt = initial_checkpoint(cfg, 1);
  std::vector<std::vector<float>> xs;
  std::vector<std::size_t> lengths;
  std::vector<int> labels;
  for (const auto& s : set.samples) {
    xs.push_back(standardize<float>(s.x, ckpt.norm));
    lengths.push_back(s.x.length);
    labels.push_back(s.label == Label::member);
  }
  std::vector<const std::vector<float>*> inputs;
  for (const auto& x : xs) inputs.push_back(&x);
  std::vector<DropoutKey> dropout(xs.size());
  for (std::size_t i = 0; i < dropout.size(); ++i) dropout[i] = {true, 1, 1, 1, i};
  std::vector<double> g1(ckpt.params.size()), g8(ckpt.params.size());
  const double a = batch_loss_and_grad<float>(*net, ckpt.params, inputs, lengths, labels, dropout, g1, 1);
  const double b = batch_loss_and_grad<float>(*net, ckpt.params, inputs, lengths, labels, dropout, g8, 8);
  CHECK(a == b);
  CHECK(g1 == g8);
}

TEST_CASE("adamw decay is decoupled from the gradient") {
  ParamLayout layout;
  layout.add("w", 2, 2, true);
  layout.add("b", 1, 2, false);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(layout, cfg);
  std::vector<float> p{1, -2, 3, -4, 5, 6};
  const std::vector<double> zero(6, 0.0);
  opt.step(p, zero);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx((1 - 0.05) * std::vector<double>{1, -2, 3, -4}[i]));
  CHECK(p[4] == 5.0f);
  CHECK(p[5] == 6.0f);
  CHECK(opt.state().step == 1);

  cfg.learning_rate = 0.0;
  AdamW frozen(layout, cfg);
  const auto before = p;
  frozen.step(p, std::vector<double>{1, 1, 1, 1, 1, 1});
  CHECK(p == before);

  // First step with a gradient moves each element by lr * sign(g) (bias-corrected).
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.0;
  AdamW plain(layout, cfg);
  std::vector<float> q(6, 0.0f);
  plain.step(q, std::vector<double>{2, -3, 0.5, -1, 4, -7});
  const float want[] = {-0.01f, 0.01f, -0.01f, 0.01f, -0.01f, 0.01f};
  for (std::size_t i = 0; i < 6; ++i) CHECK(q[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("checkpoints round trip bitwise") {
  const auto set = synth_features(2.0, 30, 1, 1);
  const auto val = synth_features(2.0, 15, 1, 2);
  ClassifierConfig cfg;
  cfg.arch = ArchKind::mlp_meanpool;
  auto result = train(set, val, quick_train(2), cfg);
  const auto& ckpt = result.best;
  REQUIRE(ckpt.optimizer.has_value());
  const auto text = encode_checkpoint(ckpt);
  CHECK(decode_checkpoint(text) == ckpt);
  CHECK(encode_checkpoint(decode_checkpoint(text)) == text);

  const auto path = std::filesystem::temp_directory_path() / "ltmia_unit.ckpt";
  save_checkpoint(path, ckpt);
  const auto back = load_checkpoint(path);
  CHECK(back == ckpt);
  const auto s1 = score(ckpt, val), s2 = score(back, val);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].score == s2[i].score);

  auto bare = ckpt;
  bare.optimizer.reset();
  CHECK(decode_checkpoint(encode_checkpoint(bare)) == bare);

  auto lines = text;
  lines.replace(lines.find(kCheckpointSchema), kCheckpointSchema.size(), "ltmia-checkpoint-v0");
  CHECK_THROWS_AS(decode_checkpoint(lines), Error);
}

TEST_CASE("combo-uniform batches") {
  // One combo 100x larger than the other: combos are drawn equally often and
  // samples uniformly within the drawn combo.
  const auto set = counted_set({100, 10000});
  std::vector<std::vector<std::size_t>> by_combo(2);
  for (std::size_t i = 0; i < set.size(); ++i) by_combo[set.samples[i].combo].push_back(i);
  TrainConfig cfg;
  cfg.batch_size = 256;
  std::vector<double> combo_counts(2, 0.0), small_counts(100, 0.0);
  double draws = 0.0;
  for (std::size_t epoch = 1; epoch <= 10; ++epoch) {
    for (std::size_t step = 0; step < 40; ++step) {
      for (std::size_t i : draw_batch(set, by_combo, cfg, epoch, step)) {
        combo_counts[set.samples[i].combo] += 1;
        if (set.samples[i].combo == 0) small_counts[i] += 1;
        draws += 1;
      }
    }
  }
  double chi_combo = 0.0;
  for (double c : combo_counts) chi_combo += (c - draws / 2) * (c - draws / 2) / (draws / 2);
  CHECK(chi_combo < 10.83);  // df 1, p = 0.001
  double chi_small = 0.0;
  const double expect = combo_counts[0] / 100.0;
  for (double c : small_counts) chi_small += (c - expect) * (c - expect) / expect;
  CHECK(chi_small < 148.2);  // df 99, p = 0.001

  cfg.sampling = Sampling::uniform_over_samples;
  double small = 0.0, total = 0.0;
  for (std::size_t step = 0; step < 40; ++step) {
    for (std::size_t i : draw_batch(set, by_combo, cfg, 1, step)) {
      small += set.samples[i].combo == 0;
      total += 1;
    }
  }
  CHECK(small / total < 0.03);
  CHECK(draw_batch(set, by_combo, cfg, 3, 7) == draw_batch(set, by_combo, cfg, 3, 7));
}

TEST_CASE("separable data is learned within five epochs") {
  const auto tr = synth_features(2.0, 100, 2, 21);
  const auto va = synth_features(2.0, 50, 1, 21, 5);
  for (ArchKind arch : {ArchKind::transformer, ArchKind::logreg_flat}) {
    CAPTURE(to_string(arch));
    ClassifierConfig cfg;
    cfg.arch = arch;
    std::vector<EpochRecord> seen;
    const auto res = train(tr, va, quick_train(5), cfg, [&](const EpochRecord& r) { seen.push_back(r); });
    CHECK(seen == res.history);
    CHECK(res.history.size() == 5);
    CHECK(res.best.meta.val_auc >= 0.99);
    CHECK(evaluate_auc(res.best, va) == res.best.meta.val_auc);
    const auto best = std::max_element(res.history.begin(), res.history.end(),
                                       [](const auto& a, const auto& b) { return a.val_auc < b.val_auc; });
    CHECK(res.best.meta.epoch == best->epoch);
  }
}

TEST_CASE("training is deterministic across runs and thread counts") {
  const auto tr = synth_features(1.0, 40, 2, 31);
  const auto va = synth_features(1.0, 20, 1, 31, 4);
  ClassifierConfig cfg;
  auto t = quick_train(2);
  const auto a = train(tr, va, t, cfg);
  const auto b = train(tr, va, t, cfg);
  t.threads = 8;
  const auto c = train(tr, va, t, cfg);
  CHECK(a.best == b.best);
  CHECK(a.best == c.best);
  CHECK(a.history == c.history);
  t.seed = 6;
  CHECK_FALSE(train(tr, va, t, cfg).best == a.best);
}

TEST_CASE("training failure modes") {
  const auto tr = synth_features(1.0, 10, 1, 41);
  auto members_only = tr;
  std::erase_if(members_only.samples, [](const FeatureSample& s) { return s.label != Label::member; });
  ClassifierConfig cfg;
  cfg.arch = ArchKind::logreg_flat;
  try {
    train(members_only, tr, quick_train(1), cfg);
    FAIL("single-class set accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::single_class);
  }
  try {
    train(tr, members_only, quick_train(1), cfg);
    FAIL("single-class validation accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::single_class);
  }

  auto wild = quick_train(3);
  wild.learning_rate = 1e30;
  wild.batch_size = 4;
  try {
    train(tr, tr, wild, cfg);
    FAIL("divergence not reported");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergence);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}
