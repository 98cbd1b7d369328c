#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ltmia/attacks.hpp"
#include "ltmia/error.hpp"
#include "ltmia/metrics.hpp"
#include "ltmia/synth.hpp"
#include "oracles.hpp"

using namespace ltmia;

namespace {

LogitTrace with_losses(std::vector<double> loss_tgt, std::vector<double> loss_ref = {}) {
  LogitTrace r;
  r.sample_id = "s";
  r.vocab_size = 100;
  r.text = "sample text";
  r.resize(loss_tgt.size());
  for (std::size_t i = 0; i < loss_tgt.size(); ++i) {
    r.gt_logprob_tgt[i] = static_cast<float>(-loss_tgt[i]);
    r.gt_logprob_ref[i] = static_cast<float>(loss_ref.empty() ? -loss_tgt[i] : -loss_ref[i]);
    r.gt_rank_tgt[i] = 2;
  }
  return r;
}

double auc_of(const std::vector<AttackScore>& scores) {
  std::vector<LabeledScore> v;
  for (const auto& s : scores) v.push_back({s.score, s.label == Label::member});
  return roc_auc(v);
}

}  // namespace

TEST_CASE("loss attack") {
  CHECK(attack_loss(with_losses({1, 2, 3})).score == -2.0);
  CHECK(attack_loss(with_losses({0, 0})).score == 0.0);
  CHECK(attack_loss(with_losses({1, 2, 3})).method == Method::loss);
}

TEST_CASE("refloss attack") {
  CHECK(attack_refloss(with_losses({2, 2}, {3, 3})).score == 1.0);
  CHECK(attack_refloss(with_losses({1.5, 0.25}, {1.5, 0.25})).score == 0.0);
  CHECK(attack_refloss(with_losses({1, 2}, {2, 4})).score == 1.5);
}

TEST_CASE("min-k%++ against the sort oracle") {
  auto r = with_losses({0, 0, 0, 0, 0});
  const std::vector<double> lp{-1.0, -3.0, -0.5, -2.0, -4.0};
  const std::vector<double> mu{-2.0, -2.0, -1.0, -1.0, -3.0};
  const std::vector<double> sd{1.0, 0.5, 2.0, 0.25, 1.0};
  for (std::size_t i = 0; i < 5; ++i) {
    r.gt_logprob_tgt[i] = static_cast<float>(lp[i]);
    r.mu_logprob_tgt[i] = static_cast<float>(mu[i]);
    r.sigma_logprob_tgt[i] = static_cast<float>(sd[i]);
  }
  MinKConfig cfg;
  cfg.k_fraction = 0.4;
  CHECK(attack_minkpp(r, cfg).score == doctest::Approx(oracle::minkpp_by_sort(lp, mu, sd, 0.4, 1e-6)));
  CHECK(attack_minkpp(r, cfg).score == doctest::Approx((-4.0 + -2.0) / 2));  // s = {1,-2,0.25,-4,-1}
  cfg.k_fraction = 1.0;
  CHECK(attack_minkpp(r, cfg).score == doctest::Approx((1 - 2 + 0.25 - 4 - 1) / 5.0));

  auto uniform = with_losses({std::log(100.0)});
  uniform.mu_logprob_tgt[0] = uniform.gt_logprob_tgt[0];
  uniform.sigma_logprob_tgt[0] = 0.0f;
  CHECK(attack_minkpp(uniform).score == 0.0);

  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto t = oracle::random_trace(s, 50, 1 + s * 3, 0.0, "mk");
    std::vector<double> a, b, c;
    for (std::size_t i = 0; i < t.positions(); ++i) {
      a.push_back(t.gt_logprob_tgt[i]);
      b.push_back(t.mu_logprob_tgt[i]);
      c.push_back(t.sigma_logprob_tgt[i]);
    }
    CHECK(attack_minkpp(t).score == doctest::Approx(oracle::minkpp_by_sort(a, b, c, 0.2, 1e-6)).epsilon(1e-12));
  }
}

TEST_CASE("zlib attack uses raw DEFLATE level 6") {
  CHECK(deflate_size(std::string(1000, 'a')) == 11);  // reference compressor output length
  auto r = with_losses(std::vector<double>(4, 25.0));
  r.text = std::string(1000, 'a');
  CHECK(attack_zlib(r).score == doctest::Approx(-100.0 / 11.0));
  auto zero = with_losses({0, 0});
  CHECK(attack_zlib(zero).score == 0.0);

  auto noisy = r;
  std::string text;
  for (int i = 0; i < 1000; ++i) text.push_back(static_cast<char>('a' + (i * 7919 % 26)));
  noisy.text = text;
  CHECK(std::abs(attack_zlib(r).score) > std::abs(attack_zlib(noisy).score));

  auto empty = r;
  empty.text.clear();
  CHECK_THROWS_AS(attack_zlib(empty), Error);
}

TEST_CASE("ez-mia error set and fallback") {
  auto r = with_losses({1, 1});
  r.gt_rank_tgt = {1, 1};
  r.gt_logprob_tgt = {std::log(0.5f), std::log(0.4f)};
  r.gt_logprob_ref = {std::log(0.25f), std::log(0.2f)};
  CHECK(attack_ezmia(r).score == doctest::Approx((0.25 + 0.2) / 2));

  auto one = with_losses({1, 1});
  one.gt_rank_tgt = {3, 1};
  one.gt_logprob_tgt = {std::log(0.3f), std::log(0.9f)};
  one.gt_logprob_ref = {std::log(0.1f), std::log(0.1f)};
  CHECK(attack_ezmia(one).score == doctest::Approx(0.2));

  auto sym = with_losses({1, 1});
  sym.gt_rank_tgt = {2, 5};
  sym.gt_logprob_tgt = {std::log(0.3f), std::log(0.2f)};
  sym.gt_logprob_ref = {std::log(0.2f), std::log(0.3f)};
  CHECK(attack_ezmia(sym).score == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("run_attack keeps order, attaches ids and is deterministic") {
  SynthConfig cfg;
  cfg.vocab_size = 60;
  cfg.positions = 8;
  cfg.n_members = 2;
  cfg.n_nonmembers = 2;
  const TraceDataset ds(generate_combo(cfg, 0));
  const auto a = run_attack(ds, Method::loss);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].sample_id == ds[i].sample_id);
  const auto b = run_attack(ds, Method::loss, {}, 3);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].score == b[i].score);

  auto records = ds.records();
  records[2].text.clear();
  const TraceDataset broken(records);
  try {
    run_attack(broken, Method::zlib);
    FAIL("empty text accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(records[2].sample_id) != std::string::npos);
  }
  CHECK_THROWS_AS(run_attack(ds, Method::ltmia), Error);
}

TEST_CASE("score CSV round trip") {
  SynthConfig cfg;
  cfg.vocab_size = 60;
  cfg.positions = 8;
  cfg.n_members = 3;
  cfg.n_nonmembers = 3;
  const TraceDataset ds(generate_combo(cfg, 1));
  const auto scores = run_attack(ds, Method::minkpp);
  const auto path = (std::filesystem::temp_directory_path() / "ltmia_scores.csv").string();
  write_scores_csv(path, scores);
  const auto back = read_scores_csv(path);
  REQUIRE(back.size() == scores.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].score == scores[i].score);
    CHECK(back[i].sample_id == scores[i].sample_id);
    CHECK(back[i].label == scores[i].label);
    CHECK(back[i].method == Method::minkpp);
    CHECK(back[i].target_model_id == scores[i].target_model_id);
  }
  CHECK(scores_csv_header() == "sample_id,method,score,label,target_model_id,dataset_id");
}

TEST_CASE("a dominating member loss gives a perfect loss attack") {
  SynthConfig cfg;
  cfg.vocab_size = 100;
  cfg.positions = 32;
  cfg.n_members = 40;
  cfg.n_nonmembers = 40;
  cfg.delta = 8.0;
  const TraceDataset ds(generate_combo(cfg, 0));
  CHECK(auc_of(run_attack(ds, Method::loss)) == 1.0);
  CHECK(auc_of(run_attack(ds, Method::refloss)) == 1.0);
}

TEST_CASE("padding positions do not exist for scoring") {
  // Scores depend on the T stored positions only: a record and the same record
  // re-encoded with its prefix of T positions give equal loss/refloss.
  auto r = oracle::random_trace(3, 50, 10, 0.0, "pad");
  const double before = attack_refloss(r).score;
  const auto again = decode_trace(encode_trace(r));
  CHECK(attack_refloss(again).score == before);
}
