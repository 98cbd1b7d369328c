#include <doctest.h>

#include <cmath>

#include "ltmia/error.hpp"
#include "ltmia/features.hpp"
#include "ltmia/synth.hpp"
#include "oracles.hpp"

using namespace ltmia;

namespace {

// Relative tolerance on the oracle value; the floor only matters for values
// the oracle computes as (near) zero.
bool close(double got, double want) { return std::abs(got - want) <= 1e-5 * std::abs(want) + 1e-7; }

std::size_t mismatches(const LogitTrace& r) {
  const auto want = oracle::features(r);
  const auto got = extract_features(r);
  std::size_t bad = 0;
  for (std::size_t t = 0; t < kMaxPositions; ++t) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double g = got.at(t, c);
      if (t >= want.size()) {
        bad += g != 0.0;
      } else if (!close(g, want[t][c])) {
        if (bad < 5) MESSAGE(r.sample_id << " t=" << t << " c=" << c << " got " << g << " want " << want[t][c]);
        ++bad;
      }
    }
  }
  return bad;
}

}  // namespace

TEST_CASE("group accounting is 45/45/64 over 154 channels") {
  const auto slices = feature_group_slices();
  CHECK(slices[0].begin == 0);
  CHECK(slices[0].size() == 45);
  CHECK(slices[1].begin == 45);
  CHECK(slices[1].size() == 45);
  CHECK(slices[2].begin == 90);
  CHECK(slices[2].size() == 64);
  CHECK(slices[2].end == kChannels);
  const auto groups = default_feature_groups();
  REQUIRE(groups.size() == 3);
  std::vector<int> hits(kChannels, 0);
  for (const auto& g : groups) {
    for (auto c : g.channels) hits[c]++;
  }
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("extract_features matches the straight-line oracle on hand-built records") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const std::uint32_t V = 40 + static_cast<std::uint32_t>((s * 37) % 200);
    const std::size_t T = 1 + (s * 13) % 128;
    const auto r = oracle::random_trace(1000 + s, V, T, s % 2 ? 0.25 : 0.0, "hand-" + std::to_string(s));
    CAPTURE(s);
    CHECK(mismatches(r) == 0);
  }
}

TEST_CASE("extract_features matches the oracle on generated records") {
  SynthConfig cfg;
  cfg.vocab_size = 200;
  cfg.positions = 32;
  cfg.delta = 1.5;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 100; ++i) bad += mismatches(generate_sample(cfg, i % 5, i).record);
  CHECK(bad == 0);
}

TEST_CASE("two-position hand computation") {
  // V = 100, explicit logits: target = id / 10, reference = reversed.
  std::vector<std::vector<float>> tgt(2, std::vector<float>(100)), ref = tgt;
  for (int j = 0; j < 100; ++j) {
    tgt[0][j] = j / 10.0f;
    ref[0][j] = (99 - j) / 10.0f;
    tgt[1][j] = (j % 7) * 1.0f;
    ref[1][j] = (j % 5) * 1.0f;
  }
  const auto r = oracle::trace_from_logits(tgt, ref, {5, 99, 3}, Label::member, "two");
  const auto x = extract_features(r);
  CHECK(x.length == 2);
  // token 99 is the target's top-1 at position 0
  CHECK(x.at(0, channel::gt_rank_tgt) == 0.0f);
  CHECK(x.at(0, channel::gt_logit_tgt) == 0.0f);
  // and the reference's last
  CHECK(x.at(0, channel::gt_rank_ref) == doctest::Approx(std::log(100.0) / std::log(101.0)));
  CHECK(x.at(0, channel::gt_logit_ref) == doctest::Approx(-9.9));
  CHECK(x.at(0, channel::tgt_top20 + 1) == doctest::Approx(-0.1));
  CHECK(x.at(0, channel::tgt_bot20) == doctest::Approx(-1.9));  // 0.0 - 1.9
  CHECK(mismatches(r) == 0);
}

TEST_CASE("structural invariants of the tensor") {
  const auto r = oracle::random_trace(77, 90, 37, 0.0, "inv");
  const auto x = extract_features(r);
  const auto dense = x.dense();
  CHECK(dense.size() == kMaxPositions * kChannels);
  for (std::size_t t = 37; t < kMaxPositions; ++t) {
    CHECK_FALSE(x.mask(t));
    for (std::size_t c = 0; c < kChannels; ++c) CHECK(dense[t * kChannels + c] == 0.0f);
  }
  for (std::size_t t = 0; t < 37; ++t) {
    for (std::size_t b : {channel::tgt_top20, channel::tgt_bot20, channel::ref_of_tgt_top20, channel::ref_of_tgt_bot20}) {
      float mx = -INFINITY;
      for (std::size_t k = 0; k < 20; ++k) {
        CHECK(x.at(t, b + k) <= 0.0f);
        mx = std::max(mx, x.at(t, b + k));
      }
      CHECK(mx == 0.0f);
    }
    for (std::size_t c : {channel::gt_rank_tgt, channel::gt_rank_ref}) {
      CHECK(x.at(t, c) >= 0.0f);
      CHECK(x.at(t, c) < 1.0f);
    }
    for (std::size_t c = channel::rank_in_ref_of_tgt_top20; c < kChannels; ++c) {
      CHECK(x.at(t, c) >= 0.0f);
      CHECK(x.at(t, c) < 1.0f);
    }
    for (std::size_t c : {channel::mean_loss_tgt, channel::std_loss_tgt, channel::mean_loss_ref, channel::std_loss_ref,
                          channel::mean_loss_diff, channel::std_loss_diff, channel::total_llr}) {
      CHECK(x.at(t, c) == x.at(0, c));
    }
  }
  double llr = 0;
  for (std::size_t t = 0; t < 37; ++t) llr += static_cast<double>(x.at(t, 0)) - x.at(t, 45);
  CHECK(std::abs(x.at(5, channel::total_llr) - llr) <= 1e-5 * std::abs(llr) + 1e-6);
}

TEST_CASE("shifting one model's logits leaves normalized channels unchanged") {
  auto r = oracle::random_trace(5, 60, 10, 0.0, "shift");
  const auto before = extract_features(r);
  for (std::size_t t = 0; t < 10; ++t) {
    for (auto* v : {&r.tgt_top20_logits, &r.tgt_bot20_logits, &r.tgt_logits_of_ref_top20}) {
      for (std::size_t k = 0; k < 20; ++k) (*v)[t * 20 + k] += 4.0f;
    }
    r.gt_logit_tgt[t] += 4.0f;
  }
  const auto after = extract_features(r);
  for (std::size_t t = 0; t < 10; ++t) {
    for (std::size_t c = channel::tgt_top20; c < channel::mean_loss_tgt; ++c) {
      CHECK(after.at(t, c) == doctest::Approx(before.at(t, c)).epsilon(1e-5));
    }
  }
}

TEST_CASE("feature preconditions") {
  auto r = oracle::random_trace(5, 60, 3, 0.0, "pre");
  auto empty = r;
  empty.resize(0);
  try {
    extract_features(empty);
    FAIL("accepted T = 0");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_sequence);
  }
  auto small = r;
  small.vocab_size = 30;
  try {
    extract_features(small);
    FAIL("accepted V < 40");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::vocab_too_small);
  }
}

TEST_CASE("feature dump lines round trip") {
  SynthConfig cfg;
  cfg.vocab_size = 50;
  cfg.positions = 9;
  TraceDataset ds(generate_combo([&] {
    auto c = cfg;
    c.n_members = 3;
    c.n_nonmembers = 2;
    return c;
  }(), 4));
  const auto set = extract_feature_set(ds);
  for (const auto& s : set.samples) {
    ComboKey key;
    const auto back = decode_feature_line(encode_feature_line(s, set.combos[s.combo]), &key);
    CHECK(back.sample_id == s.sample_id);
    CHECK(back.label == s.label);
    CHECK(back.x == s.x);
    CHECK(key == set.combos[s.combo]);
  }
}
