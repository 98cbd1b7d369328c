#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ltmia/attacks.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using pipeline::cli;

namespace {

fs::path scratch(const char* name) {
  const auto dir = fs::temp_directory_path() / "ltmia_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("version prints one JSON object") {
  std::string out;
  CHECK(cli({"--version"}, &out) == 0);
  const auto j = nlohmann::json::parse(out);
  CHECK(j.is_object());
  CHECK(j.at("version") == "1.0.0");
}

TEST_CASE("usage errors exit with 2") {
  std::string log;
  CHECK(cli({}, nullptr, &log) == 2);
  CHECK(cli({"attack", "--method", "loss", "--out", "x.csv"}, nullptr, &log) == 2);
  CHECK(log.find("--traces") != std::string::npos);
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({"synth", "--out", "x", "--threads", "0"}) == 2);

  const auto dir = scratch("usage");
  {
    std::ofstream cfg(dir / "bad.json");
    cfg << R"({"synth.vocab_sise": 100})";
  }
  CHECK(cli({"synth", "--out", (dir / "o").string(), "--config", (dir / "bad.json").string()}, nullptr, &log) == 2);
  CHECK(log.find("vocab_sise") != std::string::npos);
  {
    std::ofstream cfg(dir / "type.json");
    cfg << R"({"synth.vocab_size": "large"})";
  }
  CHECK(cli({"synth", "--out", (dir / "o").string(), "--config", (dir / "type.json").string()}) == 2);
  CHECK(cli({"attack", "--method", "ltmia", "--traces", "a", "--out", "b"}) == 2);
}

TEST_CASE("data errors exit with 1") {
  const auto dir = scratch("data");
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << "{\"schema_version\": \"nope\"}\n";
  }
  std::string log;
  CHECK(cli({"attack", "--method", "loss", "--traces", (dir / "bad.jsonl").string(), "--out",
             (dir / "s.csv").string()},
            nullptr, &log) == 1);
  CHECK(log.find("bad.jsonl:1") != std::string::npos);
  CHECK(cli({"attack", "--method", "loss", "--traces", (dir / "missing.jsonl").string(), "--out",
             (dir / "s.csv").string()}) == 1);
}

TEST_CASE("attack writes the score CSV") {
  const auto dir = scratch("attack");
  REQUIRE(cli({"synth", "--out", dir.string(), "--combos", "1", "--heldout", "0", "--seed", "3", "--config",
               [&] {
                 std::ofstream cfg(dir / "c.json");
                 cfg << R"({"synth.vocab_size": 50, "synth.positions": 8, "synth.n_members": 5, "synth.n_nonmembers": 5})";
                 return (dir / "c.json").string();
               }()}) == 0);
  REQUIRE(cli({"attack", "--method", "zlib", "--traces", (dir / "train.jsonl").string(), "--out",
               (dir / "z.csv").string()}) == 0);
  std::ifstream in(dir / "z.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == ltmia::scores_csv_header());
  const auto scores = ltmia::read_scores_csv(dir / "z.csv");
  CHECK(scores.size() == 10);
  CHECK(scores[0].method == ltmia::Method::zlib);
}

TEST_CASE("small pipeline is byte-identical across runs and thread counts") {
  const auto root = fs::temp_directory_path() / "ltmia_cli_test";
  const auto a = pipeline::run_small(root / "run-a", 1);
  const auto b = pipeline::run_small(root / "run-b", 1);
  const auto c = pipeline::run_small(root / "run-c", 4);
  REQUIRE_FALSE(a.empty());
  CHECK(a.count("report.json") == 1);
  CHECK(a.count("model.ckpt") == 1);
  CHECK(a.count("report.md") == 1);
  for (const auto& [name, bytes] : a) {
    if (name == "config.json") continue;
    CAPTURE(name);
    CHECK(b.at(name) == bytes);
    CHECK(c.at(name) == bytes);
  }
}
