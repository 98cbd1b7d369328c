#include "pipeline.hpp"

#include <fstream>
#include <sstream>

#include "ltmia/cli.hpp"

namespace pipeline {

namespace fs = std::filesystem;

int cli(const std::vector<std::string>& args, std::string* out, std::string* log) {
  std::vector<std::string> full{"ltmia"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream o, l;
  const int code = ltmia::cli::run(full, o, l);
  if (out) *out = o.str();
  if (log) *log = l.str();
  return code;
}

std::map<std::string, std::string> run_small(const fs::path& dir, unsigned threads) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const char* name) { return (dir / name).string(); };
  {
    std::ofstream cfg(p("config.json"));
    cfg << R"({"synth.vocab_size": 60, "synth.positions": 16, "synth.n_members": 40,
               "synth.n_nonmembers": 40, "train.epochs": 2, "train.batch_size": 32,
               "train.learning_rate": 0.001, "classifier.model_dim": 32, "classifier.ff_dim": 64,
               "classifier.head_hidden": 16})";
  }
  const std::string t = std::to_string(threads);
  const std::vector<std::string> common{"--config", p("config.json"), "--seed", "7", "--threads", t};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    return cli(args);
  };
  const std::string train = p("synth/train.jsonl"), held = p("synth/heldout.jsonl");
  const bool ok =
      with({"synth", "--out", p("synth"), "--combos", "3", "--heldout", "1", "--delta", "1.0"}) == 0 &&
      with({"attack", "--method", "refloss", "--traces", held, "--out", p("refloss.csv")}) == 0 &&
      with({"attack", "--method", "loss", "--traces", held, "--out", p("loss.csv")}) == 0 &&
      with({"train", "--traces", train, "--out", p("model.ckpt")}) == 0 &&
      with({"score", "--ckpt", p("model.ckpt"), "--traces", held, "--out", p("ltmia.csv")}) == 0 &&
      with({"eval", "--scores", p("refloss.csv"), p("loss.csv"), p("ltmia.csv"), "--report", p("report.json"),
            "--csv", p("report.csv")}) == 0 &&
      cli({"report", "--report", p("report.json"), "--out", p("report.md")}) == 0;
  std::map<std::string, std::string> files;
  if (!ok) return files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    files[fs::relative(entry.path(), dir).string()] = buf.str();
  }
  return files;
}

}  // namespace pipeline
