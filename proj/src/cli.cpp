#include "ltmia/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "ltmia/attacks.hpp"
#include "ltmia/classifier/checkpoint.hpp"
#include "ltmia/classifier/trainer.hpp"
#include "ltmia/error.hpp"
#include "ltmia/eval.hpp"
#include "ltmia/features.hpp"
#include "ltmia/synth.hpp"
#include "ltmia/trace.hpp"

namespace ltmia::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  SynthConfig synth;
  std::size_t combos = 8;
  std::size_t heldout = 2;
  ClassifierConfig classifier;
  TrainConfig train;
  double val_fraction = 0.05;
  AttackConfig attack;
  std::size_t repeats = 5;
  DiversityConfig diversity;
};

template <typename T>
T as(const json& j, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (j.is_boolean()) return j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (j.is_number_unsigned()) return j.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (j.is_number()) return j.get<T>();
  } else {
    if (j.is_string()) return j.get<T>();
  }
  throw UsageError("config key " + key + " has the wrong type");
}

using Setter = std::function<void(Settings&, const json&, const std::string&)>;

template <auto Member, typename Sub>
Setter field(Sub Settings::*sub) {
  return [sub](Settings& s, const json& j, const std::string& key) {
    auto& target = (s.*sub).*Member;
    target = as<std::remove_reference_t<decltype(target)>>(j, key);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    using S = Settings;
    t["synth.vocab_size"] = field<&SynthConfig::vocab_size>(&S::synth);
    t["synth.positions"] = field<&SynthConfig::positions>(&S::synth);
    t["synth.n_members"] = field<&SynthConfig::n_members>(&S::synth);
    t["synth.n_nonmembers"] = field<&SynthConfig::n_nonmembers>(&S::synth);
    t["synth.delta"] = field<&SynthConfig::delta>(&S::synth);
    t["synth.noise_sigma"] = field<&SynthConfig::noise_sigma>(&S::synth);
    t["synth.base_scale"] = field<&SynthConfig::base_scale>(&S::synth);
    t["synth.signal_start_fraction"] = field<&SynthConfig::signal_start_fraction>(&S::synth);
    auto range = [](UniformRange SynthConfig::*r, bool hi) -> Setter {
      return [r, hi](Settings& s, const json& j, const std::string& key) {
        (hi ? (s.synth.*r).hi : (s.synth.*r).lo) = as<double>(j, key);
      };
    };
    t["synth.scale_min"] = range(&SynthConfig::scale_range, false);
    t["synth.scale_max"] = range(&SynthConfig::scale_range, true);
    t["synth.offset_min"] = range(&SynthConfig::offset_range, false);
    t["synth.offset_max"] = range(&SynthConfig::offset_range, true);
    t["synth.noise_min"] = range(&SynthConfig::noise_range, false);
    t["synth.noise_max"] = range(&SynthConfig::noise_range, true);
    t["synth.combos"] = [](S& s, const json& j, const std::string& k) { s.combos = as<std::size_t>(j, k); };
    t["synth.heldout"] = [](S& s, const json& j, const std::string& k) { s.heldout = as<std::size_t>(j, k); };

    t["classifier.arch"] = [](S& s, const json& j, const std::string& k) {
      try {
        s.classifier.arch = parse_arch(as<std::string>(j, k));
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    };
    t["classifier.input_dim"] = field<&ClassifierConfig::input_dim>(&S::classifier);
    t["classifier.model_dim"] = field<&ClassifierConfig::model_dim>(&S::classifier);
    t["classifier.layers"] = field<&ClassifierConfig::layers>(&S::classifier);
    t["classifier.heads"] = field<&ClassifierConfig::heads>(&S::classifier);
    t["classifier.ff_dim"] = field<&ClassifierConfig::ff_dim>(&S::classifier);
    t["classifier.head_hidden"] = field<&ClassifierConfig::head_hidden>(&S::classifier);
    t["classifier.dropout"] = field<&ClassifierConfig::dropout>(&S::classifier);
    t["classifier.max_positions"] = field<&ClassifierConfig::max_positions>(&S::classifier);
    t["classifier.mlp_hidden"] = field<&ClassifierConfig::mlp_hidden>(&S::classifier);

    t["train.learning_rate"] = field<&TrainConfig::learning_rate>(&S::train);
    t["train.batch_size"] = field<&TrainConfig::batch_size>(&S::train);
    t["train.epochs"] = field<&TrainConfig::epochs>(&S::train);
    t["train.weight_decay"] = field<&TrainConfig::weight_decay>(&S::train);
    t["train.beta1"] = field<&TrainConfig::beta1>(&S::train);
    t["train.beta2"] = field<&TrainConfig::beta2>(&S::train);
    t["train.eps"] = field<&TrainConfig::eps>(&S::train);
    t["train.steps_per_epoch"] = field<&TrainConfig::steps_per_epoch>(&S::train);
    t["train.sampling"] = [](S& s, const json& j, const std::string& k) {
      const auto v = as<std::string>(j, k);
      if (v == "uniform_over_combos") {
        s.train.sampling = Sampling::uniform_over_combos;
      } else if (v == "uniform_over_samples") {
        s.train.sampling = Sampling::uniform_over_samples;
      } else {
        throw UsageError("train.sampling must be uniform_over_combos or uniform_over_samples");
      }
    };
    t["train.val_fraction"] = [](S& s, const json& j, const std::string& k) { s.val_fraction = as<double>(j, k); };

    t["attack.minkpp_k"] = [](S& s, const json& j, const std::string& k) {
      s.attack.minkpp.k_fraction = as<double>(j, k);
    };
    t["attack.minkpp_sigma_floor"] = [](S& s, const json& j, const std::string& k) {
      s.attack.minkpp.sigma_floor = as<double>(j, k);
    };
    t["importance.repeats"] = [](S& s, const json& j, const std::string& k) { s.repeats = as<std::size_t>(j, k); };
    t["diversity.total_samples"] = field<&DiversityConfig::total_samples>(&S::diversity);
    t["diversity.test_per_combo"] = field<&DiversityConfig::test_per_combo>(&S::diversity);
    t["diversity.val_total"] = field<&DiversityConfig::val_total>(&S::diversity);
    t["diversity.combo_counts"] = [](S& s, const json& j, const std::string& k) {
      if (!j.is_array()) throw UsageError("config key " + k + " must be an array");
      s.diversity.combo_counts.clear();
      for (const auto& v : j) s.diversity.combo_counts.push_back(as<std::size_t>(v, k));
    };
    return t;
  }();
  return table;
}

void apply_config_file(const std::string& path, Settings& s) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold one flat JSON object");
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
    it->second(s, value, key);
  }
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad combo count '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError("no combo counts given");
  return out;
}

/// Common options shared by all subcommands.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Flat JSON config, keys namespaced per module");
  sub->add_option("--seed", c.seed, "Seed for every random choice");
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
}

template <typename T>
void override(T& target, const std::optional<T>& flag) {
  if (flag) target = *flag;
}

FeatureSet load_inputs(const std::vector<std::string>& traces, const std::vector<std::string>& features,
                       unsigned threads, std::ostream& log) {
  FeatureSet set;
  if (!traces.empty()) {
    const auto paths = to_paths(traces);
    const auto ds = load_dataset(paths);
    log << "loaded " << ds.size() << " traces from " << ds.combos().size() << " combinations\n";
    set = extract_feature_set(ds, threads);
  }
  if (!features.empty()) {
    const auto paths = to_paths(features);
    append_feature_set(set, load_feature_set(paths));
    log << "loaded feature tensors, " << set.size() << " samples in total\n";
  }
  if (set.empty()) throw Error(ErrorKind::insufficient_data, "no input samples");
  return set;
}

std::string version_json() {
  json j{{"tool", "ltmia"},
         {"version", kToolVersion},
         {"trace_schema", std::string(kTraceSchema)},
         {"checkpoint_schema", std::string(kCheckpointSchema)},
         {"feature_layout", std::string(kFeatureLayout)},
         {"report_schema", std::string(kReportSchema)}};
  return j.dump();
}

std::string render_report_table(const json& report) {
  std::ostringstream out;
  out << "| method | family | combos | AUC | TPR@1%FPR | TPR@0.1%FPR |\n";
  out << "|---|---|---|---|---|---|\n";
  char buf[160];
  for (const auto& f : report.at("families")) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %.3f | %.3f | %.3f |\n",
                  f.at("method").get<std::string>().c_str(), f.at("family").get<std::string>().c_str(),
                  f.at("combos").get<std::size_t>(), f.at("mean_auc").get<double>(),
                  f.at("mean_tpr_at_fpr_1pct").get<double>(), f.at("mean_tpr_at_fpr_01pct").get<double>());
    out << buf;
  }
  out << "\n| method A | method B | shared combos | mean AUC diff | W | p |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& p : report.at("paired_tests")) {
    const auto& w = p.at("wilcoxon");
    if (w.is_null()) {
      std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %+.4f | - | - |\n",
                    p.at("method_a").get<std::string>().c_str(), p.at("method_b").get<std::string>().c_str(),
                    p.at("shared_combos").get<std::size_t>(), p.at("mean_auc_difference").get<double>());
    } else {
      std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %+.4f | %.1f | %.3g |\n",
                    p.at("method_a").get<std::string>().c_str(), p.at("method_b").get<std::string>().c_str(),
                    p.at("shared_combos").get<std::size_t>(), p.at("mean_auc_difference").get<double>(),
                    w.at("statistic").get<double>(), w.at("p_value").get<double>());
    }
    out << buf;
  }
  return out.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app{"LT-MIA membership inference toolkit", "ltmia"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print version and schema ids as JSON");

  Settings s;

  // synth
  Common c_synth;
  std::string synth_out;
  std::optional<std::size_t> synth_combos, synth_heldout;
  std::optional<double> synth_delta;
  auto* synth = app.add_subcommand("synth", "Generate synthetic trace files");
  add_common(synth, c_synth);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--combos", synth_combos, "Training combinations");
  synth->add_option("--heldout", synth_heldout, "Held-out combinations");
  synth->add_option("--delta", synth_delta, "Member logit boost");

  // extract-features
  Common c_feat;
  std::vector<std::string> feat_traces;
  std::string feat_out;
  auto* feat = app.add_subcommand("extract-features", "Write 128x154 feature tensors");
  add_common(feat, c_feat);
  feat->add_option("--traces", feat_traces, "Trace files")->required();
  feat->add_option("--out", feat_out, "Output feature file")->required();

  // attack
  Common c_attack;
  std::string attack_method;
  std::vector<std::string> attack_traces;
  std::string attack_out;
  auto* attack = app.add_subcommand("attack", "Score traces with a training-free attack");
  add_common(attack, c_attack);
  attack->add_option("--method", attack_method, "loss, minkpp, zlib, refloss or ezmia")->required();
  attack->add_option("--traces", attack_traces, "Trace files")->required();
  attack->add_option("--out", attack_out, "Output score CSV")->required();

  // train
  Common c_train;
  std::vector<std::string> train_traces, train_features, val_traces;
  std::string train_out;
  std::optional<double> train_val_fraction, train_lr;
  std::optional<std::size_t> train_epochs, train_batch;
  std::optional<std::string> train_arch;
  auto* trn = app.add_subcommand("train", "Train the sequence classifier");
  add_common(trn, c_train);
  auto* trn_in = trn->add_option("--traces", train_traces, "Training trace files");
  trn->add_option("--features", train_features, "Pre-extracted feature files");
  trn->add_option("--val-traces", val_traces, "Validation traces (default: split off the training set)");
  trn->add_option("--val-fraction", train_val_fraction, "Validation share of each (combo, label) cell");
  trn->add_option("--epochs", train_epochs);
  trn->add_option("--batch-size", train_batch);
  trn->add_option("--lr", train_lr);
  trn->add_option("--arch", train_arch, "transformer, logreg_flat, mlp_flat or mlp_meanpool");
  trn->add_option("--out", train_out, "Output checkpoint")->required();
  (void)trn_in;

  // score
  Common c_score;
  std::string score_ckpt, score_out;
  std::vector<std::string> score_traces, score_features;
  auto* scr = app.add_subcommand("score", "Score traces with a trained classifier");
  add_common(scr, c_score);
  scr->add_option("--ckpt", score_ckpt, "Checkpoint file")->required();
  scr->add_option("--traces", score_traces, "Trace files");
  scr->add_option("--features", score_features, "Pre-extracted feature files");
  scr->add_option("--out", score_out, "Output score CSV")->required();

  // eval
  Common c_eval;
  std::vector<std::string> eval_scores;
  std::string eval_report, eval_csv, eval_families;
  auto* evl = app.add_subcommand("eval", "Per-combination metrics and paired tests");
  add_common(evl, c_eval);
  evl->add_option("--scores", eval_scores, "Score CSV files")->required();
  evl->add_option("--report", eval_report, "Output report JSON")->required();
  evl->add_option("--csv", eval_csv, "Output per-combination CSV");
  evl->add_option("--families", eval_families, "JSON object mapping target_model_id to family");

  // ablate-importance
  Common c_imp;
  std::string imp_ckpt, imp_out;
  std::vector<std::string> imp_traces, imp_features;
  std::optional<std::size_t> imp_repeats;
  auto* imp = app.add_subcommand("ablate-importance", "Permutation importance per feature group");
  add_common(imp, c_imp);
  imp->add_option("--ckpt", imp_ckpt, "Checkpoint file")->required();
  imp->add_option("--traces", imp_traces, "Evaluation trace files");
  imp->add_option("--features", imp_features, "Evaluation feature files");
  imp->add_option("--repeats", imp_repeats, "Permutations per group");
  imp->add_option("--out", imp_out, "Output JSON")->required();

  // ablate-diversity
  Common c_div;
  std::vector<std::string> div_traces, div_heldout;
  std::string div_out, div_counts;
  std::optional<std::size_t> div_total;
  auto* div = app.add_subcommand("ablate-diversity", "Training-diversity ablation at fixed sample count");
  add_common(div, c_div);
  div->add_option("--traces", div_traces, "Training-pool trace files")->required();
  div->add_option("--heldout-traces", div_heldout, "Held-out combination trace files")->required();
  div->add_option("--combo-counts", div_counts, "Comma-separated combination counts, e.g. 1,4,8");
  div->add_option("--total-samples", div_total, "Training samples per run");
  div->add_option("--out", div_out, "Output JSON")->required();

  // report
  Common c_rep;
  std::string rep_in, rep_out;
  auto* rep = app.add_subcommand("report", "Render a report JSON as markdown tables");
  add_common(rep, c_rep);
  rep->add_option("--report", rep_in, "Report JSON from eval")->required();
  rep->add_option("--out", rep_out, "Output text file")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    log << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  if (show_version) {
    out << version_json() << "\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    log << "error: a subcommand is required\n" << app.help();
    return 2;
  }
  CLI::App* cmd = app.get_subcommands().front();

  try {
    auto prepare = [&](const Common& c) {
      if (!c.config.empty()) apply_config_file(c.config, s);
      const std::uint64_t seed = c.seed.value_or(0);
      s.synth.seed = seed;
      s.train.seed = seed;
      s.diversity.seed = seed;
      s.train.threads = c.threads;
    };

    if (cmd == synth) {
      prepare(c_synth);
      override(s.combos, synth_combos);
      override(s.heldout, synth_heldout);
      override(s.synth.delta, synth_delta);
      validate(s.synth);
      if (s.combos == 0) throw UsageError("--combos must be at least 1");
      fs::create_directories(synth_out);
      for (const char* part : {"train", "heldout"}) {
        const bool train_part = std::string_view(part) == "train";
        const fs::path path = fs::path(synth_out) / (std::string(part) + ".jsonl");
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
        const std::size_t first = train_part ? 0 : s.combos;
        const std::size_t last = train_part ? s.combos : s.combos + s.heldout;
        for (std::size_t combo = first; combo < last; ++combo) {
          for (const auto& r : generate_combo(s.synth, combo, c_synth.threads)) f << encode_trace(r) << '\n';
        }
        if (!f) throw Error(ErrorKind::io, "write failed for " + path.string());
        log << "synth: wrote combos [" << first << ", " << last << ") to " << path.string() << "\n";
      }
      return 0;
    }

    if (cmd == feat) {
      prepare(c_feat);
      const auto set = load_inputs(feat_traces, {}, c_feat.threads, log);
      write_feature_set(feat_out, set);
      log << "extract-features: wrote " << set.size() << " tensors to " << feat_out << "\n";
      return 0;
    }

    if (cmd == attack) {
      prepare(c_attack);
      Method method;
      try {
        method = parse_method(attack_method);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (method == Method::ltmia) throw UsageError("use the score subcommand for ltmia");
      const auto paths = to_paths(attack_traces);
      const auto ds = load_dataset(paths);
      log << "attack: loaded " << ds.size() << " traces\n";
      const auto scores = run_attack(ds, method, s.attack, c_attack.threads);
      write_scores_csv(attack_out, scores);
      log << "attack: wrote " << scores.size() << " " << to_string(method) << " scores to " << attack_out << "\n";
      return 0;
    }

    if (cmd == trn) {
      prepare(c_train);
      override(s.val_fraction, train_val_fraction);
      override(s.train.epochs, train_epochs);
      override(s.train.batch_size, train_batch);
      override(s.train.learning_rate, train_lr);
      if (train_arch) {
        try {
          s.classifier.arch = parse_arch(*train_arch);
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
      }
      if (train_traces.empty() && train_features.empty()) throw UsageError("train needs --traces or --features");
      validate(s.classifier);
      validate(s.train);
      const auto all = load_inputs(train_traces, train_features, c_train.threads, log);
      FeatureSet train_set, val_set;
      if (!val_traces.empty()) {
        train_set = all;
        val_set = load_inputs(val_traces, {}, c_train.threads, log);
      } else {
        if (!(s.val_fraction > 0.0 && s.val_fraction < 1.0)) throw UsageError("--val-fraction must lie in (0, 1)");
        // Stratify by (combo, label) over the feature set.
        std::vector<LogitTrace> stubs(all.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
          const auto& smp = all.samples[i];
          stubs[i].sample_id = smp.sample_id;
          stubs[i].label = smp.label;
          stubs[i].target_model_id = all.combos[smp.combo].target_model_id;
          stubs[i].dataset_id = all.combos[smp.combo].dataset_id;
        }
        const TraceDataset index(std::move(stubs));
        const std::array<double, 2> fractions{1.0 - s.val_fraction, s.val_fraction};
        const auto parts = stratified_partition(index, fractions, s.train.seed);
        train_set = all.subset(parts[0]);
        val_set = all.subset(parts[1]);
      }
      log << "train: " << train_set.size() << " training and " << val_set.size() << " validation samples, "
          << parameter_count(s.classifier) << " parameters (" << to_string(s.classifier.arch) << ")\n";
      const auto result = train(train_set, val_set, s.train, s.classifier, [&](const EpochRecord& r) {
        log << "train: epoch " << r.epoch << " loss " << r.train_loss << " val_auc " << r.val_auc << "\n";
      });
      save_checkpoint(train_out, result.best);
      log << "train: saved epoch " << result.best.meta.epoch << " (val_auc " << result.best.meta.val_auc << ") to "
          << train_out << "\n";
      return 0;
    }

    if (cmd == scr) {
      prepare(c_score);
      if (score_traces.empty() && score_features.empty()) throw UsageError("score needs --traces or --features");
      const auto ckpt = load_checkpoint(score_ckpt);
      const auto set = load_inputs(score_traces, score_features, c_score.threads, log);
      const auto scores = score(ckpt, set, c_score.threads);
      write_scores_csv(score_out, scores);
      log << "score: wrote " << scores.size() << " scores to " << score_out << "\n";
      return 0;
    }

    if (cmd == evl) {
      prepare(c_eval);
      std::vector<AttackScore> all;
      for (const auto& path : eval_scores) {
        auto part = read_scores_csv(path);
        all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
      FamilyOf family_of;
      if (!eval_families.empty()) {
        json fam;
        try {
          fam = json::parse(read_file(eval_families));
        } catch (const json::exception& e) {
          throw UsageError("family map is not valid JSON: " + std::string(e.what()));
        }
        if (!fam.is_object()) throw UsageError("family map must be a JSON object");
        std::map<std::string, std::string> table;
        for (const auto& [k, v] : fam.items()) table[k] = as<std::string>(v, k);
        family_of = [table](const ComboKey& key) {
          const auto it = table.find(key.target_model_id);
          return it == table.end() ? std::string("all") : it->second;
        };
      }
      const auto report = build_report(all, family_of);
      write_file(eval_report, report_json(report));
      if (!eval_csv.empty()) write_file(eval_csv, report_csv(report));
      log << "eval: " << report.rows.size() << " (method, combination) rows written to " << eval_report << "\n";
      return 0;
    }

    if (cmd == imp) {
      prepare(c_imp);
      override(s.repeats, imp_repeats);
      if (imp_traces.empty() && imp_features.empty()) throw UsageError("ablate-importance needs --traces or --features");
      const auto ckpt = load_checkpoint(imp_ckpt);
      const auto set = load_inputs(imp_traces, imp_features, c_imp.threads, log);
      const auto report = permutation_importance(ckpt, set, default_feature_groups(), s.repeats,
                                                 c_imp.seed.value_or(0), c_imp.threads);
      write_file(imp_out, importance_json(report));
      log << "ablate-importance: baseline AUC " << report.baseline_auc << ", wrote " << imp_out << "\n";
      return 0;
    }

    if (cmd == div) {
      prepare(c_div);
      override(s.diversity.total_samples, div_total);
      if (!div_counts.empty()) s.diversity.combo_counts = parse_counts(div_counts);
      validate(s.classifier);
      validate(s.train);
      s.diversity.train = s.train;
      s.diversity.classifier = s.classifier;
      const auto pool = load_inputs(div_traces, {}, c_div.threads, log);
      const auto heldout = load_inputs(div_heldout, {}, c_div.threads, log);
      const auto rows = diversity_ablation(pool, heldout, s.diversity, c_div.threads);
      for (const auto& r : rows) {
        log << "ablate-diversity: C=" << r.combos << " train_auc " << r.train_auc << " eval_auc " << r.eval_auc << "\n";
      }
      write_file(div_out, diversity_json(rows));
      return 0;
    }

    if (cmd == rep) {
      prepare(c_rep);
      json report;
      try {
        report = json::parse(read_file(rep_in));
        if (report.at("schema").get<std::string>() != kReportSchema) {
          throw Error(ErrorKind::unknown_schema, "not an " + std::string(kReportSchema) + " document");
        }
        write_file(rep_out, render_report_table(report));
      } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed_record, "malformed report: " + std::string(e.what()));
      }
      log << "report: wrote " << rep_out << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    log << "error: " << e.what() << "\n" << cmd->help();
    return 2;
  } catch (const Error& e) {
    log << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ltmia::cli
