#include "ltmia/classifier/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ltmia/base64.hpp"
#include "ltmia/error.hpp"

namespace ltmia {

using nlohmann::json;
using base64::decode_f32;
using base64::encode_f32;

namespace {

json config_to_json(const ClassifierConfig& c) {
  return json{{"arch", std::string(to_string(c.arch))},
              {"dropout", c.dropout},
              {"ff_dim", c.ff_dim},
              {"head_hidden", c.head_hidden},
              {"heads", c.heads},
              {"input_dim", c.input_dim},
              {"layers", c.layers},
              {"max_positions", c.max_positions},
              {"mlp_hidden", c.mlp_hidden},
              {"model_dim", c.model_dim}};
}

ClassifierConfig config_from_json(const json& j) {
  ClassifierConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  if (j.size() != 10) throw Error(ErrorKind::malformed_record, "unexpected keys in checkpoint config");
  return c;
}



}  // namespace

ClassifierCheckpoint initial_checkpoint(const ClassifierConfig& cfg, std::uint64_t seed) {
  const auto net = make_network<float>(cfg);
  ClassifierCheckpoint ckpt;
  ckpt.config = cfg;
  ckpt.norm = InputNorm::identity(cfg.input_dim);
  ckpt.params.assign(net->layout().total(), 0.0f);
  net->init(ckpt.params, seed);
  ckpt.meta.seed = seed;
  return ckpt;
}

std::string encode_checkpoint(const ClassifierCheckpoint& ckpt) {
  const auto net = make_network<float>(ckpt.config);
  const auto& layout = net->layout();
  if (ckpt.params.size() != layout.total()) {
    throw Error(ErrorKind::shape_mismatch, "checkpoint parameters do not match its config");
  }
  json header{{"schema", std::string(kCheckpointSchema)},
              {"config", config_to_json(ckpt.config)},
              {"norm", {{"scale", encode_f32(ckpt.norm.scale)}, {"shift", encode_f32(ckpt.norm.shift)}}},
              {"meta", {{"epoch", ckpt.meta.epoch}, {"seed", ckpt.meta.seed}, {"val_auc", ckpt.meta.val_auc}}},
              {"tensors", layout.specs().size()}};
  if (ckpt.optimizer) header["optimizer_step"] = ckpt.optimizer->step;
  std::string out = header.dump();
  out.push_back('\n');
  auto emit = [&](const std::string& kind, const ParamSpec& spec, const std::vector<float>& buf) {
    std::span<const float> data(buf.data() + spec.offset, spec.size());
    json line{{"cols", spec.cols}, {"data", encode_f32(data)}, {"kind", kind}, {"name", spec.name},
              {"rows", spec.rows}};
    out += line.dump();
    out.push_back('\n');
  };
  for (const auto& spec : layout.specs()) emit("param", spec, ckpt.params);
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != layout.total() || ckpt.optimizer->v.size() != layout.total()) {
      throw Error(ErrorKind::shape_mismatch, "optimizer state does not match the parameter layout");
    }
    for (const auto& spec : layout.specs()) emit("adam_m", spec, ckpt.optimizer->m);
    for (const auto& spec : layout.specs()) emit("adam_v", spec, ckpt.optimizer->v);
  }
  return out;
}

ClassifierCheckpoint decode_checkpoint(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    lines.push_back(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  if (lines.empty()) throw Error(ErrorKind::malformed_record, "empty checkpoint");
  try {
    const json header = json::parse(lines[0]);
    if (!header.is_object() || header.value("schema", std::string()) != kCheckpointSchema) {
      throw Error(ErrorKind::unknown_schema, "not an " + std::string(kCheckpointSchema) + " file");
    }
    ClassifierCheckpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    validate(ckpt.config);
    const auto net = make_network<float>(ckpt.config);
    const auto& layout = net->layout();
    ckpt.norm.scale = decode_f32(header.at("norm").at("scale").get<std::string>());
    ckpt.norm.shift = decode_f32(header.at("norm").at("shift").get<std::string>());
    if (ckpt.norm.scale.size() != ckpt.config.input_dim || ckpt.norm.shift.size() != ckpt.config.input_dim) {
      throw Error(ErrorKind::wrong_array_length, "normalization vectors do not match input_dim");
    }
    const auto& meta = header.at("meta");
    ckpt.meta.epoch = meta.at("epoch").get<std::size_t>();
    ckpt.meta.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.meta.val_auc = meta.at("val_auc").get<double>();
    if (header.at("tensors").get<std::size_t>() != layout.specs().size()) {
      throw Error(ErrorKind::shape_mismatch, "tensor count does not match the config");
    }
    const bool has_opt = header.contains("optimizer_step");
    const std::size_t blocks = has_opt ? 3 : 1;
    if (lines.size() != 1 + blocks * layout.specs().size()) {
      throw Error(ErrorKind::shape_mismatch, "unexpected number of checkpoint lines");
    }
    ckpt.params.assign(layout.total(), 0.0f);
    AdamState opt;
    if (has_opt) {
      opt.step = header.at("optimizer_step").get<std::uint64_t>();
      opt.m.assign(layout.total(), 0.0f);
      opt.v.assign(layout.total(), 0.0f);
    }
    const std::array<std::pair<const char*, std::vector<float>*>, 3> targets{
        {{"param", &ckpt.params}, {"adam_m", &opt.m}, {"adam_v", &opt.v}}};
    std::size_t li = 1;
    for (std::size_t b = 0; b < blocks; ++b) {
      for (const auto& spec : layout.specs()) {
        const json line = json::parse(lines[li]);
        const std::string where = "checkpoint line " + std::to_string(li + 1);
        if (line.at("kind").get<std::string>() != targets[b].first || line.at("name").get<std::string>() != spec.name ||
            line.at("rows").get<std::size_t>() != spec.rows || line.at("cols").get<std::size_t>() != spec.cols) {
          throw Error(ErrorKind::shape_mismatch, where + ": expected " + targets[b].first + " " + spec.name);
        }
        const auto data = decode_f32(line.at("data").get<std::string>());
        if (data.size() != spec.size()) throw Error(ErrorKind::wrong_array_length, where + ": tensor size");
        std::copy(data.begin(), data.end(), targets[b].second->begin() + static_cast<std::ptrdiff_t>(spec.offset));
        ++li;
      }
    }
    if (has_opt) ckpt.optimizer = std::move(opt);
    return ckpt;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_record, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ClassifierCheckpoint& ckpt) {
  const std::string text = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

ClassifierCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace ltmia
