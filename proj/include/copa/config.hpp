#pragma once

// Experiment configuration: one JSON document covering paths, rendering,
// model shapes, both training stages, and the evaluation protocol.
// Defaults follow the published settings; desk() shrinks everything to
// laptop scale. Loading tolerates missing keys (defaults apply) but rejects
// unknown ones.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "copa/cache.hpp"
#include "copa/errors.hpp"
#include "copa/finetune.hpp"
#include "copa/nn/encoder.hpp"
#include "copa/nn/fusion.hpp"
#include "copa/pretrain.hpp"
#include "copa/render.hpp"

namespace copa {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string precision = "float64";   // float64 reproducible mode, float32 fast mode
  std::string manifest_path;
  std::string pretrain_manifest_path;  // empty: reuse manifest_path
  std::string cache_dir;               // empty: in-memory cache only
  std::string output_dir = "out";
  RenderConfig render;
  nn::EncoderConfig encoder;
  nn::FusionConfig fusion;
  nn::HeadConfig head;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  int folds = 5;
  double train_ratio = 7.0;
  double test_ratio = 2.0;

  ExperimentConfig() {
    encoder.input_height = render.height;
    encoder.input_width = render.width;
    fusion.attention_scale_dim = 1024.0;  // stated scale at full size
  }

  // Laptop-scale preset: small renders, a thin encoder, short schedules.
  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.render.height = 64;
    c.render.width = 64;
    c.encoder.input_height = 64;
    c.encoder.input_width = 64;
    c.encoder.stage_widths = {8, 16, 32};
    c.encoder.embedding_dim = 64;
    c.fusion.attention_scale_dim = 0.0;  // fall back to the embedding dim
    c.head.hidden_dim = 64;
    c.pretrain.batch_size = 16;
    c.pretrain.queue_capacity = 512;
    c.pretrain.rotations_per_cloud = 4;
    c.pretrain.epochs = 10;
    c.finetune.batch_size = 8;
    c.finetune.epochs = 30;
    return c;
  }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline void check_known_keys(const nlohmann::json& j, std::vector<std::string> known,
                             const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known)
      if (k == key) ok = true;
    if (!ok) throw ConfigError("config: unknown key \"" + (where.empty() ? key : where + "." + key) + "\"");
  }
}

}  // namespace detail

inline nlohmann::json render_config_json(const RenderConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"channels", c.channels},
          {"camera_distance", c.camera_distance},
          {"fov_deg", c.fov_deg},
          {"splat_radius", c.splat_radius},
          {"background", std::vector<double>{c.background[0], c.background[1], c.background[2]}}};
}

inline RenderConfig render_config_from_json(const nlohmann::json& j, RenderConfig c = {}) {
  detail::check_known_keys(
      j, {"height", "width", "channels", "camera_distance", "fov_deg", "splat_radius", "background"},
      "render");
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  c.camera_distance = j.value("camera_distance", c.camera_distance);
  c.fov_deg = j.value("fov_deg", c.fov_deg);
  c.splat_radius = j.value("splat_radius", c.splat_radius);
  if (j.contains("background")) {
    const auto bg = j.at("background").get<std::vector<double>>();
    if (bg.size() != 3) throw ConfigError("config: render.background needs 3 values");
    c.background = {bg[0], bg[1], bg[2]};
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"seed", c.seed},
          {"precision", c.precision},
          {"manifest", c.manifest_path},
          {"pretrain_manifest", c.pretrain_manifest_path},
          {"cache_dir", c.cache_dir},
          {"output_dir", c.output_dir},
          {"render", render_config_json(c.render)},
          {"encoder", encoder_config_json(c.encoder)},
          {"fusion", fusion_config_json(c.fusion)},
          {"head", {{"hidden_dim", c.head.hidden_dim}, {"seed", c.head.seed}}},
          {"pretrain", pretrain_config_json(c.pretrain)},
          {"finetune", finetune_config_json(c.finetune)},
          {"protocol",
           {{"folds", c.folds}, {"train_ratio", c.train_ratio}, {"test_ratio", c.test_ratio}}}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  detail::check_known_keys(j,
                           {"seed", "precision", "manifest", "pretrain_manifest", "cache_dir",
                            "output_dir", "render", "encoder", "fusion", "head", "pretrain",
                            "finetune", "protocol"},
                           "");
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.precision = j.value("precision", c.precision);
  c.manifest_path = j.value("manifest", c.manifest_path);
  c.pretrain_manifest_path = j.value("pretrain_manifest", c.pretrain_manifest_path);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("render")) c.render = render_config_from_json(j.at("render"), c.render);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    detail::check_known_keys(e,
                             {"input_height", "input_width", "input_channels", "stage_widths",
                              "embedding_dim", "kernel_size", "seed"},
                             "encoder");
    c.encoder.input_height = e.value("input_height", c.encoder.input_height);
    c.encoder.input_width = e.value("input_width", c.encoder.input_width);
    c.encoder.input_channels = e.value("input_channels", c.encoder.input_channels);
    c.encoder.stage_widths = e.value("stage_widths", c.encoder.stage_widths);
    c.encoder.embedding_dim = e.value("embedding_dim", c.encoder.embedding_dim);
    c.encoder.kernel_size = e.value("kernel_size", c.encoder.kernel_size);
    c.encoder.seed = e.value("seed", c.encoder.seed);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    detail::check_known_keys(f, {"num_heads", "attention_scale_dim", "scale_by_head_dim", "seed"},
                             "fusion");
    c.fusion.num_heads = f.value("num_heads", c.fusion.num_heads);
    c.fusion.attention_scale_dim = f.value("attention_scale_dim", c.fusion.attention_scale_dim);
    c.fusion.scale_by_head_dim = f.value("scale_by_head_dim", c.fusion.scale_by_head_dim);
    c.fusion.seed = f.value("seed", c.fusion.seed);
  }
  if (j.contains("head")) {
    const auto& h = j.at("head");
    detail::check_known_keys(h, {"hidden_dim", "seed"}, "head");
    c.head.hidden_dim = h.value("hidden_dim", c.head.hidden_dim);
    c.head.seed = h.value("seed", c.head.seed);
  }
  if (j.contains("pretrain")) {
    nlohmann::json merged = pretrain_config_json(c.pretrain);
    detail::check_known_keys(j.at("pretrain"),
                             {"lambda_weight", "temperature",
                              "include_positive_in_denominator", "momentum", "queue_capacity",
                              "rotations_per_cloud", "batch_size", "epochs", "learning_rate",
                              "lr_decay", "lr_decay_epochs", "optimizer_momentum", "weight_decay",
                              "mask_ratio_min", "mask_ratio_max", "seed"},
                             "pretrain");
    merged.update(j.at("pretrain"));
    c.pretrain = pretrain_config_from_json(merged);
  }
  if (j.contains("finetune")) {
    nlohmann::json merged = finetune_config_json(c.finetune);
    detail::check_known_keys(j.at("finetune"),
                             {"alpha", "batch_size", "epochs", "learning_rate", "lr_decay",
                              "lr_decay_epochs", "weight_decay", "seed"},
                             "finetune");
    merged.update(j.at("finetune"));
    c.finetune = finetune_config_from_json(merged);
  }
  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    detail::check_known_keys(p, {"folds", "train_ratio", "test_ratio"}, "protocol");
    c.folds = p.value("folds", c.folds);
    c.train_ratio = p.value("train_ratio", c.train_ratio);
    c.test_ratio = p.value("test_ratio", c.test_ratio);
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

inline void save_experiment_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << to_json(c).dump(2) << "\n";
}

// Applies one "dotted.path=value" override. The path must already exist in
// the serialized form; the value is parsed as JSON when possible, else
// taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override \"" + spec + "\" is not of the form key=value");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  std::string pointer = "/";
  for (const char ch : key) pointer += ch == '.' ? '/' : ch;
  const nlohmann::json::json_pointer ptr(pointer);
  if (!j.contains(ptr)) throw ConfigError("override targets unknown config key \"" + key + "\"");

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  j[ptr] = value;
}

inline ExperimentConfig apply_overrides(const ExperimentConfig& base,
                                        const std::vector<std::string>& overrides) {
  nlohmann::json j = to_json(base);
  for (const auto& o : overrides) apply_override(j, o);
  return experiment_config_from_json(j);
}

// Sub-stage seeds all derive from the experiment seed so one value pins the
// whole run.
inline void resolve_seeds(ExperimentConfig& c) {
  c.encoder.seed = derive_seed(c.seed, tag("encoder"));
  c.fusion.seed = derive_seed(c.seed, tag("fusion"));
  c.head.seed = derive_seed(c.seed, tag("head"));
  c.pretrain.seed = derive_seed(c.seed, tag("pretrain"));
  c.finetune.seed = derive_seed(c.seed, tag("finetune"));
}

inline void validate(const ExperimentConfig& c) {
  if (c.precision != "float64" && c.precision != "float32")
    throw ConfigError("config: precision must be \"float64\" or \"float32\"");
  validate(c.render);
  nn::validate(c.encoder);
  nn::validate(c.fusion, c.encoder.embedding_dim);
  if (c.head.hidden_dim <= 0) throw ConfigError("config: head.hidden_dim must be positive");
  validate(c.pretrain);
  validate(c.finetune);
  if (c.encoder.input_height != c.render.height || c.encoder.input_width != c.render.width)
    throw ConfigError("config: encoder input " + std::to_string(c.encoder.input_height) + "x" +
                      std::to_string(c.encoder.input_width) + " does not match render " +
                      std::to_string(c.render.height) + "x" + std::to_string(c.render.width));
  if (c.folds < 2) throw ConfigError("config: protocol.folds must be at least 2");
  if (!(c.train_ratio > 0.0) || !(c.test_ratio > 0.0))
    throw ConfigError("config: protocol ratios must be positive");
}

inline std::string config_hash(const ExperimentConfig& c) {
  const std::string dump = to_json(c).dump();
  const std::uint64_t h = fnv1a_bytes(dump.data(), dump.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace copa
