#pragma once

// Contrastive pre-training loop: patch-mixed anchors through the query
// encoder, positives and negatives through the momentum key encoder, the
// lambda-weighted distortion/content loss, SGD on the query side, and the
// FIFO negative queue.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "copa/anchor.hpp"
#include "copa/cache.hpp"
#include "copa/checkpoint.hpp"
#include "copa/contrastive.hpp"
#include "copa/dataset.hpp"
#include "copa/errors.hpp"
#include "copa/manifest.hpp"
#include "copa/nn/encoder.hpp"
#include "copa/nn/optim.hpp"
#include "copa/render.hpp"
#include "copa/rng.hpp"
#include "copa/rotation.hpp"

namespace copa {

struct PretrainConfig {
  double lambda_weight = 0.3;   // distortion-wise share of the combined loss
  double temperature = 0.2;
  bool include_positive_in_denominator = false;
  double momentum = 0.999;      // key-encoder EMA coefficient
  int queue_capacity = 4096;
  int rotations_per_cloud = 6;  // fixed random rotations per content
  int batch_size = 128;
  int epochs = 200;
  double learning_rate = 0.005;
  double lr_decay = 0.2;
  int lr_decay_epochs = 10;
  double optimizer_momentum = 0.95;
  double weight_decay = 1e-4;
  double mask_ratio_min = 0.25;
  double mask_ratio_max = 0.75;
  std::uint64_t seed = 0;

  bool operator==(const PretrainConfig&) const = default;
};

inline void validate(const PretrainConfig& c) {
  if (!(c.lambda_weight >= 0.0 && c.lambda_weight <= 1.0))
    throw ConfigError("pretrain: lambda_weight outside [0,1]");
  if (!(c.temperature > 0.0)) throw ConfigError("pretrain: temperature must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0))
    throw ConfigError("pretrain: momentum outside [0,1)");
  if (c.queue_capacity <= 0) throw ConfigError("pretrain: queue_capacity must be positive");
  if (c.batch_size <= 0) throw ConfigError("pretrain: batch_size must be positive");
  if (c.queue_capacity % c.batch_size != 0)
    throw ConfigError("pretrain: queue_capacity " + std::to_string(c.queue_capacity) +
                      " is not a multiple of batch_size " + std::to_string(c.batch_size));
  if (c.rotations_per_cloud <= 0)
    throw ConfigError("pretrain: rotations_per_cloud must be positive");
  if (c.epochs < 0) throw ConfigError("pretrain: negative epoch count");
  if (!(c.learning_rate > 0.0)) throw ConfigError("pretrain: learning_rate must be positive");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0))
    throw ConfigError("pretrain: lr_decay outside (0,1]");
  if (c.lr_decay_epochs <= 0) throw ConfigError("pretrain: lr_decay_epochs must be positive");
  if (!(c.optimizer_momentum >= 0.0 && c.optimizer_momentum < 1.0))
    throw ConfigError("pretrain: optimizer_momentum outside [0,1)");
  if (c.weight_decay < 0.0) throw ConfigError("pretrain: negative weight_decay");
  if (!(c.mask_ratio_min >= 0.0 && c.mask_ratio_min <= c.mask_ratio_max &&
        c.mask_ratio_max <= 1.0))
    throw ConfigError("pretrain: mask ratio bounds must satisfy 0 <= min <= max <= 1");
}

// One anchor with its positives and in-batch distortion-wise negatives.
// Row indices refer to manifest rows; all images share content and rotation.
struct PretrainItem {
  ProjectedImage anchor;
  ProjectedImage pos1;
  ProjectedImage pos2;
  std::vector<ProjectedImage> negatives;
  double mask_ratio = 0.0;
  int content_id = -1;
  std::size_t d1_row = 0;
  std::size_t d2_row = 0;
  int rotation_index = 0;
};

struct PretrainBatch {
  std::vector<PretrainItem> items;
};

// Everything sample_batch needs to turn manifest rows into images.
struct PretrainData {
  const DatasetManifest* manifest = nullptr;
  CloudStore* clouds = nullptr;
  RenderCache* cache = nullptr;
  RenderConfig render;
};

namespace detail {

inline const std::vector<ContentRows>& checked_index(const std::vector<ContentRows>& index) {
  if (index.size() < 2)
    throw DatasetError("pretrain: need at least 2 contents, got " + std::to_string(index.size()));
  for (const auto& c : index)
    if (c.rows.size() < 3)
      throw DatasetError("pretrain: content " + std::to_string(c.content_id) + " has only " +
                         std::to_string(c.rows.size()) +
                         " distorted samples, need at least 3 for negatives");
  return index;
}

// The per-(content, slot) rotation is a pure function of the run seed, so
// renders stay cache-hits across every epoch.
inline Rotation slot_rotation(std::uint64_t seed, int content_id, int rotation_index) {
  return random_rotation(derive_seed(seed, tag("rot"), content_id, rotation_index));
}

inline ProjectedImage render_row(PretrainData& data, std::size_t row, const Rotation& rotation,
                                 int content_id) {
  const ManifestEntry& e = data.manifest->entries[row];
  ProjectedImage img = data.cache->get(data.clouds->get(e.path), rotation, data.render);
  img.source.content_id = content_id;
  img.source.distortion_id = static_cast<int>(row);
  img.source.distortion_id2 = -1;
  return img;
}

}  // namespace detail

// Draws batch_size independent items: uniform content, uniform rotation
// slot, uniform ordered pair d1 != d2 of that content's rows, plus a fresh
// patch mask. Identical step_seed reproduces the batch exactly.
inline PretrainBatch sample_batch(PretrainData& data, const std::vector<ContentRows>& index,
                                  const PretrainConfig& config, std::uint64_t step_seed) {
  detail::checked_index(index);
  validate(config);
  Rng rng = make_rng(derive_seed(step_seed, tag("batch")));
  PretrainBatch batch;
  batch.items.reserve(static_cast<std::size_t>(config.batch_size));
  for (int k = 0; k < config.batch_size; ++k) {
    const ContentRows& content = index[uniform_below(rng, index.size())];
    const int rot_idx = static_cast<int>(
        uniform_below(rng, static_cast<std::uint64_t>(config.rotations_per_cloud)));
    const std::size_t nd = content.rows.size();
    const std::size_t a = uniform_below(rng, nd);
    std::size_t b = uniform_below(rng, nd - 1);
    if (b >= a) ++b;

    const Rotation rotation = detail::slot_rotation(config.seed, content.content_id, rot_idx);
    PretrainItem item;
    item.content_id = content.content_id;
    item.rotation_index = rot_idx;
    item.d1_row = content.rows[a];
    item.d2_row = content.rows[b];
    item.pos1 = detail::render_row(data, item.d1_row, rotation, content.content_id);
    item.pos2 = detail::render_row(data, item.d2_row, rotation, content.content_id);
    for (std::size_t d = 0; d < nd; ++d) {
      if (d == a || d == b) continue;
      item.negatives.push_back(
          detail::render_row(data, content.rows[d], rotation, content.content_id));
    }
    const PatchMask mask =
        sample_mask(data.render.height, data.render.width, config.mask_ratio_min,
                    config.mask_ratio_max, derive_seed(step_seed, tag("item"), k));
    item.anchor = mix(item.pos1, item.pos2, mask);
    item.mask_ratio = masking_ratio(mask);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

template <class T>
struct PretrainState {
  nn::EncoderConfig encoder_config;
  nn::EncoderParams<T> query;
  nn::EncoderParams<T> key;
  NegativeQueue<T> queue;
  nn::SgdOptimizer<T> optimizer;
  std::int64_t step = 0;
  int epoch = 0;

  PretrainState(const nn::EncoderConfig& enc, const PretrainConfig& cfg)
      : encoder_config(enc),
        queue(static_cast<std::size_t>(cfg.queue_capacity)),
        optimizer(cfg.optimizer_momentum, cfg.weight_decay) {}
};

template <class T>
PretrainState<T> init_pretrain_state(const nn::EncoderConfig& encoder_config,
                                     const PretrainConfig& config) {
  validate(config);
  nn::validate(encoder_config);
  PretrainState<T> state(encoder_config, config);
  state.query = nn::init_encoder<T>(encoder_config);
  state.key = state.query;  // key starts as an exact copy
  return state;
}

inline double pretrain_lr(const PretrainConfig& config, int epoch) {
  return config.learning_rate *
         std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_epochs));
}

struct PretrainEpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  int steps = 0;
  std::vector<double> step_loss;
  std::vector<double> step_distortion_loss;
  std::vector<double> step_content_loss;
  double mean_loss = 0.0;
  double mean_distortion_loss = 0.0;
  double mean_content_loss = 0.0;
};

inline int pretrain_steps_per_epoch(std::size_t num_contents, const PretrainConfig& config) {
  const std::size_t items = num_contents * static_cast<std::size_t>(config.rotations_per_cloud);
  return static_cast<int>(
      std::max<std::size_t>(1, (items + static_cast<std::size_t>(config.batch_size) - 1) /
                                   static_cast<std::size_t>(config.batch_size)));
}

// Before the first step the queue is empty and the content-wise loss would
// have no negatives, so one key feature per content (first row, rotation
// slot 0) is enqueued up front.
template <class T>
void warm_start_queue(PretrainState<T>& state, PretrainData& data,
                      const std::vector<ContentRows>& index, const PretrainConfig& config) {
  for (const auto& content : index) {
    const Rotation rotation = detail::slot_rotation(config.seed, content.content_id, 0);
    const ProjectedImage img =
        detail::render_row(data, content.rows[0], rotation, content.content_id);
    nn::Tensor<T> f = nn::encode_image_nograd(state.key, img, state.encoder_config);
    state.queue.enqueue(std::move(f.data), content.content_id);
  }
}

template <class T>
PretrainEpochStats pretrain_epoch(PretrainState<T>& state, PretrainData& data,
                                  const PretrainConfig& config) {
  validate(config);
  const std::vector<ContentRows> index =
      detail::checked_index(build_content_index(*data.manifest));
  if (state.step == 0 && state.queue.size() == 0) warm_start_queue(state, data, index, config);

  ContrastiveSettings<T> settings;
  settings.temperature = static_cast<T>(config.temperature);
  settings.include_positive_in_denominator = config.include_positive_in_denominator;
  const T lambda = static_cast<T>(config.lambda_weight);

  PretrainEpochStats stats;
  stats.epoch = state.epoch;
  stats.learning_rate = pretrain_lr(config, state.epoch);
  stats.steps = pretrain_steps_per_epoch(index.size(), config);

  auto query_refs = nn::param_refs(state.query, "encoder");
  auto key_refs = nn::param_refs(state.key, "encoder");

  for (int s = 0; s < stats.steps; ++s) {
    const std::uint64_t step_seed =
        derive_seed(config.seed, tag("pretrain-step"), state.epoch, s);
    PretrainBatch batch = sample_batch(data, index, config, step_seed);

    nn::Tape<T> tape;
    const nn::EncoderVars qvars = nn::load_encoder(tape, state.query, true);
    std::vector<nn::Var> item_losses;
    std::vector<nn::Var> item_ld, item_lc;
    // Key features in enqueue order: pos1, pos2, then negatives, per item.
    std::vector<std::pair<std::vector<T>, int>> pending_keys;

    for (const PretrainItem& item : batch.items) {
      const nn::Var anchor_f =
          nn::encode_image(tape, qvars, item.anchor, state.encoder_config);
      nn::Tensor<T> p1 = nn::encode_image_nograd(state.key, item.pos1, state.encoder_config);
      nn::Tensor<T> p2 = nn::encode_image_nograd(state.key, item.pos2, state.encoder_config);
      std::vector<std::vector<T>> negs;
      negs.reserve(item.negatives.size());
      for (const ProjectedImage& n : item.negatives)
        negs.push_back(nn::encode_image_nograd(state.key, n, state.encoder_config).data);

      const T r = static_cast<T>(item.mask_ratio);
      const nn::Var ld = distortion_loss(tape, anchor_f, p1.data, p2.data, negs, r, settings);
      item_ld.push_back(ld);
      if (state.queue.eligible(item.content_id).empty()) {
        // A queue much smaller than the key flow per batch can transiently
        // hold the anchor's own content only. The content term is undefined
        // then, so the item contributes its distortion loss alone.
        item_losses.push_back(ld);
      } else {
        const nn::Var lc = content_loss(tape, anchor_f, p1.data, p2.data, state.queue,
                                        item.content_id, r, settings);
        item_lc.push_back(lc);
        item_losses.push_back(pretrain_loss(tape, ld, lc, lambda));
      }

      pending_keys.emplace_back(std::move(p1.data), item.content_id);
      pending_keys.emplace_back(std::move(p2.data), item.content_id);
      for (auto& n : negs) pending_keys.emplace_back(std::move(n), item.content_id);
    }

    const nn::Var batch_loss = nn::mean_scalars(tape, item_losses);
    const double loss_value = static_cast<double>(tape.value(batch_loss).data[0]);
    if (!std::isfinite(loss_value))
      throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(state.epoch) +
                         " step " + std::to_string(s));
    tape.backward(batch_loss);

    std::vector<nn::Tensor<T>> grads;
    for (const nn::Var v : nn::var_list(qvars)) grads.push_back(tape.grad(v));
    state.optimizer.step(query_refs, grads, stats.learning_rate);
    nn::momentum_update(key_refs, query_refs, config.momentum);
    for (auto& [feature, content] : pending_keys)
      state.queue.enqueue(std::move(feature), content);

    double ld_sum = 0.0, lc_sum = 0.0;
    for (const nn::Var v : item_ld) ld_sum += static_cast<double>(tape.value(v).data[0]);
    for (const nn::Var v : item_lc) lc_sum += static_cast<double>(tape.value(v).data[0]);
    stats.step_loss.push_back(loss_value);
    stats.step_distortion_loss.push_back(ld_sum / static_cast<double>(batch.items.size()));
    stats.step_content_loss.push_back(
        item_lc.empty() ? 0.0 : lc_sum / static_cast<double>(item_lc.size()));
    ++state.step;
  }

  for (int s = 0; s < stats.steps; ++s) {
    stats.mean_loss += stats.step_loss[static_cast<std::size_t>(s)];
    stats.mean_distortion_loss += stats.step_distortion_loss[static_cast<std::size_t>(s)];
    stats.mean_content_loss += stats.step_content_loss[static_cast<std::size_t>(s)];
  }
  stats.mean_loss /= stats.steps;
  stats.mean_distortion_loss /= stats.steps;
  stats.mean_content_loss /= stats.steps;
  ++state.epoch;
  return stats;
}

// Checkpoint layout: query/key encoder tensors, optimizer velocity, queue
// features, and counters + configs in the metadata block.

inline nlohmann::json encoder_config_json(const nn::EncoderConfig& c) {
  return {{"input_height", c.input_height}, {"input_width", c.input_width},
          {"input_channels", c.input_channels}, {"stage_widths", c.stage_widths},
          {"embedding_dim", c.embedding_dim}, {"kernel_size", c.kernel_size},
          {"seed", c.seed}};
}

inline nn::EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  nn::EncoderConfig c;
  c.input_height = j.at("input_height").get<int>();
  c.input_width = j.at("input_width").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json pretrain_config_json(const PretrainConfig& c) {
  return {{"lambda_weight", c.lambda_weight},
          {"temperature", c.temperature},
          {"include_positive_in_denominator", c.include_positive_in_denominator},
          {"momentum", c.momentum},
          {"queue_capacity", c.queue_capacity},
          {"rotations_per_cloud", c.rotations_per_cloud},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"lr_decay_epochs", c.lr_decay_epochs},
          {"optimizer_momentum", c.optimizer_momentum},
          {"weight_decay", c.weight_decay},
          {"mask_ratio_min", c.mask_ratio_min},
          {"mask_ratio_max", c.mask_ratio_max},
          {"seed", c.seed}};
}

inline PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.lambda_weight = j.at("lambda_weight").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.include_positive_in_denominator = j.at("include_positive_in_denominator").get<bool>();
  c.momentum = j.at("momentum").get<double>();
  c.queue_capacity = j.at("queue_capacity").get<int>();
  c.rotations_per_cloud = j.at("rotations_per_cloud").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.lr_decay_epochs = j.at("lr_decay_epochs").get<int>();
  c.optimizer_momentum = j.at("optimizer_momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.mask_ratio_min = j.at("mask_ratio_min").get<double>();
  c.mask_ratio_max = j.at("mask_ratio_max").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <class T>
void save_pretrain_checkpoint(PretrainState<T>& state, const PretrainConfig& config,
                              const std::string& path) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "pretrain";
  ckpt.metadata["step"] = state.step;
  ckpt.metadata["epoch"] = state.epoch;
  ckpt.metadata["encoder_config"] = encoder_config_json(state.encoder_config);
  ckpt.metadata["pretrain_config"] = pretrain_config_json(config);

  checkpoint_add_params(ckpt, nn::param_refs(state.query, "query"));
  checkpoint_add_params(ckpt, nn::param_refs(state.key, "key"));

  auto refs = nn::param_refs(state.query, "query");
  auto& velocity = state.optimizer.state();
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    std::vector<std::int64_t> shape(velocity[i].shape.begin(), velocity[i].shape.end());
    std::vector<double> dat(velocity[i].data.begin(), velocity[i].data.end());
    ckpt.add_array("optim.v." + refs[i].first, std::move(shape), std::move(dat));
  }
  ckpt.metadata["optimizer_slots"] = velocity.size();

  const auto& entries = state.queue.entries();
  const int dim = state.encoder_config.embedding_dim;
  std::vector<double> feats;
  feats.reserve(entries.size() * static_cast<std::size_t>(dim));
  std::vector<double> contents;
  for (const auto& e : entries) {
    for (const T v : e.feature) feats.push_back(static_cast<double>(v));
    contents.push_back(static_cast<double>(e.content_id));
  }
  ckpt.add_array("queue.features", {static_cast<std::int64_t>(entries.size()), dim},
                 std::move(feats));
  ckpt.add_array("queue.contents", {static_cast<std::int64_t>(entries.size())},
                 std::move(contents));
  ckpt.save(path);
}

template <class T>
struct LoadedPretrain {
  PretrainState<T> state;
  PretrainConfig config;
};

template <class T>
LoadedPretrain<T> load_pretrain_checkpoint(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  if (ckpt.metadata.value("kind", "") != "pretrain")
    throw FormatError(path + ": not a pretrain checkpoint");
  const nn::EncoderConfig enc = encoder_config_from_json(ckpt.metadata.at("encoder_config"));
  const PretrainConfig cfg = pretrain_config_from_json(ckpt.metadata.at("pretrain_config"));

  PretrainState<T> state(enc, cfg);
  state.query = nn::init_encoder<T>(enc);
  state.key = state.query;
  state.step = ckpt.metadata.at("step").get<std::int64_t>();
  state.epoch = ckpt.metadata.at("epoch").get<int>();
  checkpoint_read_params(ckpt, nn::param_refs(state.query, "query"));
  checkpoint_read_params(ckpt, nn::param_refs(state.key, "key"));

  auto refs = nn::param_refs(state.query, "query");
  const std::size_t slots = ckpt.metadata.value("optimizer_slots", std::size_t{0});
  if (slots > 0) {
    if (slots != refs.size())
      throw FormatError(path + ": optimizer state does not match parameter count");
    auto& velocity = state.optimizer.state();
    velocity.clear();
    for (const auto& [name, tensor] : refs) {
      const ArrayRecord& rec = ckpt.array("optim.v." + name);
      nn::Tensor<T> v(tensor->shape);
      if (rec.data.size() != v.data.size())
        throw ShapeError(path + ": optimizer slot " + name + " has wrong size");
      for (std::size_t i = 0; i < rec.data.size(); ++i) v.data[i] = static_cast<T>(rec.data[i]);
      velocity.push_back(std::move(v));
    }
  }

  const ArrayRecord& qf = ckpt.array("queue.features");
  const ArrayRecord& qc = ckpt.array("queue.contents");
  if (qf.shape.size() != 2 || qf.shape[1] != enc.embedding_dim ||
      qf.shape[0] != static_cast<std::int64_t>(qc.data.size()))
    throw FormatError(path + ": malformed queue arrays");
  const std::size_t n = qc.data.size();
  const std::size_t dim = static_cast<std::size_t>(enc.embedding_dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<T> f(dim);
    for (std::size_t d = 0; d < dim; ++d) f[d] = static_cast<T>(qf.data[i * dim + d]);
    state.queue.enqueue(std::move(f), static_cast<int>(qc.data[i]));
  }
  return {std::move(state), cfg};
}

}  // namespace copa
