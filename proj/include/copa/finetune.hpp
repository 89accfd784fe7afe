#pragma once

// Fine-tuning: six axis views through the pre-trained view encoder, a
// frozen semantic encoder over the stitched image guiding multi-head
// cross-attention fusion, a two-layer regression head, and the alpha-mixed
// MSE + pairwise rank objective.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "copa/cache.hpp"
#include "copa/checkpoint.hpp"
#include "copa/dataset.hpp"
#include "copa/errors.hpp"
#include "copa/manifest.hpp"
#include "copa/nn/encoder.hpp"
#include "copa/nn/fusion.hpp"
#include "copa/nn/optim.hpp"
#include "copa/pretrain.hpp"
#include "copa/render.hpp"
#include "copa/rng.hpp"

namespace copa {

struct FinetuneConfig {
  double alpha = 0.5;  // MSE share of the combined loss
  int batch_size = 16;
  int epochs = 150;
  double learning_rate = 0.003;
  double lr_decay = 0.9;
  int lr_decay_epochs = 5;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  bool operator==(const FinetuneConfig&) const = default;
};

inline void validate(const FinetuneConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("finetune: alpha outside [0,1]");
  if (c.batch_size < 2)
    throw ConfigError("finetune: batch_size must be at least 2 for the rank loss");
  if (c.epochs < 0) throw ConfigError("finetune: negative epoch count");
  if (!(c.learning_rate > 0.0)) throw ConfigError("finetune: learning_rate must be positive");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0))
    throw ConfigError("finetune: lr_decay outside (0,1]");
  if (c.lr_decay_epochs <= 0) throw ConfigError("finetune: lr_decay_epochs must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("finetune: negative weight_decay");
}

// Plain losses (Eqs. 7-9) used by tests and reporting.

inline double mse_loss(const std::vector<double>& predicted, const std::vector<double>& target) {
  if (predicted.size() != target.size()) throw ShapeError("mse_loss: lengths differ");
  if (predicted.empty()) throw UsageError("mse_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

// (1/B^2) sum_ij max(0, |q_i - q_j| - e_ij (p_i - p_j)) with e_ij = +1 when
// q_i >= q_j, else -1. Diagonal terms are zero but stay in the sum.
inline double rank_loss(const std::vector<double>& predicted, const std::vector<double>& target) {
  if (predicted.size() != target.size()) throw ShapeError("rank_loss: lengths differ");
  if (predicted.size() < 2) throw UsageError("rank_loss: need at least 2 samples");
  const std::size_t n = predicted.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double e = target[i] >= target[j] ? 1.0 : -1.0;
      s += std::max(0.0, std::abs(target[i] - target[j]) - e * (predicted[i] - predicted[j]));
    }
  }
  return s / static_cast<double>(n * n);
}

inline double finetune_loss(double mse, double rank, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("finetune_loss: alpha outside [0,1]");
  return alpha * mse + (1.0 - alpha) * rank;
}

// Tape versions over a batch of predicted scalars.

template <class T>
nn::Var mse_loss(nn::Tape<T>& tape, const std::vector<nn::Var>& predicted,
                 const std::vector<T>& target) {
  if (predicted.size() != target.size()) throw ShapeError("mse_loss: lengths differ");
  if (predicted.empty()) throw UsageError("mse_loss: empty batch");
  std::vector<nn::Var> terms;
  terms.reserve(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i)
    terms.push_back(nn::square(tape, nn::add_const(tape, predicted[i], -target[i])));
  return nn::mean_scalars(tape, terms);
}

template <class T>
nn::Var rank_loss(nn::Tape<T>& tape, const std::vector<nn::Var>& predicted,
                  const std::vector<T>& target) {
  if (predicted.size() != target.size()) throw ShapeError("rank_loss: lengths differ");
  if (predicted.size() < 2) throw UsageError("rank_loss: need at least 2 samples");
  const std::size_t n = predicted.size();
  std::vector<nn::Var> terms;
  terms.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T e = target[i] >= target[j] ? T(1) : T(-1);
      const nn::Var diff = nn::sub(tape, predicted[i], predicted[j]);
      const nn::Var inner =
          nn::add_const(tape, nn::scale(tape, diff, -e), std::abs(target[i] - target[j]));
      terms.push_back(nn::hinge(tape, inner));
    }
  }
  return nn::scale(tape, nn::sum_scalars(tape, terms), T(1) / static_cast<T>(n * n));
}

template <class T>
nn::Var finetune_loss(nn::Tape<T>& tape, nn::Var mse, nn::Var rank, T alpha) {
  if (!(alpha >= T(0) && alpha <= T(1)))
    throw ConfigError("finetune_loss: alpha outside [0,1]");
  return nn::add(tape, nn::scale(tape, mse, alpha), nn::scale(tape, rank, T(1) - alpha));
}

// Full predictor: view encoder F (trainable), semantic encoder G (frozen
// backbone, trainable projection), fusion, head.
template <class T>
struct FinetuneModel {
  nn::EncoderConfig view_config;
  nn::EncoderConfig semantic_config;  // stitched 2H x 3W input
  nn::FusionConfig fusion_config;
  nn::HeadConfig head_config;
  nn::EncoderParams<T> view_encoder;
  nn::EncoderParams<T> semantic;
  nn::FusionParams<T> fusion;
  nn::HeadParams<T> head;
};

inline nn::EncoderConfig stitched_config(const nn::EncoderConfig& view, std::uint64_t seed) {
  nn::EncoderConfig c = view;
  c.input_height = 2 * view.input_height;
  c.input_width = 3 * view.input_width;
  c.seed = seed;
  return c;
}

template <class T>
FinetuneModel<T> init_finetune_model(const nn::EncoderConfig& view_config,
                                     const nn::FusionConfig& fusion_config,
                                     const nn::HeadConfig& head_config, std::uint64_t seed) {
  nn::validate(view_config);
  nn::validate(fusion_config, view_config.embedding_dim);
  FinetuneModel<T> m;
  m.view_config = view_config;
  m.view_config.seed = derive_seed(seed, tag("view-encoder"));
  m.semantic_config = stitched_config(view_config, derive_seed(seed, tag("semantic-encoder")));
  nn::validate(m.semantic_config);
  m.fusion_config = fusion_config;
  m.fusion_config.seed = derive_seed(seed, tag("fusion"));
  m.head_config = head_config;
  m.head_config.seed = derive_seed(seed, tag("head"));
  m.view_encoder = nn::init_encoder<T>(m.view_config);
  m.semantic = nn::init_encoder<T>(m.semantic_config);
  m.fusion = nn::init_fusion<T>(m.fusion_config, view_config.embedding_dim);
  m.head = nn::init_head<T>(m.head_config, view_config.embedding_dim);
  return m;
}

// Replaces the view encoder with pre-trained query weights. Structural
// fields must match; seeds may differ.
template <class T>
void attach_pretrained(FinetuneModel<T>& model, const PretrainState<T>& pretrained) {
  const nn::EncoderConfig& a = model.view_config;
  const nn::EncoderConfig& b = pretrained.encoder_config;
  if (a.input_height != b.input_height || a.input_width != b.input_width ||
      a.input_channels != b.input_channels || a.stage_widths != b.stage_widths ||
      a.embedding_dim != b.embedding_dim || a.kernel_size != b.kernel_size)
    throw ShapeError("attach_pretrained: encoder architecture mismatch");
  model.view_encoder = pretrained.query;
}

// Trainable parameters only; the semantic conv stages stay out.
template <class T>
nn::ParamRefs<T> trainable_refs(FinetuneModel<T>& m) {
  nn::ParamRefs<T> refs = nn::param_refs(m.view_encoder, "view");
  refs.emplace_back("semantic.proj.w", &m.semantic.proj_w);
  refs.emplace_back("semantic.proj.b", &m.semantic.proj_b);
  nn::append_refs(refs, nn::param_refs(m.fusion, "fusion"));
  nn::append_refs(refs, nn::param_refs(m.head, "head"));
  return refs;
}

// Per-sample inputs that never change across epochs: the six axis views and
// the frozen semantic backbone's pooled output for the stitched image.
template <class T>
struct SampleFeatures {
  std::vector<ProjectedImage> views;
  std::vector<T> semantic_pooled;
  double mos = 0.0;
  std::size_t row = 0;
};

inline std::vector<ProjectedImage> cached_six_views(RenderCache& cache, const PointCloud& cloud,
                                                    const RenderConfig& render) {
  std::vector<ProjectedImage> views;
  views.reserve(kNumViews);
  for (int v = 1; v <= kNumViews; ++v) {
    ProjectedImage img = cache.get(cloud, view_rotation(v), render);
    img.view_id = v;
    views.push_back(std::move(img));
  }
  return views;
}

// Frozen G backbone pooled features (pre-projection).
template <class T>
std::vector<T> semantic_pooled(const FinetuneModel<T>& model, const ProjectedImage& stitched) {
  nn::Tape<T> tape;
  const nn::EncoderVars vars = nn::load_encoder(tape, model.semantic, false);
  const nn::Var input = tape.push(nn::image_to_tensor<T>(stitched), false);
  const nn::Var pooled = nn::encode_backbone(tape, vars, input, model.semantic_config);
  return tape.value(pooled).data;
}

template <class T>
SampleFeatures<T> prepare_sample(const FinetuneModel<T>& model, RenderCache& cache,
                                 const PointCloud& cloud, const RenderConfig& render) {
  SampleFeatures<T> s;
  s.views = cached_six_views(cache, cloud, render);
  s.semantic_pooled = semantic_pooled(model, stitch_views(s.views));
  return s;
}

template <class T>
std::vector<SampleFeatures<T>> prepare_finetune_dataset(const DatasetManifest& manifest,
                                                        const std::vector<std::size_t>& rows,
                                                        CloudStore& clouds, RenderCache& cache,
                                                        const RenderConfig& render,
                                                        const FinetuneModel<T>& model) {
  if (render.height != model.view_config.input_height ||
      render.width != model.view_config.input_width)
    throw ConfigError("finetune: render size does not match the view encoder input");
  std::vector<SampleFeatures<T>> samples;
  samples.reserve(rows.size());
  for (const std::size_t row : rows) {
    const ManifestEntry& e = manifest.entries.at(row);
    if (!e.mos.has_value())
      throw DatasetError("finetune: manifest row for " + e.path + " has no mos");
    SampleFeatures<T> s = prepare_sample(model, cache, clouds.get(e.path), render);
    s.mos = *e.mos;
    s.row = row;
    samples.push_back(std::move(s));
  }
  return samples;
}

// Tape handles for one training step.
struct FinetuneVars {
  nn::EncoderVars view_encoder;
  nn::Var sem_proj_w, sem_proj_b;
  nn::FusionVars fusion;
  nn::HeadVars head;
};

template <class T>
FinetuneVars load_finetune_vars(nn::Tape<T>& tape, const FinetuneModel<T>& model,
                                bool trainable) {
  FinetuneVars v;
  v.view_encoder = nn::load_encoder(tape, model.view_encoder, trainable);
  v.sem_proj_w = tape.push(model.semantic.proj_w, trainable);
  v.sem_proj_b = tape.push(model.semantic.proj_b, trainable);
  v.fusion = nn::load_fusion(tape, model.fusion, trainable);
  v.head = nn::load_head(tape, model.head, trainable);
  return v;
}

inline std::vector<nn::Var> var_list(const FinetuneVars& v) {
  std::vector<nn::Var> out = nn::var_list(v.view_encoder);
  out.push_back(v.sem_proj_w);
  out.push_back(v.sem_proj_b);
  for (const nn::Var x : nn::var_list(v.fusion)) out.push_back(x);
  for (const nn::Var x : nn::var_list(v.head)) out.push_back(x);
  return out;
}

// Six view features + projected semantic query -> fused feature -> score.
template <class T>
nn::Var finetune_forward(nn::Tape<T>& tape, const FinetuneVars& vars,
                         const FinetuneModel<T>& model, const SampleFeatures<T>& sample) {
  if (sample.views.size() != kNumViews)
    throw ShapeError("finetune_forward: expected 6 views");
  std::vector<nn::Var> view_features;
  view_features.reserve(kNumViews);
  for (const ProjectedImage& img : sample.views)
    view_features.push_back(nn::encode_image(tape, vars.view_encoder, img, model.view_config));
  const nn::Var pooled = tape.constant(
      nn::Tensor<T>({static_cast<int>(sample.semantic_pooled.size())}, sample.semantic_pooled));
  const nn::Var g = nn::l2_normalize(
      tape, nn::linear(tape, vars.sem_proj_w, pooled, vars.sem_proj_b));
  const nn::Var fused = nn::fuse(tape, vars.fusion, g, view_features, model.fusion_config);
  return nn::regress_score(tape, vars.head, fused);
}

template <class T>
double predict_score(const FinetuneModel<T>& model, const SampleFeatures<T>& sample) {
  nn::Tape<T> tape;
  const FinetuneVars vars = load_finetune_vars(tape, model, false);
  const nn::Var score = finetune_forward(tape, vars, model, sample);
  return static_cast<double>(tape.value(score).data[0]);
}

template <class T>
double predict_score(const FinetuneModel<T>& model, RenderCache& cache, const PointCloud& cloud,
                     const RenderConfig& render) {
  return predict_score(model, prepare_sample(model, cache, cloud, render));
}

template <class T>
struct FinetuneState {
  FinetuneModel<T> model;
  nn::AdamOptimizer<T> optimizer;
  int epoch = 0;

  FinetuneState(FinetuneModel<T> m, const FinetuneConfig& cfg)
      : model(std::move(m)), optimizer(0.9, 0.999, 1e-8, cfg.weight_decay) {}
};

inline double finetune_lr(const FinetuneConfig& config, int epoch) {
  return config.learning_rate *
         std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_epochs));
}

struct FinetuneEpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  std::vector<double> step_loss;
  double mean_loss = 0.0;
  double mean_mse = 0.0;
  double mean_rank = 0.0;
};

// One pass over the prepared samples: shuffled batches, the combined
// MSE+rank loss, Adam on all trainable parameters. A trailing batch of one
// sample folds into the previous batch so the rank loss always sees at
// least a pair.
template <class T>
FinetuneEpochStats finetune_epoch(FinetuneState<T>& state,
                                  const std::vector<SampleFeatures<T>>& samples,
                                  const FinetuneConfig& config) {
  validate(config);
  if (samples.size() < 2)
    throw DatasetError("finetune: need at least 2 samples, got " +
                       std::to_string(samples.size()));

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(derive_seed(config.seed, tag("finetune-epoch"), state.epoch));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_below(rng, i)]);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(config.batch_size))
    batches.emplace_back(
        order.begin() + static_cast<std::ptrdiff_t>(pos),
        order.begin() +
            static_cast<std::ptrdiff_t>(std::min(pos + static_cast<std::size_t>(config.batch_size),
                                                 order.size())));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }

  FinetuneEpochStats stats;
  stats.epoch = state.epoch;
  stats.learning_rate = finetune_lr(config, state.epoch);

  auto refs = trainable_refs(state.model);
  double mse_sum = 0.0, rank_sum = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    nn::Tape<T> tape;
    const FinetuneVars vars = load_finetune_vars(tape, state.model, true);
    std::vector<nn::Var> predicted;
    std::vector<T> targets;
    for (const std::size_t idx : batches[b]) {
      predicted.push_back(finetune_forward(tape, vars, state.model, samples[idx]));
      targets.push_back(static_cast<T>(samples[idx].mos));
    }
    const nn::Var mse = mse_loss(tape, predicted, targets);
    const nn::Var rank = rank_loss(tape, predicted, targets);
    const nn::Var loss = finetune_loss(tape, mse, rank, static_cast<T>(config.alpha));
    const double loss_value = static_cast<double>(tape.value(loss).data[0]);
    if (!std::isfinite(loss_value))
      throw NumericError("finetune: non-finite loss at epoch " + std::to_string(state.epoch) +
                         " batch " + std::to_string(b));
    tape.backward(loss);
    std::vector<nn::Tensor<T>> grads;
    for (const nn::Var v : var_list(vars)) grads.push_back(tape.grad(v));
    state.optimizer.step(refs, grads, stats.learning_rate);

    stats.step_loss.push_back(loss_value);
    mse_sum += static_cast<double>(tape.value(mse).data[0]);
    rank_sum += static_cast<double>(tape.value(rank).data[0]);
  }

  const double nb = static_cast<double>(batches.size());
  for (const double l : stats.step_loss) stats.mean_loss += l;
  stats.mean_loss /= nb;
  stats.mean_mse = mse_sum / nb;
  stats.mean_rank = rank_sum / nb;
  ++state.epoch;
  return stats;
}

inline nlohmann::json fusion_config_json(const nn::FusionConfig& c) {
  return {{"num_heads", c.num_heads},
          {"attention_scale_dim", c.attention_scale_dim},
          {"scale_by_head_dim", c.scale_by_head_dim},
          {"seed", c.seed}};
}

inline nn::FusionConfig fusion_config_from_json(const nlohmann::json& j) {
  nn::FusionConfig c;
  c.num_heads = j.at("num_heads").get<int>();
  c.attention_scale_dim = j.at("attention_scale_dim").get<double>();
  c.scale_by_head_dim = j.at("scale_by_head_dim").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json finetune_config_json(const FinetuneConfig& c) {
  return {{"alpha", c.alpha},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"lr_decay_epochs", c.lr_decay_epochs},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed}};
}

inline FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
  FinetuneConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.lr_decay_epochs = j.at("lr_decay_epochs").get<int>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <class T>
void save_finetune_checkpoint(FinetuneModel<T>& model, const FinetuneConfig& config,
                              const std::string& path) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "finetune";
  ckpt.metadata["view_config"] = encoder_config_json(model.view_config);
  ckpt.metadata["semantic_config"] = encoder_config_json(model.semantic_config);
  ckpt.metadata["fusion_config"] = fusion_config_json(model.fusion_config);
  ckpt.metadata["head_hidden_dim"] = model.head_config.hidden_dim;
  ckpt.metadata["head_seed"] = model.head_config.seed;
  ckpt.metadata["finetune_config"] = finetune_config_json(config);
  checkpoint_add_params(ckpt, nn::param_refs(model.view_encoder, "view"));
  checkpoint_add_params(ckpt, nn::param_refs(model.semantic, "semantic"));
  checkpoint_add_params(ckpt, nn::param_refs(model.fusion, "fusion"));
  checkpoint_add_params(ckpt, nn::param_refs(model.head, "head"));
  ckpt.save(path);
}

template <class T>
struct LoadedFinetune {
  FinetuneModel<T> model;
  FinetuneConfig config;
};

template <class T>
LoadedFinetune<T> load_finetune_checkpoint(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  if (ckpt.metadata.value("kind", "") != "finetune")
    throw FormatError(path + ": not a finetune checkpoint");
  FinetuneModel<T> m;
  m.view_config = encoder_config_from_json(ckpt.metadata.at("view_config"));
  m.semantic_config = encoder_config_from_json(ckpt.metadata.at("semantic_config"));
  m.fusion_config = fusion_config_from_json(ckpt.metadata.at("fusion_config"));
  m.head_config.hidden_dim = ckpt.metadata.at("head_hidden_dim").get<int>();
  m.head_config.seed = ckpt.metadata.at("head_seed").get<std::uint64_t>();
  m.view_encoder = nn::init_encoder<T>(m.view_config);
  m.semantic = nn::init_encoder<T>(m.semantic_config);
  m.fusion = nn::init_fusion<T>(m.fusion_config, m.view_config.embedding_dim);
  m.head = nn::init_head<T>(m.head_config, m.view_config.embedding_dim);
  checkpoint_read_params(ckpt, nn::param_refs(m.view_encoder, "view"));
  checkpoint_read_params(ckpt, nn::param_refs(m.semantic, "semantic"));
  checkpoint_read_params(ckpt, nn::param_refs(m.fusion, "fusion"));
  checkpoint_read_params(ckpt, nn::param_refs(m.head, "head"));
  const FinetuneConfig cfg = finetune_config_from_json(ckpt.metadata.at("finetune_config"));
  return {std::move(m), cfg};
}

}  // namespace copa
