#pragma once

// Semantic-guided multi-view fusion: multi-head cross-attention where the
// stitched-image semantic feature queries the six per-view quality
// features, plus the two-layer regression head.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/ops.hpp"
#include "copa/nn/tape.hpp"
#include "copa/rng.hpp"

namespace copa::nn {

struct FusionConfig {
  int num_heads = 8;
  // Scaling dimension d_f inside softmax(QK^T/sqrt(d_f)). 0 means "use the
  // embedding dim", i.e. full-channel scaling at any model size.
  // scale_by_head_dim switches to the per-head dimension instead.
  double attention_scale_dim = 0.0;
  bool scale_by_head_dim = false;
  std::uint64_t seed = 0;

  bool operator==(const FusionConfig&) const = default;
};

inline void validate(const FusionConfig& config, int embedding_dim) {
  if (config.num_heads <= 0) throw ConfigError("fusion: num_heads must be positive");
  if (embedding_dim % config.num_heads != 0)
    throw ConfigError("fusion: embedding_dim " + std::to_string(embedding_dim) +
                      " not divisible by num_heads " + std::to_string(config.num_heads));
  if (config.attention_scale_dim < 0.0)
    throw ConfigError("fusion: attention_scale_dim must be >= 0");
}

inline double attention_scale(const FusionConfig& config, int embedding_dim) {
  if (config.scale_by_head_dim) return static_cast<double>(embedding_dim / config.num_heads);
  if (config.attention_scale_dim > 0.0) return config.attention_scale_dim;
  return static_cast<double>(embedding_dim);
}

template <class T>
struct FusionParams {
  Tensor<T> w_q, w_k, w_v;  // [E,E]; head slices are contiguous output ranges
  Tensor<T> w_out;          // [E,E]
};

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> param_refs(FusionParams<T>& p,
                                                           const std::string& prefix) {
  return {{prefix + ".w_q", &p.w_q},
          {prefix + ".w_k", &p.w_k},
          {prefix + ".w_v", &p.w_v},
          {prefix + ".w_out", &p.w_out}};
}

template <class T>
FusionParams<T> init_fusion(const FusionConfig& config, int embedding_dim) {
  validate(config, embedding_dim);
  FusionParams<T> p;
  const double std_dev = std::sqrt(1.0 / embedding_dim);
  int which = 0;
  for (Tensor<T>* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_out}) {
    *t = Tensor<T>({embedding_dim, embedding_dim});
    Rng rng = make_rng(derive_seed(config.seed, tag("fusion"), which++));
    for (auto& v : t->data) v = static_cast<T>(std_dev * normal01(rng));
  }
  return p;
}

struct FusionVars {
  Var w_q, w_k, w_v, w_out;
};

template <class T>
FusionVars load_fusion(Tape<T>& tape, const FusionParams<T>& p, bool trainable) {
  return {tape.push(p.w_q, trainable), tape.push(p.w_k, trainable),
          tape.push(p.w_v, trainable), tape.push(p.w_out, trainable)};
}

inline std::vector<Var> var_list(const FusionVars& v) {
  return {v.w_q, v.w_k, v.w_v, v.w_out};
}

// M(Q,K,V): per head, softmax(q_h k_h^T / sqrt(d_f)) v_h; heads
// concatenated and mapped by w_out. Queries/keys/values are [E] vectors.
template <class T>
std::vector<Var> multi_head_cross_attention(Tape<T>& tape, const FusionVars& vars,
                                            const std::vector<Var>& queries,
                                            const std::vector<Var>& keys,
                                            const std::vector<Var>& values,
                                            const FusionConfig& config) {
  if (keys.size() != values.size())
    throw ShapeError("cross_attention: key/value counts differ");
  if (keys.empty()) throw ShapeError("cross_attention: empty key set");
  if (queries.empty()) throw ShapeError("cross_attention: empty query set");
  const int embed = tape.value(queries[0]).shape.at(0);
  validate(config, embed);
  const int heads = config.num_heads;
  const int head_dim = embed / heads;
  const T inv_sqrt_df = static_cast<T>(1.0 / std::sqrt(attention_scale(config, embed)));

  // Project keys/values once; slice per head.
  std::vector<std::vector<Var>> k_heads(static_cast<std::size_t>(heads));
  std::vector<std::vector<Var>> v_heads(static_cast<std::size_t>(heads));
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const Var kp = linear(tape, vars.w_k, keys[j]);
    const Var vp = linear(tape, vars.w_v, values[j]);
    for (int h = 0; h < heads; ++h) {
      k_heads[static_cast<std::size_t>(h)].push_back(slice(tape, kp, h * head_dim, head_dim));
      v_heads[static_cast<std::size_t>(h)].push_back(slice(tape, vp, h * head_dim, head_dim));
    }
  }

  std::vector<Var> outputs;
  outputs.reserve(queries.size());
  for (const Var q : queries) {
    const Var qp = linear(tape, vars.w_q, q);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const Var qh = slice(tape, qp, h * head_dim, head_dim);
      std::vector<Var> scores;
      scores.reserve(keys.size());
      for (const Var kh : k_heads[static_cast<std::size_t>(h)])
        scores.push_back(scale(tape, dot(tape, qh, kh), inv_sqrt_df));
      const Var weights = softmax(tape, stack_scalars(tape, scores));
      head_outs.push_back(weighted_sum(tape, weights, v_heads[static_cast<std::size_t>(h)]));
    }
    outputs.push_back(linear(tape, vars.w_out, concat(tape, head_outs)));
  }
  return outputs;
}

inline constexpr int kFusionViewCount = 6;

// F = M(g, {f_i}, {f_i}) with the semantic feature as the single query.
template <class T>
Var fuse(Tape<T>& tape, const FusionVars& vars, Var semantic,
         const std::vector<Var>& view_features, const FusionConfig& config) {
  if (view_features.size() != kFusionViewCount)
    throw ShapeError("fuse: expected " + std::to_string(kFusionViewCount) + " view features, got " +
                     std::to_string(view_features.size()));
  return multi_head_cross_attention(tape, vars, {semantic}, view_features, view_features,
                                    config)[0];
}

struct HeadConfig {
  int hidden_dim = 512;
  std::uint64_t seed = 0;

  bool operator==(const HeadConfig&) const = default;
};

// Two-layer fully-connected regression head with a ReLU between.
template <class T>
struct HeadParams {
  Tensor<T> w1, b1;  // [hidden,E], [hidden]
  Tensor<T> w2, b2;  // [1,hidden], [1]
};

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> param_refs(HeadParams<T>& p,
                                                           const std::string& prefix) {
  return {{prefix + ".w1", &p.w1},
          {prefix + ".b1", &p.b1},
          {prefix + ".w2", &p.w2},
          {prefix + ".b2", &p.b2}};
}

template <class T>
HeadParams<T> init_head(const HeadConfig& config, int embedding_dim) {
  if (config.hidden_dim <= 0) throw ConfigError("head: hidden_dim must be positive");
  HeadParams<T> p;
  p.w1 = Tensor<T>({config.hidden_dim, embedding_dim});
  p.b1 = Tensor<T>({config.hidden_dim});
  p.w2 = Tensor<T>({1, config.hidden_dim});
  p.b2 = Tensor<T>({1});
  Rng rng1 = make_rng(derive_seed(config.seed, tag("head"), 1));
  const double s1 = std::sqrt(2.0 / embedding_dim);
  for (auto& v : p.w1.data) v = static_cast<T>(s1 * normal01(rng1));
  Rng rng2 = make_rng(derive_seed(config.seed, tag("head"), 2));
  const double s2 = std::sqrt(1.0 / config.hidden_dim);
  for (auto& v : p.w2.data) v = static_cast<T>(s2 * normal01(rng2));
  return p;
}

struct HeadVars {
  Var w1, b1, w2, b2;
};

template <class T>
HeadVars load_head(Tape<T>& tape, const HeadParams<T>& p, bool trainable) {
  return {tape.push(p.w1, trainable), tape.push(p.b1, trainable), tape.push(p.w2, trainable),
          tape.push(p.b2, trainable)};
}

inline std::vector<Var> var_list(const HeadVars& v) { return {v.w1, v.b1, v.w2, v.b2}; }

// Scalar quality score.
template <class T>
Var regress_score(Tape<T>& tape, const HeadVars& head, Var fused) {
  const Var h = relu(tape, linear(tape, head.w1, fused, head.b1));
  return linear(tape, head.w2, h, head.b2);
}

}  // namespace copa::nn
