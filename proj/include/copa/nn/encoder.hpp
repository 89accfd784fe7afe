#pragma once

// Quality-aware and semantic encoders: a small strided conv stack with
// global average pooling and a linear projection head, L2-normalized
// output. Large pretrained attention backbones are deliberately out of
// scope; the stack is configurable enough for desk-scale experiments.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/ops.hpp"
#include "copa/nn/tape.hpp"
#include "copa/nn/tensor.hpp"
#include "copa/render.hpp"
#include "copa/rng.hpp"

namespace copa::nn {

struct EncoderConfig {
  int input_height = 64;
  int input_width = 64;
  int input_channels = 3;
  std::vector<int> stage_widths = {16, 32, 64};  // one stride-2 conv per stage
  int embedding_dim = 128;
  int kernel_size = 3;
  std::uint64_t seed = 0;

  bool operator==(const EncoderConfig&) const = default;
};

inline void validate(const EncoderConfig& config) {
  if (config.embedding_dim <= 0) throw ConfigError("encoder: embedding_dim must be positive");
  if (config.stage_widths.empty()) throw ConfigError("encoder: need at least one stage");
  for (const int w : config.stage_widths)
    if (w <= 0) throw ConfigError("encoder: stage widths must be positive");
  if (config.kernel_size % 2 != 1 || config.kernel_size <= 0)
    throw ConfigError("encoder: kernel size must be odd and positive");
  int factor = 1;
  for (std::size_t i = 0; i < config.stage_widths.size(); ++i) factor *= 2;
  if (config.input_height <= 0 || config.input_width <= 0 ||
      config.input_height % factor != 0 || config.input_width % factor != 0)
    throw ConfigError("encoder: input " + std::to_string(config.input_height) + "x" +
                      std::to_string(config.input_width) + " not divisible by downsampling " +
                      std::to_string(factor));
}

template <class T>
struct EncoderParams {
  std::vector<Tensor<T>> conv_w;  // [oc, ic, k, k] per stage
  std::vector<Tensor<T>> conv_b;
  Tensor<T> proj_w;  // [embedding_dim, last_width]
  Tensor<T> proj_b;  // [embedding_dim]
};

// Named references to every tensor, used by the optimizer, the momentum
// update and the checkpoint writer. Order is fixed.
template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> param_refs(EncoderParams<T>& p,
                                                           const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor<T>*>> refs;
  for (std::size_t i = 0; i < p.conv_w.size(); ++i) {
    refs.emplace_back(prefix + ".conv" + std::to_string(i) + ".w", &p.conv_w[i]);
    refs.emplace_back(prefix + ".conv" + std::to_string(i) + ".b", &p.conv_b[i]);
  }
  refs.emplace_back(prefix + ".proj.w", &p.proj_w);
  refs.emplace_back(prefix + ".proj.b", &p.proj_b);
  return refs;
}

// He-style init for the conv stages, smaller fan-in scaling for the head.
// Fully determined by (config, seed).
template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& config) {
  validate(config);
  EncoderParams<T> p;
  int in_ch = config.input_channels;
  const int k = config.kernel_size;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const int out_ch = config.stage_widths[s];
    Tensor<T> w({out_ch, in_ch, k, k});
    Rng rng = make_rng(derive_seed(config.seed, tag("conv"), s));
    const double std_dev = std::sqrt(2.0 / (in_ch * k * k));
    for (auto& v : w.data) v = static_cast<T>(std_dev * normal01(rng));
    p.conv_w.push_back(std::move(w));
    p.conv_b.emplace_back(std::vector<int>{out_ch});
    in_ch = out_ch;
  }
  p.proj_w = Tensor<T>({config.embedding_dim, in_ch});
  Rng rng = make_rng(derive_seed(config.seed, tag("proj")));
  const double std_dev = std::sqrt(1.0 / in_ch);
  for (auto& v : p.proj_w.data) v = static_cast<T>(std_dev * normal01(rng));
  p.proj_b = Tensor<T>({config.embedding_dim});
  return p;
}

// Tape handles for one encoder's parameters.
struct EncoderVars {
  std::vector<Var> conv_w;
  std::vector<Var> conv_b;
  Var proj_w;
  Var proj_b;
};

template <class T>
EncoderVars load_encoder(Tape<T>& tape, const EncoderParams<T>& p, bool trainable) {
  EncoderVars vars;
  for (std::size_t i = 0; i < p.conv_w.size(); ++i) {
    vars.conv_w.push_back(tape.push(p.conv_w[i], trainable));
    vars.conv_b.push_back(tape.push(p.conv_b[i], trainable));
  }
  vars.proj_w = tape.push(p.proj_w, trainable);
  vars.proj_b = tape.push(p.proj_b, trainable);
  return vars;
}

// Vars in the same order as param_refs.
inline std::vector<Var> var_list(const EncoderVars& v) {
  std::vector<Var> out;
  for (std::size_t i = 0; i < v.conv_w.size(); ++i) {
    out.push_back(v.conv_w[i]);
    out.push_back(v.conv_b[i]);
  }
  out.push_back(v.proj_w);
  out.push_back(v.proj_b);
  return out;
}

// Images arrive in [0,1] over a white background. Shifting the background to
// zero keeps the average-pooled features foreground-driven; without it the
// constant background swamps the pooled signal and the contrastive logits
// collapse to near-uniform.
template <class T>
Tensor<T> image_to_tensor(const ProjectedImage& img) {
  Tensor<T> t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t[static_cast<std::size_t>((c * img.height + y) * img.width + x)] =
            static_cast<T>(img.at(y, x, c) - 1.0);
  return t;
}

// Conv stack up to the pooled representation [last_width].
template <class T>
Var encode_backbone(Tape<T>& tape, const EncoderVars& vars, Var input,
                    const EncoderConfig& config) {
  const auto& shape = tape.value(input).shape;
  if (shape != std::vector<int>{config.input_channels, config.input_height, config.input_width})
    throw ShapeError("encode: image does not match encoder input size");
  Var x = input;
  const int pad = config.kernel_size / 2;
  for (std::size_t s = 0; s < vars.conv_w.size(); ++s) {
    x = conv2d(tape, x, vars.conv_w[s], vars.conv_b[s], 2, pad);
    x = relu(tape, x);
  }
  return global_avg_pool(tape, x);
}

// Full quality encoder: backbone -> linear head -> L2 normalization.
template <class T>
Var encode_feature(Tape<T>& tape, const EncoderVars& vars, Var input,
                   const EncoderConfig& config) {
  const Var pooled = encode_backbone(tape, vars, input, config);
  const Var projected = linear(tape, vars.proj_w, pooled, vars.proj_b);
  return l2_normalize(tape, projected);
}

template <class T>
Var encode_image(Tape<T>& tape, const EncoderVars& vars, const ProjectedImage& img,
                 const EncoderConfig& config, bool input_requires_grad = false) {
  const Var input = tape.push(image_to_tensor<T>(img), input_requires_grad);
  return encode_feature(tape, vars, input, config);
}

// No-grad convenience: runs the encoder on a scratch tape and returns the
// normalized embedding values. Used for the momentum (key) encoder and for
// inference.
template <class T>
Tensor<T> encode_image_nograd(const EncoderParams<T>& params, const ProjectedImage& img,
                              const EncoderConfig& config) {
  Tape<T> tape;
  const EncoderVars vars = load_encoder(tape, params, false);
  const Var f = encode_image(tape, vars, img, config);
  return tape.value(f);
}

// Plain (non-tape) L2 normalization used wherever features live outside a
// tape. Errors on the zero vector rather than emitting NaN.
template <class T>
std::vector<T> l2_normalize(const std::vector<T>& v) {
  T n2 = 0;
  for (const T x : v) n2 += x * x;
  const T n = std::sqrt(n2);
  if (!(n > T(1e-12))) throw NumericError("l2_normalize: zero vector");
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

template <class T>
bool is_normalized(const std::vector<T>& v, T tol = T(1e-6)) {
  T n2 = 0;
  for (const T x : v) n2 += x * x;
  return std::abs(std::sqrt(n2) - T(1)) <= tol;
}

}  // namespace copa::nn
