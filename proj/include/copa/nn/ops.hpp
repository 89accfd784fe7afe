#pragma once

// Differentiable primitives. Shapes are validated on the forward pass;
// every backward scatters into parents through Tape::maybe_grad so constant
// inputs cost nothing.

#include <cmath>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/tape.hpp"
#include "copa/nn/tensor.hpp"

namespace copa::nn {

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!va.same_shape(vb)) throw ShapeError("add: shape mismatch");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  Var out_v;
  out_v = tape.push(std::move(out), rg, [a, b, out_v_id = tape.size()](Tape<T>& t) mutable {
    const Var out_var{static_cast<int>(out_v_id)};
    const auto& g = t.grad(out_var);
    if (auto* ga = t.maybe_grad(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i];
    if (auto* gb = t.maybe_grad(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i] += g[i];
  });
  return out_v;
}

template <class T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!va.same_shape(vb)) throw ShapeError("sub: shape mismatch");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  Var out_v;
  out_v = tape.push(std::move(out), rg, [a, b, out_v_id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(out_v_id)});
    if (auto* ga = t.maybe_grad(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i];
    if (auto* gb = t.maybe_grad(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i] -= g[i];
  });
  return out_v;
}

template <class T>
Var scale(Tape<T>& tape, Var a, T c) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v *= c;
  Var out_v = tape.push(std::move(out), tape.requires_grad(a),
                        [a, c, id = tape.size()](Tape<T>& t) {
                          const auto& g = t.grad(Var{static_cast<int>(id)});
                          if (auto* ga = t.maybe_grad(a))
                            for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += c * g[i];
                        });
  return out_v;
}

template <class T>
Var add_const(Tape<T>& tape, Var a, T c) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v += c;
  return tape.push(std::move(out), tape.requires_grad(a), [a, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    if (auto* ga = t.maybe_grad(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i];
  });
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!va.same_shape(vb)) throw ShapeError("mul: shape mismatch");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(out), rg, [a, b, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    const auto& va2 = t.value(a);
    const auto& vb2 = t.value(b);
    if (auto* ga = t.maybe_grad(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g[i] * vb2[i];
    if (auto* gb = t.maybe_grad(b))
      for (std::size_t i = 0; i < g.size(); ++i) gb->data[i] += g[i] * va2[i];
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return tape.push(std::move(out), tape.requires_grad(x), [x, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    const auto& vx = t.value(x);
    if (auto* gx = t.maybe_grad(x))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (vx[i] > T(0)) gx->data[i] += g[i];
  });
}

// y = W x + b with W [out,in], x [in], b [out] (b may be invalid for none).
template <class T>
Var linear(Tape<T>& tape, Var w, Var x, Var b = {}) {
  const auto& vw = tape.value(w);
  const auto& vx = tape.value(x);
  if (vw.shape.size() != 2 || vx.shape.size() != 1 || vw.shape[1] != vx.shape[0])
    throw ShapeError("linear: W must be [out,in] and x [in]");
  const int out_dim = vw.shape[0];
  const int in_dim = vw.shape[1];
  Tensor<T> out({out_dim});
  for (int o = 0; o < out_dim; ++o) {
    T s = 0;
    const T* row = vw.data.data() + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) s += row[i] * vx[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = s;
  }
  bool rg = tape.requires_grad(w) || tape.requires_grad(x);
  if (b.valid()) {
    const auto& vb = tape.value(b);
    if (vb.shape != std::vector<int>{out_dim}) throw ShapeError("linear: bias shape mismatch");
    for (int o = 0; o < out_dim; ++o) out[static_cast<std::size_t>(o)] += vb[static_cast<std::size_t>(o)];
    rg = rg || tape.requires_grad(b);
  }
  return tape.push(std::move(out), rg, [w, x, b, out_dim, in_dim, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    const auto& vw2 = t.value(w);
    const auto& vx2 = t.value(x);
    if (auto* gw = t.maybe_grad(w))
      for (int o = 0; o < out_dim; ++o) {
        const T go = g[static_cast<std::size_t>(o)];
        T* row = gw->data.data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) row[i] += go * vx2[static_cast<std::size_t>(i)];
      }
    if (auto* gx = t.maybe_grad(x))
      for (int o = 0; o < out_dim; ++o) {
        const T go = g[static_cast<std::size_t>(o)];
        const T* row = vw2.data.data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) gx->data[static_cast<std::size_t>(i)] += go * row[i];
      }
    if (b.valid())
      if (auto* gb = t.maybe_grad(b))
        for (int o = 0; o < out_dim; ++o) gb->data[static_cast<std::size_t>(o)] += g[static_cast<std::size_t>(o)];
  });
}

// conv2d: x [C,H,W], w [OC,C,K,K], b [OC], zero padding `pad`, stride `stride`.
template <class T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, int stride, int pad) {
  const auto& vx = tape.value(x);
  const auto& vw = tape.value(w);
  const auto& vb = tape.value(b);
  if (vx.shape.size() != 3 || vw.shape.size() != 4) throw ShapeError("conv2d: bad ranks");
  const int C = vx.shape[0], H = vx.shape[1], W = vx.shape[2];
  const int OC = vw.shape[0], K = vw.shape[2];
  if (vw.shape[1] != C || vw.shape[3] != K) throw ShapeError("conv2d: weight shape mismatch");
  if (vb.shape != std::vector<int>{OC}) throw ShapeError("conv2d: bias shape mismatch");
  if (stride <= 0) throw ConfigError("conv2d: stride must be positive");
  const int Ho = (H + 2 * pad - K) / stride + 1;
  const int Wo = (W + 2 * pad - K) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

  Tensor<T> out({OC, Ho, Wo});
  for (int oc = 0; oc < OC; ++oc) {
    const T bias = vb[static_cast<std::size_t>(oc)];
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        T s = bias;
        for (int ic = 0; ic < C; ++ic) {
          const T* xin = vx.data.data() + static_cast<std::size_t>(ic) * H * W;
          const T* ker = vw.data.data() +
                         (static_cast<std::size_t>(oc) * C + ic) * K * K;
          for (int ky = 0; ky < K; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < K; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= W) continue;
              s += ker[ky * K + kx] * xin[iy * W + ix];
            }
          }
        }
        out[static_cast<std::size_t>((oc * Ho + oy) * Wo + ox)] = s;
      }
    }
  }
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
  return tape.push(std::move(out), rg,
                   [x, w, b, stride, pad, C, H, W, OC, K, Ho, Wo, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    const auto& vx2 = t.value(x);
    const auto& vw2 = t.value(w);
    auto* gx = t.maybe_grad(x);
    auto* gw = t.maybe_grad(w);
    auto* gb = t.maybe_grad(b);
    for (int oc = 0; oc < OC; ++oc) {
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
          const T go = g[static_cast<std::size_t>((oc * Ho + oy) * Wo + ox)];
          if (go == T(0)) continue;
          if (gb) gb->data[static_cast<std::size_t>(oc)] += go;
          for (int ic = 0; ic < C; ++ic) {
            const T* xin = vx2.data.data() + static_cast<std::size_t>(ic) * H * W;
            const T* ker = vw2.data.data() + (static_cast<std::size_t>(oc) * C + ic) * K * K;
            T* xgr = gx ? gx->data.data() + static_cast<std::size_t>(ic) * H * W : nullptr;
            T* kgr = gw ? gw->data.data() + (static_cast<std::size_t>(oc) * C + ic) * K * K
                        : nullptr;
            for (int ky = 0; ky < K; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < K; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                if (kgr) kgr[ky * K + kx] += go * xin[iy * W + ix];
                if (xgr) xgr[iy * W + ix] += go * ker[ky * K + kx];
              }
            }
          }
        }
      }
    }
  });
}

// Mean over the spatial dims of [C,H,W] -> [C].
template <class T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.shape.size() != 3) throw ShapeError("global_avg_pool: expected [C,H,W]");
  const int C = vx.shape[0], H = vx.shape[1], W = vx.shape[2];
  const T inv = T(1) / static_cast<T>(H * W);
  Tensor<T> out({C});
  for (int c = 0; c < C; ++c) {
    T s = 0;
    const T* plane = vx.data.data() + static_cast<std::size_t>(c) * H * W;
    for (int i = 0; i < H * W; ++i) s += plane[i];
    out[static_cast<std::size_t>(c)] = s * inv;
  }
  return tape.push(std::move(out), tape.requires_grad(x),
                   [x, C, H, W, inv, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    if (auto* gx = t.maybe_grad(x))
      for (int c = 0; c < C; ++c) {
        const T gc = g[static_cast<std::size_t>(c)] * inv;
        T* plane = gx->data.data() + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < H * W; ++i) plane[i] += gc;
      }
  });
}

// y = x / ||x||_2. Throws instead of emitting NaN on (near-)zero input.
template <class T>
Var l2_normalize(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  T n2 = 0;
  for (const T v : vx.data) n2 += v * v;
  const T n = std::sqrt(n2);
  if (!(n > T(1e-12))) throw NumericError("l2_normalize: zero vector");
  Tensor<T> out = vx;
  const T inv = T(1) / n;
  for (auto& v : out.data) v *= inv;
  return tape.push(std::move(out), tape.requires_grad(x), [x, inv, id = tape.size()](Tape<T>& t) {
    const Var out_var{static_cast<int>(id)};
    const auto& g = t.grad(out_var);
    const auto& y = t.value(out_var);
    if (auto* gx = t.maybe_grad(x)) {
      T gy = 0;
      for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i)
        gx->data[i] += inv * (g[i] - y[i] * gy);
    }
  });
}

template <class T>
Var dot(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  if (!va.same_shape(vb)) throw ShapeError("dot: shape mismatch");
  T s = 0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(scalar_tensor(s), rg, [a, b, id = tape.size()](Tape<T>& t) {
    const T g = t.grad(Var{static_cast<int>(id)})[0];
    const auto& va2 = t.value(a);
    const auto& vb2 = t.value(b);
    if (auto* ga = t.maybe_grad(a))
      for (std::size_t i = 0; i < va2.size(); ++i) ga->data[i] += g * vb2[i];
    if (auto* gb = t.maybe_grad(b))
      for (std::size_t i = 0; i < vb2.size(); ++i) gb->data[i] += g * va2[i];
  });
}

// Packs n scalar vars into one [n] vector.
template <class T>
Var stack_scalars(Tape<T>& tape, const std::vector<Var>& scalars) {
  if (scalars.empty()) throw UsageError("stack_scalars: empty input");
  Tensor<T> out({static_cast<int>(scalars.size())});
  bool rg = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const auto& v = tape.value(scalars[i]);
    if (v.size() != 1) throw ShapeError("stack_scalars: inputs must be scalars");
    out[i] = v[0];
    rg = rg || tape.requires_grad(scalars[i]);
  }
  return tape.push(std::move(out), rg, [scalars, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    for (std::size_t i = 0; i < scalars.size(); ++i)
      if (auto* gi = t.maybe_grad(scalars[i])) gi->data[0] += g[i];
  });
}

template <class T>
Var slice(Tape<T>& tape, Var x, int start, int len) {
  const auto& vx = tape.value(x);
  if (vx.shape.size() != 1 || start < 0 || len <= 0 || start + len > vx.shape[0])
    throw ShapeError("slice: range outside vector");
  Tensor<T> out({len});
  for (int i = 0; i < len; ++i) out[static_cast<std::size_t>(i)] = vx[static_cast<std::size_t>(start + i)];
  return tape.push(std::move(out), tape.requires_grad(x),
                   [x, start, len, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    if (auto* gx = t.maybe_grad(x))
      for (int i = 0; i < len; ++i) gx->data[static_cast<std::size_t>(start + i)] += g[static_cast<std::size_t>(i)];
  });
}

template <class T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat: empty input");
  int total = 0;
  bool rg = false;
  for (const Var p : parts) {
    const auto& v = tape.value(p);
    if (v.shape.size() != 1) throw ShapeError("concat: vector inputs only");
    total += v.shape[0];
    rg = rg || tape.requires_grad(p);
  }
  Tensor<T> out({total});
  int off = 0;
  for (const Var p : parts) {
    const auto& v = tape.value(p);
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(off) + i] = v[i];
    off += v.shape[0];
  }
  return tape.push(std::move(out), rg, [parts, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    std::size_t off2 = 0;
    for (const Var p : parts) {
      const std::size_t n = t.value(p).size();
      if (auto* gp = t.maybe_grad(p))
        for (std::size_t i = 0; i < n; ++i) gp->data[i] += g[off2 + i];
      off2 += n;
    }
  });
}

template <class T>
Var softmax(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.shape.size() != 1) throw ShapeError("softmax: vector input expected");
  T mx = vx[0];
  for (const T v : vx.data) mx = std::max(mx, v);
  Tensor<T> out = vx;
  T sum = 0;
  for (auto& v : out.data) {
    v = std::exp(v - mx);
    sum += v;
  }
  const T inv = T(1) / sum;
  for (auto& v : out.data) v *= inv;
  return tape.push(std::move(out), tape.requires_grad(x), [x, id = tape.size()](Tape<T>& t) {
    const Var out_var{static_cast<int>(id)};
    const auto& g = t.grad(out_var);
    const auto& y = t.value(out_var);
    if (auto* gx = t.maybe_grad(x)) {
      T gy = 0;
      for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) gx->data[i] += y[i] * (g[i] - gy);
    }
  });
}

// log(sum_i exp(x_i)) with max-shift stabilization.
template <class T>
Var logsumexp(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.shape.size() != 1 || vx.shape[0] < 1) throw ShapeError("logsumexp: vector input expected");
  T mx = vx[0];
  for (const T v : vx.data) mx = std::max(mx, v);
  T sum = 0;
  for (const T v : vx.data) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  return tape.push(scalar_tensor(lse), tape.requires_grad(x),
                   [x, mx, sum, id = tape.size()](Tape<T>& t) {
    const T g = t.grad(Var{static_cast<int>(id)})[0];
    const auto& vx2 = t.value(x);
    if (auto* gx = t.maybe_grad(x))
      for (std::size_t i = 0; i < vx2.size(); ++i)
        gx->data[i] += g * std::exp(vx2[i] - mx) / sum;
  });
}

// y = sum_j w_j * v_j for a weight vector [n] and n value vectors [d].
template <class T>
Var weighted_sum(Tape<T>& tape, Var weights, const std::vector<Var>& values) {
  const auto& vw = tape.value(weights);
  if (vw.shape.size() != 1 || static_cast<std::size_t>(vw.shape[0]) != values.size())
    throw ShapeError("weighted_sum: weight count must match value count");
  if (values.empty()) throw UsageError("weighted_sum: empty values");
  const auto& v0 = tape.value(values[0]);
  Tensor<T> out(v0.shape);
  bool rg = tape.requires_grad(weights);
  for (std::size_t j = 0; j < values.size(); ++j) {
    const auto& vj = tape.value(values[j]);
    if (!vj.same_shape(v0)) throw ShapeError("weighted_sum: value shapes differ");
    const T wj = vw[j];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wj * vj[i];
    rg = rg || tape.requires_grad(values[j]);
  }
  return tape.push(std::move(out), rg, [weights, values, id = tape.size()](Tape<T>& t) {
    const auto& g = t.grad(Var{static_cast<int>(id)});
    const auto& vw2 = t.value(weights);
    auto* gw = t.maybe_grad(weights);
    for (std::size_t j = 0; j < values.size(); ++j) {
      const auto& vj = t.value(values[j]);
      if (gw) {
        T s = 0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * vj[i];
        gw->data[j] += s;
      }
      if (auto* gv = t.maybe_grad(values[j]))
        for (std::size_t i = 0; i < g.size(); ++i) gv->data[i] += vw2[j] * g[i];
    }
  });
}

// max(0, x) elementwise; subgradient 0 at the kink.
template <class T>
Var hinge(Tape<T>& tape, Var x) {
  return relu(tape, x);
}

template <class T>
Var sum_scalars(Tape<T>& tape, const std::vector<Var>& scalars) {
  if (scalars.empty()) throw UsageError("sum_scalars: empty input");
  T s = 0;
  bool rg = false;
  for (const Var v : scalars) {
    const auto& t = tape.value(v);
    if (t.size() != 1) throw ShapeError("sum_scalars: inputs must be scalars");
    s += t[0];
    rg = rg || tape.requires_grad(v);
  }
  return tape.push(scalar_tensor(s), rg, [scalars, id = tape.size()](Tape<T>& t) {
    const T g = t.grad(Var{static_cast<int>(id)})[0];
    for (const Var v : scalars)
      if (auto* gv = t.maybe_grad(v)) gv->data[0] += g;
  });
}

template <class T>
Var mean_scalars(Tape<T>& tape, const std::vector<Var>& scalars) {
  const Var s = sum_scalars(tape, scalars);
  return scale(tape, s, T(1) / static_cast<T>(scalars.size()));
}

template <class T>
Var square(Tape<T>& tape, Var x) {
  return mul(tape, x, x);
}

}  // namespace copa::nn
