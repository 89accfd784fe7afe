#pragma once

// SGD with momentum (pre-training) and Adam (fine-tuning), both with L2
// weight decay folded into the gradient. Also the momentum-encoder update.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/tensor.hpp"

namespace copa::nn {

template <class T>
using ParamRefs = std::vector<std::pair<std::string, Tensor<T>*>>;

template <class T>
void append_refs(ParamRefs<T>& into, ParamRefs<T> more) {
  for (auto& r : more) into.push_back(std::move(r));
}

// theta_k <- m * theta_k + (1 - m) * theta_q, entry by entry. The two sets
// must be structurally identical (names and shapes).
template <class T>
void momentum_update(ParamRefs<T>& key, const ParamRefs<T>& query, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ConfigError("momentum_update: m outside [0,1)");
  if (key.size() != query.size())
    throw ShapeError("momentum_update: parameter set sizes differ");
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (key[i].first != query[i].first || key[i].second->shape != query[i].second->shape)
      throw ShapeError("momentum_update: structure mismatch at \"" + key[i].first + "\"");
    Tensor<T>& k = *key[i].second;
    const Tensor<T>& q = *query[i].second;
    for (std::size_t j = 0; j < k.size(); ++j)
      k[j] = static_cast<T>(m) * k[j] + static_cast<T>(1.0 - m) * q[j];
  }
}

template <class T>
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const ParamRefs<T>& params, const std::vector<Tensor<T>>& grads, double lr) {
    check(params, grads);
    if (velocity_.empty())
      for (const auto& [name, p] : params) velocity_.emplace_back(p->shape);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].second;
      Tensor<T>& v = velocity_[i];
      const Tensor<T>& g = grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = static_cast<T>(momentum_) * v[j] + g[j] + static_cast<T>(weight_decay_) * p[j];
        p[j] -= static_cast<T>(lr) * v[j];
      }
    }
  }

  std::vector<Tensor<T>>& state() { return velocity_; }

 private:
  void check(const ParamRefs<T>& params, const std::vector<Tensor<T>>& grads) const {
    if (params.size() != grads.size())
      throw ShapeError("sgd: gradient count does not match parameter count");
    if (!velocity_.empty() && velocity_.size() != params.size())
      throw ShapeError("sgd: optimizer state does not match parameter count");
  }

  double momentum_;
  double weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

template <class T>
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(const ParamRefs<T>& params, const std::vector<Tensor<T>>& grads, double lr) {
    if (params.size() != grads.size())
      throw ShapeError("adam: gradient count does not match parameter count");
    if (m_.empty()) {
      for (const auto& [name, p] : params) {
        m_.emplace_back(p->shape);
        v_.emplace_back(p->shape);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i].second;
      const Tensor<T>& g = grads[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const T grad = g[j] + static_cast<T>(weight_decay_) * p[j];
        m_[i][j] = static_cast<T>(beta1_) * m_[i][j] + static_cast<T>(1.0 - beta1_) * grad;
        v_[i][j] = static_cast<T>(beta2_) * v_[i][j] + static_cast<T>(1.0 - beta2_) * grad * grad;
        const T mhat = m_[i][j] / static_cast<T>(bc1);
        const T vhat = v_[i][j] / static_cast<T>(bc2);
        p[j] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + static_cast<T>(eps_));
      }
    }
  }

  long long step_count() const { return t_; }
  void set_step_count(long long t) { t_ = t; }
  std::vector<Tensor<T>>& first_moment() { return m_; }
  std::vector<Tensor<T>>& second_moment() { return v_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  long long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace copa::nn
