#pragma once

// Quality-aware contrastive objective: the two-positive, ratio-weighted
// InfoNCE-style losses over distortion-wise and content-wise negatives,
// and the FIFO negative queue fed by the momentum encoder.
//
// As printed, the denominators contain only negative similarities (the
// positive term is absent), so the losses can go negative. The
// include_positive_in_denominator switch restores the conventional form.

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/nn/encoder.hpp"
#include "copa/nn/ops.hpp"
#include "copa/nn/tape.hpp"

namespace copa {

template <class T>
struct ContrastiveSettings {
  T temperature = T(0.2);
  bool include_positive_in_denominator = false;
};

template <class T>
struct QueueEntry {
  std::vector<T> feature;
  int content_id = -1;
};

// Dynamic queue of momentum-encoder features. Strict FIFO eviction; all
// stored features must be L2-normalized.
template <class T>
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("negative queue: capacity must be positive");
  }

  void enqueue(std::vector<T> feature, int content_id) {
    if (!nn::is_normalized(feature))
      throw UsageError("negative queue: feature is not L2-normalized");
    entries_.push_back({std::move(feature), content_id});
    while (entries_.size() > capacity_) entries_.pop_front();
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<QueueEntry<T>>& entries() const { return entries_; }

  // Content-wise negatives: entries whose content differs from the anchor.
  std::vector<const QueueEntry<T>*> eligible(int anchor_content) const {
    std::vector<const QueueEntry<T>*> out;
    for (const auto& e : entries_)
      if (e.content_id != anchor_content) out.push_back(&e);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<QueueEntry<T>> entries_;
};

namespace detail {

template <class T>
void check_normalized_feature(const std::vector<T>& f, const char* what) {
  if (!nn::is_normalized(f))
    throw UsageError(std::string(what) + " feature is not L2-normalized");
}

// Shared core of both losses: -r (s_p1/tau - L) - (1-r)(s_p2/tau - L) where
// L is the log-sum-exp over the negative similarities (optionally including
// the respective positive).
template <class T>
nn::Var two_positive_nce(nn::Tape<T>& tape, nn::Var anchor, const std::vector<T>& pos1,
                         const std::vector<T>& pos2,
                         const std::vector<const std::vector<T>*>& negatives, T ratio,
                         const ContrastiveSettings<T>& settings) {
  using namespace nn;
  if (!(settings.temperature > T(0))) throw ConfigError("contrastive loss: temperature must be positive");
  if (!(ratio >= T(0) && ratio <= T(1))) throw UsageError("contrastive loss: ratio outside [0,1]");
  if (negatives.empty()) throw UsageError("contrastive loss: no negatives supplied");
  {
    const auto& av = tape.value(anchor);
    T n2 = 0;
    for (const T v : av.data) n2 += v * v;
    if (std::abs(std::sqrt(n2) - T(1)) > T(1e-5))
      throw UsageError("contrastive loss: anchor feature is not L2-normalized");
  }
  check_normalized_feature(pos1, "positive");
  check_normalized_feature(pos2, "positive");
  for (const auto* n : negatives) check_normalized_feature(*n, "negative");

  const T inv_tau = T(1) / settings.temperature;
  const Var p1 = scale(tape, dot(tape, anchor, tape.constant(Tensor<T>({static_cast<int>(pos1.size())}, pos1))), inv_tau);
  const Var p2 = scale(tape, dot(tape, anchor, tape.constant(Tensor<T>({static_cast<int>(pos2.size())}, pos2))), inv_tau);
  std::vector<Var> neg_scores;
  neg_scores.reserve(negatives.size());
  for (const auto* n : negatives)
    neg_scores.push_back(scale(
        tape, dot(tape, anchor, tape.constant(Tensor<T>({static_cast<int>(n->size())}, *n))),
        inv_tau));

  Var lse1, lse2;
  if (settings.include_positive_in_denominator) {
    std::vector<Var> with_p1 = neg_scores;
    with_p1.push_back(p1);
    std::vector<Var> with_p2 = neg_scores;
    with_p2.push_back(p2);
    lse1 = logsumexp(tape, stack_scalars(tape, with_p1));
    lse2 = logsumexp(tape, stack_scalars(tape, with_p2));
  } else {
    lse1 = logsumexp(tape, stack_scalars(tape, neg_scores));
    lse2 = lse1;
  }
  const Var term1 = scale(tape, sub(tape, p1, lse1), -ratio);
  const Var term2 = scale(tape, sub(tape, p2, lse2), -(T(1) - ratio));
  return add(tape, term1, term2);
}

}  // namespace detail

// Distortion-wise loss: negatives are the same content's other distortions.
template <class T>
nn::Var distortion_loss(nn::Tape<T>& tape, nn::Var anchor, const std::vector<T>& pos1,
                        const std::vector<T>& pos2,
                        const std::vector<std::vector<T>>& negatives, T ratio,
                        const ContrastiveSettings<T>& settings) {
  std::vector<const std::vector<T>*> refs;
  refs.reserve(negatives.size());
  for (const auto& n : negatives) refs.push_back(&n);
  return detail::two_positive_nce(tape, anchor, pos1, pos2, refs, ratio, settings);
}

// Content-wise loss: negatives are queue entries from other contents.
template <class T>
nn::Var content_loss(nn::Tape<T>& tape, nn::Var anchor, const std::vector<T>& pos1,
                     const std::vector<T>& pos2, const NegativeQueue<T>& queue,
                     int anchor_content, T ratio, const ContrastiveSettings<T>& settings) {
  const auto eligible = queue.eligible(anchor_content);
  if (eligible.empty())
    throw UsageError("content_loss: queue holds no negatives from other contents");
  std::vector<const std::vector<T>*> refs;
  refs.reserve(eligible.size());
  for (const auto* e : eligible) refs.push_back(&e->feature);
  return detail::two_positive_nce(tape, anchor, pos1, pos2, refs, ratio, settings);
}

// Lambda-weighted combination of the two losses.
template <class T>
T pretrain_loss(T distortion, T content, T lambda) {
  if (!(lambda >= T(0) && lambda <= T(1)))
    throw ConfigError("pretrain_loss: lambda outside [0,1]");
  return lambda * distortion + (T(1) - lambda) * content;
}

template <class T>
nn::Var pretrain_loss(nn::Tape<T>& tape, nn::Var distortion, nn::Var content, T lambda) {
  if (!(lambda >= T(0) && lambda <= T(1)))
    throw ConfigError("pretrain_loss: lambda outside [0,1]");
  return nn::add(tape, nn::scale(tape, distortion, lambda),
                 nn::scale(tape, content, T(1) - lambda));
}

// Plain-value convenience used by tests and diagnostics.
template <class T>
T distortion_loss_value(const std::vector<T>& anchor, const std::vector<T>& pos1,
                        const std::vector<T>& pos2,
                        const std::vector<std::vector<T>>& negatives, T ratio,
                        const ContrastiveSettings<T>& settings) {
  nn::Tape<T> tape;
  const nn::Var a = tape.constant(nn::Tensor<T>({static_cast<int>(anchor.size())}, anchor));
  return tape.value(distortion_loss(tape, a, pos1, pos2, negatives, ratio, settings))[0];
}

template <class T>
T content_loss_value(const std::vector<T>& anchor, const std::vector<T>& pos1,
                     const std::vector<T>& pos2, const NegativeQueue<T>& queue,
                     int anchor_content, T ratio, const ContrastiveSettings<T>& settings) {
  nn::Tape<T> tape;
  const nn::Var a = tape.constant(nn::Tensor<T>({static_cast<int>(anchor.size())}, anchor));
  return tape.value(content_loss(tape, a, pos1, pos2, queue, anchor_content, ratio, settings))[0];
}

}  // namespace copa
