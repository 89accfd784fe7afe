#pragma once

// Evaluation protocol: content-disjoint k-fold splits and the
// SROCC/PLCC/RMSE bundle with logistic alignment. PLCC and RMSE are
// computed after mapping predictions through the fitted logistic; SROCC is
// rank-based and uses the raw predictions.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/logistic4.hpp"
#include "copa/metrics.hpp"
#include "copa/rng.hpp"

namespace copa {

struct FoldSplit {
  int fold_index = 0;
  std::vector<int> train_contents;
  std::vector<int> test_contents;

  bool operator==(const FoldSplit&) const = default;
};

// Splits contents into k folds whose test chunks partition the content set.
// The per-fold test size t follows the train:test ratio, t = max(1,
// round(n * test / (train + test))); the first k-1 folds take t contents
// each and the last fold takes the remainder.
inline std::vector<FoldSplit> kfold_split(std::vector<int> content_ids, int k,
                                          double train_ratio, double test_ratio,
                                          std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: need at least 2 folds");
  if (!(train_ratio > 0.0) || !(test_ratio > 0.0))
    throw ConfigError("kfold_split: ratios must be positive");
  std::sort(content_ids.begin(), content_ids.end());
  content_ids.erase(std::unique(content_ids.begin(), content_ids.end()), content_ids.end());
  const std::int64_t n = static_cast<std::int64_t>(content_ids.size());
  const std::int64_t t = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(n) * test_ratio / (train_ratio + test_ratio)));
  if (static_cast<std::int64_t>(k - 1) * t >= n)
    throw ConfigError("kfold_split: " + std::to_string(n) + " contents cannot fill " +
                      std::to_string(k) + " folds of test size " + std::to_string(t));
  const std::int64_t remainder = n - static_cast<std::int64_t>(k - 1) * t;
  if (remainder > t)
    throw ConfigError("kfold_split: ratio leaves " + std::to_string(remainder) +
                      " contents for the last fold, more than the fold size " + std::to_string(t));

  Rng rng(derive_seed(seed, tag("kfold")));
  std::vector<int> shuffled = content_ids;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[uniform_below(rng, i)]);

  std::vector<FoldSplit> folds;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t take = f + 1 < k ? static_cast<std::size_t>(t)
                                       : static_cast<std::size_t>(remainder);
    FoldSplit split;
    split.fold_index = f;
    split.test_contents.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                               shuffled.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
    for (const int c : content_ids)
      if (std::find(split.test_contents.begin(), split.test_contents.end(), c) ==
          split.test_contents.end())
        split.train_contents.push_back(c);
    std::sort(split.test_contents.begin(), split.test_contents.end());
    folds.push_back(std::move(split));
  }
  return folds;
}

struct EvalResult {
  double srocc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;
  int n_samples = 0;
  Logistic4Params logistic;
  bool logistic_converged = false;
  // Set when an input is constant and correlations are undefined; the
  // correlations are reported as 0 and RMSE is computed without mapping.
  bool degenerate = false;
};

inline EvalResult evaluate(const std::vector<double>& predictions,
                           const std::vector<double>& targets) {
  if (predictions.size() != targets.size())
    throw ShapeError("evaluate: prediction and target lengths differ");
  if (predictions.size() < 3)
    throw NumericError("evaluate: need at least 3 samples");

  EvalResult result;
  result.n_samples = static_cast<int>(predictions.size());

  const auto constant = [](const std::vector<double>& v) {
    for (const double x : v)
      if (x != v[0]) return false;
    return true;
  };
  if (constant(predictions) || constant(targets)) {
    result.degenerate = true;
    result.rmse = rmse(predictions, targets);
    return result;
  }

  result.srocc = srocc(predictions, targets);
  if (predictions.size() >= 5) {
    const Logistic4Fit fit = fit_logistic4(predictions, targets);
    result.logistic = fit.params;
    result.logistic_converged = fit.converged;
    const std::vector<double> mapped = logistic4_apply(fit.params, predictions);
    if (constant(mapped)) {
      // A saturated fit can flatten every prediction to one value. The raw
      // scores are not constant here, so report their correlation instead.
      result.plcc = plcc(predictions, targets);
      result.rmse = rmse(predictions, targets);
    } else {
      result.plcc = plcc(mapped, targets);
      result.rmse = rmse(mapped, targets);
    }
  } else {
    // Too few samples to fit the 4-parameter map; fall back to raw scores.
    result.plcc = plcc(predictions, targets);
    result.rmse = rmse(predictions, targets);
  }
  return result;
}

struct CrossvalResult {
  std::vector<EvalResult> folds;
  double mean_srocc = 0.0;
  double mean_plcc = 0.0;
  double mean_rmse = 0.0;
  int total_samples = 0;
};

inline CrossvalResult summarize_folds(std::vector<EvalResult> folds) {
  if (folds.empty()) throw UsageError("summarize_folds: no folds");
  CrossvalResult out;
  for (const auto& f : folds) {
    out.mean_srocc += f.srocc;
    out.mean_plcc += f.plcc;
    out.mean_rmse += f.rmse;
    out.total_samples += f.n_samples;
  }
  const double k = static_cast<double>(folds.size());
  out.mean_srocc /= k;
  out.mean_plcc /= k;
  out.mean_rmse /= k;
  out.folds = std::move(folds);
  return out;
}

}  // namespace copa
