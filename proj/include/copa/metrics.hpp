#pragma once

// Rank and linear correlation metrics. SROCC uses fractional (average)
// ranks for ties, matching the textbook definition.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "copa/errors.hpp"

namespace copa {

inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline void check_metric_inputs(const std::vector<double>& a, const std::vector<double>& b,
                                const char* what, std::size_t min_n) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": input lengths differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  if (a.size() < min_n)
    throw NumericError(std::string(what) + ": need at least " + std::to_string(min_n) +
                       " samples, got " + std::to_string(a.size()));
  for (const double v : a)
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value in input");
  for (const double v : b)
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value in input");
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b,
                      const char* what) {
  const std::size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0)
    throw NumericError(std::string(what) + ": an input is constant, correlation undefined");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

inline double plcc(const std::vector<double>& predictions, const std::vector<double>& targets) {
  detail::check_metric_inputs(predictions, targets, "plcc", 3);
  return detail::pearson(predictions, targets, "plcc");
}

inline double srocc(const std::vector<double>& predictions, const std::vector<double>& targets) {
  detail::check_metric_inputs(predictions, targets, "srocc", 3);
  return detail::pearson(average_ranks(predictions), average_ranks(targets), "srocc");
}

inline double rmse(const std::vector<double>& predictions, const std::vector<double>& targets) {
  detail::check_metric_inputs(predictions, targets, "rmse", 1);
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

}  // namespace copa
