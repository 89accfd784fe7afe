#pragma once

// Four-parameter logistic mapping used to align objective scores with MOS
// before PLCC/RMSE:
//
//   f(s) = b2 + (b1 - b2) / (1 + exp(-(s - b3) / |b4|))
//
// Fit by damped Gauss-Newton (Levenberg) on the squared error. The slope
// enters through |b4|, so the sign is unidentifiable; results are
// canonicalized to b4 >= 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "copa/errors.hpp"

namespace copa {

struct Logistic4Params {
  std::array<double, 4> beta{0.0, 0.0, 0.0, 1.0};

  bool operator==(const Logistic4Params&) const = default;
};

struct Logistic4Fit {
  Logistic4Params params;
  bool converged = false;
  int iterations = 0;
  double sse = 0.0;
};

inline double logistic4_apply(const Logistic4Params& p, double s) {
  const double b4 = std::max(std::abs(p.beta[3]), 1e-12);
  const double z = (s - p.beta[2]) / b4;
  const double sig = 1.0 / (1.0 + std::exp(-z));
  return p.beta[1] + (p.beta[0] - p.beta[1]) * sig;
}

inline std::vector<double> logistic4_apply(const Logistic4Params& p,
                                           const std::vector<double>& scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const double s : scores) out.push_back(logistic4_apply(p, s));
  return out;
}

namespace detail {

// Gaussian elimination with partial pivoting for the 4x4 normal equations.
inline bool solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b,
                   std::array<double, 4>& x) {
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300) return false;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double factor = a[r][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  for (int i = 0; i < 4; ++i) x[i] = b[i] / a[i][i];
  return true;
}

inline double logistic4_sse(const Logistic4Params& p, const std::vector<double>& s,
                            const std::vector<double>& y) {
  double sse = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = logistic4_apply(p, s[i]) - y[i];
    sse += r * r;
  }
  return sse;
}

}  // namespace detail

inline Logistic4Fit fit_logistic4(const std::vector<double>& scores,
                                  const std::vector<double>& mos, int max_iterations = 500,
                                  double gradient_tolerance = 1e-8) {
  if (scores.size() != mos.size())
    throw ShapeError("fit_logistic4: input lengths differ");
  if (scores.size() < 5)
    throw NumericError("fit_logistic4: need at least 5 samples for 4 parameters");
  for (const double v : scores)
    if (!std::isfinite(v)) throw NumericError("fit_logistic4: non-finite score");
  for (const double v : mos)
    if (!std::isfinite(v)) throw NumericError("fit_logistic4: non-finite target");

  const std::size_t n = scores.size();
  const double mean_s = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);
  double var_s = 0.0;
  for (const double v : scores) var_s += (v - mean_s) * (v - mean_s);
  var_s /= static_cast<double>(n);
  if (var_s <= 1e-24)
    throw NumericError("fit_logistic4: scores are constant, mapping undefined");

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const double median_s = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  Logistic4Params p;
  p.beta[0] = *std::max_element(mos.begin(), mos.end());
  p.beta[1] = *std::min_element(mos.begin(), mos.end());
  p.beta[2] = median_s;
  p.beta[3] = std::sqrt(var_s);

  double sse = detail::logistic4_sse(p, scores, mos);
  Logistic4Fit best{p, false, 0, sse};
  double damping = 1e-3;

  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    // Accumulate J^T J and J^T r at the current point.
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    const double b4 = std::max(std::abs(p.beta[3]), 1e-12);
    const double sign4 = p.beta[3] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (scores[i] - p.beta[2]) / b4;
      const double sig = 1.0 / (1.0 + std::exp(-z));
      const double dsig = sig * (1.0 - sig);
      const double span = p.beta[0] - p.beta[1];
      const std::array<double, 4> j{
          sig,
          1.0 - sig,
          -span * dsig / b4,
          -span * dsig * (scores[i] - p.beta[2]) / (b4 * b4) * sign4,
      };
      const double r = p.beta[1] + span * sig - mos[i];
      for (int a = 0; a < 4; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 4; ++b) jtj[a][b] += j[a] * j[b];
      }
    }

    double gmax = 0.0;
    for (const double g : jtr) gmax = std::max(gmax, std::abs(g));
    if (gmax < gradient_tolerance) {
      best.converged = true;
      break;
    }

    std::array<std::array<double, 4>, 4> damped = jtj;
    for (int a = 0; a < 4; ++a) damped[a][a] += damping * (1.0 + jtj[a][a]);
    std::array<double, 4> rhs{-jtr[0], -jtr[1], -jtr[2], -jtr[3]};
    std::array<double, 4> delta{};
    if (!detail::solve4(damped, rhs, delta)) {
      damping *= 10.0;
      if (damping > 1e12) break;
      continue;
    }

    Logistic4Params trial = p;
    for (int a = 0; a < 4; ++a) trial.beta[static_cast<std::size_t>(a)] += delta[static_cast<std::size_t>(a)];
    const double trial_sse = detail::logistic4_sse(trial, scores, mos);
    if (trial_sse < sse) {
      p = trial;
      sse = trial_sse;
      damping = std::max(damping * 0.1, 1e-12);
      if (sse < best.sse) {
        best.params = p;
        best.sse = sse;
      }
    } else {
      damping *= 10.0;
      if (damping > 1e12) break;
    }
  }

  best.iterations = iter;
  if (best.converged) {
    best.params = p;
    best.sse = sse;
  }
  best.params.beta[3] = std::abs(best.params.beta[3]);
  return best;
}

}  // namespace copa
