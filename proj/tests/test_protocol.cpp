#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "copa/errors.hpp"
#include "copa/protocol.hpp"
#include "copa/rng.hpp"

namespace {

using namespace copa;

std::vector<int> iota_ids(int n, int start = 0) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = start + i;
  return ids;
}

// The folds' test chunks must partition the content set; every fold's
// train/test pair must be disjoint and jointly cover it.
void check_partition(const std::vector<FoldSplit>& folds, const std::vector<int>& ids) {
  std::multiset<int> all_test;
  for (const auto& f : folds) {
    std::set<int> train(f.train_contents.begin(), f.train_contents.end());
    std::set<int> test(f.test_contents.begin(), f.test_contents.end());
    CHECK(train.size() == f.train_contents.size());
    CHECK(test.size() == f.test_contents.size());
    CHECK(train.size() + test.size() == ids.size());
    for (const int c : test) CHECK(train.count(c) == 0);
    for (const int c : f.test_contents) all_test.insert(c);
  }
  std::multiset<int> want(ids.begin(), ids.end());
  CHECK(all_test == want);
}

}  // namespace

TEST_CASE("nine contents at 7:2 give test chunks of 2,2,2,2,1") {
  const auto ids = iota_ids(9, 100);
  const auto folds = kfold_split(ids, 5, 7.0, 2.0, 42);
  REQUIRE(folds.size() == 5);
  std::vector<std::size_t> sizes;
  for (const auto& f : folds) sizes.push_back(f.test_contents.size());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 2, 2, 1});
  for (std::size_t i = 0; i < folds.size(); ++i)
    CHECK(folds[i].fold_index == static_cast<int>(i));
  check_partition(folds, ids);
}

TEST_CASE("twenty contents at 4:1 give five test chunks of 4") {
  const auto ids = iota_ids(20);
  const auto folds = kfold_split(ids, 5, 4.0, 1.0, 7);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) CHECK(f.test_contents.size() == 4);
  check_partition(folds, ids);
}

TEST_CASE("kfold is deterministic in the seed and shuffles across seeds") {
  const auto ids = iota_ids(12);
  const auto a = kfold_split(ids, 4, 3.0, 1.0, 5);
  const auto b = kfold_split(ids, 4, 3.0, 1.0, 5);
  CHECK(a == b);
  // Duplicated ids collapse before splitting.
  std::vector<int> dupes = ids;
  dupes.insert(dupes.end(), ids.begin(), ids.end());
  CHECK(kfold_split(dupes, 4, 3.0, 1.0, 5) == a);

  bool any_different = false;
  for (std::uint64_t seed = 6; seed < 12 && !any_different; ++seed)
    any_different = kfold_split(ids, 4, 3.0, 1.0, seed) != a;
  CHECK(any_different);
}

TEST_CASE("kfold rejects impossible configurations") {
  CHECK_THROWS_AS(kfold_split(iota_ids(9), 1, 7.0, 2.0, 0), ConfigError);
  CHECK_THROWS_AS(kfold_split(iota_ids(9), 5, 0.0, 2.0, 0), ConfigError);
  CHECK_THROWS_AS(kfold_split(iota_ids(9), 5, 7.0, -1.0, 0), ConfigError);
  // 4 contents cannot fill 5 folds of test size >= 1.
  CHECK_THROWS_AS(kfold_split(iota_ids(4), 5, 7.0, 2.0, 0), ConfigError);
  // 9 contents at 1:1 want test chunks of 4-5; five folds cannot fit.
  CHECK_THROWS_AS(kfold_split(iota_ids(9), 5, 1.0, 1.0, 0), ConfigError);
}

TEST_CASE("evaluate bundles srocc with logistic-aligned plcc and rmse") {
  // Predictions are a noisy monotone transform of the targets.
  auto rng = make_rng(321);
  std::vector<double> targets, predictions;
  for (int i = 0; i < 25; ++i) {
    const double m = 1.0 + 4.0 * uniform01(rng);
    targets.push_back(m);
    predictions.push_back(std::tanh(m - 3.0) + 0.01 * normal01(rng));
  }

  const EvalResult r = evaluate(predictions, targets);
  CHECK(r.n_samples == 25);
  CHECK_FALSE(r.degenerate);
  CHECK_THAT(r.srocc, Catch::Matchers::WithinAbs(srocc(predictions, targets), 1e-15));
  const Logistic4Fit fit = fit_logistic4(predictions, targets);
  const std::vector<double> mapped = logistic4_apply(fit.params, predictions);
  CHECK_THAT(r.plcc, Catch::Matchers::WithinAbs(plcc(mapped, targets), 1e-15));
  CHECK_THAT(r.rmse, Catch::Matchers::WithinAbs(rmse(mapped, targets), 1e-15));
  CHECK(r.srocc > 0.9);
  CHECK(r.plcc > 0.9);
  CHECK(r.rmse < 0.5);
}

TEST_CASE("evaluate falls back to raw plcc below five samples") {
  const std::vector<double> p = {1.0, 2.0, 4.0, 3.0};
  const std::vector<double> t = {1.1, 2.2, 3.9, 3.1};
  const EvalResult r = evaluate(p, t);
  CHECK(r.n_samples == 4);
  CHECK_THAT(r.plcc, Catch::Matchers::WithinAbs(plcc(p, t), 1e-15));
  CHECK_THAT(r.rmse, Catch::Matchers::WithinAbs(rmse(p, t), 1e-15));
  CHECK_FALSE(r.logistic_converged);
}

TEST_CASE("evaluate flags constant inputs instead of throwing") {
  const std::vector<double> flat = {2.0, 2.0, 2.0, 2.0};
  const std::vector<double> t = {1.0, 2.0, 3.0, 4.0};
  const EvalResult r = evaluate(flat, t);
  CHECK(r.degenerate);
  CHECK(r.srocc == 0.0);
  CHECK(r.plcc == 0.0);
  CHECK_THAT(r.rmse, Catch::Matchers::WithinAbs(rmse(flat, t), 1e-15));

  CHECK_THROWS_AS(evaluate({1.0, 2.0}, {1.0, 2.0}), NumericError);
  CHECK_THROWS_AS(evaluate({1.0, 2.0, 3.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("summarize_folds averages per-fold metrics exactly") {
  EvalResult a;
  a.srocc = 0.8;
  a.plcc = 0.7;
  a.rmse = 0.5;
  a.n_samples = 10;
  EvalResult b;
  b.srocc = 0.6;
  b.plcc = 0.9;
  b.rmse = 0.3;
  b.n_samples = 4;
  const CrossvalResult cv = summarize_folds({a, b});
  CHECK_THAT(cv.mean_srocc, Catch::Matchers::WithinAbs(0.7, 1e-12));
  CHECK_THAT(cv.mean_plcc, Catch::Matchers::WithinAbs(0.8, 1e-12));
  CHECK_THAT(cv.mean_rmse, Catch::Matchers::WithinAbs(0.4, 1e-12));
  CHECK(cv.total_samples == 14);
  CHECK(cv.folds.size() == 2);
  CHECK_THROWS_AS(summarize_folds({}), UsageError);
}
