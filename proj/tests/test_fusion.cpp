#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "copa/errors.hpp"
#include "copa/finetune.hpp"
#include "copa/nn/fusion.hpp"
#include "copa/nn/ops.hpp"
#include "copa/rng.hpp"
#include "gradcheck.hpp"

namespace {

using namespace copa;
using nn::Tensor;
using nn::Var;

std::vector<double> matvec(const Tensor<double>& w, const std::vector<double>& x) {
  const int out = w.shape[0], in = w.shape[1];
  std::vector<double> y(static_cast<std::size_t>(out), 0.0);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i)
      y[static_cast<std::size_t>(o)] +=
          w[static_cast<std::size_t>(o * in + i)] * x[static_cast<std::size_t>(i)];
  return y;
}

std::vector<double> random_vec(int dim, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = normal01(rng);
  return v;
}

Var push_vec(nn::Tape<double>& tape, const std::vector<double>& v) {
  return tape.constant(Tensor<double>({static_cast<int>(v.size())}, v));
}

}  // namespace

TEST_CASE("fusion config validation and scale selection") {
  nn::FusionConfig config;
  config.num_heads = 4;
  CHECK_THROWS_AS(nn::validate(config, 6), ConfigError);
  CHECK_NOTHROW(nn::validate(config, 8));
  config.num_heads = 0;
  CHECK_THROWS_AS(nn::validate(config, 8), ConfigError);
  config.num_heads = 2;
  config.attention_scale_dim = -1.0;
  CHECK_THROWS_AS(nn::validate(config, 8), ConfigError);

  nn::FusionConfig scale;
  scale.num_heads = 2;
  CHECK(nn::attention_scale(scale, 8) == 8.0);  // default: full embedding dim
  scale.attention_scale_dim = 7.5;
  CHECK(nn::attention_scale(scale, 8) == 7.5);
  scale.scale_by_head_dim = true;
  CHECK(nn::attention_scale(scale, 8) == 4.0);
}

TEST_CASE("single-head attention with identity maps reproduces the softmax by hand") {
  // E = 1, one head, d_f = 1, all projection matrices are [1] -> scores are
  // raw dot products. Keys 1 and 0 give weights sigmoid(1) and 1-sigmoid(1).
  nn::FusionConfig config;
  config.num_heads = 1;
  config.attention_scale_dim = 1.0;
  nn::FusionParams<double> params;
  params.w_q = Tensor<double>({1, 1}, {1.0});
  params.w_k = Tensor<double>({1, 1}, {1.0});
  params.w_v = Tensor<double>({1, 1}, {1.0});
  params.w_out = Tensor<double>({1, 1}, {1.0});

  nn::Tape<double> tape;
  const nn::FusionVars vars = nn::load_fusion(tape, params, false);
  const Var q = push_vec(tape, {1.0});
  const Var k1 = push_vec(tape, {1.0});
  const Var k2 = push_vec(tape, {0.0});
  const auto out = nn::multi_head_cross_attention(tape, vars, {q}, {k1, k2}, {k1, k2}, config);
  REQUIRE(out.size() == 1);
  const double w1 = std::exp(1.0) / (std::exp(1.0) + 1.0);
  CHECK_THAT(tape.value(out[0])[0], Catch::Matchers::WithinAbs(w1, 1e-12));
}

TEST_CASE("attention over a single key is the projected value") {
  nn::FusionConfig config;
  config.num_heads = 2;
  config.seed = 3;
  const int embed = 4;
  const nn::FusionParams<double> params = nn::init_fusion<double>(config, embed);
  const std::vector<double> f = random_vec(embed, 8);
  const std::vector<double> g = random_vec(embed, 9);

  nn::Tape<double> tape;
  const nn::FusionVars vars = nn::load_fusion(tape, params, false);
  const auto out =
      nn::multi_head_cross_attention(tape, vars, {push_vec(tape, g)}, {push_vec(tape, f)},
                                     {push_vec(tape, f)}, config);
  const Tensor<double> got = tape.value(out[0]);

  // One key means weight 1 regardless of the query, so the result is
  // w_out * (w_v * f).
  const std::vector<double> want = matvec(params.w_out, matvec(params.w_v, f));
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK_THAT(got[i], Catch::Matchers::WithinAbs(want[i], 1e-12));
}

TEST_CASE("identical keys make attention independent of the query") {
  nn::FusionConfig config;
  config.num_heads = 2;
  config.seed = 5;
  const int embed = 6;
  const nn::FusionParams<double> params = nn::init_fusion<double>(config, embed);
  const std::vector<double> f = random_vec(embed, 21);

  auto run = [&](const std::vector<double>& query) {
    nn::Tape<double> tape;
    const nn::FusionVars vars = nn::load_fusion(tape, params, false);
    std::vector<Var> views(6, Var{});
    for (auto& v : views) v = push_vec(tape, f);
    const Var fused = nn::fuse(tape, vars, push_vec(tape, query), views, config);
    return tape.value(fused).data;
  };
  const auto a = run(random_vec(embed, 22));
  const auto b = run(random_vec(embed, 23));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK_THAT(a[i], Catch::Matchers::WithinAbs(b[i], 1e-12));
}

TEST_CASE("multi-head attention matches a per-head manual computation") {
  nn::FusionConfig config;
  config.num_heads = 2;
  config.seed = 11;
  const int embed = 4;
  const int head_dim = embed / config.num_heads;
  const nn::FusionParams<double> params = nn::init_fusion<double>(config, embed);

  const std::vector<double> g = random_vec(embed, 31);
  std::vector<std::vector<double>> views;
  for (int i = 0; i < 6; ++i) views.push_back(random_vec(embed, 40 + static_cast<std::uint64_t>(i)));

  // Manual reference with plain doubles.
  const std::vector<double> qp = matvec(params.w_q, g);
  std::vector<std::vector<double>> kp, vp;
  for (const auto& f : views) {
    kp.push_back(matvec(params.w_k, f));
    vp.push_back(matvec(params.w_v, f));
  }
  const double inv_sqrt = 1.0 / std::sqrt(nn::attention_scale(config, embed));
  std::vector<double> concat_heads;
  for (int h = 0; h < config.num_heads; ++h) {
    std::vector<double> scores;
    for (const auto& k : kp) {
      double s = 0.0;
      for (int d = 0; d < head_dim; ++d)
        s += qp[static_cast<std::size_t>(h * head_dim + d)] * k[static_cast<std::size_t>(h * head_dim + d)];
      scores.push_back(s * inv_sqrt);
    }
    double mx = scores[0];
    for (const double s : scores) mx = std::max(mx, s);
    double total = 0.0;
    std::vector<double> w;
    for (const double s : scores) {
      w.push_back(std::exp(s - mx));
      total += w.back();
    }
    for (auto& x : w) x /= total;
    for (int d = 0; d < head_dim; ++d) {
      double acc = 0.0;
      for (std::size_t j = 0; j < vp.size(); ++j)
        acc += w[j] * vp[j][static_cast<std::size_t>(h * head_dim + d)];
      concat_heads.push_back(acc);
    }
  }
  const std::vector<double> want = matvec(params.w_out, concat_heads);

  nn::Tape<double> tape;
  const nn::FusionVars vars = nn::load_fusion(tape, params, false);
  std::vector<Var> view_vars;
  for (const auto& f : views) view_vars.push_back(push_vec(tape, f));
  const Var fused = nn::fuse(tape, vars, push_vec(tape, g), view_vars, config);
  const Tensor<double> got = tape.value(fused);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK_THAT(got[i], Catch::Matchers::WithinAbs(want[i], 1e-12));
}

TEST_CASE("fuse is invariant to a joint permutation of the views") {
  nn::FusionConfig config;
  config.num_heads = 2;
  config.seed = 13;
  const int embed = 4;
  const nn::FusionParams<double> params = nn::init_fusion<double>(config, embed);
  const std::vector<double> g = random_vec(embed, 50);
  std::vector<std::vector<double>> views;
  for (int i = 0; i < 6; ++i) views.push_back(random_vec(embed, 60 + static_cast<std::uint64_t>(i)));

  auto run = [&](const std::vector<std::vector<double>>& vs) {
    nn::Tape<double> tape;
    const nn::FusionVars vars = nn::load_fusion(tape, params, false);
    std::vector<Var> view_vars;
    for (const auto& f : vs) view_vars.push_back(push_vec(tape, f));
    return tape.value(nn::fuse(tape, vars, push_vec(tape, g), view_vars, config)).data;
  };
  const auto base = run(views);
  std::vector<std::vector<double>> shuffled = {views[3], views[0], views[5],
                                               views[1], views[4], views[2]};
  const auto perm = run(shuffled);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK_THAT(perm[i], Catch::Matchers::WithinAbs(base[i], 1e-12));

  nn::Tape<double> tape;
  const nn::FusionVars vars = nn::load_fusion(tape, params, false);
  std::vector<Var> five;
  for (int i = 0; i < 5; ++i) five.push_back(push_vec(tape, views[static_cast<std::size_t>(i)]));
  CHECK_THROWS_WITH(nn::fuse(tape, vars, push_vec(tape, g), five, config),
                    Catch::Matchers::ContainsSubstring("expected 6"));
  CHECK_THROWS_AS(nn::multi_head_cross_attention(tape, vars, {}, five, five, config),
                  ShapeError);
  std::vector<Var> four(five.begin(), five.begin() + 4);
  CHECK_THROWS_AS(nn::multi_head_cross_attention(tape, vars, five, five, four, config),
                  ShapeError);
}

TEST_CASE("regression head computes w2 relu(w1 x + b1) + b2") {
  nn::HeadConfig config;
  config.hidden_dim = 3;
  nn::HeadParams<double> params = nn::init_head<double>(config, 2);
  REQUIRE(params.w1.shape == std::vector<int>{3, 2});
  REQUIRE(params.w2.shape == std::vector<int>{1, 3});
  for (const double b : params.b1.data) CHECK(b == 0.0);
  CHECK(params.b2[0] == 0.0);

  // Zeroed weights leave only the output bias.
  params.w1.fill(0.0);
  params.w2.fill(0.0);
  params.b2[0] = 3.25;
  nn::Tape<double> tape;
  const nn::HeadVars head = nn::load_head(tape, params, false);
  const Var score = nn::regress_score(tape, head, push_vec(tape, {0.4, -0.7}));
  CHECK(tape.value(score)[0] == 3.25);

  // Hand case: w1 = [[1,0],[0,1],[−1,−1]], b1 = (0,0.5,0), w2 = [2,−1,3].
  params.w1 = Tensor<double>({3, 2}, {1, 0, 0, 1, -1, -1});
  params.b1 = Tensor<double>({3}, {0.0, 0.5, 0.0});
  params.w2 = Tensor<double>({1, 3}, {2, -1, 3});
  params.b2 = Tensor<double>({1}, {0.1});
  nn::Tape<double> t2;
  const nn::HeadVars h2 = nn::load_head(t2, params, false);
  const double got = t2.value(nn::regress_score(t2, h2, push_vec(t2, {1.0, -2.0})))[0];
  // hidden = relu(1, -1.5, 1) = (1, 0, 1); score = 2*1 - 0 + 3*1 + 0.1.
  CHECK_THAT(got, Catch::Matchers::WithinAbs(5.1, 1e-12));

  CHECK_THROWS_AS(nn::init_head<double>(nn::HeadConfig{.hidden_dim = 0, .seed = 0}, 2),
                  ConfigError);
}

TEST_CASE("mse and rank losses match hand values and invariances") {
  CHECK(mse_loss({0.0, 0.0}, {1.0, 3.0}) == 5.0);
  CHECK(mse_loss({1.0, 3.0}, {1.0, 3.0}) == 0.0);
  CHECK_THROWS_AS(mse_loss({1.0}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(mse_loss({}, {}), UsageError);

  // Reversed pair: both off-diagonal hinges are violated by 1+1.
  CHECK_THAT(rank_loss({2.0, 1.0}, {1.0, 2.0}), Catch::Matchers::WithinAbs(1.0, 1e-15));
  // Perfect pairwise differences give exactly zero.
  CHECK(rank_loss({1.0, 2.0, 4.0}, {1.0, 2.0, 4.0}) == 0.0);
  // Translation of the predictions never changes the loss.
  const std::vector<double> q = {1.0, 3.0, 2.0, 5.0};
  const std::vector<double> p = {1.5, 2.0, 2.5, 4.0};
  std::vector<double> shifted = p;
  for (auto& v : shifted) v += 10.0;
  CHECK_THAT(rank_loss(shifted, q), Catch::Matchers::WithinAbs(rank_loss(p, q), 1e-12));
  CHECK(rank_loss(p, q) >= 0.0);
  CHECK_THROWS_AS(rank_loss({1.0}, {1.0}), UsageError);

  CHECK_THAT(finetune_loss(5.0, 1.0, 0.5), Catch::Matchers::WithinAbs(3.0, 1e-15));
  CHECK(finetune_loss(5.0, 1.0, 1.0) == 5.0);
  CHECK(finetune_loss(5.0, 1.0, 0.0) == 1.0);
  CHECK_THROWS_AS(finetune_loss(1.0, 1.0, 1.5), ConfigError);

  // Tape versions agree with the plain ones.
  nn::Tape<double> tape;
  std::vector<Var> pred;
  for (const double v : p) pred.push_back(tape.constant(nn::scalar_tensor(v)));
  CHECK_THAT(tape.value(mse_loss(tape, pred, q))[0],
             Catch::Matchers::WithinAbs(mse_loss(p, q), 1e-12));
  CHECK_THAT(tape.value(rank_loss(tape, pred, q))[0],
             Catch::Matchers::WithinAbs(rank_loss(p, q), 1e-12));
}

TEST_CASE("full fusion-and-head gradient matches finite differences") {
  nn::FusionConfig config;
  config.num_heads = 2;
  config.seed = 17;
  const int embed = 4;
  nn::HeadConfig head_config;
  head_config.hidden_dim = 3;
  head_config.seed = 18;

  const nn::FusionParams<double> fusion = nn::init_fusion<double>(config, embed);
  nn::HeadParams<double> head = nn::init_head<double>(head_config, embed);
  auto rng = make_rng(19);
  for (auto& b : head.b1.data) b = 0.3 + 0.1 * uniform01(rng);  // keep relu off its kink

  std::vector<std::vector<double>> views;
  for (int i = 0; i < 6; ++i) views.push_back(random_vec(embed, 70 + static_cast<std::uint64_t>(i)));
  const std::vector<double> target = {2.5};

  const std::vector<Tensor<double>> leaves = {
      Tensor<double>({embed}, random_vec(embed, 77)),  // semantic query
      fusion.w_q, fusion.w_k, fusion.w_v, fusion.w_out,
      head.w1, head.b1, head.w2, head.b2};

  const auto r = copa::testing::check_gradients(
      leaves,
      [&](nn::Tape<double>& t, const std::vector<Var>& xs) {
        const nn::FusionVars fv{xs[1], xs[2], xs[3], xs[4]};
        const nn::HeadVars hv{xs[5], xs[6], xs[7], xs[8]};
        std::vector<Var> view_vars;
        for (const auto& f : views) view_vars.push_back(push_vec(t, f));
        const Var fused = nn::fuse(t, fv, xs[0], view_vars, config);
        const Var score = nn::regress_score(t, hv, fused);
        return mse_loss(t, {score}, target);
      },
      1e-5);
  INFO(r.worst << " rel err " << r.max_rel_err);
  CHECK(r.max_rel_err < 1e-5);
}
