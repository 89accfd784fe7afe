#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "copa/checkpoint.hpp"
#include "copa/errors.hpp"
#include "copa/nn/encoder.hpp"
#include "copa/nn/ops.hpp"
#include "copa/nn/optim.hpp"
#include "copa/nn/tape.hpp"
#include "copa/nn/tensor.hpp"
#include "copa/rng.hpp"
#include "gradcheck.hpp"

namespace {

namespace fs = std::filesystem;
using copa::testing::check_gradients;
using copa::testing::GradCheckResult;
using namespace copa::nn;

Tensor<double> random_tensor(std::vector<int> shape, std::uint64_t seed,
                             double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  auto rng = copa::make_rng(seed);
  for (auto& v : t.data) v = lo + (hi - lo) * copa::uniform01(rng);
  return t;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("copa_nn_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("tensor shape and data are validated") {
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.shape == std::vector<int>{2, 3});
  for (const double v : t.data) CHECK(v == 0.0);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), copa::ShapeError);
  Tensor<double> s({2}, {1.5, -2.5});
  Tensor<float> f = s.cast<float>();
  CHECK(f.shape == s.shape);
  CHECK(f[0] == 1.5f);
  CHECK(f[1] == -2.5f);
  CHECK(scalar_tensor(7.0).size() == 1);
}

TEST_CASE("tape rejects misuse") {
  Tape<double> tape;
  const Var c = tape.constant(scalar_tensor(1.0));
  const Var x = tape.leaf(scalar_tensor(2.0));
  const Var v = mul(tape, x, x);
  CHECK_THROWS_AS(tape.backward(add(tape, tape.leaf(Tensor<double>({2}, {1.0, 2.0})),
                                    tape.leaf(Tensor<double>({2}, {3.0, 4.0})))),
                  copa::UsageError);
  tape.backward(v);
  CHECK(tape.grad(x)[0] == 4.0);
  CHECK_THROWS_AS(tape.grad(c), copa::UsageError);
  CHECK(tape.maybe_grad(c) == nullptr);
}

TEST_CASE("elementwise and reduction ops match finite differences") {
  const Tensor<double> a = random_tensor({5}, 11);
  const Tensor<double> b = random_tensor({5}, 12);
  const Tensor<double> c = random_tensor({5}, 13);

  SECTION("add, sub, scale, add_const, mul, dot") {
    const auto r = check_gradients({a, b}, [&](Tape<double>& t, const std::vector<Var>& xs) {
      const Var s = add(t, xs[0], xs[1]);
      const Var d = sub(t, xs[0], xs[1]);
      const Var m = mul(t, s, add_const(t, scale(t, d, 0.7), 0.3));
      return dot(t, m, t.constant(c));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("relu and hinge away from the kink") {
    Tensor<double> x({6}, {-1.2, -0.4, 0.3, 0.9, -2.0, 1.5});
    const Tensor<double> w = random_tensor({6}, 14);
    const auto r = check_gradients({x}, [&](Tape<double>& t, const std::vector<Var>& xs) {
      const Var h = add(t, relu(t, xs[0]), hinge(t, scale(t, xs[0], -1.0)));
      return dot(t, h, t.constant(w));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("square, sum_scalars, mean_scalars") {
    const auto r = check_gradients({a, b}, [&](Tape<double>& t, const std::vector<Var>& xs) {
      std::vector<Var> parts;
      for (int i = 0; i < 5; ++i) {
        const Var ai = slice(t, xs[0], i, 1);
        const Var bi = slice(t, xs[1], i, 1);
        parts.push_back(square(t, add(t, ai, bi)));
      }
      return add(t, sum_scalars(t, parts), mean_scalars(t, parts));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("structural ops match finite differences") {
  const Tensor<double> a = random_tensor({4}, 21);
  const Tensor<double> b = random_tensor({3}, 22);

  SECTION("slice and concat round trip") {
    const Tensor<double> w = random_tensor({7}, 23);
    const auto r = check_gradients({a, b}, [&](Tape<double>& t, const std::vector<Var>& xs) {
      const Var joined = concat(t, {xs[0], xs[1]});
      const Var left = slice(t, joined, 0, 4);
      const Var right = slice(t, joined, 4, 3);
      return dot(t, concat(t, {right, left}),
                 t.constant(Tensor<double>({7}, w.data)));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("stack_scalars") {
    const auto r = check_gradients({a}, [&](Tape<double>& t, const std::vector<Var>& xs) {
      std::vector<Var> scalars;
      for (int i = 0; i < 4; ++i) scalars.push_back(slice(t, xs[0], i, 1));
      const Var stacked = stack_scalars(t, scalars);
      return dot(t, stacked, t.constant(random_tensor({4}, 24)));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("slice bounds are checked") {
    Tape<double> t;
    const Var x = t.leaf(a);
    CHECK_THROWS_AS(slice(t, x, 3, 2), copa::ShapeError);
    CHECK_THROWS_AS(slice(t, x, -1, 1), copa::ShapeError);
  }
}

TEST_CASE("softmax, logsumexp, weighted_sum, l2_normalize match finite differences") {
  const Tensor<double> x = random_tensor({5}, 31, -2.0, 2.0);

  SECTION("softmax sums to one and is FD-consistent") {
    Tape<double> t;
    const Var s = softmax(t, t.leaf(x));
    const Tensor<double> sv = t.value(s);
    double total = 0.0;
    for (const double v : sv.data) {
      CHECK(v > 0.0);
      total += v;
    }
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));

    const Tensor<double> w = random_tensor({5}, 32);
    const auto r = check_gradients({x}, [&](Tape<double>& tt, const std::vector<Var>& xs) {
      return dot(tt, softmax(tt, xs[0]), tt.constant(w));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("logsumexp equals log of summed exps and is stable") {
    Tape<double> t;
    const Var l = logsumexp(t, t.leaf(x));
    double ref = 0.0;
    for (const double v : x.data) ref += std::exp(v);
    CHECK_THAT(t.value(l)[0], Catch::Matchers::WithinAbs(std::log(ref), 1e-12));

    Tensor<double> huge({3}, {1000.0, 999.0, 998.0});
    Tape<double> t2;
    const double stable = t2.value(logsumexp(t2, t2.leaf(huge)))[0];
    CHECK(std::isfinite(stable));
    CHECK_THAT(stable, Catch::Matchers::WithinAbs(
                           1000.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-9));

    const auto r = check_gradients({x}, [&](Tape<double>& tt, const std::vector<Var>& xs) {
      return logsumexp(tt, xs[0]);
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("weighted_sum") {
    const Tensor<double> w3 = random_tensor({3}, 33, 0.1, 1.0);
    const Tensor<double> v0 = random_tensor({4}, 34);
    const Tensor<double> v1 = random_tensor({4}, 35);
    const Tensor<double> v2 = random_tensor({4}, 36);
    const Tensor<double> probe = random_tensor({4}, 37);
    const auto r = check_gradients(
        {w3, v0, v1, v2}, [&](Tape<double>& t, const std::vector<Var>& xs) {
          const Var ws = weighted_sum(t, xs[0], {xs[1], xs[2], xs[3]});
          return dot(t, ws, t.constant(probe));
        });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("l2_normalize values and gradient") {
    Tape<double> t;
    const Var n = l2_normalize(t, t.leaf(Tensor<double>({2}, {3.0, 4.0})));
    const Tensor<double> nv = t.value(n);
    CHECK_THAT(nv[0], Catch::Matchers::WithinAbs(0.6, 1e-15));
    CHECK_THAT(nv[1], Catch::Matchers::WithinAbs(0.8, 1e-15));

    Tape<double> tz;
    CHECK_THROWS_AS(l2_normalize(tz, tz.leaf(Tensor<double>({3}))), copa::NumericError);

    const Tensor<double> probe = random_tensor({5}, 38);
    const auto r = check_gradients({x}, [&](Tape<double>& tt, const std::vector<Var>& xs) {
      return dot(tt, l2_normalize(tt, xs[0]), tt.constant(probe));
    });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("linear and conv2d match finite differences") {
  SECTION("linear with and without bias") {
    const Tensor<double> w = random_tensor({3, 4}, 41);
    const Tensor<double> xv = random_tensor({4}, 42);
    const Tensor<double> bv = random_tensor({3}, 43);
    const Tensor<double> probe = random_tensor({3}, 44);

    Tape<double> t;
    const Var y = linear(t, t.leaf(w), t.leaf(xv), t.leaf(bv));
    const Tensor<double> yv = t.value(y);
    for (int o = 0; o < 3; ++o) {
      double ref = bv[static_cast<std::size_t>(o)];
      for (int i = 0; i < 4; ++i) ref += w[static_cast<std::size_t>(o * 4 + i)] * xv[static_cast<std::size_t>(i)];
      CHECK_THAT(yv[static_cast<std::size_t>(o)], Catch::Matchers::WithinAbs(ref, 1e-12));
    }

    const auto with_bias = check_gradients(
        {w, xv, bv}, [&](Tape<double>& tt, const std::vector<Var>& xs) {
          return dot(tt, linear(tt, xs[0], xs[1], xs[2]), tt.constant(probe));
        });
    INFO(with_bias.worst);
    CHECK(with_bias.max_rel_err < 1e-6);

    const auto no_bias = check_gradients({w, xv}, [&](Tape<double>& tt, const std::vector<Var>& xs) {
      return dot(tt, linear(tt, xs[0], xs[1]), tt.constant(probe));
    });
    CHECK(no_bias.max_rel_err < 1e-6);
  }

  SECTION("conv2d stride 2 with padding, then pooling") {
    const Tensor<double> img = random_tensor({2, 6, 6}, 45);
    const Tensor<double> k = random_tensor({3, 2, 3, 3}, 46, -0.5, 0.5);
    const Tensor<double> kb = random_tensor({3}, 47);
    const Tensor<double> probe = random_tensor({3}, 48);
    const auto r = check_gradients(
        {img, k, kb}, [&](Tape<double>& t, const std::vector<Var>& xs) {
          const Var y = conv2d(t, xs[0], xs[1], xs[2], 2, 1);
          return dot(t, global_avg_pool(t, y), t.constant(probe));
        });
    INFO(r.worst);
    CHECK(r.max_rel_err < 1e-6);
  }

  SECTION("conv2d output matches a direct correlation") {
    // 1x3x3 input, single 3x3 kernel, stride 1, pad 1: centre output pixel is
    // the full correlation of kernel and input.
    Tensor<double> img({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor<double> k({1, 1, 3, 3}, {1, 0, -1, 2, 0, -2, 1, 0, -1});
    Tape<double> t;
    const Var y = conv2d(t, t.constant(img), t.constant(k), t.constant(Tensor<double>({1})), 1, 1);
    const Tensor<double> yv = t.value(y);
    REQUIRE(yv.shape == std::vector<int>{1, 3, 3});
    const double centre = 1 * 1 + 0 * 2 + (-1) * 3 + 2 * 4 + 0 * 5 + (-2) * 6 + 1 * 7 + 0 * 8 + (-1) * 9;
    CHECK_THAT(yv[4], Catch::Matchers::WithinAbs(centre, 1e-12));
    // Top-left output only sees the bottom-right 2x2 of the kernel.
    const double corner = 0 * 1 + (-2) * 2 + 0 * 4 + (-1) * 5;
    CHECK_THAT(yv[0], Catch::Matchers::WithinAbs(corner, 1e-12));
  }
}

TEST_CASE("encoder produces unit-norm deterministic embeddings") {
  EncoderConfig config;
  config.input_height = 16;
  config.input_width = 16;
  config.stage_widths = {4, 8};
  config.embedding_dim = 12;
  config.seed = 99;
  validate(config);

  const EncoderParams<double> params = init_encoder<double>(config);
  copa::ProjectedImage img = copa::solid_image(16, 16, {0.2, 0.5, 0.8});
  auto rng = copa::make_rng(7);
  for (auto& p : img.pixels) p = copa::uniform01(rng);

  const Tensor<double> f1 = encode_image_nograd(params, img, config);
  const Tensor<double> f2 = encode_image_nograd(params, img, config);
  REQUIRE(f1.shape == std::vector<int>{12});
  CHECK(f1.data == f2.data);
  double norm2 = 0.0;
  for (const double v : f1.data) norm2 += v * v;
  CHECK_THAT(norm2, Catch::Matchers::WithinAbs(1.0, 1e-9));
  CHECK(is_normalized(f1.data));

  // Same config and seed reproduce the same parameters; a different seed does not.
  const EncoderParams<double> again = init_encoder<double>(config);
  CHECK(again.proj_w.data == params.proj_w.data);
  EncoderConfig other = config;
  other.seed = 100;
  const EncoderParams<double> different = init_encoder<double>(other);
  CHECK(different.proj_w.data != params.proj_w.data);

  // Tape and no-grad paths agree.
  Tape<double> tape;
  EncoderParams<double> copy = params;
  EncoderVars vars = load_encoder(tape, copy, false);
  const Var fv = encode_image(tape, vars, img, config);
  const Tensor<double> ft = tape.value(fv);
  REQUIRE(ft.size() == f1.size());
  for (std::size_t i = 0; i < ft.size(); ++i)
    CHECK_THAT(ft[i], Catch::Matchers::WithinAbs(f1[i], 1e-12));

  copa::ProjectedImage wrong = copa::solid_image(8, 16, {0, 0, 0});
  CHECK_THROWS_AS(encode_image_nograd(params, wrong, config), copa::ShapeError);

  EncoderConfig bad = config;
  bad.input_height = 18;  // not divisible by 2^stages
  CHECK_THROWS_AS(validate(bad), copa::ConfigError);
  bad = config;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(validate(bad), copa::ConfigError);
}

TEST_CASE("whole encoder gradient matches finite differences") {
  EncoderConfig config;
  config.input_height = 8;
  config.input_width = 8;
  config.stage_widths = {4};
  config.embedding_dim = 6;
  config.seed = 5;
  validate(config);
  EncoderParams<double> params = init_encoder<double>(config);
  // Zero-initialised biases keep relu pre-activations near 0; nudge them off
  // the kink so finite differences are clean.
  auto rng = copa::make_rng(55);
  for (auto& v : params.conv_b[0].data) v = 0.2 + 0.1 * copa::uniform01(rng);

  copa::ProjectedImage img = copa::solid_image(8, 8, {0, 0, 0});
  for (auto& p : img.pixels) p = copa::uniform01(rng);
  const Tensor<double> probe = random_tensor({6}, 56);

  const std::vector<Tensor<double>> leaves = {params.conv_w[0], params.conv_b[0],
                                              params.proj_w, params.proj_b};
  const auto r = copa::testing::check_gradients(
      leaves,
      [&](Tape<double>& t, const std::vector<Var>& xs) {
        EncoderVars vars;
        vars.conv_w = {xs[0]};
        vars.conv_b = {xs[1]};
        vars.proj_w = xs[2];
        vars.proj_b = xs[3];
        return dot(t, encode_image(t, vars, img, config), t.constant(probe));
      },
      1e-5);
  INFO(r.worst << " rel err " << r.max_rel_err);
  CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("encoder parameter names are stable and loadable") {
  EncoderConfig config;
  config.input_height = 16;
  config.input_width = 16;
  config.stage_widths = {4, 8};
  config.embedding_dim = 12;
  EncoderParams<double> params = init_encoder<double>(config);
  ParamRefs<double> refs = param_refs(params, "encoder");
  REQUIRE(refs.size() == 6);
  CHECK(refs[0].first == "encoder.conv0.w");
  CHECK(refs[1].first == "encoder.conv0.b");
  CHECK(refs[2].first == "encoder.conv1.w");
  CHECK(refs[3].first == "encoder.conv1.b");
  CHECK(refs[4].first == "encoder.proj.w");
  CHECK(refs[5].first == "encoder.proj.b");

  Tape<double> tape;
  EncoderVars vars = load_encoder(tape, params, true);
  const std::vector<Var> vl = var_list(vars);
  CHECK(vl.size() == refs.size());
  for (std::size_t i = 0; i < vl.size(); ++i) {
    CHECK(tape.requires_grad(vl[i]));
    CHECK(tape.value(vl[i]).data == refs[i].second->data);
  }
}

TEST_CASE("momentum update follows the exponential rule") {
  Tensor<double> key_t({2}, {1.0, -2.0});
  Tensor<double> query_t({2}, {0.0, 2.0});
  ParamRefs<double> key = {{"w", &key_t}};
  ParamRefs<double> query = {{"w", &query_t}};

  momentum_update(key, query, 0.999);
  CHECK_THAT(key_t[0], Catch::Matchers::WithinAbs(0.999, 1e-15));
  CHECK_THAT(key_t[1], Catch::Matchers::WithinAbs(0.999 * -2.0 + 0.001 * 2.0, 1e-15));

  momentum_update(key, query, 0.0);
  CHECK(key_t.data == query_t.data);

  // k steps against a fixed query contract the gap by exactly m^k.
  key_t = Tensor<double>({2}, {1.0, -1.0});
  const double m = 0.9;
  double gap = key_t[0] - query_t[0];
  for (int step = 0; step < 20; ++step) momentum_update(key, query, m);
  const double expect = gap * std::pow(m, 20);
  CHECK_THAT(key_t[0] - query_t[0], Catch::Matchers::WithinAbs(expect, 1e-12));

  CHECK_THROWS_AS(momentum_update(key, query, 1.0), copa::ConfigError);
  CHECK_THROWS_AS(momentum_update(key, query, -0.1), copa::ConfigError);

  Tensor<double> wrong_shape({3});
  ParamRefs<double> bad = {{"w", &wrong_shape}};
  CHECK_THROWS_WITH(momentum_update(bad, query, 0.5),
                    Catch::Matchers::ContainsSubstring("\"w\""));
  Tensor<double> renamed({2});
  ParamRefs<double> misnamed = {{"v", &renamed}};
  CHECK_THROWS_AS(momentum_update(misnamed, query, 0.5), copa::ShapeError);
  ParamRefs<double> empty;
  CHECK_THROWS_AS(momentum_update(empty, query, 0.5), copa::ShapeError);
}

TEST_CASE("sgd with momentum and weight decay steps by hand") {
  Tensor<double> p({1}, {1.0});
  ParamRefs<double> params = {{"p", &p}};
  SgdOptimizer<double> opt(0.9, 0.0);
  const std::vector<Tensor<double>> g = {Tensor<double>({1}, {0.5})};

  opt.step(params, g, 0.1);
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.95, 1e-15));
  opt.step(params, g, 0.1);
  // v2 = 0.9*0.5 + 0.5 = 0.95, p2 = 0.95 - 0.095
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.855, 1e-15));

  Tensor<double> q({1}, {2.0});
  ParamRefs<double> params2 = {{"q", &q}};
  SgdOptimizer<double> decay_only(0.0, 0.1);
  const std::vector<Tensor<double>> zero = {Tensor<double>({1}, {0.0})};
  decay_only.step(params2, zero, 1.0);
  CHECK_THAT(q[0], Catch::Matchers::WithinAbs(1.8, 1e-15));

  CHECK_THROWS_AS(opt.step(params, {}, 0.1), copa::ShapeError);
}

TEST_CASE("adam first step moves by roughly lr in the gradient direction") {
  Tensor<double> p({2}, {0.0, 1.0});
  ParamRefs<double> params = {{"p", &p}};
  AdamOptimizer<double> opt(0.9, 0.999, 1e-8, 0.0);
  const std::vector<Tensor<double>> g = {Tensor<double>({2}, {2.0, -3.0})};
  opt.step(params, g, 0.1);
  CHECK(opt.step_count() == 1);
  // After bias correction mhat = g and sqrt(vhat) = |g|, so the step is
  // lr * g / (|g| + eps).
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(-0.1 * 2.0 / (2.0 + 1e-8), 1e-15));
  CHECK_THAT(p[1], Catch::Matchers::WithinAbs(1.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15));

  // Weight decay folds into the gradient before the moment updates.
  Tensor<double> w({1}, {10.0});
  ParamRefs<double> wp = {{"w", &w}};
  AdamOptimizer<double> opt2(0.9, 0.999, 1e-8, 0.01);
  opt2.step(wp, {Tensor<double>({1}, {0.0})}, 0.1);
  const double eff = 0.01 * 10.0;
  CHECK_THAT(w[0], Catch::Matchers::WithinAbs(10.0 - 0.1 * eff / (eff + 1e-8), 1e-12));
}

TEST_CASE("checkpoint round trips arrays and metadata exactly") {
  const fs::path dir = fresh_dir("ckpt");
  const std::string path = (dir / "model.ckpt").string();

  copa::Checkpoint ckpt;
  ckpt.metadata["kind"] = "test";
  ckpt.metadata["step"] = 17;
  ckpt.add_array("w", {2, 3}, {1.0, -2.0, 3.5, 0.0, 1e-300, 12345.678});
  ckpt.add_array("b", {3}, {0.25, 0.5, 0.75});
  CHECK_THROWS_AS(ckpt.add_array("w", {1}, {0.0}), copa::UsageError);
  CHECK_THROWS_AS(ckpt.add_array("bad", {2}, {1.0}), copa::ShapeError);
  ckpt.save(path);

  const copa::Checkpoint back = copa::Checkpoint::load(path);
  CHECK(back.metadata["kind"] == "test");
  CHECK(back.metadata["step"] == 17);
  REQUIRE(back.has_array("w"));
  REQUIRE(back.has_array("b"));
  CHECK(back.array("w").shape == std::vector<std::int64_t>{2, 3});
  CHECK(back.array("w").data == ckpt.array("w").data);
  CHECK(back.array("b").data == ckpt.array("b").data);
  CHECK_THROWS_AS(back.array("missing"), copa::UsageError);

  SECTION("corrupt files are rejected") {
    const std::string junk = (dir / "junk.ckpt").string();
    std::ofstream(junk, std::ios::binary) << "NOTACKPT garbage";
    CHECK_THROWS_AS(copa::Checkpoint::load(junk), copa::FormatError);

    // Truncate a valid file mid-array.
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string cut = (dir / "cut.ckpt").string();
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 20);
    CHECK_THROWS_AS(copa::Checkpoint::load(cut), copa::FormatError);

    CHECK_THROWS_AS(copa::Checkpoint::load((dir / "absent.ckpt").string()), copa::IoError);
  }

  SECTION("param refs store and restore") {
    Tensor<double> t({2, 3}, {9, 9, 9, 9, 9, 9});
    ParamRefs<double> refs = {{"w", &t}};
    copa::checkpoint_read_params(back, refs);
    CHECK(t.data == std::vector<double>{1.0, -2.0, 3.5, 0.0, 1e-300, 12345.678});

    Tensor<double> wrong({3, 2});
    ParamRefs<double> bad = {{"w", &wrong}};
    CHECK_THROWS_AS(copa::checkpoint_read_params(back, bad), copa::ShapeError);
  }

  fs::remove_all(dir);
}
