#include <doctest.h>

#include <cmath>

#include "pvcrack/arch/model.hpp"
#include "pvcrack/common.hpp"
#include "pvcrack/nn/grad_check.hpp"
#include "pvcrack/nn/layers.hpp"
#include "pvcrack/nn/network.hpp"
#include "pvcrack/nn/optim.hpp"

using namespace pvcrack;
using namespace pvcrack::nn;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

TensorD random_tensor_d(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  TensorD t(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d examples") {
  const Tensor x({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  const Tensor w({2, 2, 1, 1}, 1.0f);
  const Tensor b({1}, 0.0f);
  const auto y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 10.0f);

  const auto in = random_tensor({5, 7, 1}, 3);
  const auto id = conv2d(in, Tensor({1, 1, 1, 1}, 1.0f), b, 1, 0);
  CHECK(id.values() == in.values());

  const auto zero = conv2d(Tensor({6, 6, 2}, 0.0f), random_tensor({3, 3, 2, 4}, 5),
                           Tensor({4}, std::vector<float>{1, -2, 3, 0.5f}), 1, 1);
  for (int y0 = 0; y0 < 6; ++y0)
    for (int x0 = 0; x0 < 6; ++x0) {
      CHECK(zero.at(y0, x0, 0) == 1.0f);
      CHECK(zero.at(y0, x0, 1) == -2.0f);
    }
  CHECK_THROWS_AS(conv2d(Tensor({2, 2, 1}), Tensor({3, 3, 1, 1}), b, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({4, 4, 2}), Tensor({3, 3, 1, 1}), b, 1, 0), ShapeError);
}

TEST_CASE("conv output extent formula") {
  for (int in = 1; in <= 12; ++in)
    for (int k = 1; k <= 5; ++k)
      for (int s = 1; s <= 3; ++s)
        for (int p = 0; p <= 2; ++p) {
          const int expect = (in + 2 * p - k) / s + 1;
          if (in + 2 * p - k < 0) {
            CHECK_THROWS_AS(conv_out_extent(in, k, s, p), ShapeError);
          } else {
            CHECK(conv_out_extent(in, k, s, p) == expect);
            const auto y = conv2d(Tensor({in, in, 1}), Tensor({k, k, 1, 2}), Tensor({2}), s, p);
            CHECK(y.shape() == Shape{expect, expect, 2});
          }
        }
}

TEST_CASE("conv2d is linear in its input") {
  const auto w = random_tensor({3, 3, 2, 3}, 1);
  const Tensor b({3}, 0.0f);
  const auto a = random_tensor({7, 7, 2}, 2);
  const auto c = random_tensor({7, 7, 2}, 3);
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0f * a[i] - 0.5f * c[i];
  const auto ya = conv2d(a, w, b, 1, 1), yc = conv2d(c, w, b, 1, 1), ym = conv2d(mix, w, b, 1, 1);
  for (std::size_t i = 0; i < ym.size(); ++i) CHECK(ym[i] == doctest::Approx(2.0f * ya[i] - 0.5f * yc[i]).epsilon(1e-4));
}

TEST_CASE("maxpool examples and tie break") {
  const Tensor x({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  CHECK(maxpool2d(x, 2, 2)[0] == 4.0f);
  const auto in = random_tensor({6, 6, 3}, 4);
  CHECK(maxpool2d(in, 1, 1).values() == in.values());

  const Tensor c({4, 4, 1}, 2.0f);
  std::vector<std::int32_t> argmax;
  const auto y = maxpool2d(c, 2, 2, 0, &argmax);
  for (float v : y.values()) CHECK(v == 2.0f);
  const auto dx = maxpool2d_backward<float>(c.shape(), argmax, Tensor(y.shape(), 1.0f));
  float total = 0.0f;
  for (float v : dx.values()) total += v;
  CHECK(total == 4.0f);
  CHECK(dx.at(0, 0, 0) == 1.0f);  // first in row-major order
  CHECK(dx.at(0, 1, 0) == 0.0f);
  CHECK_THROWS_AS(maxpool2d(Tensor({2, 2, 1}), 3, 1), ShapeError);
}

TEST_CASE("dense examples") {
  const Tensor x({2}, std::vector<float>{1, 2});
  const Tensor w({2, 2}, std::vector<float>{1, 0, 0, 1});
  const auto y = dense(x, w, Tensor({2}, std::vector<float>{1, 1}));
  CHECK(y[0] == 2.0f);
  CHECK(y[1] == 3.0f);
  const auto z = dense(Tensor({2}, 0.0f), random_tensor({2, 3}, 1), Tensor({3}, std::vector<float>{4, 5, 6}));
  CHECK(z.values() == Tensor({3}, std::vector<float>{4, 5, 6}).values());
  CHECK_THROWS_AS(dense(Tensor({3}), w, Tensor({2})), ShapeError);
}

TEST_CASE("activations, pooling and concat") {
  const auto r = relu(Tensor({2}, std::vector<float>{-1, 2}));
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 2.0f);
  const auto s = softmax(Tensor({3}, 7.0f));
  for (float v : s.values()) CHECK(v == doctest::Approx(1.0f / 3.0f));
  const auto g = global_avg_pool(Tensor({2, 2, 1}, std::vector<float>{1, 2, 3, 4}));
  CHECK(g[0] == doctest::Approx(2.5f));

  const auto a = random_tensor({3, 3, 2}, 1), b = random_tensor({3, 3, 1}, 2);
  const auto cat = concat_channels<float>(std::vector<Tensor>{a, b});
  CHECK(cat.shape() == Shape{3, 3, 3});
  CHECK(cat.at(1, 2, 0) == a.at(1, 2, 0));
  CHECK(cat.at(1, 2, 2) == b.at(1, 2, 0));
  CHECK_THROWS_AS(concat_channels<float>(std::vector<Tensor>{a, random_tensor({2, 3, 1}, 3)}), ShapeError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto l = random_tensor({5}, seed, -20, 20);
    Tensor shifted(l.shape());
    for (std::size_t i = 0; i < l.size(); ++i) shifted[i] = l[i] + 13.0f;
    const auto p = softmax(l), q = softmax(shifted);
    double sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-5));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("cross entropy") {
  const auto u = cross_entropy(Tensor({2}, 0.0f), 0);
  CHECK(u.loss == doctest::Approx(std::log(2.0f)));
  const auto big = cross_entropy(Tensor({2}, std::vector<float>{1000.0f, 0.0f}), 0);
  CHECK(std::isfinite(big.loss));
  CHECK(big.loss == doctest::Approx(0.0f));
  CHECK_THROWS_AS(cross_entropy(Tensor({2}, std::vector<float>{NAN, 0.0f}), 0), NumericError);
  CHECK_THROWS(cross_entropy(Tensor({2}, 0.0f), 2));
  const auto gc = grad_check_cross_entropy(random_tensor_d({4}, 9, -3, 3), 2, 1e-6);
  CHECK(gc.max_rel_error < 1e-6);
}

TEST_CASE("optimizers") {
  OptimConfig sgd;
  sgd.kind = OptimKind::SGD;
  sgd.learning_rate = 0.1;
  Optimizer<float> o(sgd);
  std::vector<Tensor> p{Tensor({1}, 1.0f)};
  std::vector<Tensor> g{Tensor({1}, 1.0f)};
  o.step(p, g);
  CHECK(p[0][0] == doctest::Approx(0.9f));

  Optimizer<float> z(OptimConfig{});
  std::vector<Tensor> q{random_tensor({4}, 1)};
  const auto before = q[0].values();
  std::vector<Tensor> zero{Tensor({4}, 0.0f)};
  z.step(q, zero);
  CHECK(q[0].values() == before);

  for (float scale : {1e-3f, 1.0f, 1e3f}) {
    Optimizer<double> adam(OptimConfig{});
    std::vector<TensorD> w{TensorD({1}, 0.0)};
    std::vector<TensorD> gw{TensorD({1}, static_cast<double>(scale))};
    adam.step(w, gw);
    CHECK(std::abs(w[0][0]) == doctest::Approx(1e-3).epsilon(1e-3));
  }

  std::vector<Tensor> frozen{Tensor({2}, 1.0f), Tensor({2}, 1.0f)};
  std::vector<Tensor> fg{Tensor({2}, 1.0f), Tensor({2}, 1.0f)};
  Optimizer<float> f(sgd);
  f.step(frozen, fg, 1);
  CHECK(frozen[0][0] == 1.0f);
  CHECK(frozen[1][0] == doctest::Approx(0.9f));

  OptimConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = {};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParamError);
}

TEST_CASE("kernels are deterministic") {
  const auto m = arch::build_model(arch::reference_model_2(32), 4);
  const auto x = random_tensor({32, 32, 1}, 6, 0, 1);
  const auto a = forward<float>(m.spec.layers, m.params, x);
  const auto b = forward<float>(m.spec.layers, m.params, x);
  CHECK(a.values() == b.values());
}

namespace {

std::vector<TensorD> random_params(std::span<const LayerSpec> layers, std::uint64_t seed) {
  std::vector<TensorD> out;
  std::uint64_t s = seed;
  for (const auto& shape : param_shapes(layers)) out.push_back(random_tensor_d(shape, ++s, -0.8, 0.8));
  return out;
}

}  // namespace

TEST_CASE("gradient checks per layer kind") {
  SUBCASE("conv2d 8x8x2") {
    const std::vector<LayerSpec> layers{LayerSpec::conv(2, 3, 3, 1, 1)};
    const auto r = grad_check(layers, random_params(layers, 1), random_tensor_d({8, 8, 2}, 2), 1e-5);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.entries > 0);
  }
  SUBCASE("strided conv") {
    const std::vector<LayerSpec> layers{LayerSpec::conv(2, 2, 3, 2, 0)};
    CHECK(grad_check(layers, random_params(layers, 3), random_tensor_d({7, 7, 2}, 4), 1e-5).max_rel_error < 1e-6);
  }
  SUBCASE("dense") {
    const std::vector<LayerSpec> layers{LayerSpec::dense(6, 4)};
    CHECK(grad_check(layers, random_params(layers, 5), random_tensor_d({6}, 6), 1e-5).max_rel_error < 1e-6);
  }
  SUBCASE("maxpool away from ties") {
    const std::vector<LayerSpec> layers{LayerSpec::maxpool(2, 2)};
    CHECK(grad_check(layers, {}, random_tensor_d({6, 6, 2}, 7), 1e-6).max_rel_error < 1e-6);
  }
  SUBCASE("global average pool") {
    const std::vector<LayerSpec> layers{LayerSpec::global_avg_pool()};
    CHECK(grad_check(layers, {}, random_tensor_d({4, 4, 3}, 8), 1e-5).max_rel_error < 1e-6);
  }
  SUBCASE("relu away from zero") {
    const std::vector<LayerSpec> layers{LayerSpec::relu()};
    auto x = random_tensor_d({5, 5, 2}, 9);
    for (auto& v : x.values()) v = v < 0 ? v - 0.1 : v + 0.1;
    CHECK(grad_check(layers, {}, x, 1e-6).max_rel_error < 1e-6);
  }
  SUBCASE("inception block") {
    const std::vector<LayerSpec> layers{arch::make_inception_block(2, 2, 1, 2, 1, 2, 1)};
    CHECK(grad_check(layers, random_params(layers, 10), random_tensor_d({5, 5, 2}, 11), 1e-6).max_rel_error < 1e-6);
  }
}
