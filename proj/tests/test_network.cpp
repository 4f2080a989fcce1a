#include <random>

#include "doctest.h"
#include "rankiqa/errors.hpp"
#include "rankiqa/gradcheck.hpp"
#include "rankiqa/kernels.hpp"
#include "rankiqa/network.hpp"
#include "rankiqa/reference_kernels.hpp"
#include "test_support.hpp"

using namespace rankiqa;
using namespace rankiqa::testing;

TEST_SUITE("tensor_core") {

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(t.reshape({5, 5}), ShapeError);
  t.reshape({6, 4});
  CHECK(t.dim(0) == 6);
  t[3] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("single fully connected identity layer") {
  NetworkSpec spec{1, {LayerDesc::global_avg_pool(), LayerDesc::fully_connected(1, 1)}};
  ParameterStore params = make_parameters(spec);
  params.at("fc1.weight").value[0] = 1.0f;
  params.at("fc1.bias").value[0] = 0.0f;
  const Tensor scores = forward(spec, params, Tensor({1, 1, 1, 1}, {3.0f}));
  CHECK(scores.shape() == Shape{1});
  CHECK(scores[0] == 3.0f);
}

TEST_CASE("fully connected derivative") {
  NetworkSpec spec{1, {LayerDesc::global_avg_pool(), LayerDesc::fully_connected(1, 1)}};
  ParameterStore params = make_parameters(spec);
  params.at("fc1.weight").value[0] = 0.7f;
  ActivationCache cache;
  forward(spec, params, Tensor({1, 1, 1, 1}, {2.5f}), &cache);
  const float one = 1.0f;
  backward(spec, params, cache, std::span<const float>(&one, 1));
  CHECK(params.at("fc1.weight").grad[0] == 2.5f);
  CHECK(params.at("fc1.bias").grad[0] == 1.0f);
}

TEST_CASE("identity convolution and relu are exact") {
  const Tensor img = random_tensor({2, 1, 7, 5}, 11, -1.0f, 1.0f);
  Tensor out(img.shape());
  const ConvGeometry g{2, 1, 7, 5, 1, 1, 1, 0};
  const float w = 1.0f, b = 0.0f;
  kernels::conv2d_forward(g, img.data().data(), &w, &b, out.data().data());
  CHECK(out == img);

  std::vector<float> in{-1.0f, 0.0f, 2.0f}, r(3);
  kernels::relu_forward(3, in.data(), r.data());
  CHECK(r == std::vector<float>{0.0f, 0.0f, 2.0f});

  const Tensor pos = random_tensor({50}, 4, 0.0f, 2.0f);
  Tensor rp(pos.shape());
  kernels::relu_forward(pos.size(), pos.data().data(), rp.data().data());
  CHECK(rp == pos);
}

TEST_CASE("spec validation") {
  NetworkSpec::desk_default().validate();
  NetworkSpec bad_channels{1, {LayerDesc::conv2d(3, 2, 4), LayerDesc::global_avg_pool(),
                               LayerDesc::fully_connected(4, 1)}};
  CHECK_THROWS_AS(bad_channels.validate(), ShapeError);
  NetworkSpec two_outputs{1, {LayerDesc::global_avg_pool(), LayerDesc::fully_connected(1, 2)}};
  CHECK_THROWS_AS(two_outputs.validate(), ShapeError);
  NetworkSpec bad_fc{1, {LayerDesc::conv2d(1, 1, 3), LayerDesc::global_avg_pool(),
                         LayerDesc::fully_connected(4, 1)}};
  CHECK_THROWS_AS(bad_fc.validate(), ShapeError);

  const NetworkSpec d = NetworkSpec::desk_default();
  CHECK(NetworkSpec::parse(d.to_string()) == d);
  CHECK_THROWS_AS(NetworkSpec::parse("in=1;conv2d(3,1)"), ConfigError);
  CHECK_THROWS_AS(NetworkSpec::parse("in=1;softmax"), ConfigError);
}

TEST_CASE("forward shape errors are descriptive") {
  Model m = Model::create(NetworkSpec::desk_default(), 1);
  try {
    forward(m.spec, m.params, Tensor({2, 3, 48, 48}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channels") != std::string::npos);
  }
  CHECK_THROWS_AS(forward(m.spec, m.params, Tensor({2, 48, 48})), ShapeError);
  CHECK_THROWS_AS(forward(m.spec, m.params, Tensor({2, 1, 2, 2})), ShapeError);
}

TEST_CASE("backward without forward is a state error") {
  Model m = Model::create(NetworkSpec::desk_default(), 1);
  ActivationCache empty;
  std::vector<float> g(4, 1.0f);
  CHECK_THROWS_AS(backward(m.spec, m.params, empty, g), StateError);

  ActivationCache cache;
  forward(m.spec, m.params, Tensor({2, 1, 16, 16}, 0.5f), &cache);
  CHECK_THROWS_AS(backward(m.spec, m.params, cache, g), ShapeError);
}

TEST_CASE("forward is pure and initialisation is seeded") {
  Model a = Model::create(NetworkSpec::desk_default(), 42);
  Model b = Model::create(NetworkSpec::desk_default(), 42);
  Model c = Model::create(NetworkSpec::desk_default(), 43);
  CHECK(a.params[0].value == b.params[0].value);
  CHECK_FALSE(a.params[0].value == c.params[0].value);
  const Tensor batch = random_tensor({4, 1, 24, 24}, 5);
  CHECK(forward(a.spec, a.params, batch) == forward(a.spec, a.params, batch));
  for (const auto& p : a.params) {
    CHECK(p.grad.shape() == p.value.shape());
    CHECK(p.value.all_finite());
  }
  CHECK(a.params[0].name == "conv1.weight");
  CHECK(a.params[a.params.size() - 1].name == "fc1.bias");
}

TEST_CASE("zero upstream gradient and additive accumulation") {
  Model m = Model::create(NetworkSpec::desk_default(), 7);
  const Tensor batch = random_tensor({3, 1, 20, 20}, 9);
  ActivationCache cache;
  forward(m.spec, m.params, batch, &cache);
  backward(m.spec, m.params, cache, std::vector<float>(3, 0.0f));
  for (const auto& p : m.params)
    for (float g : p.grad.data()) CHECK(g == 0.0f);

  const std::vector<float> up{0.5f, -1.0f, 2.0f};
  backward(m.spec, m.params, cache, up);
  const auto once = flatten_grads(m.params);
  backward(m.spec, m.params, cache, up);
  const auto twice = flatten_grads(m.params);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2.0f * once[i]);
  m.params.zero_grad();
  for (float g : flatten_grads(m.params)) CHECK(g == 0.0f);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    ConvGeometry g;
    g.batch = 1 + rng() % 3;
    g.in_ch = 1 + rng() % 3;
    g.out_ch = 1 + rng() % 4;
    g.kernel = 1 + rng() % 4;
    g.stride = 1 + rng() % 2;
    g.pad = rng() % 3;
    g.in_h = g.kernel + rng() % 9;
    g.in_w = g.kernel + rng() % 9;
    if (!g.valid()) continue;
    const std::size_t out_n = g.batch * g.out_ch * g.out_h() * g.out_w();
    const auto in = random_tensor({g.batch * g.in_ch * g.in_h * g.in_w}, rng(), -1, 1);
    const auto w = random_tensor({g.out_ch * g.in_ch * g.kernel * g.kernel}, rng(), -1, 1);
    const auto b = random_tensor({g.out_ch}, rng(), -1, 1);
    const auto gout = random_tensor({out_n}, rng(), -1, 1);

    std::vector<float> o1(out_n), o2(out_n);
    kernels::conv2d_forward(g, in.data().data(), w.data().data(), b.data().data(), o1.data());
    reference::conv2d_forward(g, in.data().data(), w.data().data(), b.data().data(), o2.data());
    CHECK(o1 == o2);

    std::vector<float> gi1(in.size()), gi2(in.size());
    kernels::conv2d_backward_input(g, gout.data().data(), w.data().data(), gi1.data());
    reference::conv2d_backward_input(g, gout.data().data(), w.data().data(), gi2.data());
    CHECK(gi1 == gi2);

    std::vector<float> gw1(w.size(), 0.25f), gw2(w.size(), 0.25f), gb1(g.out_ch), gb2(g.out_ch);
    kernels::conv2d_backward_params(g, in.data().data(), gout.data().data(), gw1.data(), gb1.data());
    reference::conv2d_backward_params(g, in.data().data(), gout.data().data(), gw2.data(), gb2.data());
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);
  }

  const PoolGeometry pg{2, 3, 9, 8, 2};
  const auto pin = random_tensor({2 * 3 * 9 * 8}, 77);
  const std::size_t pout = 2 * 3 * pg.out_h() * pg.out_w();
  std::vector<float> p1(pout), p2(pout);
  std::vector<std::uint32_t> a1(pout), a2(pout);
  kernels::maxpool_forward(pg, pin.data().data(), p1.data(), a1.data());
  reference::maxpool_forward(pg, pin.data().data(), p2.data(), a2.data());
  CHECK(p1 == p2);
  CHECK(a1 == a2);

  const auto fin = random_tensor({3 * 5}, 1), fw = random_tensor({2 * 5}, 2), fb = random_tensor({2}, 3);
  const auto fg = random_tensor({3 * 2}, 4);
  std::vector<float> f1(6), f2(6), gx1(15), gx2(15), gw1(10), gw2(10), gb1(2), gb2(2);
  kernels::fc_forward(3, 5, 2, fin.data().data(), fw.data().data(), fb.data().data(), f1.data());
  reference::fc_forward(3, 5, 2, fin.data().data(), fw.data().data(), fb.data().data(), f2.data());
  CHECK(f1 == f2);
  kernels::fc_backward(3, 5, 2, fin.data().data(), fw.data().data(), fg.data().data(), gx1.data(), gw1.data(), gb1.data());
  reference::fc_backward(3, 5, 2, fin.data().data(), fw.data().data(), fg.data().data(), gx2.data(), gw2.data(), gb2.data());
  CHECK(gx1 == gx2);
  CHECK(gw1 == gw2);
  CHECK(gb1 == gb2);
}

TEST_CASE("float forward agrees with the 64-bit reference forward") {
  Model m = Model::create(NetworkSpec::desk_default(), 3);
  const Tensor batch = random_tensor({3, 1, 32, 32}, 8);
  const Tensor f = forward(m.spec, m.params, batch);
  const auto d = reference_forward(m.spec, to_double(m.params), batch);
  for (std::size_t i = 0; i < 3; ++i) CHECK(f[i] == doctest::Approx(d[i]).epsilon(1e-5));
}

TEST_CASE("float backward agrees with the 64-bit reference backward") {
  Model m = Model::create(NetworkSpec::desk_default(), 4);
  const Tensor batch = random_tensor({4, 1, 32, 32}, 9);
  const std::vector<float> up{0.5f, -1.0f, 2.0f, 0.25f};
  ActivationCache cache;
  forward(m.spec, m.params, batch, &cache);
  m.params.zero_grad();
  backward(m.spec, m.params, cache, up);
  const auto values = to_double(m.params);
  auto grads = zeros_like(values);
  const std::vector<double> upd(up.begin(), up.end());
  reference_backward(m.spec, values, batch, upd, grads);
  const double rel = relative_l2(flatten_grads(m.params), flatten(grads));
  INFO("relative l2 " << rel);
  CHECK(rel < 1e-5);
}

TEST_CASE("backward matches central finite differences on random networks") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t side = 0;
    const NetworkSpec spec = random_network(rng, side);
    Model m = Model::create(spec, rng());
    const std::size_t M = 1 + rng() % 16;
    const Tensor batch = random_tensor({M, spec.in_channels, side, side}, rng());
    const auto weights = random_tensor({M}, rng(), -1.0f, 1.0f);
    // Loss = sum_i w_i * score_i, whose parameter gradient is backward(w).
    const ScoreLoss linear = [&](std::span<const double> s, std::vector<double>* g) {
      double total = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) total += weights[i] * s[i];
      if (g) g->assign(weights.data().begin(), weights.data().end());
      return total;
    };
    GradCheckOptions opts;
    opts.samples = 60;
    opts.seed = rng();
    const auto report = gradient_check(spec, m.params, batch, linear, opts);
    INFO("spec " << spec.to_string() << " M=" << M << " max rel " << report.max_rel_error);
    CHECK(report.passed());
    CHECK(report.max_rel_error < 1e-4);
  }
}

}  // TEST_SUITE
