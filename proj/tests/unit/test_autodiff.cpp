#include <doctest.h>

#include <cmath>
#include <cstring>

#include "deepheart/autodiff.hpp"
#include "deepheart/model.hpp"
#include "deepheart/rng.hpp"

namespace ad = deepheart::autodiff;
using deepheart::Philox;

namespace {

using P = ad::Parameter<double>;

ad::Tensor<double> random_tensor(Philox& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  ad::Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Weighted sum so every output coordinate gets a distinct gradient.
ad::Var<double> probe(ad::Var<double> out, std::uint64_t seed = 99) {
  Philox rng(seed);
  auto w = random_tensor(rng, out.shape());
  ad::Tensor<double> ones(out.shape(), 1.0);
  auto& tape = *out.tape;
  auto shifted = ad::add(out, tape.constant(w));
  return ad::masked_sq_sum(shifted, ad::Tensor<double>(out.shape()), ones);
}

double check(const ad::LossFn<double>& loss, std::vector<P> params) {
  auto r = ad::grad_check<double>(loss, params, 1e-5, 3, 400);
  INFO("worst " << r.worst_parameter << "[" << r.worst_index << "] analytic " << r.analytic << " numeric "
                << r.numeric);
  CHECK(r.coordinates > 0);
  return r.max_rel_error;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("gradient checks for every primitive") {
    Philox rng(1);
    SUBCASE("matmul") {
      CHECK(check([](auto&, const auto& v) { return probe(ad::matmul(v[0], v[1])); },
                  {P("a", random_tensor(rng, {4, 3})), P("b", random_tensor(rng, {3, 5}))}) < 1e-5);
    }
    SUBCASE("add_bias add scale") {
      CHECK(check(
                [](auto&, const auto& v) {
                  return probe(ad::scale(ad::add(ad::add_bias(v[0], v[1]), v[0]), 0.7));
                },
                {P("x", random_tensor(rng, {6, 3})), P("b", random_tensor(rng, {3}))}) < 1e-5);
    }
    SUBCASE("tanh sigmoid relu") {
      CHECK(check([](auto&, const auto& v) { return probe(ad::tanh(v[0])); }, {P("x", random_tensor(rng, {5, 4}))}) <
            1e-5);
      CHECK(check([](auto&, const auto& v) { return probe(ad::sigmoid(v[0])); },
                  {P("x", random_tensor(rng, {5, 4}))}) < 1e-5);
      CHECK(check([](auto&, const auto& v) { return probe(ad::relu(v[0])); }, {P("x", random_tensor(rng, {5, 4}))}) <
            1e-5);
    }
    SUBCASE("sequence plumbing") {
      CHECK(check(
                [](auto&, const auto& v) {
                  return probe(ad::reverse_time(ad::concat_channels(v[0], v[1])));
                },
                {P("a", random_tensor(rng, {7, 2})), P("b", random_tensor(rng, {7, 3}))}) < 1e-5);
      CHECK(check([](auto&, const auto& v) { return probe(ad::nearest_upsample1d(v[0], 2, 9)); },
                  {P("x", random_tensor(rng, {5, 3}))}) < 1e-5);
    }
    SUBCASE("conv1d with even and odd filters") {
      for (std::size_t filter : {1u, 4u, 5u, 12u}) {
        CHECK(check([](auto&, const auto& v) { return probe(ad::conv1d(v[0], v[1], v[2])); },
                    {P("x", random_tensor(rng, {9, 3})), P("w", random_tensor(rng, {filter, 3, 4}, 0.5)),
                     P("b", random_tensor(rng, {4}))}) < 1e-5);
      }
    }
    SUBCASE("maxpool1d with a partial window") {
      CHECK(check([](auto&, const auto& v) { return probe(ad::maxpool1d(v[0], 2)); },
                  {P("x", random_tensor(rng, {7, 3}))}) < 1e-5);
    }
    SUBCASE("lstm and bidirectional lstm") {
      const std::size_t in = 3, h = 4;
      CHECK(check([](auto&, const auto& v) { return probe(ad::lstm(v[0], v[1], v[2], v[3])); },
                  {P("x", random_tensor(rng, {6, in})), P("wx", random_tensor(rng, {in, 4 * h}, 0.5)),
                   P("wh", random_tensor(rng, {h, 4 * h}, 0.5)), P("b", random_tensor(rng, {4 * h}, 0.5))}) < 1e-5);
      CHECK(check(
                [](auto&, const auto& v) {
                  return probe(ad::bidirectional_lstm<double>(v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}));
                },
                {P("x", random_tensor(rng, {5, in})), P("fwx", random_tensor(rng, {in, 4 * h}, 0.5)),
                 P("fwh", random_tensor(rng, {h, 4 * h}, 0.5)), P("fb", random_tensor(rng, {4 * h}, 0.5)),
                 P("bwx", random_tensor(rng, {in, 4 * h}, 0.5)), P("bwh", random_tensor(rng, {h, 4 * h}, 0.5)),
                 P("bb", random_tensor(rng, {4 * h}, 0.5))}) < 1e-5);
    }
    SUBCASE("dropout and noise with a fixed stream") {
      CHECK(check(
                [](auto&, const auto& v) {
                  Philox r(5);
                  return probe(ad::gaussian_noise(ad::dropout(v[0], 0.3, true, r), 0.1, r, 4));
                },
                {P("x", random_tensor(rng, {6, 3}))}) < 1e-5);
    }
    SUBCASE("masked losses") {
      ad::Tensor<double> y = random_tensor(rng, {4, 3});
      ad::Tensor<double> mask({4, 3});
      for (std::size_t j = 0; j < mask.size(); ++j) mask[j] = (j % 3 == 0) ? 0.0 : 1.0;
      CHECK(check([&](auto&, const auto& v) { return ad::masked_sse(v[0], y, mask); },
                  {P("p", random_tensor(rng, {4, 3}))}) < 1e-5);
    }
  }

  TEST_CASE("backward visits shared nodes once and accumulates") {
    ad::Tape<double> tape;
    auto x = tape.input(ad::Tensor<double>({1, 1}, {3.0}));
    auto y = ad::add(x, x);  // 2x
    auto z = ad::matmul(y, x);  // 2x^2, dz/dx = 4x
    tape.backward(z);
    CHECK(tape.grad(x)[0] == doctest::Approx(12.0));
  }

  TEST_CASE("non-finite values are numeric errors naming the op") {
    ad::Tape<double> tape;
    auto x = tape.input(ad::Tensor<double>({1, 1}, {1e300}));
    try {
      (void)ad::matmul(x, x);
      FAIL("expected NumericError");
    } catch (const deepheart::NumericError& e) {
      CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    }
  }

  TEST_CASE("shape errors name both shapes") {
    ad::Tape<double> tape;
    auto a = tape.input(ad::Tensor<double>({2, 3}));
    auto b = tape.input(ad::Tensor<double>({2, 3}));
    try {
      (void)ad::matmul(a, b);
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("[2x3] x [2x3]") != std::string::npos);
    }
  }

  TEST_CASE("no-grad tape refuses backward and saves nothing") {
    ad::Tape<double> tape(false);
    auto x = tape.input(ad::Tensor<double>({1, 1}, {2.0}));
    auto y = ad::tanh(x);
    CHECK_FALSE(tape.requires_grad(y));
    CHECK_THROWS_AS(tape.backward(y), std::logic_error);
  }

  TEST_CASE("maxpool ties resolve to the earliest row") {
    ad::Tape<double> tape;
    auto x = tape.input(ad::Tensor<double>({3, 1}, {1.0, 1.0, 0.5}));
    auto y = ad::maxpool1d(x, 2);
    REQUIRE(y.dim(0) == 2);
    tape.backward(ad::masked_sq_sum(y, ad::Tensor<double>({2, 1}), ad::Tensor<double>({2, 1}, 1.0)));
    auto g = tape.grad(x);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 1.0);
  }

  TEST_CASE("dropout is the identity outside training and inverted inside") {
    Philox rng(3);
    ad::Tape<double> tape;
    auto x = tape.input(ad::Tensor<double>({100, 10}, 1.0));
    CHECK(ad::dropout(x, 0.5, false, rng).value() == x.value());
    const auto& d = ad::dropout(x, 0.5, true, rng).value();
    std::size_t zeros = 0;
    for (double v : d.values()) {
      CHECK((v == 0.0 || v == 2.0));
      zeros += v == 0.0;
    }
    CHECK(zeros > 400);
    CHECK(zeros < 600);
  }

  // Targets at masked positions never reach the loss or any gradient.
  TEST_CASE("masking invariance is bitwise on random cases") {
    deepheart::model::ModelConfig cfg;
    cfg.width = 8;
    cfg.conv_depth = 2;
    cfg.lstm_depth = 1;
    cfg.initial_filter = 4;
    cfg.tasks = {"a", "b", "c"};
    const auto store = deepheart::model::build_parameters<double>(cfg, deepheart::model::Head::Classifier, 11);
    Philox rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t len = 8 + rng.below(40);
      auto x = random_tensor(rng, {len, 3});
      const std::size_t out_len = cfg.output_length(len);
      ad::Tensor<double> y({out_len, 3}), mask({out_len, 3});
      for (std::size_t j = 0; j < y.size(); ++j) {
        y[j] = rng.bernoulli(0.5) ? 1.0 : -1.0;
        mask[j] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      }
      auto y2 = y;
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (mask[j] == 0.0) y2[j] = rng.normal() * 1e6;
      }
      auto run = [&](const ad::Tensor<double>& target) {
        ad::Tape<double> tape;
        deepheart::model::Binder<double> bind(tape, store);
        auto out = deepheart::model::forward(bind, tape.constant(x), cfg, deepheart::model::Head::Classifier);
        auto loss = ad::masked_sse(out, target, mask);
        tape.backward(loss);
        std::vector<ad::Tensor<double>> grads;
        for (const auto& p : store.params()) grads.emplace_back(p.value.shape());
        tape.accumulate_parameter_grads(grads);
        return std::make_pair(tape.value(loss)[0], grads);
      };
      const auto [l1, g1] = run(y);
      const auto [l2, g2] = run(y2);
      CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
      bool same = true;
      for (std::size_t i = 0; i < g1.size(); ++i) {
        same = same && std::memcmp(g1[i].data(), g2[i].data(), g1[i].size() * sizeof(double)) == 0;
      }
      CHECK(same);
    }
  }
}
