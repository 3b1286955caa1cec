#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "deepheart/model.hpp"
#include "deepheart/rng.hpp"

namespace md = deepheart::model;
namespace ad = deepheart::autodiff;
using deepheart::Philox;

namespace {

ad::Tensor<float> random_input(Philox& rng, std::size_t len) {
  ad::Tensor<float> x({len, 3});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  return x;
}

// Closed-form parameter count of the classifier network.
std::size_t expected_count(const md::ModelConfig& c) {
  const std::size_t w = c.width, h = w / 2, k = c.tasks.size();
  std::size_t n = c.initial_filter * 3 * w + w;
  n += (c.conv_depth - 1) * (c.residual_filter * w * w + w);
  n += c.lstm_depth * 2 * (w * 4 * h + h * 4 * h + 4 * h);
  n += w * k + k;
  return n;
}

md::ModelConfig small() {
  md::ModelConfig c;
  c.width = 8;
  c.conv_depth = 2;
  c.lstm_depth = 1;
  c.initial_filter = 5;
  return c;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("default network maps 4096 steps to 512 outputs per task") {
    md::ModelConfig cfg;
    const auto store = md::build_parameters<float>(cfg, md::Head::Classifier, 1);
    Philox rng(2);
    const auto out = md::predict(store, cfg, md::Head::Classifier, random_input(rng, 4096));
    CHECK(out.dim(0) == 512);
    CHECK(out.dim(1) == cfg.tasks.size());
    CHECK(cfg.output_length(4096) == 512);
  }

  TEST_CASE("hyperparameter grid has 22 distinct cells that all build and run") {
    const auto grid = md::hyperparameter_grid(deepheart::sensorstream::default_tasks());
    REQUIRE(grid.size() == 22);
    std::set<std::uint64_t> prints;
    Philox rng(3);
    const auto x = random_input(rng, 200);
    for (const auto& cfg : grid) {
      prints.insert(cfg.fingerprint());
      const auto store = md::build_parameters<float>(cfg, md::Head::Classifier, 4);
      CHECK(store.element_count() == expected_count(cfg));
      const auto out = md::predict(store, cfg, md::Head::Classifier, x);
      CHECK(out.dim(0) == cfg.output_length(200));
      CHECK(out.all_finite());
    }
    CHECK(prints.size() == 22);
  }

  TEST_CASE("classifier outputs stay in [-1, 1] for any input length") {
    const auto cfg = small();
    const auto store = md::build_parameters<float>(cfg, md::Head::Classifier, 5);
    Philox rng(6);
    for (std::size_t len : {1u, 2u, 3u, 7u, 64u, 333u}) {
      ad::Tensor<float> x({len, 3});
      for (auto& v : x.values()) v = static_cast<float>(50.0 * rng.normal());
      const auto out = md::predict(store, cfg, md::Head::Classifier, x);
      CHECK(out.dim(0) == cfg.output_length(len));
      for (float v : out.values()) CHECK(std::abs(v) <= 1.0f);
    }
  }

  TEST_CASE("autoencoder reconstructs the input shape, heuristic head has four outputs") {
    const auto cfg = small();
    Philox rng(7);
    const auto x = random_input(rng, 37);
    const auto ae = md::build_parameters<float>(cfg, md::Head::Autoencoder, 8);
    CHECK(md::predict(ae, cfg, md::Head::Autoencoder, x).shape() == std::vector<std::size_t>{37, 3});
    const auto hh = md::build_parameters<float>(cfg, md::Head::Heuristic, 8);
    CHECK(md::predict(hh, cfg, md::Head::Heuristic, x).shape() ==
          std::vector<std::size_t>{cfg.output_length(37), md::kHeuristicOutputs});
  }

  TEST_CASE("zeroed residual branch is the identity") {
    auto cfg = small();
    cfg.lstm_depth = 0;
    auto store = md::build_parameters<float>(cfg, md::Head::Classifier, 9);
    store.at("res1/weight").value.fill(0.0f);
    Philox rng(10);
    const auto x = random_input(rng, 16);
    ad::Tape<float> tape(false);
    md::Binder<float> bind(tape, store);
    const auto enc = md::encode(bind, tape.constant(x), cfg, {});
    // Same stack without the residual unit: conv0, relu, pool, pool.
    auto h = ad::relu(ad::conv1d(tape.constant(x), bind("conv0/weight"), bind("conv0/bias")));
    h = ad::maxpool1d(ad::maxpool1d(h, 2), 2);
    CHECK(enc.features.value() == h.value());
  }

  TEST_CASE("initialization is keyed by name and seed") {
    const auto cfg = small();
    const auto a = md::build_parameters<float>(cfg, md::Head::Classifier, 1);
    const auto b = md::build_parameters<float>(cfg, md::Head::Autoencoder, 1);
    const auto c = md::build_parameters<float>(cfg, md::Head::Classifier, 2);
    for (const auto& p : a.params()) {
      if (md::is_encoder_parameter(p.name)) CHECK(p.value == b.at(p.name).value);
    }
    CHECK_FALSE(a.at("conv0/weight").value == c.at("conv0/weight").value);
    // Forget gate biases start at one, the rest at zero.
    const auto& bias = a.at("lstm0/fw/bias").value;
    const std::size_t h = cfg.width / 2;
    for (std::size_t k = 0; k < bias.size(); ++k) CHECK(bias[k] == ((k >= h && k < 2 * h) ? 1.0f : 0.0f));
  }

  TEST_CASE("encoder names are shared across heads and head names are not") {
    const auto cfg = small();
    std::set<std::string> enc;
    for (auto head : {md::Head::Classifier, md::Head::Autoencoder, md::Head::Heuristic}) {
      std::set<std::string> names;
      for (const auto& [name, shape] : md::parameter_shapes(cfg, head)) {
        if (md::is_encoder_parameter(name)) names.insert(name);
      }
      if (enc.empty()) enc = names;
      CHECK(names == enc);
    }
    CHECK_FALSE(md::is_encoder_parameter("head/weight"));
    CHECK_FALSE(md::is_encoder_parameter("dec0/weight"));
    CHECK_FALSE(md::is_encoder_parameter("hrv_head/bias"));
  }

  TEST_CASE("config validation, fingerprint and parsing") {
    auto cfg = small();
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.width = 7;
    CHECK_THROWS_AS(bad.validate(), deepheart::UsageError);
    bad = cfg;
    bad.conv_depth = 0;
    CHECK_THROWS_AS(bad.validate(), deepheart::UsageError);
    bad = cfg;
    bad.dropout_p = 1.0;
    CHECK_THROWS_AS(bad.validate(), deepheart::UsageError);
    auto other = cfg;
    other.dropout_p = 0.3;
    CHECK(other.fingerprint() != cfg.fingerprint());
    std::istringstream text("model.width = 16\nmodel.lstm_depth = 3\n");
    auto kv = deepheart::KeyValueConfig::parse(text);
    const auto parsed = md::model_config_from(kv, cfg);
    CHECK(parsed.width == 16);
    CHECK(parsed.lstm_depth == 3);
    CHECK(parsed.conv_depth == cfg.conv_depth);
  }

  TEST_CASE("wrong input channel count is rejected") {
    const auto cfg = small();
    const auto store = md::build_parameters<float>(cfg, md::Head::Classifier, 1);
    CHECK_THROWS_AS(md::predict(store, cfg, md::Head::Classifier, ad::Tensor<float>({10, 2})), std::invalid_argument);
  }

  TEST_CASE("standardizer maps constant columns to zero") {
    const auto s = md::Standardizer::fit({{1.0, 5.0}, {3.0, 5.0}});
    const auto z = s.apply({2.0, 5.0});
    CHECK(z[0] == doctest::Approx(0.0));
    CHECK(z[1] == 0.0);
  }

  TEST_CASE("logistic regression separates a linear problem") {
    Philox rng(12);
    md::BinaryDataset data;
    for (int i = 0; i < 400; ++i) {
      const double a = rng.normal(), b = rng.normal();
      data.x.push_back({a, b});
      data.y.push_back(a + 0.5 * b > 0 ? 1 : -1);
    }
    const auto m = md::LogisticModel::fit(data);
    int correct = 0;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      const double p = m.predict(data.x[i]);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      correct += (p > 0.5) == (data.y[i] > 0);
    }
    CHECK(correct > 380);
    CHECK(m.weights()[0] > m.weights()[1]);
  }

  TEST_CASE("mlp learns a problem logistic regression cannot") {
    Philox rng(13);
    auto make = [&](int n) {
      md::BinaryDataset d;
      for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        d.x.push_back({a, b});
        d.y.push_back(a * b > 0 ? 1 : -1);
      }
      return d;
    };
    const auto train = make(600), tune = make(200), test = make(200);
    md::MlpOptions opt;
    opt.hidden = 16;
    opt.learning_rate = 1e-2;
    opt.seed = 1;
    const auto m = md::MlpModel::fit(train, tune, opt);
    int correct = 0;
    for (std::size_t i = 0; i < test.x.size(); ++i) correct += (m.predict(test.x[i]) > 0.5) == (test.y[i] > 0);
    CHECK(correct > 170);
    CHECK(m.epochs_run() >= 1);
    // Same seed, same model.
    const auto again = md::MlpModel::fit(train, tune, opt);
    CHECK(again.predict(test.x[0]) == m.predict(test.x[0]));
  }

  TEST_CASE("trainable needs two examples of each class") {
    md::BinaryDataset d{{{0.0}, {1.0}, {2.0}}, {1, 1, -1}};
    CHECK_FALSE(md::trainable(d));
    d.x.push_back({3.0});
    d.y.push_back(-1);
    CHECK(md::trainable(d));
  }
}
