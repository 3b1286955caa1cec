#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepheart/autodiff.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/kvconfig.hpp"
#include "deepheart/rng.hpp"
#include "deepheart/sensorstream.hpp"

namespace deepheart::model {

using autodiff::Parameter;
using autodiff::Tape;
using autodiff::Tensor;
using autodiff::Var;

struct ModelConfig {
  int width = 128;
  int conv_depth = 3;
  int lstm_depth = 4;
  int initial_filter = 12;
  int residual_filter = 5;
  double dropout_p = 0.2;
  int pool = 2;
  std::vector<std::string> tasks = sensorstream::default_tasks();
  int input_channels = static_cast<int>(sensorstream::kInputChannels);

  // One pool per conv layer.
  int pool_stages() const { return conv_depth; }
  std::size_t output_length(std::size_t input_len) const {
    return sensorstream::pooled_length(input_len, pool_stages(), pool);
  }

  // Throws UsageError naming the offending field.
  void validate() const;
  // Sorted `key=value` lines; the fingerprint hashes this text.
  std::string canonical_text() const;
  std::uint64_t fingerprint() const;
};

ModelConfig model_config_from(const KeyValueConfig& kv, ModelConfig base = {});

// The 22 width x conv_depth x lstm_depth x initial_filter cells of the
// hyperparameter table (two cells absent from the original grid).
std::vector<ModelConfig> hyperparameter_grid(const std::vector<std::string>& tasks);

enum class Head { Classifier, Autoencoder, Heuristic };

inline constexpr std::size_t kHeuristicOutputs = 4;

// Ordered, uniquely named parameters.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter name " + name);
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(value));
    return params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& at(const std::string& name) { return params_.at(require(name)); }
  const Parameter<T>& at(const std::string& name) const { return params_.at(require(name)); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::size_t require(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// Shapes of every parameter for a head, in creation order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(
    const ModelConfig& cfg, Head head);

bool is_encoder_parameter(const std::string& name);

// Fan-in scaled uniform weights, zero biases except LSTM forget gates (1.0).
// Each tensor is drawn from its own stream keyed by (seed, name), so adding a
// head never changes encoder initialization.
template <typename T>
ParameterStore<T> build_parameters(const ModelConfig& cfg, Head head, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<T> store;
  for (const auto& [name, shape] : parameter_shapes(cfg, head)) {
    Tensor<T> value(shape);
    const bool is_bias = name.ends_with("/bias");
    if (is_bias) {
      if (name.find("lstm") != std::string::npos) {
        const std::size_t hidden = shape[0] / 4;
        for (std::size_t k = hidden; k < 2 * hidden; ++k) value[k] = T{1};
      }
    } else {
      std::size_t fan_in = 1;
      if (shape.size() == 3) fan_in = shape[0] * shape[1];
      else fan_in = shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Philox rng(keyed_hash(seed, "init", name));
      for (auto& v : value.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    store.add(name, std::move(value));
  }
  return store;
}

// Binds store parameters on a tape on first use; slot = store index.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParameterStore<T>& store)
      : tape_(tape), store_(store), vars_(store.size()), bound_(store.size(), false) {}

  Var<T> operator()(const std::string& name) {
    auto idx = store_.index_of(name);
    if (!idx) throw std::out_of_range("model: missing parameter " + name);
    if (!bound_[*idx]) {
      vars_[*idx] = tape_.bind(store_[*idx].value, *idx);
      bound_[*idx] = true;
    }
    return vars_[*idx];
  }
  Tape<T>& tape() { return tape_; }

 private:
  Tape<T>& tape_;
  const ParameterStore<T>& store_;
  std::vector<Var<T>> vars_;
  std::vector<bool> bound_;
};

struct ForwardOptions {
  bool training = false;
  Philox* rng = nullptr;  // required when training with dropout > 0
};

template <typename T>
struct EncoderOutput {
  Var<T> features;                        // [pooled_len x width]
  std::vector<std::size_t> stage_lengths;  // sequence length entering each pool
};

namespace detail {

template <typename T>
Var<T> maybe_dropout(Var<T> x, const ModelConfig& cfg, const ForwardOptions& opt) {
  if (!opt.training || cfg.dropout_p <= 0.0) return x;
  if (!opt.rng) throw std::logic_error("model: training forward needs an rng");
  return autodiff::dropout(x, cfg.dropout_p, true, *opt.rng);
}

template <typename T>
Var<T> conv(Binder<T>& bind, Var<T> x, const std::string& prefix) {
  return autodiff::conv1d(x, bind(prefix + "/weight"), bind(prefix + "/bias"));
}

}  // namespace detail

// Shared conv + residual + bidirectional LSTM stack.
template <typename T>
EncoderOutput<T> encode(Binder<T>& bind, Var<T> x, const ModelConfig& cfg, const ForwardOptions& opt) {
  namespace ad = autodiff;
  EncoderOutput<T> out;
  auto h = ad::relu(detail::conv(bind, x, "conv0"));
  h = detail::maybe_dropout(h, cfg, opt);
  out.stage_lengths.push_back(h.dim(0));
  h = ad::maxpool1d(h, static_cast<std::size_t>(cfg.pool));
  for (int i = 1; i < cfg.conv_depth; ++i) {
    const std::string name = "res" + std::to_string(i);
    h = ad::add(h, detail::conv(bind, ad::relu(h), name));
    h = detail::maybe_dropout(h, cfg, opt);
    out.stage_lengths.push_back(h.dim(0));
    h = ad::maxpool1d(h, static_cast<std::size_t>(cfg.pool));
  }
  for (int l = 0; l < cfg.lstm_depth; ++l) {
    const std::string name = "lstm" + std::to_string(l);
    ad::LstmWeights<T> fw{bind(name + "/fw/wx"), bind(name + "/fw/wh"), bind(name + "/fw/bias")};
    ad::LstmWeights<T> bw{bind(name + "/bw/wx"), bind(name + "/bw/wh"), bind(name + "/bw/bias")};
    h = ad::bidirectional_lstm(h, fw, bw);
  }
  if (cfg.lstm_depth > 0) h = detail::maybe_dropout(h, cfg, opt);
  out.features = h;
  return out;
}

// Output for the chosen head:
//   Classifier  [pooled_len x tasks] in [-1, 1]
//   Autoencoder [input_len x input_channels], linear
//   Heuristic   [pooled_len x 4], linear
template <typename T>
Var<T> forward(Binder<T>& bind, Var<T> x, const ModelConfig& cfg, Head head,
               const ForwardOptions& opt = {}) {
  namespace ad = autodiff;
  if (x.value().rank() != 2 || static_cast<int>(x.dim(1)) != cfg.input_channels) {
    throw std::invalid_argument("model: expected input [T x " + std::to_string(cfg.input_channels) +
                                "], got " + x.value().shape_string());
  }
  auto enc = encode(bind, x, cfg, opt);
  switch (head) {
    case Head::Classifier:
      return ad::tanh(detail::conv(bind, enc.features, "head"));
    case Head::Heuristic:
      return detail::conv(bind, enc.features, "hrv_head");
    case Head::Autoencoder: {
      auto h = enc.features;
      for (int s = cfg.conv_depth - 1; s >= 0; --s) {
        const auto target = enc.stage_lengths[static_cast<std::size_t>(s)];
        h = ad::nearest_upsample1d(h, static_cast<std::size_t>(cfg.pool), target);
        h = ad::relu(detail::conv(bind, h, "dec" + std::to_string(s)));
      }
      return detail::conv(bind, h, "dec_out");
    }
  }
  throw std::logic_error("model: unknown head");
}

// Inference helper: runs a no-grad forward on x [len x channels].
template <typename T>
Tensor<T> predict(const ParameterStore<T>& store, const ModelConfig& cfg, Head head, Tensor<T> x) {
  Tape<T> tape(false);
  Binder<T> bind(tape, store);
  auto out = forward(bind, tape.constant(std::move(x)), cfg, head);
  return out.value();
}

// ---------------------------------------------------------------------------
// Feature baselines

// Per-column standardization fitted on training rows; constant columns map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
};

struct BinaryDataset {
  std::vector<std::vector<double>> x;
  std::vector<int> y;  // +1 / -1
};

struct LogisticOptions {
  double l2 = 1e-3;
  double learning_rate = 0.5;
  int iterations = 2000;
};

// Full-batch gradient descent on mean log-loss + (l2 / 2) |w|^2.
class LogisticModel {
 public:
  static LogisticModel fit(const BinaryDataset& train, const LogisticOptions& options = {});
  double predict(const std::vector<double>& x) const;
  const std::vector<double>& weights() const { return w_; }
  double intercept() const { return b_; }

 private:
  std::vector<double> w_;
  double b_ = 0.0;
};

struct MlpOptions {
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
};

// One relu hidden layer and a sigmoid output, Adam on log-loss, early stopped
// on tune log-loss (best epoch kept).
class MlpModel {
 public:
  static MlpModel fit(const BinaryDataset& train, const BinaryDataset& tune,
                      const MlpOptions& options = {});
  double predict(const std::vector<double>& x) const;
  int epochs_run() const { return epochs_run_; }

 private:
  std::size_t in_ = 0, hidden_ = 0;
  std::vector<double> w1_, b1_, w2_;
  double b2_ = 0.0;
  int epochs_run_ = 0;
};

// True when both classes have at least two examples.
bool trainable(const BinaryDataset& data);

}  // namespace deepheart::model
