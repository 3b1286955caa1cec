#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "deepheart/cache.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/kvconfig.hpp"
#include "deepheart/model.hpp"

namespace deepheart::train {

using autodiff::Tensor;
using model::ModelConfig;
using model::ParameterStore;

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long step = 0;

  AdamState() = default;
  AdamState(const ParameterStore<T>& store, AdamConfig cfg = {}) : config(cfg) {
    for (const auto& p : store.params()) {
      m.emplace_back(p.value.shape());
      v.emplace_back(p.value.shape());
    }
  }
};

// One bias-corrected Adam update. Throws NumericError naming the parameter
// when a gradient is not finite; no parameter is touched in that case.
template <typename T>
void adam_step(ParameterStore<T>& store, const std::vector<Tensor<T>>& grads, AdamState<T>& state) {
  if (grads.size() != store.size() || state.m.size() != store.size()) {
    throw std::invalid_argument("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (grads[i].shape() != store[i].value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + store[i].name);
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for " + store[i].name);
  }
  const auto& c = state.config;
  ++state.step;
  const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.learning_rate / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(c.epsilon);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& theta = store[i].value;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      theta[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Dataset

enum class Ablation { All, HrOnly, StepsOnly };
enum class Pretraining { None, Autoencoder, Heuristic };

std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view text);
std::string_view pretraining_name(Pretraining p);
Pretraining parse_pretraining(std::string_view text);

struct Example {
  std::string user_id;
  sensorstream::Partition split = sensorstream::Partition::Train;
  Tensor<float> x;     // [valid_len x 3]
  Tensor<float> y;     // [pooled_len x tasks]
  Tensor<float> mask;  // [pooled_len x tasks]
  sensorstream::Diagnoses diagnoses;
  std::vector<sensorstream::EventInfo> events;

  bool has_any_label() const;
};

struct Dataset {
  std::vector<std::string> tasks;
  sensorstream::NormalizationParams norm;
  std::vector<Example> examples;

  std::vector<const Example*> split(sensorstream::Partition p) const;
};

// Trims each cached week to its valid rows, re-aligns labels to the model's
// pooling depth and applies the channel ablation.
Dataset make_dataset(const sensorstream::TensorCache& cache, const ModelConfig& cfg,
                     Ablation ablation = Ablation::All);

// Zeroes the excluded channel and the dt entries of its events.
void apply_ablation(Tensor<float>& x, std::span<const sensorstream::EventInfo> events, Ablation a);

// Users kept at a label fraction; nested across fractions for one seed.
bool user_in_label_subset(const std::string& user_id, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t batch_size = 16;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
  Pretraining pretraining = Pretraining::None;
  double noise_sigma = 0.1;
  int pretrain_epochs = 20;
  Ablation ablation = Ablation::All;
  double learning_rate = 1e-3;
  std::size_t threads = 1;

  void validate() const;
  // Sorted `train.key=value` lines.
  std::string canonical_text() const;
};

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base = {});

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double tune_loss = 0.0;
};

struct LabelCount {
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TrainResult {
  ParameterStore<float> params;
  std::vector<EpochLog> log;
  int epochs_run = 0;
  int best_epoch = 0;
  std::size_t train_weeks = 0;
  std::size_t train_users = 0;
  std::map<std::string, LabelCount> label_counts;  // over training weeks
};

// Progress callback, one call per epoch.
using EpochCallback = std::function<void(const std::string& phase, const EpochLog&)>;

// Multi-task masked squared error on +1/-1 targets, Adam, early stopping on
// tune loss (best epoch restored). Throws DataError when no labeled training
// week survives the label fraction.
TrainResult train_supervised(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                             const ParameterStore<float>* init = nullptr,
                             const EpochCallback& on_epoch = {});

struct PretrainResult {
  ParameterStore<float> encoder;  // encoder-named parameters only
  ParameterStore<float> full;     // including the pretraining head
  std::vector<EpochLog> log;
};

// Denoising reconstruction of the clean input from input + N(0, sigma^2)
// noise, on every training-split week (labels ignored).
PretrainResult pretrain_autoencoder(const Dataset& data, const ModelConfig& model_cfg,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Regression of the four windowed heart-rate variability channels (scaled by
// the heart-rate normalization) on every training-split week.
PretrainResult pretrain_heuristic(const Dataset& data, const ModelConfig& model_cfg,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Heuristic targets for one example, in normalized units: [pooled_len x 4].
std::pair<Tensor<float>, Tensor<float>> heuristic_targets(const Example& ex, const ModelConfig& cfg,
                                                           const sensorstream::NormalizationParams& norm);

// Copies every src parameter whose name exists in dst. Throws UsageError on
// a shape disagreement.
template <typename T>
std::size_t transfer_weights(const ParameterStore<T>& src, ParameterStore<T>& dst) {
  std::size_t copied = 0;
  for (const auto& p : src.params()) {
    auto idx = dst.index_of(p.name);
    if (!idx) continue;
    auto& target = dst[*idx];
    if (target.value.shape() != p.value.shape()) {
      throw UsageError("transfer_weights: shape mismatch for " + p.name + ": " +
                       p.value.shape_string() + " vs " + target.value.shape_string());
    }
    if (&target.value != &p.value) target.value = p.value;
    ++copied;
  }
  return copied;
}

ParameterStore<float> encoder_subset(const ParameterStore<float>& store);

// Mean masked squared error per example over a set, no dropout.
double evaluate_loss(const ParameterStore<float>& params, const ModelConfig& cfg,
                     const std::vector<const Example*>& examples);

// Per-example classifier output at the last pooled step: [tasks].
std::vector<float> final_scores(const ParameterStore<float>& params, const ModelConfig& cfg,
                                const Example& ex);

// ---------------------------------------------------------------------------
// Checkpoints

enum class CheckpointKind : std::uint8_t { Classifier = 0, Autoencoder = 1, Heuristic = 2, Encoder = 3 };

inline constexpr char kCheckpointMagic[4] = {'D', 'H', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  enum class Reason { BadMagic, Version, Truncated, Checksum, Fingerprint, Shape, Trailing };
  CheckpointError(Reason reason, const std::string& message);
  Reason reason() const { return reason_; }
  static std::string_view name(Reason reason);

 private:
  Reason reason_;
};

struct Checkpoint {
  ModelConfig config;
  CheckpointKind kind = CheckpointKind::Classifier;
  sensorstream::NormalizationParams norm;
  ParameterStore<float> params;
};

// Layout (little-endian):
//   magic "DHCK", u16 version, u64 config fingerprint,
//   u32 len + canonical config text, u8 kind, f64[3] normalization,
//   u32 n_params, per parameter: u16 name len, name, u8 ndim, u32 dims[ndim],
//   f32 data; then u32 CRC-32 of every preceding byte.
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Checks magic, version, structure and checksum. When `expected` is given,
// also the fingerprint and every parameter shape.
Checkpoint deserialize_checkpoint(std::string_view bytes, const ModelConfig* expected = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

// Parses canonical config text back into a ModelConfig.
ModelConfig config_from_canonical(const std::string& text);

}  // namespace deepheart::train
