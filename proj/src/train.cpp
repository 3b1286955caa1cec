#include "deepheart/train.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "deepheart/biomarkers.hpp"
#include "deepheart/io.hpp"

namespace deepheart::train {

using autodiff::Tape;
using autodiff::Var;
using model::Binder;
using model::ForwardOptions;
using model::Head;
using sensorstream::Partition;

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::All: return "all";
    case Ablation::HrOnly: return "hr_only";
    case Ablation::StepsOnly: return "steps_only";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "all") return Ablation::All;
  if (text == "hr_only") return Ablation::HrOnly;
  if (text == "steps_only") return Ablation::StepsOnly;
  throw UsageError("unknown ablation '" + std::string(text) + "' (expected all|hr_only|steps_only)");
}

std::string_view pretraining_name(Pretraining p) {
  switch (p) {
    case Pretraining::None: return "none";
    case Pretraining::Autoencoder: return "autoencoder";
    case Pretraining::Heuristic: return "heuristic";
  }
  return "?";
}

Pretraining parse_pretraining(std::string_view text) {
  if (text == "none") return Pretraining::None;
  if (text == "autoencoder") return Pretraining::Autoencoder;
  if (text == "heuristic") return Pretraining::Heuristic;
  throw UsageError("unknown pretraining mode '" + std::string(text) +
                   "' (expected none|autoencoder|heuristic)");
}

bool Example::has_any_label() const {
  for (float m : mask.values()) {
    if (m != 0.0f) return true;
  }
  return false;
}

std::vector<const Example*> Dataset::split(Partition p) const {
  std::vector<const Example*> out;
  for (const auto& ex : examples) {
    if (ex.split == p) out.push_back(&ex);
  }
  return out;
}

void apply_ablation(Tensor<float>& x, std::span<const sensorstream::EventInfo> events, Ablation a) {
  if (a == Ablation::All) return;
  const auto dropped = a == Ablation::HrOnly ? sensorstream::Channel::StepCount
                                             : sensorstream::Channel::HeartRate;
  const std::size_t col = static_cast<std::size_t>(dropped);
  const std::size_t rows = x.dim(0);
  for (std::size_t t = 0; t < rows; ++t) {
    x.at(t, col) = 0.0f;
    if (t < events.size() && events[t].channel == dropped) x.at(t, sensorstream::kDtChannel) = 0.0f;
  }
}

Dataset make_dataset(const sensorstream::TensorCache& cache, const ModelConfig& cfg, Ablation ablation) {
  cfg.validate();
  for (const auto& task : cfg.tasks) {
    if (std::find(cache.tasks.begin(), cache.tasks.end(), task) == cache.tasks.end()) {
      throw DataError("cache has no labels for task '" + task + "'");
    }
  }
  Dataset data;
  data.tasks = cfg.tasks;
  data.norm = cache.norm;
  data.examples.reserve(cache.weeks.size());
  const std::size_t channels = sensorstream::kInputChannels;
  for (const auto& cw : cache.weeks) {
    Example ex;
    ex.user_id = cw.week.user_id;
    ex.split = cw.split;
    const std::size_t len = cw.week.valid_len;
    ex.x = Tensor<float>({len, channels},
                         std::vector<float>(cw.week.x.begin(), cw.week.x.begin() + len * channels));
    ex.events = cw.week.events;
    apply_ablation(ex.x, ex.events, ablation);
    ex.diagnoses = cw.diagnoses();
    const std::size_t pooled = cfg.output_length(len);
    auto targets = sensorstream::align_labels(len, ex.diagnoses, cfg.tasks, cfg.pool_stages(), pooled, cfg.pool);
    ex.y = Tensor<float>({pooled, cfg.tasks.size()}, targets.y);
    ex.mask = Tensor<float>({pooled, cfg.tasks.size()},
                            std::vector<float>(targets.mask.begin(), targets.mask.end()));
    data.examples.push_back(std::move(ex));
  }
  return data;
}

bool user_in_label_subset(const std::string& user_id, double fraction, std::uint64_t seed) {
  if (fraction >= 1.0) return true;
  return keyed_unit(seed, "label-fraction", user_id) < fraction;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_epochs < 0) fail("max_epochs must be >= 0");
  if (patience < 1) fail("patience must be >= 1");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) fail("label_fraction must lie in (0, 1]");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (pretrain_epochs < 0) fail("pretrain_epochs must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (threads < 1) fail("threads must be >= 1");
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream s;
  s.precision(17);
  s << "train.ablation=" << ablation_name(ablation) << "\n"
    << "train.batch_size=" << batch_size << "\n"
    << "train.label_fraction=" << label_fraction << "\n"
    << "train.learning_rate=" << learning_rate << "\n"
    << "train.max_epochs=" << max_epochs << "\n"
    << "train.noise_sigma=" << noise_sigma << "\n"
    << "train.patience=" << patience << "\n"
    << "train.pretrain_epochs=" << pretrain_epochs << "\n"
    << "train.pretraining=" << pretraining_name(pretraining) << "\n"
    << "train.seed=" << seed << "\n";
  return s.str();
}

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base) {
  if (auto v = kv.get_int("train.batch_size")) base.batch_size = static_cast<std::size_t>(std::max<std::int64_t>(*v, 0));
  if (auto v = kv.get_int("train.max_epochs")) base.max_epochs = static_cast<int>(*v);
  if (auto v = kv.get_int("train.patience")) base.patience = static_cast<int>(*v);
  if (auto v = kv.get_int("train.seed")) base.seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get_double("train.label_fraction")) base.label_fraction = *v;
  if (auto v = kv.get_string("train.pretraining")) base.pretraining = parse_pretraining(*v);
  if (auto v = kv.get_double("train.noise_sigma")) base.noise_sigma = *v;
  if (auto v = kv.get_int("train.pretrain_epochs")) base.pretrain_epochs = static_cast<int>(*v);
  if (auto v = kv.get_string("train.ablation")) base.ablation = parse_ablation(*v);
  if (auto v = kv.get_double("train.learning_rate")) base.learning_rate = *v;
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Generic minibatch loop

namespace {

using SampleLoss =
    std::function<Var<float>(Binder<float>&, const Example&, const ForwardOptions&)>;

struct LoopOptions {
  std::string phase;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  int epochs = 1;
  int patience = 0;  // 0: no early stopping, keep the final parameters
  double learning_rate = 1e-3;
  std::size_t threads = 1;
};

struct LoopResult {
  std::vector<EpochLog> log;
  int epochs_run = 0;
  int best_epoch = 0;
};

double sample_value(const ParameterStore<float>& params, const Example& ex, const SampleLoss& loss) {
  Tape<float> tape(false);
  Binder<float> bind(tape, params);
  return tape.value(loss(bind, ex, ForwardOptions{}))[0];
}

double mean_loss(const ParameterStore<float>& params, const std::vector<const Example*>& set,
                 const SampleLoss& loss) {
  if (set.empty()) return 0.0;
  double total = 0.0;
  for (const Example* ex : set) total += sample_value(params, *ex, loss);
  return total / static_cast<double>(set.size());
}

// Fills `grads` with d loss / d params for one example; returns the loss.
double sample_gradient(const ParameterStore<float>& params, const Example& ex, const SampleLoss& loss,
                       Philox& rng, std::vector<Tensor<float>>& grads) {
  Tape<float> tape(true);
  Binder<float> bind(tape, params);
  auto out = loss(bind, ex, ForwardOptions{true, &rng});
  const double value = tape.value(out)[0];
  tape.backward(out);
  tape.accumulate_parameter_grads(grads);
  return value;
}

LoopResult run_loop(ParameterStore<float>& params, const std::vector<const Example*>& train,
                    const std::vector<const Example*>& tune, const SampleLoss& loss,
                    const LoopOptions& opt, const EpochCallback& on_epoch) {
  LoopResult result;
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = opt.learning_rate;
  AdamState<float> adam(params, adam_cfg);
  const std::uint64_t phase_seed = keyed_hash(opt.seed, "train-loop", opt.phase);

  std::vector<Tensor<float>> batch_grad;
  for (const auto& p : params.params()) batch_grad.emplace_back(p.value.shape());
  const std::size_t lanes = std::max<std::size_t>(1, std::min(opt.threads, opt.batch_size));
  std::vector<std::vector<Tensor<float>>> lane_grads(lanes, batch_grad);
  std::vector<double> lane_loss(lanes);

  ParameterStore<float> best = params;
  double best_tune = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::size_t> order(train.size());

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Philox shuffle(phase_seed, 0x5348554646000000ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      for (auto& g : batch_grad) g.fill(0.0f);
      // Samples are processed `lanes` at a time; lane sums are folded into
      // the batch gradient in sample order, so the thread count never
      // changes the result.
      for (std::size_t chunk = start; chunk < end; chunk += lanes) {
        const std::size_t n = std::min(lanes, end - chunk);
        auto work = [&](std::size_t k) {
          for (auto& g : lane_grads[k]) g.fill(0.0f);
          const std::size_t pos = chunk + k;
          Philox rng(phase_seed, (static_cast<std::uint64_t>(epoch) << 32) | pos);
          lane_loss[k] = sample_gradient(params, *train[order[pos]], loss, rng, lane_grads[k]);
        };
        if (n == 1) {
          work(0);
        } else {
          std::vector<std::jthread> pool;
          std::vector<std::exception_ptr> errors(n);
          for (std::size_t k = 0; k < n; ++k) {
            pool.emplace_back([&, k] {
              try {
                work(k);
              } catch (...) {
                errors[k] = std::current_exception();
              }
            });
          }
          pool.clear();
          for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
          }
        }
        for (std::size_t k = 0; k < n; ++k) {
          epoch_loss += lane_loss[k];
          for (std::size_t i = 0; i < batch_grad.size(); ++i) {
            auto& dst = batch_grad[i];
            const auto& src = lane_grads[k][i];
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
          }
        }
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& g : batch_grad) {
        for (auto& v : g.values()) v *= inv;
      }
      adam_step(params, batch_grad, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = train.empty() ? 0.0 : epoch_loss / static_cast<double>(train.size());
    entry.tune_loss = mean_loss(params, tune, loss);
    result.log.push_back(entry);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(opt.phase, entry);

    if (opt.patience > 0 && !tune.empty()) {
      if (entry.tune_loss < best_tune) {
        best_tune = entry.tune_loss;
        best = params;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= opt.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (opt.patience > 0 && !tune.empty() && result.best_epoch > 0) params = std::move(best);
  return result;
}

Tensor<float> ones_like(const Tensor<float>& t) { return Tensor<float>(t.shape(), 1.0f); }

}  // namespace

// ---------------------------------------------------------------------------

TrainResult train_supervised(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                             const ParameterStore<float>* init, const EpochCallback& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (data.tasks != model_cfg.tasks) throw UsageError("train: dataset tasks differ from model tasks");
  std::vector<const Example*> train, tune;
  std::set<std::string> users;
  TrainResult result;
  for (const auto& t : model_cfg.tasks) result.label_counts[t] = {};
  for (const auto& ex : data.examples) {
    if (!ex.has_any_label()) continue;
    if (ex.split == Partition::Tune) tune.push_back(&ex);
    if (ex.split != Partition::Train) continue;
    if (!user_in_label_subset(ex.user_id, cfg.label_fraction, cfg.seed)) continue;
    train.push_back(&ex);
    users.insert(ex.user_id);
    for (const auto& [task, label] : ex.diagnoses) {
      auto it = result.label_counts.find(task);
      if (it == result.label_counts.end()) continue;
      (label > 0 ? it->second.positive : it->second.negative)++;
    }
  }
  if (train.empty()) {
    throw DataError("train: no labeled training weeks at label_fraction " +
                    std::to_string(cfg.label_fraction));
  }
  result.train_weeks = train.size();
  result.train_users = users.size();

  result.params = model::build_parameters<float>(model_cfg, Head::Classifier, cfg.seed);
  if (init) transfer_weights(*init, result.params);

  SampleLoss loss = [&model_cfg](Binder<float>& bind, const Example& ex, const ForwardOptions& opt) {
    auto pred = model::forward(bind, bind.tape().constant(ex.x), model_cfg, Head::Classifier, opt);
    return autodiff::masked_sse(pred, ex.y, ex.mask);
  };
  LoopOptions opt{"supervised", cfg.seed, cfg.batch_size, cfg.max_epochs, cfg.patience,
                  cfg.learning_rate, cfg.threads};
  auto loop = run_loop(result.params, train, tune, loss, opt, on_epoch);
  result.log = std::move(loop.log);
  result.epochs_run = loop.epochs_run;
  result.best_epoch = loop.best_epoch;
  return result;
}

ParameterStore<float> encoder_subset(const ParameterStore<float>& store) {
  ParameterStore<float> out;
  for (const auto& p : store.params()) {
    if (model::is_encoder_parameter(p.name)) out.add(p.name, p.value);
  }
  return out;
}

namespace {

PretrainResult pretrain(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                        Head head, const SampleLoss& loss, const std::string& phase,
                        const EpochCallback& on_epoch) {
  cfg.validate();
  auto train = data.split(Partition::Train);
  auto tune = data.split(Partition::Tune);
  if (train.empty()) throw DataError(phase + ": no training-split weeks");
  PretrainResult result;
  result.full = model::build_parameters<float>(model_cfg, head, cfg.seed);
  LoopOptions opt{phase, cfg.seed, cfg.batch_size, cfg.pretrain_epochs, 0, cfg.learning_rate, cfg.threads};
  result.log = run_loop(result.full, train, tune, loss, opt, on_epoch).log;
  result.encoder = encoder_subset(result.full);
  return result;
}

}  // namespace

PretrainResult pretrain_autoencoder(const Dataset& data, const ModelConfig& model_cfg,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const double sigma = cfg.noise_sigma;
  SampleLoss loss = [&model_cfg, sigma](Binder<float>& bind, const Example& ex, const ForwardOptions& opt) {
    auto x = bind.tape().constant(ex.x);
    if (opt.training && sigma > 0.0) x = autodiff::gaussian_noise(x, sigma, *opt.rng, ex.x.dim(0));
    auto pred = model::forward(bind, x, model_cfg, Head::Autoencoder, opt);
    return autodiff::masked_sse(pred, ex.x, ones_like(ex.x));
  };
  return pretrain(data, model_cfg, cfg, Head::Autoencoder, loss, "autoencoder", on_epoch);
}

std::pair<Tensor<float>, Tensor<float>> heuristic_targets(const Example& ex, const ModelConfig& cfg,
                                                           const sensorstream::NormalizationParams& norm) {
  const auto per_event = biomarkers::hrv_targets_per_event(ex.events);
  const auto pooled = biomarkers::pool_hrv_targets(per_event, cfg.pool_stages(), cfg.pool);
  const std::size_t k = biomarkers::kHrvChannels;
  Tensor<float> y({pooled.steps, k});
  Tensor<float> mask({pooled.steps, k});
  for (std::size_t j = 0; j < pooled.steps * k; ++j) {
    y[j] = static_cast<float>(pooled.value[j] / norm.hr_scale);
    mask[j] = pooled.mask[j] ? 1.0f : 0.0f;
  }
  return {std::move(y), std::move(mask)};
}

PretrainResult pretrain_heuristic(const Dataset& data, const ModelConfig& model_cfg,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  // Targets depend only on the events, so compute them once.
  std::map<const Example*, std::pair<Tensor<float>, Tensor<float>>> targets;
  for (const auto& ex : data.examples) {
    if (ex.split == Partition::Test) continue;
    targets.emplace(&ex, heuristic_targets(ex, model_cfg, data.norm));
  }
  SampleLoss loss = [&model_cfg, &targets](Binder<float>& bind, const Example& ex, const ForwardOptions& opt) {
    const auto& [y, mask] = targets.at(&ex);
    auto pred = model::forward(bind, bind.tape().constant(ex.x), model_cfg, Head::Heuristic, opt);
    return autodiff::masked_sse(pred, y, mask);
  };
  return pretrain(data, model_cfg, cfg, Head::Heuristic, loss, "heuristic", on_epoch);
}

double evaluate_loss(const ParameterStore<float>& params, const ModelConfig& cfg,
                     const std::vector<const Example*>& examples) {
  SampleLoss loss = [&cfg](Binder<float>& bind, const Example& ex, const ForwardOptions& opt) {
    auto pred = model::forward(bind, bind.tape().constant(ex.x), cfg, Head::Classifier, opt);
    return autodiff::masked_sse(pred, ex.y, ex.mask);
  };
  return mean_loss(params, examples, loss);
}

std::vector<float> final_scores(const ParameterStore<float>& params, const ModelConfig& cfg,
                                const Example& ex) {
  auto out = model::predict(params, cfg, Head::Classifier, ex.x);
  const std::size_t last = out.dim(0) - 1;
  return std::vector<float>(out.row(last), out.row(last) + out.dim(1));
}

// ---------------------------------------------------------------------------
// Checkpoints

CheckpointError::CheckpointError(Reason reason, const std::string& message)
    : DataError("checkpoint " + std::string(name(reason)) + ": " + message), reason_(reason) {}

std::string_view CheckpointError::name(Reason reason) {
  switch (reason) {
    case Reason::BadMagic: return "bad-magic";
    case Reason::Version: return "version-mismatch";
    case Reason::Truncated: return "truncated";
    case Reason::Checksum: return "checksum-mismatch";
    case Reason::Fingerprint: return "fingerprint-mismatch";
    case Reason::Shape: return "shape-mismatch";
    case Reason::Trailing: return "trailing-bytes";
  }
  return "error";
}

ModelConfig config_from_canonical(const std::string& text) {
  std::istringstream in(text);
  auto kv = KeyValueConfig::parse(in, "checkpoint config");
  return model::model_config_from(kv);
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  io::Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put(kCheckpointVersion);
  w.put(ckpt.config.fingerprint());
  w.put_string<std::uint32_t>(ckpt.config.canonical_text());
  w.put(static_cast<std::uint8_t>(ckpt.kind));
  w.put(ckpt.norm.hr_center);
  w.put(ckpt.norm.hr_scale);
  w.put(ckpt.norm.step_log_scale);
  w.put(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params.params()) {
    w.put_string<std::uint16_t>(p.name);
    w.put(static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_array<float>(p.value.values());
  }
  w.put(io::crc32(w.bytes()));
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const ModelConfig* expected) {
  using R = CheckpointError::Reason;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(R::BadMagic, "not a DHCK file");
  }
  if (bytes.size() < 10) throw CheckpointError(R::Truncated, "file ends inside the header");
  io::Reader r(bytes.substr(0, bytes.size() - 4), "checkpoint");
  Checkpoint ckpt;
  std::uint64_t fingerprint = 0;
  try {
    r.get_bytes(4);
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(R::Version, "file version " + std::to_string(version) + ", expected " +
                                            std::to_string(kCheckpointVersion));
    }
    fingerprint = r.get<std::uint64_t>();
    const auto text = r.get_string<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 3) throw CheckpointError(R::Checksum, "unknown checkpoint kind");
    ckpt.kind = static_cast<CheckpointKind>(kind);
    ckpt.norm.hr_center = r.get<double>();
    ckpt.norm.hr_scale = r.get<double>();
    ckpt.norm.step_log_scale = r.get<double>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto name = r.get_string<std::uint16_t>();
      const auto rank = r.get<std::uint8_t>();
      std::vector<std::size_t> shape(rank);
      std::size_t count = 1;
      for (auto& d : shape) {
        d = r.get<std::uint32_t>();
        count *= d;
      }
      if (count * sizeof(float) > r.remaining()) throw DataError("checkpoint: truncated file");
      Tensor<float> value(shape);
      r.get_array<float>(value.values());
      if (ckpt.params.contains(name)) throw CheckpointError(R::Checksum, "duplicate parameter " + name);
      ckpt.params.add(name, std::move(value));
    }
    if (r.remaining() != 0) {
      throw CheckpointError(R::Trailing, std::to_string(r.remaining()) + " unexpected bytes");
    }
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    io::Reader tail(bytes.substr(bytes.size() - 4), "checkpoint");
    if (tail.get<std::uint32_t>() != io::crc32(body)) {
      throw CheckpointError(R::Checksum, "payload CRC-32 does not match");
    }
    try {
      ckpt.config = config_from_canonical(text);
    } catch (const UsageError& e) {
      throw CheckpointError(R::Checksum, std::string("stored config is invalid: ") + e.what());
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(R::Truncated, "file ends before the declared payload");
  }
  if (ckpt.config.fingerprint() != fingerprint) {
    throw CheckpointError(R::Fingerprint, "stored fingerprint does not match stored config");
  }
  if (expected) {
    if (expected->fingerprint() != fingerprint) {
      throw CheckpointError(R::Fingerprint, "checkpoint was written for a different model config");
    }
    const model::Head head = ckpt.kind == CheckpointKind::Autoencoder ? Head::Autoencoder
                             : ckpt.kind == CheckpointKind::Heuristic ? Head::Heuristic
                                                                      : Head::Classifier;
    for (const auto& [name, shape] : model::parameter_shapes(*expected, head)) {
      auto idx = ckpt.params.index_of(name);
      if (!idx) {
        if (ckpt.kind == CheckpointKind::Encoder && !model::is_encoder_parameter(name)) continue;
        throw CheckpointError(R::Shape, "missing parameter " + name);
      }
      if (ckpt.params[*idx].value.shape() != shape) {
        throw CheckpointError(R::Shape, "parameter " + name + " has shape " +
                                            ckpt.params[*idx].value.shape_string());
      }
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  return deserialize_checkpoint(io::read_file(path), expected);
}

}  // namespace deepheart::train
