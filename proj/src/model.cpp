#include "deepheart/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace deepheart::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("model config: " + m); };
  if (width <= 0) fail("width must be positive");
  if (width % 2 != 0) fail("width must be even to split across LSTM directions, got " + std::to_string(width));
  if (conv_depth < 1) fail("conv_depth must be >= 1");
  if (lstm_depth < 0) fail("lstm_depth must be >= 0");
  if (initial_filter < 1) fail("initial_filter must be >= 1");
  if (residual_filter < 1) fail("residual_filter must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0, 1)");
  if (pool < 1) fail("pool must be >= 1");
  if (tasks.empty()) fail("at least one task is required");
  std::set<std::string> seen(tasks.begin(), tasks.end());
  if (seen.size() != tasks.size()) fail("task names must be unique");
  if (input_channels < 1) fail("input_channels must be >= 1");
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream s;
  s.precision(17);
  std::string task_list;
  for (std::size_t i = 0; i < tasks.size(); ++i) task_list += (i ? "," : "") + tasks[i];
  s << "model.conv_depth=" << conv_depth << "\n"
    << "model.dropout_p=" << dropout_p << "\n"
    << "model.initial_filter=" << initial_filter << "\n"
    << "model.input_channels=" << input_channels << "\n"
    << "model.lstm_depth=" << lstm_depth << "\n"
    << "model.pool=" << pool << "\n"
    << "model.residual_filter=" << residual_filter << "\n"
    << "model.tasks=" << task_list << "\n"
    << "model.width=" << width << "\n";
  return s.str();
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(canonical_text()); }

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

ModelConfig model_config_from(const KeyValueConfig& kv, ModelConfig base) {
  auto get_int = [&](const char* key, int& field) {
    if (auto v = kv.get_int(key)) field = static_cast<int>(*v);
  };
  get_int("model.width", base.width);
  get_int("model.conv_depth", base.conv_depth);
  get_int("model.lstm_depth", base.lstm_depth);
  get_int("model.initial_filter", base.initial_filter);
  get_int("model.residual_filter", base.residual_filter);
  get_int("model.pool", base.pool);
  if (auto v = kv.get_double("model.dropout_p")) base.dropout_p = *v;
  if (auto v = kv.get_string("model.tasks")) base.tasks = split_list(*v);
  base.validate();
  return base;
}

std::vector<ModelConfig> hyperparameter_grid(const std::vector<std::string>& tasks) {
  std::vector<ModelConfig> grid;
  for (int width : {32, 64, 128}) {
    for (int conv_depth : {2, 4}) {
      for (int lstm_depth : {2, 4}) {
        for (int filter : {5, 12}) {
          if (width == 64 && conv_depth == 2 && lstm_depth == 4 && filter == 5) continue;
          if (width == 128 && conv_depth == 2 && lstm_depth == 2 && filter == 12) continue;
          ModelConfig cfg;
          cfg.width = width;
          cfg.conv_depth = conv_depth;
          cfg.lstm_depth = lstm_depth;
          cfg.initial_filter = filter;
          cfg.tasks = tasks;
          grid.push_back(cfg);
        }
      }
    }
  }
  return grid;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_shapes(
    const ModelConfig& cfg, Head head) {
  cfg.validate();
  const auto w = static_cast<std::size_t>(cfg.width);
  const auto h = w / 2;
  const auto cin = static_cast<std::size_t>(cfg.input_channels);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
  auto conv = [&](const std::string& prefix, std::size_t f, std::size_t in, std::size_t out) {
    shapes.push_back({prefix + "/weight", {f, in, out}});
    shapes.push_back({prefix + "/bias", {out}});
  };
  conv("conv0", static_cast<std::size_t>(cfg.initial_filter), cin, w);
  for (int i = 1; i < cfg.conv_depth; ++i) {
    conv("res" + std::to_string(i), static_cast<std::size_t>(cfg.residual_filter), w, w);
  }
  for (int l = 0; l < cfg.lstm_depth; ++l) {
    for (const char* dir : {"fw", "bw"}) {
      const std::string prefix = "lstm" + std::to_string(l) + "/" + dir;
      shapes.push_back({prefix + "/wx", {w, 4 * h}});
      shapes.push_back({prefix + "/wh", {h, 4 * h}});
      shapes.push_back({prefix + "/bias", {4 * h}});
    }
  }
  switch (head) {
    case Head::Classifier:
      conv("head", 1, w, cfg.tasks.size());
      break;
    case Head::Heuristic:
      conv("hrv_head", 1, w, kHeuristicOutputs);
      break;
    case Head::Autoencoder:
      for (int s = cfg.conv_depth - 1; s >= 0; --s) {
        conv("dec" + std::to_string(s), static_cast<std::size_t>(cfg.residual_filter), w, w);
      }
      conv("dec_out", 1, w, cin);
      break;
  }
  return shapes;
}

bool is_encoder_parameter(const std::string& name) {
  return name.starts_with("conv0/") || name.starts_with("res") || name.starts_with("lstm");
}

// ---------------------------------------------------------------------------
// Baselines

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  Standardizer s;
  if (rows.empty()) return s;
  const std::size_t d = rows.front().size();
  s.mean.assign(d, 0.0);
  s.sd.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) s.sd[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (auto& v : s.sd) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    out[j] = sd[j] > 1e-12 ? (row[j] - mean[j]) / sd[j] : 0.0;
  }
  return out;
}

bool trainable(const BinaryDataset& data) {
  std::size_t pos = 0, neg = 0;
  for (int y : data.y) (y > 0 ? pos : neg)++;
  return pos >= 2 && neg >= 2;
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LogisticModel LogisticModel::fit(const BinaryDataset& train, const LogisticOptions& options) {
  if (train.x.empty()) throw DataError("logistic baseline: no training rows");
  const std::size_t n = train.x.size(), d = train.x.front().size();
  LogisticModel m;
  m.w_.assign(d, 0.0);
  std::vector<double> gw(d);
  for (int it = 0; it < options.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& x = train.x[i];
      double z = m.b_;
      for (std::size_t j = 0; j < d; ++j) z += m.w_[j] * x[j];
      const double err = sigmoid(z) - (train.y[i] > 0 ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * x[j];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      m.w_[j] -= options.learning_rate * (gw[j] * inv + options.l2 * m.w_[j]);
    }
    m.b_ -= options.learning_rate * gb * inv;
  }
  return m;
}

double LogisticModel::predict(const std::vector<double>& x) const {
  double z = b_;
  for (std::size_t j = 0; j < w_.size(); ++j) z += w_[j] * x[j];
  return sigmoid(z);
}

namespace {

struct MlpGrad {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
};

struct AdamVec {
  std::vector<double> m, v;
  explicit AdamVec(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& theta, const std::vector<double>& g, double lr, long t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

double log_loss(double p, int y) {
  constexpr double tiny = 1e-12;
  return y > 0 ? -std::log(std::max(p, tiny)) : -std::log(std::max(1.0 - p, tiny));
}

}  // namespace

double MlpModel::predict(const std::vector<double>& x) const {
  double z = b2_;
  for (std::size_t k = 0; k < hidden_; ++k) {
    double a = b1_[k];
    for (std::size_t j = 0; j < in_; ++j) a += w1_[j * hidden_ + k] * x[j];
    if (a > 0) z += w2_[k] * a;
  }
  return sigmoid(z);
}

MlpModel MlpModel::fit(const BinaryDataset& train, const BinaryDataset& tune, const MlpOptions& options) {
  if (train.x.empty()) throw DataError("mlp baseline: no training rows");
  MlpModel m;
  m.in_ = train.x.front().size();
  m.hidden_ = options.hidden;
  const std::size_t in = m.in_, hid = m.hidden_;
  Philox rng(options.seed, 0x6d6c70);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(in, 1)));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hid));
  m.w1_.resize(in * hid);
  for (auto& v : m.w1_) v = rng.uniform(-bound1, bound1);
  m.b1_.assign(hid, 0.0);
  m.w2_.resize(hid);
  for (auto& v : m.w2_) v = rng.uniform(-bound2, bound2);

  AdamVec a_w1(m.w1_.size()), a_b1(hid), a_w2(hid), a_b2(1);
  std::vector<double> b2v{m.b2_};
  MlpGrad g{std::vector<double>(m.w1_.size()), std::vector<double>(hid), std::vector<double>(hid), 0.0};
  std::vector<double> act(hid);

  auto tune_loss = [&](const MlpModel& model) {
    const auto& data = tune.x.empty() ? train : tune;
    double s = 0.0;
    for (std::size_t i = 0; i < data.x.size(); ++i) s += log_loss(model.predict(data.x[i]), data.y[i]);
    return s / static_cast<double>(data.x.size());
  };

  std::vector<std::size_t> order(train.x.size());
  std::iota(order.begin(), order.end(), 0);
  MlpModel best = m;
  double best_loss = tune_loss(m);
  int since_best = 0;
  long t = 0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::fill(g.w1.begin(), g.w1.end(), 0.0);
      std::fill(g.b1.begin(), g.b1.end(), 0.0);
      std::fill(g.w2.begin(), g.w2.end(), 0.0);
      g.b2 = 0.0;
      for (std::size_t s = start; s < end; ++s) {
        const auto& x = train.x[order[s]];
        double z = m.b2_;
        for (std::size_t k = 0; k < hid; ++k) {
          double a = m.b1_[k];
          for (std::size_t j = 0; j < in; ++j) a += m.w1_[j * hid + k] * x[j];
          act[k] = a > 0 ? a : 0.0;
          z += m.w2_[k] * act[k];
        }
        const double err = sigmoid(z) - (train.y[order[s]] > 0 ? 1.0 : 0.0);
        g.b2 += err;
        for (std::size_t k = 0; k < hid; ++k) {
          g.w2[k] += err * act[k];
          if (act[k] <= 0) continue;
          const double d = err * m.w2_[k];
          g.b1[k] += d;
          for (std::size_t j = 0; j < in; ++j) g.w1[j * hid + k] += d * x[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& v : g.w1) v *= inv;
      for (auto& v : g.b1) v *= inv;
      for (auto& v : g.w2) v *= inv;
      ++t;
      a_w1.step(m.w1_, g.w1, options.learning_rate, t);
      a_b1.step(m.b1_, g.b1, options.learning_rate, t);
      a_w2.step(m.w2_, g.w2, options.learning_rate, t);
      b2v[0] = m.b2_;
      a_b2.step(b2v, {g.b2 * inv}, options.learning_rate, t);
      m.b2_ = b2v[0];
    }
    m.epochs_run_ = epoch + 1;
    const double loss = tune_loss(m);
    if (loss < best_loss) {
      best_loss = loss;
      best = m;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  best.epochs_run_ = m.epochs_run_;
  return best;
}

}  // namespace deepheart::model
