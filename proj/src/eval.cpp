#include "deepheart/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace deepheart::eval {

using sensorstream::Partition;

// ---------------------------------------------------------------------------

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels differ in length (" + std::to_string(scores.size()) +
                                " vs " + std::to_string(labels.size()) + ")");
  }
}

}  // namespace

std::optional<double> c_statistic(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Midrank of the tied block [i, j), ranks starting at 1.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] > 0) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

std::optional<RocCurve> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y > 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  // Twice the area in units of one (positive, negative) pair; exact in integers.
  std::uint64_t twice_area = 0;
  for (std::size_t i = 0; i < n;) {
    const double threshold = scores[order[i]];
    while (i < n && scores[order[i]] == threshold) {
      (labels[order[i]] > 0 ? tp : fp)++;
      ++i;
    }
    twice_area += static_cast<std::uint64_t>(fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                          static_cast<double>(tp) / static_cast<double>(n_pos), threshold});
  }
  roc.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return roc;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::size_t> clusters, const BootstrapOptions& opt) {
  check_sizes(scores, labels);
  if (!clusters.empty() && clusters.size() != scores.size()) {
    throw std::invalid_argument("bootstrap_ci: one cluster id per sample is required");
  }
  if (opt.n_boot == 0) throw std::invalid_argument("bootstrap_ci: n_boot must be positive");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must lie in (0, 1)");
  const auto point = c_statistic(scores, labels);
  if (!point) throw DataError("bootstrap_ci: both classes are required");

  std::vector<std::vector<std::size_t>> groups;
  if (clusters.empty()) {
    groups.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) groups[i] = {i};
  } else {
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      auto [it, inserted] = slot.emplace(clusters[i], groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }

  Philox rng(opt.seed, 0x626f6f74);
  ConfidenceInterval ci;
  std::vector<double> draws;
  draws.reserve(opt.n_boot);
  std::vector<double> s;
  std::vector<int> y;
  while (draws.size() < opt.n_boot) {
    s.clear();
    y.clear();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t i : groups[rng.below(groups.size())]) {
        s.push_back(scores[i]);
        y.push_back(labels[i]);
      }
    }
    auto auc = c_statistic(s, y);
    if (!auc) {
      if (++ci.redrawn * 2 > opt.n_boot) {
        throw DataError("bootstrap_ci: more than half of the resamples hold a single class "
                        "(too few positives or negatives)");
      }
      continue;
    }
    draws.push_back(*auc);
  }
  std::sort(draws.begin(), draws.end());
  const double alpha = (1.0 - opt.level) / 2.0;
  ci.low = std::min(quantile_sorted(draws, alpha), *point);
  ci.high = std::max(quantile_sorted(draws, 1.0 - alpha), *point);
  return ci;
}

// ---------------------------------------------------------------------------

std::string_view level_name(Level level) { return level == Level::Week ? "week" : "user"; }

std::vector<ScoredWeek> score_weeks(const train::ParameterStore<float>& params, const model::ModelConfig& cfg,
                                    const std::vector<const train::Example*>& examples) {
  std::vector<ScoredWeek> out;
  out.reserve(examples.size());
  for (const auto* ex : examples) {
    auto scores = train::final_scores(params, cfg, *ex);
    out.push_back({ex->user_id, std::vector<double>(scores.begin(), scores.end()), ex->diagnoses});
  }
  return out;
}

std::vector<TaskResult> evaluate_scores(const std::string& model_name, const std::vector<ScoredWeek>& weeks,
                                        const std::vector<std::string>& tasks, const BootstrapOptions& opt) {
  std::vector<TaskResult> results;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& task = tasks[k];
    std::vector<double> s;
    std::vector<int> y;
    std::vector<std::size_t> cluster;
    std::map<std::string, std::size_t> user_index;
    std::vector<double> user_sum;
    std::vector<std::size_t> user_count;
    std::vector<int> user_label;
    for (const auto& w : weeks) {
      auto it = w.diagnoses.find(task);
      if (it == w.diagnoses.end()) continue;
      auto [u, inserted] = user_index.emplace(w.user_id, user_sum.size());
      if (inserted) {
        user_sum.push_back(0.0);
        user_count.push_back(0);
        user_label.push_back(it->second);
      }
      s.push_back(w.scores[k]);
      y.push_back(it->second);
      cluster.push_back(u->second);
      user_sum[u->second] += w.scores[k];
      user_count[u->second]++;
    }
    std::vector<double> us(user_sum.size());
    for (std::size_t i = 0; i < us.size(); ++i) us[i] = user_sum[i] / static_cast<double>(user_count[i]);

    auto one = [&](Level level, const std::vector<double>& sc, const std::vector<int>& lab,
                   std::span<const std::size_t> cl) {
      TaskResult r;
      r.model = model_name;
      r.level = level;
      r.task = task;
      for (int v : lab) (v > 0 ? r.n_pos : r.n_neg)++;
      r.roc = roc_curve(sc, lab);
      if (r.roc) {
        r.auc = c_statistic(sc, lab);
        BootstrapOptions b = opt;
        b.seed = keyed_hash(opt.seed, "bootstrap", model_name + "/" + std::string(level_name(level)) + "/" + task);
        try {
          r.ci = bootstrap_ci(sc, lab, cl, b);
        } catch (const DataError&) {
          r.ci = {*r.auc, *r.auc, 0};
        }
      }
      results.push_back(std::move(r));
    };
    one(Level::Week, s, y, cluster);
    one(Level::User, us, user_label, {});
  }
  return results;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

namespace {

void manifest_line(std::ostream& out, const std::string& hash) { out << "# manifest=" << hash << "\n"; }

}  // namespace

void write_report_csv(std::ostream& out, const std::vector<TaskResult>& results, const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "model,level,task,auc,ci_low,ci_high,n_pos,n_neg\n";
  for (const auto& r : results) {
    out << r.model << "," << level_name(r.level) << "," << r.task << "," << format_optional(r.auc) << ","
        << (r.auc ? format_number(r.ci.low) : "") << "," << (r.auc ? format_number(r.ci.high) : "") << ","
        << r.n_pos << "," << r.n_neg << "\n";
  }
}

void write_roc_csv(std::ostream& out, const std::vector<TaskResult>& results, const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "model,level,task,fpr,tpr,threshold\n";
  for (const auto& r : results) {
    if (!r.roc) continue;
    for (const auto& p : r.roc->points) {
      out << r.model << "," << level_name(r.level) << "," << r.task << "," << format_number(p.fpr) << ","
          << format_number(p.tpr) << "," << (std::isinf(p.threshold) ? "inf" : format_number(p.threshold)) << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Feature baselines

std::vector<FeatureRow> feature_rows(const sensorstream::TensorCache& cache) {
  std::vector<FeatureRow> rows;
  rows.reserve(cache.weeks.size());
  for (const auto& cw : cache.weeks) {
    FeatureRow r;
    r.user_id = cw.week.user_id;
    r.week_start_ms = cw.week.week_start_ms;
    r.split = cw.split;
    r.raw = biomarkers::raw_features(biomarkers::heart_rate_series(cw.week));
    r.diagnoses = cw.diagnoses();
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows, const std::vector<std::string>& tasks,
                        const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "user_id,week_start,split";
  for (auto name : biomarkers::feature_names()) out << "," << name;
  for (const auto& t : tasks) out << "," << t;
  out << "\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.user_id << "," << r.week_start_ms << "," << sensorstream::partition_name(r.split);
    for (const auto& v : r.raw) {
      out << ",";
      if (v) {
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        out << buf;
      }
    }
    for (const auto& t : tasks) {
      out << ",";
      auto it = r.diagnoses.find(t);
      if (it != r.diagnoses.end()) out << it->second;
    }
    out << "\n";
  }
}

std::vector<FeatureRow> read_features_csv(std::istream& in, const sensorstream::TensorCache& cache) {
  std::map<std::pair<std::string, std::int64_t>, const sensorstream::CachedWeek*> index;
  for (const auto& cw : cache.weeks) index[{cw.week.user_id, cw.week.week_start_ms}] = &cw;
  std::vector<FeatureRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t expected_cells = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (!header_seen) {
      header_seen = true;
      const auto names = biomarkers::feature_names();
      bool ok = cells.size() >= 3 + names.size() && cells[0] == "user_id";
      for (std::size_t j = 0; ok && j < names.size(); ++j) ok = cells[3 + j] == names[j];
      if (!ok) throw DataError("features line " + std::to_string(line_no) + ": unexpected header");
      // Trailing label columns are informational; labels come from the cache.
      expected_cells = cells.size();
      continue;
    }
    if (cells.size() != expected_cells) {
      throw DataError("features line " + std::to_string(line_no) + ": expected " + std::to_string(expected_cells) +
                      " cells, got " + std::to_string(cells.size()));
    }
    FeatureRow r;
    r.user_id = cells[0];
    try {
      r.week_start_ms = std::stoll(cells[1]);
      for (std::size_t j = 0; j < biomarkers::kFeatureCount; ++j) {
        if (!cells[3 + j].empty()) r.raw[j] = std::stod(cells[3 + j]);
      }
    } catch (const std::exception&) {
      throw DataError("features line " + std::to_string(line_no) + ": bad number");
    }
    auto it = index.find({r.user_id, r.week_start_ms});
    if (it == index.end()) {
      throw DataError("features line " + std::to_string(line_no) + ": week not in cache for user " + r.user_id);
    }
    r.split = it->second->split;
    r.diagnoses = it->second->diagnoses();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TaskResult> run_baselines(const std::vector<FeatureRow>& rows, const std::vector<std::string>& tasks,
                                      const BaselineOptions& opt, const Logger& log) {
  std::vector<biomarkers::RawFeatures> train_raw;
  for (const auto& r : rows) {
    if (r.split == Partition::Train) train_raw.push_back(r.raw);
  }
  if (train_raw.empty()) throw DataError("baselines: no training-split feature rows");
  const auto imputer = biomarkers::Imputer::fit(train_raw);
  auto to_vec = [&](const FeatureRow& r) {
    const auto fv = imputer.apply(r.raw);
    return std::vector<double>(fv.values.begin(), fv.values.end());
  };
  std::vector<std::vector<double>> train_x;
  for (const auto& r : rows) {
    if (r.split == Partition::Train) train_x.push_back(to_vec(r));
  }
  const auto standardizer = model::Standardizer::fit(train_x);

  std::vector<std::vector<double>> x(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) x[i] = standardizer.apply(to_vec(rows[i]));

  std::vector<std::string> trained;
  std::vector<std::vector<double>> logistic_scores(rows.size()), mlp_scores(rows.size());
  for (const auto& task : tasks) {
    model::BinaryDataset train, tune;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto it = rows[i].diagnoses.find(task);
      if (it == rows[i].diagnoses.end()) continue;
      if (rows[i].split == Partition::Train) {
        train.x.push_back(x[i]);
        train.y.push_back(it->second);
      } else if (rows[i].split == Partition::Tune) {
        tune.x.push_back(x[i]);
        tune.y.push_back(it->second);
      }
    }
    if (!model::trainable(train)) {
      if (log) log("baselines: skipping task " + task + " (fewer than two labels of a class in training)");
      continue;
    }
    trained.push_back(task);
    const auto logistic = model::LogisticModel::fit(train, opt.logistic);
    auto mlp_opt = opt.mlp;
    mlp_opt.seed = keyed_hash(opt.mlp.seed, "mlp", task);
    const auto mlp = model::MlpModel::fit(train, tune, mlp_opt);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      logistic_scores[i].push_back(logistic.predict(x[i]));
      mlp_scores[i].push_back(mlp.predict(x[i]));
    }
  }

  std::vector<TaskResult> results;
  for (const auto& [name, scores] : {std::pair{std::string("logistic"), &logistic_scores},
                                     std::pair{std::string("mlp"), &mlp_scores}}) {
    std::vector<ScoredWeek> weeks;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].split != Partition::Test) continue;
      weeks.push_back({rows[i].user_id, (*scores)[i], rows[i].diagnoses});
    }
    auto part = evaluate_scores(name, weeks, trained, opt.bootstrap);
    results.insert(results.end(), part.begin(), part.end());
  }
  return results;
}

// ---------------------------------------------------------------------------
// Harnesses

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            job(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

namespace {

std::map<std::string, const TaskResult*> by_task(const std::vector<TaskResult>& results, Level level) {
  std::map<std::string, const TaskResult*> m;
  for (const auto& r : results) {
    if (r.level == level) m[r.task] = &r;
  }
  return m;
}

void note(const ExperimentOptions& opt, const std::string& message) {
  if (opt.log) opt.log(message);
}

}  // namespace

std::vector<SweepRow> label_fraction_sweep(const sensorstream::TensorCache& cache, const std::vector<double>& fractions,
                                           const std::vector<train::Pretraining>& modes,
                                           const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opt) {
  const auto data = train::make_dataset(cache, opt.model, train::Ablation::All);
  const auto test = data.split(Partition::Test);
  const std::size_t jobs = modes.size() * seeds.size();
  std::vector<std::vector<SweepRow>> slots(jobs);
  const std::size_t inner_threads = jobs >= opt.threads ? 1 : opt.threads;

  parallel_for(jobs, opt.threads, [&](std::size_t job) {
    const auto mode = modes[job / seeds.size()];
    const auto seed = seeds[job % seeds.size()];
    auto cfg = opt.train;
    cfg.seed = seed;
    cfg.pretraining = mode;
    cfg.threads = inner_threads;
    auto fail_rows = [&](double fraction, const std::string& why) {
      for (const auto& task : opt.model.tasks) {
        SweepRow r;
        r.fraction = fraction;
        r.mode = mode;
        r.seed = seed;
        r.task = task;
        r.status = "failed: " + why;
        slots[job].push_back(r);
      }
    };
    std::optional<train::ParameterStore<float>> init;
    try {
      if (mode == train::Pretraining::Autoencoder) {
        init = train::pretrain_autoencoder(data, opt.model, cfg).encoder;
      } else if (mode == train::Pretraining::Heuristic) {
        init = train::pretrain_heuristic(data, opt.model, cfg).encoder;
      }
    } catch (const std::exception& e) {
      note(opt, "sweep: pretraining failed mode=" + std::string(train::pretraining_name(mode)) +
                    " seed=" + std::to_string(seed) + ": " + e.what());
      for (double f : fractions) fail_rows(f, e.what());
      return;
    }
    for (double fraction : fractions) {
      cfg.label_fraction = fraction;
      try {
        auto result = train::train_supervised(data, opt.model, cfg, init ? &*init : nullptr);
        auto results = evaluate_scores("deepheart", score_weeks(result.params, opt.model, test), opt.model.tasks,
                                       opt.bootstrap);
        auto user = by_task(results, Level::User);
        auto week = by_task(results, Level::Week);
        for (const auto& task : opt.model.tasks) {
          SweepRow r;
          r.fraction = fraction;
          r.mode = mode;
          r.seed = seed;
          r.task = task;
          r.auc = user.at(task)->auc;
          r.ci = user.at(task)->ci;
          r.auc_week = week.at(task)->auc;
          r.train_users = result.train_users;
          if (!r.auc) r.status = "single-class";
          slots[job].push_back(r);
        }
        note(opt, "sweep: done mode=" + std::string(train::pretraining_name(mode)) + " seed=" +
                      std::to_string(seed) + " fraction=" + format_number(fraction));
      } catch (const std::exception& e) {
        note(opt, "sweep: cell failed fraction=" + format_number(fraction) + ": " + e.what());
        fail_rows(fraction, e.what());
      }
    }
  });

  std::vector<SweepRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  auto mode_rank = [&](train::Pretraining m) { return std::find(modes.begin(), modes.end(), m) - modes.begin(); };
  auto task_rank = [&](const std::string& t) {
    return std::find(opt.model.tasks.begin(), opt.model.tasks.end(), t) - opt.model.tasks.begin();
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) {
    return std::make_tuple(a.fraction, mode_rank(a.mode), a.seed, task_rank(a.task)) <
           std::make_tuple(b.fraction, mode_rank(b.mode), b.seed, task_rank(b.task));
  });
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "fraction,mode,seed,task,auc,ci_low,ci_high,auc_week,train_users,status\n";
  for (const auto& r : rows) {
    out << format_number(r.fraction) << "," << train::pretraining_name(r.mode) << "," << r.seed << "," << r.task
        << "," << format_optional(r.auc) << "," << (r.auc ? format_number(r.ci.low) : "") << ","
        << (r.auc ? format_number(r.ci.high) : "") << "," << format_optional(r.auc_week) << "," << r.train_users
        << "," << r.status << "\n";
  }
}

std::vector<AblationRow> channel_ablation(const sensorstream::TensorCache& cache, const std::vector<train::Ablation>& modes,
                                          const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opt) {
  std::vector<train::Dataset> datasets;
  for (auto m : modes) datasets.push_back(train::make_dataset(cache, opt.model, m));
  const std::size_t jobs = modes.size() * seeds.size();
  std::vector<std::vector<AblationRow>> slots(jobs);
  const std::size_t inner_threads = jobs >= opt.threads ? 1 : opt.threads;
  parallel_for(jobs, opt.threads, [&](std::size_t job) {
    const std::size_t mi = job / seeds.size();
    const auto seed = seeds[job % seeds.size()];
    auto cfg = opt.train;
    cfg.seed = seed;
    cfg.ablation = modes[mi];
    cfg.threads = inner_threads;
    try {
      const auto& data = datasets[mi];
      auto result = train::train_supervised(data, opt.model, cfg);
      auto results = evaluate_scores("deepheart", score_weeks(result.params, opt.model, data.split(Partition::Test)),
                                     opt.model.tasks, opt.bootstrap);
      auto user = by_task(results, Level::User);
      for (const auto& task : opt.model.tasks) {
        AblationRow r;
        r.mode = modes[mi];
        r.seed = seed;
        r.task = task;
        r.auc = user.at(task)->auc;
        r.ci = user.at(task)->ci;
        if (!r.auc) r.status = "single-class";
        slots[job].push_back(r);
      }
      note(opt, "ablate: done mode=" + std::string(train::ablation_name(modes[mi])) + " seed=" + std::to_string(seed));
    } catch (const std::exception& e) {
      note(opt, "ablate: cell failed: " + std::string(e.what()));
      for (const auto& task : opt.model.tasks) {
        AblationRow r;
        r.mode = modes[mi];
        r.seed = seed;
        r.task = task;
        r.status = std::string("failed: ") + e.what();
        slots[job].push_back(r);
      }
    }
  });
  std::vector<AblationRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  std::map<std::pair<std::uint64_t, std::string>, double> reference;
  for (const auto& r : rows) {
    if (r.mode == train::Ablation::All && r.auc) reference[{r.seed, r.task}] = *r.auc;
  }
  for (auto& r : rows) {
    auto it = reference.find({r.seed, r.task});
    if (r.auc && it != reference.end()) r.delta_vs_all = *r.auc - it->second;
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "mode,seed,task,auc,ci_low,ci_high,delta_vs_all,status\n";
  for (const auto& r : rows) {
    out << train::ablation_name(r.mode) << "," << r.seed << "," << r.task << "," << format_optional(r.auc) << ","
        << (r.auc ? format_number(r.ci.low) : "") << "," << (r.auc ? format_number(r.ci.high) : "") << ","
        << format_optional(r.delta_vs_all) << "," << r.status << "\n";
  }
}

std::vector<GridRow> grid_runner(const sensorstream::TensorCache& cache, const std::vector<model::ModelConfig>& grid,
                                 const ExperimentOptions& opt) {
  std::vector<GridRow> rows(grid.size());
  const std::size_t inner_threads = grid.size() >= opt.threads ? 1 : opt.threads;
  parallel_for(grid.size(), opt.threads, [&](std::size_t i) {
    GridRow& row = rows[i];
    row.config = grid[i];
    row.auc.assign(grid[i].tasks.size(), std::nullopt);
    try {
      const auto data = train::make_dataset(cache, grid[i], opt.train.ablation);
      auto cfg = opt.train;
      cfg.threads = inner_threads;
      auto result = train::train_supervised(data, grid[i], cfg);
      std::vector<double> s;
      std::vector<int> y;
      const auto tune = data.split(Partition::Tune);
      const auto scored = score_weeks(result.params, grid[i], tune);
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t k = 0; k < grid[i].tasks.size(); ++k) {
        s.clear();
        y.clear();
        for (const auto& w : scored) {
          auto it = w.diagnoses.find(grid[i].tasks[k]);
          if (it == w.diagnoses.end()) continue;
          s.push_back(w.scores[k]);
          y.push_back(it->second);
        }
        row.auc[k] = c_statistic(s, y);
        if (row.auc[k]) {
          sum += *row.auc[k];
          ++defined;
        }
      }
      if (defined == grid[i].tasks.size()) row.average = sum / static_cast<double>(defined);
      note(opt, "grid: done width=" + std::to_string(grid[i].width) + " conv=" + std::to_string(grid[i].conv_depth) +
                    " lstm=" + std::to_string(grid[i].lstm_depth) + " filter=" + std::to_string(grid[i].initial_filter));
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      note(opt, "grid: cell failed: " + row.status);
    }
  });
  return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows, const std::vector<std::string>& tasks,
                    const std::string& manifest_hash) {
  manifest_line(out, manifest_hash);
  out << "width,conv_depth,lstm_depth,initial_filter";
  for (const auto& t : tasks) out << "," << t;
  out << ",average,status\n";
  for (const auto& r : rows) {
    out << r.config.width << "," << r.config.conv_depth << "," << r.config.lstm_depth << ","
        << r.config.initial_filter;
    for (const auto& a : r.auc) out << "," << format_optional(a);
    out << "," << format_optional(r.average) << "," << r.status << "\n";
  }
}

}  // namespace deepheart::eval
