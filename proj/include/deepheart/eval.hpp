#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deepheart/biomarkers.hpp"
#include "deepheart/cache.hpp"
#include "deepheart/train.hpp"

namespace deepheart::eval {

// ---------------------------------------------------------------------------
// Discrimination metrics

// Mann-Whitney probability that a random positive (+1) outscores a random
// negative (-1), ties counted one half. nullopt unless both classes occur.
std::optional<double> c_statistic(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are called positive
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;              // trapezoidal area
};

std::optional<RocCurve> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  std::size_t redrawn = 0;  // single-class resamples that were redrawn
};

struct BootstrapOptions {
  std::size_t n_boot = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

// Percentile bootstrap of the c-statistic. With `clusters` (one id per
// sample) whole clusters are resampled. The interval is widened if needed
// so it always contains the point estimate. Throws DataError when a class is
// missing or more than half of the draws were single-class.
ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                std::span<const std::size_t> clusters, const BootstrapOptions& opt);

// Linear-interpolated quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// ---------------------------------------------------------------------------
// Reports

enum class Level { Week, User };
std::string_view level_name(Level level);

struct TaskResult {
  std::string model;
  Level level = Level::User;
  std::string task;
  std::optional<double> auc;
  ConfidenceInterval ci;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::optional<RocCurve> roc;
};

// One score per task for one person-week.
struct ScoredWeek {
  std::string user_id;
  std::vector<double> scores;
  sensorstream::Diagnoses diagnoses;
};

std::vector<ScoredWeek> score_weeks(const train::ParameterStore<float>& params, const model::ModelConfig& cfg,
                                    const std::vector<const train::Example*>& examples);

// Week-level results (bootstrap clustered by user) and user-level results
// (mean of a user's week scores, one sample per user) for every task.
std::vector<TaskResult> evaluate_scores(const std::string& model_name, const std::vector<ScoredWeek>& weeks,
                                        const std::vector<std::string>& tasks, const BootstrapOptions& opt);

// Header: model,level,task,auc,ci_low,ci_high,n_pos,n_neg
void write_report_csv(std::ostream& out, const std::vector<TaskResult>& results, const std::string& manifest_hash);
// Header: model,level,task,fpr,tpr,threshold
void write_roc_csv(std::ostream& out, const std::vector<TaskResult>& results, const std::string& manifest_hash);

// Fixed-precision formatting used in every CSV.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

// ---------------------------------------------------------------------------
// Feature baselines

struct FeatureRow {
  std::string user_id;
  std::int64_t week_start_ms = 0;
  sensorstream::Partition split = sensorstream::Partition::Train;
  biomarkers::RawFeatures raw{};
  sensorstream::Diagnoses diagnoses;
};

std::vector<FeatureRow> feature_rows(const sensorstream::TensorCache& cache);
// Header: user_id,week_start,split,<13 feature names>,<one label column per
// task>. An empty feature cell is undefined, an empty label cell is masked.
void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows, const std::vector<std::string>& tasks,
                        const std::string& manifest_hash);
// Reads features and takes split and labels from the cache rows with the same
// (user_id, week_start). Throws DataError on unknown weeks or bad cells.
std::vector<FeatureRow> read_features_csv(std::istream& in, const sensorstream::TensorCache& cache);

struct BaselineOptions {
  model::LogisticOptions logistic;
  model::MlpOptions mlp;
  BootstrapOptions bootstrap;
};

using Logger = std::function<void(const std::string&)>;

// Logistic and MLP per task, trained on the train split, scored on test.
// Tasks lacking two examples of each class are skipped with a log line.
std::vector<TaskResult> run_baselines(const std::vector<FeatureRow>& rows, const std::vector<std::string>& tasks,
                                      const BaselineOptions& opt, const Logger& log = {});

// ---------------------------------------------------------------------------
// Experiment harnesses

struct ExperimentOptions {
  model::ModelConfig model;
  train::TrainConfig train;
  BootstrapOptions bootstrap;
  std::size_t threads = 1;  // concurrent cells
  Logger log;
};

struct SweepRow {
  double fraction = 1.0;
  train::Pretraining mode = train::Pretraining::None;
  std::uint64_t seed = 0;
  std::string task;
  std::optional<double> auc;  // user level
  ConfidenceInterval ci;
  std::optional<double> auc_week;
  std::size_t train_users = 0;
  std::string status = "ok";
};

std::vector<SweepRow> label_fraction_sweep(const sensorstream::TensorCache& cache, const std::vector<double>& fractions,
                                           const std::vector<train::Pretraining>& modes,
                                           const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opt);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, const std::string& manifest_hash);

struct AblationRow {
  train::Ablation mode = train::Ablation::All;
  std::uint64_t seed = 0;
  std::string task;
  std::optional<double> auc;
  ConfidenceInterval ci;
  std::optional<double> delta_vs_all;
  std::string status = "ok";
};

std::vector<AblationRow> channel_ablation(const sensorstream::TensorCache& cache, const std::vector<train::Ablation>& modes,
                                          const std::vector<std::uint64_t>& seeds, const ExperimentOptions& opt);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows, const std::string& manifest_hash);

struct GridRow {
  model::ModelConfig config;
  std::vector<std::optional<double>> auc;  // per task, tune split, week level
  std::optional<double> average;
  std::string status = "ok";
};

std::vector<GridRow> grid_runner(const sensorstream::TensorCache& cache, const std::vector<model::ModelConfig>& grid,
                                 const ExperimentOptions& opt);
void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows, const std::vector<std::string>& tasks,
                    const std::string& manifest_hash);

// Runs job(i) for i in [0, n) on up to `threads` workers. Each job owns its
// output slot, so results do not depend on scheduling. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job);

}  // namespace deepheart::eval
