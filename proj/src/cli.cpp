#include "deepheart/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "deepheart/cache.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/eval.hpp"
#include "deepheart/io.hpp"
#include "deepheart/kvconfig.hpp"
#include "deepheart/manifest.hpp"
#include "deepheart/synthcohort.hpp"
#include "deepheart/train.hpp"

namespace deepheart::cli {

namespace fs = std::filesystem;
namespace ss = sensorstream;

namespace {

// One line per event: `level=info event=train.epoch epoch=3 ...`.
class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}

  void operator()(std::string_view level, std::string_view event,
                  std::initializer_list<std::pair<std::string_view, std::string>> fields = {}) const {
    std::ostringstream line;
    line << "level=" << level << " event=" << event;
    for (const auto& [k, v] : fields) line << " " << k << "=" << quote(v);
    err_ << line.str() << "\n";
    err_.flush();
  }
  void info(std::string_view event, std::initializer_list<std::pair<std::string_view, std::string>> f = {}) const {
    (*this)("info", event, f);
  }
  void warn(std::string_view event, std::initializer_list<std::pair<std::string_view, std::string>> f = {}) const {
    (*this)("warn", event, f);
  }

 private:
  static std::string quote(const std::string& v) {
    if (!v.empty() && v.find_first_of(" \"=") == std::string::npos) return v;
    std::string q = "\"";
    for (char c : v) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q + "\"";
  }
  std::ostream& err_;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Flat key = value config file");
  sub->add_option("--seed", c.seed, "Seed overriding every seed in the config");
  sub->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

KeyValueConfig load_config(const Common& c) {
  if (c.config_path.empty()) return {};
  if (!fs::exists(c.config_path)) throw UsageError("config file not found: " + c.config_path);
  return KeyValueConfig::load(c.config_path);
}

std::string join(const std::vector<std::string>& args) {
  std::string s;
  for (std::size_t i = 0; i < args.size(); ++i) s += (i ? " " : "") + args[i];
  return s;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const char* flag) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": not a number: " + item);
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

struct Context {
  std::vector<std::string> args;
  Log log;
  RunManifest manifest;

  Context(const std::vector<std::string>& a, std::ostream& err) : args(a), log(err) {
    manifest.add("invocation.command_line", join(args));
    manifest.add("tool.version", kToolVersion);
    manifest.add("time.start", RunManifest::utc_timestamp());
  }

  void input(const std::string& role, const fs::path& path) {
    if (!fs::exists(path)) throw DataError(role + " file not found: " + path.string());
    manifest.add("input." + role + ".sha1", io::git_blob_hash_file(path));
  }

  // Writes `<out>.manifest` before the result itself and returns its hash.
  std::string seal(const fs::path& out) {
    manifest.add("invocation.output", out.string());
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    const auto hash = manifest.write(manifest_path_for(out));
    log.info("manifest.written", {{"path", manifest_path_for(out).string()}, {"hash", hash}});
    return hash;
  }
};

model::ModelConfig model_config(const KeyValueConfig& kv) { return model::model_config_from(kv); }

train::TrainConfig train_config(const KeyValueConfig& kv, const Common& c) {
  auto cfg = train::train_config_from(kv);
  if (c.seed) cfg.seed = *c.seed;
  cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

eval::BootstrapOptions bootstrap_options(const KeyValueConfig& kv, std::uint64_t seed) {
  eval::BootstrapOptions b;
  if (auto v = kv.get_int("eval.n_boot")) b.n_boot = static_cast<std::size_t>(std::max<std::int64_t>(1, *v));
  if (auto v = kv.get_double("eval.level")) b.level = *v;
  b.seed = seed;
  if (auto v = kv.get_int("eval.seed")) b.seed = static_cast<std::uint64_t>(*v);
  return b;
}

ss::TensorCache load_cache(Context& ctx, const std::string& path) {
  ctx.input("cache", path);
  auto cache = ss::read_cache(path);
  ctx.log.info("cache.loaded", {{"path", path}, {"weeks", std::to_string(cache.weeks.size())}});
  return cache;
}

void add_label_counts(RunManifest& m, const std::string& prefix, const ss::TensorCache& cache) {
  for (const auto& task : cache.tasks) {
    std::size_t pos = 0, neg = 0;
    for (const auto& w : cache.weeks) {
      auto d = w.diagnoses();
      auto it = d.find(task);
      if (it != d.end()) (it->second > 0 ? pos : neg)++;
    }
    m.add(prefix + task, std::to_string(pos) + "+/" + std::to_string(neg) + "-");
  }
}

std::string render(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

train::EpochCallback epoch_logger(const Log& log) {
  return [&log](const std::string& phase, const train::EpochLog& e) {
    log.info("train.epoch", {{"phase", phase},
                             {"epoch", std::to_string(e.epoch)},
                             {"train_loss", eval::format_number(e.train_loss)},
                             {"tune_loss", eval::format_number(e.tune_loss)}});
  };
}

std::string epoch_csv(const std::string& hash, const std::vector<std::pair<std::string, train::EpochLog>>& rows) {
  return render([&](std::ostream& o) {
    o << "# manifest=" << hash << "\nphase,epoch,train_loss,tune_loss\n";
    char buf[64];
    for (const auto& [phase, e] : rows) {
      std::snprintf(buf, sizeof buf, "%.9g,%.9g", e.train_loss, e.tune_loss);
      o << phase << "," << e.epoch << "," << buf << "\n";
    }
  });
}

std::vector<std::uint64_t> seed_list(std::size_t n, std::uint64_t base) {
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = base + i;
  return seeds;
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenerateArgs {
  Common common;
  std::string records_out, labels_out;
  std::optional<std::size_t> users;
};

void run_generate(Context& ctx, const GenerateArgs& a) {
  const auto kv = load_config(a.common);
  auto section = kv.section("synth");
  auto cfg = synthcohort::synth_config_from(section);
  if (a.common.seed) cfg.seed = *a.common.seed;
  if (a.users) cfg.n_users = *a.users;
  cfg.validate();
  ctx.manifest.add_block("config.synth.", synthcohort::synth_config_text(cfg));
  const auto cohort = synthcohort::generate_cohort(cfg);
  const fs::path records_path(a.records_out);
  const fs::path labels_path =
      a.labels_out.empty() ? records_path.parent_path() / "labels.csv" : fs::path(a.labels_out);
  ctx.manifest.add("output.records", std::to_string(cohort.records.size()));
  ctx.manifest.add("output.users", std::to_string(cohort.users.size()));
  ctx.manifest.add("output.labels_path", labels_path.string());
  ctx.seal(records_path);
  if (labels_path.has_parent_path()) fs::create_directories(labels_path.parent_path());
  io::write_file_atomic(records_path, render([&](std::ostream& o) { synthcohort::write_records_jsonl(o, cohort.records); }));
  io::write_file_atomic(labels_path, render([&](std::ostream& o) { synthcohort::write_labels_csv(o, cohort.labels); }));
  ctx.log.info("generate.done", {{"users", std::to_string(cohort.users.size())},
                                 {"records", std::to_string(cohort.records.size())},
                                 {"records_path", records_path.string()}});
  const auto plant = synthcohort::plant_check(cohort.records, cohort.labels, cfg);
  for (const auto& t : plant.tasks) {
    ctx.log.info("generate.plant_check", {{"task", t.task},
                                          {"n_pos", std::to_string(t.n_pos)},
                                          {"n_neg", std::to_string(t.n_neg)},
                                          {"std_diff", eval::format_number(t.standardized_difference)},
                                          {"too_small", t.sample_too_small ? "true" : "false"}});
  }
}

struct EncodeArgs {
  Common common;
  std::string records, labels, out, splits;
  std::optional<int> pool_stages;
};

void run_encode(Context& ctx, const EncodeArgs& a) {
  const auto kv = load_config(a.common);
  ss::EncodeOptions opt;
  const auto enc = kv.section("encode");
  if (auto v = enc.get_string("splits")) opt.fractions = ss::parse_split_fractions(*v);
  if (!a.splits.empty()) opt.fractions = ss::parse_split_fractions(a.splits);
  if (auto v = enc.get_int("seed")) opt.seed = static_cast<std::uint64_t>(*v);
  if (a.common.seed) opt.seed = *a.common.seed;
  // Pool stages follow the model depth unless given explicitly.
  opt.pool_stages = model_config(kv).pool_stages();
  if (auto v = enc.get_int("pool_stages")) opt.pool_stages = static_cast<int>(*v);
  if (a.pool_stages) opt.pool_stages = *a.pool_stages;
  if (opt.pool_stages < 0) throw UsageError("--pool-stages must be >= 0");
  if (auto v = kv.get_string("model.tasks")) opt.tasks = split_list(*v);

  ctx.input("records", a.records);
  auto parsed = ss::parse_records_file(a.records);
  for (const auto& [reason, n] : parsed.rejected.items()) {
    if (n) ctx.log.warn("encode.rejected_records", {{"reason", reason}, {"count", std::to_string(n)}});
  }
  std::map<std::string, ss::Diagnoses> labels;
  if (!a.labels.empty()) {
    ctx.input("labels", a.labels);
    labels = ss::parse_labels_file(a.labels);
  }
  ss::EncodeStats stats;
  const auto cache = ss::build_cache(parsed.records, labels, opt, &stats);
  ctx.manifest.add("config.encode.seed", std::to_string(opt.seed));
  ctx.manifest.add("config.encode.pool_stages", std::to_string(opt.pool_stages));
  ctx.manifest.add("config.encode.splits", eval::format_number(opt.fractions.train) + "," +
                                               eval::format_number(opt.fractions.tune) + "," +
                                               eval::format_number(opt.fractions.test));
  ctx.manifest.add("stats.records", std::to_string(stats.records));
  ctx.manifest.add("stats.users", std::to_string(stats.users));
  ctx.manifest.add("stats.weeks_total", std::to_string(stats.weeks_total));
  ctx.manifest.add("stats.weeks_accepted", std::to_string(stats.weeks_accepted));
  ctx.manifest.add("stats.events_truncated", std::to_string(stats.events_truncated));
  for (const auto& [reason, n] : stats.rejected_by_reason) ctx.manifest.add("stats.rejected." + reason, std::to_string(n));
  add_label_counts(ctx.manifest, "labels.", cache);
  ctx.seal(a.out);
  ss::write_cache(a.out, cache);
  ctx.log.info("encode.done", {{"weeks", std::to_string(cache.weeks.size())},
                               {"weeks_total", std::to_string(stats.weeks_total)},
                               {"out", a.out}});
  if (cache.weeks.empty()) ctx.log.warn("encode.empty", {{"detail", "no week passed the quality filters"}});
}

struct CacheOutArgs {
  Common common;
  std::string cache, out;
};

void run_features(Context& ctx, const CacheOutArgs& a) {
  const auto cache = load_cache(ctx, a.cache);
  const auto rows = eval::feature_rows(cache);
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_features_csv(o, rows, cache.tasks, hash); }));
  ctx.log.info("features.done", {{"rows", std::to_string(rows.size())}, {"out", a.out}});
}

struct PretrainArgs {
  Common common;
  std::string mode, cache, out, log_path;
};

void run_pretrain(Context& ctx, const PretrainArgs& a) {
  const auto kv = load_config(a.common);
  const auto mcfg = model_config(kv);
  auto tcfg = train_config(kv, a.common);
  tcfg.pretraining = train::parse_pretraining(a.mode);
  if (tcfg.pretraining == train::Pretraining::None) throw UsageError("--mode must be autoencoder or heuristic");
  const auto cache = load_cache(ctx, a.cache);
  const auto data = train::make_dataset(cache, mcfg, train::Ablation::All);
  auto result = tcfg.pretraining == train::Pretraining::Autoencoder
                    ? train::pretrain_autoencoder(data, mcfg, tcfg, epoch_logger(ctx.log))
                    : train::pretrain_heuristic(data, mcfg, tcfg, epoch_logger(ctx.log));
  ctx.manifest.add_block("config.", mcfg.canonical_text());
  ctx.manifest.add_block("config.", tcfg.canonical_text());
  ctx.manifest.add("result.epochs", std::to_string(result.log.size()));
  if (!result.log.empty()) ctx.manifest.add("result.final_train_loss", eval::format_number(result.log.back().train_loss));
  const auto hash = ctx.seal(a.out);
  train::Checkpoint ckpt{mcfg, train::CheckpointKind::Encoder, cache.norm, result.encoder};
  train::save_checkpoint(a.out, ckpt);
  if (!a.log_path.empty()) {
    std::vector<std::pair<std::string, train::EpochLog>> rows;
    for (const auto& e : result.log) rows.emplace_back(a.mode, e);
    io::write_file_atomic(a.log_path, epoch_csv(hash, rows));
  }
  ctx.log.info("pretrain.done", {{"mode", a.mode}, {"out", a.out}});
}

struct TrainArgs {
  Common common;
  std::string cache, init, out, log_path;
  std::optional<double> label_fraction;
  std::string ablation;
};

void run_train(Context& ctx, const TrainArgs& a) {
  const auto kv = load_config(a.common);
  const auto mcfg = model_config(kv);
  auto tcfg = train_config(kv, a.common);
  if (a.label_fraction) tcfg.label_fraction = *a.label_fraction;
  if (!a.ablation.empty()) tcfg.ablation = train::parse_ablation(a.ablation);
  tcfg.validate();
  const auto cache = load_cache(ctx, a.cache);
  const auto data = train::make_dataset(cache, mcfg, tcfg.ablation);
  std::optional<train::Checkpoint> init;
  if (!a.init.empty()) {
    ctx.input("init", a.init);
    init = train::load_checkpoint(a.init, &mcfg);
    ctx.log.info("train.init", {{"path", a.init}, {"parameters", std::to_string(init->params.size())}});
  }
  auto result = train::train_supervised(data, mcfg, tcfg, init ? &init->params : nullptr, epoch_logger(ctx.log));
  ctx.manifest.add_block("config.", mcfg.canonical_text());
  ctx.manifest.add_block("config.", tcfg.canonical_text());
  ctx.manifest.add("result.epochs_run", std::to_string(result.epochs_run));
  ctx.manifest.add("result.best_epoch", std::to_string(result.best_epoch));
  ctx.manifest.add("result.train_weeks", std::to_string(result.train_weeks));
  ctx.manifest.add("result.train_users", std::to_string(result.train_users));
  for (const auto& [task, c] : result.label_counts) {
    ctx.manifest.add("labels.train." + task, std::to_string(c.positive) + "+/" + std::to_string(c.negative) + "-");
  }
  const auto hash = ctx.seal(a.out);
  train::save_checkpoint(a.out, {mcfg, train::CheckpointKind::Classifier, cache.norm, result.params});
  if (!a.log_path.empty()) {
    std::vector<std::pair<std::string, train::EpochLog>> rows;
    for (const auto& e : result.log) rows.emplace_back("supervised", e);
    io::write_file_atomic(a.log_path, epoch_csv(hash, rows));
  }
  ctx.log.info("train.done", {{"epochs", std::to_string(result.epochs_run)},
                              {"best_epoch", std::to_string(result.best_epoch)},
                              {"out", a.out}});
}

struct EvaluateArgs {
  Common common;
  std::string cache, model_path, out, roc, split = "test", ablation;
};

void run_evaluate(Context& ctx, const EvaluateArgs& a) {
  const auto kv = load_config(a.common);
  const auto cache = load_cache(ctx, a.cache);
  ctx.input("model", a.model_path);
  const auto ckpt = train::load_checkpoint(a.model_path);
  if (ckpt.kind != train::CheckpointKind::Classifier) throw UsageError("--model must be a trained classifier checkpoint");
  const auto ablation = train::parse_ablation(a.ablation.empty() ? "all" : a.ablation);
  const auto data = train::make_dataset(cache, ckpt.config, ablation);
  ss::Partition part;
  if (a.split == "test") part = ss::Partition::Test;
  else if (a.split == "tune") part = ss::Partition::Tune;
  else if (a.split == "train") part = ss::Partition::Train;
  else throw UsageError("--split must be train, tune or test");
  const auto boot = bootstrap_options(kv, a.common.seed.value_or(0));
  const auto results =
      eval::evaluate_scores("deepheart", eval::score_weeks(ckpt.params, ckpt.config, data.split(part)), ckpt.config.tasks, boot);
  ctx.manifest.add_block("config.", ckpt.config.canonical_text());
  ctx.manifest.add("config.eval.split", a.split);
  ctx.manifest.add("config.eval.ablation", std::string(train::ablation_name(ablation)));
  ctx.manifest.add("config.eval.n_boot", std::to_string(boot.n_boot));
  ctx.manifest.add("config.eval.seed", std::to_string(boot.seed));
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_report_csv(o, results, hash); }));
  if (!a.roc.empty()) io::write_file_atomic(a.roc, render([&](std::ostream& o) { eval::write_roc_csv(o, results, hash); }));
  for (const auto& r : results) {
    ctx.log.info("evaluate.task", {{"level", std::string(eval::level_name(r.level))},
                                   {"task", r.task},
                                   {"auc", eval::format_optional(r.auc)}});
  }
}

struct SweepArgs {
  Common common;
  std::string cache, out, fractions = "0.05,0.1,0.2,0.5,0.7,1.0", modes = "none,heuristic,autoencoder";
  std::size_t seeds = 5;
};

eval::ExperimentOptions experiment_options(Context& ctx, const KeyValueConfig& kv, const Common& c) {
  eval::ExperimentOptions opt;
  opt.model = model_config(kv);
  opt.train = train_config(kv, c);
  opt.bootstrap = bootstrap_options(kv, opt.train.seed);
  opt.threads = c.threads;
  const Log* log = &ctx.log;
  opt.log = [log](const std::string& m) { log->info("progress", {{"msg", m}}); };
  ctx.manifest.add_block("config.", opt.model.canonical_text());
  ctx.manifest.add_block("config.", opt.train.canonical_text());
  ctx.manifest.add("config.eval.n_boot", std::to_string(opt.bootstrap.n_boot));
  ctx.manifest.add("config.eval.seed", std::to_string(opt.bootstrap.seed));
  return opt;
}

void run_sweep(Context& ctx, const SweepArgs& a) {
  const auto kv = load_config(a.common);
  const auto cache = load_cache(ctx, a.cache);
  auto opt = experiment_options(ctx, kv, a.common);
  const auto fractions = parse_doubles(a.fractions, "--fractions");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw UsageError("--fractions: each value must lie in (0, 1]");
  }
  std::vector<train::Pretraining> modes;
  for (const auto& m : split_list(a.modes)) modes.push_back(train::parse_pretraining(m));
  if (modes.empty()) throw UsageError("--modes: empty list");
  if (a.seeds == 0) throw UsageError("--seeds must be >= 1");
  const auto seeds = seed_list(a.seeds, opt.train.seed);
  ctx.manifest.add("config.sweep.fractions", a.fractions);
  ctx.manifest.add("config.sweep.modes", a.modes);
  ctx.manifest.add("config.sweep.seeds", std::to_string(a.seeds));
  const auto rows = eval::label_fraction_sweep(cache, fractions, modes, seeds, opt);
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_sweep_csv(o, rows, hash); }));
  ctx.log.info("sweep.done", {{"rows", std::to_string(rows.size())}, {"out", a.out}});
}

struct AblateArgs {
  Common common;
  std::string cache, out, modes = "all,hr_only,steps_only";
  std::size_t seeds = 1;
};

void run_ablate(Context& ctx, const AblateArgs& a) {
  const auto kv = load_config(a.common);
  const auto cache = load_cache(ctx, a.cache);
  auto opt = experiment_options(ctx, kv, a.common);
  std::vector<train::Ablation> modes;
  for (const auto& m : split_list(a.modes)) modes.push_back(train::parse_ablation(m));
  if (modes.empty()) throw UsageError("--modes: empty list");
  if (a.seeds == 0) throw UsageError("--seeds must be >= 1");
  ctx.manifest.add("config.ablate.modes", a.modes);
  ctx.manifest.add("config.ablate.seeds", std::to_string(a.seeds));
  const auto rows = eval::channel_ablation(cache, modes, seed_list(a.seeds, opt.train.seed), opt);
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_ablation_csv(o, rows, hash); }));
  ctx.log.info("ablate.done", {{"rows", std::to_string(rows.size())}, {"out", a.out}});
}

struct GridArgs {
  Common common;
  std::string cache, out;
  std::optional<std::size_t> limit;
};

void run_grid(Context& ctx, const GridArgs& a) {
  const auto kv = load_config(a.common);
  const auto cache = load_cache(ctx, a.cache);
  auto opt = experiment_options(ctx, kv, a.common);
  auto grid = model::hyperparameter_grid(opt.model.tasks);
  for (auto& g : grid) {
    g.dropout_p = opt.model.dropout_p;
    g.residual_filter = opt.model.residual_filter;
    g.pool = opt.model.pool;
  }
  if (a.limit && *a.limit < grid.size()) grid.resize(*a.limit);
  ctx.manifest.add("config.grid.cells", std::to_string(grid.size()));
  const auto rows = eval::grid_runner(cache, grid, opt);
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_grid_csv(o, rows, opt.model.tasks, hash); }));
  ctx.log.info("grid.done", {{"rows", std::to_string(rows.size())}, {"out", a.out}});
}

struct BaselinesArgs {
  Common common;
  std::string cache, features, out;
};

void run_baselines(Context& ctx, const BaselinesArgs& a) {
  const auto kv = load_config(a.common);
  const auto cache = load_cache(ctx, a.cache);
  std::vector<eval::FeatureRow> rows;
  if (!a.features.empty()) {
    ctx.input("features", a.features);
    std::ifstream in(a.features);
    rows = eval::read_features_csv(in, cache);
  } else {
    rows = eval::feature_rows(cache);
  }
  eval::BaselineOptions opt;
  const std::uint64_t seed = a.common.seed.value_or(kv.get_int("train.seed").value_or(0));
  opt.bootstrap = bootstrap_options(kv, seed);
  opt.mlp.seed = seed;
  if (auto v = kv.get_double("baseline.l2")) opt.logistic.l2 = *v;
  if (auto v = kv.get_int("baseline.mlp_hidden")) opt.mlp.hidden = static_cast<std::size_t>(*v);
  auto tasks = cache.tasks;
  if (auto v = kv.get_string("model.tasks")) tasks = split_list(*v);
  const Log* log = &ctx.log;
  const auto results = eval::run_baselines(rows, tasks, opt, [log](const std::string& m) { log->warn("baselines", {{"msg", m}}); });
  ctx.manifest.add("config.baseline.l2", eval::format_number(opt.logistic.l2));
  ctx.manifest.add("config.baseline.mlp_hidden", std::to_string(opt.mlp.hidden));
  ctx.manifest.add("config.eval.seed", std::to_string(opt.bootstrap.seed));
  const auto hash = ctx.seal(a.out);
  io::write_file_atomic(a.out, render([&](std::ostream& o) { eval::write_report_csv(o, results, hash); }));
  ctx.log.info("baselines.done", {{"rows", std::to_string(results.size())}, {"out", a.out}});
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Wearable heart-rate sequence models: data generation, encoding, training and evaluation",
               "deepheart"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic cohort (records and labels)");
  add_common(g, gen.common);
  g->add_option("--out", gen.records_out, "Records file (JSON lines)")->required();
  g->add_option("--labels", gen.labels_out, "Labels CSV (default: labels.csv next to --out)");
  g->add_option("--users", gen.users, "Number of users");

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Filter person-weeks and write a tensor cache");
  add_common(e, enc.common);
  e->add_option("--input,--records", enc.records, "JSON-lines sensor records")->required();
  e->add_option("--labels", enc.labels, "user_id,task,label CSV");
  e->add_option("--out", enc.out, "Cache file (.dhtc)")->required();
  e->add_option("--split,--splits", enc.splits, "train,tune,test fractions");
  e->add_option("--pool-stages", enc.pool_stages, "Pooling stages used for label alignment");

  CacheOutArgs feat;
  auto* f = app.add_subcommand("features", "Compute the 13 baseline features per person-week");
  add_common(f, feat.common);
  f->add_option("--cache", feat.cache, "Tensor cache")->required();
  f->add_option("--out", feat.out, "Features CSV")->required();

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Pretrain the encoder (autoencoder or heuristic targets)");
  add_common(p, pre.common);
  p->add_option("--mode", pre.mode, "autoencoder|heuristic")->required();
  p->add_option("--cache", pre.cache, "Tensor cache")->required();
  p->add_option("--out", pre.out, "Encoder checkpoint")->required();
  p->add_option("--log", pre.log_path, "Per-epoch loss CSV");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Supervised multi-task training");
  add_common(t, tr.common);
  t->add_option("--cache", tr.cache, "Tensor cache")->required();
  t->add_option("--init", tr.init, "Pretrained encoder checkpoint");
  t->add_option("--label-fraction", tr.label_fraction, "Fraction of labeled training users");
  t->add_option("--ablation", tr.ablation, "all|hr_only|steps_only");
  t->add_option("--out", tr.out, "Model checkpoint")->required();
  t->add_option("--log", tr.log_path, "Per-epoch loss CSV");

  EvaluateArgs ev;
  auto* v = app.add_subcommand("evaluate", "AUC with bootstrap intervals on a split");
  add_common(v, ev.common);
  v->add_option("--cache", ev.cache, "Tensor cache")->required();
  v->add_option("--model", ev.model_path, "Model checkpoint")->required();
  v->add_option("--out", ev.out, "Report CSV")->required();
  v->add_option("--roc", ev.roc, "ROC curve CSV");
  v->add_option("--split", ev.split, "train|tune|test");
  v->add_option("--ablation", ev.ablation, "Channel ablation used in training");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Label-fraction sweep across pretraining modes");
  add_common(s, sw.common);
  s->add_option("--cache", sw.cache, "Tensor cache")->required();
  s->add_option("--out", sw.out, "Sweep CSV")->required();
  s->add_option("--fractions", sw.fractions, "Comma-separated label fractions");
  s->add_option("--modes", sw.modes, "Comma-separated pretraining modes");
  s->add_option("--seeds", sw.seeds, "Number of seeds");

  GridArgs gr;
  auto* gg = app.add_subcommand("grid", "Hyperparameter grid, scored on the tune split");
  add_common(gg, gr.common);
  gg->add_option("--cache", gr.cache, "Tensor cache")->required();
  gg->add_option("--out", gr.out, "Grid CSV")->required();
  gg->add_option("--limit", gr.limit, "Run only the first N cells");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Input-channel ablation");
  add_common(a, ab.common);
  a->add_option("--cache", ab.cache, "Tensor cache")->required();
  a->add_option("--out", ab.out, "Ablation CSV")->required();
  a->add_option("--modes", ab.modes, "Comma-separated ablation modes");
  a->add_option("--seeds", ab.seeds, "Number of seeds");

  BaselinesArgs bl;
  auto* b = app.add_subcommand("baselines", "Logistic regression and MLP on the baseline features");
  add_common(b, bl.common);
  b->add_option("--cache", bl.cache, "Tensor cache")->required();
  b->add_option("--features", bl.features, "Features CSV (computed from the cache if omitted)");
  b->add_option("--out", bl.out, "Report CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 1;
  }

  Context ctx(args, err);
  try {
    if (*g) run_generate(ctx, gen);
    else if (*e) run_encode(ctx, enc);
    else if (*f) run_features(ctx, feat);
    else if (*p) run_pretrain(ctx, pre);
    else if (*t) run_train(ctx, tr);
    else if (*v) run_evaluate(ctx, ev);
    else if (*s) run_sweep(ctx, sw);
    else if (*gg) run_grid(ctx, gr);
    else if (*a) run_ablate(ctx, ab);
    else if (*b) run_baselines(ctx, bl);
    return 0;
  } catch (const UsageError& ex) {
    ctx.log("error", "usage", {{"msg", ex.what()}});
    err << app.help();
    return 1;
  } catch (const NumericError& ex) {
    ctx.log("error", "numeric", {{"msg", ex.what()}});
    return 3;
  } catch (const DataError& ex) {
    ctx.log("error", "data", {{"msg", ex.what()}});
    return 2;
  } catch (const std::exception& ex) {
    ctx.log("error", "data", {{"msg", ex.what()}});
    return 2;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace deepheart::cli
