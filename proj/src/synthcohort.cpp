#include "deepheart/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "deepheart/biomarkers.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/rng.hpp"

namespace deepheart::synthcohort {

using sensorstream::Channel;
using sensorstream::kDayMs;
using sensorstream::kWeekMs;
using sensorstream::SensorRecord;

namespace {

constexpr std::int64_t kHourMs = 3'600'000;
constexpr double kWalkCadencePerMin = 100.0;
constexpr double kWorkoutCadencePerMin = 140.0;

struct Bout {
  std::int64_t start = 0;
  std::int64_t end = 0;
  bool workout = false;
};

double sleep_depth(double hour) {
  if (hour >= 23.5 || hour < 6.5) return 1.0;
  if (hour >= 23.0) return (hour - 23.0) / 0.5;
  if (hour >= 6.5 && hour < 7.0) return (7.0 - hour) / 0.5;
  return 0.0;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw UsageError("invalid synth config: " + what);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

void SynthConfig::validate() const {
  for (const auto& [task, p] : condition_prevalence) {
    check(p >= 0.0 && p <= 1.0, "prevalence." + task + " must lie in [0, 1]");
  }
  for (const auto& [task, e] : effect_sizes) check(e > 0.0, "effect." + task + " must be > 0");
  check(weeks_per_user >= 1 || n_users == 0, "weeks_per_user must be >= 1");
  check(background_interval_s > 0 && workout_interval_s > 0 && step_interval_s > 0,
        "sampling intervals must be > 0");
  check(base_hr_sd >= 0 && base_variability >= 0 && hrv_log_sd >= 0 && activity_log_sd >= 0,
        "spreads must be >= 0");
  check(ar_coefficient > -1.0 && ar_coefficient < 1.0, "ar_coefficient must lie in (-1, 1)");
  check(workout_prob_per_day >= 0 && workout_prob_per_day <= 1, "workout_prob_per_day in [0, 1]");
  check(workout_min_minutes > 0 && workout_max_minutes >= workout_min_minutes,
        "workout duration bounds");
  check(walks_per_day >= 0 && walk_minutes > 0, "walk settings");
  check(unlabeled_fraction >= 0 && unlabeled_fraction <= 1, "unlabeled_fraction in [0, 1]");
  check(start_ms > 0, "start_ms must be > 0");
}

SynthConfig synth_config_from(const KeyValueConfig& kv, SynthConfig cfg) {
  if (auto v = kv.get_int("n_users")) cfg.n_users = static_cast<std::size_t>(*v);
  if (auto v = kv.get_int("weeks_per_user")) cfg.weeks_per_user = static_cast<std::size_t>(*v);
  if (auto v = kv.get_int("seed")) cfg.seed = static_cast<std::uint64_t>(*v);
  const auto read_map = [&](const std::string& prefix, std::map<std::string, double>& target) {
    for (const auto& [task, text] : kv.with_prefix(prefix)) {
      try {
        target[task] = std::stod(text);
      } catch (const std::exception&) {
        throw UsageError("synth config: " + prefix + "." + task + " expects a number");
      }
    }
  };
  read_map("prevalence", cfg.condition_prevalence);
  read_map("effect", cfg.effect_sizes);
  read_map("resting_shift", cfg.resting_shift_bpm);
  const std::pair<const char*, double*> reals[] = {
      {"base_hr_mean", &cfg.base_hr_mean},
      {"base_hr_sd", &cfg.base_hr_sd},
      {"base_variability", &cfg.base_variability},
      {"ar_coefficient", &cfg.ar_coefficient},
      {"hrv_log_sd", &cfg.hrv_log_sd},
      {"activity_log_sd", &cfg.activity_log_sd},
      {"background_interval_s", &cfg.background_interval_s},
      {"workout_interval_s", &cfg.workout_interval_s},
      {"workout_prob_per_day", &cfg.workout_prob_per_day},
      {"workout_min_minutes", &cfg.workout_min_minutes},
      {"workout_max_minutes", &cfg.workout_max_minutes},
      {"workout_hr_boost", &cfg.workout_hr_boost},
      {"sleep_hr_drop", &cfg.sleep_hr_drop},
      {"walks_per_day", &cfg.walks_per_day},
      {"walk_minutes", &cfg.walk_minutes},
      {"walk_hr_boost", &cfg.walk_hr_boost},
      {"step_interval_s", &cfg.step_interval_s},
      {"unlabeled_fraction", &cfg.unlabeled_fraction},
  };
  for (const auto& [key, target] : reals) {
    if (auto v = kv.get_double(key)) *target = *v;
  }
  if (auto v = kv.get_int("start_ms")) cfg.start_ms = *v;
  if (auto v = kv.get_string("user_prefix")) cfg.user_prefix = *v;
  cfg.validate();
  return cfg;
}

std::string synth_config_text(const SynthConfig& c) {
  std::ostringstream out;
  out << "n_users = " << c.n_users << "\n"
      << "weeks_per_user = " << c.weeks_per_user << "\n"
      << "seed = " << c.seed << "\n";
  for (const auto& [t, v] : c.condition_prevalence) out << "prevalence." << t << " = " << fmt(v) << "\n";
  for (const auto& [t, v] : c.effect_sizes) out << "effect." << t << " = " << fmt(v) << "\n";
  for (const auto& [t, v] : c.resting_shift_bpm) out << "resting_shift." << t << " = " << fmt(v) << "\n";
  out << "base_hr_mean = " << fmt(c.base_hr_mean) << "\n"
      << "base_hr_sd = " << fmt(c.base_hr_sd) << "\n"
      << "base_variability = " << fmt(c.base_variability) << "\n"
      << "ar_coefficient = " << fmt(c.ar_coefficient) << "\n"
      << "hrv_log_sd = " << fmt(c.hrv_log_sd) << "\n"
      << "activity_log_sd = " << fmt(c.activity_log_sd) << "\n"
      << "background_interval_s = " << fmt(c.background_interval_s) << "\n"
      << "workout_interval_s = " << fmt(c.workout_interval_s) << "\n"
      << "workout_prob_per_day = " << fmt(c.workout_prob_per_day) << "\n"
      << "workout_min_minutes = " << fmt(c.workout_min_minutes) << "\n"
      << "workout_max_minutes = " << fmt(c.workout_max_minutes) << "\n"
      << "workout_hr_boost = " << fmt(c.workout_hr_boost) << "\n"
      << "sleep_hr_drop = " << fmt(c.sleep_hr_drop) << "\n"
      << "walks_per_day = " << fmt(c.walks_per_day) << "\n"
      << "walk_minutes = " << fmt(c.walk_minutes) << "\n"
      << "walk_hr_boost = " << fmt(c.walk_hr_boost) << "\n"
      << "step_interval_s = " << fmt(c.step_interval_s) << "\n"
      << "unlabeled_fraction = " << fmt(c.unlabeled_fraction) << "\n"
      << "start_ms = " << c.start_ms << "\n"
      << "user_prefix = " << c.user_prefix << "\n";
  return out.str();
}

std::string user_id_for(const SynthConfig& cfg, std::size_t index) {
  std::ostringstream ss;
  ss << cfg.user_prefix << std::setw(5) << std::setfill('0') << index;
  return ss.str();
}

SynthUser draw_user(const SynthConfig& cfg, std::size_t index) {
  SynthUser user;
  user.user_id = user_id_for(cfg, index);
  Philox rng(keyed_hash(cfg.seed, "synth-user", user.user_id), 0);
  double hrv = 1.0;
  double shift = 0.0;
  for (const auto& [task, p] : cfg.condition_prevalence) {
    const bool positive = rng.bernoulli(p);
    user.conditions[task] = positive ? 1 : -1;
    if (!positive) continue;
    if (auto it = cfg.effect_sizes.find(task); it != cfg.effect_sizes.end()) hrv *= it->second;
    if (auto it = cfg.resting_shift_bpm.find(task); it != cfg.resting_shift_bpm.end()) {
      shift += it->second;
    }
  }
  user.labeled = !rng.bernoulli(cfg.unlabeled_fraction);
  user.resting_hr = cfg.base_hr_mean + cfg.base_hr_sd * rng.normal() + shift;
  user.hrv_scale = std::exp(cfg.hrv_log_sd * rng.normal()) * hrv;
  user.activity_level = std::exp(cfg.activity_log_sd * rng.normal());
  return user;
}

std::vector<SensorRecord> generate_user_records(const SynthConfig& cfg, const SynthUser& user) {
  Philox rng(keyed_hash(cfg.seed, "synth-user", user.user_id), 1);
  std::vector<SensorRecord> out;
  const double sigma = cfg.base_variability * user.hrv_scale;
  const double phi = cfg.ar_coefficient;
  double noise = cfg.base_variability * user.hrv_scale / std::sqrt(1.0 - phi * phi) * rng.normal();

  for (std::size_t w = 0; w < cfg.weeks_per_user; ++w) {
    const std::int64_t week_start = cfg.start_ms + static_cast<std::int64_t>(w) * kWeekMs;
    const std::int64_t week_end = week_start + kWeekMs;
    std::vector<Bout> bouts;
    for (int d = 0; d < 7; ++d) {
      const std::int64_t day0 = week_start + d * kDayMs;
      if (rng.bernoulli(std::min(1.0, cfg.workout_prob_per_day * user.activity_level))) {
        const auto start = day0 + static_cast<std::int64_t>(rng.uniform(7.0, 20.0) * kHourMs);
        const auto minutes = rng.uniform(cfg.workout_min_minutes, cfg.workout_max_minutes);
        bouts.push_back({start, std::min(week_end, start + static_cast<std::int64_t>(minutes * 60'000)),
                         true});
      }
      const auto walks = static_cast<int>(
          std::floor(rng.uniform() * (2.0 * cfg.walks_per_day * user.activity_level + 1.0)));
      for (int k = 0; k < walks; ++k) {
        const auto start = day0 + static_cast<std::int64_t>(rng.uniform(8.0, 21.0) * kHourMs);
        const auto minutes = cfg.walk_minutes * rng.uniform(0.5, 1.5);
        bouts.push_back({start, std::min(week_end, start + static_cast<std::int64_t>(minutes * 60'000)),
                         false});
      }
    }
    const auto in_workout = [&](std::int64_t t) {
      return std::any_of(bouts.begin(), bouts.end(),
                         [t](const Bout& b) { return b.workout && t >= b.start && t < b.end; });
    };

    std::vector<std::int64_t> hr_times;
    const double bg_ms = cfg.background_interval_s * 1000.0;
    for (double t = week_start + rng.uniform(0.0, bg_ms); t < week_end;
         t += bg_ms * rng.uniform(0.8, 1.2)) {
      const auto ti = static_cast<std::int64_t>(t);
      if (!in_workout(ti)) hr_times.push_back(ti);
    }
    const auto workout_step = static_cast<std::int64_t>(cfg.workout_interval_s * 1000.0);
    for (const auto& b : bouts) {
      if (!b.workout) continue;
      for (std::int64_t t = b.start; t < b.end; t += workout_step) hr_times.push_back(t);
    }
    std::sort(hr_times.begin(), hr_times.end());
    hr_times.erase(std::unique(hr_times.begin(), hr_times.end()), hr_times.end());

    for (const auto t : hr_times) {
      noise = phi * noise + sigma * rng.normal();
      const double hour = static_cast<double>((t - cfg.start_ms) % kDayMs) / kHourMs;
      double boost = 0.0;
      for (const auto& b : bouts) {
        if (t < b.start || t >= b.end) continue;
        if (b.workout) {
          const double ramp = std::min({1.0, static_cast<double>(t - b.start) / 300'000.0,
                                        static_cast<double>(b.end - t) / 180'000.0});
          boost += cfg.workout_hr_boost * ramp;
        } else {
          boost += cfg.walk_hr_boost;
        }
      }
      const double hr = user.resting_hr - cfg.sleep_hr_drop * sleep_depth(hour) + boost + noise;
      out.push_back({user.user_id, t, Channel::HeartRate, std::clamp(std::round(hr), 30.0, 220.0)});
    }

    const double step_ms = cfg.step_interval_s * 1000.0;
    for (const auto& b : bouts) {
      const double cadence = b.workout ? kWorkoutCadencePerMin : kWalkCadencePerMin;
      for (double t = b.start + rng.uniform(0.0, step_ms); t < b.end; t += step_ms) {
        const double count = std::round(cadence * cfg.step_interval_s / 60.0 * rng.uniform(0.8, 1.2));
        if (count <= 0) continue;
        out.push_back({user.user_id, static_cast<std::int64_t>(t), Channel::StepCount, count});
      }
    }
  }
  std::sort(out.begin(), out.end(), sensorstream::record_less);
  out.erase(std::unique(out.begin(), out.end(),
                        [](const SensorRecord& a, const SensorRecord& b) {
                          return a.timestamp_ms == b.timestamp_ms && a.channel == b.channel;
                        }),
            out.end());
  return out;
}

SynthCohort generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  SynthCohort cohort;
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    auto user = draw_user(cfg, i);
    auto records = generate_user_records(cfg, user);
    cohort.records.insert(cohort.records.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
    if (user.labeled) cohort.labels[user.user_id] = user.conditions;
    cohort.users.push_back(std::move(user));
  }
  return cohort;
}

void write_records_jsonl(std::ostream& out, const std::vector<SensorRecord>& records) {
  for (const auto& r : records) out << sensorstream::format_record(r) << '\n';
}

void write_labels_csv(std::ostream& out,
                      const std::map<std::string, sensorstream::Diagnoses>& labels) {
  out << "user_id,task,label\n";
  for (const auto& [user, diag] : labels) {
    for (const auto& [task, label] : diag) out << user << ',' << task << ',' << label << '\n';
  }
}

PlantReport plant_check(const std::vector<SensorRecord>& records,
                        const std::map<std::string, sensorstream::Diagnoses>& labels,
                        const SynthConfig& cfg) {
  std::map<std::string, std::pair<double, std::size_t>> per_user;
  for (const auto& week : sensorstream::chunk_weeks(records)) {
    const auto series = biomarkers::heart_rate_series(week);
    const auto value = biomarkers::global_stat(series.bpm, biomarkers::GlobalStat::Rmssd);
    if (!value) continue;
    auto& acc = per_user[week.user_id];
    acc.first += *value;
    acc.second += 1;
  }
  PlantReport report;
  for (const auto& [task, _] : cfg.condition_prevalence) {
    PlantTaskReport tr;
    tr.task = task;
    std::vector<double> pos, neg;
    for (const auto& [user, acc] : per_user) {
      const auto lit = labels.find(user);
      if (lit == labels.end()) continue;
      const auto dit = lit->second.find(task);
      if (dit == lit->second.end()) continue;
      (dit->second > 0 ? pos : neg).push_back(acc.first / static_cast<double>(acc.second));
    }
    tr.n_pos = pos.size();
    tr.n_neg = neg.size();
    tr.sample_too_small = pos.size() < kMinGroupSize || neg.size() < kMinGroupSize;
    if (!pos.empty()) tr.mean_rmssd_pos = biomarkers::mean(pos);
    if (!neg.empty()) tr.mean_rmssd_neg = biomarkers::mean(neg);
    if (pos.size() >= 2 && neg.size() >= 2) {
      double ss = 0.0;
      for (double v : pos) ss += (v - tr.mean_rmssd_pos) * (v - tr.mean_rmssd_pos);
      for (double v : neg) ss += (v - tr.mean_rmssd_neg) * (v - tr.mean_rmssd_neg);
      const double pooled = std::sqrt(ss / static_cast<double>(pos.size() + neg.size() - 2));
      if (pooled > 0) tr.standardized_difference = (tr.mean_rmssd_pos - tr.mean_rmssd_neg) / pooled;
    }
    report.tasks.push_back(tr);
  }
  return report;
}

}  // namespace deepheart::synthcohort
