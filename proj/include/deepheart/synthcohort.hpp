#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "deepheart/kvconfig.hpp"
#include "deepheart/sensorstream.hpp"

namespace deepheart::synthcohort {

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t weeks_per_user = 2;
  std::uint64_t seed = 1;

  std::map<std::string, double> condition_prevalence = {
      {"diabetes", 0.25}, {"sleep_apnea", 0.25}, {"hypertension", 0.3}, {"high_cholesterol", 0.3}};
  // Multiplier on short-term heart-rate variability for each positive condition.
  std::map<std::string, double> effect_sizes = {
      {"diabetes", 0.6}, {"sleep_apnea", 0.6}, {"hypertension", 1.0}, {"high_cholesterol", 1.0}};
  // Additive resting heart-rate shift (bpm) for each positive condition.
  std::map<std::string, double> resting_shift_bpm = {{"hypertension", 5.0}};

  double base_hr_mean = 65.0;
  double base_hr_sd = 4.0;
  double base_variability = 12.0;  // AR(1) innovation sd, bpm
  double ar_coefficient = 0.5;
  double hrv_log_sd = 0.1;        // between-user spread of the variability scale
  double activity_log_sd = 0.3;

  double background_interval_s = 1200.0;
  double workout_interval_s = 5.0;
  double workout_prob_per_day = 0.3;
  double workout_min_minutes = 32.0;
  double workout_max_minutes = 50.0;
  double workout_hr_boost = 45.0;
  double sleep_hr_drop = 8.0;
  double walks_per_day = 3.0;
  double walk_minutes = 10.0;
  double walk_hr_boost = 12.0;
  double step_interval_s = 300.0;

  double unlabeled_fraction = 0.0;
  std::int64_t start_ms = 1'704'067'200'000;  // Monday 2024-01-01 00:00 UTC
  std::string user_prefix = "u";

  // Throws UsageError when any invariant fails.
  void validate() const;
};

// Reads every field from a flat key-value config. Map fields use dotted keys:
// `prevalence.<task>`, `effect.<task>`, `resting_shift.<task>`.
SynthConfig synth_config_from(const KeyValueConfig& kv, SynthConfig base = {});
std::string synth_config_text(const SynthConfig& cfg);

struct SynthUser {
  std::string user_id;
  std::map<std::string, int> conditions;  // task -> +1 / -1
  bool labeled = true;
  double resting_hr = 0.0;
  double hrv_scale = 1.0;
  double activity_level = 1.0;
};

struct SynthCohort {
  std::vector<SynthUser> users;
  std::vector<sensorstream::SensorRecord> records;  // sorted by (user, time, channel)
  std::map<std::string, sensorstream::Diagnoses> labels;
};

std::string user_id_for(const SynthConfig& cfg, std::size_t index);
SynthUser draw_user(const SynthConfig& cfg, std::size_t index);
std::vector<sensorstream::SensorRecord> generate_user_records(const SynthConfig& cfg,
                                                              const SynthUser& user);
SynthCohort generate_cohort(const SynthConfig& cfg);

void write_records_jsonl(std::ostream& out, const std::vector<sensorstream::SensorRecord>& records);
void write_labels_csv(std::ostream& out, const std::map<std::string, sensorstream::Diagnoses>& labels);

struct PlantTaskReport {
  std::string task;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double mean_rmssd_pos = 0.0;
  double mean_rmssd_neg = 0.0;
  // (mean_pos - mean_neg) / pooled sd of per-user RMSSD.
  double standardized_difference = 0.0;
  bool sample_too_small = false;
};

struct PlantReport {
  std::vector<PlantTaskReport> tasks;
};

inline constexpr std::size_t kMinGroupSize = 5;

// Per-condition separation of per-user mean weekly RMSSD.
PlantReport plant_check(const std::vector<sensorstream::SensorRecord>& records,
                        const std::map<std::string, sensorstream::Diagnoses>& labels,
                        const SynthConfig& cfg);

}  // namespace deepheart::synthcohort
