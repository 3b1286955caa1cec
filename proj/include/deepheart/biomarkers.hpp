#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "deepheart/sensorstream.hpp"

namespace deepheart::biomarkers {

// Heart-rate samples of one person-week, time ordered.
struct HeartRateSeries {
  std::vector<std::int64_t> t_ms;
  std::vector<double> bpm;

  std::size_t size() const { return bpm.size(); }
};

HeartRateSeries heart_rate_series(const sensorstream::WeekWindow& week);
// Uses event offsets; timestamps are absolute (week_start_ms + offset).
HeartRateSeries heart_rate_series(const sensorstream::EncodedWeek& week);

// 5th percentile with linear interpolation between order statistics.
// Undefined for fewer than 10 samples.
std::optional<double> resting_hr(std::span<const double> bpm);

// Shared definitions, each over one contiguous block of samples.
double mean(std::span<const double> v);
double population_sd(std::span<const double> v);
double rmssd(std::span<const double> v);
// Shannon entropy (nats) of successive differences in 1-bpm bins centred on
// integers.
double diff_entropy(std::span<const double> v);
// Entropy of the normalized periodogram (DC excluded) of the series linearly
// resampled to 1 Hz. Zero when the resampled series has no AC power.
double spectral_entropy(std::span<const std::int64_t> t_ms, std::span<const double> bpm);

enum class WindowStat { Mean, Sd, Rmssd, DiffEntropy, SpecEntropy };

// Splits time into consecutive windows of window_s (aligned to multiples of
// the window since the epoch, hence to week starts), evaluates the stat in
// every window holding >= 2 samples and returns the mean over those windows.
std::optional<double> windowed_stat(const HeartRateSeries& series, std::int64_t window_s,
                                    WindowStat stat);

enum class GlobalStat { Sd, Rmssd };
std::optional<double> global_stat(std::span<const double> bpm, GlobalStat stat);

// ---------------------------------------------------------------------------
// Baseline feature vector

inline constexpr std::size_t kFeatureCount = 13;
const std::array<std::string_view, kFeatureCount>& feature_names();

using RawFeatures = std::array<std::optional<double>, kFeatureCount>;

RawFeatures raw_features(const HeartRateSeries& series);

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  std::array<bool, kFeatureCount> imputed{};
};

// Replaces undefined features with the mean of the training rows.
class Imputer {
 public:
  static Imputer fit(std::span<const RawFeatures> training_rows);
  FeatureVector apply(const RawFeatures& raw) const;
  const std::array<double, kFeatureCount>& means() const { return means_; }

 private:
  std::array<double, kFeatureCount> means_{};
};

// ---------------------------------------------------------------------------
// Heuristic pretraining targets

inline constexpr std::size_t kHrvChannels = 4;
inline constexpr std::array<std::int64_t, kHrvChannels> kHrvWindowsMs = {5'000, 30'000, 300'000,
                                                                         1'800'000};

struct HrvTargets {
  std::size_t steps = 0;
  std::vector<double> value;       // [steps x 4], bpm
  std::vector<std::uint8_t> mask;  // [steps x 4]
};

// Per event: mean |hr[i] - hr[i-1]| over successive heart-rate samples that
// both lie in the closed window [t - w, t]. Masked when the window holds fewer
// than two heart-rate samples.
HrvTargets hrv_targets_per_event(std::span<const sensorstream::EventInfo> events);

// Keeps the value of the last event in each block of pool^pool_stages events,
// matching the model's pooled output timeline.
HrvTargets pool_hrv_targets(const HrvTargets& per_event, int pool_stages, int pool = 2);

HrvTargets hrv_targets(std::span<const sensorstream::EventInfo> events, int pool_stages);

}  // namespace deepheart::biomarkers
