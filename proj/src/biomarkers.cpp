#include "deepheart/biomarkers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <unordered_map>

#include <fftw3.h>

namespace deepheart::biomarkers {

using sensorstream::Channel;

HeartRateSeries heart_rate_series(const sensorstream::WeekWindow& week) {
  HeartRateSeries s;
  for (const auto& r : week.records) {
    if (r.channel != Channel::HeartRate) continue;
    s.t_ms.push_back(r.timestamp_ms);
    s.bpm.push_back(r.value);
  }
  return s;
}

HeartRateSeries heart_rate_series(const sensorstream::EncodedWeek& week) {
  HeartRateSeries s;
  for (const auto& e : week.events) {
    if (e.channel != Channel::HeartRate) continue;
    s.t_ms.push_back(week.week_start_ms + e.offset_ms);
    s.bpm.push_back(e.value);
  }
  return s;
}

std::optional<double> resting_hr(std::span<const double> bpm) {
  if (bpm.size() < 10) return std::nullopt;
  std::vector<double> sorted(bpm.begin(), bpm.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = 0.05 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (rank - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_sd(std::span<const double> v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double rmssd(std::span<const double> v) {
  double ss = 0.0;
  for (std::size_t i = 1; i < v.size(); ++i) ss += (v[i] - v[i - 1]) * (v[i] - v[i - 1]);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double diff_entropy(std::span<const double> v) {
  std::map<long long, std::size_t> bins;
  for (std::size_t i = 1; i < v.size(); ++i) ++bins[std::llround(v[i] - v[i - 1])];
  const double n = static_cast<double>(v.size() - 1);
  double h = 0.0;
  for (const auto& [_, count] : bins) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log(p);
  }
  return h;
}

namespace {

// FFTW planning is not thread-safe; plans are created once per length and
// executed with the new-array interface on fftw_malloc'd buffers.
fftw_plan r2c_plan(int n) {
  static std::mutex mu;
  static std::unordered_map<int, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, plan);
  return plan;
}

}  // namespace

double spectral_entropy(std::span<const std::int64_t> t_ms, std::span<const double> bpm) {
  if (bpm.size() < 2) return 0.0;
  const std::int64_t t0 = t_ms.front();
  const auto n = static_cast<int>((t_ms.back() - t0) / 1000 + 1);
  if (n < 2) return 0.0;
  double* grid = fftw_alloc_real(static_cast<std::size_t>(n));
  const std::size_t last = t_ms.size() - 1;
  std::size_t j = 0;
  for (int k = 0; k < n; ++k) {
    const std::int64_t t = t0 + 1000LL * k;
    while (j + 1 < last && t_ms[j + 1] <= t) ++j;
    const double span = static_cast<double>(t_ms[j + 1] - t_ms[j]);
    const double frac = span > 0 ? static_cast<double>(t - t_ms[j]) / span : 0.0;
    grid[k] = bpm[j] + frac * (bpm[j + 1] - bpm[j]);
  }
  fftw_complex* spectrum = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  fftw_execute_dft_r2c(r2c_plan(n), grid, spectrum);
  std::vector<double> power(static_cast<std::size_t>(n / 2));
  double total = 0.0;
  for (int k = 1; k <= n / 2; ++k) {
    const double p = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    power[static_cast<std::size_t>(k - 1)] = p;
    total += p;
  }
  fftw_free(grid);
  fftw_free(spectrum);
  // Relative threshold: interpolated constants leave round-off power only.
  double scale = 0.0;
  for (double x : bpm) scale = std::max(scale, std::abs(x));
  if (!(total > 1e-20 * (1.0 + scale * scale) * n * n)) return 0.0;
  double h = 0.0;
  for (double p : power) {
    if (p <= 0.0) continue;
    const double q = p / total;
    h -= q * std::log(q);
  }
  return h;
}

namespace {

double window_value(WindowStat stat, std::span<const std::int64_t> t, std::span<const double> v) {
  switch (stat) {
    case WindowStat::Mean: return mean(v);
    case WindowStat::Sd: return population_sd(v);
    case WindowStat::Rmssd: return rmssd(v);
    case WindowStat::DiffEntropy: return diff_entropy(v);
    case WindowStat::SpecEntropy: return spectral_entropy(t, v);
  }
  return 0.0;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::optional<double> windowed_stat(const HeartRateSeries& series, std::int64_t window_s,
                                    WindowStat stat) {
  const std::int64_t window_ms = window_s * 1000;
  double sum = 0.0;
  std::size_t windows = 0;
  std::size_t begin = 0;
  const std::span<const std::int64_t> t(series.t_ms);
  const std::span<const double> v(series.bpm);
  while (begin < series.size()) {
    const auto id = floor_div(t[begin], window_ms);
    std::size_t end = begin + 1;
    while (end < series.size() && floor_div(t[end], window_ms) == id) ++end;
    if (end - begin >= 2) {
      sum += window_value(stat, t.subspan(begin, end - begin), v.subspan(begin, end - begin));
      ++windows;
    }
    begin = end;
  }
  if (windows == 0) return std::nullopt;
  return sum / static_cast<double>(windows);
}

std::optional<double> global_stat(std::span<const double> bpm, GlobalStat stat) {
  if (bpm.size() < 2) return std::nullopt;
  return stat == GlobalStat::Sd ? population_sd(bpm) : rmssd(bpm);
}

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static const std::array<std::string_view, kFeatureCount> names = {
      "resting_hr",      "mean_hr_5m",       "mean_hr_30m",      "sd_hr_5m",
      "sd_hr_30m",       "spec_entropy_5m",  "spec_entropy_30m", "rmssd_5m",
      "rmssd_30m",       "diff_entropy_5m",  "diff_entropy_30m", "sd_hr_global",
      "rmssd_global"};
  return names;
}

RawFeatures raw_features(const HeartRateSeries& s) {
  RawFeatures f;
  f[0] = resting_hr(s.bpm);
  f[1] = windowed_stat(s, 300, WindowStat::Mean);
  f[2] = windowed_stat(s, 1800, WindowStat::Mean);
  f[3] = windowed_stat(s, 300, WindowStat::Sd);
  f[4] = windowed_stat(s, 1800, WindowStat::Sd);
  f[5] = windowed_stat(s, 300, WindowStat::SpecEntropy);
  f[6] = windowed_stat(s, 1800, WindowStat::SpecEntropy);
  f[7] = windowed_stat(s, 300, WindowStat::Rmssd);
  f[8] = windowed_stat(s, 1800, WindowStat::Rmssd);
  f[9] = windowed_stat(s, 300, WindowStat::DiffEntropy);
  f[10] = windowed_stat(s, 1800, WindowStat::DiffEntropy);
  f[11] = global_stat(s.bpm, GlobalStat::Sd);
  f[12] = global_stat(s.bpm, GlobalStat::Rmssd);
  return f;
}

Imputer Imputer::fit(std::span<const RawFeatures> rows) {
  Imputer imp;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r[j]) {
        sum += *r[j];
        ++n;
      }
    }
    imp.means_[j] = n ? sum / static_cast<double>(n) : 0.0;
  }
  return imp;
}

FeatureVector Imputer::apply(const RawFeatures& raw) const {
  FeatureVector fv;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    fv.imputed[j] = !raw[j].has_value();
    fv.values[j] = raw[j].value_or(means_[j]);
  }
  return fv;
}

HrvTargets hrv_targets_per_event(std::span<const sensorstream::EventInfo> events) {
  HrvTargets out;
  out.steps = events.size();
  out.value.assign(out.steps * kHrvChannels, 0.0);
  out.mask.assign(out.steps * kHrvChannels, 0);

  std::vector<std::int64_t> hr_t;
  std::vector<double> hr_v;
  for (const auto& e : events) {
    if (e.channel != Channel::HeartRate) continue;
    hr_t.push_back(e.offset_ms);
    hr_v.push_back(e.value);
  }
  // prefix[j] = sum_{i=1..j} |hr[i] - hr[i-1]|
  std::vector<double> prefix(hr_v.size(), 0.0);
  for (std::size_t i = 1; i < hr_v.size(); ++i) {
    prefix[i] = prefix[i - 1] + std::abs(hr_v[i] - hr_v[i - 1]);
  }
  for (std::size_t w = 0; w < kHrvChannels; ++w) {
    std::size_t lo = 0, hi = 0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      const std::int64_t t = events[e].offset_ms;
      while (hi < hr_t.size() && hr_t[hi] <= t) ++hi;
      while (lo < hi && hr_t[lo] < t - kHrvWindowsMs[w]) ++lo;
      if (hi - lo >= 2) {
        const double pairs = static_cast<double>(hi - lo - 1);
        out.value[e * kHrvChannels + w] = (prefix[hi - 1] - prefix[lo]) / pairs;
        out.mask[e * kHrvChannels + w] = 1;
      }
    }
  }
  return out;
}

HrvTargets pool_hrv_targets(const HrvTargets& per_event, int pool_stages, int pool) {
  std::size_t block = 1;
  for (int s = 0; s < pool_stages; ++s) block *= static_cast<std::size_t>(pool);
  HrvTargets out;
  out.steps = sensorstream::pooled_length(per_event.steps, pool_stages, pool);
  out.value.resize(out.steps * kHrvChannels);
  out.mask.resize(out.steps * kHrvChannels);
  for (std::size_t j = 0; j < out.steps; ++j) {
    const std::size_t last = std::min((j + 1) * block, per_event.steps) - 1;
    for (std::size_t c = 0; c < kHrvChannels; ++c) {
      out.value[j * kHrvChannels + c] = per_event.value[last * kHrvChannels + c];
      out.mask[j * kHrvChannels + c] = per_event.mask[last * kHrvChannels + c];
    }
  }
  return out;
}

HrvTargets hrv_targets(std::span<const sensorstream::EventInfo> events, int pool_stages) {
  return pool_hrv_targets(hrv_targets_per_event(events), pool_stages);
}

}  // namespace deepheart::biomarkers
