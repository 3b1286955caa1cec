#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "deepheart/sensorstream.hpp"

namespace deepheart::sensorstream {

inline constexpr char kCacheMagic[4] = {'D', 'H', 'T', 'C'};
inline constexpr std::uint16_t kCacheVersion = 1;

struct CachedWeek {
  EncodedWeek week;
  Partition split = Partition::Train;
  TaskTargets targets;

  // Recovers the per-task diagnosis stored at the last pooled timestep.
  Diagnoses diagnoses() const;
  bool has_any_label() const;
};

// Binary tensor cache ("DHTC"), little-endian throughout:
//   magic[4] "DHTC", u16 version
//   u32 pool_stages, u64 split_seed, f64[3] split fractions,
//   f64[3] normalization (hr_center, hr_scale, step_log_scale),
//   u16 n_tasks, n_tasks x (u16 len, bytes)
//   u32 n_weeks, then per week:
//     u32 user_id len, bytes; i64 week_start_ms; u32 valid_len;
//     u8 partition; u32 truncated;
//     f32 x[4096 x 3]
//     u32 pooled_len; f32 y[pooled_len x n_tasks]; u8 mask[pooled_len x n_tasks]
//     valid_len x (u32 offset_ms, u8 channel, f32 raw value)
struct TensorCache {
  int pool_stages = 3;
  std::uint64_t split_seed = 0;
  SplitFractions fractions;
  NormalizationParams norm;
  std::vector<std::string> tasks = default_tasks();
  std::vector<CachedWeek> weeks;
};

std::string serialize_cache(const TensorCache& cache);
TensorCache deserialize_cache(std::string_view bytes);
void write_cache(const std::filesystem::path& path, const TensorCache& cache);
TensorCache read_cache(const std::filesystem::path& path);

struct EncodeOptions {
  SplitFractions fractions;
  std::uint64_t seed = 0;
  int pool_stages = 3;
  NormalizationParams norm;
  std::vector<std::string> tasks = default_tasks();
  FilterRules rules;
};

struct EncodeStats {
  std::size_t records = 0;
  std::size_t weeks_total = 0;
  std::size_t weeks_accepted = 0;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::size_t events_encoded = 0;
  std::size_t events_truncated = 0;
  std::size_t users = 0;
};

// Split users, chunk into weeks, filter, encode and attach labels.
TensorCache build_cache(const std::vector<SensorRecord>& records,
                        const std::map<std::string, Diagnoses>& labels, const EncodeOptions& options,
                        EncodeStats* stats = nullptr);

}  // namespace deepheart::sensorstream
