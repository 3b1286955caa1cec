#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deepheart::sensorstream {

enum class Channel : std::uint8_t { HeartRate = 0, StepCount = 1 };

std::string_view channel_name(Channel channel);
std::optional<Channel> parse_channel(std::string_view name);

struct SensorRecord {
  std::string user_id;
  std::int64_t timestamp_ms = 0;
  Channel channel = Channel::HeartRate;
  double value = 0.0;
};

// Orders by (user_id, timestamp_ms, channel) with heart rate before steps on ties.
bool record_less(const SensorRecord& a, const SensorRecord& b);

inline constexpr double kMinHeartRate = 20.0;
inline constexpr double kMaxHeartRate = 250.0;

struct RejectionCounts {
  std::size_t malformed_json = 0;
  std::size_t missing_field = 0;
  std::size_t wrong_type = 0;
  std::size_t unknown_channel = 0;
  std::size_t bad_timestamp = 0;
  std::size_t bad_value = 0;
  std::size_t heart_rate_range = 0;
  std::size_t duplicate = 0;

  std::size_t total() const {
    return malformed_json + missing_field + wrong_type + unknown_channel + bad_timestamp +
           bad_value + heart_rate_range + duplicate;
  }
  // (reason, count) pairs in a fixed order, for logs and manifests.
  std::vector<std::pair<std::string, std::size_t>> items() const;
};

struct ParseResult {
  std::vector<SensorRecord> records;  // sorted with record_less
  RejectionCounts rejected;
  std::size_t lines = 0;
};

// Parses JSON-lines sensor records. Bad lines are counted per reason; blank
// lines are skipped. Exact (user, timestamp, channel) duplicates keep the first.
ParseResult parse_records(std::istream& in);
// Throws DataError when the file cannot be opened.
ParseResult parse_records_file(const std::filesystem::path& path);

// Serializes one record as a JSON line (no trailing newline).
std::string format_record(const SensorRecord& record);

// ---------------------------------------------------------------------------
// Cohort partitioning

enum class Partition : std::uint8_t { Train = 0, Tune = 1, Test = 2 };

std::string_view partition_name(Partition p);

struct SplitFractions {
  double train = 0.6;
  double tune = 0.2;
  double test = 0.2;
};

// Parses "0.6,0.2,0.2". Throws UsageError on bad syntax or fractions.
SplitFractions parse_split_fractions(std::string_view text);

struct CohortSplit {
  std::map<std::string, Partition> assignment;
  std::uint64_t seed = 0;

  Partition at(const std::string& user_id) const;
  std::size_t count(Partition p) const;
};

// Assigns each user by a keyed hash of (seed, user_id) into fraction buckets.
CohortSplit split_cohort(std::span<const std::string> user_ids, const SplitFractions& fractions,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Week chunking and quality filters

inline constexpr std::int64_t kDayMs = 24LL * 3600 * 1000;
inline constexpr std::int64_t kWeekMs = 7 * kDayMs;

// Start of the UTC Monday-midnight week containing timestamp_ms.
std::int64_t week_start_of(std::int64_t timestamp_ms);

struct WeekWindow {
  std::string user_id;
  std::int64_t week_start_ms = 0;
  std::vector<SensorRecord> records;
};

// Splits records (sorted by user then time, possibly many users) into
// person-weeks. Every record lands in exactly one window; empty weeks are
// never emitted.
std::vector<WeekWindow> chunk_weeks(std::span<const SensorRecord> records);

enum class FilterReason { Accepted, TooFewHeartRate, NoContinuousRun };

std::string_view filter_reason_name(FilterReason reason);

struct FilterRules {
  std::size_t max_rejected_heart_rate_count = 672;  // weeks with <= this many are dropped
  std::int64_t max_gap_ms = 10'000;
  std::int64_t min_run_ms = 30 * 60 * 1000;
};

struct FilterResult {
  bool accepted = false;
  FilterReason reason = FilterReason::TooFewHeartRate;
  std::size_t heart_rate_count = 0;
  std::int64_t longest_run_ms = 0;
};

FilterResult filter_week(const WeekWindow& week, const FilterRules& rules = {});

// Longest span of consecutive heart-rate records whose successive gaps are all
// <= max_gap_ms.
std::int64_t longest_continuous_run_ms(const WeekWindow& week, std::int64_t max_gap_ms);

// ---------------------------------------------------------------------------
// Tensor encoding

// 0.1 * ln(dt_ms / 5000). Throws std::invalid_argument for dt_ms <= 0.
double dt_transform(std::int64_t dt_ms);

struct NormalizationParams {
  double hr_center = 70.0;
  double hr_scale = 30.0;
  double step_log_scale = 5.0;

  double heart_rate(double bpm) const { return (bpm - hr_center) / hr_scale; }
  double steps(double count) const;
  bool operator==(const NormalizationParams&) const = default;
};

inline constexpr std::size_t kMaxTimesteps = 4096;
inline constexpr std::size_t kInputChannels = 3;
inline constexpr std::size_t kHeartRateChannel = 0;
inline constexpr std::size_t kStepChannel = 1;
inline constexpr std::size_t kDtChannel = 2;

struct EventInfo {
  std::uint32_t offset_ms = 0;  // from week start
  Channel channel = Channel::HeartRate;
  float value = 0.0f;           // raw bpm or step count
};

struct EncodedWeek {
  std::string user_id;
  std::int64_t week_start_ms = 0;
  std::uint32_t valid_len = 0;
  std::size_t truncated = 0;
  std::vector<float> x;          // [kMaxTimesteps x kInputChannels], row-major
  std::vector<EventInfo> events;  // one per encoded timestep

  float at(std::size_t t, std::size_t c) const { return x[t * kInputChannels + c]; }
};

EncodedWeek encode_week(const WeekWindow& week, const NormalizationParams& norm);

// ---------------------------------------------------------------------------
// Labels

std::vector<std::string> default_tasks();

// task -> +1 / -1; a missing key means the diagnosis is unknown.
using Diagnoses = std::map<std::string, int>;

// Reads `user_id,task,label` rows (header optional). Throws DataError with the
// offending line number on malformed input.
std::map<std::string, Diagnoses> parse_labels(std::istream& in);
std::map<std::string, Diagnoses> parse_labels_file(const std::filesystem::path& path);

struct TaskTargets {
  std::size_t steps = 0;
  std::vector<std::string> task_names;
  std::vector<float> y;            // [steps x tasks]
  std::vector<std::uint8_t> mask;  // [steps x tasks]

  std::size_t tasks() const { return task_names.size(); }
};

// ceil(valid_len / pool^pool_stages).
std::size_t pooled_length(std::size_t valid_len, int pool_stages, int pool = 2);

// Places each known diagnosis at the last pooled timestep. Throws DataError
// when pooled_len disagrees with pooled_length(valid_len, pool_stages).
TaskTargets align_labels(std::size_t valid_len, const Diagnoses& diagnoses,
                         const std::vector<std::string>& tasks, int pool_stages,
                         std::size_t pooled_len, int pool = 2);

}  // namespace deepheart::sensorstream
