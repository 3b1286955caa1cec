#include "deepheart/sensorstream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deepheart/errors.hpp"
#include "deepheart/rng.hpp"

namespace deepheart::sensorstream {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Monday 1970-01-05 00:00 UTC.
constexpr std::int64_t kFirstMondayMs = 4 * kDayMs;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::string_view channel_name(Channel channel) {
  return channel == Channel::HeartRate ? "heart_rate" : "step_count";
}

std::optional<Channel> parse_channel(std::string_view name) {
  if (name == "heart_rate") return Channel::HeartRate;
  if (name == "step_count") return Channel::StepCount;
  return std::nullopt;
}

bool record_less(const SensorRecord& a, const SensorRecord& b) {
  if (a.user_id != b.user_id) return a.user_id < b.user_id;
  if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms < b.timestamp_ms;
  return a.channel < b.channel;
}

std::vector<std::pair<std::string, std::size_t>> RejectionCounts::items() const {
  return {{"malformed_json", malformed_json}, {"missing_field", missing_field},
          {"wrong_type", wrong_type},         {"unknown_channel", unknown_channel},
          {"bad_timestamp", bad_timestamp},   {"bad_value", bad_value},
          {"heart_rate_range", heart_rate_range}, {"duplicate", duplicate}};
}

ParseResult parse_records(std::istream& in) {
  using nlohmann::json;
  ParseResult result;
  auto& rej = result.rejected;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    ++result.lines;
    const json obj = json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      ++rej.malformed_json;
      continue;
    }
    if (!obj.contains("user_id") || !obj.contains("timestamp_ms") || !obj.contains("channel") ||
        !obj.contains("value")) {
      ++rej.missing_field;
      continue;
    }
    const auto& uid = obj["user_id"];
    const auto& ts = obj["timestamp_ms"];
    const auto& ch = obj["channel"];
    const auto& val = obj["value"];
    if (!uid.is_string() || !ts.is_number_integer() || !ch.is_string() || !val.is_number()) {
      ++rej.wrong_type;
      continue;
    }
    const auto channel = parse_channel(ch.get<std::string>());
    if (!channel) {
      ++rej.unknown_channel;
      continue;
    }
    const auto timestamp = ts.get<std::int64_t>();
    if (timestamp <= 0) {
      ++rej.bad_timestamp;
      continue;
    }
    const double value = val.get<double>();
    if (!std::isfinite(value) || value < 0.0) {
      ++rej.bad_value;
      continue;
    }
    if (*channel == Channel::HeartRate && (value < kMinHeartRate || value > kMaxHeartRate)) {
      ++rej.heart_rate_range;
      continue;
    }
    result.records.push_back({uid.get<std::string>(), timestamp, *channel, value});
  }
  if (in.bad()) throw DataError("read error while parsing sensor records");

  std::stable_sort(result.records.begin(), result.records.end(), record_less);
  const auto same_key = [](const SensorRecord& a, const SensorRecord& b) {
    return a.user_id == b.user_id && a.timestamp_ms == b.timestamp_ms && a.channel == b.channel;
  };
  const auto end = std::unique(result.records.begin(), result.records.end(), same_key);
  rej.duplicate += static_cast<std::size_t>(result.records.end() - end);
  result.records.erase(end, result.records.end());
  return result;
}

ParseResult parse_records_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sensor file: " + path.string());
  return parse_records(in);
}

std::string format_record(const SensorRecord& record) {
  nlohmann::ordered_json obj;
  obj["user_id"] = record.user_id;
  obj["timestamp_ms"] = record.timestamp_ms;
  obj["channel"] = channel_name(record.channel);
  if (record.value == std::floor(record.value) && record.value < 1e15) {
    obj["value"] = static_cast<std::int64_t>(record.value);
  } else {
    obj["value"] = record.value;
  }
  return obj.dump();
}

// ---------------------------------------------------------------------------

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Tune: return "tune";
    case Partition::Test: return "test";
  }
  return "?";
}

SplitFractions parse_split_fractions(std::string_view text) {
  double parts[3];
  int n = 0;
  std::string token;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, token, ',')) {
    if (n == 3) throw UsageError("--split expects three comma-separated fractions");
    std::size_t used = 0;
    try {
      parts[n] = std::stod(token, &used);
    } catch (const std::exception&) {
      throw UsageError("--split: not a number: '" + token + "'");
    }
    if (used != token.size()) throw UsageError("--split: not a number: '" + token + "'");
    ++n;
  }
  if (n != 3) throw UsageError("--split expects three comma-separated fractions");
  return {parts[0], parts[1], parts[2]};
}

Partition CohortSplit::at(const std::string& user_id) const {
  const auto it = assignment.find(user_id);
  if (it == assignment.end()) throw DataError("user not in cohort split: " + user_id);
  return it->second;
}

std::size_t CohortSplit::count(Partition p) const {
  return static_cast<std::size_t>(std::count_if(assignment.begin(), assignment.end(),
                                                [p](const auto& kv) { return kv.second == p; }));
}

CohortSplit split_cohort(std::span<const std::string> user_ids, const SplitFractions& f,
                         std::uint64_t seed) {
  if (user_ids.empty()) throw DataError("split_cohort: empty user list");
  if (f.train < 0 || f.tune < 0 || f.test < 0 || !(f.train + f.tune + f.test > 0) ||
      std::abs(f.train + f.tune + f.test - 1.0) > 1e-9) {
    throw UsageError("split fractions must be non-negative and sum to 1");
  }
  CohortSplit split;
  split.seed = seed;
  for (const auto& id : user_ids) {
    const double u = keyed_unit(seed, "cohort-split", id);
    Partition p = Partition::Test;
    if (u < f.train) {
      p = Partition::Train;
    } else if (u < f.train + f.tune) {
      p = Partition::Tune;
    }
    split.assignment[id] = p;
  }
  return split;
}

// ---------------------------------------------------------------------------

std::int64_t week_start_of(std::int64_t timestamp_ms) {
  return floor_div(timestamp_ms - kFirstMondayMs, kWeekMs) * kWeekMs + kFirstMondayMs;
}

std::vector<WeekWindow> chunk_weeks(std::span<const SensorRecord> records) {
  std::vector<WeekWindow> weeks;
  for (const auto& r : records) {
    const auto start = week_start_of(r.timestamp_ms);
    if (weeks.empty() || weeks.back().user_id != r.user_id || weeks.back().week_start_ms != start) {
      weeks.push_back({r.user_id, start, {}});
    }
    weeks.back().records.push_back(r);
  }
  return weeks;
}

std::string_view filter_reason_name(FilterReason reason) {
  switch (reason) {
    case FilterReason::Accepted: return "accepted";
    case FilterReason::TooFewHeartRate: return "too_few_heart_rate";
    case FilterReason::NoContinuousRun: return "no_continuous_run";
  }
  return "?";
}

std::int64_t longest_continuous_run_ms(const WeekWindow& week, std::int64_t max_gap_ms) {
  std::int64_t best = 0;
  std::optional<std::int64_t> run_start, prev;
  for (const auto& r : week.records) {
    if (r.channel != Channel::HeartRate) continue;
    if (!prev || r.timestamp_ms - *prev > max_gap_ms) run_start = r.timestamp_ms;
    prev = r.timestamp_ms;
    best = std::max(best, *prev - *run_start);
  }
  return best;
}

FilterResult filter_week(const WeekWindow& week, const FilterRules& rules) {
  FilterResult result;
  result.heart_rate_count = static_cast<std::size_t>(
      std::count_if(week.records.begin(), week.records.end(),
                    [](const SensorRecord& r) { return r.channel == Channel::HeartRate; }));
  result.longest_run_ms = longest_continuous_run_ms(week, rules.max_gap_ms);
  if (result.heart_rate_count <= rules.max_rejected_heart_rate_count) {
    result.reason = FilterReason::TooFewHeartRate;
  } else if (result.longest_run_ms < rules.min_run_ms) {
    result.reason = FilterReason::NoContinuousRun;
  } else {
    result.reason = FilterReason::Accepted;
    result.accepted = true;
  }
  return result;
}

// ---------------------------------------------------------------------------

double dt_transform(std::int64_t dt_ms) {
  if (dt_ms <= 0) throw std::invalid_argument("dt_transform: dt_ms must be positive");
  return 0.1 * std::log(static_cast<double>(dt_ms) / 5000.0);
}

double NormalizationParams::steps(double count) const {
  return std::log1p(count) / step_log_scale;
}

EncodedWeek encode_week(const WeekWindow& week, const NormalizationParams& norm) {
  EncodedWeek out;
  out.user_id = week.user_id;
  out.week_start_ms = week.week_start_ms;
  out.x.assign(kMaxTimesteps * kInputChannels, 0.0f);
  const std::size_t n = std::min(week.records.size(), kMaxTimesteps);
  out.valid_len = static_cast<std::uint32_t>(n);
  out.truncated = week.records.size() - n;
  out.events.reserve(n);

  std::optional<std::int64_t> last_seen[2];
  for (std::size_t t = 0; t < n; ++t) {
    const auto& r = week.records[t];
    const auto ch = static_cast<std::size_t>(r.channel);
    float* row = &out.x[t * kInputChannels];
    row[ch] = static_cast<float>(r.channel == Channel::HeartRate ? norm.heart_rate(r.value)
                                                                 : norm.steps(r.value));
    if (last_seen[ch]) {
      const std::int64_t dt = r.timestamp_ms - *last_seen[ch];
      if (dt <= 0) {
        throw DataError("encode_week: non-increasing timestamps in channel " +
                        std::string(channel_name(r.channel)) + " for user " + week.user_id);
      }
      row[kDtChannel] = static_cast<float>(dt_transform(dt));
    }
    last_seen[ch] = r.timestamp_ms;
    out.events.push_back({static_cast<std::uint32_t>(r.timestamp_ms - week.week_start_ms),
                          r.channel, static_cast<float>(r.value)});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> default_tasks() {
  return {"diabetes", "sleep_apnea", "hypertension", "high_cholesterol"};
}

std::map<std::string, Diagnoses> parse_labels(std::istream& in) {
  std::map<std::string, Diagnoses> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss{std::string(body)};
    std::string col;
    while (std::getline(ss, col, ',')) cols.emplace_back(trim(col));
    if (cols.size() != 3) {
      throw DataError("labels line " + std::to_string(line_no) + ": expected 3 columns");
    }
    if (line_no == 1 && cols[0] == "user_id") continue;
    int label = 0;
    if (cols[2] == "1" || cols[2] == "+1") {
      label = 1;
    } else if (cols[2] == "-1") {
      label = -1;
    } else {
      throw DataError("labels line " + std::to_string(line_no) + ": label must be 1 or -1");
    }
    labels[cols[0]][cols[1]] = label;
  }
  return labels;
}

std::map<std::string, Diagnoses> parse_labels_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path.string());
  return parse_labels(in);
}

std::size_t pooled_length(std::size_t valid_len, int pool_stages, int pool) {
  std::size_t len = valid_len;
  for (int s = 0; s < pool_stages; ++s) len = (len + pool - 1) / pool;
  return len;
}

TaskTargets align_labels(std::size_t valid_len, const Diagnoses& diagnoses,
                         const std::vector<std::string>& tasks, int pool_stages,
                         std::size_t pooled_len, int pool) {
  const std::size_t expected = pooled_length(valid_len, pool_stages, pool);
  if (pooled_len != expected) {
    throw DataError("align_labels: pooled length " + std::to_string(pooled_len) +
                    " does not match " + std::to_string(expected) + " for valid_len " +
                    std::to_string(valid_len) + " and " + std::to_string(pool_stages) +
                    " pooling stages");
  }
  TaskTargets targets;
  targets.steps = pooled_len;
  targets.task_names = tasks;
  targets.y.assign(pooled_len * tasks.size(), 0.0f);
  targets.mask.assign(pooled_len * tasks.size(), 0);
  if (pooled_len == 0) return targets;
  const std::size_t last = pooled_len - 1;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto it = diagnoses.find(tasks[k]);
    if (it == diagnoses.end()) continue;
    targets.y[last * tasks.size() + k] = it->second > 0 ? 1.0f : -1.0f;
    targets.mask[last * tasks.size() + k] = 1;
  }
  return targets;
}

}  // namespace deepheart::sensorstream
