#include "deepheart/cache.hpp"

#include <set>

#include "deepheart/errors.hpp"
#include "deepheart/io.hpp"

namespace deepheart::sensorstream {

Diagnoses CachedWeek::diagnoses() const {
  Diagnoses out;
  if (targets.steps == 0) return out;
  const std::size_t last = targets.steps - 1;
  for (std::size_t k = 0; k < targets.tasks(); ++k) {
    const std::size_t i = last * targets.tasks() + k;
    if (targets.mask[i]) out[targets.task_names[k]] = targets.y[i] > 0 ? 1 : -1;
  }
  return out;
}

bool CachedWeek::has_any_label() const {
  for (auto m : targets.mask) {
    if (m) return true;
  }
  return false;
}

std::string serialize_cache(const TensorCache& cache) {
  io::Writer w;
  w.put_bytes(std::string_view(kCacheMagic, 4));
  w.put(kCacheVersion);
  w.put(static_cast<std::uint32_t>(cache.pool_stages));
  w.put(cache.split_seed);
  w.put(cache.fractions.train);
  w.put(cache.fractions.tune);
  w.put(cache.fractions.test);
  w.put(cache.norm.hr_center);
  w.put(cache.norm.hr_scale);
  w.put(cache.norm.step_log_scale);
  w.put(static_cast<std::uint16_t>(cache.tasks.size()));
  for (const auto& t : cache.tasks) w.put_string<std::uint16_t>(t);
  w.put(static_cast<std::uint32_t>(cache.weeks.size()));
  for (const auto& cw : cache.weeks) {
    const auto& wk = cw.week;
    if (wk.x.size() != kMaxTimesteps * kInputChannels || wk.events.size() != wk.valid_len) {
      throw DataError("serialize_cache: malformed encoded week for " + wk.user_id);
    }
    if (cw.targets.tasks() != cache.tasks.size()) {
      throw DataError("serialize_cache: task count mismatch for " + wk.user_id);
    }
    w.put_string(wk.user_id);
    w.put(wk.week_start_ms);
    w.put(wk.valid_len);
    w.put(static_cast<std::uint8_t>(cw.split));
    w.put(static_cast<std::uint32_t>(wk.truncated));
    w.put_array(std::span<const float>(wk.x));
    w.put(static_cast<std::uint32_t>(cw.targets.steps));
    w.put_array(std::span<const float>(cw.targets.y));
    w.put_array(std::span<const std::uint8_t>(cw.targets.mask));
    for (const auto& e : wk.events) {
      w.put(e.offset_ms);
      w.put(static_cast<std::uint8_t>(e.channel));
      w.put(e.value);
    }
  }
  return w.take();
}

TensorCache deserialize_cache(std::string_view bytes) {
  io::Reader r(bytes, "tensor cache");
  if (r.get_bytes(4) != std::string_view(kCacheMagic, 4)) {
    throw DataError("tensor cache: bad magic (expected DHTC)");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kCacheVersion) {
    throw DataError("tensor cache: unsupported format version " + std::to_string(version));
  }
  TensorCache cache;
  cache.pool_stages = static_cast<int>(r.get<std::uint32_t>());
  cache.split_seed = r.get<std::uint64_t>();
  cache.fractions.train = r.get<double>();
  cache.fractions.tune = r.get<double>();
  cache.fractions.test = r.get<double>();
  cache.norm.hr_center = r.get<double>();
  cache.norm.hr_scale = r.get<double>();
  cache.norm.step_log_scale = r.get<double>();
  const auto n_tasks = r.get<std::uint16_t>();
  cache.tasks.clear();
  for (std::uint16_t k = 0; k < n_tasks; ++k) cache.tasks.push_back(r.get_string<std::uint16_t>());
  const auto n_weeks = r.get<std::uint32_t>();
  cache.weeks.reserve(n_weeks);
  for (std::uint32_t i = 0; i < n_weeks; ++i) {
    CachedWeek cw;
    auto& wk = cw.week;
    wk.user_id = r.get_string();
    wk.week_start_ms = r.get<std::int64_t>();
    wk.valid_len = r.get<std::uint32_t>();
    if (wk.valid_len > kMaxTimesteps) throw DataError("tensor cache: valid_len exceeds 4096");
    const auto part = r.get<std::uint8_t>();
    if (part > 2) throw DataError("tensor cache: bad partition code");
    cw.split = static_cast<Partition>(part);
    wk.truncated = r.get<std::uint32_t>();
    wk.x.resize(kMaxTimesteps * kInputChannels);
    r.get_array(std::span<float>(wk.x));
    cw.targets.steps = r.get<std::uint32_t>();
    cw.targets.task_names = cache.tasks;
    cw.targets.y.resize(cw.targets.steps * n_tasks);
    cw.targets.mask.resize(cw.targets.steps * n_tasks);
    r.get_array(std::span<float>(cw.targets.y));
    r.get_array(std::span<std::uint8_t>(cw.targets.mask));
    wk.events.resize(wk.valid_len);
    for (auto& e : wk.events) {
      e.offset_ms = r.get<std::uint32_t>();
      const auto ch = r.get<std::uint8_t>();
      if (ch > 1) throw DataError("tensor cache: bad channel code");
      e.channel = static_cast<Channel>(ch);
      e.value = r.get<float>();
    }
    cache.weeks.push_back(std::move(cw));
  }
  if (r.remaining() != 0) throw DataError("tensor cache: trailing bytes after last week");
  return cache;
}

void write_cache(const std::filesystem::path& path, const TensorCache& cache) {
  io::write_file_atomic(path, serialize_cache(cache));
}

TensorCache read_cache(const std::filesystem::path& path) {
  return deserialize_cache(io::read_file(path));
}

TensorCache build_cache(const std::vector<SensorRecord>& records,
                        const std::map<std::string, Diagnoses>& labels, const EncodeOptions& options,
                        EncodeStats* stats) {
  EncodeStats local;
  local.records = records.size();
  std::set<std::string> user_set;
  for (const auto& r : records) user_set.insert(r.user_id);
  for (const auto& [user, _] : labels) user_set.insert(user);
  const std::vector<std::string> users(user_set.begin(), user_set.end());
  local.users = users.size();
  const auto split = split_cohort(users, options.fractions, options.seed);

  TensorCache cache;
  cache.pool_stages = options.pool_stages;
  cache.split_seed = options.seed;
  cache.fractions = options.fractions;
  cache.norm = options.norm;
  cache.tasks = options.tasks;

  static const Diagnoses kNone;
  for (auto& week : chunk_weeks(records)) {
    ++local.weeks_total;
    const auto verdict = filter_week(week, options.rules);
    if (!verdict.accepted) {
      ++local.rejected_by_reason[std::string(filter_reason_name(verdict.reason))];
      continue;
    }
    ++local.weeks_accepted;
    CachedWeek cw;
    cw.week = encode_week(week, options.norm);
    cw.split = split.at(week.user_id);
    local.events_encoded += cw.week.valid_len;
    local.events_truncated += cw.week.truncated;
    const auto it = labels.find(week.user_id);
    cw.targets = align_labels(cw.week.valid_len, it == labels.end() ? kNone : it->second,
                              options.tasks, options.pool_stages,
                              pooled_length(cw.week.valid_len, options.pool_stages));
    cache.weeks.push_back(std::move(cw));
  }
  if (stats) *stats = local;
  return cache;
}

}  // namespace deepheart::sensorstream
