#include <doctest.h>

#include "deepheart/cache.hpp"
#include "deepheart/errors.hpp"
#include "deepheart/rng.hpp"
#include "support.hpp"

namespace ss = deepheart::sensorstream;

namespace {

constexpr std::int64_t kMonday = 1'704'067'200'000;

// Users with one qualifying week each: 700 heart-rate samples, the first 400
// at 5 s spacing, plus a few step events.
std::vector<ss::SensorRecord> qualifying_records(std::size_t users, std::uint64_t seed) {
  deepheart::Philox rng(seed);
  std::vector<ss::SensorRecord> out;
  for (std::size_t u = 0; u < users; ++u) {
    const std::string id = "user" + std::to_string(u);
    std::int64_t t = kMonday + 3'600'000;
    for (int i = 0; i < 700; ++i) {
      t += i < 400 ? 5000 : 600'000;
      out.push_back({id, t, ss::Channel::HeartRate, std::round(rng.uniform(50, 120))});
    }
    for (int i = 0; i < 20; ++i) {
      out.push_back({id, kMonday + 7'200'000 + i * 60'000 + 1, ss::Channel::StepCount, 80});
    }
  }
  std::sort(out.begin(), out.end(), ss::record_less);
  return out;
}

}  // namespace

TEST_SUITE("cache") {
  TEST_CASE("build_cache filters, splits and aligns labels") {
    auto records = qualifying_records(30, 1);
    // One more user whose week is too sparse.
    for (int i = 0; i < 10; ++i) records.push_back({"sparse", kMonday + i * 1000LL, ss::Channel::HeartRate, 70});
    std::sort(records.begin(), records.end(), ss::record_less);
    std::map<std::string, ss::Diagnoses> labels{{"user0", {{"diabetes", 1}}}, {"user1", {{"hypertension", -1}}}};
    ss::EncodeOptions opt;
    opt.seed = 3;
    ss::EncodeStats stats;
    const auto cache = ss::build_cache(records, labels, opt, &stats);
    CHECK(stats.weeks_total == 31);
    CHECK(stats.weeks_accepted == 30);
    CHECK(cache.weeks.size() == 30);
    CHECK(stats.rejected_by_reason.at("too_few_heart_rate") == 1);
    CHECK(stats.events_encoded + stats.events_truncated == 30 * 720);
    for (const auto& w : cache.weeks) {
      CHECK(w.targets.steps == ss::pooled_length(w.week.valid_len, opt.pool_stages));
      if (w.week.user_id == "user0") {
        CHECK(w.diagnoses() == ss::Diagnoses{{"diabetes", 1}});
      } else if (w.week.user_id == "user1") {
        CHECK(w.diagnoses() == ss::Diagnoses{{"hypertension", -1}});
      } else {
        CHECK_FALSE(w.has_any_label());
      }
    }
  }

  TEST_CASE("serialize round trip is exact") {
    ss::EncodeOptions opt;
    const auto cache = ss::build_cache(qualifying_records(6, 2), {{"user3", {{"sleep_apnea", -1}}}}, opt);
    const auto bytes = ss::serialize_cache(cache);
    CHECK(bytes.substr(0, 4) == "DHTC");
    const auto back = ss::deserialize_cache(bytes);
    CHECK(ss::serialize_cache(back) == bytes);
    REQUIRE(back.weeks.size() == cache.weeks.size());
    for (std::size_t i = 0; i < back.weeks.size(); ++i) {
      CHECK(back.weeks[i].week.x == cache.weeks[i].week.x);
      CHECK(back.weeks[i].targets.mask == cache.weeks[i].targets.mask);
      CHECK(back.weeks[i].split == cache.weeks[i].split);
    }
    CHECK(back.norm == cache.norm);
  }

  TEST_CASE("corrupt caches are data errors") {
    const auto bytes = ss::serialize_cache(ss::build_cache(qualifying_records(2, 3), {}, {}));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(ss::deserialize_cache(bad_magic), deepheart::DataError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(ss::deserialize_cache(bad_version), deepheart::DataError);
    CHECK_THROWS_AS(ss::deserialize_cache(bytes.substr(0, bytes.size() - 3)), deepheart::DataError);
    CHECK_THROWS_AS(ss::deserialize_cache(bytes + "x"), deepheart::DataError);
  }

  TEST_CASE("file round trip") {
    deepheart::testing::TempDir dir("cache");
    const auto cache = ss::build_cache(qualifying_records(3, 4), {}, {});
    ss::write_cache(dir / "c.dhtc", cache);
    CHECK(ss::serialize_cache(ss::read_cache(dir / "c.dhtc")) == ss::serialize_cache(cache));
  }
}
