#include <doctest.h>

#include <atomic>
#include <numeric>
#include <cmath>
#include <sstream>

#include "deepheart/eval.hpp"
#include "deepheart/rng.hpp"

namespace ev = deepheart::eval;
namespace ss = deepheart::sensorstream;
using deepheart::Philox;

namespace {

constexpr std::int64_t kMonday = 1'704'067'200'000;

// Probability a random positive outscores a random negative, ties one half.
std::optional<double> brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] <= 0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] > 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

// Scores on a coarse grid so ties are common.
void random_instance(Philox& rng, std::vector<double>& s, std::vector<int>& y) {
  const std::size_t n = 1 + rng.below(50);
  const double p = rng.uniform(0.05, 0.95);
  const int levels = 1 + static_cast<int>(rng.below(12));
  s.clear();
  y.clear();
  for (std::size_t i = 0; i < n; ++i) {
    y.push_back(rng.bernoulli(p) ? 1 : -1);
    s.push_back(static_cast<double>(rng.below(levels)) + (y.back() > 0 ? 0.3 * rng.uniform() : 0.0));
  }
}

ss::TensorCache small_cache(std::size_t users) {
  Philox rng(5);
  std::vector<ss::SensorRecord> recs;
  std::map<std::string, ss::Diagnoses> labels;
  for (std::size_t u = 0; u < users; ++u) {
    const std::string id = "user" + std::to_string(u);
    std::int64_t t = kMonday + 3'600'000;
    for (int i = 0; i < 700; ++i) {
      t += i < 400 ? 5000 : 600'000;
      recs.push_back({id, t, ss::Channel::HeartRate, std::round(rng.uniform(50, 120))});
    }
    labels[id] = {{"diabetes", u % 2 ? 1 : -1}, {"hypertension", u % 3 ? 1 : -1}};
  }
  std::sort(recs.begin(), recs.end(), ss::record_less);
  ss::EncodeOptions opt;
  opt.seed = 1;
  return ss::build_cache(recs, labels, opt);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("rank statistic and ROC area equal the pairwise oracle") {
    Philox rng(1);
    std::vector<double> s;
    std::vector<int> y;
    int compared = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      random_instance(rng, s, y);
      const auto want = brute_auc(s, y);
      const auto got = ev::c_statistic(s, y);
      const auto roc = ev::roc_curve(s, y);
      REQUIRE(want.has_value() == got.has_value());
      REQUIRE(want.has_value() == roc.has_value());
      if (!want) continue;
      ++compared;
      CHECK(std::abs(*got - *want) <= 1e-12);
      CHECK(std::abs(roc->auc - *want) <= 1e-12);
    }
    CHECK(compared > 900);
  }

  TEST_CASE("auc is invariant to order and strictly monotone rescaling") {
    Philox rng(2);
    std::vector<double> s;
    std::vector<int> y;
    for (int trial = 0; trial < 200; ++trial) {
      random_instance(rng, s, y);
      const auto base = ev::c_statistic(s, y);
      if (!base) continue;
      std::vector<double> t = s;
      for (auto& v : t) v = std::exp(0.5 * v) - 3.0;
      CHECK(*ev::c_statistic(t, y) == doctest::Approx(*base).epsilon(1e-12));
      std::vector<std::size_t> perm(s.size());
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<double> ps;
      std::vector<int> py;
      for (auto i : perm) {
        ps.push_back(s[i]);
        py.push_back(y[i]);
      }
      CHECK(*ev::c_statistic(ps, py) == *base);
      // Negating scores flips the area.
      std::vector<double> neg = s;
      for (auto& v : neg) v = -v;
      CHECK(*ev::c_statistic(neg, y) == doctest::Approx(1.0 - *base).epsilon(1e-12));
    }
  }

  TEST_CASE("roc curve runs from (0,0) to (1,1) monotonically") {
    const std::vector<double> s{0.9, 0.8, 0.8, 0.3, 0.1};
    const std::vector<int> y{1, -1, 1, -1, -1};
    const auto roc = ev::roc_curve(s, y);
    REQUIRE(roc);
    CHECK(roc->points.front().fpr == 0.0);
    CHECK(roc->points.front().tpr == 0.0);
    CHECK(roc->points.back().fpr == 1.0);
    CHECK(roc->points.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc->points.size(); ++i) {
      CHECK(roc->points[i].fpr >= roc->points[i - 1].fpr);
      CHECK(roc->points[i].tpr >= roc->points[i - 1].tpr);
    }
    // 6 pairs: 3 wins, one tie, 2 wins -> 5.5 / 6.
    CHECK(roc->auc == doctest::Approx(5.5 / 6.0));
  }

  TEST_CASE("single-class and mismatched inputs") {
    const std::vector<double> s{1, 2, 3};
    CHECK_FALSE(ev::c_statistic(s, std::vector<int>{1, 1, 1}).has_value());
    CHECK_FALSE(ev::roc_curve(s, std::vector<int>{-1, -1, -1}).has_value());
    CHECK_THROWS_AS(ev::c_statistic(s, std::vector<int>{1, -1}), std::invalid_argument);
    CHECK_THROWS_AS(ev::bootstrap_ci(s, std::vector<int>{1, 1, 1}, {}, {}), deepheart::DataError);
  }

  TEST_CASE("quantiles interpolate linearly") {
    const std::vector<double> v{1, 2, 4, 8};
    CHECK(ev::quantile_sorted(v, 0.0) == 1.0);
    CHECK(ev::quantile_sorted(v, 1.0) == 8.0);
    CHECK(ev::quantile_sorted(v, 0.5) == doctest::Approx(3.0));
    CHECK_THROWS(ev::quantile_sorted(std::vector<double>{}, 0.5));
  }

  TEST_CASE("bootstrap interval contains the estimate and is reproducible") {
    Philox rng(3);
    std::vector<double> s;
    std::vector<int> y;
    std::vector<std::size_t> cl;
    for (int i = 0; i < 200; ++i) {
      y.push_back(rng.bernoulli(0.3) ? 1 : -1);
      s.push_back(rng.normal() + (y.back() > 0 ? 1.0 : 0.0));
      cl.push_back(static_cast<std::size_t>(i / 2));
    }
    ev::BootstrapOptions opt;
    opt.n_boot = 400;
    opt.seed = 9;
    const auto auc = *ev::c_statistic(s, y);
    const auto a = ev::bootstrap_ci(s, y, {}, opt);
    const auto b = ev::bootstrap_ci(s, y, {}, opt);
    const auto c = ev::bootstrap_ci(s, y, cl, opt);
    CHECK(a.low <= auc);
    CHECK(a.high >= auc);
    CHECK(a.low == b.low);
    CHECK(a.high == b.high);
    CHECK(c.low <= auc);
    CHECK(c.high >= auc);
    CHECK(a.high - a.low > 0.05);
    CHECK(a.high - a.low < 0.35);
    opt.level = 0.5;
    const auto narrow = ev::bootstrap_ci(s, y, {}, opt);
    CHECK(narrow.high - narrow.low < a.high - a.low);
  }

  TEST_CASE("bootstrap gives up when one class rarely appears") {
    ev::BootstrapOptions opt;
    opt.n_boot = 2000;
    std::vector<double> s(60, 0.0);
    std::vector<int> y(60, -1);
    for (int i = 0; i < 3; ++i) {
      y[i] = 1;
      s[i] = 1.0;
    }
    // Three positives in 60: about 5% of resamples are single-class.
    const auto ci = ev::bootstrap_ci(s, y, {}, opt);
    CHECK(ci.redrawn > 0);
    CHECK(ci.redrawn < 300);
    // One positive in 60: about 36% miss it, more redraws than half of n_boot.
    y[1] = y[2] = -1;
    CHECK_THROWS_AS(ev::bootstrap_ci(s, y, {}, opt), deepheart::DataError);
  }

  TEST_CASE("user level averages week scores per user") {
    std::vector<ev::ScoredWeek> weeks{
        {"a", {0.9}, {{"t", 1}}}, {"a", {0.1}, {{"t", 1}}},   // mean 0.5
        {"b", {0.6}, {{"t", -1}}}, {"b", {0.6}, {{"t", -1}}},  // mean 0.6
        {"c", {0.8}, {{"t", 1}}},  {"d", {0.2}, {{"t", -1}}}, {"e", {0.7}, {}}};
    ev::BootstrapOptions opt;
    opt.n_boot = 50;
    const auto res = ev::evaluate_scores("m", weeks, {"t"}, opt);
    REQUIRE(res.size() == 2);
    const auto& week = res[0].level == ev::Level::Week ? res[0] : res[1];
    const auto& user = res[0].level == ev::Level::User ? res[0] : res[1];
    CHECK(week.n_pos == 3);
    CHECK(week.n_neg == 3);
    CHECK(user.n_pos == 2);
    CHECK(user.n_neg == 2);
    // Users: a 0.5 (+), c 0.8 (+), b 0.6 (-), d 0.2 (-): 3 of 4 pairs.
    CHECK(*user.auc == doctest::Approx(0.75));
    CHECK(*week.auc == doctest::Approx(*brute_auc({0.9, 0.1, 0.6, 0.6, 0.8, 0.2}, {1, 1, -1, -1, 1, -1})));

    std::ostringstream csv;
    ev::write_report_csv(csv, res, "abc");
    CHECK(csv.str().rfind("# manifest=abc\nmodel,level,task,auc,ci_low,ci_high,n_pos,n_neg\n", 0) == 0);
    CHECK(csv.str().find("m,user,t,0.750000,") != std::string::npos);
  }

  TEST_CASE("number formatting is fixed precision") {
    CHECK(ev::format_number(0.5) == "0.500000");
    CHECK(ev::format_optional(std::nullopt).empty());
  }

  TEST_CASE("parallel_for fills every slot and rethrows") {
    std::vector<int> out(100, 0);
    ev::parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(ev::parallel_for(10, 3,
                                     [&](std::size_t i) {
                                       ++ran;
                                       if (i == 4) throw std::runtime_error("boom");
                                     }),
                    std::runtime_error);
  }

  TEST_CASE("features csv round trips through the cache") {
    const auto cache = small_cache(12);
    REQUIRE(cache.weeks.size() == 12);
    const auto rows = ev::feature_rows(cache);
    REQUIRE(rows.size() == 12);
    std::ostringstream out;
    ev::write_features_csv(out, rows, cache.tasks, "h");
    std::istringstream in(out.str());
    const auto back = ev::read_features_csv(in, cache);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].user_id == rows[i].user_id);
      CHECK(back[i].split == rows[i].split);
      CHECK(back[i].diagnoses == rows[i].diagnoses);
      for (std::size_t f = 0; f < rows[i].raw.size(); ++f) {
        if (rows[i].raw[f]) CHECK(*back[i].raw[f] == doctest::Approx(*rows[i].raw[f]).epsilon(1e-9));
        else CHECK_FALSE(back[i].raw[f].has_value());
      }
    }
    std::istringstream bad("user_id,week_start,split,nonsense\n");
    CHECK_THROWS_AS(ev::read_features_csv(bad, cache), deepheart::DataError);
  }

  TEST_CASE("baselines skip tasks without both classes") {
    auto cache = small_cache(30);
    const auto rows = ev::feature_rows(cache);
    std::vector<std::string> log;
    ev::BaselineOptions opt;
    opt.bootstrap.n_boot = 50;
    opt.mlp.max_epochs = 5;
    const auto res = ev::run_baselines(rows, {"diabetes", "sleep_apnea"}, opt,
                                       [&](const std::string& m) { log.push_back(m); });
    bool saw_skip = false;
    for (const auto& m : log) saw_skip = saw_skip || m.find("sleep_apnea") != std::string::npos;
    CHECK(saw_skip);
    for (const auto& r : res) CHECK(r.task == "diabetes");
    CHECK_FALSE(res.empty());
  }
}
