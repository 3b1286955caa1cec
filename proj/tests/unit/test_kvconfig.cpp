#include <doctest.h>

#include <sstream>

#include "deepheart/errors.hpp"
#include "deepheart/kvconfig.hpp"

using deepheart::KeyValueConfig;

namespace {
KeyValueConfig parse(const std::string& text) {
  std::istringstream in(text);
  return KeyValueConfig::parse(in, "test.cfg");
}
}  // namespace

TEST_SUITE("kvconfig") {
  TEST_CASE("parses keys, values, comments and blank lines") {
    const auto cfg = parse("# header\n\nmodel.width = 32\n  train.seed=7  # trailing\nname = a b\n");
    CHECK(cfg.get_int("model.width") == 32);
    CHECK(cfg.get_int("train.seed") == 7);
    CHECK(cfg.get_string("name") == "a b");
    CHECK_FALSE(cfg.get_string("missing").has_value());
  }

  TEST_CASE("later keys override earlier ones") {
    CHECK(parse("a = 1\na = 2\n").get_int("a") == 2);
  }

  TEST_CASE("malformed lines and values are usage errors") {
    CHECK_THROWS_AS(parse("no equals sign\n"), deepheart::UsageError);
    CHECK_THROWS_AS(parse(" = 3\n"), deepheart::UsageError);
    const auto cfg = parse("a = x\nb = 1.5\n");
    CHECK_THROWS_AS(cfg.get_int("a"), deepheart::UsageError);
    CHECK_THROWS_AS(cfg.get_double("a"), deepheart::UsageError);
    CHECK_THROWS_AS(cfg.get_int("b"), deepheart::UsageError);
    CHECK(cfg.get_double("b") == 1.5);
  }

  TEST_CASE("section strips the prefix") {
    const auto cfg = parse("synth.n_users = 10\nsynth.effect.diabetes = 0.6\nmodel.width = 8\n");
    const auto s = cfg.section("synth");
    CHECK(s.get_int("n_users") == 10);
    CHECK(s.get_double("effect.diabetes") == 0.6);
    CHECK_FALSE(s.contains("model.width"));
    CHECK(s.values().size() == 2);
  }

  TEST_CASE("unused keys are reported") {
    const auto cfg = parse("a = 1\nb = 2\n");
    (void)cfg.get_int("a");
    CHECK(cfg.unused_keys() == std::set<std::string>{"b"});
  }
}
