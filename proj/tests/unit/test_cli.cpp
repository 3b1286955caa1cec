#include <doctest.h>

#include <fstream>
#include <sstream>

#include "deepheart/cli.hpp"
#include "support.hpp"

namespace cli = deepheart::cli;
using deepheart::testing::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "deepheart");
  std::ostringstream out, err;
  Run r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help lists the subcommands and exits 0") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    for (const char* sub : {"generate", "encode", "features", "pretrain", "train", "evaluate", "sweep", "grid",
                            "ablate", "baselines"}) {
      CHECK(r.out.find(sub) != std::string::npos);
    }
    CHECK(run({"train", "--help"}).code == 0);
  }

  TEST_CASE("a missing required flag is a usage error naming the flag") {
    const auto r = run({"train", "--out", "x.ckpt"});
    CHECK(r.code == 1);
    CHECK(r.err.find("--cache") != std::string::npos);
  }

  TEST_CASE("unknown subcommands and options are usage errors") {
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"features", "--cache", "a", "--out", "b", "--bogus"}).code == 1);
    CHECK(run({}).code == 1);
  }

  TEST_CASE("missing inputs are data errors") {
    TempDir dir("cli_missing");
    const auto r = run({"features", "--cache", (dir / "absent.dhtc").string(), "--out", (dir / "f.csv").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("absent.dhtc") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "f.csv"));
  }

  TEST_CASE("bad config values are usage errors") {
    TempDir dir("cli_bad");
    {
      std::ofstream cfg(dir / "bad.cfg");
      cfg << "synth.n_users = many\n";
    }
    const auto r = run({"generate", "--config", (dir / "bad.cfg").string(), "--out", (dir / "r.jsonl").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("n_users") != std::string::npos);
    CHECK(run({"generate", "--out", (dir / "r.jsonl").string(), "--threads", "0"}).code == 1);
  }

  TEST_CASE("end to end pipeline on a tiny cohort") {
    TempDir dir("cli_pipeline");
    const auto cfg = (dir / "tiny.cfg").string();
    {
      std::ofstream out(cfg);
      out << "synth.n_users = 12\nsynth.weeks_per_user = 1\nsynth.seed = 3\n"
          << "model.width = 4\nmodel.conv_depth = 2\nmodel.lstm_depth = 1\n"
          << "train.max_epochs = 1\ntrain.pretrain_epochs = 1\ntrain.batch_size = 4\n"
          << "eval.n_boot = 20\n";
    }
    const auto path = [&](const char* name) { return (dir / name).string(); };
    auto step = [&](std::vector<std::string> args) {
      const auto r = run(args);
      INFO(args[0] << " stderr: " << r.err);
      REQUIRE(r.code == 0);
      return r;
    };
    step({"generate", "--config", cfg, "--out", path("records.jsonl"), "--labels", path("labels.csv")});
    CHECK(std::filesystem::exists(path("records.jsonl.manifest")));
    step({"encode", "--config", cfg, "--input", path("records.jsonl"), "--labels", path("labels.csv"), "--out",
          path("cache.dhtc")});
    step({"features", "--config", cfg, "--cache", path("cache.dhtc"), "--out", path("features.csv")});
    CHECK(slurp(path("features.csv")).find("user_id,week_start,split,") != std::string::npos);
    step({"pretrain", "--config", cfg, "--mode", "autoencoder", "--cache", path("cache.dhtc"), "--out",
          path("enc.ckpt")});
    step({"train", "--config", cfg, "--cache", path("cache.dhtc"), "--init", path("enc.ckpt"), "--out",
          path("model.ckpt"), "--log", path("train.csv")});
    step({"evaluate", "--config", cfg, "--cache", path("cache.dhtc"), "--model", path("model.ckpt"), "--out",
          path("report.csv"), "--roc", path("roc.csv")});
    const auto report = slurp(path("report.csv"));
    CHECK(report.rfind("# manifest=", 0) == 0);
    CHECK(report.find("model,level,task,auc,ci_low,ci_high,n_pos,n_neg") != std::string::npos);
    CHECK(std::filesystem::exists(path("report.csv.manifest")));

    // A classifier checkpoint is not an encoder and vice versa.
    const auto r = run({"evaluate", "--config", cfg, "--cache", path("cache.dhtc"), "--model", path("enc.ckpt"),
                        "--out", path("bad.csv")});
    CHECK(r.code == 1);
    CHECK(r.err.find("classifier checkpoint") != std::string::npos);

    // Same seeds, same bytes.
    step({"train", "--config", cfg, "--cache", path("cache.dhtc"), "--init", path("enc.ckpt"), "--out",
          path("model2.ckpt")});
    CHECK(slurp(path("model.ckpt")) == slurp(path("model2.ckpt")));
  }
}
