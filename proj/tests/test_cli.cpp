#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "hypergoal/binio.hpp"
#include "hypergoal/errors.hpp"
#include "test_util.hpp"

using namespace hypergoal;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path run_dir_of(const std::string& out) {
  const auto pos = out.rfind("run_dir ");
  REQUIRE(pos != std::string::npos);
  std::string line = out.substr(pos + 8);
  return line.substr(0, line.find('\n'));
}

}  // namespace

TEST_CASE("overrides walk the defaults tree") {
  json c = cli::default_config();
  cli::apply_override(c, "train.epochs=7");
  cli::apply_override(c, "env.task=push");
  cli::apply_override(c, "train.shaping.beta=0.25");
  cli::apply_override(c, "eval.rollout.regenerate_every_step=false");
  CHECK(c["train"]["epochs"] == 7);
  CHECK(c["env"]["task"] == "push");
  CHECK(c["train"]["shaping"]["beta"] == 0.25);
  CHECK(c["eval"]["rollout"]["regenerate_every_step"] == false);
  cli::validate_config(c);

  CHECK_THROWS_AS(cli::apply_override(c, "train.epochz=7"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "train.epochs=fast"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "train=3"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(cli::merge_config(c, json{{"model", 1}}), ConfigError);

  json bad = cli::default_config();
  cli::apply_override(bad, "env.task=\"fly\"");
  CHECK_THROWS_AS(cli::validate_config(bad), ConfigError);
  json neg = cli::default_config();
  cli::apply_override(neg, "train.epochs=0");
  CHECK_THROWS_AS(cli::validate_config(neg), ConfigError);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kExitInvalid);
  const Outcome unknown_flag = run({"train", "--bogus"});
  CHECK(unknown_flag.code == cli::kExitInvalid);
  CHECK(unknown_flag.err.find("Usage") != std::string::npos);
  CHECK(run({"fly"}).code == cli::kExitInvalid);
  test_util::TempDir dir;
  CHECK(run({"train", "--out", dir.path().string(), "--set", "train.nope=1"}).code == cli::kExitInvalid);
  CHECK(run({"train", "--out", dir.path().string(), "--config", (dir.path() / "missing.json").string()}).code ==
        cli::kExitInvalid);
  CHECK(run({"eval", "--out", dir.path().string()}).code == cli::kExitInvalid);
  CHECK(run({"help"}).code == cli::kExitInvalid);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("missing artifacts are runtime failures") {
  test_util::TempDir dir;
  const Outcome r =
      run({"eval", "--out", dir.path().string(), "--checkpoint", (dir.path() / "nothing").string()});
  CHECK(r.code == cli::kExitFailure);
  const Outcome t = run({"train", "--out", dir.path().string(), "--data", (dir.path() / "nothing").string()});
  CHECK(t.code == cli::kExitFailure);
}

TEST_CASE("grad-check on the tiny configuration") {
  test_util::TempDir dir;
  const Outcome r = run({"grad-check", "--out", dir.path().string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find(" OK") != std::string::npos);
  CHECK(r.out.find("hypernet hypernet max_rel_error") != std::string::npos);
  CHECK(std::filesystem::exists(run_dir_of(r.out) / "config.json"));
}

TEST_CASE("gen-data, train, eval and report pipeline") {
  test_util::TempDir dir;
  const std::string out = dir.path().string();
  const std::vector<std::string> small{"--set", "data.num_demos=4", "--set", "train.epochs=2", "--set",
                                       "train.model.num_blocks=2", "--set", "train.model.latent_dim=4"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), small.begin(), small.end());
    args.insert(args.end(), {"--out", out, "--seed", "5"});
    return run(args);
  };

  const Outcome gen = with({"gen-data"});
  REQUIRE(gen.code == cli::kExitOk);
  const auto data = run_dir_of(gen.out) / "dataset";
  CHECK(std::filesystem::exists(data / "manifest.json"));
  const json echoed = json::parse(binio::read_text(run_dir_of(gen.out) / "config.json"));
  CHECK(echoed["seed"] == 5);
  CHECK(echoed["data"]["num_demos"] == 4);
  CHECK(echoed["train"]["lr0"] == cli::default_config()["train"]["lr0"]);

  const Outcome tr = with({"train", "--data", data.string()});
  REQUIRE(tr.code == cli::kExitOk);
  const auto ckpt = run_dir_of(tr.out) / "checkpoint";
  CHECK(std::filesystem::exists(ckpt / "ckpt.json"));
  CHECK(std::filesystem::exists(run_dir_of(tr.out) / "loss.csv"));

  const Outcome tr2 = with({"train", "--data", data.string()});
  REQUIRE(tr2.code == cli::kExitOk);
  CHECK(run_dir_of(tr2.out) != run_dir_of(tr.out));
  CHECK(binio::read_text(run_dir_of(tr.out) / "loss.csv") == binio::read_text(run_dir_of(tr2.out) / "loss.csv"));

  const Outcome ev = with({"eval", "--checkpoint", ckpt.string(), "--data", data.string(), "--set", "eval.n=3",
                           "--set", "eval.rollout.max_steps=10"});
  REQUIRE(ev.code == cli::kExitOk);
  const auto report = run_dir_of(ev.out) / "report.json";
  const json rep = json::parse(binio::read_text(report));
  CHECK(rep.at("n_rollouts") == 3);
  CHECK(std::filesystem::exists(run_dir_of(ev.out) / "curves.csv"));

  const Outcome sum = run({"report", report.string(), report.string(), "--out", out});
  REQUIRE(sum.code == cli::kExitOk);
  CHECK(sum.out.find("env SR") != std::string::npos);
  CHECK(sum.out.find("ordering by env SR") != std::string::npos);
  CHECK(std::filesystem::exists(run_dir_of(sum.out) / "summary.txt"));
}
