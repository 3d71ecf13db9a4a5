#include <doctest.h>

#include <array>
#include <cstdio>
#include <string>
#include <sys/wait.h>

#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run drumctl(const std::string& args) {
  const std::string cmd = std::string(DRUMCTL_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  Run r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const char* kTinyConfig = R"({
  "seed": 3,
  "surrogate": {"trials": 2, "trial_max_epochs": 1, "max_epochs": 2, "min_k_r2": -1e9},
  "rl": {
    "ppo": {"n_workers": 2, "n_steps": 6, "minibatch_size": 6, "ppo_epochs": 1,
            "hidden": [8], "epoch_timesteps": 24, "total_timesteps": 48},
    "a2c": {"n_workers": 2, "n_steps": 6, "hidden": [8], "epoch_timesteps": 24,
            "total_timesteps": 48}
  }
})";

bool one_error_line(const std::string& out, const std::string& kind) {
  const std::string prefix = "error: kind=" + kind + " message=\"";
  return out.rfind(prefix, 0) == 0 && out.find('\n') == out.size() - 1 &&
         out[out.size() - 2] == '"';
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = drumctl("");
  CHECK(r.code == 2);
  CHECK(one_error_line(r.output, "usage"));
  r = drumctl("frobnicate");
  CHECK(r.code == 2);
  r = drumctl("train-rl --algo dqn");
  CHECK(r.code == 2);
  CHECK(one_error_line(r.output, "usage"));
  r = drumctl("eval --backing mock");
  CHECK(r.code == 2);
  CHECK(drumctl("--help").code == 0);
}

TEST_CASE("runtime errors print one line and exit 1") {
  const auto dir = test::temp_dir("cli_errors");
  auto r = drumctl("report --out " + (dir / "empty").string());
  CHECK(r.code == 1);
  CHECK(one_error_line(r.output, "io"));

  test::write_file(dir / "bad.json", R"({"seed": 1, "colour": "blue"})");
  r = drumctl("gen-data --config " + (dir / "bad.json").string() + " --out " +
              (dir / "run").string());
  CHECK(r.code == 1);
  CHECK(one_error_line(r.output, "parse"));
  CHECK(r.output.find("colour") != std::string::npos);

  r = drumctl("train-surrogate --out " + (dir / "run").string());
  CHECK(r.code == 1);
  CHECK(one_error_line(r.output, "io"));
}

TEST_CASE("full pipeline through the command line") {
  const auto dir = test::temp_dir("cli_run");
  test::write_file(dir / "config.json", kTinyConfig);
  const std::string common =
      " --config " + (dir / "config.json").string() + " --out " + (dir / "run").string();

  auto r = drumctl("gen-data" + common);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("yr0: train") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "data" / "dataset_yr4.csv"));

  r = drumctl("gen-data" + common + " --seed 4");
  CHECK(r.code == 1);
  CHECK(one_error_line(r.output, "domain"));

  r = drumctl("train-surrogate" + common);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("k MAE") != std::string::npos);

  r = drumctl("train-rl" + common + " --algo a2c --sequential");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("epoch 2 ") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "rl" / "a2c" / "training_log.csv"));

  r = drumctl("train-rl" + common + " --algo ppo --backing oracle --threads 2");
  REQUIRE(r.code == 0);

  r = drumctl("eval" + common + " --algo ppo --backing oracle");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("year 4:") != std::string::npos);
  CHECK(r.output.find("oracle keff") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "eval" / "ppo_oracle.csv"));

  r = drumctl("eval" + common + " --checkpoint " +
              (dir / "run" / "rl" / "a2c" / "checkpoints" / "a2c_epoch_001").string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "run" / "eval" / "a2c_surrogate.csv"));

  r = drumctl("report --out " + (dir / "run").string());
  REQUIRE(r.code == 0);
  CHECK(r.output.find("[ppo]") != std::string::npos);
  CHECK(r.output.find("[a2c]") != std::string::npos);
  const auto first = test::read_file(dir / "run" / "report" / "summary.txt");
  CHECK(drumctl("report --out " + (dir / "run").string()).code == 0);
  CHECK(test::read_file(dir / "run" / "report" / "summary.txt") == first);
}

TEST_CASE("quality gate exits 3") {
  const auto dir = test::temp_dir("cli_gate");
  test::write_file(dir / "config.json",
                   R"({"surrogate": {"trials": 1, "trial_max_epochs": 1, "max_epochs": 1,
                       "min_k_r2": 2.0}})");
  const std::string common =
      " --config " + (dir / "config.json").string() + " --out " + (dir / "run").string();
  REQUIRE(drumctl("gen-data" + common).code == 0);
  const auto r = drumctl("train-surrogate" + common);
  CHECK(r.code == 3);
  CHECK(r.output.find("error: kind=quality_gate") != std::string::npos);
}
