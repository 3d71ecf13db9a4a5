#pragma once

// End-to-end stages behind the drumctl commands. Every stage reads a
// RunConfig and works inside `out_dir`:
//
//   oracle_params.json  manifest.json
//   data/dataset_yr{0,2,4}.csv
//   models/surrogate_yr{0,2,4}.{bin,json}  surrogate_metrics.csv  surrogate_search.csv
//   rl/<algo>/training_log.csv  rl/<algo>/<algo>_final.{bin,json}  rl/<algo>/checkpoints/
//   eval/<algo>_<backing>.csv
//   report/<algo>_{keff,hptr,reward}.csv  report/summary.txt

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drumrl/dataset.hpp"
#include "drumrl/oracle.hpp"
#include "drumrl/rl.hpp"
#include "drumrl/surrogate.hpp"

namespace drumrl::pipeline {

struct SurrogateBudget {
  int trials = 30;
  int trial_max_epochs = 25;
  int trial_patience = 10;
  int max_epochs = 2000;
  int patience = 50;
  int batch_size = 64;
  double min_k_r2 = 0.95;

  nlohmann::json to_json() const;
  static SurrogateBudget from_json(const nlohmann::json& j);
  bool operator==(const SurrogateBudget&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 42;
  // Explicit parameters win over calibration.
  std::optional<OracleParams> oracle;
  std::array<double, kNumBurnupSteps> critical_angles = kDefaultCriticalAngles;
  double total_drum_worth = 0.05;
  double interaction_strength = 0.002;
  std::size_t configs_per_step = 250;
  SurrogateBudget surrogate;
  rl::AlgoConfig ppo = rl::AlgoConfig::defaults(rl::Algorithm::kPPO);
  rl::AlgoConfig a2c = rl::AlgoConfig::defaults(rl::Algorithm::kA2C);
  std::filesystem::path out_dir = "run";
  int n_threads = 1;  // 1 is the bit-reproducible sequential mode

  OracleParams oracle_params() const;
  const rl::AlgoConfig& algo(rl::Algorithm a) const;
  rl::AlgoConfig& algo(rl::Algorithm a);

  // Canonical form: out_dir and n_threads are excluded since they do not
  // change any result.
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  std::string hash() const;  // 16 hex digits
  // "run_seed=<seed> config_hash=<hash>"
  std::string provenance() const;
};

struct Paths {
  std::filesystem::path root;
  std::filesystem::path oracle_params() const { return root / "oracle_params.json"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path dataset(BurnupStep step) const;
  std::filesystem::path models_dir() const { return root / "models"; }
  std::filesystem::path surrogate_metrics() const { return root / "surrogate_metrics.csv"; }
  std::filesystem::path surrogate_search() const { return root / "surrogate_search.csv"; }
  std::filesystem::path rl_dir(rl::Algorithm a) const;
  std::filesystem::path training_log(rl::Algorithm a) const;
  std::filesystem::path final_checkpoint(rl::Algorithm a) const;
  std::filesystem::path checkpoint_dir(rl::Algorithm a) const;
  std::filesystem::path eval_report(std::string_view algo, std::string_view backing) const;
  std::filesystem::path report_dir() const { return root / "report"; }
};

enum class Backing { kSurrogate, kOracle };
std::string_view backing_name(Backing b);
Backing backing_from_name(std::string_view name);

struct GenDataResult {
  std::array<DatasetSplit, kNumBurnupSteps> splits;  // augmented
  OracleParams params;
};
GenDataResult cmd_gen_data(const RunConfig& config);

struct SurrogateStepResult {
  BurnupStep step = BurnupStep::kYr0;
  surrogate::SurrogateConfig architecture;
  surrogate::SurrogateMetrics test_metrics;
  int epochs_run = 0;
  double seconds = 0.0;
};
struct TrainSurrogateResult {
  std::vector<SurrogateStepResult> steps;
  bool quality_gate_passed = true;
};
// Throws QualityGateError after writing all artifacts if any k R^2 is below
// the configured minimum.
TrainSurrogateResult cmd_train_surrogate(const RunConfig& config);

struct TrainRlOptions {
  Backing backing = Backing::kSurrogate;
  std::function<void(const rl::EpochStats&)> on_epoch;
};
rl::TrainResult cmd_train_rl(const RunConfig& config, rl::Algorithm algo,
                             const TrainRlOptions& options = {});

struct EvalOptions {
  std::filesystem::path checkpoint;  // stem; empty: final checkpoint of `algo`
  Backing backing = Backing::kSurrogate;
  rl::Algorithm algo = rl::Algorithm::kPPO;
};
rl::EvalReport cmd_eval(const RunConfig& config, const EvalOptions& options);

struct ReportResult {
  std::vector<std::filesystem::path> files;
  std::string summary;
};
ReportResult cmd_report(const std::filesystem::path& run_dir);

}  // namespace drumrl::pipeline
