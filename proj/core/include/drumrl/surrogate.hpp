#pragma once

// Per-burnup-step MLP surrogates: 6 drum angles -> (k_eff, P1..P6).

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drumrl/dataset.hpp"
#include "drumrl/nn.hpp"
#include "drumrl/oracle.hpp"

namespace drumrl {

// Anything that can answer "what does the core do at these angles".
class CoreModel {
 public:
  virtual ~CoreModel() = default;
  virtual CoreResponse respond(const DrumConfig& config, BurnupStep step) const = 0;
};

class OracleModel final : public CoreModel {
 public:
  explicit OracleModel(OracleParams params) : params_(std::move(params)) {}
  CoreResponse respond(const DrumConfig& config, BurnupStep step) const override {
    return evaluate(config, step, params_);
  }
  const OracleParams& params() const { return params_; }

 private:
  OracleParams params_;
};

namespace surrogate {

inline constexpr int kInputs = kNumHexants;
inline constexpr int kOutputs = 1 + kNumHexants;
inline constexpr int kFormatVersion = 1;

struct SurrogateConfig {
  int hidden_layers = 5;
  int nodes_per_layer = 150;
  double learning_rate = 3e-3;
  int max_epochs = 2000;
  int batch_size = 64;
  int patience = 50;

  void validate() const;
  std::vector<int> layer_sizes() const;
  nlohmann::json to_json() const;
  static SurrogateConfig from_json(const nlohmann::json& j);
  bool operator==(const SurrogateConfig&) const = default;
};

struct SurrogateMetrics {
  double k_mae_pcm = 0.0;
  double k_r2 = 0.0;
  double p_mae = 0.0;  // averaged over the six hexants
  double p_r2 = 0.0;   // averaged over the six hexants
};

// Network target for output i is (y_i - offset_i) * scale_i; inputs are
// theta / 90 - 1.
struct OutputScaling {
  std::array<double, kOutputs> offset{1.0,       1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0,
                                      1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
  std::array<double, kOutputs> scale{100.0, 100.0, 100.0, 100.0,
                                     100.0, 100.0, 100.0};
  double input_center = 90.0;
  bool operator==(const OutputScaling&) const = default;
};

nn::Matrix scale_inputs(std::span<const Sample> samples, const OutputScaling& s);
nn::Matrix scale_inputs(std::span<const DrumConfig> configs, const OutputScaling& s);
nn::Matrix scale_targets(std::span<const Sample> samples, const OutputScaling& s);

class Surrogate final : public CoreModel {
 public:
  Surrogate() = default;
  Surrogate(nn::Mlp network, BurnupStep step, OutputScaling scaling = {},
            nlohmann::json provenance = nlohmann::json::object());

  // Powers clamped to >= 1e-9 and renormalised; k_eff passed through.
  CoreResponse predict(const DrumConfig& config) const;
  std::vector<CoreResponse> predict(std::span<const DrumConfig> configs) const;

  // Ignores `step` other than to check it matches the trained step.
  CoreResponse respond(const DrumConfig& config, BurnupStep step) const override;

  BurnupStep step() const { return step_; }
  const nn::Mlp& network() const { return network_; }
  const OutputScaling& scaling() const { return scaling_; }
  const nlohmann::json& provenance() const { return provenance_; }
  nlohmann::json& provenance() { return provenance_; }

 private:
  CoreResponse postprocess(const nn::Matrix& raw, Eigen::Index col) const;

  nn::Mlp network_;
  BurnupStep step_ = BurnupStep::kYr0;
  OutputScaling scaling_;
  nlohmann::json provenance_ = nlohmann::json::object();
};

struct TrainResult {
  Surrogate model;
  SurrogateMetrics validation_metrics;
  double validation_mse = 0.0;  // in scaled target units
  double initial_train_mse = 0.0;
  double final_train_mse = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
};

// Minimises MSE over the 7 scaled outputs with Adam, keeping the checkpoint
// with the lowest validation MSE and stopping after `patience` epochs without
// improvement. Deterministic per seed.
TrainResult train(const DatasetSplit& split, const SurrogateConfig& config,
                  std::uint64_t seed);

struct SearchSpace {
  int min_layers = 2;
  int max_layers = 8;
  int min_nodes = 50;
  int max_nodes = 256;
  double min_learning_rate = 1e-4;
  double max_learning_rate = 1e-2;

  bool contains(const SurrogateConfig& c) const;
};

struct SearchOptions {
  SearchSpace space;
  // Training schedule used for each trial (the returned config carries the
  // full schedule from `final_schedule`).
  int trial_max_epochs = 2000;
  int trial_patience = 50;
  SurrogateConfig final_schedule;
  int n_threads = 1;
};

struct SearchTrial {
  SurrogateConfig config;
  double validation_mse = 0.0;
  int epochs_run = 0;
};

struct SearchResult {
  SurrogateConfig best;
  std::size_t best_index = 0;
  std::vector<SearchTrial> trials;
};

// Seeded random search: layers and nodes uniform integers, learning rate
// log-uniform. Picks the trial with the lowest validation MSE.
SearchResult search(const DatasetSplit& split, int n_trials, std::uint64_t seed,
                    const SearchOptions& options = {});

SurrogateMetrics evaluate(const Surrogate& model, std::span<const Sample> samples);

// Coefficient of determination; 1 when the target is constant and matched
// exactly, 0 when the target is constant and missed.
double r_squared(std::span<const double> truth, std::span<const double> pred);

std::string file_stem(BurnupStep step);  // "surrogate_yr0"

// Writes <dir>/<file_stem>.bin and <dir>/<file_stem>.json.
void save_model(const Surrogate& model, const std::filesystem::path& dir);
Surrogate load_model(const std::filesystem::path& dir, BurnupStep step);

}  // namespace surrogate

// The three per-step surrogates as one CoreModel.
class SurrogateSet final : public CoreModel {
 public:
  explicit SurrogateSet(std::array<surrogate::Surrogate, kNumBurnupSteps> models);
  static SurrogateSet load(const std::filesystem::path& dir);

  CoreResponse respond(const DrumConfig& config, BurnupStep step) const override;
  const surrogate::Surrogate& at(BurnupStep step) const {
    return models_[index_of(step)];
  }

 private:
  std::array<surrogate::Surrogate, kNumBurnupSteps> models_;
};

}  // namespace drumrl
