#pragma once

// A2C and PPO over the synchronous vector environment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drumrl/env.hpp"
#include "drumrl/nn.hpp"
#include "drumrl/policy.hpp"
#include "drumrl/rollout.hpp"

namespace drumrl::rl {

enum class Algorithm { kA2C, kPPO };

std::string_view algorithm_name(Algorithm a);  // "a2c" / "ppo"
Algorithm algorithm_from_name(std::string_view name);

struct AlgoConfig {
  Algorithm algorithm = Algorithm::kPPO;
  double value_coef = 0.75;     // c1
  double entropy_coef = 0.01;   // c2
  int n_steps = 300;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  double max_grad_norm = 5.0;
  double clip_eps = 0.4;
  int ppo_epochs = 10;
  int minibatch_size = 600;
  int n_workers = 20;
  long total_timesteps = 1'200'000;
  long epoch_timesteps = 30'000;
  std::vector<int> hidden{64, 64};
  bool shared_trunk = false;
  // Scale rewards by the running std of the discounted return (clip 10)
  // before computing advantages. Logged statistics stay raw.
  bool normalize_reward = true;

  // A2C: c1 0.5, c2 0.02, 200 steps, lr 7e-4, grad norm 5.
  // PPO: c1 0.75, c2 0.01, 300 steps, eps 0.4, lr 3e-4, grad norm 0.5.
  static AlgoConfig defaults(Algorithm algo);

  void validate() const;
  long rollout_size() const { return static_cast<long>(n_steps) * n_workers; }
  nlohmann::json to_json() const;
  // Missing keys fall back to defaults(algorithm).
  static AlgoConfig from_json(const nlohmann::json& j);
  bool operator==(const AlgoConfig&) const = default;
};

struct UpdateStats {
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;          // largest pre-clip norm seen
  double applied_grad_norm = 0.0;  // largest post-clip norm seen
  int gradient_steps = 0;
};

// One Adam per network; steps take gradients in ActorCritic::parameters()
// layout.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const ActorCritic& model, nn::AdamOptions options);

  void step(ActorCritic& model, const nn::LayerList& grads);
  long step_count() const { return actor_.step_count(); }

 private:
  nn::Adam actor_;
  nn::Adam critic_;
};

// One full-batch gradient step on the combined objective with raw n-step
// advantages.
UpdateStats a2c_update(ActorCritic& model, Optimizer& optimizer,
                       const RolloutBuffer& buffer, const AlgoConfig& config);

// ppo_epochs passes over shuffled minibatches; advantages normalised per
// minibatch.
UpdateStats ppo_update(ActorCritic& model, Optimizer& optimizer,
                       const RolloutBuffer& buffer, const AlgoConfig& config,
                       std::mt19937_64& rng);

// One row per epoch of `epoch_timesteps` aggregated steps.
struct EpochStats {
  int epoch = 0;
  long timesteps = 0;
  double reward_mean = 0.0;  // episode reward = mean base reward of its 3 steps
  double reward_std = 0.0;
  double reward_max = 0.0;
  double reward_min = 0.0;
  double keff_dev_mean = 0.0;  // mean |k - 1| over all steps
  double hptr_mean = 0.0;
  long episodes = 0;
};

using EnvFactory = std::function<env::ReactorEnv(int worker, std::uint64_t seed)>;

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int n_threads = 1;
  nlohmann::json checkpoint_metadata = nlohmann::json::object();
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  ActorCritic model;
  std::vector<EpochStats> log;
  std::vector<UpdateStats> updates;
  long timesteps = 0;
};

TrainResult train(const AlgoConfig& config, const EnvFactory& make_env,
                  std::uint64_t seed, const TrainOptions& options = {});

struct EvalRow {
  BurnupStep step = BurnupStep::kYr0;
  Action angles;
  double k_eff = 0.0;
  double hptr = 0.0;
  double reward = 0.0;
  // Oracle evaluated at the same angles, when a cross-check was requested.
  std::optional<double> oracle_k_eff;
  std::optional<double> oracle_hptr;
};

struct EvalReport {
  std::string algo;
  std::vector<EvalRow> rows;
};

// One greedy episode against `backing`.
EvalReport evaluate_policy(const ActorCritic& model,
                           std::shared_ptr<const CoreModel> backing,
                           const OracleParams* cross_check, std::uint64_t seed,
                           std::string algo = "");

struct LatencyReport {
  double single_seconds = 0.0;         // mean per greedy action, batch of 1
  double batched_per_action_seconds = 0.0;  // batch of 100, per action
  int calls = 0;
};

LatencyReport inference_latency(const ActorCritic& model, int n = 1000,
                                BurnupStep step = BurnupStep::kYr0);

// <stem>.bin (nn model format) + <stem>.json (algo config, head layout).
inline constexpr int kCheckpointVersion = 2;
void save_checkpoint(const std::filesystem::path& stem, const ActorCritic& model,
                     const AlgoConfig& config,
                     const nlohmann::json& extra = nlohmann::json::object());
struct Checkpoint {
  ActorCritic model;
  AlgoConfig config;
  nlohmann::json metadata;
};
Checkpoint load_checkpoint(const std::filesystem::path& stem);

// CSV writers. `comment` lines are prefixed with "# ".
inline constexpr std::string_view kTrainingLogHeader =
    "epoch,timesteps,reward_mean,reward_std,reward_max,reward_min,keff_dev_mean,"
    "hptr_mean";
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& rows,
                        std::string_view comment = {});
std::vector<EpochStats> read_training_log(const std::filesystem::path& path);

inline constexpr std::string_view kEvalHeader =
    "algo,year,theta1,theta2,theta3,theta4,theta5,theta6,keff,hptr";
void write_eval_report(const std::filesystem::path& path, const EvalReport& report,
                       std::string_view comment = {});

}  // namespace drumrl::rl
