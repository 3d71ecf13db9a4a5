#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "drumrl/env.hpp"
#include "drumrl/policy.hpp"

namespace drumrl::rl {

// N environments stepped in lock-step. Finished episodes are reset
// automatically; the returned StepResult still carries the terminal state.
class VectorEnv {
 public:
  // n_threads <= 1 steps workers sequentially on the calling thread.
  explicit VectorEnv(std::vector<env::ReactorEnv> envs, int n_threads = 1);

  void reset_all();
  std::vector<env::StepResult> step(std::span<const Action> actions);

  int size() const { return static_cast<int>(envs_.size()); }
  const std::vector<env::Observation>& observations() const { return observations_; }
  env::ReactorEnv& at(int i) { return envs_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<env::ReactorEnv> envs_;
  std::vector<env::Observation> observations_;
  int n_threads_ = 1;
};

// Column / element index = step * n_workers + worker.
struct RolloutBuffer {
  int n_steps = 0;
  int n_workers = 0;
  nn::Matrix observations;
  std::vector<Action> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;  // 1 if the step ended its episode
  std::vector<double> last_values;  // V(s) after the final step, per worker
  std::vector<double> advantages;
  std::vector<double> returns;

  RolloutBuffer() = default;
  RolloutBuffer(int n_steps, int n_workers, int observation_size);

  std::size_t size() const { return static_cast<std::size_t>(n_steps) * n_workers; }
  std::size_t index(int step, int worker) const {
    return static_cast<std::size_t>(step) * n_workers + worker;
  }
  bool has_advantages() const { return advantages.size() == size(); }
};

// Called after every synchronous step with the per-worker results.
using StepCallback = std::function<void(std::span<const env::StepResult>)>;

RolloutBuffer collect_rollouts(VectorEnv& envs, const ActorCritic& model, int n_steps,
                               std::mt19937_64& rng, const StepCallback& on_step = {});

enum class AdvantageMode {
  kNStep,  // G_t = r_t + gamma G_{t+1}, bootstrapped at the buffer end; A = G - V
  kGae,    // generalised advantage estimation; returns = A + V
};

// Terminal steps carry zero continuation value.
void compute_returns_and_advantages(RolloutBuffer& buffer, double gamma,
                                    double gae_lambda, AdvantageMode mode);

// Mean and variance merged batch by batch (parallel Welford). Starts from
// mean 0, variance 1 with a pseudo-count of 1e-4.
class RunningMeanStd {
 public:
  void update(std::span<const double> batch);
  double mean() const { return mean_; }
  double variance() const { return var_; }
  double count() const { return count_; }

 private:
  double mean_ = 0.0;
  double var_ = 1.0;
  double count_ = 1e-4;
};

// Divides rewards by the running standard deviation of each worker's
// discounted return and clips them to [-clip, clip]. State carries over
// between buffers; the return accumulator restarts at episode ends.
class RewardNormalizer {
 public:
  RewardNormalizer() = default;
  RewardNormalizer(int n_workers, double gamma, double clip = 10.0, double epsilon = 1e-8);

  // Rewrites buffer.rewards in collection order.
  void normalize(RolloutBuffer& buffer);
  const RunningMeanStd& return_stats() const { return stats_; }

 private:
  std::vector<double> returns_;
  double gamma_ = 0.99;
  double clip_ = 10.0;
  double epsilon_ = 1e-8;
  RunningMeanStd stats_;
};

}  // namespace drumrl::rl
