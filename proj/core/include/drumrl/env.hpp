#pragma once

// Three-step drum-angle control episode: one action per burnup state.

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "drumrl/oracle.hpp"
#include "drumrl/surrogate.hpp"

namespace drumrl::env {

inline constexpr int kObservationSize = kNumBurnupSteps + 1 + kNumHexants;
inline constexpr int kEpisodeLength = kNumBurnupSteps;
inline constexpr double kRewardGuard = 1e-6;
inline constexpr double kNominalPower = 0.166667;

using Action = DrumConfig;

// Mean absolute deviation from the nominal 1/6 share (literal 0.166667).
double f1(std::span<const double> powers);
// |k - 1|
double f2(double k_eff);
// Population standard deviation of the powers.
double f3(std::span<const double> powers);
// 1 / max(f1 + f2 + f3, 1e-6)
double base_reward(double k_eff, std::span<const double> powers);
// r_1 = r0_1; r_t = mean(r0_1..r0_t) - popstd(r0_1..r0_t)
double sequential_reward(std::span<const double> base_rewards);
// 6 max(P) / sum(P)
double hptr(std::span<const double> powers);

struct Observation {
  BurnupStep step = BurnupStep::kYr0;
  double k_eff = 1.0;
  HexantValues powers{};

  // Policy input: burnup one-hot, (k - 1) * 20, 6 P - 1.
  std::array<double, kObservationSize> features() const;
  bool operator==(const Observation&) const = default;
};

struct StepResult {
  Observation observation;  // next state
  double reward = 0.0;      // sequential reward r_t
  double base_reward = 0.0; // r0_t
  bool done = false;
  BurnupStep evaluated_step = BurnupStep::kYr0;
  CoreResponse response;    // backing model output for this action
};

class ReactorEnv {
 public:
  ReactorEnv(std::shared_ptr<const CoreModel> model, std::uint64_t seed);

  // Burnup YR0, k ~ U(0.95, 1.05), powers U(0,1)^6 normalised.
  Observation reset(std::uint64_t seed);
  // Draws the next episode seed from the environment's own stream.
  Observation reset();

  StepResult step(const Action& action);

  bool done() const { return done_; }
  // Number of actions taken in the current episode (0..3).
  int steps_taken() const { return static_cast<int>(history_.size()); }
  const std::vector<double>& history() const { return history_; }
  const Observation& observation() const { return observation_; }
  const CoreModel& model() const { return *model_; }

 private:
  std::shared_ptr<const CoreModel> model_;
  std::mt19937_64 seeder_;
  Observation observation_;
  std::vector<double> history_;
  bool done_ = true;
};

}  // namespace drumrl::env
