#include "drumrl/env.hpp"

#include <algorithm>
#include <cmath>

#include "drumrl/error.hpp"

namespace drumrl::env {
namespace {

void check_arity(std::span<const double> powers) {
  if (powers.size() != kNumHexants) {
    throw DomainError("expected 6 hexant powers, got " + std::to_string(powers.size()));
  }
}

}  // namespace

double f1(std::span<const double> powers) {
  check_arity(powers);
  double s = 0.0;
  for (double p : powers) s += std::abs(p - kNominalPower);
  return s / kNumHexants;
}

double f2(double k_eff) { return std::abs(k_eff - 1.0); }

double f3(std::span<const double> powers) {
  check_arity(powers);
  double mean = 0.0;
  for (double p : powers) mean += p;
  mean /= kNumHexants;
  double ss = 0.0;
  for (double p : powers) ss += (p - mean) * (p - mean);
  return std::sqrt(ss / kNumHexants);
}

double base_reward(double k_eff, std::span<const double> powers) {
  const double total = f1(powers) + f2(k_eff) + f3(powers);
  return 1.0 / std::max(total, kRewardGuard);
}

double sequential_reward(std::span<const double> base_rewards) {
  if (base_rewards.empty()) throw DomainError("sequential_reward: empty history");
  if (base_rewards.size() > static_cast<std::size_t>(kEpisodeLength)) {
    throw DomainError("sequential_reward: history longer than an episode");
  }
  if (base_rewards.size() == 1) return base_rewards[0];
  const double n = static_cast<double>(base_rewards.size());
  double mean = 0.0;
  for (double r : base_rewards) mean += r;
  mean /= n;
  double ss = 0.0;
  for (double r : base_rewards) ss += (r - mean) * (r - mean);
  return mean - std::sqrt(ss / n);
}

double hptr(std::span<const double> powers) {
  check_arity(powers);
  double total = 0.0;
  for (double p : powers) total += p;
  return kNumHexants * *std::max_element(powers.begin(), powers.end()) / total;
}

std::array<double, kObservationSize> Observation::features() const {
  std::array<double, kObservationSize> f{};
  f[index_of(step)] = 1.0;
  f[kNumBurnupSteps] = (k_eff - 1.0) * 20.0;
  for (int i = 0; i < kNumHexants; ++i) {
    f[kNumBurnupSteps + 1 + i] = kNumHexants * powers[i] - 1.0;
  }
  return f;
}

ReactorEnv::ReactorEnv(std::shared_ptr<const CoreModel> model, std::uint64_t seed)
    : model_(std::move(model)), seeder_(seed) {
  if (!model_) throw DomainError("ReactorEnv needs a backing model");
}

Observation ReactorEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> k_dist(0.95, 1.05);
  std::uniform_real_distribution<double> p_dist(0.0, 1.0);
  Observation obs;
  obs.step = BurnupStep::kYr0;
  obs.k_eff = k_dist(rng);
  double total = 0.0;
  for (double& p : obs.powers) {
    p = p_dist(rng);
    total += p;
  }
  for (double& p : obs.powers) p /= total;
  observation_ = obs;
  history_.clear();
  done_ = false;
  return observation_;
}

Observation ReactorEnv::reset() { return reset(seeder_()); }

StepResult ReactorEnv::step(const Action& action) {
  if (done_) throw UsageError("ReactorEnv::step called on a finished episode; call reset()");
  action.validate();
  StepResult r;
  r.evaluated_step = observation_.step;
  r.response = model_->respond(action, observation_.step);
  r.base_reward = base_reward(r.response.k_eff, r.response.powers);
  history_.push_back(r.base_reward);
  r.reward = sequential_reward(history_);
  r.done = history_.size() == static_cast<std::size_t>(kEpisodeLength);

  Observation next;
  next.step = r.done ? observation_.step : burnup_from_index(index_of(observation_.step) + 1);
  next.k_eff = r.response.k_eff;
  next.powers = r.response.powers;
  observation_ = next;
  done_ = r.done;
  r.observation = next;
  return r;
}

}  // namespace drumrl::env
