#include "drumrl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "drumrl/error.hpp"

namespace drumrl::rl {

VectorEnv::VectorEnv(std::vector<env::ReactorEnv> envs, int n_threads)
    : envs_(std::move(envs)), n_threads_(std::max(1, n_threads)) {
  if (envs_.empty()) throw DomainError("VectorEnv needs at least one environment");
  observations_.resize(envs_.size());
  reset_all();
}

void VectorEnv::reset_all() {
  for (std::size_t i = 0; i < envs_.size(); ++i) observations_[i] = envs_[i].reset();
}

std::vector<env::StepResult> VectorEnv::step(std::span<const Action> actions) {
  if (actions.size() != envs_.size()) {
    throw DomainError("VectorEnv::step: one action per worker required");
  }
  std::vector<env::StepResult> results(envs_.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      results[i] = envs_[i].step(actions[i]);
      observations_[i] = results[i].done ? envs_[i].reset() : results[i].observation;
    }
  };
  const std::size_t n = envs_.size();
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(n_threads_), n);
  if (threads <= 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(work, b, std::min(n, b + chunk));
  }
  return results;
}

RolloutBuffer::RolloutBuffer(int steps, int workers, int observation_size)
    : n_steps(steps), n_workers(workers) {
  if (steps < 1 || workers < 1) throw DomainError("rollout buffer needs steps, workers >= 1");
  const std::size_t n = size();
  observations.resize(observation_size, static_cast<Eigen::Index>(n));
  actions.resize(n);
  log_probs.resize(n);
  rewards.resize(n);
  values.resize(n);
  dones.resize(n);
  last_values.resize(static_cast<std::size_t>(workers));
}

RolloutBuffer collect_rollouts(VectorEnv& envs, const ActorCritic& model, int n_steps,
                               std::mt19937_64& rng, const StepCallback& on_step) {
  const int workers = envs.size();
  RolloutBuffer buf(n_steps, workers, model.observation_size());
  std::vector<Action> actions(static_cast<std::size_t>(workers));
  for (int t = 0; t < n_steps; ++t) {
    const nn::Matrix obs = observation_matrix(envs.observations());
    const PolicyOutput out = model.forward(obs);
    for (int w = 0; w < workers; ++w) {
      const std::size_t i = buf.index(t, w);
      actions[w] = sample_action(out, w, rng);
      buf.observations.col(static_cast<Eigen::Index>(i)) = obs.col(w);
      buf.actions[i] = actions[w];
      buf.log_probs[i] = joint_log_prob(out, w, actions[w]);
      buf.values[i] = out.values(w);
    }
    const auto results = envs.step(actions);
    for (int w = 0; w < workers; ++w) {
      const std::size_t i = buf.index(t, w);
      buf.rewards[i] = results[w].reward;
      buf.dones[i] = results[w].done ? 1 : 0;
    }
    if (on_step) on_step(results);
  }
  const PolicyOutput tail = model.forward(observation_matrix(envs.observations()));
  for (int w = 0; w < workers; ++w) buf.last_values[w] = tail.values(w);
  return buf;
}

void compute_returns_and_advantages(RolloutBuffer& buffer, double gamma,
                                    double gae_lambda, AdvantageMode mode) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must be in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw DomainError("gae_lambda must be in [0, 1]");
  }
  buffer.advantages.assign(buffer.size(), 0.0);
  buffer.returns.assign(buffer.size(), 0.0);
  for (int w = 0; w < buffer.n_workers; ++w) {
    double next_value = buffer.last_values[w];
    double next_return = buffer.last_values[w];
    double next_adv = 0.0;
    for (int t = buffer.n_steps - 1; t >= 0; --t) {
      const std::size_t i = buffer.index(t, w);
      const double live = buffer.dones[i] ? 0.0 : 1.0;
      if (mode == AdvantageMode::kNStep) {
        const double g = buffer.rewards[i] + gamma * live * next_return;
        buffer.returns[i] = g;
        buffer.advantages[i] = g - buffer.values[i];
        next_return = g;
      } else {
        const double delta = buffer.rewards[i] + gamma * live * next_value - buffer.values[i];
        const double adv = delta + gamma * gae_lambda * live * next_adv;
        buffer.advantages[i] = adv;
        buffer.returns[i] = adv + buffer.values[i];
        next_adv = adv;
        next_value = buffer.values[i];
      }
    }
  }
}

void RunningMeanStd::update(std::span<const double> batch) {
  if (batch.empty()) return;
  const double n = static_cast<double>(batch.size());
  double mean = 0.0;
  for (double x : batch) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : batch) var += (x - mean) * (x - mean);
  var /= n;
  const double total = count_ + n;
  const double delta = mean - mean_;
  const double m2 = var_ * count_ + var * n + delta * delta * count_ * n / total;
  mean_ += delta * n / total;
  var_ = m2 / total;
  count_ = total;
}

RewardNormalizer::RewardNormalizer(int n_workers, double gamma, double clip, double epsilon)
    : returns_(static_cast<std::size_t>(n_workers), 0.0),
      gamma_(gamma),
      clip_(clip),
      epsilon_(epsilon) {
  if (n_workers < 1) throw DomainError("RewardNormalizer needs >= 1 worker");
  if (!(clip > 0.0) || !(epsilon > 0.0)) {
    throw DomainError("reward clip and epsilon must be > 0");
  }
}

void RewardNormalizer::normalize(RolloutBuffer& buffer) {
  if (buffer.n_workers != static_cast<int>(returns_.size())) {
    throw DomainError("RewardNormalizer: worker count mismatch");
  }
  const auto workers = returns_.size();
  for (int t = 0; t < buffer.n_steps; ++t) {
    for (std::size_t w = 0; w < workers; ++w) {
      returns_[w] = returns_[w] * gamma_ + buffer.rewards[buffer.index(t, static_cast<int>(w))];
    }
    stats_.update(returns_);
    const double scale = 1.0 / std::sqrt(stats_.variance() + epsilon_);
    for (std::size_t w = 0; w < workers; ++w) {
      const auto i = buffer.index(t, static_cast<int>(w));
      buffer.rewards[i] = std::clamp(buffer.rewards[i] * scale, -clip_, clip_);
      if (buffer.dones[i]) returns_[w] = 0.0;
    }
  }
}

}  // namespace drumrl::rl
