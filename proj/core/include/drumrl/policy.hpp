#pragma once

// Actor-critic with one categorical head per hexant.
//
// The actor is an Mlp whose final linear layer is the concatenation of the six
// policy heads (`choices` logits each):
//   rows [h * choices, (h + 1) * choices)  logits of head h
// By default the critic is a second Mlp of the same hidden shape with one
// output. With a shared trunk there is no critic network and the actor's
// final layer carries one extra row, heads * choices, for the state value.
//
// Parameters and gradients are handled as one LayerList: actor layers
// followed by critic layers.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "drumrl/env.hpp"
#include "drumrl/nn.hpp"

namespace drumrl::rl {

using env::Action;

inline constexpr int kDefaultChoices = kMaxAngle + 1;  // angles 0..180

struct ActorCriticShape {
  int observation_size = env::kObservationSize;
  std::vector<int> hidden{64, 64};
  int choices = kDefaultChoices;
  bool shared_trunk = false;
};

struct PolicyOutput {
  // choices x (batch * heads); column `sample * heads + head` holds the
  // log-softmax of that head.
  nn::Matrix log_probs;
  Eigen::RowVectorXd values;  // 1 x batch
  int choices = kDefaultChoices;

  Eigen::Index batch() const { return values.size(); }
  double head_log_prob(Eigen::Index sample, int head, int choice) const {
    return log_probs(choice, sample * kNumHexants + head);
  }
};

class ActorCritic {
 public:
  ActorCritic() = default;
  // Shared trunk: `actor` has 6 * choices + 1 outputs and `critic` is empty.
  ActorCritic(nn::Mlp actor, nn::Mlp critic, int choices);

  // tanh networks with Xavier init; policy-head rows are scaled by 0.01 so
  // the initial policy is close to uniform.
  static ActorCritic init(const ActorCriticShape& shape, std::uint64_t seed);

  PolicyOutput forward(const nn::Matrix& observations) const;

  const nn::Mlp& actor() const { return actor_; }
  nn::Mlp& actor() { return actor_; }
  const nn::Mlp& critic() const { return critic_; }
  nn::Mlp& critic() { return critic_; }
  bool shared_trunk() const { return critic_.layers().empty(); }
  int choices() const { return choices_; }
  int heads() const { return kNumHexants; }
  int observation_size() const { return actor_.input_size(); }

  nn::LayerList parameters() const;
  void set_parameters(const nn::LayerList& params);
  std::size_t parameter_count() const;

  bool operator==(const ActorCritic&) const = default;

 private:
  nn::Mlp actor_;
  nn::Mlp critic_;
  int choices_ = kDefaultChoices;
};

nn::Matrix observation_matrix(std::span<const env::Observation> observations);

// Softmax per head over the raw network outputs.
PolicyOutput policy_distribution(const ActorCritic& model,
                                 const nn::Matrix& observations);

double joint_log_prob(const PolicyOutput& out, Eigen::Index col, const Action& a);
double head_entropy(const PolicyOutput& out, Eigen::Index col, int head);
double entropy(const PolicyOutput& out, Eigen::Index col);  // summed over heads

Action sample_action(const PolicyOutput& out, Eigen::Index col, std::mt19937_64& rng);
// Per-head argmax; ties go to the lowest index.
Action greedy_action(const PolicyOutput& out, Eigen::Index col);

enum class PolicyObjective {
  kVanilla,  // mean(log pi(a|s) * A)
  kClipped,  // mean(min(rho A, clip(rho, 1 - eps, 1 + eps) A))
};

struct LossCoefficients {
  double value_coef = 0.5;    // c1
  double entropy_coef = 0.0;  // c2
  double clip_eps = 0.2;
  PolicyObjective objective = PolicyObjective::kVanilla;
};

struct LossBatch {
  nn::Matrix observations;          // obs x N
  std::vector<Action> actions;
  std::vector<double> old_log_probs;  // used by kClipped only
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct LossTerms {
  double loss = 0.0;              // -policy + c1 value - c2 entropy (minimised)
  double policy_objective = 0.0;  // L^policy
  double value_loss = 0.0;        // mean (V - G)^2
  double entropy = 0.0;           // mean summed head entropy
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// min(rho A, clip(rho, 1 - eps, 1 + eps) A)
double clipped_surrogate(double ratio, double advantage, double clip_eps);

// Evaluates the combined objective on a batch. If `grads` is non-null it
// receives the exact gradient of `loss` in the parameters() layout.
LossTerms actor_critic_loss(const ActorCritic& model, const LossBatch& batch,
                            const LossCoefficients& coef,
                            nn::LayerList* grads = nullptr);

}  // namespace drumrl::rl
