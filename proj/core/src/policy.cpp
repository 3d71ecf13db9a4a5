#include "drumrl/policy.hpp"

#include <algorithm>
#include <cmath>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl::rl {
namespace {

// `logits` holds 6 * choices policy rows, possibly followed by other rows.
PolicyOutput to_policy_output(const nn::Matrix& logits, Eigen::RowVectorXd values,
                              int choices) {
  const int heads = kNumHexants;
  const Eigen::Index rows = logits.rows();
  const Eigen::Index batch = logits.cols();
  PolicyOutput out;
  out.choices = choices;
  out.values = std::move(values);
  out.log_probs.resize(choices, batch * heads);
  for (Eigen::Index c = 0; c < batch; ++c) {
    out.log_probs.middleCols(c * heads, heads) =
        Eigen::Map<const nn::Matrix>(logits.data() + c * rows, choices, heads);
  }
  auto& lp = out.log_probs;
  const Eigen::RowVectorXd max = lp.colwise().maxCoeff();
  lp.rowwise() -= max;
  const Eigen::RowVectorXd lse = lp.array().exp().colwise().sum().log().matrix();
  lp.rowwise() -= lse;
  return out;
}

void check_action(const Action& a, int choices) {
  for (int v : a.angles) {
    if (v < 0 || v >= choices) throw DomainError("action index out of range for policy head");
  }
}

}  // namespace

ActorCritic::ActorCritic(nn::Mlp actor, nn::Mlp critic, int choices)
    : actor_(std::move(actor)), critic_(std::move(critic)), choices_(choices) {
  if (choices_ < 1) throw DomainError("policy heads need >= 1 choice");
  if (actor_.layers().empty()) throw DomainError("actor network has no layers");
  const int logits = kNumHexants * choices_;
  if (shared_trunk()) {
    if (actor_.output_size() != logits + 1) {
      throw DomainError("shared actor-critic output width must be 6 * choices + 1");
    }
    return;
  }
  if (actor_.output_size() != logits) {
    throw DomainError("actor output width must be 6 * choices");
  }
  if (critic_.output_size() != 1) throw DomainError("critic output width must be 1");
  if (critic_.input_size() != actor_.input_size()) {
    throw DomainError("actor and critic input sizes differ");
  }
}

ActorCritic ActorCritic::init(const ActorCriticShape& shape, std::uint64_t seed) {
  std::vector<int> sizes{shape.observation_size};
  sizes.insert(sizes.end(), shape.hidden.begin(), shape.hidden.end());
  const int logits = kNumHexants * shape.choices;
  sizes.push_back(shape.shared_trunk ? logits + 1 : logits);
  nn::Mlp actor = nn::Mlp::init(sizes, nn::Activation::kTanh, seed);
  actor.layers().back().weights.topRows(logits) *= 0.01;
  if (shape.shared_trunk) return ActorCritic(std::move(actor), nn::Mlp{}, shape.choices);
  sizes.back() = 1;
  nn::Mlp critic = nn::Mlp::init(sizes, nn::Activation::kTanh, derive_seed(seed, 1));
  return ActorCritic(std::move(actor), std::move(critic), shape.choices);
}

PolicyOutput ActorCritic::forward(const nn::Matrix& observations) const {
  nn::Matrix logits = actor_.forward(observations);
  if (shared_trunk()) {
    Eigen::RowVectorXd values = logits.row(kNumHexants * choices_);
    return to_policy_output(logits, std::move(values), choices_);
  }
  return to_policy_output(logits, critic_.forward(observations), choices_);
}

nn::LayerList ActorCritic::parameters() const {
  nn::LayerList p = actor_.layers();
  p.insert(p.end(), critic_.layers().begin(), critic_.layers().end());
  return p;
}

void ActorCritic::set_parameters(const nn::LayerList& params) {
  const std::size_t na = actor_.layers().size();
  if (params.size() != na + critic_.layers().size()) {
    throw DomainError("parameter list does not match the actor-critic layout");
  }
  auto assign = [](nn::LayerList& dst, const nn::Layer* src) {
    for (auto& l : dst) {
      if (l.weights.rows() != src->weights.rows() || l.weights.cols() != src->weights.cols() ||
          l.bias.size() != src->bias.size()) {
        throw DomainError("parameter shape mismatch");
      }
      l = *src++;
    }
  };
  assign(actor_.layers(), params.data());
  assign(critic_.layers(), params.data() + na);
}

std::size_t ActorCritic::parameter_count() const {
  return actor_.parameter_count() + critic_.parameter_count();
}

nn::Matrix observation_matrix(std::span<const env::Observation> observations) {
  nn::Matrix m(env::kObservationSize, static_cast<Eigen::Index>(observations.size()));
  for (std::size_t c = 0; c < observations.size(); ++c) {
    const auto f = observations[c].features();
    for (int r = 0; r < env::kObservationSize; ++r) m(r, static_cast<Eigen::Index>(c)) = f[r];
  }
  return m;
}

PolicyOutput policy_distribution(const ActorCritic& model, const nn::Matrix& observations) {
  return model.forward(observations);
}

double joint_log_prob(const PolicyOutput& out, Eigen::Index col, const Action& a) {
  check_action(a, out.choices);
  double lp = 0.0;
  for (int h = 0; h < kNumHexants; ++h) lp += out.head_log_prob(col, h, a.angles[h]);
  return lp;
}

double head_entropy(const PolicyOutput& out, Eigen::Index col, int head) {
  const auto lp = out.log_probs.col(col * kNumHexants + head).array();
  return -(lp.exp() * lp).sum();
}

double entropy(const PolicyOutput& out, Eigen::Index col) {
  double h = 0.0;
  for (int head = 0; head < kNumHexants; ++head) h += head_entropy(out, col, head);
  return h;
}

Action sample_action(const PolicyOutput& out, Eigen::Index col, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Action a;
  for (int h = 0; h < kNumHexants; ++h) {
    const double u = unit(rng);
    double cdf = 0.0;
    int choice = out.choices - 1;
    for (int j = 0; j < out.choices; ++j) {
      cdf += std::exp(out.head_log_prob(col, h, j));
      if (u < cdf) {
        choice = j;
        break;
      }
    }
    a.angles[h] = choice;
  }
  return a;
}

Action greedy_action(const PolicyOutput& out, Eigen::Index col) {
  Action a;
  for (int h = 0; h < kNumHexants; ++h) {
    int best = 0;
    double best_lp = out.head_log_prob(col, h, 0);
    for (int j = 1; j < out.choices; ++j) {
      const double lp = out.head_log_prob(col, h, j);
      if (lp > best_lp) {
        best_lp = lp;
        best = j;
      }
    }
    a.angles[h] = best;
  }
  return a;
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

LossTerms actor_critic_loss(const ActorCritic& model, const LossBatch& batch,
                            const LossCoefficients& coef, nn::LayerList* grads) {
  const Eigen::Index n = batch.observations.cols();
  const auto un = static_cast<std::size_t>(n);
  if (n == 0 || batch.actions.size() != un || batch.advantages.size() != un ||
      batch.returns.size() != un ||
      (coef.objective == PolicyObjective::kClipped && batch.old_log_probs.size() != un)) {
    throw DomainError("actor_critic_loss: inconsistent batch sizes");
  }
  const int choices = model.choices();
  const int heads = kNumHexants;
  nn::ForwardCache actor_cache, critic_cache;
  const nn::Matrix logits = model.actor().forward(batch.observations, actor_cache);
  Eigen::RowVectorXd values = model.shared_trunk()
                                  ? Eigen::RowVectorXd(logits.row(heads * choices))
                                  : Eigen::RowVectorXd(model.critic().forward(
                                        batch.observations, critic_cache));
  const PolicyOutput out = to_policy_output(logits, std::move(values), choices);
  const double inv_n = 1.0 / static_cast<double>(n);

  // Per-(sample, head) quantities on the choices x (n * heads) layout.
  const Eigen::ArrayXXd probs = out.log_probs.array().exp();
  const Eigen::RowVectorXd head_ent = -(probs * out.log_probs.array()).colwise().sum().matrix();

  LossTerms t;
  t.entropy = head_ent.sum();
  Eigen::RowVectorXd policy_weight(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double adv = batch.advantages[i];
    const double log_prob = joint_log_prob(out, c, batch.actions[i]);
    // d(policy objective)/d(log pi) for this sample, before the 1/N.
    if (coef.objective == PolicyObjective::kVanilla) {
      t.policy_objective += log_prob * adv;
      policy_weight(c) = adv;
    } else {
      const double log_ratio = log_prob - batch.old_log_probs[i];
      const double ratio = std::exp(log_ratio);
      const double unclipped = ratio * adv;
      const double clipped =
          std::clamp(ratio, 1.0 - coef.clip_eps, 1.0 + coef.clip_eps) * adv;
      t.policy_objective += std::min(unclipped, clipped);
      policy_weight(c) = unclipped <= clipped ? unclipped : 0.0;
      t.approx_kl += -log_ratio;
      if (std::abs(ratio - 1.0) > coef.clip_eps) t.clip_fraction += 1.0;
    }
    const double value_err = out.values(c) - batch.returns[i];
    t.value_loss += value_err * value_err;
  }

  if (grads) {
    // loss = -J + c1 Lv - c2 H, all as means over the batch.
    // dLoss/dlogit_j = (w (p_j - [j == a]) + c2 p_j (log p_j + H)) / N
    Eigen::RowVectorXd col_weight(n * heads);
    for (Eigen::Index c = 0; c < n; ++c) {
      col_weight.segment(c * heads, heads).setConstant(policy_weight(c));
    }
    Eigen::ArrayXXd g =
        probs.rowwise() * col_weight.array() +
        coef.entropy_coef * probs * (out.log_probs.array().rowwise() + head_ent.array());
    for (Eigen::Index c = 0; c < n; ++c) {
      const Action& a = batch.actions[static_cast<std::size_t>(c)];
      for (int h = 0; h < heads; ++h) g(a.angles[h], c * heads + h) -= policy_weight(c);
    }
    g *= inv_n;

    const bool shared = model.shared_trunk();
    const Eigen::Index rows = heads * choices + (shared ? 1 : 0);
    nn::Matrix output_grad(rows, n);
    nn::Matrix value_grad(1, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      Eigen::Map<nn::Matrix>(output_grad.data() + c * rows, choices, heads) =
          g.middleCols(c * heads, heads).matrix();
      value_grad(0, c) = inv_n * coef.value_coef * 2.0 *
                         (out.values(c) - batch.returns[static_cast<std::size_t>(c)]);
    }
    if (shared) {
      output_grad.row(heads * choices) = value_grad;
      *grads = model.actor().backward(actor_cache, output_grad);
    } else {
      *grads = model.actor().backward(actor_cache, output_grad);
      const auto critic_grads = model.critic().backward(critic_cache, value_grad);
      grads->insert(grads->end(), critic_grads.begin(), critic_grads.end());
    }
  }

  t.policy_objective *= inv_n;
  t.value_loss *= inv_n;
  t.entropy *= inv_n;
  t.approx_kl *= inv_n;
  t.clip_fraction *= inv_n;
  t.loss = -t.policy_objective + coef.value_coef * t.value_loss - coef.entropy_coef * t.entropy;
  return t;
}

}  // namespace drumrl::rl
