#include "drumrl/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl::rl {
namespace {

LossBatch gather_batch(const RolloutBuffer& buf, std::span<const std::size_t> idx) {
  LossBatch b;
  b.observations.resize(buf.observations.rows(), static_cast<Eigen::Index>(idx.size()));
  b.actions.reserve(idx.size());
  b.old_log_probs.reserve(idx.size());
  b.advantages.reserve(idx.size());
  b.returns.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    b.observations.col(static_cast<Eigen::Index>(k)) =
        buf.observations.col(static_cast<Eigen::Index>(i));
    b.actions.push_back(buf.actions[i]);
    b.old_log_probs.push_back(buf.log_probs[i]);
    b.advantages.push_back(buf.advantages[i]);
    b.returns.push_back(buf.returns[i]);
  }
  return b;
}

std::string describe(const LossTerms& t) {
  std::ostringstream ss;
  ss << "policy=" << t.policy_objective << " value=" << t.value_loss
     << " entropy=" << t.entropy << " loss=" << t.loss;
  return ss.str();
}

// Clips, checks and applies one gradient step. Updates running stats.
void apply_gradients(ActorCritic& model, Optimizer& optimizer, nn::LayerList& grads,
                     const LossTerms& terms, double max_grad_norm, UpdateStats& stats) {
  if (!std::isfinite(terms.loss)) {
    throw TrainingError("non-finite actor-critic loss (" + describe(terms) + ")");
  }
  if (!nn::all_finite(grads)) {
    throw TrainingError("non-finite actor-critic gradient (" + describe(terms) + ")");
  }
  const double norm = nn::clip_grad_norm(grads, max_grad_norm);
  stats.grad_norm = std::max(stats.grad_norm, norm);
  stats.applied_grad_norm = std::max(stats.applied_grad_norm, nn::global_norm(grads));
  optimizer.step(model, grads);
  ++stats.gradient_steps;
}

void accumulate(UpdateStats& s, const LossTerms& t) {
  s.policy_objective += t.policy_objective;
  s.value_loss += t.value_loss;
  s.entropy += t.entropy;
  s.approx_kl += t.approx_kl;
  s.clip_fraction += t.clip_fraction;
}

void average(UpdateStats& s) {
  if (s.gradient_steps == 0) return;
  const double n = s.gradient_steps;
  s.policy_objective /= n;
  s.value_loss /= n;
  s.entropy /= n;
  s.approx_kl /= n;
  s.clip_fraction /= n;
}

class EpochAccumulator {
 public:
  EpochAccumulator(int workers, long epoch_timesteps)
      : episode_sum_(static_cast<std::size_t>(workers), 0.0),
        epoch_timesteps_(epoch_timesteps),
        next_boundary_(epoch_timesteps) {}

  // Returns a finished epoch row when this step crosses a boundary.
  std::optional<EpochStats> observe(std::span<const env::StepResult> results) {
    for (std::size_t w = 0; w < results.size(); ++w) {
      const auto& r = results[w];
      keff_dev_sum_ += env::f2(r.response.k_eff);
      hptr_sum_ += env::hptr(r.response.powers);
      ++steps_;
      episode_sum_[w] += r.base_reward;
      if (r.done) {
        episode_rewards_.push_back(episode_sum_[w] / env::kEpisodeLength);
        episode_sum_[w] = 0.0;
      }
    }
    timesteps_ += static_cast<long>(results.size());
    if (timesteps_ < next_boundary_) return std::nullopt;

    EpochStats row;
    row.epoch = ++epoch_;
    row.timesteps = timesteps_;
    row.episodes = static_cast<long>(episode_rewards_.size());
    if (!episode_rewards_.empty()) {
      const double n = static_cast<double>(episode_rewards_.size());
      const auto [lo, hi] = std::minmax_element(episode_rewards_.begin(), episode_rewards_.end());
      // Summation rounding can put the mean of near-equal rewards outside [min, max].
      const double mean = std::clamp(
          std::accumulate(episode_rewards_.begin(), episode_rewards_.end(), 0.0) / n, *lo, *hi);
      double ss = 0.0;
      for (double r : episode_rewards_) ss += (r - mean) * (r - mean);
      row.reward_mean = mean;
      row.reward_std = std::sqrt(ss / n);
      row.reward_max = *hi;
      row.reward_min = *lo;
    }
    if (steps_ > 0) {
      row.keff_dev_mean = keff_dev_sum_ / static_cast<double>(steps_);
      row.hptr_mean = hptr_sum_ / static_cast<double>(steps_);
    }
    episode_rewards_.clear();
    keff_dev_sum_ = hptr_sum_ = 0.0;
    steps_ = 0;
    next_boundary_ += epoch_timesteps_;
    return row;
  }

  long timesteps() const { return timesteps_; }

 private:
  std::vector<double> episode_sum_;
  std::vector<double> episode_rewards_;
  double keff_dev_sum_ = 0.0;
  double hptr_sum_ = 0.0;
  long steps_ = 0;
  long timesteps_ = 0;
  long epoch_timesteps_;
  long next_boundary_;
  int epoch_ = 0;
};

std::string epoch_stem(Algorithm algo, int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_epoch_%03d", epoch);
  return std::string(algorithm_name(algo)) + buf;
}

void write_comment(std::ostream& out, std::string_view comment) {
  if (comment.empty()) return;
  std::istringstream lines{std::string(comment)};
  std::string l;
  while (std::getline(lines, l)) out << "# " << l << "\n";
}

}  // namespace

std::string_view algorithm_name(Algorithm a) {
  return a == Algorithm::kA2C ? "a2c" : "ppo";
}

Algorithm algorithm_from_name(std::string_view name) {
  if (name == "a2c" || name == "A2C") return Algorithm::kA2C;
  if (name == "ppo" || name == "PPO") return Algorithm::kPPO;
  throw DomainError("unknown algorithm '" + std::string(name) + "' (expected a2c or ppo)");
}

AlgoConfig AlgoConfig::defaults(Algorithm algo) {
  AlgoConfig c;
  c.algorithm = algo;
  if (algo == Algorithm::kA2C) {
    c.value_coef = 0.5;
    c.entropy_coef = 0.02;
    c.n_steps = 200;
    c.learning_rate = 7e-4;
  } else {
    c.value_coef = 0.75;
    c.entropy_coef = 0.01;
    c.n_steps = 300;
    c.learning_rate = 3e-4;
    c.clip_eps = 0.4;
    c.max_grad_norm = 0.5;
  }
  return c;
}

void AlgoConfig::validate() const {
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) {
    throw DomainError("c1 and c2 must be >= 0");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw DomainError("gae_lambda must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
  if (!(max_grad_norm > 0.0)) throw DomainError("max_grad_norm must be > 0");
  if (algorithm == Algorithm::kPPO) {
    if (!(clip_eps > 0.0)) throw DomainError("PPO clip epsilon must be > 0");
    if (ppo_epochs < 1) throw DomainError("ppo_epochs must be >= 1");
    if (minibatch_size < 1) throw DomainError("minibatch_size must be >= 1");
  }
  if (n_steps < 1 || n_workers < 1) throw DomainError("n_steps and n_workers must be >= 1");
  if (total_timesteps < 1 || epoch_timesteps < 1) {
    throw DomainError("total_timesteps and epoch_timesteps must be >= 1");
  }
  if (hidden.empty()) throw DomainError("actor-critic needs at least one hidden layer");
}

nlohmann::json AlgoConfig::to_json() const {
  return {{"algorithm", algorithm_name(algorithm)},
          {"value_coef", value_coef},
          {"entropy_coef", entropy_coef},
          {"n_steps", n_steps},
          {"gamma", gamma},
          {"gae_lambda", gae_lambda},
          {"learning_rate", learning_rate},
          {"max_grad_norm", max_grad_norm},
          {"clip_eps", clip_eps},
          {"ppo_epochs", ppo_epochs},
          {"minibatch_size", minibatch_size},
          {"n_workers", n_workers},
          {"total_timesteps", total_timesteps},
          {"epoch_timesteps", epoch_timesteps},
          {"hidden", hidden},
          {"shared_trunk", shared_trunk},
          {"normalize_reward", normalize_reward}};
}

AlgoConfig AlgoConfig::from_json(const nlohmann::json& j) {
  try {
    AlgoConfig c = defaults(algorithm_from_name(j.value("algorithm", std::string("ppo"))));
    c.value_coef = j.value("value_coef", c.value_coef);
    c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.gamma = j.value("gamma", c.gamma);
    c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
    c.clip_eps = j.value("clip_eps", c.clip_eps);
    c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
    c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
    c.n_workers = j.value("n_workers", c.n_workers);
    c.total_timesteps = j.value("total_timesteps", c.total_timesteps);
    c.epoch_timesteps = j.value("epoch_timesteps", c.epoch_timesteps);
    c.hidden = j.value("hidden", c.hidden);
    c.shared_trunk = j.value("shared_trunk", c.shared_trunk);
    c.normalize_reward = j.value("normalize_reward", c.normalize_reward);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("algo config", 0, e.what());
  }
}

Optimizer::Optimizer(const ActorCritic& model, nn::AdamOptions options)
    : actor_(model.actor(), options), critic_(model.critic(), options) {}

void Optimizer::step(ActorCritic& model, const nn::LayerList& grads) {
  const auto na = static_cast<std::ptrdiff_t>(model.actor().layers().size());
  if (grads.size() != static_cast<std::size_t>(na) + model.critic().layers().size()) {
    throw DomainError("gradient list does not match the actor-critic layout");
  }
  if (!nn::all_finite(grads)) throw TrainingError("non-finite actor-critic gradient");
  actor_.step(model.actor(), nn::LayerList(grads.begin(), grads.begin() + na));
  if (!model.shared_trunk()) {
    critic_.step(model.critic(), nn::LayerList(grads.begin() + na, grads.end()));
  }
}

UpdateStats a2c_update(ActorCritic& model, Optimizer& optimizer,
                       const RolloutBuffer& buffer, const AlgoConfig& config) {
  if (!buffer.has_advantages()) throw UsageError("a2c_update: advantages not computed");
  std::vector<std::size_t> idx(buffer.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const LossBatch batch = gather_batch(buffer, idx);
  const LossCoefficients coef{config.value_coef, config.entropy_coef, config.clip_eps,
                              PolicyObjective::kVanilla};
  nn::LayerList grads;
  const LossTerms terms = actor_critic_loss(model, batch, coef, &grads);
  UpdateStats stats;
  accumulate(stats, terms);
  apply_gradients(model, optimizer, grads, terms, config.max_grad_norm, stats);
  average(stats);
  return stats;
}

UpdateStats ppo_update(ActorCritic& model, Optimizer& optimizer,
                       const RolloutBuffer& buffer, const AlgoConfig& config,
                       std::mt19937_64& rng) {
  if (!buffer.has_advantages()) throw UsageError("ppo_update: advantages not computed");
  const LossCoefficients coef{config.value_coef, config.entropy_coef, config.clip_eps,
                              PolicyObjective::kClipped};
  std::vector<std::size_t> idx(buffer.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(config.minibatch_size);
  UpdateStats stats;
  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t start = 0; start < idx.size(); start += mb) {
      const std::size_t end = std::min(idx.size(), start + mb);
      LossBatch batch = gather_batch(buffer, std::span(idx).subspan(start, end - start));
      auto& adv = batch.advantages;
      if (adv.size() > 1) {
        const double n = static_cast<double>(adv.size());
        const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
        double ss = 0.0;
        for (double a : adv) ss += (a - mean) * (a - mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        for (double& a : adv) a = (a - mean) / (sd + 1e-8);
      }
      nn::LayerList grads;
      const LossTerms terms = actor_critic_loss(model, batch, coef, &grads);
      accumulate(stats, terms);
      apply_gradients(model, optimizer, grads, terms, config.max_grad_norm, stats);
    }
  }
  average(stats);
  return stats;
}

TrainResult train(const AlgoConfig& config, const EnvFactory& make_env,
                  std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  if (!make_env) throw DomainError("train: environment factory is empty");

  TrainResult result;
  ActorCriticShape shape;
  shape.hidden = config.hidden;
  shape.shared_trunk = config.shared_trunk;
  result.model = ActorCritic::init(shape, derive_seed(seed, 0));
  ActorCritic& model = result.model;
  Optimizer optimizer(model, {.learning_rate = config.learning_rate});
  std::mt19937_64 action_rng(derive_seed(seed, 1));
  std::mt19937_64 shuffle_rng(derive_seed(seed, 2));

  std::vector<env::ReactorEnv> envs;
  envs.reserve(static_cast<std::size_t>(config.n_workers));
  for (int w = 0; w < config.n_workers; ++w) {
    envs.push_back(make_env(w, derive_seed(seed, 100 + static_cast<std::uint64_t>(w))));
  }
  VectorEnv venv(std::move(envs), options.n_threads);

  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
  }
  EpochAccumulator acc(config.n_workers, config.epoch_timesteps);
  auto on_step = [&](std::span<const env::StepResult> results) {
    if (auto row = acc.observe(results)) {
      result.log.push_back(*row);
      if (!options.checkpoint_dir.empty()) {
        nlohmann::json meta = options.checkpoint_metadata;
        meta["epoch"] = row->epoch;
        meta["timesteps"] = row->timesteps;
        save_checkpoint(options.checkpoint_dir / epoch_stem(config.algorithm, row->epoch),
                        model, config, meta);
      }
      if (options.on_epoch) options.on_epoch(*row);
    }
  };

  const AdvantageMode mode =
      config.algorithm == Algorithm::kA2C ? AdvantageMode::kNStep : AdvantageMode::kGae;
  RewardNormalizer reward_norm(config.n_workers, config.gamma);
  while (acc.timesteps() < config.total_timesteps) {
    RolloutBuffer buffer = collect_rollouts(venv, model, config.n_steps, action_rng, on_step);
    if (config.normalize_reward) reward_norm.normalize(buffer);
    compute_returns_and_advantages(buffer, config.gamma, config.gae_lambda, mode);
    if (config.algorithm == Algorithm::kA2C) {
      result.updates.push_back(a2c_update(model, optimizer, buffer, config));
    } else {
      result.updates.push_back(ppo_update(model, optimizer, buffer, config, shuffle_rng));
    }
  }
  result.timesteps = acc.timesteps();
  return result;
}

EvalReport evaluate_policy(const ActorCritic& model,
                           std::shared_ptr<const CoreModel> backing,
                           const OracleParams* cross_check, std::uint64_t seed,
                           std::string algo) {
  env::ReactorEnv environment(std::move(backing), seed);
  env::Observation obs = environment.reset(seed);
  EvalReport report;
  report.algo = std::move(algo);
  while (!environment.done()) {
    const env::Observation one[1] = {obs};
    const PolicyOutput out = model.forward(observation_matrix(one));
    const Action a = greedy_action(out, 0);
    const env::StepResult r = environment.step(a);
    EvalRow row;
    row.step = r.evaluated_step;
    row.angles = a;
    row.k_eff = r.response.k_eff;
    row.hptr = env::hptr(r.response.powers);
    row.reward = r.reward;
    if (cross_check) {
      const CoreResponse truth = evaluate(a, r.evaluated_step, *cross_check);
      row.oracle_k_eff = truth.k_eff;
      row.oracle_hptr = env::hptr(truth.powers);
    }
    report.rows.push_back(row);
    obs = r.observation;
  }
  return report;
}

LatencyReport inference_latency(const ActorCritic& model, int n, BurnupStep step) {
  if (n < 1) throw DomainError("inference_latency: n must be >= 1");
  using clock = std::chrono::steady_clock;
  env::Observation obs;
  obs.step = step;
  obs.powers.fill(1.0 / kNumHexants);
  const env::Observation one[1] = {obs};
  const nn::Matrix x = observation_matrix(one);

  LatencyReport report;
  report.calls = n;
  int sink = 0;
  auto start = clock::now();
  for (int i = 0; i < n; ++i) sink += greedy_action(model.forward(x), 0).angles[0];
  report.single_seconds =
      std::chrono::duration<double>(clock::now() - start).count() / n;

  constexpr int kBatch = 100;
  const nn::Matrix xb = x.replicate(1, kBatch);
  const int rounds = std::max(1, n / kBatch);
  start = clock::now();
  for (int i = 0; i < rounds; ++i) {
    const PolicyOutput out = model.forward(xb);
    for (int c = 0; c < kBatch; ++c) sink += greedy_action(out, c).angles[0];
  }
  report.batched_per_action_seconds =
      std::chrono::duration<double>(clock::now() - start).count() / (rounds * kBatch);
  if (sink == -1) report.calls = 0;  // keeps the loops observable
  return report;
}

void save_checkpoint(const std::filesystem::path& stem, const ActorCritic& model,
                     const AlgoConfig& config, const nlohmann::json& extra) {
  nn::save_model(stem.string() + ".bin", model.actor());
  if (!model.shared_trunk()) nn::save_model(stem.string() + ".critic.bin", model.critic());
  nlohmann::json meta = extra;
  meta["format"] = "drumrl-actor-critic";
  meta["version"] = kCheckpointVersion;
  meta["choices"] = model.choices();
  meta["shared_trunk"] = model.shared_trunk();
  meta["algo_config"] = config.to_json();
  nn::save_metadata(stem.string() + ".json", meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  const std::filesystem::path meta_path = stem.string() + ".json";
  if (!std::filesystem::exists(meta_path)) {
    throw LoadError("missing checkpoint metadata " + meta_path.string());
  }
  Checkpoint ckpt;
  ckpt.metadata = nn::load_metadata(meta_path);
  int choices = 0;
  bool shared = false;
  try {
    if (ckpt.metadata.at("format").get<std::string>() != "drumrl-actor-critic") {
      throw LoadError(meta_path.string() + ": not an actor-critic checkpoint");
    }
    const int version = ckpt.metadata.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw LoadError(meta_path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
    }
    choices = ckpt.metadata.at("choices").get<int>();
    shared = ckpt.metadata.at("shared_trunk").get<bool>();
    ckpt.config = AlgoConfig::from_json(ckpt.metadata.at("algo_config"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  }
  try {
    nn::Mlp critic =
        shared ? nn::Mlp{} : nn::load_model(stem.string() + ".critic.bin");
    ckpt.model = ActorCritic(nn::load_model(stem.string() + ".bin"), std::move(critic), choices);
  } catch (const DomainError& e) {
    throw LoadError(stem.string() + ": " + e.what());
  }
  return ckpt;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& rows, std::string_view comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_comment(out, comment);
  out << kTrainingLogHeader << "\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.timesteps << "," << format_double(r.reward_mean) << ","
        << format_double(r.reward_std) << "," << format_double(r.reward_max) << ","
        << format_double(r.reward_min) << "," << format_double(r.keff_dev_mean) << ","
        << format_double(r.hptr_mean) << "\n";
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<EpochStats> read_training_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<EpochStats> rows;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kTrainingLogHeader) throw ParseError(path.string(), n, "header mismatch");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw ParseError(path.string(), n, "expected 8 fields");
    try {
      EpochStats r;
      r.epoch = std::stoi(f[0]);
      r.timesteps = std::stol(f[1]);
      r.reward_mean = std::stod(f[2]);
      r.reward_std = std::stod(f[3]);
      r.reward_max = std::stod(f[4]);
      r.reward_min = std::stod(f[5]);
      r.keff_dev_mean = std::stod(f[6]);
      r.hptr_mean = std::stod(f[7]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ParseError(path.string(), n, "bad numeric field");
    }
  }
  if (!header) throw ParseError(path.string(), n, "missing header");
  return rows;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report,
                       std::string_view comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_comment(out, comment);
  const bool cross = !report.rows.empty() && report.rows.front().oracle_k_eff.has_value();
  out << kEvalHeader << (cross ? ",oracle_keff,oracle_hptr" : "") << "\n";
  for (const auto& r : report.rows) {
    out << report.algo << "," << burnup_years(r.step);
    for (int a : r.angles.angles) out << "," << a;
    out << "," << format_double(r.k_eff) << "," << format_double(r.hptr);
    if (cross) {
      out << "," << format_double(r.oracle_k_eff.value_or(0.0)) << ","
          << format_double(r.oracle_hptr.value_or(0.0));
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace drumrl::rl
