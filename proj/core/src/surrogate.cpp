#include "drumrl/surrogate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl {
namespace surrogate {
namespace {

constexpr double kMinPower = 1e-9;

nn::Matrix gather_columns(const nn::Matrix& m, std::span<const std::size_t> idx) {
  nn::Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = m.col(static_cast<Eigen::Index>(idx[c]));
  }
  return out;
}

nlohmann::json group_ids(std::span<const Sample> samples) {
  std::vector<int> ids;
  for (const auto& s : samples) ids.push_back(s.group_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

void SurrogateConfig::validate() const {
  if (hidden_layers < 1) throw DomainError("surrogate needs >= 1 hidden layer");
  if (nodes_per_layer < 1) throw DomainError("surrogate needs >= 1 node per layer");
  if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
  if (max_epochs < 1) throw DomainError("max_epochs must be >= 1");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (patience < 1) throw DomainError("patience must be >= 1");
}

std::vector<int> SurrogateConfig::layer_sizes() const {
  std::vector<int> sizes{kInputs};
  for (int l = 0; l < hidden_layers; ++l) sizes.push_back(nodes_per_layer);
  sizes.push_back(kOutputs);
  return sizes;
}

nlohmann::json SurrogateConfig::to_json() const {
  return {{"hidden_layers", hidden_layers}, {"nodes_per_layer", nodes_per_layer},
          {"learning_rate", learning_rate}, {"max_epochs", max_epochs},
          {"batch_size", batch_size},       {"patience", patience}};
}

SurrogateConfig SurrogateConfig::from_json(const nlohmann::json& j) {
  SurrogateConfig c;
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.nodes_per_layer = j.value("nodes_per_layer", c.nodes_per_layer);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.patience = j.value("patience", c.patience);
  c.validate();
  return c;
}

nn::Matrix scale_inputs(std::span<const DrumConfig> configs, const OutputScaling& s) {
  nn::Matrix x(kInputs, static_cast<Eigen::Index>(configs.size()));
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (int i = 0; i < kInputs; ++i) {
      x(i, static_cast<Eigen::Index>(c)) = configs[c].angles[i] / s.input_center - 1.0;
    }
  }
  return x;
}

nn::Matrix scale_inputs(std::span<const Sample> samples, const OutputScaling& s) {
  std::vector<DrumConfig> configs;
  configs.reserve(samples.size());
  for (const auto& smp : samples) configs.push_back(smp.config);
  return scale_inputs(configs, s);
}

nn::Matrix scale_targets(std::span<const Sample> samples, const OutputScaling& s) {
  nn::Matrix y(kOutputs, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t c = 0; c < samples.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    y(0, col) = (samples[c].response.k_eff - s.offset[0]) * s.scale[0];
    for (int i = 0; i < kNumHexants; ++i) {
      y(1 + i, col) = (samples[c].response.powers[i] - s.offset[1 + i]) * s.scale[1 + i];
    }
  }
  return y;
}

Surrogate::Surrogate(nn::Mlp network, BurnupStep step, OutputScaling scaling,
                     nlohmann::json provenance)
    : network_(std::move(network)),
      step_(step),
      scaling_(scaling),
      provenance_(std::move(provenance)) {
  if (network_.input_size() != kInputs || network_.output_size() != kOutputs) {
    throw DomainError("surrogate network must map 6 inputs to 7 outputs");
  }
}

CoreResponse Surrogate::postprocess(const nn::Matrix& raw, Eigen::Index col) const {
  CoreResponse r;
  r.k_eff = raw(0, col) / scaling_.scale[0] + scaling_.offset[0];
  double total = 0.0;
  for (int i = 0; i < kNumHexants; ++i) {
    const double p = raw(1 + i, col) / scaling_.scale[1 + i] + scaling_.offset[1 + i];
    r.powers[i] = std::max(p, kMinPower);
    total += r.powers[i];
  }
  for (double& p : r.powers) p /= total;
  return r;
}

CoreResponse Surrogate::predict(const DrumConfig& config) const {
  config.validate();
  const DrumConfig one[1] = {config};
  return postprocess(network_.forward(scale_inputs(one, scaling_)), 0);
}

std::vector<CoreResponse> Surrogate::predict(std::span<const DrumConfig> configs) const {
  for (const auto& c : configs) c.validate();
  const nn::Matrix raw = network_.forward(scale_inputs(configs, scaling_));
  std::vector<CoreResponse> out;
  out.reserve(configs.size());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) out.push_back(postprocess(raw, c));
  return out;
}

CoreResponse Surrogate::respond(const DrumConfig& config, BurnupStep step) const {
  if (step != step_) {
    throw DomainError("surrogate trained for " + std::string(burnup_tag(step_)) +
                      " queried at " + std::string(burnup_tag(step)));
  }
  return predict(config);
}

TrainResult train(const DatasetSplit& split, const SurrogateConfig& config,
                  std::uint64_t seed) {
  config.validate();
  if (split.train.empty() || split.validation.empty()) {
    throw DomainError("surrogate training needs non-empty train and validation sets");
  }
  const BurnupStep step = split.train.front().step;
  const OutputScaling scaling;
  const nn::Matrix x_train = scale_inputs(split.train, scaling);
  const nn::Matrix y_train = scale_targets(split.train, scaling);
  const nn::Matrix x_val = scale_inputs(split.validation, scaling);
  const nn::Matrix y_val = scale_targets(split.validation, scaling);

  const auto sizes = config.layer_sizes();
  nn::Mlp net = nn::Mlp::init(sizes, nn::Activation::kRelu, derive_seed(seed, 0));
  nn::Adam adam(net, {.learning_rate = config.learning_rate});
  std::mt19937_64 shuffle_rng(derive_seed(seed, 1));

  TrainResult result;
  result.initial_train_mse = nn::mse_loss(net.forward(x_train), y_train);
  double best_val = nn::mse_loss(net.forward(x_val), y_val);
  nn::Mlp best = net;
  int best_epoch = 0;

  const std::size_t n = split.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::ForwardCache cache;
  nn::Matrix grad;
  int epoch = 0;
  for (epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const nn::Matrix xb = gather_columns(x_train, idx);
      const nn::Matrix yb = gather_columns(y_train, idx);
      const double loss = nn::mse_loss(net.forward(xb, cache), yb, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("surrogate training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      }
      adam.step(net, net.backward(cache, grad));
    }
    const double val = nn::mse_loss(net.forward(x_val), y_val);
    if (!std::isfinite(val)) {
      throw TrainingError("surrogate validation loss is non-finite at epoch " +
                          std::to_string(epoch));
    }
    if (val < best_val) {
      best_val = val;
      best = net;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }

  result.epochs_run = std::min(epoch, config.max_epochs);
  result.best_epoch = best_epoch;
  result.validation_mse = best_val;
  result.final_train_mse = nn::mse_loss(best.forward(x_train), y_train);

  nlohmann::json provenance = {
      {"seed", seed},
      {"split_seed", split.seed},
      {"config", config.to_json()},
      {"train_groups", group_ids(split.train)},
      {"validation_groups", group_ids(split.validation)},
      {"test_groups", group_ids(split.test)},
      {"best_epoch", best_epoch},
      {"validation_mse", best_val},
  };
  result.model = Surrogate(std::move(best), step, scaling, std::move(provenance));
  result.validation_metrics = evaluate(result.model, split.validation);
  return result;
}

bool SearchSpace::contains(const SurrogateConfig& c) const {
  return c.hidden_layers >= min_layers && c.hidden_layers <= max_layers &&
         c.nodes_per_layer >= min_nodes && c.nodes_per_layer <= max_nodes &&
         c.learning_rate >= min_learning_rate && c.learning_rate <= max_learning_rate;
}

SearchResult search(const DatasetSplit& split, int n_trials, std::uint64_t seed,
                    const SearchOptions& options) {
  if (n_trials < 1) throw DomainError("search needs n_trials >= 1");
  const auto& space = options.space;

  // Draw every trial's hyperparameters up front so results do not depend on
  // the thread count.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> layers(space.min_layers, space.max_layers);
  std::uniform_int_distribution<int> nodes(space.min_nodes, space.max_nodes);
  std::uniform_real_distribution<double> log_lr(std::log(space.min_learning_rate),
                                                std::log(space.max_learning_rate));
  SearchResult result;
  result.trials.resize(static_cast<std::size_t>(n_trials));
  for (auto& trial : result.trials) {
    trial.config = options.final_schedule;
    trial.config.hidden_layers = layers(rng);
    trial.config.nodes_per_layer = nodes(rng);
    trial.config.learning_rate = std::exp(log_lr(rng));
  }

  auto run_trial = [&](std::size_t t) {
    SurrogateConfig schedule = result.trials[t].config;
    schedule.max_epochs = options.trial_max_epochs;
    schedule.patience = options.trial_patience;
    try {
      const auto r = train(split, schedule, derive_seed(seed, 1000 + t));
      result.trials[t].validation_mse = r.validation_mse;
      result.trials[t].epochs_run = r.epochs_run;
    } catch (const TrainingError&) {
      result.trials[t].validation_mse = std::numeric_limits<double>::infinity();
    }
  };

  const int n_threads = std::max(1, std::min(options.n_threads, n_trials));
  if (n_threads == 1) {
    for (std::size_t t = 0; t < result.trials.size(); ++t) run_trial(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (int w = 0; w < n_threads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t t = next++; t < result.trials.size(); t = next++) run_trial(t);
      });
    }
  }

  for (std::size_t t = 1; t < result.trials.size(); ++t) {
    if (result.trials[t].validation_mse < result.trials[result.best_index].validation_mse) {
      result.best_index = t;
    }
  }
  result.best = result.trials[result.best_index].config;
  return result;
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size() || truth.empty()) {
    throw DomainError("r_squared: size mismatch or empty input");
  }
  const double mean =
      std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

SurrogateMetrics evaluate(const Surrogate& model, std::span<const Sample> samples) {
  if (samples.empty()) throw DomainError("surrogate evaluate needs a non-empty set");
  std::vector<DrumConfig> configs;
  configs.reserve(samples.size());
  for (const auto& s : samples) configs.push_back(s.config);
  const auto pred = model.predict(configs);

  const std::size_t n = samples.size();
  std::vector<double> truth(n);
  std::vector<double> guess(n);
  SurrogateMetrics m;
  double k_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = samples[i].response.k_eff;
    guess[i] = pred[i].k_eff;
    k_abs += std::abs(truth[i] - guess[i]);
  }
  m.k_mae_pcm = k_abs / static_cast<double>(n) * 1e5;
  m.k_r2 = r_squared(truth, guess);
  for (int h = 0; h < kNumHexants; ++h) {
    double p_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = samples[i].response.powers[h];
      guess[i] = pred[i].powers[h];
      p_abs += std::abs(truth[i] - guess[i]);
    }
    m.p_mae += p_abs / static_cast<double>(n) / kNumHexants;
    m.p_r2 += r_squared(truth, guess) / kNumHexants;
  }
  return m;
}

std::string file_stem(BurnupStep step) {
  return "surrogate_" + std::string(burnup_tag(step));
}

void save_model(const Surrogate& model, const std::filesystem::path& dir) {
  const std::string stem = file_stem(model.step());
  nn::save_model(dir / (stem + ".bin"), model.network());
  const auto& s = model.scaling();
  nlohmann::json meta = {
      {"format", "drumrl-surrogate"},
      {"version", kFormatVersion},
      {"burnup", burnup_tag(model.step())},
      {"input_center", s.input_center},
      {"output_offset", s.offset},
      {"output_scale", s.scale},
      {"provenance", model.provenance()},
  };
  nn::save_metadata(dir / (stem + ".json"), meta);
}

Surrogate load_model(const std::filesystem::path& dir, BurnupStep step) {
  const std::string stem = file_stem(step);
  const auto meta_path = dir / (stem + ".json");
  if (!std::filesystem::exists(meta_path)) {
    throw LoadError("missing surrogate metadata " + meta_path.string());
  }
  const auto meta = nn::load_metadata(meta_path);
  OutputScaling scaling;
  BurnupStep tagged;
  try {
    if (meta.at("format").get<std::string>() != "drumrl-surrogate") {
      throw LoadError(meta_path.string() + ": not a surrogate metadata file");
    }
    const int version = meta.at("version").get<int>();
    if (version != kFormatVersion) {
      throw LoadError(meta_path.string() + ": unsupported surrogate format version " +
                      std::to_string(version));
    }
    tagged = burnup_from_tag(meta.at("burnup").get<std::string>());
    scaling.input_center = meta.at("input_center").get<double>();
    scaling.offset = meta.at("output_offset").get<std::array<double, kOutputs>>();
    scaling.scale = meta.at("output_scale").get<std::array<double, kOutputs>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw LoadError(meta_path.string() + ": " + e.what());
  }
  if (tagged != step) {
    throw LoadError(meta_path.string() + ": model is tagged " +
                    std::string(burnup_tag(tagged)) + ", requested " +
                    std::string(burnup_tag(step)));
  }
  nn::Mlp net = nn::load_model(dir / (stem + ".bin"));
  try {
    return Surrogate(std::move(net), step, scaling, meta.value("provenance", nlohmann::json::object()));
  } catch (const DomainError& e) {
    throw LoadError(stem + ": " + e.what());
  }
}

}  // namespace surrogate

SurrogateSet::SurrogateSet(std::array<surrogate::Surrogate, kNumBurnupSteps> models)
    : models_(std::move(models)) {
  for (auto step : kAllBurnupSteps) {
    if (models_[index_of(step)].step() != step) {
      throw DomainError("SurrogateSet: model order does not match burnup steps");
    }
  }
}

SurrogateSet SurrogateSet::load(const std::filesystem::path& dir) {
  return SurrogateSet({surrogate::load_model(dir, BurnupStep::kYr0),
                       surrogate::load_model(dir, BurnupStep::kYr2),
                       surrogate::load_model(dir, BurnupStep::kYr4)});
}

CoreResponse SurrogateSet::respond(const DrumConfig& config, BurnupStep step) const {
  return models_[index_of(step)].predict(config);
}

}  // namespace drumrl
