#include "drumrl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "drumrl/env.hpp"
#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kKeffLimitPcm = 100.0;
constexpr double kHptrLimit = 1.02;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void require_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw ParseError(where, 0, "expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ParseError(where, 0, "unknown key '" + key + "'");
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string());
  }
  const fs::path probe = dir / ".drumrl_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// The manifest binds a run directory to one config.
void check_run_dir(const RunConfig& config) {
  const Paths paths{config.out_dir};
  if (!fs::exists(paths.manifest())) return;
  const json manifest = read_json(paths.manifest());
  const auto hash = manifest.value("config_hash", std::string());
  if (hash != config.hash()) {
    throw DomainError("run directory " + config.out_dir.string() +
                      " belongs to config_hash=" + hash + ", current config_hash=" +
                      config.hash());
  }
}

void record_artifacts(const RunConfig& config, const std::string& stage, const json& entry) {
  check_run_dir(config);
  const Paths paths{config.out_dir};
  json manifest = fs::exists(paths.manifest())
                      ? read_json(paths.manifest())
                      : json{{"format", "drumrl-run"},
                             {"run_seed", config.seed},
                             {"config_hash", config.hash()},
                             {"config", config.to_json()},
                             {"stages", json::object()}};
  manifest["stages"][stage] = entry;
  write_json(paths.manifest(), manifest);
}

OracleParams run_oracle_params(const RunConfig& config) {
  const Paths paths{config.out_dir};
  if (fs::exists(paths.oracle_params())) return OracleParams::load(paths.oracle_params());
  return config.oracle_params();
}

std::shared_ptr<const CoreModel> make_backing(const RunConfig& config, Backing backing) {
  if (backing == Backing::kOracle) {
    return std::make_shared<OracleModel>(run_oracle_params(config));
  }
  const fs::path dir = Paths{config.out_dir}.models_dir();
  for (BurnupStep s : kAllBurnupSteps) {
    const fs::path meta = dir / (surrogate::file_stem(s) + ".json");
    if (!fs::exists(meta)) {
      throw IoError("missing surrogate model " + meta.string() + " (run train-surrogate)");
    }
  }
  return std::make_shared<SurrogateSet>(SurrogateSet::load(dir));
}

std::string csv_comment(const RunConfig& config, std::string_view extra = {}) {
  std::string c = config.provenance();
  if (!extra.empty()) {
    c += ' ';
    c += extra;
  }
  return c;
}

std::string provenance_of_file(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.starts_with("#")) break;
    const auto pos = line.find("run_seed=");
    if (pos == std::string::npos) continue;
    std::istringstream words(line.substr(pos));
    std::string seed, hash;
    words >> seed >> hash;
    return seed + " " + hash;
  }
  return {};
}

}  // namespace

nlohmann::json SurrogateBudget::to_json() const {
  return {{"trials", trials},
          {"trial_max_epochs", trial_max_epochs},
          {"trial_patience", trial_patience},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"batch_size", batch_size},
          {"min_k_r2", min_k_r2}};
}

SurrogateBudget SurrogateBudget::from_json(const nlohmann::json& j) {
  require_keys(j,
               {"trials", "trial_max_epochs", "trial_patience", "max_epochs", "patience",
                "batch_size", "min_k_r2"},
               "surrogate");
  SurrogateBudget b;
  b.trials = get_or(j, "trials", b.trials);
  b.trial_max_epochs = get_or(j, "trial_max_epochs", b.trial_max_epochs);
  b.trial_patience = get_or(j, "trial_patience", b.trial_patience);
  b.max_epochs = get_or(j, "max_epochs", b.max_epochs);
  b.patience = get_or(j, "patience", b.patience);
  b.batch_size = get_or(j, "batch_size", b.batch_size);
  b.min_k_r2 = get_or(j, "min_k_r2", b.min_k_r2);
  if (b.trials < 1 || b.trial_max_epochs < 1 || b.trial_patience < 1 || b.max_epochs < 1 ||
      b.patience < 1 || b.batch_size < 1) {
    throw DomainError("surrogate budget values must be >= 1");
  }
  return b;
}

OracleParams RunConfig::oracle_params() const {
  if (oracle) return *oracle;
  return calibrate(critical_angles, total_drum_worth, interaction_strength);
}

const rl::AlgoConfig& RunConfig::algo(rl::Algorithm a) const {
  return a == rl::Algorithm::kPPO ? ppo : a2c;
}

rl::AlgoConfig& RunConfig::algo(rl::Algorithm a) {
  return a == rl::Algorithm::kPPO ? ppo : a2c;
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  if (oracle) j["oracle"] = oracle->to_json();
  j["calibration"] = {{"critical_angles", critical_angles},
                      {"total_drum_worth", total_drum_worth},
                      {"interaction_strength", interaction_strength}};
  j["dataset"] = {{"configs_per_step", configs_per_step}};
  j["surrogate"] = surrogate.to_json();
  j["rl"] = {{"ppo", ppo.to_json()}, {"a2c", a2c.to_json()}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  require_keys(j, {"seed", "oracle", "calibration", "dataset", "surrogate", "rl", "out_dir",
                   "n_threads"},
               "run config");
  RunConfig c;
  try {
    c.seed = get_or(j, "seed", c.seed);
    if (j.contains("oracle")) c.oracle = OracleParams::from_json(j.at("oracle"));
    if (j.contains("calibration")) {
      const json& cal = j.at("calibration");
      require_keys(cal, {"critical_angles", "total_drum_worth", "interaction_strength"},
                   "calibration");
      c.critical_angles = get_or(cal, "critical_angles", c.critical_angles);
      c.total_drum_worth = get_or(cal, "total_drum_worth", c.total_drum_worth);
      c.interaction_strength = get_or(cal, "interaction_strength", c.interaction_strength);
    }
    if (j.contains("dataset")) {
      require_keys(j.at("dataset"), {"configs_per_step"}, "dataset");
      c.configs_per_step = get_or(j.at("dataset"), "configs_per_step", c.configs_per_step);
    }
    if (j.contains("surrogate")) c.surrogate = SurrogateBudget::from_json(j.at("surrogate"));
    if (j.contains("rl")) {
      const json& r = j.at("rl");
      require_keys(r, {"ppo", "a2c"}, "rl");
      for (const char* name : {"ppo", "a2c"}) {
        json sub = r.contains(name) ? r.at(name) : json::object();
        if (sub.contains("algorithm") && sub.at("algorithm") != name) {
          throw ParseError("rl", 0, std::string("algorithm mismatch under '") + name + "'");
        }
        sub["algorithm"] = name;
        c.algo(rl::algorithm_from_name(name)) = rl::AlgoConfig::from_json(sub);
      }
    }
    c.out_dir = get_or(j, "out_dir", c.out_dir.string());
    c.n_threads = get_or(j, "n_threads", c.n_threads);
  } catch (const json::exception& e) {
    throw ParseError("run config", 0, e.what());
  }
  if (c.configs_per_step < 3) throw DomainError("configs_per_step must be >= 3");
  if (c.n_threads < 1) throw DomainError("n_threads must be >= 1");
  c.oracle_params().validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  return from_json(read_json(path));
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

std::string RunConfig::provenance() const {
  return "run_seed=" + std::to_string(seed) + " config_hash=" + hash();
}

std::filesystem::path Paths::dataset(BurnupStep step) const {
  return data_dir() / ("dataset_" + std::string(burnup_tag(step)) + ".csv");
}

std::filesystem::path Paths::rl_dir(rl::Algorithm a) const {
  return root / "rl" / std::string(rl::algorithm_name(a));
}

std::filesystem::path Paths::training_log(rl::Algorithm a) const {
  return rl_dir(a) / "training_log.csv";
}

std::filesystem::path Paths::final_checkpoint(rl::Algorithm a) const {
  return rl_dir(a) / (std::string(rl::algorithm_name(a)) + "_final");
}

std::filesystem::path Paths::checkpoint_dir(rl::Algorithm a) const {
  return rl_dir(a) / "checkpoints";
}

std::filesystem::path Paths::eval_report(std::string_view algo, std::string_view backing) const {
  return root / "eval" / (std::string(algo) + "_" + std::string(backing) + ".csv");
}

std::string_view backing_name(Backing b) {
  return b == Backing::kOracle ? "oracle" : "surrogate";
}

Backing backing_from_name(std::string_view name) {
  if (name == "surrogate") return Backing::kSurrogate;
  if (name == "oracle") return Backing::kOracle;
  throw DomainError("unknown backing '" + std::string(name) + "' (surrogate|oracle)");
}

GenDataResult cmd_gen_data(const RunConfig& config) {
  const Paths paths{config.out_dir};
  ensure_dir(paths.root);
  check_run_dir(config);
  ensure_dir(paths.data_dir());

  GenDataResult result;
  result.params = config.oracle_params();
  json params_json = result.params.to_json();
  params_json["run_seed"] = config.seed;
  params_json["config_hash"] = config.hash();
  write_json(paths.oracle_params(), params_json);

  json files = json::array();
  for (BurnupStep step : kAllBurnupSteps) {
    const auto i = static_cast<std::uint64_t>(index_of(step));
    const auto samples =
        generate(step, config.configs_per_step, derive_seed(config.seed, 200 + i), result.params);
    DatasetSplit parts = split(samples, derive_seed(config.seed, 210 + i));
    DatasetSplit augmented = augment(parts);
    save_split(paths.dataset(step), augmented, csv_comment(config));
    files.push_back({{"path", fs::relative(paths.dataset(step), paths.root).generic_string()},
                     {"burnup", burnup_tag(step)},
                     {"split_seed", augmented.seed},
                     {"train_rows", augmented.train.size()},
                     {"validation_rows", augmented.validation.size()},
                     {"test_rows", augmented.test.size()}});
    result.splits[index_of(step)] = std::move(augmented);
  }
  record_artifacts(config, "gen-data",
                   {{"oracle_params", result.params.to_json()}, {"files", files}});
  return result;
}

TrainSurrogateResult cmd_train_surrogate(const RunConfig& config) {
  const Paths paths{config.out_dir};
  check_run_dir(config);
  std::array<DatasetSplit, kNumBurnupSteps> splits;
  for (BurnupStep step : kAllBurnupSteps) {
    if (!fs::exists(paths.dataset(step))) {
      throw IoError("missing dataset " + paths.dataset(step).string() + " (run gen-data)");
    }
    splits[index_of(step)] = load_split(paths.dataset(step));
  }
  ensure_dir(paths.models_dir());

  const SurrogateBudget& b = config.surrogate;
  surrogate::SearchOptions opts;
  opts.trial_max_epochs = b.trial_max_epochs;
  opts.trial_patience = b.trial_patience;
  opts.final_schedule.max_epochs = b.max_epochs;
  opts.final_schedule.patience = b.patience;
  opts.final_schedule.batch_size = b.batch_size;
  opts.n_threads = config.n_threads;

  TrainSurrogateResult result;
  std::ostringstream metrics;
  std::ostringstream trials;
  metrics << "# " << config.provenance() << "\n"
          << "step,year,hidden_layers,nodes_per_layer,learning_rate,epochs_run,k_mae_pcm,k_r2,"
             "p_mae,p_r2\n";
  trials << "# " << config.provenance() << "\n"
         << "step,trial,hidden_layers,nodes_per_layer,learning_rate,validation_mse,epochs_run\n";
  json entries = json::array();
  for (BurnupStep step : kAllBurnupSteps) {
    const auto i = static_cast<std::uint64_t>(index_of(step));
    const auto t0 = std::chrono::steady_clock::now();
    const DatasetSplit& data = splits[index_of(step)];
    const auto found = surrogate::search(data, b.trials, derive_seed(config.seed, 300 + i), opts);
    auto trained = surrogate::train(data, found.best, derive_seed(config.seed, 310 + i));
    trained.model.provenance()["run_seed"] = config.seed;
    trained.model.provenance()["config_hash"] = config.hash();
    surrogate::save_model(trained.model, paths.models_dir());

    SurrogateStepResult r;
    r.step = step;
    r.architecture = found.best;
    r.test_metrics = surrogate::evaluate(trained.model, data.test);
    r.epochs_run = trained.epochs_run;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!(r.test_metrics.k_r2 >= b.min_k_r2)) result.quality_gate_passed = false;

    const auto& m = r.test_metrics;
    metrics << burnup_tag(step) << ',' << burnup_years(step) << ',' << found.best.hidden_layers
            << ',' << found.best.nodes_per_layer << ',' << format_double(found.best.learning_rate)
            << ',' << r.epochs_run << ',' << format_double(m.k_mae_pcm) << ','
            << format_double(m.k_r2) << ',' << format_double(m.p_mae) << ','
            << format_double(m.p_r2) << '\n';
    for (std::size_t t = 0; t < found.trials.size(); ++t) {
      const auto& tr = found.trials[t];
      trials << burnup_tag(step) << ',' << t << ',' << tr.config.hidden_layers << ','
             << tr.config.nodes_per_layer << ',' << format_double(tr.config.learning_rate) << ','
             << format_double(tr.validation_mse) << ',' << tr.epochs_run << '\n';
    }
    entries.push_back({{"burnup", burnup_tag(step)},
                       {"model", surrogate::file_stem(step)},
                       {"architecture", found.best.to_json()},
                       {"test_k_mae_pcm", m.k_mae_pcm},
                       {"test_k_r2", m.k_r2},
                       {"test_p_r2", m.p_r2}});
    result.steps.push_back(r);
  }
  write_text_file(paths.surrogate_metrics(), metrics.str());
  write_text_file(paths.surrogate_search(), trials.str());
  record_artifacts(config, "train-surrogate",
                   {{"models", entries}, {"quality_gate_passed", result.quality_gate_passed}});
  if (!result.quality_gate_passed) {
    std::ostringstream msg;
    msg << "surrogate k R2 below " << b.min_k_r2 << " for";
    for (const auto& s : result.steps) {
      if (!(s.test_metrics.k_r2 >= b.min_k_r2)) msg << ' ' << burnup_tag(s.step);
    }
    throw QualityGateError(msg.str());
  }
  return result;
}

rl::TrainResult cmd_train_rl(const RunConfig& config, rl::Algorithm algo,
                             const TrainRlOptions& options) {
  const Paths paths{config.out_dir};
  check_run_dir(config);
  auto backing = make_backing(config, options.backing);
  ensure_dir(paths.rl_dir(algo));

  const rl::AlgoConfig& algo_config = config.algo(algo);
  const std::string extra = "algo=" + std::string(rl::algorithm_name(algo)) +
                            " backing=" + std::string(backing_name(options.backing));
  rl::TrainOptions topts;
  topts.checkpoint_dir = paths.checkpoint_dir(algo);
  topts.n_threads = config.n_threads;
  topts.checkpoint_metadata = {{"run_seed", config.seed},
                               {"config_hash", config.hash()},
                               {"backing", backing_name(options.backing)}};
  topts.on_epoch = options.on_epoch;
  const auto seed = derive_seed(config.seed, 400 + static_cast<std::uint64_t>(algo));
  rl::TrainResult result = rl::train(
      algo_config,
      [&](int, std::uint64_t env_seed) { return env::ReactorEnv(backing, env_seed); }, seed,
      topts);

  rl::write_training_log(paths.training_log(algo), result.log, csv_comment(config, extra));
  json meta = topts.checkpoint_metadata;
  meta["timesteps"] = result.timesteps;
  meta["epochs"] = result.log.size();
  rl::save_checkpoint(paths.final_checkpoint(algo), result.model, algo_config, meta);
  record_artifacts(config, "train-rl-" + std::string(rl::algorithm_name(algo)),
                   {{"backing", backing_name(options.backing)},
                    {"timesteps", result.timesteps},
                    {"epochs", result.log.size()},
                    {"training_log",
                     fs::relative(paths.training_log(algo), paths.root).generic_string()},
                    {"checkpoint",
                     fs::relative(paths.final_checkpoint(algo), paths.root).generic_string()}});
  return result;
}

rl::EvalReport cmd_eval(const RunConfig& config, const EvalOptions& options) {
  const Paths paths{config.out_dir};
  check_run_dir(config);
  const fs::path stem =
      options.checkpoint.empty() ? paths.final_checkpoint(options.algo) : options.checkpoint;
  const rl::Checkpoint ckpt = rl::load_checkpoint(stem);
  const OracleParams params = run_oracle_params(config);
  auto backing = make_backing(config, options.backing);
  const std::string algo(rl::algorithm_name(ckpt.config.algorithm));

  rl::EvalReport report =
      rl::evaluate_policy(ckpt.model, backing, &params, derive_seed(config.seed, 500), algo);
  ensure_dir(paths.root / "eval");
  const fs::path out = paths.eval_report(algo, backing_name(options.backing));
  rl::write_eval_report(out, report,
                        csv_comment(config, "backing=" + std::string(backing_name(options.backing)) +
                                                " checkpoint=" + stem.filename().string()));
  record_artifacts(config, "eval-" + algo + "-" + std::string(backing_name(options.backing)),
                   {{"report", fs::relative(out, paths.root).generic_string()},
                    {"checkpoint", stem.filename().string()}});
  return report;
}

ReportResult cmd_report(const std::filesystem::path& run_dir) {
  const Paths paths{run_dir};
  std::vector<rl::Algorithm> algos;
  for (rl::Algorithm a : {rl::Algorithm::kPPO, rl::Algorithm::kA2C}) {
    if (fs::exists(paths.training_log(a))) algos.push_back(a);
  }
  if (algos.empty()) {
    throw IoError("no training logs under " + (run_dir / "rl").string() + " (run train-rl)");
  }
  ensure_dir(paths.report_dir());

  std::string provenance;
  if (fs::exists(paths.manifest())) {
    const json m = read_json(paths.manifest());
    provenance = "run_seed=" + std::to_string(m.value("run_seed", std::uint64_t{0})) +
                 " config_hash=" + m.value("config_hash", std::string());
  } else {
    provenance = provenance_of_file(paths.training_log(algos.front()));
  }

  ReportResult result;
  std::ostringstream summary;
  summary << "# " << provenance << "\n";
  summary << "thresholds: |k_eff - 1| <= " << kKeffLimitPcm << " pcm, HPTR <= " << kHptrLimit
          << "\n";
  std::map<std::string, double> final_reward;
  for (rl::Algorithm a : algos) {
    const std::string name(rl::algorithm_name(a));
    const auto log = rl::read_training_log(paths.training_log(a));
    std::ostringstream keff, hptr, reward;
    keff << "# " << provenance << "\nepoch,timesteps,keff_dev_mean_pcm\n";
    hptr << "# " << provenance << "\nepoch,timesteps,hptr_mean\n";
    reward << "# " << provenance
           << "\nepoch,timesteps,reward_mean,reward_std,band_lower,band_upper,reward_max,"
              "reward_min\n";
    for (const auto& e : log) {
      keff << e.epoch << ',' << e.timesteps << ',' << format_double(e.keff_dev_mean * 1e5)
           << '\n';
      hptr << e.epoch << ',' << e.timesteps << ',' << format_double(e.hptr_mean) << '\n';
      reward << e.epoch << ',' << e.timesteps << ',' << format_double(e.reward_mean) << ','
             << format_double(e.reward_std) << ','
             << format_double(e.reward_mean - e.reward_std) << ','
             << format_double(e.reward_mean + e.reward_std) << ','
             << format_double(e.reward_max) << ',' << format_double(e.reward_min) << '\n';
    }
    const std::pair<const char*, std::string> outputs[] = {
        {"keff", keff.str()}, {"hptr", hptr.str()}, {"reward", reward.str()}};
    for (const auto& [kind, text] : outputs) {
      const fs::path p = paths.report_dir() / (name + "_" + kind + ".csv");
      write_text_file(p, text);
      result.files.push_back(p);
    }

    summary << "\n[" << name << "]\n";
    summary << "epochs: " << log.size() << "\n";
    if (!log.empty()) {
      const auto& last = log.back();
      final_reward[name] = last.reward_mean;
      summary << "final epoch: timesteps " << last.timesteps << ", reward "
              << format_double(last.reward_mean) << " +- " << format_double(last.reward_std)
              << ", mean |k-1| " << format_double(last.keff_dev_mean * 1e5)
              << " pcm, mean HPTR " << format_double(last.hptr_mean) << "\n";
    }
    for (Backing b : {Backing::kSurrogate, Backing::kOracle}) {
      const fs::path eval = paths.eval_report(name, backing_name(b));
      if (!fs::exists(eval)) continue;
      summary << "greedy evaluation (" << backing_name(b) << " backing):\n";
      std::ifstream in(eval);
      std::string line;
      bool header = true;
      while (std::getline(in, line)) {
        if (line.empty() || line.starts_with("#")) continue;
        if (header) {
          header = false;
          continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() < 10) throw ParseError(eval.string(), 0, "short evaluation row");
        const double k = std::stod(f[8]);
        const double h = std::stod(f[9]);
        const double dev = std::abs(k - 1.0) * 1e5;
        summary << "  year " << f[1] << ": keff " << format_double(k) << " (|dk| "
                << format_double(std::round(dev * 100.0) / 100.0) << " pcm"
                << (dev <= kKeffLimitPcm ? ", ok" : ", KEFF VIOLATION") << "), HPTR "
                << format_double(h) << (h <= kHptrLimit ? " ok" : " HPTR VIOLATION");
        if (f.size() >= 12) {
          summary << ", oracle keff " << f[10] << ", oracle HPTR " << f[11];
        }
        summary << "\n";
      }
    }
  }
  if (final_reward.size() == 2) {
    summary << "\nfinal reward ppo " << format_double(final_reward["ppo"]) << " vs a2c "
            << format_double(final_reward["a2c"])
            << (final_reward["ppo"] >= final_reward["a2c"] ? " (ppo >= a2c)" : " (ppo < a2c)")
            << "\n";
  }
  result.summary = summary.str();
  const fs::path sp = paths.report_dir() / "summary.txt";
  write_text_file(sp, result.summary);
  result.files.push_back(sp);
  return result;
}

}  // namespace drumrl::pipeline
