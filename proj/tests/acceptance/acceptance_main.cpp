// Runs the full pipeline at the default budget and prints one PASS/FAIL line
// per acceptance criterion.
//
//   acceptance [--out DIR] [--reuse]
//
// --reuse skips stages whose artifacts already exist in DIR.

#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "drumrl/env.hpp"
#include "drumrl/error.hpp"
#include "drumrl/pipeline.hpp"
#include "drumrl/util.hpp"
#include "numeric_checks.hpp"

namespace {

using namespace drumrl;
namespace pl = drumrl::pipeline;
namespace fs = std::filesystem;

constexpr double kKeffPcm = 100.0;
constexpr double kOracleKeffPcm = 200.0;
constexpr double kHptrMax = 1.02;
constexpr double kAngleTolDeg = 5.0;
constexpr double kLatencyMax = 25e-3;

struct Verdict {
  int id = 0;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> verdicts;

void record(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  std::cout << "  -> criterion " << id << (pass ? " PASS" : " FAIL") << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Numerical checks that need no training.
void numeric_suite() {
  std::cout << "[6] numerical correctness suite" << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  double mse = 0.0, vanilla = 0.0, clipped = 0.0, gae = 0.0, rec = 0.0, sym = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    mse = std::max(mse, checks::mse_gradient_error(s));
    vanilla = std::max(vanilla,
                       checks::objective_gradient_error(s, rl::PolicyObjective::kVanilla));
    vanilla = std::max(vanilla, checks::objective_gradient_error(
                                    s, rl::PolicyObjective::kVanilla, true));
    clipped = std::max(clipped,
                       checks::objective_gradient_error(s, rl::PolicyObjective::kClipped));
    clipped = std::max(clipped, checks::objective_gradient_error(
                                    s, rl::PolicyObjective::kClipped, true));
  }
  for (std::uint64_t s = 0; s < 200; ++s) {
    gae = std::max(gae, checks::gae_lambda_one_error(s));
    rec = std::max(rec, checks::return_recursion_error(s, rl::AdvantageMode::kNStep));
    rec = std::max(rec, checks::return_recursion_error(s, rl::AdvantageMode::kGae));
  }
  const OracleParams p = calibrate(kDefaultCriticalAngles);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> angle(0, kMaxAngle);
  for (int n = 0; n < 1000; ++n) {
    DrumConfig c;
    for (int& a : c.angles) a = angle(rng);
    for (BurnupStep s : kAllBurnupSteps) {
      const CoreResponse base = evaluate(c, s, p);
      for (int op = 0; op < kNumSymmetryOps; ++op) {
        const auto [tc, tr] = apply_symmetry(op, c, base);
        const CoreResponse direct = evaluate(tc, s, p);
        sym = std::max(sym, std::abs(direct.k_eff - base.k_eff));
        for (int i = 0; i < kNumHexants; ++i) {
          sym = std::max(sym, std::abs(direct.powers[i] - tr.powers[i]));
        }
      }
    }
  }
  const HexantValues tilted{1.0 / 3, 2.0 / 15, 2.0 / 15, 2.0 / 15, 2.0 / 15, 2.0 / 15};
  const HexantValues uniform{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  const double f1_err = std::abs(env::f1(tilted) - 1.0 / 18.0);
  const double seq_err = std::abs(env::sequential_reward(std::vector<double>{10, 20}) - 10.0);
  const double hptr_err = std::abs(env::hptr(uniform) - 1.0);

  const bool pass = mse <= 1e-4 && vanilla <= 1e-4 && clipped <= 1e-4 && gae <= 1e-10 &&
                    rec <= 1e-10 && sym <= 1e-12 && f1_err <= 1e-6 && seq_err <= 1e-12 &&
                    hptr_err <= 1e-12;
  std::ostringstream d;
  d << "grad rel err mse " << fmt(mse, 3) << ", vanilla " << fmt(vanilla, 3) << ", clipped "
    << fmt(clipped, 3) << "; GAE " << fmt(gae, 3) << "; recursion " << fmt(rec, 3)
    << "; symmetry " << fmt(sym, 3) << "; rewards " << fmt(std::max({f1_err, seq_err, hptr_err}), 3)
    << " (" << fmt(seconds_since(t0), 3) << " s)";
  std::cout << "  " << d.str() << std::endl;
  record(6, pass, d.str());
}

bool has_surrogates(const pl::Paths& paths) {
  for (BurnupStep s : kAllBurnupSteps) {
    if (!fs::exists(paths.models_dir() / (surrogate::file_stem(s) + ".json"))) return false;
  }
  return fs::exists(paths.surrogate_metrics());
}

void surrogate_quality(const pl::RunConfig& config, bool reuse) {
  std::cout << "[1] surrogate search and training" << std::endl;
  const pl::Paths paths{config.out_dir};
  const auto t0 = std::chrono::steady_clock::now();
  if (!(reuse && fs::exists(paths.dataset(BurnupStep::kYr4)))) pl::cmd_gen_data(config);
  if (!(reuse && has_surrogates(paths))) {
    try {
      pl::cmd_train_surrogate(config);
    } catch (const QualityGateError& e) {
      std::cout << "  quality gate: " << e.what() << std::endl;
    }
  }
  bool pass = true;
  std::ostringstream d;
  for (BurnupStep s : kAllBurnupSteps) {
    const auto data = load_split(paths.dataset(s));
    const auto model = surrogate::load_model(paths.models_dir(), s);
    const auto m = surrogate::evaluate(model, data.test);
    const bool ok = m.k_mae_pcm <= 100.0 && m.k_r2 >= 0.99 && m.p_r2 >= 0.99;
    pass = pass && ok;
    std::cout << "  " << burnup_tag(s) << ": test n=" << data.test.size() << " k MAE "
              << fmt(m.k_mae_pcm) << " pcm, k R2 " << fmt(m.k_r2, 6) << ", P R2 "
              << fmt(m.p_r2, 6) << (ok ? "" : "  <-- below threshold") << std::endl;
    d << burnup_tag(s) << " MAE " << fmt(m.k_mae_pcm, 3) << " pcm R2 k " << fmt(m.k_r2, 5)
      << " P " << fmt(m.p_r2, 5) << "; ";
  }
  d << "time " << fmt(seconds_since(t0), 4) << " s";
  std::cout << "  stage time " << fmt(seconds_since(t0), 4) << " s" << std::endl;
  record(1, pass, d.str());
}

rl::TrainResult train_or_load(const pl::RunConfig& config, rl::Algorithm algo, bool reuse) {
  const pl::Paths paths{config.out_dir};
  const auto name = rl::algorithm_name(algo);
  if (reuse && fs::exists(paths.final_checkpoint(algo).string() + ".json") &&
      fs::exists(paths.training_log(algo))) {
    rl::TrainResult r;
    r.model = rl::load_checkpoint(paths.final_checkpoint(algo)).model;
    r.log = rl::read_training_log(paths.training_log(algo));
    r.timesteps = r.log.empty() ? 0 : r.log.back().timesteps;
    std::cout << "  reusing " << name << " checkpoint" << std::endl;
    return r;
  }
  const auto t0 = std::chrono::steady_clock::now();
  pl::TrainRlOptions opts;
  opts.on_epoch = [&](const rl::EpochStats& e) {
    std::cout << "  " << name << " epoch " << e.epoch << " t=" << e.timesteps << " reward "
              << fmt(e.reward_mean) << " +- " << fmt(e.reward_std) << " |k-1| "
              << fmt(e.keff_dev_mean * 1e5) << " pcm HPTR " << fmt(e.hptr_mean, 5) << " ("
              << fmt(seconds_since(t0), 4) << " s)" << std::endl;
  };
  return pl::cmd_train_rl(config, algo, opts);
}

struct GreedyCheck {
  bool surrogate_ok = true;
  bool oracle_ok = true;
  std::string detail;
  std::vector<rl::EvalRow> rows;
};

GreedyCheck check_greedy(const pl::RunConfig& config, rl::Algorithm algo) {
  pl::EvalOptions eo;
  eo.algo = algo;
  eo.backing = pl::Backing::kSurrogate;
  const auto rep = pl::cmd_eval(config, eo);
  eo.backing = pl::Backing::kOracle;
  pl::cmd_eval(config, eo);
  GreedyCheck g;
  std::ostringstream d;
  for (const auto& row : rep.rows) {
    const double dk = std::abs(row.k_eff - 1.0) * 1e5;
    const double dk_oracle = std::abs(*row.oracle_k_eff - 1.0) * 1e5;
    const bool ok = dk <= kKeffPcm && row.hptr <= kHptrMax;
    g.surrogate_ok = g.surrogate_ok && ok;
    g.oracle_ok = g.oracle_ok && dk_oracle <= kOracleKeffPcm;
    std::cout << "  " << rl::algorithm_name(algo) << " year " << burnup_years(row.step)
              << " angles";
    for (int a : row.angles.angles) std::cout << ' ' << a;
    std::cout << ": k " << fmt(row.k_eff, 7) << " (" << fmt(dk, 3) << " pcm) HPTR "
              << fmt(row.hptr, 6) << "; oracle k " << fmt(*row.oracle_k_eff, 7) << " ("
              << fmt(dk_oracle, 3) << " pcm) HPTR " << fmt(*row.oracle_hptr, 6) << std::endl;
    d << "yr" << burnup_years(row.step) << " " << fmt(dk, 3) << " pcm/HPTR "
      << fmt(row.hptr, 5) << "/oracle " << fmt(dk_oracle, 3) << " pcm; ";
  }
  g.detail = d.str();
  g.rows = rep.rows;
  return g;
}

void check_epoch_log(const pl::RunConfig& config, const rl::TrainResult& ppo) {
  const pl::Paths paths{config.out_dir};
  const auto rows = rl::read_training_log(paths.training_log(rl::Algorithm::kPPO));
  bool well_formed = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = rows[i];
    well_formed = well_formed && e.epoch == static_cast<int>(i) + 1 &&
                  e.timesteps == config.ppo.epoch_timesteps * e.epoch &&
                  std::isfinite(e.reward_mean) && e.reward_std >= 0.0 &&
                  e.reward_min <= e.reward_mean && e.reward_mean <= e.reward_max;
  }
  const bool pass = config.ppo.total_timesteps == 1'200'000 && rows.size() == 40 &&
                    ppo.log.size() == 40 && well_formed;
  const std::string d = std::to_string(config.ppo.total_timesteps) + " steps -> " +
                        std::to_string(rows.size()) + " epoch rows" +
                        (well_formed ? "" : " (malformed)");
  std::cout << "[7] " << d << std::endl;
  record(7, pass, d);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  pl::RunConfig config;
  config.out_dir = "acceptance_run";
  bool reuse = false;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--out") && i + 1 < argc) {
      config.out_dir = argv[++i];
    } else if (!std::strcmp(argv[i], "--reuse")) {
      reuse = true;
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--reuse]\n";
      return 2;
    }
  }
  if (!reuse) fs::remove_all(config.out_dir);
  std::cout << "run directory " << config.out_dir << " (" << config.provenance() << ")"
            << std::endl;
  const auto start = std::chrono::steady_clock::now();

  try {
    numeric_suite();
    surrogate_quality(config, reuse);

    std::cout << "[2] PPO training on the surrogates" << std::endl;
    const auto ppo = train_or_load(config, rl::Algorithm::kPPO, reuse);
    const auto greedy = check_greedy(config, rl::Algorithm::kPPO);
    record(2, greedy.surrogate_ok && greedy.oracle_ok, greedy.detail);

    std::cout << "[4] critical angle recovery" << std::endl;
    {
      const OracleParams params = config.oracle_params();
      bool pass = true;
      std::ostringstream d;
      for (const auto& row : greedy.rows) {
        double mean = 0.0;
        for (int a : row.angles.angles) mean += a;
        mean /= kNumHexants;
        const auto truth = find_critical_angle(row.step, params);
        const bool ok = truth && std::abs(mean - *truth) <= kAngleTolDeg;
        pass = pass && ok;
        std::cout << "  year " << burnup_years(row.step) << ": mean angle " << fmt(mean, 5)
                  << " vs bisection " << (truth ? fmt(*truth, 6) : "none") << std::endl;
        d << "yr" << burnup_years(row.step) << " " << fmt(mean, 4) << " vs "
          << (truth ? fmt(*truth, 5) : "none") << "; ";
      }
      record(4, pass, d.str());
    }

    std::cout << "[5] greedy inference latency" << std::endl;
    {
      const auto lat = rl::inference_latency(ppo.model, 1000);
      const std::string d = fmt(lat.single_seconds * 1e3, 3) + " ms per call (batched " +
                            fmt(lat.batched_per_action_seconds * 1e3, 3) + " ms per action)";
      std::cout << "  " << d << std::endl;
      record(5, lat.single_seconds <= kLatencyMax, d);
    }

    check_epoch_log(config, ppo);

    std::cout << "[3] A2C at an equal budget" << std::endl;
    {
      const auto a2c = train_or_load(config, rl::Algorithm::kA2C, reuse);
      const auto g = check_greedy(config, rl::Algorithm::kA2C);
      const double rp = ppo.log.empty() ? NAN : ppo.log.back().reward_mean;
      const double ra = a2c.log.empty() ? NAN : a2c.log.back().reward_mean;
      const std::string d = "final mean episode reward ppo " + fmt(rp, 5) + " vs a2c " +
                            fmt(ra, 5) + "; a2c greedy " +
                            (g.surrogate_ok ? "meets" : "violates") + " control limits";
      std::cout << "  " << d << std::endl;
      record(3, rp >= ra, d);
    }
    pl::cmd_report(config.out_dir);
  } catch (const std::exception& e) {
    std::cout << "aborted: " << e.what() << std::endl;
  }

  std::cout << "\nacceptance summary (" << fmt(seconds_since(start), 5) << " s)\n";
  bool all = verdicts.size() == 7;
  for (int id = 1; id <= 7; ++id) {
    const Verdict* v = nullptr;
    for (const auto& x : verdicts) {
      if (x.id == id) v = &x;
    }
    if (!v) {
      std::cout << "criterion " << id << ": FAIL (not evaluated)\n";
      all = false;
      continue;
    }
    all = all && v->pass;
    std::cout << "criterion " << id << ": " << (v->pass ? "PASS" : "FAIL") << " - " << v->detail
              << "\n";
  }
  std::cout.flush();
  return all ? 0 : 1;
}
