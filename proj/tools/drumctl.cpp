#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drumrl/error.hpp"
#include "drumrl/pipeline.hpp"
#include "drumrl/util.hpp"

namespace {

using namespace drumrl;
namespace pl = drumrl::pipeline;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool sequential = false;
  int threads = 1;
};

pl::RunConfig resolve(const CommonArgs& a) {
  pl::RunConfig c = a.config.empty() ? pl::RunConfig{} : pl::RunConfig::load(a.config);
  if (a.seed) c.seed = *a.seed;
  if (!a.out.empty()) c.out_dir = a.out;
  if (a.threads > 1) c.n_threads = a.threads;
  if (a.sequential) c.n_threads = 1;
  return c;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "run config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "global seed (overrides config)");
  cmd->add_option("--out", a.out, "run directory (overrides config)");
  cmd->add_option("--threads", a.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--sequential", a.sequential, "single-threaded, bit-reproducible");
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
    if (ch == '"') ch = '\'';
  }
  return s;
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << "error: kind=" << kind << " message=\"" << one_line(message) << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  drumrl::tune_allocator();
  CLI::App app{"Control-drum RL pipeline"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string algo_name = "ppo";
  std::string backing_name = "surrogate";
  std::string checkpoint;
  std::optional<long> timesteps;

  auto* gen = app.add_subcommand("gen-data", "sample, label, split and augment datasets");
  auto* surr = app.add_subcommand("train-surrogate", "search and train the surrogates");
  auto* trl = app.add_subcommand("train-rl", "train an actor-critic agent");
  auto* ev = app.add_subcommand("eval", "greedy episode with oracle cross-check");
  auto* rep = app.add_subcommand("report", "plot data and summary from a run directory");
  for (auto* cmd : {gen, surr, trl, ev, rep}) add_common(cmd, common);

  for (auto* cmd : {trl, ev}) {
    cmd->add_option("--algo", algo_name, "ppo|a2c")->check(CLI::IsMember({"ppo", "a2c"}));
    cmd->add_option("--backing", backing_name, "surrogate|oracle")
        ->check(CLI::IsMember({"surrogate", "oracle"}));
  }
  trl->add_option("--timesteps", timesteps, "total timesteps (overrides config)")
      ->check(CLI::PositiveNumber);
  ev->add_option("--checkpoint", checkpoint, "checkpoint stem (without .bin/.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    pl::RunConfig config = resolve(common);
    const rl::Algorithm algo = rl::algorithm_from_name(algo_name);
    if (timesteps) config.algo(algo).total_timesteps = *timesteps;

    if (gen->parsed()) {
      const auto r = pl::cmd_gen_data(config);
      for (BurnupStep s : kAllBurnupSteps) {
        const auto& sp = r.splits[index_of(s)];
        std::cout << burnup_tag(s) << ": train " << sp.train.size() << " validation "
                  << sp.validation.size() << " test " << sp.test.size() << "\n";
      }
    } else if (surr->parsed()) {
      const auto r = pl::cmd_train_surrogate(config);
      for (const auto& s : r.steps) {
        std::cout << burnup_tag(s.step) << ": " << s.architecture.hidden_layers << "x"
                  << s.architecture.nodes_per_layer << " lr "
                  << format_double(s.architecture.learning_rate) << " k MAE "
                  << format_double(s.test_metrics.k_mae_pcm) << " pcm k R2 "
                  << format_double(s.test_metrics.k_r2) << " P R2 "
                  << format_double(s.test_metrics.p_r2) << "\n";
      }
    } else if (trl->parsed()) {
      pl::TrainRlOptions opts;
      opts.backing = pl::backing_from_name(backing_name);
      opts.on_epoch = [](const rl::EpochStats& e) {
        std::cout << "epoch " << e.epoch << " timesteps " << e.timesteps << " reward "
                  << format_double(e.reward_mean) << " |k-1| "
                  << format_double(e.keff_dev_mean * 1e5) << " pcm HPTR "
                  << format_double(e.hptr_mean) << std::endl;
      };
      const auto r = pl::cmd_train_rl(config, algo, opts);
      std::cout << "trained " << r.timesteps << " timesteps, " << r.log.size() << " epochs\n";
    } else if (ev->parsed()) {
      pl::EvalOptions opts;
      opts.checkpoint = checkpoint;
      opts.backing = pl::backing_from_name(backing_name);
      opts.algo = algo;
      const auto r = pl::cmd_eval(config, opts);
      for (const auto& row : r.rows) {
        std::cout << "year " << burnup_years(row.step) << ":";
        for (int a : row.angles.angles) std::cout << ' ' << a;
        std::cout << " keff " << format_double(row.k_eff) << " HPTR " << format_double(row.hptr);
        if (row.oracle_k_eff) {
          std::cout << " oracle keff " << format_double(*row.oracle_k_eff) << " HPTR "
                    << format_double(*row.oracle_hptr);
        }
        std::cout << "\n";
      }
    } else if (rep->parsed()) {
      const auto r = pl::cmd_report(config.out_dir);
      std::cout << r.summary;
    }
  } catch (const QualityGateError& e) {
    return fail("quality_gate", e.what(), 3);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), 1);
  } catch (const LoadError& e) {
    return fail("load", e.what(), 1);
  } catch (const IoError& e) {
    return fail("io", e.what(), 1);
  } catch (const TrainingError& e) {
    return fail("training", e.what(), 1);
  } catch (const DomainError& e) {
    return fail("domain", e.what(), 1);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
