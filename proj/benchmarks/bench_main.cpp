#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "drumrl/env.hpp"
#include "drumrl/rl.hpp"
#include "drumrl/surrogate.hpp"

namespace {

using namespace drumrl;

const OracleParams& params() {
  static const OracleParams p = calibrate(kDefaultCriticalAngles);
  return p;
}

DrumConfig random_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> angle(0, kMaxAngle);
  DrumConfig c;
  for (int& a : c.angles) a = angle(rng);
  return c;
}

void BM_OracleEvaluate(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto c = random_config(rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(c, BurnupStep::kYr2, params()));
}
BENCHMARK(BM_OracleEvaluate);

void BM_MlpForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const std::vector<int> sizes{6, 150, 150, 150, 150, 150, 7};
  const auto net = nn::Mlp::init(sizes, nn::Activation::kTanh, 1);
  const nn::Matrix x = nn::Matrix::Random(6, batch);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(64)->Arg(1000);

void BM_SurrogatePredict(benchmark::State& state) {
  surrogate::SurrogateConfig cfg;
  const surrogate::Surrogate model(nn::Mlp::init(cfg.layer_sizes(), nn::Activation::kTanh, 1),
                                   BurnupStep::kYr0);
  std::mt19937_64 rng(2);
  const auto c = random_config(rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(c));
}
BENCHMARK(BM_SurrogatePredict);

void BM_GreedyAction(benchmark::State& state) {
  const auto model = rl::ActorCritic::init({}, 1);
  env::ReactorEnv e(std::make_shared<OracleModel>(params()), 3);
  const env::Observation obs[1] = {e.reset()};
  const auto x = rl::observation_matrix(obs);
  for (auto _ : state) benchmark::DoNotOptimize(rl::greedy_action(model.forward(x), 0));
}
BENCHMARK(BM_GreedyAction);

void BM_EnvStep(benchmark::State& state) {
  env::ReactorEnv e(std::make_shared<OracleModel>(params()), 4);
  std::mt19937_64 rng(5);
  const auto c = random_config(rng);
  for (auto _ : state) {
    if (e.done()) e.reset();
    benchmark::DoNotOptimize(e.step(c));
  }
}
BENCHMARK(BM_EnvStep);

void BM_PpoMinibatchGradient(benchmark::State& state) {
  const auto model = rl::ActorCritic::init({}, 1);
  env::ReactorEnv e(std::make_shared<OracleModel>(params()), 6);
  std::mt19937_64 rng(7);
  const int n = 600;
  std::vector<env::Observation> obs;
  for (int i = 0; i < n; ++i) obs.push_back(e.reset());
  rl::LossBatch b;
  b.observations = rl::observation_matrix(obs);
  const auto out = model.forward(b.observations);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const auto a = rl::sample_action(out, i, rng);
    b.actions.push_back(a);
    b.old_log_probs.push_back(rl::joint_log_prob(out, i, a) + 0.1 * normal(rng));
    b.advantages.push_back(normal(rng));
    b.returns.push_back(normal(rng));
  }
  const rl::LossCoefficients coef{0.75, 0.01, 0.4, rl::PolicyObjective::kClipped};
  for (auto _ : state) {
    nn::LayerList grads;
    benchmark::DoNotOptimize(rl::actor_critic_loss(model, b, coef, &grads));
  }
}
BENCHMARK(BM_PpoMinibatchGradient)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
