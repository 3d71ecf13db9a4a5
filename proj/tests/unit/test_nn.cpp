#include <doctest.h>

#include <cmath>
#include <random>

#include "drumrl/error.hpp"
#include "drumrl/nn.hpp"
#include "numeric_checks.hpp"
#include "test_support.hpp"

using namespace drumrl;
using nn::Activation;
using nn::Matrix;

TEST_CASE("init is deterministic with zero biases") {
  const std::vector<int> sizes{6, 64, 64, 7};
  const nn::Mlp a = nn::Mlp::init(sizes, Activation::kRelu, 5);
  CHECK(a == nn::Mlp::init(sizes, Activation::kRelu, 5));
  CHECK_FALSE(a == nn::Mlp::init(sizes, Activation::kRelu, 6));
  CHECK(a.layer_sizes() == sizes);
  CHECK(a.layers().size() == 3);
  for (const auto& l : a.layers()) CHECK(l.bias.isZero());
  // He bound sqrt(6 / fan_in) and Xavier bound sqrt(6 / (fan_in + fan_out)).
  CHECK(a.layers()[1].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 64));
  const nn::Mlp t = nn::Mlp::init(sizes, Activation::kTanh, 5);
  CHECK(t.layers()[1].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 128));
  CHECK(t.hidden_activation() == Activation::kTanh);
  CHECK(t.output_activation() == Activation::kIdentity);

  CHECK_THROWS_AS(nn::Mlp::init(std::vector<int>{}, Activation::kTanh, 1), DomainError);
  CHECK_THROWS_AS(nn::Mlp::init(std::vector<int>{4}, Activation::kTanh, 1), DomainError);
  CHECK_THROWS_AS(nn::Mlp::init(std::vector<int>{4, 0, 2}, Activation::kTanh, 1), DomainError);
}

TEST_CASE("constructor rejects broken shape chains") {
  nn::LayerList layers(2);
  layers[0] = {Matrix::Zero(3, 2), nn::Vector::Zero(3)};
  layers[1] = {Matrix::Zero(1, 4), nn::Vector::Zero(1)};
  CHECK_THROWS_AS(nn::Mlp(layers, Activation::kTanh), DomainError);
  layers[1] = {Matrix::Zero(1, 3), nn::Vector::Zero(2)};
  CHECK_THROWS_AS(nn::Mlp(layers, Activation::kTanh), DomainError);
  CHECK_THROWS_AS(nn::Mlp(nn::LayerList{}, Activation::kTanh), DomainError);
}

TEST_CASE("forward basics") {
  nn::LayerList zero(1);
  zero[0] = {Matrix::Zero(3, 4), nn::Vector::Zero(3)};
  const Matrix x = Matrix::Random(4, 5);
  CHECK(nn::Mlp(zero, Activation::kTanh).forward(x).isZero());

  nn::LayerList id(1);
  id[0] = {Matrix::Identity(4, 4), nn::Vector::Zero(4)};
  CHECK(nn::Mlp(id, Activation::kRelu).forward(x) == x);

  const nn::Mlp net = nn::Mlp::init(std::vector<int>{4, 8, 8, 3}, Activation::kTanh, 2);
  const Matrix batch = net.forward(x);
  for (int c = 0; c < 5; ++c) {
    const Matrix one = net.forward(x.col(c));
    CHECK((one - batch.col(c)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  CHECK(net.forward(x) == batch);
  CHECK_THROWS_AS(net.forward(Matrix::Zero(3, 2)), DomainError);
}

TEST_CASE("activations") {
  nn::LayerList layers(2);
  layers[0] = {Matrix::Identity(2, 2), nn::Vector::Zero(2)};
  layers[1] = {Matrix::Identity(2, 2), nn::Vector::Zero(2)};
  Matrix x(2, 1);
  x << -1.0, 2.0;
  Matrix relu(2, 1), th(2, 1);
  relu << 0.0, 2.0;
  th << std::tanh(-1.0), std::tanh(2.0);
  CHECK(nn::Mlp(layers, Activation::kRelu).forward(x) == relu);
  CHECK(nn::Mlp(layers, Activation::kTanh).forward(x) == th);
  CHECK(nn::activation_from_name("tanh") == Activation::kTanh);
  CHECK(nn::activation_name(Activation::kRelu) == "relu");
  CHECK_THROWS_AS(nn::activation_from_name("sigmoid"), DomainError);
}

TEST_CASE("backward basics") {
  const nn::Mlp net = nn::Mlp::init(std::vector<int>{3, 5, 2}, Activation::kTanh, 9);
  const Matrix x = Matrix::Random(3, 4);
  nn::ForwardCache cache;
  const Matrix y = net.forward(x, cache);
  const auto zero = net.backward(cache, Matrix::Zero(2, 4));
  CHECK(nn::global_norm(zero) == 0.0);
  CHECK_THROWS_AS(net.backward(cache, Matrix::Zero(3, 4)), DomainError);
  CHECK_THROWS_AS(net.backward(nn::ForwardCache{}, Matrix::Zero(2, 4)), DomainError);

  // Gradient of a sum over the batch is the sum of per-column gradients.
  const Matrix g = Matrix::Random(2, 4);
  const auto total = net.backward(cache, g);
  auto summed = nn::zeros_like(total);
  for (int c = 0; c < 4; ++c) {
    nn::ForwardCache one;
    net.forward(x.col(c), one);
    nn::add_scaled(summed, net.backward(one, g.col(c)), 1.0);
  }
  nn::add_scaled(summed, total, -1.0);
  CHECK(nn::global_norm(summed) <= 1e-12);
}

TEST_CASE("mse gradient matches finite differences on 100 random nets") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) worst = std::max(worst, checks::mse_gradient_error(s));
  CHECK(worst <= 1e-4);
}

TEST_CASE("mse loss") {
  Matrix p(2, 2), t(2, 2), g;
  p << 1, 2, 3, 4;
  t << 1, 0, 3, 0;
  CHECK(nn::mse_loss(p, t, &g) == doctest::Approx((4.0 + 16.0) / 4.0));
  CHECK(g(0, 1) == doctest::Approx(2.0 * 2.0 / 4.0));
  CHECK(g(0, 0) == 0.0);
  CHECK_THROWS_AS(nn::mse_loss(p, Matrix::Zero(2, 3)), DomainError);
}

TEST_CASE("parameter count") {
  CHECK(nn::parameter_count(std::vector<int>{6, 64, 64, 7}) == 6 * 64 + 64 + 64 * 64 + 64 + 64 * 7 + 7);
  const nn::Mlp net = nn::Mlp::init(std::vector<int>{6, 10, 7}, Activation::kRelu, 1);
  CHECK(net.parameter_count() == 6 * 10 + 10 + 10 * 7 + 7);
  // Table-1-class surrogates, counting the output layer among the dense
  // layers (5, 5, 7): about 70k, 120k and 190k parameters.
  auto surrogate = [](int dense_layers, int nodes) {
    std::vector<int> sizes{6};
    for (int i = 0; i < dense_layers - 1; ++i) sizes.push_back(nodes);
    sizes.push_back(7);
    return static_cast<double>(nn::parameter_count(sizes));
  };
  CHECK(surrogate(5, 150) == doctest::Approx(70000).epsilon(0.05));
  CHECK(surrogate(5, 200) == doctest::Approx(120000).epsilon(0.05));
  CHECK(surrogate(7, 191) == doctest::Approx(190000).epsilon(0.05));
}

TEST_CASE("gradient clipping") {
  nn::LayerList g(1);
  g[0] = {Matrix::Zero(1, 2), nn::Vector::Zero(0)};
  g[0].weights << 6.0, 8.0;
  CHECK(nn::clip_grad_norm(g, 5.0) == doctest::Approx(10.0));
  CHECK(g[0].weights(0, 0) == doctest::Approx(3.0));
  CHECK(g[0].weights(0, 1) == doctest::Approx(4.0));
  g[0].weights << 1.8, 2.4;
  CHECK(nn::clip_grad_norm(g, 5.0) == doctest::Approx(3.0));
  CHECK(g[0].weights(0, 0) == 1.8);
  CHECK_THROWS_AS(nn::clip_grad_norm(g, 0.0), DomainError);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 50.0);
  for (int n = 0; n < 200; ++n) {
    const nn::Mlp net = nn::Mlp::init(std::vector<int>{3, 4, 2}, Activation::kTanh, n);
    auto grads = nn::zeros_like(net.layers());
    for (auto& l : grads) {
      for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = normal(rng);
    }
    nn::clip_grad_norm(grads, 5.0);
    CHECK(nn::global_norm(grads) <= 5.0 + 1e-12);
  }
}

TEST_CASE("adam") {
  nn::LayerList one(1);
  one[0] = {Matrix::Constant(1, 1, 0.5), nn::Vector::Zero(1)};
  nn::Mlp model(one, Activation::kIdentity);
  nn::Adam opt(model, {.learning_rate = 0.001});
  CHECK(opt.step_count() == 0);

  nn::LayerList g = nn::zeros_like(model.layers());
  g[0].weights(0, 0) = 1.0;
  opt.step(model, g);
  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  CHECK(model.layers()[0].weights(0, 0) == doctest::Approx(0.5 - 0.001 * 1.0 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(opt.first_moment()[0].weights(0, 0) == doctest::Approx(0.1));
  CHECK(opt.second_moment()[0].weights(0, 0) == doctest::Approx(0.001));
  CHECK(opt.step_count() == 1);

  // A zero-gradient step decays the moments by beta1 and beta2.
  const nn::Mlp before = model;
  opt.step(model, nn::zeros_like(model.layers()));
  CHECK(opt.first_moment()[0].weights(0, 0) == doctest::Approx(0.09));
  CHECK(opt.second_moment()[0].weights(0, 0) == doctest::Approx(0.000999));

  // Fresh optimizer with zero gradients leaves parameters unchanged.
  nn::Mlp fresh = nn::Mlp::init(std::vector<int>{3, 4, 2}, Activation::kTanh, 3);
  const nn::Mlp copy = fresh;
  nn::Adam opt2(fresh, {});
  opt2.step(fresh, nn::zeros_like(fresh.layers()));
  CHECK(fresh == copy);

  auto bad = nn::zeros_like(fresh.layers());
  bad[0].weights(0, 0) = std::nan("");
  CHECK_THROWS_AS(opt2.step(fresh, bad), TrainingError);
  CHECK(fresh == copy);
  auto wrong = nn::zeros_like(model.layers());
  CHECK_THROWS_AS(opt2.step(fresh, wrong), DomainError);
}

TEST_CASE("model file round-trip is bit exact") {
  const auto dir = test::temp_dir("nn_model");
  const nn::Mlp net = nn::Mlp::init(std::vector<int>{6, 17, 9, 7}, Activation::kRelu, 12);
  nn::save_model(dir / "m.bin", net);
  const nn::Mlp back = nn::load_model(dir / "m.bin");
  CHECK(back == net);
  const Matrix x = Matrix::Random(6, 3);
  CHECK(back.forward(x) == net.forward(x));

  const std::string bytes = test::read_file(dir / "m.bin");
  CHECK(bytes.substr(0, 8) == std::string("DRUMMLP\0", 8));

  std::string corrupt = bytes;
  corrupt[0] = 'X';
  test::write_file(dir / "bad_magic.bin", corrupt);
  CHECK_THROWS_AS(nn::load_model(dir / "bad_magic.bin"), LoadError);

  std::string version = bytes;
  version[8] = 9;
  test::write_file(dir / "bad_version.bin", version);
  CHECK_THROWS_AS(nn::load_model(dir / "bad_version.bin"), LoadError);

  test::write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(nn::load_model(dir / "short.bin"), LoadError);
  test::write_file(dir / "long.bin", bytes + "x");
  CHECK_THROWS_AS(nn::load_model(dir / "long.bin"), LoadError);
  CHECK_THROWS_AS(nn::load_model(dir / "none.bin"), LoadError);

  nlohmann::json meta = {{"a", 1}, {"b", "two"}};
  nn::save_metadata(dir / "m.json", meta);
  CHECK(nn::load_metadata(dir / "m.json") == meta);
  test::write_file(dir / "broken.json", "{");
  CHECK_THROWS_AS(nn::load_metadata(dir / "broken.json"), LoadError);
}
