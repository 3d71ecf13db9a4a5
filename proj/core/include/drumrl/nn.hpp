#pragma once

// Small dense feed-forward networks with exact reverse-mode gradients.
//
// Batches are column-major: each column of an input matrix is one sample,
// so a batch of B inputs for a network with input width n is an n x B matrix.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace drumrl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kIdentity, kTanh, kRelu };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

// Parameters and gradients share this layout.
using LayerList = std::vector<Layer>;

struct ForwardCache {
  // activations[0] is the input; activations[l + 1] is the output of layer l.
  std::vector<Matrix> activations;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(LayerList layers, Activation hidden,
      Activation output = Activation::kIdentity);

  // Fan-in scaled uniform init (Xavier for tanh, He for relu), zero biases.
  static Mlp init(std::span<const int> layer_sizes, Activation hidden,
                  std::uint64_t seed);

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, ForwardCache& cache) const;

  // Gradient of a scalar loss given dLoss/dOutput (same shape as the output
  // of the forward pass recorded in `cache`).
  LayerList backward(const ForwardCache& cache, const Matrix& output_grad) const;

  std::vector<int> layer_sizes() const;
  int input_size() const;
  int output_size() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  const LayerList& layers() const { return layers_; }
  LayerList& layers() { return layers_; }

  bool operator==(const Mlp& other) const;

 private:
  LayerList layers_;
  Activation hidden_ = Activation::kTanh;
  Activation output_ = Activation::kIdentity;
};

// Sum over layers of n_i * n_{i+1} + n_{i+1}.
std::size_t parameter_count(std::span<const int> layer_sizes);

LayerList zeros_like(const LayerList& layers);
void add_scaled(LayerList& into, const LayerList& other, double scale);
double global_norm(const LayerList& grads);
bool all_finite(const LayerList& grads);

// Rescales grads in place when their global L2 norm exceeds max_norm.
// Returns the norm before clipping.
double clip_grad_norm(LayerList& grads, double max_norm);

// Mean over all elements of (pred - target)^2. When `grad` is non-null it
// receives dLoss/dPred.
double mse_loss(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& model, AdamOptions options);

  // Throws TrainingError (leaving the model untouched) on non-finite grads.
  void step(Mlp& model, const LayerList& grads);

  const LayerList& first_moment() const { return m_; }
  const LayerList& second_moment() const { return v_; }
  long step_count() const { return t_; }
  AdamOptions& options() { return options_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  LayerList m_;
  LayerList v_;
  long t_ = 0;
};

// Binary model container:
//   magic "DRUMMLP\0", u32 format version, u32 layer count, u32 sizes[...],
//   u32 name length + hidden activation name, same for output activation,
//   then per layer the row-major weights followed by the bias, all as
//   little-endian IEEE-754 float64.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const std::filesystem::path& path, const Mlp& model);
Mlp load_model(const std::filesystem::path& path);

// Plain JSON sidecar written next to a model file.
void save_metadata(const std::filesystem::path& path, const nlohmann::json& meta);
nlohmann::json load_metadata(const std::filesystem::path& path);

}  // namespace drumrl::nn
