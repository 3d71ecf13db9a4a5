#include "drumrl/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "drumrl/error.hpp"
#include "drumrl/util.hpp"

namespace drumrl::nn {
namespace {

constexpr char kMagic[8] = {'D', 'R', 'U', 'M', 'M', 'L', 'P', '\0'};

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kTanh: z = z.array().tanh(); break;
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
  }
}

// Multiplies `delta` in place by f'(z), expressed through the activation
// output a = f(z).
void apply_activation_grad(Activation act, const Matrix& a, Matrix& delta) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kTanh: delta.array() *= 1.0 - a.array().square(); break;
    case Activation::kRelu:
      delta = (a.array() > 0.0).select(delta, 0.0);
      break;
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& source) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw LoadError(source + ": truncated model file");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void write_name(std::ostream& out, std::string_view name) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string read_name(std::istream& in, const std::string& source) {
  const auto n = read_le<std::uint32_t>(in, source);
  if (n > 64) throw LoadError(source + ": corrupt activation name");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw LoadError(source + ": truncated model file");
  return s;
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  throw DomainError("invalid activation");
}

Activation activation_from_name(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

Mlp::Mlp(LayerList layers, Activation hidden, Activation output)
    : layers_(std::move(layers)), hidden_(hidden), output_(output) {
  if (layers_.empty()) throw DomainError("Mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weights.rows() < 1 || layer.weights.cols() < 1) {
      throw DomainError("Mlp layer with zero width");
    }
    if (layer.bias.size() != layer.weights.rows()) {
      throw DomainError("Mlp bias size does not match weight rows");
    }
    if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows()) {
      throw DomainError("Mlp layer shapes do not chain");
    }
  }
}

Mlp Mlp::init(std::span<const int> layer_sizes, Activation hidden,
              std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw DomainError("Mlp needs >= 2 layer sizes");
  for (int n : layer_sizes) {
    if (n < 1) throw DomainError("Mlp layer sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  LayerList layers;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double limit = hidden == Activation::kRelu
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = dist(rng);
    }
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers), hidden);
}

Matrix Mlp::forward(const Matrix& inputs) const {
  if (inputs.rows() != input_size()) {
    throw DomainError("Mlp input width " + std::to_string(inputs.rows()) +
                      " != " + std::to_string(input_size()));
  }
  Matrix a = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    apply_activation(l + 1 == layers_.size() ? output_ : hidden_, z);
    a = std::move(z);
  }
  return a;
}

Matrix Mlp::forward(const Matrix& inputs, ForwardCache& cache) const {
  if (inputs.rows() != input_size()) {
    throw DomainError("Mlp input width " + std::to_string(inputs.rows()) +
                      " != " + std::to_string(input_size()));
  }
  cache.activations.resize(layers_.size() + 1);
  cache.activations[0] = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix& z = cache.activations[l + 1];
    z.noalias() = layers_[l].weights * cache.activations[l];
    z.colwise() += layers_[l].bias;
    apply_activation(l + 1 == layers_.size() ? output_ : hidden_, z);
  }
  return cache.activations.back();
}

LayerList Mlp::backward(const ForwardCache& cache, const Matrix& output_grad) const {
  if (cache.activations.size() != layers_.size() + 1) {
    throw DomainError("backward: cache does not match network depth");
  }
  const Matrix& out = cache.activations.back();
  if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
    throw DomainError("backward: output gradient shape mismatch");
  }
  LayerList grads(layers_.size());
  Matrix delta = output_grad;
  apply_activation_grad(output_, out, delta);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads[l].weights.noalias() = delta * cache.activations[l].transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Matrix prev = layers_[l].weights.transpose() * delta;
      apply_activation_grad(hidden_, cache.activations[l], prev);
      delta = std::move(prev);
    }
  }
  return grads;
}

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(static_cast<int>(layers_.front().weights.cols()));
  for (const auto& l : layers_) sizes.push_back(static_cast<int>(l.weights.rows()));
  return sizes;
}

int Mlp::input_size() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weights.cols());
}

int Mlp::output_size() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weights.rows());
}

std::size_t Mlp::parameter_count() const {
  const auto sizes = layer_sizes();
  return nn::parameter_count(sizes);
}

bool Mlp::all_finite() const { return nn::all_finite(layers_); }

bool Mlp::operator==(const Mlp& other) const {
  if (hidden_ != other.hidden_ || output_ != other.output_ ||
      layers_.size() != other.layers_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
        a.weights != b.weights || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

std::size_t parameter_count(std::span<const int> layer_sizes) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    total += static_cast<std::size_t>(layer_sizes[i]) * layer_sizes[i + 1] +
             layer_sizes[i + 1];
  }
  return total;
}

LayerList zeros_like(const LayerList& layers) {
  LayerList out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()),
                   Vector::Zero(l.bias.size())});
  }
  return out;
}

void add_scaled(LayerList& into, const LayerList& other, double scale) {
  if (into.size() != other.size()) throw DomainError("add_scaled: layer count mismatch");
  for (std::size_t l = 0; l < into.size(); ++l) {
    into[l].weights += scale * other[l].weights;
    into[l].bias += scale * other[l].bias;
  }
}

double global_norm(const LayerList& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.weights.squaredNorm() + g.bias.squaredNorm();
  return std::sqrt(sq);
}

bool all_finite(const LayerList& grads) {
  for (const auto& g : grads) {
    if (!g.weights.allFinite() || !g.bias.allFinite()) return false;
  }
  return true;
}

double clip_grad_norm(LayerList& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw DomainError("clip_grad_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      g.weights *= scale;
      g.bias *= scale;
    }
  }
  return norm;
}

double mse_loss(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DomainError("mse_loss: shape mismatch");
  }
  const double n = static_cast<double>(pred.size());
  Matrix diff = pred - target;
  if (grad) *grad = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

Adam::Adam(const Mlp& model, AdamOptions options)
    : options_(options), m_(zeros_like(model.layers())), v_(zeros_like(model.layers())) {}

void Adam::step(Mlp& model, const LayerList& grads) {
  auto& params = model.layers();
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw DomainError("Adam::step: shape mismatch");
  }
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (grads[l].weights.rows() != params[l].weights.rows() ||
        grads[l].weights.cols() != params[l].weights.cols() ||
        grads[l].bias.size() != params[l].bias.size()) {
      throw DomainError("Adam::step: gradient shape mismatch");
    }
  }
  if (!all_finite(grads)) throw TrainingError("non-finite gradient in Adam step");

  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.learning_rate;
  const double eps = options_.epsilon;
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weights, m_[l].weights, v_[l].weights, grads[l].weights);
    update(params[l].bias, m_[l].bias, v_[l].bias, grads[l].bias);
  }
}

void save_model(const std::filesystem::path& path, const Mlp& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kModelFormatVersion);
  const auto sizes = model.layer_sizes();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  write_name(out, activation_name(model.hidden_activation()));
  write_name(out, activation_name(model.output_activation()));
  for (const auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        write_le<double>(out, layer.weights(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) write_le<double>(out, layer.bias(r));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Mlp load_model(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(source + ": cannot open model file");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError(source + ": not a drumrl model file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in, source);
  if (version != kModelFormatVersion) {
    throw LoadError(source + ": unsupported model format version " +
                    std::to_string(version));
  }
  const auto n_sizes = read_le<std::uint32_t>(in, source);
  if (n_sizes < 2 || n_sizes > 64) throw LoadError(source + ": corrupt layer count");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) {
    const auto v = read_le<std::uint32_t>(in, source);
    if (v < 1 || v > (1u << 20)) throw LoadError(source + ": corrupt layer size");
    s = static_cast<int>(v);
  }
  Activation hidden;
  Activation output;
  try {
    hidden = activation_from_name(read_name(in, source));
    output = activation_from_name(read_name(in, source));
  } catch (const DomainError& e) {
    throw LoadError(source + ": " + e.what());
  }
  LayerList layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer layer{Matrix(sizes[l + 1], sizes[l]), Vector(sizes[l + 1])};
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = read_le<double>(in, source);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = read_le<double>(in, source);
    layers.push_back(std::move(layer));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw LoadError(source + ": trailing bytes after parameters");
  }
  Mlp model(std::move(layers), hidden, output);
  if (!model.all_finite()) throw LoadError(source + ": non-finite parameters");
  return model;
}

void save_metadata(const std::filesystem::path& path, const nlohmann::json& meta) {
  write_text_file(path, meta.dump(2) + "\n");
}

nlohmann::json load_metadata(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw LoadError(e.what());
  }
}

}  // namespace drumrl::nn
