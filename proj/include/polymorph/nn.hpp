#ifndef POLYMORPH_NN_HPP_
#define POLYMORPH_NN_HPP_

// Minimal reverse-mode multilayer perceptron over 64-bit reals.
//
// Batches are row-major in the logical sense: an input batch is a
// (batch x input_dim) matrix, one sample per row. Weights are stored flat in
// row-major (out x in) order inside ParamTensor so checkpoints are layout
// independent of Eigen's storage order.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polymorph/errors.hpp"

namespace polymorph {

using Rng = std::mt19937_64;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> s)
      : name(std::move(n)), shape(std::move(s)) {
    const std::size_t count = element_count(shape);
    values.assign(count, 0.0);
    grad.assign(count, 0.0);
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  bool consistent() const {
    return !shape.empty() && values.size() == element_count(shape) &&
           grad.size() == values.size();
  }
};

enum class Activation { kTanh, kRelu, kIdentity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

// Topology description: input -> hidden... -> output.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kIdentity;
};

struct DenseLayer {
  ParamTensor weight;  // shape {out, in}
  ParamTensor bias;    // shape {out}
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weight.shape[1]; }
  std::size_t out_dim() const { return weight.shape[0]; }

  Eigen::Map<const RowMajorMatrix> W() const {
    return {weight.values.data(), static_cast<Eigen::Index>(out_dim()),
            static_cast<Eigen::Index>(in_dim())};
  }
  Eigen::Map<RowMajorMatrix> W() {
    return {weight.values.data(), static_cast<Eigen::Index>(out_dim()),
            static_cast<Eigen::Index>(in_dim())};
  }
  Eigen::Map<const Eigen::RowVectorXd> b() const {
    return {bias.values.data(), static_cast<Eigen::Index>(out_dim())};
  }
};

namespace detail {

inline void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::kTanh: z = z.array().tanh(); break;
    case Activation::kRelu: z = z.array().max(0.0); break;
    case Activation::kIdentity: break;
  }
}

// Derivative expressed through the activation output y.
inline void scale_by_activation_derivative(Activation a, const Matrix& y,
                                           Matrix& g) {
  switch (a) {
    case Activation::kTanh:
      g.array() *= (1.0 - y.array().square());
      break;
    case Activation::kRelu:
      g.array() *= (y.array() > 0.0).cast<double>();
      break;
    case Activation::kIdentity: break;
  }
}

}  // namespace detail

class Mlp {
 public:
  Mlp() = default;

  // Builds the net and draws weights uniformly in +-1/sqrt(fan_in); biases 0.
  Mlp(const MlpSpec& spec, Rng& rng, std::string_view prefix = "mlp") {
    if (spec.input_dim == 0 || spec.output_dim == 0) {
      throw ShapeError("mlp dimensions must be positive");
    }
    std::vector<std::size_t> dims;
    dims.push_back(spec.input_dim);
    for (std::size_t h : spec.hidden) {
      if (h == 0) throw ShapeError("hidden layer width must be positive");
      dims.push_back(h);
    }
    dims.push_back(spec.output_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const bool last = l + 2 == dims.size();
      DenseLayer layer;
      const std::string base = std::string(prefix) + ".l" + std::to_string(l);
      layer.weight = ParamTensor(base + ".weight", {dims[l + 1], dims[l]});
      layer.bias = ParamTensor(base + ".bias", {dims[l + 1]});
      layer.activation = last ? spec.output_activation : spec.hidden_activation;
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& w : layer.weight.values) w = dist(rng);
      layers_.push_back(std::move(layer));
    }
  }

  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  MlpSpec spec() const {
    MlpSpec s;
    s.input_dim = input_dim();
    s.output_dim = output_dim();
    s.hidden.clear();
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
      s.hidden.push_back(layers_[l].out_dim());
    }
    s.hidden_activation =
        layers_.size() > 1 ? layers_.front().activation : Activation::kTanh;
    s.output_activation = layers_.back().activation;
    return s;
  }

  // Evaluation without recording; safe for concurrent readers.
  Matrix predict(const Matrix& x) const {
    check_input(x);
    Matrix h = x;
    for (const DenseLayer& layer : layers_) {
      Matrix z = h * layer.W().transpose();
      z.rowwise() += layer.b();
      detail::apply_activation(layer.activation, z);
      h = std::move(z);
    }
    return h;
  }

  std::vector<double> predict(std::span<const double> x) const {
    Matrix out = predict(as_row(x));
    return {out.data(), out.data() + out.size()};
  }

  // Evaluation that records the tape consumed by backward().
  Matrix forward(const Matrix& x) {
    check_input(x);
    tape_.clear();
    tape_.reserve(layers_.size() + 1);
    tape_.push_back(x);
    for (const DenseLayer& layer : layers_) {
      Matrix z = tape_.back() * layer.W().transpose();
      z.rowwise() += layer.b();
      detail::apply_activation(layer.activation, z);
      tape_.push_back(std::move(z));
    }
    return tape_.back();
  }

  std::vector<double> forward(std::span<const double> x) {
    Matrix out = forward(as_row(x));
    return {out.data(), out.data() + out.size()};
  }

  // Accumulates d(loss)/d(theta) into every ParamTensor::grad and returns
  // d(loss)/d(input). Consumes the tape.
  Matrix backward(const Matrix& output_grad) {
    if (tape_.empty()) {
      throw StateError("backward called without a recorded forward pass");
    }
    if (output_grad.rows() != tape_.back().rows() ||
        output_grad.cols() != static_cast<Eigen::Index>(output_dim())) {
      throw ShapeError("output gradient shape does not match forward output");
    }
    Matrix g = output_grad;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      DenseLayer& layer = layers_[l];
      detail::scale_by_activation_derivative(layer.activation, tape_[l + 1], g);
      Eigen::Map<RowMajorMatrix> dW(layer.weight.grad.data(),
                                    static_cast<Eigen::Index>(layer.out_dim()),
                                    static_cast<Eigen::Index>(layer.in_dim()));
      dW.noalias() += g.transpose() * tape_[l];
      Eigen::Map<Eigen::RowVectorXd> db(
          layer.bias.grad.data(), static_cast<Eigen::Index>(layer.out_dim()));
      db += g.colwise().sum();
      Matrix next = g * layer.W();
      g = std::move(next);
    }
    tape_.clear();
    return g;
  }

  void backward(std::span<const double> output_grad) {
    backward(as_row(output_grad));
  }

  bool has_tape() const { return !tape_.empty(); }

  std::vector<ParamTensor*> parameters() {
    std::vector<ParamTensor*> out;
    for (DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<const ParamTensor*> parameters() const {
    std::vector<const ParamTensor*> out;
    for (const DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void zero_grad() {
    for (ParamTensor* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const ParamTensor* p : parameters()) n += p->size();
    return n;
  }

  // Flat copy of all parameter values, in parameters() order.
  std::vector<double> flat_values() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const ParamTensor* p : parameters()) {
      out.insert(out.end(), p->values.begin(), p->values.end());
    }
    return out;
  }

 private:
  static Matrix as_row(std::span<const double> x) {
    Matrix m(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m(0, static_cast<Eigen::Index>(i)) = x[i];
    }
    return m;
  }

  void check_input(const Matrix& x) const {
    if (layers_.empty()) throw StateError("mlp has no layers");
    if (x.cols() != static_cast<Eigen::Index>(input_dim())) {
      throw ShapeError("mlp input has " + std::to_string(x.cols()) +
                       " features, expected " + std::to_string(input_dim()));
    }
    if (!x.allFinite()) throw NumericError("mlp input is not finite");
  }

  void validate() const {
    if (layers_.empty()) throw ShapeError("mlp needs at least one layer");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DenseLayer& layer = layers_[l];
      if (layer.weight.shape.size() != 2 || layer.bias.shape.size() != 1 ||
          !layer.weight.consistent() || !layer.bias.consistent() ||
          layer.bias.shape[0] != layer.weight.shape[0]) {
        throw ShapeError("malformed layer " + std::to_string(l));
      }
      if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim()) {
        throw ShapeError("layer " + std::to_string(l) +
                         " does not chain with its predecessor");
      }
    }
  }

  std::vector<DenseLayer> layers_;
  std::vector<Matrix> tape_;
};

// ---------------------------------------------------------------------------
// Optimizer

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Per-parameter first/second moments, indexed like the parameter list.
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;

  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::kAdam;
    s.learning_rate = lr;
    return s;
  }
  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::kSgd;
    s.learning_rate = lr;
    return s;
  }
};

// Applies one update, zeroes the gradients and bumps step_count. A non-finite
// gradient aborts before anything is modified.
inline void optimizer_step(std::span<ParamTensor* const> params,
                           OptimizerState& opt) {
  if (!(opt.learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
  for (const ParamTensor* p : params) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + p->name +
                           "'");
      }
    }
  }
  if (opt.kind == OptimizerKind::kAdam) {
    if (opt.first_moment.empty()) {
      for (const ParamTensor* p : params) {
        opt.first_moment.emplace_back(p->size(), 0.0);
        opt.second_moment.emplace_back(p->size(), 0.0);
      }
    }
    if (opt.first_moment.size() != params.size()) {
      throw ShapeError("optimizer moments do not match the parameter list");
    }
  }
  ++opt.step_count;
  const double t = static_cast<double>(opt.step_count);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamTensor& p = *params[k];
    if (opt.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.values[i] -= opt.learning_rate * p.grad[i];
      }
    } else {
      auto& m = opt.first_moment[k];
      auto& v = opt.second_moment[k];
      if (m.size() != p.size()) {
        throw ShapeError("optimizer moment size mismatch for '" + p.name + "'");
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p.values[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
      }
    }
    p.zero_grad();
  }
}

inline void optimizer_step(Mlp& net, OptimizerState& opt) {
  const std::vector<ParamTensor*> params = net.parameters();
  optimizer_step(std::span<ParamTensor* const>(params), opt);
}

}  // namespace polymorph

#endif  // POLYMORPH_NN_HPP_
