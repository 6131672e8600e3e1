#pragma once

// Sequential dense networks with hand-written reverse mode, the two losses the
// model needs, Adam/SGD updates, and a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsuda/error.hpp"

namespace dsuda {

// Aligned to Eigen's packet size so vectorized kernels take the same path on
// every run; with plain malloc alignment, summation order (and therefore the
// last bits of every result) depends on where a buffer happens to land.
using Vector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { identity, tanh, sigmoid };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ValueError("unknown activation '" + std::string(name) + "'");
}

namespace detail {
// Largest double below one; keeps saturated units strictly inside their open range.
inline constexpr double kBelowOne = 1.0 - 0x1p-53;
}  // namespace detail

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return std::clamp(std::tanh(z), -detail::kBelowOne, detail::kBelowOne);
    case Activation::sigmoid:
      return std::clamp(1.0 / (1.0 + std::exp(-z)), std::numeric_limits<double>::min(),
                        detail::kBelowOne);
  }
  return z;
}

// Derivative of the activation, written in terms of its output y.
inline double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Vector weights;  // row-major, outputs x inputs
  Vector bias;
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out, Activation act)
      : inputs(in), outputs(out), weights(in * out, 0.0), bias(out, 0.0), activation(act) {}

  double& weight(std::size_t row, std::size_t col) { return weights[row * inputs + col]; }
  double weight(std::size_t row, std::size_t col) const { return weights[row * inputs + col]; }

  void validate() const {
    if (inputs == 0 || outputs == 0) throw ShapeError("dense layer with zero width");
    if (weights.size() != inputs * outputs || bias.size() != outputs)
      throw ShapeError("dense layer parameter storage does not match " + std::to_string(outputs) +
                       "x" + std::to_string(inputs));
  }
};

struct DenseNet {
  std::vector<DenseLayer> layers;
  // Bumped by every optimizer update so that caches taken earlier are detectably stale.
  std::uint64_t revision = 0;

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().inputs; }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().outputs; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].validate();
      if (i + 1 < layers.size() && layers[i].outputs != layers[i + 1].inputs)
        throw ShapeError("layer " + std::to_string(i) + " emits " +
                         std::to_string(layers[i].outputs) + " values but layer " +
                         std::to_string(i + 1) + " expects " + std::to_string(layers[i + 1].inputs));
    }
  }

  bool same_shape(const DenseNet& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& a = layers[i];
      const auto& b = other.layers[i];
      if (a.inputs != b.inputs || a.outputs != b.outputs || a.activation != b.activation)
        return false;
    }
    return true;
  }

  // Parameters in canonical order: per layer, weights row-major then bias.
  std::vector<double*> parameters() {
    std::vector<double*> out;
    out.reserve(parameter_count());
    for (auto& l : layers) {
      for (auto& w : l.weights) out.push_back(&w);
      for (auto& b : l.bias) out.push_back(&b);
    }
    return out;
  }

  bool operator==(const DenseNet& other) const {
    if (!same_shape(other)) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weights != other.layers[i].weights || layers[i].bias != other.layers[i].bias)
        return false;
    return true;
  }
};

// widths = {in, h1, ..., out}; every layer uses the same activation.
inline DenseNet make_dense_net(const std::vector<std::size_t>& widths, Activation act) {
  if (widths.size() < 2) throw ShapeError("a network needs at least an input and an output width");
  DenseNet net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) net.layers.emplace_back(widths[i], widths[i + 1], act);
  net.validate();
  return net;
}

// Uniform in +-sqrt(6/(in+out)), zero biases.
inline void init_glorot_uniform(DenseNet& net, std::mt19937_64& rng) {
  for (auto& l : net.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.inputs + l.outputs));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : l.weights) w = dist(rng);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  ++net.revision;
}

// Column-major batch: one column per item, one row per feature.
using Matrix = Eigen::MatrixXd;

namespace detail {
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutableRowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline RowMajorMap weight_matrix(const DenseLayer& l) {
  return RowMajorMap(l.weights.data(), static_cast<Eigen::Index>(l.outputs), static_cast<Eigen::Index>(l.inputs));
}
}  // namespace detail

// activations[0] is the input batch; activations[i + 1] is the output of layer i.
struct ForwardCache {
  std::vector<Matrix> activations;
  std::uint64_t revision = 0;

  const Matrix& output() const { return activations.back(); }
  const Matrix& input() const { return activations.front(); }
  Eigen::Index batch_size() const { return activations.empty() ? 0 : activations.front().cols(); }

  // Output column `item` as a vector.
  Vector output_vector(Eigen::Index item = 0) const {
    const auto col = output().col(item);
    return Vector(col.data(), col.data() + col.size());
  }
};

inline void net_forward_batch(const DenseNet& net, const Matrix& x, ForwardCache& cache) {
  if (net.layers.empty()) throw ShapeError("forward through an empty network");
  if (static_cast<std::size_t>(x.rows()) != net.input_size())
    throw ShapeError("input has " + std::to_string(x.rows()) + " values, network expects " +
                     std::to_string(net.input_size()));
  cache.activations.resize(net.layers.size() + 1);
  cache.activations[0] = x;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const DenseLayer& l = net.layers[li];
    Matrix& out = cache.activations[li + 1];
    out.noalias() = detail::weight_matrix(l) * cache.activations[li];
    const Eigen::Map<const Eigen::VectorXd> bias(l.bias.data(), static_cast<Eigen::Index>(l.outputs));
    out.colwise() += bias;
    out = out.unaryExpr([a = l.activation](double z) { return activate(a, z); });
  }
  cache.revision = net.revision;
}

inline Matrix column(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

inline ForwardCache net_forward(const DenseNet& net, std::span<const double> x) {
  ForwardCache cache;
  net_forward_batch(net, column(x), cache);
  return cache;
}

struct LayerGradients {
  Vector weights;
  Vector bias;
};

// Gradients shaped like the parameters of one DenseNet.
struct GradientSet {
  std::vector<LayerGradients> layers;

  static GradientSet zeros_like(const DenseNet& net) {
    GradientSet g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) g.layers.push_back({Vector(l.weights.size(), 0.0), Vector(l.bias.size(), 0.0)});
    return g;
  }

  bool congruent_with(const DenseNet& net) const {
    if (layers.size() != net.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weights.size() != net.layers[i].weights.size() ||
          layers[i].bias.size() != net.layers[i].bias.size())
        return false;
    return true;
  }

  void set_zero() {
    for (auto& l : layers) {
      std::fill(l.weights.begin(), l.weights.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

  GradientSet& operator*=(double s) {
    for (auto& l : layers) {
      for (auto& v : l.weights) v *= s;
      for (auto& v : l.bias) v *= s;
    }
    return *this;
  }

  Vector flatten() const {
    Vector out;
    for (const auto& l : layers) {
      out.insert(out.end(), l.weights.begin(), l.weights.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  bool all_finite() const {
    auto finite = [](const Vector& v) {
      return Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size())).allFinite();
    };
    for (const auto& l : layers)
      if (!finite(l.weights) || !finite(l.bias)) return false;
    return true;
  }

  bool all_zero() const {
    for (const auto& l : layers) {
      for (double v : l.weights)
        if (v != 0.0) return false;
      for (double v : l.bias)
        if (v != 0.0) return false;
    }
    return true;
  }
};

namespace detail {
inline void check_cache(const DenseNet& net, const ForwardCache& cache) {
  if (cache.activations.size() != net.layers.size() + 1)
    throw ShapeError("forward cache does not belong to this network");
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    if (static_cast<std::size_t>(cache.activations[i].rows()) != net.layers[i].inputs ||
        static_cast<std::size_t>(cache.activations[i + 1].rows()) != net.layers[i].outputs)
      throw ShapeError("forward cache does not belong to this network");
  if (cache.revision != net.revision)
    throw ShapeError("forward cache is stale: network parameters changed since the forward pass");
}
}  // namespace detail

// Reverse pass over a batch. Adds parameter gradients (summed over the batch)
// into *grads when it is non-null and returns the gradient with respect to
// the network input, one column per item.
inline Matrix net_backward_batch(const DenseNet& net, const ForwardCache& cache, const Matrix& dy,
                                 GradientSet* grads) {
  detail::check_cache(net, cache);
  if (static_cast<std::size_t>(dy.rows()) != net.output_size() || dy.cols() != cache.batch_size())
    throw ShapeError("upstream gradient is " + std::to_string(dy.rows()) + "x" + std::to_string(dy.cols()) +
                     ", network emits " + std::to_string(net.output_size()) + "x" +
                     std::to_string(cache.batch_size()));
  if (grads && !grads->congruent_with(net)) throw ShapeError("gradient set is not congruent with the network");

  Matrix upstream = dy;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& l = net.layers[li];
    const Matrix& out = cache.activations[li + 1];
    const Matrix dz = upstream.binaryExpr(out, [a = l.activation](double g, double y) { return g * activation_slope(a, y); });
    if (grads) {
      auto& g = grads->layers[li];
      detail::MutableRowMajorMap gw(g.weights.data(), static_cast<Eigen::Index>(l.outputs),
                                    static_cast<Eigen::Index>(l.inputs));
      gw.noalias() += dz * cache.activations[li].transpose();
      Eigen::Map<Eigen::VectorXd> gb(g.bias.data(), static_cast<Eigen::Index>(l.outputs));
      gb += dz.rowwise().sum();
    }
    upstream = detail::weight_matrix(l).transpose() * dz;
  }
  return upstream;
}

struct BackwardResult {
  Vector input_gradient;
  GradientSet grads;
};

// Single-item reverse pass; `cache` must come from net_forward on one input.
inline BackwardResult net_backward(const DenseNet& net, const ForwardCache& cache, std::span<const double> dy) {
  BackwardResult r{{}, GradientSet::zeros_like(net)};
  const Matrix dx = net_backward_batch(net, cache, column(dy), &r.grads);
  r.input_gradient.assign(dx.data(), dx.data() + dx.size());
  return r;
}

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbabilityClip = 1e-7;

struct ScalarLoss {
  double value = 0.0;
  double gradient = 0.0;  // d value / d p
};

// Binary cross-entropy on a probability clipped into [1e-7, 1 - 1e-7].
inline ScalarLoss binary_cross_entropy(double p, int label) {
  if (label != 0 && label != 1) throw ValueError("binary label must be 0 or 1, got " + std::to_string(label));
  if (std::isnan(p)) throw NonFiniteError("probability is NaN");
  const double q = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
  if (label == 1) return {-std::log(q), -1.0 / q};
  return {-std::log1p(-q), 1.0 / (1.0 - q)};
}

struct VectorLoss {
  double value = 0.0;
  Vector gradient;  // d value / d a
};

inline VectorLoss mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("mse over vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  if (a.empty()) throw ShapeError("mse over empty vectors");
  const double n = static_cast<double>(a.size());
  VectorLoss r{0.0, Vector(a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    r.value += d * d;
    r.gradient[i] = 2.0 * d / n;
  }
  r.value /= n;
  return r;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { adam, sgd };

struct AdamState {
  GradientSet first_moment;
  GradientSet second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const DenseNet& net) {
    return {GradientSet::zeros_like(net), GradientSet::zeros_like(net)};
  }
};

namespace detail {
inline void check_update(const DenseNet& net, const GradientSet& grads, double lr) {
  if (!grads.congruent_with(net)) throw ShapeError("gradient set is not congruent with the network");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("learning rate must be positive and finite");
  if (!grads.all_finite()) throw NonFiniteError("non-finite gradient; aborting update");
}
}  // namespace detail

// Bias-corrected Adam. Entries whose gradient is exactly zero are left alone
// (parameter and both moments), so a zero gradient never moves a parameter.
inline void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state, double lr) {
  detail::check_update(net, grads, lr);
  if (!state.first_moment.congruent_with(net) || !state.second_moment.congruent_with(net))
    throw ShapeError("optimizer state is not congruent with the network");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  // Branch-free so the loop vectorizes; zero-gradient entries keep their old values.
  auto update = [&](Vector& params, const Vector& g, Vector& m, Vector& v) {
    double* __restrict p = params.data();
    double* __restrict mm = m.data();
    double* __restrict vv = v.data();
    const double* __restrict gg = g.data();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double gi = gg[i];
      const bool live = gi != 0.0;
      const double m_next = b1 * mm[i] + (1.0 - b1) * gi;
      const double v_next = b2 * vv[i] + (1.0 - b2) * gi * gi;
      const double delta = lr * (m_next / c1) / (std::sqrt(v_next / c2) + eps);
      mm[i] = live ? m_next : mm[i];
      vv[i] = live ? v_next : vv[i];
      p[i] = live ? p[i] - delta : p[i];
    }
  };

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& l = net.layers[li];
    update(l.weights, grads.layers[li].weights, state.first_moment.layers[li].weights,
           state.second_moment.layers[li].weights);
    update(l.bias, grads.layers[li].bias, state.first_moment.layers[li].bias, state.second_moment.layers[li].bias);
  }
  ++net.revision;
}

inline void sgd_step(DenseNet& net, const GradientSet& grads, double lr) {
  detail::check_update(net, grads, lr);
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& l = net.layers[li];
    for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * grads.layers[li].weights[i];
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * grads.layers[li].bias[i];
  }
  ++net.revision;
}

// Owns whichever optimizer state a network needs.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, const DenseNet& net, double lr)
      : kind_(kind), lr_(lr), adam_(AdamState::for_net(net)) {}

  void step(DenseNet& net, const GradientSet& grads) {
    ++updates_;
    if (kind_ == OptimizerKind::adam)
      adam_step(net, grads, adam_, lr_);
    else
      sgd_step(net, grads, lr_);
  }

  std::uint64_t updates() const { return updates_; }

 private:
  OptimizerKind kind_ = OptimizerKind::adam;
  double lr_ = 1e-3;
  AdamState adam_;
  std::uint64_t updates_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
}

// Max relative error between `analytic` and central differences of `loss`
// taken by nudging each `*params[i]` by +-eps.
template <class LossFn>
double max_relative_gradient_error(std::span<double* const> params, std::span<const double> analytic,
                                   LossFn&& loss, double eps) {
  if (params.size() != analytic.size()) throw ShapeError("analytic gradient does not match parameter count");
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ValueError("finite-difference step must lie in [1e-7, 1e-3]");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i];
    const double saved = *p;
    *p = saved + eps;
    const double up = loss();
    *p = saved - eps;
    const double down = loss();
    *p = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

struct LossAndGradient {
  double loss = 0.0;
  GradientSet grads;
};

// loss_fn: (const DenseNet&) -> LossAndGradient, with an input captured inside.
template <class LossFn>
double grad_check(DenseNet& net, LossFn&& loss_fn, double eps) {
  const LossAndGradient reference = loss_fn(static_cast<const DenseNet&>(net));
  if (!reference.grads.congruent_with(net)) throw ShapeError("loss function returned a mis-shaped gradient");
  const Vector analytic = reference.grads.flatten();
  const auto params = net.parameters();
  return max_relative_gradient_error(std::span<double* const>(params), analytic,
                                     [&] { return loss_fn(static_cast<const DenseNet&>(net)).loss; }, eps);
}

}  // namespace dsuda
