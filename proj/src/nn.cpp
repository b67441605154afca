#include "vrer/nn.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// tanh through one vectorized exp. Near zero, where 1 - exp(-2|x|) cancels,
// the odd Taylor series is used instead; it is accurate to ~1e-13 there.
template <typename Plain>
void tanh_in_place(Plain& z) {
  const Plain e = (-2.0 * z.array().abs()).exp().matrix();
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z.data()[i];
    if (std::abs(v) < 0.125) {
      const double s = v * v;
      z.data()[i] =
          v * (1.0 + s * (-1.0 / 3.0 +
                          s * (2.0 / 15.0 +
                               s * (-17.0 / 315.0 + s * (62.0 / 2835.0 + s * (-1382.0 / 155925.0))))));
    } else {
      const double r = (1.0 - e.data()[i]) / (1.0 + e.data()[i]);
      z.data()[i] = v < 0.0 ? -r : r;
    }
  }
}

void activate_columns(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::tanh:
      tanh_in_place(z);
      return;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::softmax:
      for (Eigen::Index j = 0; j < z.cols(); ++j) {
        auto col = z.col(j);
        col = (col.array() - col.maxCoeff()).exp().matrix();
        col /= col.sum();
      }
      return;
  }
}

Eigen::MatrixXd activation_vjp_columns(Activation act, const Eigen::MatrixXd& y,
                                       const Eigen::MatrixXd& seed) {
  switch (act) {
    case Activation::identity:
      return seed;
    case Activation::tanh:
      return (seed.array() * (1.0 - y.array().square())).matrix();
    case Activation::relu:
      return (y.array() > 0.0).select(seed, 0.0);
    case Activation::softmax: {
      const Eigen::RowVectorXd dot = (y.array() * seed.array()).colwise().sum();
      return (y.array() * (seed.rowwise() - dot).array()).matrix();
    }
  }
  return seed;
}

Eigen::VectorXd activate(Activation act, const Eigen::VectorXd& z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::tanh: {
      Eigen::VectorXd y = z;
      tanh_in_place(y);
      return y;
    }
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::softmax: {
      Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
      return e / e.sum();
    }
  }
  return z;
}

// Vector-Jacobian product of the activation, written in terms of its output.
Eigen::VectorXd activation_vjp(Activation act, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& seed) {
  switch (act) {
    case Activation::identity:
      return seed;
    case Activation::tanh:
      return (seed.array() * (1.0 - y.array().square())).matrix();
    case Activation::relu:
      return (y.array() > 0.0).select(seed, 0.0);
    case Activation::softmax: {
      const double dot = y.dot(seed);
      return (y.array() * (seed.array() - dot)).matrix();
    }
  }
  return seed;
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw StructuralError("layer " + std::to_string(l) + ": bias length " +
                            std::to_string(layer.bias.size()) + " != out " +
                            std::to_string(layer.weight.rows()));
    }
    if (l > 0 && layers_[l - 1].out() != layer.in()) {
      throw StructuralError("layer " + std::to_string(l) + ": in " +
                            std::to_string(layer.in()) + " does not chain with out " +
                            std::to_string(layers_[l - 1].out()));
    }
    if (layer.activation == Activation::softmax && l + 1 != layers_.size()) {
      throw StructuralError("softmax is only allowed on the final layer");
    }
    parameter_count_ += layer.parameter_count();
  }
  version_ = next_version();
}

DenseNet DenseNet::glorot(std::span<const int> sizes, Activation hidden, Activation output,
                          std::mt19937_64& rng) {
  if (sizes.size() < 2) throw StructuralError("network needs at least an input and output size");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    if (in <= 0 || out <= 0) throw StructuralError("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = dist(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = (l + 2 == sizes.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const { return layers_.empty() ? -1 : layers_.front().in(); }

int DenseNet::output_dim() const { return layers_.empty() ? -1 : layers_.back().out(); }

Eigen::VectorXd DenseNet::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count_));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    out.segment(at, layer.weight.size()) =
        Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), layer.weight.size());
    at += layer.weight.size();
    out.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return out;
}

void DenseNet::unflatten(const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count_) {
    throw StructuralError("parameter vector length " + std::to_string(params.size()) +
                          " != " + std::to_string(parameter_count_));
  }
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()) =
        params.segment(at, layer.weight.size());
    at += layer.weight.size();
    layer.bias = params.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
  version_ = next_version();
}

ForwardResult forward(const DenseNet& net, const Eigen::VectorXd& input) {
  ForwardResult result;
  result.tape.net_version = net.version();
  if (net.empty()) {
    result.output = input;
    return result;
  }
  if (input.size() != net.input_dim()) {
    throw StructuralError("input length " + std::to_string(input.size()) +
                          " != network input " + std::to_string(net.input_dim()));
  }
  const auto& layers = net.layers();
  result.tape.inputs.reserve(layers.size());
  result.tape.activations.reserve(layers.size());
  Eigen::VectorXd x = input;
  for (const auto& layer : layers) {
    Eigen::VectorXd z = layer.weight * x + layer.bias;
    Eigen::VectorXd y = activate(layer.activation, z);
    result.tape.inputs.push_back(std::move(x));
    result.tape.activations.push_back(y);
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

BackwardResult backward_full(const DenseNet& net, const GradientTape& tape,
                             const Eigen::VectorXd& output_seed, bool seed_at_logits) {
  if (tape.net_version != net.version()) {
    throw InvalidTapeError("tape was recorded against different network parameters");
  }
  BackwardResult result;
  result.param_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  if (net.empty()) {
    result.input_grad = output_seed;
    return result;
  }
  const auto& layers = net.layers();
  if (tape.activations.size() != layers.size()) {
    throw InvalidTapeError("tape depth does not match network depth");
  }
  if (output_seed.size() != net.output_dim()) {
    throw StructuralError("seed length " + std::to_string(output_seed.size()) +
                          " != network output " + std::to_string(net.output_dim()));
  }

  // Offsets of each layer's parameter block.
  std::vector<Eigen::Index> offsets(layers.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = at;
    at += static_cast<Eigen::Index>(layers[l].parameter_count());
  }

  Eigen::VectorXd upstream = output_seed;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const bool skip_activation = seed_at_logits && l + 1 == layers.size();
    Eigen::VectorXd dz =
        skip_activation ? upstream : activation_vjp(layer.activation, tape.activations[l], upstream);
    const Eigen::VectorXd& x = tape.inputs[l];
    Eigen::Map<Eigen::MatrixXd> dw(result.param_grad.data() + offsets[l], layer.out(), layer.in());
    dw.noalias() = dz * x.transpose();
    result.param_grad.segment(offsets[l] + layer.weight.size(), layer.out()) = dz;
    upstream = layer.weight.transpose() * dz;
  }
  result.input_grad = std::move(upstream);
  return result;
}

namespace {

void check_batch_input(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw StructuralError("input length " + std::to_string(inputs.rows()) +
                          " != network input " + std::to_string(net.input_dim()));
  }
}

Eigen::MatrixXd layer_batch(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd z(layer.out(), x.cols());
  z.noalias() = layer.weight * x;
  z.colwise() += layer.bias;
  activate_columns(layer.activation, z);
  return z;
}

}  // namespace

BatchForwardResult forward_batch(const DenseNet& net, Eigen::MatrixXd inputs) {
  BatchForwardResult result;
  result.tape.net_version = net.version();
  if (!net.empty()) check_batch_input(net, inputs);
  const auto& layers = net.layers();
  result.tape.values.reserve(layers.size() + 1);
  result.tape.values.push_back(std::move(inputs));
  for (const auto& layer : layers) {
    result.tape.values.push_back(layer_batch(layer, result.tape.values.back()));
  }
  return result;
}

Eigen::MatrixXd predict_batch(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  if (net.empty()) return inputs;
  check_batch_input(net, inputs);
  Eigen::MatrixXd x = layer_batch(net.layers().front(), inputs);
  for (std::size_t l = 1; l < net.layers().size(); ++l) x = layer_batch(net.layers()[l], x);
  return x;
}

BatchBackwardResult backward_batch(const DenseNet& net, const BatchTape& tape,
                                   const Eigen::MatrixXd& output_seed, bool seed_at_logits,
                                   Eigen::VectorXd* sample_sq_norms, bool want_input_grad) {
  if (tape.net_version != net.version()) {
    throw InvalidTapeError("tape was recorded against different network parameters");
  }
  BatchBackwardResult result;
  result.param_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  if (net.empty()) {
    result.input_grad = output_seed;
    return result;
  }
  const auto& layers = net.layers();
  if (tape.values.size() != layers.size() + 1) {
    throw InvalidTapeError("tape depth does not match network depth");
  }
  if (output_seed.rows() != net.output_dim() ||
      output_seed.cols() != tape.values.back().cols()) {
    throw StructuralError("seed shape does not match the recorded batch");
  }
  if (sample_sq_norms != nullptr && sample_sq_norms->size() != output_seed.cols()) {
    throw StructuralError("per-sample norm buffer does not match the batch");
  }

  std::vector<Eigen::Index> offsets(layers.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    offsets[l] = at;
    at += static_cast<Eigen::Index>(layers[l].parameter_count());
  }

  Eigen::MatrixXd upstream = output_seed;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const bool skip_activation = seed_at_logits && l + 1 == layers.size();
    Eigen::MatrixXd dz = skip_activation
                             ? std::move(upstream)
                             : activation_vjp_columns(layer.activation, tape.values[l + 1], upstream);
    const Eigen::MatrixXd& x = tape.values[l];
    Eigen::Map<Eigen::MatrixXd> dw(result.param_grad.data() + offsets[l], layer.out(), layer.in());
    dw.noalias() = dz * x.transpose();
    result.param_grad.segment(offsets[l] + layer.weight.size(), layer.out()) = dz.rowwise().sum();
    if (sample_sq_norms != nullptr) {
      // Sample j contributes the outer product dz_j x_j^T plus dz_j.
      sample_sq_norms->array() += dz.colwise().squaredNorm().transpose().array() *
                                  (x.colwise().squaredNorm().transpose().array() + 1.0);
    }
    if (l == 0 && !want_input_grad) return result;
    upstream.noalias() = layer.weight.transpose() * dz;
  }
  result.input_grad = std::move(upstream);
  return result;
}

Eigen::VectorXd backward(const DenseNet& net, const GradientTape& tape,
                         const Eigen::VectorXd& output_seed) {
  return backward_full(net, tape, output_seed).param_grad;
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  if (params.size() != grad.size()) throw StructuralError("params/grad length mismatch");
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  if (!grad.allFinite()) throw NonFiniteGradientError("refusing step with non-finite gradient");
  return params + lr * grad;
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                         const Eigen::VectorXd& lr) {
  if (params.size() != grad.size() || params.size() != lr.size()) {
    throw StructuralError("params/grad/lr length mismatch");
  }
  if (!(lr.array() > 0.0).all()) throw UsageError("learning rates must be positive");
  if (!grad.allFinite()) throw NonFiniteGradientError("refusing step with non-finite gradient");
  return params + lr.cwiseProduct(grad);
}

}  // namespace vrer
