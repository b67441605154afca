#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace vrer {

enum class Activation { identity, tanh, relu, softmax };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(weight.size() + bias.size());
  }
};

/// Fully connected feed-forward network.
///
/// Parameters are exposed as one flat vector: for each layer in order, the
/// weight matrix in column-major order followed by the bias. Every parameter
/// change stamps the network with a fresh version so that tapes recorded
/// against older parameters are rejected by backward().
///
/// A network with no layers is the identity map on inputs of any size.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. `sizes` lists the layer widths
  /// including the input, e.g. {4, 128, 2}.
  static DenseNet glorot(std::span<const int> sizes, Activation hidden,
                         Activation output, std::mt19937_64& rng);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }
  std::size_t parameter_count() const { return parameter_count_; }
  int input_dim() const;
  int output_dim() const;

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::Ref<const Eigen::VectorXd>& params);

  std::uint64_t version() const { return version_; }

 private:
  std::vector<DenseLayer> layers_;
  std::size_t parameter_count_ = 0;
  std::uint64_t version_ = 0;
};

/// Activations recorded by one forward pass.
struct GradientTape {
  std::vector<Eigen::VectorXd> inputs;       // input of layer l
  std::vector<Eigen::VectorXd> activations;  // post-activation output of layer l
  std::uint64_t net_version = 0;
};

struct ForwardResult {
  Eigen::VectorXd output;
  GradientTape tape;
};

struct BackwardResult {
  Eigen::VectorXd param_grad;
  Eigen::VectorXd input_grad;
};

/// d(output . seed)/d(params) as a flat vector.
Eigen::VectorXd backward(const DenseNet& net, const GradientTape& tape,
                         const Eigen::VectorXd& output_seed);

/// Same as backward(), also returning the gradient with respect to the input.
/// With `seed_at_logits`, the seed is applied before the final activation
/// (used for numerically stable softmax log-likelihood gradients).
BackwardResult backward_full(const DenseNet& net, const GradientTape& tape,
                             const Eigen::VectorXd& output_seed,
                             bool seed_at_logits = false);

/// Values recorded by a forward pass over a batch: values[0] is the input
/// and values[l + 1] the output of layer l. Column j belongs to sample j.
struct BatchTape {
  std::vector<Eigen::MatrixXd> values;
  std::uint64_t net_version = 0;
};

struct BatchForwardResult {
  BatchTape tape;
  const Eigen::MatrixXd& output() const { return tape.values.back(); }
};

struct BatchBackwardResult {
  Eigen::VectorXd param_grad;  // summed over the batch
  Eigen::MatrixXd input_grad;  // one column per sample
};

ForwardResult forward(const DenseNet& net, const Eigen::VectorXd& input);
BatchForwardResult forward_batch(const DenseNet& net, Eigen::MatrixXd inputs);
/// Network output for each column, without recording a tape.
Eigen::MatrixXd predict_batch(const DenseNet& net, const Eigen::MatrixXd& inputs);

/// Batched backward(): column j of `output_seed` seeds sample j and the
/// parameter gradients are summed. When `sample_sq_norms` is given, the
/// squared norm of each sample's own parameter gradient is added to it.
/// Without `want_input_grad` the returned input gradient is empty.
BatchBackwardResult backward_batch(const DenseNet& net, const BatchTape& tape,
                                   const Eigen::MatrixXd& output_seed,
                                   bool seed_at_logits = false,
                                   Eigen::VectorXd* sample_sq_norms = nullptr,
                                   bool want_input_grad = true);

/// Gradient ascent step: params + lr * grad.
Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                         double lr);

/// Per-coordinate learning rates.
Eigen::VectorXd sgd_step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                         const Eigen::VectorXd& lr);

}  // namespace vrer
