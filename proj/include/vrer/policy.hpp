#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vrer/nn.hpp"

namespace vrer {

/// An action from either action space. Discrete actions store their index.
struct Action {
  double value = 0.0;

  static Action discrete(int index) { return Action{static_cast<double>(index)}; }
  static Action continuous(double v) { return Action{v}; }
  int index() const { return static_cast<int>(value); }

  friend bool operator==(const Action&, const Action&) = default;
};

enum class PolicyKind { categorical, truncated_gaussian };

struct ModelShape {
  int obs_dim = 0;
  std::vector<int> trunk_hidden;  // shared between actor and critic
  std::vector<int> actor_hidden;
  std::vector<int> critic_hidden;
  Activation hidden_activation = Activation::tanh;
  PolicyKind kind = PolicyKind::categorical;
  int n_actions = 2;           // categorical only
  double action_low = -1.0;    // truncated Gaussian only
  double action_high = 1.0;
  Eigen::VectorXd obs_scale;   // optional per-coordinate input scaling
};

/// Log-likelihood of a Normal(mean, exp(log_std)) draw clamped to
/// [low, high], with its derivatives in mean and log_std. Interior actions
/// use the density; an action on a bound uses the probability mass the
/// clamp puts there.
struct GaussianScore {
  double log_prob = 0.0;
  double d_mean = 0.0;
  double d_log_std = 0.0;
};
GaussianScore clamped_gaussian_score(double action, double mean, double log_std, double low,
                                     double high);

/// Shape used by the Actor-Critic agent: one shared 128-unit layer and
/// linear heads.
ModelShape shared_trunk_shape(int obs_dim, PolicyKind kind, int n_actions = 2,
                              double action_low = -1.0, double action_high = 1.0);

/// Shape used by the PPO agent: separate actor and critic with two 64-unit
/// layers each.
ModelShape separate_shape(int obs_dim, PolicyKind kind, int n_actions = 2,
                          double action_low = -1.0, double action_high = 1.0);

/// Actor (policy head) and critic (state-value head), optionally sharing a
/// trunk.
///
/// The flat parameter layout is [trunk | actor head | log_std | critic head];
/// log_std is present only for the truncated Gaussian. The actor parameter
/// vector is the prefix [trunk | actor head | log_std] and the critic
/// parameter vector is the critic head.
///
/// The truncated Gaussian's mean is mid + half_range * (linear head output)
/// and may leave the action interval. It samples a Normal(mu(s), sigma)
/// draw and clamps it to [action_low, action_high]; see
/// clamped_gaussian_score() for the likelihood.
class ActorCritic {
 public:
  ActorCritic(const ModelShape& shape, std::mt19937_64& rng);

  const ModelShape& shape() const { return shape_; }
  PolicyKind kind() const { return shape_.kind; }

  std::size_t parameter_count() const;
  std::size_t actor_parameter_count() const;
  std::size_t critic_parameter_count() const { return critic_.parameter_count(); }
  Eigen::VectorXd parameters() const;
  Eigen::VectorXd actor_parameters() const;
  Eigen::VectorXd critic_parameters() const { return critic_.flatten(); }
  void set_parameters(const Eigen::VectorXd& params);
  void set_parameters(const Eigen::VectorXd& actor, const Eigen::VectorXd& critic);

  /// Per-coordinate learning rates: actor rate on trunk, actor head and
  /// log_std; critic rate on the critic head.
  Eigen::VectorXd learning_rates(double lr_actor, double lr_critic) const;

  double log_std() const { return log_std_; }
  double stddev() const;

  /// Categorical: action probabilities. Gaussian: the one-element mean.
  Eigen::VectorXd distribution(const Eigen::VectorXd& state) const;

  Action sample_action(const Eigen::VectorXd& state, std::mt19937_64& rng) const;
  double log_prob(const Eigen::VectorXd& state, const Action& action) const;
  /// Gradient of log_prob with respect to all parameters (critic entries zero).
  Eigen::VectorXd score(const Eigen::VectorXd& state, const Action& action) const;

  double value(const Eigen::VectorXd& state) const;
  /// Gradient of value with respect to all parameters (actor-head entries zero).
  Eigen::VectorXd value_gradient(const Eigen::VectorXd& state) const;

  /// One forward pass over both heads, kept for a later gradient query.
  struct Evaluation {
    double log_prob = 0.0;
    double value = 0.0;
    Action action;
    Eigen::VectorXd head_output;  // probabilities or mean
    GradientTape trunk_tape, actor_tape, critic_tape;
  };
  Evaluation evaluate(const Eigen::VectorXd& state, const Action& action) const;

  /// grad += score_weight * d log_prob + value_weight * d value.
  void accumulate_gradient(const Evaluation& eval, double score_weight, double value_weight,
                           Eigen::VectorXd& grad) const;

  /// Batched evaluate(): column j of `states` pairs with actions[j].
  struct BatchEvaluation {
    Eigen::VectorXd log_prob;
    Eigen::VectorXd value;
    Eigen::VectorXd action;       // action values
    Eigen::MatrixXd head_output;  // probabilities or means, one column per sample
    BatchTape trunk_tape, actor_tape, critic_tape;
  };
  BatchEvaluation evaluate_batch(const Eigen::MatrixXd& states,
                                 std::span<const Action> actions) const;

  /// grad += sum_j score_weight[j] * d log_prob_j + value_weight[j] * d value_j.
  /// When `sample_sq_norms` is given, the squared norm of sample j's own
  /// contribution is added to entry j.
  void accumulate_batch_gradient(const BatchEvaluation& eval, const Eigen::VectorXd& score_weight,
                                 const Eigen::VectorXd& value_weight, Eigen::VectorXd& grad,
                                 Eigen::VectorXd* sample_sq_norms = nullptr) const;

  Eigen::VectorXd values(const Eigen::MatrixXd& states) const;
  /// distribution() for each column.
  Eigen::MatrixXd distributions(const Eigen::MatrixXd& states) const;

 private:
  struct TrunkPass {
    Eigen::VectorXd features;
    GradientTape tape;
  };
  TrunkPass run_trunk(const Eigen::VectorXd& state) const;
  BatchForwardResult run_trunk_batch(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd trunk_features(const Eigen::MatrixXd& states) const;
  double gaussian_mean(double raw) const;
  double gaussian_half_range() const;

  ModelShape shape_;
  DenseNet trunk_;
  DenseNet actor_;
  DenseNet critic_;
  double log_std_ = 0.0;
};

/// States as the columns of a matrix.
Eigen::MatrixXd stack_columns(std::span<const Eigen::VectorXd> columns);

/// Mean over states of KL(old(.|s) || new(.|s)), closed form for both heads.
double kl_divergence(const ActorCritic& old_policy, const ActorCritic& new_policy,
                     std::span<const Eigen::VectorXd> states);

/// KL between two categorical distributions.
double categorical_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// KL between two univariate Normals.
double gaussian_kl(double mean_p, double std_p, double mean_q, double std_q);

}  // namespace vrer
