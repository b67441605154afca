#include "vrer/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  if (out > 0) sizes.push_back(out);
  return sizes;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

const double kLogRootTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

// log Phi(x) and phi(x) / Phi(x). Below -30 the tail series avoids
// dividing underflowed quantities.
struct LowerTail {
  double log_cdf;
  double mills;
};

LowerTail lower_tail(double x) {
  const double log_pdf = -0.5 * x * x - kLogRootTwoPi;
  if (x < -30.0) {
    const double r = 1.0 / (x * x);
    const double series = 1.0 - r * (1.0 - r * (3.0 - 15.0 * r));
    return LowerTail{log_pdf - std::log(-x) + std::log(series), -x / series};
  }
  const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  return LowerTail{std::log(cdf), std::exp(log_pdf) / cdf};
}

}  // namespace

GaussianScore clamped_gaussian_score(double action, double mean, double log_std, double low,
                                     double high) {
  const double sd = std::exp(log_std);
  if (action <= low) {
    const double alpha = (low - mean) / sd;
    const auto tail = lower_tail(alpha);
    return GaussianScore{tail.log_cdf, -tail.mills / sd, -alpha * tail.mills};
  }
  if (action >= high) {
    const double beta = (high - mean) / sd;
    const auto tail = lower_tail(-beta);
    return GaussianScore{tail.log_cdf, tail.mills / sd, beta * tail.mills};
  }
  const double z = (action - mean) / sd;
  return GaussianScore{-0.5 * z * z - log_std - kLogRootTwoPi, z / sd, z * z - 1.0};
}

ModelShape shared_trunk_shape(int obs_dim, PolicyKind kind, int n_actions, double action_low,
                              double action_high) {
  ModelShape shape;
  shape.obs_dim = obs_dim;
  shape.trunk_hidden = {128};
  shape.hidden_activation = Activation::relu;
  shape.kind = kind;
  shape.n_actions = n_actions;
  shape.action_low = action_low;
  shape.action_high = action_high;
  return shape;
}

ModelShape separate_shape(int obs_dim, PolicyKind kind, int n_actions, double action_low,
                          double action_high) {
  ModelShape shape;
  shape.obs_dim = obs_dim;
  shape.actor_hidden = {64, 64};
  shape.critic_hidden = {64, 64};
  shape.hidden_activation = Activation::tanh;
  shape.kind = kind;
  shape.n_actions = n_actions;
  shape.action_low = action_low;
  shape.action_high = action_high;
  return shape;
}

ActorCritic::ActorCritic(const ModelShape& shape, std::mt19937_64& rng) : shape_(shape) {
  if (shape_.obs_dim <= 0) throw StructuralError("observation dimension must be positive");
  if (shape_.obs_scale.size() != 0 && shape_.obs_scale.size() != shape_.obs_dim) {
    throw StructuralError("observation scale length does not match observation dimension");
  }
  if (shape_.kind == PolicyKind::categorical && shape_.n_actions < 2) {
    throw StructuralError("categorical policy needs at least two actions");
  }
  if (shape_.kind == PolicyKind::truncated_gaussian && !(shape_.action_high > shape_.action_low)) {
    throw StructuralError("empty action interval");
  }

  int features = shape_.obs_dim;
  if (!shape_.trunk_hidden.empty()) {
    const auto sizes = chain(shape_.obs_dim, shape_.trunk_hidden, 0);
    trunk_ = DenseNet::glorot(sizes, shape_.hidden_activation, shape_.hidden_activation, rng);
    features = shape_.trunk_hidden.back();
  }
  if (shape_.kind == PolicyKind::categorical) {
    actor_ = DenseNet::glorot(chain(features, shape_.actor_hidden, shape_.n_actions),
                              shape_.hidden_activation, Activation::softmax, rng);
  } else {
    actor_ = DenseNet::glorot(chain(features, shape_.actor_hidden, 1), shape_.hidden_activation,
                              Activation::identity, rng);
    log_std_ = std::log(0.5 * (shape_.action_high - shape_.action_low) / 3.0);
  }
  critic_ = DenseNet::glorot(chain(features, shape_.critic_hidden, 1), shape_.hidden_activation,
                             Activation::identity, rng);
}

std::size_t ActorCritic::actor_parameter_count() const {
  return trunk_.parameter_count() + actor_.parameter_count() +
         (shape_.kind == PolicyKind::truncated_gaussian ? 1 : 0);
}

std::size_t ActorCritic::parameter_count() const {
  return actor_parameter_count() + critic_.parameter_count();
}

Eigen::VectorXd ActorCritic::actor_parameters() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(actor_parameter_count()));
  const auto nt = static_cast<Eigen::Index>(trunk_.parameter_count());
  const auto na = static_cast<Eigen::Index>(actor_.parameter_count());
  out.head(nt) = trunk_.flatten();
  out.segment(nt, na) = actor_.flatten();
  if (shape_.kind == PolicyKind::truncated_gaussian) out(nt + na) = log_std_;
  return out;
}

Eigen::VectorXd ActorCritic::parameters() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
  const auto na = static_cast<Eigen::Index>(actor_parameter_count());
  out.head(na) = actor_parameters();
  out.tail(out.size() - na) = critic_.flatten();
  return out;
}

void ActorCritic::set_parameters(const Eigen::VectorXd& actor, const Eigen::VectorXd& critic) {
  if (static_cast<std::size_t>(actor.size()) != actor_parameter_count() ||
      static_cast<std::size_t>(critic.size()) != critic_.parameter_count()) {
    throw StructuralError("parameter vector length does not match model");
  }
  const auto nt = static_cast<Eigen::Index>(trunk_.parameter_count());
  const auto na = static_cast<Eigen::Index>(actor_.parameter_count());
  trunk_.unflatten(actor.head(nt));
  actor_.unflatten(actor.segment(nt, na));
  if (shape_.kind == PolicyKind::truncated_gaussian) log_std_ = actor(nt + na);
  critic_.unflatten(critic);
}

void ActorCritic::set_parameters(const Eigen::VectorXd& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count()) {
    throw StructuralError("parameter vector length " + std::to_string(params.size()) +
                          " != " + std::to_string(parameter_count()));
  }
  const auto na = static_cast<Eigen::Index>(actor_parameter_count());
  set_parameters(params.head(na), params.tail(params.size() - na));
}

Eigen::VectorXd ActorCritic::learning_rates(double lr_actor, double lr_critic) const {
  Eigen::VectorXd lr(static_cast<Eigen::Index>(parameter_count()));
  const auto na = static_cast<Eigen::Index>(actor_parameter_count());
  lr.head(na).setConstant(lr_actor);
  lr.tail(lr.size() - na).setConstant(lr_critic);
  return lr;
}

double ActorCritic::stddev() const { return std::exp(log_std_); }

double ActorCritic::gaussian_half_range() const {
  return 0.5 * (shape_.action_high - shape_.action_low);
}

double ActorCritic::gaussian_mean(double raw) const {
  return 0.5 * (shape_.action_high + shape_.action_low) + gaussian_half_range() * raw;
}

ActorCritic::TrunkPass ActorCritic::run_trunk(const Eigen::VectorXd& state) const {
  if (state.size() != shape_.obs_dim) {
    throw StructuralError("state length " + std::to_string(state.size()) +
                          " != observation dimension " + std::to_string(shape_.obs_dim));
  }
  Eigen::VectorXd scaled =
      shape_.obs_scale.size() == 0 ? state : Eigen::VectorXd(state.cwiseProduct(shape_.obs_scale));
  auto pass = forward(trunk_, scaled);
  return TrunkPass{std::move(pass.output), std::move(pass.tape)};
}

Eigen::VectorXd ActorCritic::distribution(const Eigen::VectorXd& state) const {
  const auto trunk = run_trunk(state);
  auto out = forward(actor_, trunk.features).output;
  if (shape_.kind == PolicyKind::truncated_gaussian) out(0) = gaussian_mean(out(0));
  return out;
}

Action ActorCritic::sample_action(const Eigen::VectorXd& state, std::mt19937_64& rng) const {
  const Eigen::VectorXd dist = distribution(state);
  if (!dist.allFinite()) throw PolicyDegenerateError("policy network produced non-finite output");
  if (shape_.kind == PolicyKind::categorical) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    for (Eigen::Index a = 0; a < dist.size(); ++a) {
      acc += dist(a);
      if (u < acc) return Action::discrete(static_cast<int>(a));
    }
    return Action::discrete(static_cast<int>(dist.size() - 1));
  }
  std::normal_distribution<double> normal(dist(0), stddev());
  const double raw = normal(rng);
  return Action::continuous(std::clamp(raw, shape_.action_low, shape_.action_high));
}

ActorCritic::Evaluation ActorCritic::evaluate(const Eigen::VectorXd& state,
                                              const Action& action) const {
  Evaluation eval;
  eval.action = action;
  auto trunk = run_trunk(state);
  auto actor_pass = forward(actor_, trunk.features);
  auto critic_pass = forward(critic_, trunk.features);
  eval.value = critic_pass.output(0);

  if (shape_.kind == PolicyKind::categorical) {
    const int a = action.index();
    if (a < 0 || a >= shape_.n_actions) {
      throw StructuralError("action index " + std::to_string(a) + " out of range");
    }
    const auto& last = actor_.layers().back();
    const Eigen::VectorXd logits = last.weight * actor_pass.tape.inputs.back() + last.bias;
    eval.log_prob = logits(a) - log_sum_exp(logits);
    eval.head_output = std::move(actor_pass.output);
  } else {
    const double mean = gaussian_mean(actor_pass.output(0));
    eval.log_prob = clamped_gaussian_score(action.value, mean, log_std_, shape_.action_low,
                                           shape_.action_high)
                        .log_prob;
    eval.head_output = Eigen::VectorXd::Constant(1, mean);
  }
  eval.trunk_tape = std::move(trunk.tape);
  eval.actor_tape = std::move(actor_pass.tape);
  eval.critic_tape = std::move(critic_pass.tape);
  return eval;
}

void ActorCritic::accumulate_gradient(const Evaluation& eval, double score_weight,
                                      double value_weight, Eigen::VectorXd& grad) const {
  if (static_cast<std::size_t>(grad.size()) != parameter_count()) {
    throw StructuralError("gradient buffer length does not match model");
  }
  const auto nt = static_cast<Eigen::Index>(trunk_.parameter_count());
  const auto na = static_cast<Eigen::Index>(actor_.parameter_count());
  const auto n_actor = static_cast<Eigen::Index>(actor_parameter_count());
  const auto nc = static_cast<Eigen::Index>(critic_.parameter_count());

  Eigen::VectorXd feature_seed;
  if (score_weight != 0.0) {
    BackwardResult back;
    if (shape_.kind == PolicyKind::categorical) {
      Eigen::VectorXd seed = -eval.head_output;
      seed(eval.action.index()) += 1.0;
      back = backward_full(actor_, eval.actor_tape, score_weight * seed, true);
    } else {
      const auto score = clamped_gaussian_score(eval.action.value, eval.head_output(0), log_std_,
                                                shape_.action_low, shape_.action_high);
      const Eigen::VectorXd seed =
          Eigen::VectorXd::Constant(1, score_weight * gaussian_half_range() * score.d_mean);
      back = backward_full(actor_, eval.actor_tape, seed);
      grad(nt + na) += score_weight * score.d_log_std;
    }
    grad.segment(nt, na) += back.param_grad;
    feature_seed = std::move(back.input_grad);
  }
  if (value_weight != 0.0) {
    auto back = backward_full(critic_, eval.critic_tape, Eigen::VectorXd::Constant(1, value_weight));
    grad.segment(n_actor, nc) += back.param_grad;
    if (feature_seed.size() == 0) {
      feature_seed = std::move(back.input_grad);
    } else {
      feature_seed += back.input_grad;
    }
  }
  if (nt > 0 && feature_seed.size() != 0) {
    grad.head(nt) += backward(trunk_, eval.trunk_tape, feature_seed);
  }
}

double ActorCritic::log_prob(const Eigen::VectorXd& state, const Action& action) const {
  return evaluate(state, action).log_prob;
}

Eigen::VectorXd ActorCritic::score(const Eigen::VectorXd& state, const Action& action) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count()));
  accumulate_gradient(evaluate(state, action), 1.0, 0.0, grad);
  return grad;
}

double ActorCritic::value(const Eigen::VectorXd& state) const {
  const auto trunk = run_trunk(state);
  return forward(critic_, trunk.features).output(0);
}

Eigen::VectorXd ActorCritic::value_gradient(const Eigen::VectorXd& state) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count()));
  const Action placeholder =
      shape_.kind == PolicyKind::categorical ? Action::discrete(0) : Action::continuous(0.0);
  accumulate_gradient(evaluate(state, placeholder), 0.0, 1.0, grad);
  return grad;
}

BatchForwardResult ActorCritic::run_trunk_batch(const Eigen::MatrixXd& states) const {
  if (states.rows() != shape_.obs_dim) {
    throw StructuralError("state length " + std::to_string(states.rows()) +
                          " != observation dimension " + std::to_string(shape_.obs_dim));
  }
  if (shape_.obs_scale.size() == 0) return forward_batch(trunk_, states);
  return forward_batch(trunk_, Eigen::MatrixXd(shape_.obs_scale.asDiagonal() * states));
}

ActorCritic::BatchEvaluation ActorCritic::evaluate_batch(const Eigen::MatrixXd& states,
                                                         std::span<const Action> actions) const {
  if (static_cast<Eigen::Index>(actions.size()) != states.cols()) {
    throw StructuralError("batch has " + std::to_string(states.cols()) + " states but " +
                          std::to_string(actions.size()) + " actions");
  }
  const Eigen::Index n = states.cols();
  BatchEvaluation eval;
  eval.action.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) eval.action(j) = actions[static_cast<std::size_t>(j)].value;
  auto trunk = run_trunk_batch(states);
  auto actor_pass = forward_batch(actor_, trunk.output());
  auto critic_pass = forward_batch(critic_, trunk.output());
  eval.value = critic_pass.output().row(0).transpose();
  eval.log_prob.resize(n);

  if (shape_.kind == PolicyKind::categorical) {
    const auto& last = actor_.layers().back();
    const auto& values = actor_pass.tape.values;
    Eigen::MatrixXd logits(last.out(), n);
    logits.noalias() = last.weight * values[values.size() - 2];
    logits.colwise() += last.bias;
    for (Eigen::Index j = 0; j < n; ++j) {
      const int a = actions[static_cast<std::size_t>(j)].index();
      if (a < 0 || a >= shape_.n_actions) {
        throw StructuralError("action index " + std::to_string(a) + " out of range");
      }
      eval.log_prob(j) = logits(a, j) - log_sum_exp(logits.col(j));
    }
    eval.head_output = actor_pass.output();
  } else {
    eval.head_output.resize(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mean = gaussian_mean(actor_pass.output()(0, j));
      eval.log_prob(j) = clamped_gaussian_score(eval.action(j), mean, log_std_, shape_.action_low,
                                                shape_.action_high)
                             .log_prob;
      eval.head_output(0, j) = mean;
    }
  }
  eval.trunk_tape = std::move(trunk.tape);
  eval.actor_tape = std::move(actor_pass.tape);
  eval.critic_tape = std::move(critic_pass.tape);
  return eval;
}

void ActorCritic::accumulate_batch_gradient(const BatchEvaluation& eval,
                                            const Eigen::VectorXd& score_weight,
                                            const Eigen::VectorXd& value_weight,
                                            Eigen::VectorXd& grad,
                                            Eigen::VectorXd* sample_sq_norms) const {
  const Eigen::Index n = eval.log_prob.size();
  if (static_cast<std::size_t>(grad.size()) != parameter_count()) {
    throw StructuralError("gradient buffer length does not match model");
  }
  if (score_weight.size() != n || value_weight.size() != n) {
    throw StructuralError("per-sample weights do not match the batch");
  }
  const auto nt = static_cast<Eigen::Index>(trunk_.parameter_count());
  const auto na = static_cast<Eigen::Index>(actor_.parameter_count());
  const auto n_actor = static_cast<Eigen::Index>(actor_parameter_count());
  const auto nc = static_cast<Eigen::Index>(critic_.parameter_count());

  Eigen::MatrixXd seed;
  if (shape_.kind == PolicyKind::categorical) {
    seed = -eval.head_output;
    for (Eigen::Index j = 0; j < n; ++j) seed(static_cast<Eigen::Index>(eval.action(j)), j) += 1.0;
    seed *= score_weight.asDiagonal();
  } else {
    seed.resize(1, n);
    Eigen::ArrayXd dlog_std(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto score = clamped_gaussian_score(eval.action(j), eval.head_output(0, j), log_std_,
                                                shape_.action_low, shape_.action_high);
      seed(0, j) = score_weight(j) * gaussian_half_range() * score.d_mean;
      dlog_std(j) = score_weight(j) * score.d_log_std;
    }
    grad(nt + na) += dlog_std.sum();
    if (sample_sq_norms != nullptr) sample_sq_norms->array() += dlog_std.square();
  }
  auto actor_back = backward_batch(actor_, eval.actor_tape, seed,
                                   shape_.kind == PolicyKind::categorical, sample_sq_norms);
  grad.segment(nt, na) += actor_back.param_grad;
  auto critic_back = backward_batch(critic_, eval.critic_tape, value_weight.transpose(), false,
                                    sample_sq_norms);
  grad.segment(n_actor, nc) += critic_back.param_grad;
  if (nt > 0) {
    actor_back.input_grad += critic_back.input_grad;
    grad.head(nt) += backward_batch(trunk_, eval.trunk_tape, actor_back.input_grad, false,
                                    sample_sq_norms, false)
                         .param_grad;
  }
}

Eigen::MatrixXd ActorCritic::trunk_features(const Eigen::MatrixXd& states) const {
  if (states.rows() != shape_.obs_dim) {
    throw StructuralError("state length " + std::to_string(states.rows()) +
                          " != observation dimension " + std::to_string(shape_.obs_dim));
  }
  if (shape_.obs_scale.size() == 0) return predict_batch(trunk_, states);
  return predict_batch(trunk_, shape_.obs_scale.asDiagonal() * states);
}

Eigen::VectorXd ActorCritic::values(const Eigen::MatrixXd& states) const {
  return predict_batch(critic_, trunk_features(states)).row(0).transpose();
}

Eigen::MatrixXd ActorCritic::distributions(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd out = predict_batch(actor_, trunk_features(states));
  if (shape_.kind == PolicyKind::truncated_gaussian) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(0, j) = gaussian_mean(out(0, j));
  }
  return out;
}

Eigen::MatrixXd stack_columns(std::span<const Eigen::VectorXd> columns) {
  if (columns.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd out(columns.front().size(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != out.rows()) throw StructuralError("columns differ in length");
    out.col(static_cast<Eigen::Index>(j)) = columns[j];
  }
  return out;
}

double categorical_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw StructuralError("categorical KL over different supports");
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) > 0.0) kl += p(a) * (std::log(p(a)) - std::log(q(a)));
  }
  return kl;
}

double gaussian_kl(double mean_p, double std_p, double mean_q, double std_q) {
  const double d = mean_p - mean_q;
  return std::log(std_q / std_p) + (std_p * std_p + d * d) / (2.0 * std_q * std_q) - 0.5;
}

double kl_divergence(const ActorCritic& old_policy, const ActorCritic& new_policy,
                     std::span<const Eigen::VectorXd> states) {
  if (old_policy.kind() != new_policy.kind()) {
    throw StructuralError("KL between policies over different action spaces");
  }
  if (states.empty()) return 0.0;
  const Eigen::MatrixXd stacked = stack_columns(states);
  const Eigen::MatrixXd p = old_policy.distributions(stacked);
  const Eigen::MatrixXd q = new_policy.distributions(stacked);
  double total = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    if (old_policy.kind() == PolicyKind::categorical) {
      total += categorical_kl(p.col(j), q.col(j));
    } else {
      total += gaussian_kl(p(0, j), old_policy.stddev(), q(0, j), new_policy.stddev());
    }
  }
  return total / static_cast<double>(states.size());
}

}  // namespace vrer
