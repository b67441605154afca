#include "vrer/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

const double kLogFloor = std::log(kLikelihoodFloor);

double floored(double log_lik) { return std::max(log_lik, kLogFloor); }

void require_aligned(std::size_t advantages, std::size_t samples) {
  if (advantages != samples) {
    throw StructuralError("advantages (" + std::to_string(advantages) + ") do not align with " +
                          std::to_string(samples) + " samples");
  }
}

constexpr std::size_t kChunk = 1024;

// Mean of weight_j * grad log pi(a_j|s_j) and the trace variance of that mean,
// from the batch sum and the per-sample squared norms.
GradientEstimate weighted_score_estimate(const ActorCritic& target,
                                         std::span<const Transition* const> samples,
                                         std::span<const double> weights) {
  const auto dim = static_cast<Eigen::Index>(target.parameter_count());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  double sq_norms = 0.0;
  std::vector<Eigen::VectorXd> states;
  std::vector<Action> actions;
  for (std::size_t begin = 0; begin < samples.size(); begin += kChunk) {
    const std::size_t end = std::min(samples.size(), begin + kChunk);
    states.clear();
    actions.clear();
    for (std::size_t j = begin; j < end; ++j) {
      states.push_back(samples[j]->s);
      actions.push_back(samples[j]->a);
    }
    const auto m = static_cast<Eigen::Index>(end - begin);
    const Eigen::VectorXd w =
        Eigen::Map<const Eigen::VectorXd>(weights.data() + begin, m);
    const auto eval = target.evaluate_batch(stack_columns(states), actions);
    Eigen::VectorXd norms = Eigen::VectorXd::Zero(m);
    target.accumulate_batch_gradient(eval, w, Eigen::VectorXd::Zero(m), sum, &norms);
    sq_norms += norms.sum();
  }
  GradientEstimate estimate;
  estimate.n_samples = samples.size();
  const double n = static_cast<double>(samples.size());
  estimate.grad = samples.empty() ? sum : Eigen::VectorXd(sum / n);
  if (samples.size() >= 2) {
    const double centered = sq_norms - n * estimate.grad.squaredNorm();
    estimate.trace_var = std::max(0.0, centered / (n - 1.0) / n);
  }
  return estimate;
}

}  // namespace

TraceVarianceAccumulator::TraceVarianceAccumulator(Eigen::Index dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)), delta_(dim) {}

void TraceVarianceAccumulator::add(const Eigen::VectorXd& v) { add_scaled(v, 1.0); }

void TraceVarianceAccumulator::add_scaled(const Eigen::VectorXd& v, double scale) {
  if (v.size() != mean_.size()) throw StructuralError("gradient length mismatch");
  ++count_;
  delta_ = scale * v - mean_;
  mean_ += delta_ / static_cast<double>(count_);
  m2_.array() += delta_.array() * (scale * v - mean_).array();
}

double TraceVarianceAccumulator::trace_variance() const {
  if (count_ < 2) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(count_);
  return std::max(0.0, m2_.sum() / (n - 1.0) / n);
}

GradientEstimate TraceVarianceAccumulator::estimate() const {
  return GradientEstimate{mean_, trace_variance(), count_};
}

double trace_variance(std::span<const Eigen::VectorXd> samples) {
  if (samples.size() < 2) {
    throw InsufficientSamplesError("trace variance needs at least two samples");
  }
  TraceVarianceAccumulator acc(samples.front().size());
  for (const auto& v : samples) acc.add(v);
  return acc.trace_variance();
}

double likelihood_ratio(double log_target, double log_behavior) {
  return std::exp(floored(log_target) - floored(log_behavior));
}

double mixture_ratio(double log_target, std::span<const double> log_components,
                     std::span<const double> weights) {
  if (log_components.empty()) throw EmptyReuseError("mixture has no components");
  if (!weights.empty() && weights.size() != log_components.size()) {
    throw StructuralError("mixture weights do not match components");
  }
  double shift = kLogFloor;
  for (double l : log_components) shift = std::max(shift, floored(l));
  const double numerator = std::exp(floored(log_target) - shift);
  if (weights.empty()) {
    double sum = 0.0;
    for (double l : log_components) sum += std::exp(floored(l) - shift);
    // (num / sum) <= 1 whenever the target is a component, so the product
    // never exceeds the component count.
    return (numerator / sum) * static_cast<double>(log_components.size());
  }
  double denominator = 0.0;
  for (std::size_t i = 0; i < log_components.size(); ++i) {
    denominator += weights[i] * std::exp(floored(log_components[i]) - shift);
  }
  return numerator / denominator;
}

double log_mixture_likelihood(std::span<const double> log_components,
                              std::span<const double> weights) {
  if (log_components.empty()) throw EmptyReuseError("mixture has no components");
  if (!weights.empty() && weights.size() != log_components.size()) {
    throw StructuralError("mixture weights do not match components");
  }
  double shift = kLogFloor;
  for (double l : log_components) shift = std::max(shift, floored(l));
  double sum = 0.0;
  for (std::size_t i = 0; i < log_components.size(); ++i) {
    const double w = weights.empty() ? 1.0 / static_cast<double>(log_components.size()) : weights[i];
    sum += w * std::exp(floored(log_components[i]) - shift);
  }
  return shift + std::log(sum);
}

Eigen::VectorXd per_sample_gradient(const ActorCritic& target, const Transition& transition,
                                    double advantage) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target.parameter_count()));
  if (advantage == 0.0) return grad;
  target.accumulate_gradient(target.evaluate(transition.s, transition.a), advantage, 0.0, grad);
  return grad;
}

GradientEstimate ilr_estimate(const ActorCritic& target, int target_index,
                              const ReplayStore& store, int source_index,
                              std::span<const double> advantages) {
  const auto batch = store.transitions_of(source_index);
  require_aligned(advantages.size(), batch.size());
  const auto log_target = store.log_likelihoods(target_index, source_index);
  const auto log_source = store.log_likelihoods(source_index, source_index);
  std::vector<const Transition*> samples;
  std::vector<double> weights;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    samples.push_back(&batch[j]);
    weights.push_back(likelihood_ratio(log_target[j], log_source[j]) * advantages[j]);
  }
  return weighted_score_estimate(target, samples, weights);
}

GradientEstimate mlr_estimate(const ActorCritic& target, int target_index,
                              const ReplayStore& store, const ReuseSet& reuse,
                              std::span<const double> advantages) {
  if (!reuse.contains(target_index)) {
    throw UsageError("reuse set must contain the target index " + std::to_string(target_index));
  }
  require_aligned(advantages.size(), store.pool_size(reuse));

  std::vector<double> weights;
  const double total = static_cast<double>(store.pool_size(reuse));
  for (int i : reuse) weights.push_back(static_cast<double>(store.transitions_of(i).size()) / total);
  const bool equal = std::all_of(weights.begin(), weights.end(),
                                 [&](double w) { return w == weights.front(); });

  std::vector<std::span<const double>> component_columns;
  std::vector<double> components(reuse.size());
  std::vector<const Transition*> samples;
  std::vector<double> sample_weights;
  std::size_t at = 0;
  for (int source : reuse) {
    const auto batch = store.transitions_of(source);
    const auto log_target = store.log_likelihoods(target_index, source);
    component_columns.clear();
    for (int i : reuse) component_columns.push_back(store.log_likelihoods(i, source));
    for (std::size_t j = 0; j < batch.size(); ++j, ++at) {
      for (std::size_t c = 0; c < components.size(); ++c) components[c] = component_columns[c][j];
      const double f = equal ? mixture_ratio(log_target[j], components)
                             : mixture_ratio(log_target[j], components, weights);
      samples.push_back(&batch[j]);
      sample_weights.push_back(f * advantages[at]);
    }
  }
  return weighted_score_estimate(target, samples, sample_weights);
}

GradientEstimate clipped_estimate(const ActorCritic& target, int target_index,
                                  const ReplayStore& store, const ReuseSet& reuse,
                                  std::span<const double> advantages, double clip_eps) {
  require_aligned(advantages.size(), store.pool_size(reuse));
  std::vector<const Transition*> samples;
  std::vector<double> weights;
  std::size_t at = 0;
  for (int source : reuse) {
    const auto batch = store.transitions_of(source);
    const auto log_target = store.log_likelihoods(target_index, source);
    const auto log_source = store.log_likelihoods(source, source);
    for (std::size_t j = 0; j < batch.size(); ++j, ++at) {
      const double r = likelihood_ratio(log_target[j], log_source[j]);
      const double a = advantages[at];
      const bool clipped = (a > 0.0 && r > 1.0 + clip_eps) || (a < 0.0 && r < 1.0 - clip_eps);
      samples.push_back(&batch[j]);
      weights.push_back(clipped ? 0.0 : r * a);
    }
  }
  return weighted_score_estimate(target, samples, weights);
}

ReuseSet select_by_trace_variance(int target_index, double pg_trace_var,
                                  const std::map<int, double>& ilr_trace_var, double c) {
  ReuseSet reuse{target_index};
  for (const auto& [index, var] : ilr_trace_var) {
    if (var <= c * pg_trace_var) reuse.insert(index);
  }
  return reuse;
}

Selection select_reuse_set(const ActorCritic& target, int target_index, const ReplayStore& store,
                           double c, std::size_t n_eval, const AdvantageFn& advantage) {
  if (!(c > 1.0)) throw UsageError("selection constant c must exceed 1");
  if (!store.has_batch(target_index)) {
    throw EmptyReuseError("current iteration " + std::to_string(target_index) + " has no batch");
  }
  if (!store.has_snapshot(target_index)) {
    throw CacheIncompleteError("target snapshot " + std::to_string(target_index) +
                               " is not cached");
  }
  Selection selection;
  for (int i : store.snapshot_indices()) {
    if (!store.has_batch(i)) continue;
    const auto batch = store.transitions_of(i);
    const std::size_t n = n_eval == 0 ? batch.size() : std::min(n_eval, batch.size());
    const auto log_target = store.log_likelihoods(target_index, i);
    const auto log_source = store.log_likelihoods(i, i);
    const auto advantages = advantage(batch.first(n));
    require_aligned(advantages.size(), n);
    std::vector<const Transition*> samples;
    std::vector<double> weights;
    for (std::size_t j = 0; j < n; ++j) {
      samples.push_back(&batch[j]);
      weights.push_back(likelihood_ratio(log_target[j], log_source[j]) * advantages[j]);
    }
    selection.ilr_trace_var[i] = weighted_score_estimate(target, samples, weights).trace_var;
  }
  // With identical samples and unit ratios the target's own ILR estimator is
  // the vanilla PG estimator.
  selection.pg_trace_var = selection.ilr_trace_var.at(target_index);
  selection.reuse =
      select_by_trace_variance(target_index, selection.pg_trace_var, selection.ilr_trace_var, c);
  return selection;
}

}  // namespace vrer
