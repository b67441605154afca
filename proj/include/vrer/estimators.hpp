#pragma once

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vrer/policy.hpp"
#include "vrer/replay.hpp"
#include "vrer/reuse_set.hpp"

namespace vrer {

/// Gradient estimate with the estimated trace of the covariance of the
/// estimator (the sample mean), not of a single sample.
struct GradientEstimate {
  Eigen::VectorXd grad;
  double trace_var = std::numeric_limits<double>::infinity();
  std::size_t n_samples = 0;
};

/// Likelihoods are floored at this value before forming ratios.
inline constexpr double kLikelihoodFloor = 1e-30;

/// Streaming per-coordinate mean and variance of gradient vectors.
class TraceVarianceAccumulator {
 public:
  explicit TraceVarianceAccumulator(Eigen::Index dim);

  void add(const Eigen::VectorXd& v);
  /// add(scale * v) without materializing the product.
  void add_scaled(const Eigen::VectorXd& v, double scale);

  std::size_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  /// Sum over coordinates of the unbiased sample variance, divided by the
  /// count. +infinity with fewer than two samples.
  double trace_variance() const;
  GradientEstimate estimate() const;

 private:
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
  Eigen::VectorXd delta_;
};

/// Trace of the covariance of the mean of `samples`.
/// Throws InsufficientSamplesError with fewer than two vectors.
double trace_variance(std::span<const Eigen::VectorXd> samples);

/// pi_target / pi_behavior from log-likelihoods, both floored.
double likelihood_ratio(double log_target, double log_behavior);

/// pi_target / sum_i w_i pi_i, likelihoods floored. Equal weights when
/// `weights` is empty; otherwise the weights must sum to one. When the
/// target is one of the components with weight w, the result is <= 1/w.
double mixture_ratio(double log_target, std::span<const double> log_components,
                     std::span<const double> weights = {});

/// log sum_i w_i pi_i with floored likelihoods; equal weights when
/// `weights` is empty.
double log_mixture_likelihood(std::span<const double> log_components,
                              std::span<const double> weights = {});

/// advantage * grad log pi_target(a|s).
Eigen::VectorXd per_sample_gradient(const ActorCritic& target, const Transition& transition,
                                    double advantage);

/// ILR estimator of the target's gradient from the batch of `source_index`.
/// `target` must hold the parameters of snapshot `target_index`; both
/// likelihoods come from the cache. `advantages` align with the batch.
GradientEstimate ilr_estimate(const ActorCritic& target, int target_index,
                              const ReplayStore& store, int source_index,
                              std::span<const double> advantages);

/// MLR estimator over the union of the reuse set's batches, with mixture
/// weights proportional to each batch's size. `advantages` align with
/// store.pool(reuse).
GradientEstimate mlr_estimate(const ActorCritic& target, int target_index,
                              const ReplayStore& store, const ReuseSet& reuse,
                              std::span<const double> advantages);

/// Gradient of the clipped surrogate at the target parameters, using each
/// transition's own behavior likelihood. `advantages` align with
/// store.pool(reuse).
GradientEstimate clipped_estimate(const ActorCritic& target, int target_index,
                                  const ReplayStore& store, const ReuseSet& reuse,
                                  std::span<const double> advantages, double clip_eps);

/// Candidates whose ILR trace variance is at most c times the PG trace
/// variance. The target index is always kept.
ReuseSet select_by_trace_variance(int target_index, double pg_trace_var,
                                  const std::map<int, double>& ilr_trace_var, double c);

/// Advantages for a run of transitions, one per transition.
using AdvantageFn = std::function<std::vector<double>(std::span<const Transition>)>;

struct Selection {
  ReuseSet reuse;
  double pg_trace_var = 0.0;
  std::map<int, double> ilr_trace_var;
};

/// Screens every stored snapshot with a batch against the target snapshot.
/// Each candidate uses the first min(n_eval, available) transitions of its
/// batch (n_eval = 0 means all); the PG variance uses the target's own batch
/// under the same cap.
Selection select_reuse_set(const ActorCritic& target, int target_index, const ReplayStore& store,
                           double c, std::size_t n_eval, const AdvantageFn& advantage);

}  // namespace vrer
