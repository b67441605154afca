#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vrer/env.hpp"
#include "vrer/policy.hpp"
#include "vrer/replay.hpp"

namespace vrer {

struct PpoConfig {
  double clip_eps = 0.2;
  double kl_stop = 0.015;  // stop offline epochs once KL exceeds this
};

struct AgentConfig {
  double c = 1.5;                 // reuse-set selection constant, > 1
  int iterations = 100;           // K
  int offline_epochs = 10;        // K_off
  int n = 500;                    // transitions per iteration
  double gamma = 0.99;
  double lr_actor = 0.005;
  double lr_critic = 0.005;
  int minibatch = 64;
  bool vrer = true;
  std::size_t n_eval = 0;         // screening sample cap per snapshot, 0 = all
  bool adv_norm = false;          // standardize advantages per minibatch
  double reward_scale = 1.0;      // applied to rewards used for learning only
  std::size_t max_snapshots = 0;  // replay cap, 0 = unlimited
  PpoConfig ppo;

  /// Throws UsageError when an invariant is violated.
  void validate() const;
};

struct IterationLog {
  int iter = 0;
  double mean_return = 0.0;  // undiscounted return of episodes finished this iteration
  double trace_var = 0.0;    // Tr(Var) of the gradient estimate at the iteration start
  std::size_t reuse_size = 1;
  double wall_time_s = 0.0;
  int epochs_run = 0;
  double kl = 0.0;  // PPO: KL from the behavior policy when the offline loop ended
};

struct TrainResult {
  PolicySnapshot final_snapshot;
  std::vector<IterationLog> logs;
};

/// delta = r + gamma * V(s') * (1 - done) - V(s).
double td_error(const ActorCritic& model, const Transition& transition, double gamma);

/// td_error() for each transition, evaluated in one batch.
std::vector<double> td_errors(const ActorCritic& model, std::span<const Transition> batch,
                              double gamma);

/// One semi-gradient TD(0) step on the critic, averaged over the batch.
/// Returns the new critic parameter vector.
Eigen::VectorXd critic_update(const ActorCritic& model, std::span<const Transition> batch,
                              double gamma, double lr_critic);

/// Runs the policy for a fixed number of steps per call. The environment
/// state carries over between calls; episodes reset as they finish.
class RolloutCollector {
 public:
  RolloutCollector(Environment& env, std::mt19937_64& rng);

  std::vector<Transition> collect(const ActorCritic& model, int policy_index, int n,
                                  std::mt19937_64& rng);
  /// Undiscounted returns of episodes finished by the last collect().
  const std::vector<double>& finished_returns() const { return finished_; }
  double running_return() const { return running_; }

 private:
  Environment& env_;
  EnvState state_;
  double running_ = 0.0;
  std::vector<double> finished_;
};

/// Model of the right shape for the environment and algorithm.
ActorCritic make_model(const Environment& env, bool shared_trunk, std::mt19937_64& rng);

/// Actor-Critic with variance-reduced experience replay. With
/// config.vrer = false the reuse set is always {k} and the loop is plain
/// on-policy actor-critic.
TrainResult train_actor_critic_vrer(Environment& env, const AgentConfig& config,
                                    std::mt19937_64& rng);

/// PPO with the same replay and reuse-set screening; the actor ascends the
/// clipped surrogate with per-transition behavior likelihoods.
TrainResult train_ppo_vrer(Environment& env, const AgentConfig& config, std::mt19937_64& rng);

}  // namespace vrer
