#include "vrer/agents.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <string>

#include <spdlog/spdlog.h>

#include "vrer/errors.hpp"
#include "vrer/estimators.hpp"
#include "vrer/reuse_set.hpp"

namespace vrer {

void AgentConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid agent config: " + what); };
  if (!(c > 1.0)) fail("c must be > 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (offline_epochs < 1) fail("offline epochs must be >= 1");
  if (n < 1) fail("n must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (!(lr_actor > 0.0) || !(lr_critic > 0.0)) fail("learning rates must be > 0");
  if (minibatch < 1) fail("minibatch must be >= 1");
  if (!(reward_scale > 0.0)) fail("reward scale must be > 0");
  if (!(ppo.clip_eps > 0.0)) fail("clip epsilon must be > 0");
  if (!(ppo.kl_stop > 0.0)) fail("KL threshold must be > 0");
}

double td_error(const ActorCritic& model, const Transition& transition, double gamma) {
  const double next = transition.done ? 0.0 : model.value(transition.s_next);
  return transition.r + gamma * next - model.value(transition.s);
}

namespace {

struct StackedBatch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd next_states;
  std::vector<Action> actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd continues;  // 0 at terminal transitions
};

template <typename Get>
StackedBatch stack_batch(std::size_t size, Get&& get) {
  StackedBatch out;
  if (size == 0) return out;
  const auto n = static_cast<Eigen::Index>(size);
  const Eigen::Index dim = get(0).s.size();
  out.states.resize(dim, n);
  out.next_states.resize(dim, n);
  out.rewards.resize(n);
  out.continues.resize(n);
  out.actions.reserve(size);
  for (std::size_t j = 0; j < size; ++j) {
    const Transition& t = get(j);
    const auto c = static_cast<Eigen::Index>(j);
    out.states.col(c) = t.s;
    out.next_states.col(c) = t.s_next;
    out.actions.push_back(t.a);
    out.rewards(c) = t.r;
    out.continues(c) = t.done ? 0.0 : 1.0;
  }
  return out;
}

StackedBatch stack_batch(std::span<const Transition> batch) {
  return stack_batch(batch.size(), [&](std::size_t j) -> const Transition& { return batch[j]; });
}

Eigen::VectorXd td_vector(const ActorCritic& model, const StackedBatch& b,
                          const Eigen::VectorXd& values, double gamma) {
  return b.rewards + gamma * b.continues.cwiseProduct(model.values(b.next_states)) - values;
}

}  // namespace

std::vector<double> td_errors(const ActorCritic& model, std::span<const Transition> batch,
                              double gamma) {
  if (batch.empty()) return {};
  const auto b = stack_batch(batch);
  const Eigen::VectorXd delta = td_vector(model, b, model.values(b.states), gamma);
  return {delta.data(), delta.data() + delta.size()};
}

Eigen::VectorXd critic_update(const ActorCritic& model, std::span<const Transition> batch,
                              double gamma, double lr_critic) {
  if (batch.empty()) throw EmptyReuseError("critic update on an empty batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  const auto b = stack_batch(batch);
  const auto eval = model.evaluate_batch(b.states, b.actions);
  const Eigen::VectorXd delta = td_vector(model, b, eval.value, gamma);
  const auto n = static_cast<Eigen::Index>(batch.size());
  model.accumulate_batch_gradient(eval, Eigen::VectorXd::Zero(n),
                                  delta / static_cast<double>(batch.size()), grad);
  const auto na = static_cast<Eigen::Index>(model.actor_parameter_count());
  return sgd_step(model.critic_parameters(), grad.tail(grad.size() - na), lr_critic);
}

RolloutCollector::RolloutCollector(Environment& env, std::mt19937_64& rng) : env_(env) {
  state_ = env_.reset(rng);
}

std::vector<Transition> RolloutCollector::collect(const ActorCritic& model, int policy_index,
                                                  int n, std::mt19937_64& rng) {
  finished_.clear();
  std::vector<Transition> batch;
  batch.reserve(static_cast<std::size_t>(n));
  for (int step = 0; step < n; ++step) {
    Transition t;
    t.s = state_.observation;
    t.a = model.sample_action(t.s, rng);
    const auto result = env_.step(t.a);
    t.s_next = result.state.observation;
    t.r = result.reward;
    t.policy_index = policy_index;
    t.done = result.state.terminal;
    running_ += result.reward;
    batch.push_back(std::move(t));
    if (result.state.done) {
      finished_.push_back(running_);
      running_ = 0.0;
      state_ = env_.reset(rng);
    } else {
      state_ = result.state;
    }
  }
  return batch;
}

ActorCritic make_model(const Environment& env, bool shared_trunk, std::mt19937_64& rng) {
  ModelShape shape = shared_trunk
                         ? shared_trunk_shape(env.observation_dim(), env.action_kind(),
                                              env.action_count(), env.action_low(),
                                              env.action_high())
                         : separate_shape(env.observation_dim(), env.action_kind(),
                                          env.action_count(), env.action_low(), env.action_high());
  shape.obs_scale = env.observation_scale();
  return ActorCritic(shape, rng);
}

namespace {

enum class Algorithm { actor_critic, ppo };

std::vector<double> advantages_for(const ActorCritic& model, const ReplayStore& store,
                                   const ReuseSet& reuse, double gamma) {
  std::vector<double> out;
  out.reserve(store.pool_size(reuse));
  for (int i : reuse) {
    const auto part = td_errors(model, store.transitions_of(i), gamma);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

Eigen::VectorXd standardized(const Eigen::VectorXd& values) {
  if (values.size() < 2) return values;
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / static_cast<double>(values.size() - 1);
  return ((values.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
}

TrainResult train(Environment& env, const AgentConfig& config, std::mt19937_64& rng,
                  Algorithm algorithm) {
  config.validate();
  using clock = std::chrono::steady_clock;

  ActorCritic model = make_model(env, algorithm == Algorithm::actor_critic, rng);
  ActorCritic scratch = model;
  const Eigen::VectorXd lr = model.learning_rates(config.lr_actor, config.lr_critic);
  ReplayStore store(config.max_snapshots);
  RolloutCollector collector(env, rng);

  const LogLikelihoodFn log_likelihood = [&scratch](const PolicySnapshot& snap,
                                                    std::span<const Transition> batch) {
    scratch.set_parameters(snap.actor_params, snap.critic_params);
    if (batch.empty()) return std::vector<double>{};
    const auto b = stack_batch(batch);
    const Eigen::VectorXd lp = scratch.evaluate_batch(b.states, b.actions).log_prob;
    return std::vector<double>(lp.data(), lp.data() + lp.size());
  };

  TrainResult result;
  double last_return = 0.0;
  bool have_return = false;

  for (int k = 1; k <= config.iterations; ++k) {
    const auto start = clock::now();
    IterationLog log;
    log.iter = k;

    // Step 1: fresh transitions under the current policy.
    const PolicySnapshot snapshot{k, model.actor_parameters(), model.critic_parameters()};
    auto batch = collector.collect(model, k, config.n, rng);
    if (config.reward_scale != 1.0) {
      for (auto& t : batch) t.r *= config.reward_scale;
    }
    std::vector<Eigen::VectorXd> fresh_states;
    fresh_states.reserve(batch.size());
    for (const auto& t : batch) fresh_states.push_back(t.s);
    store.append_batch(std::move(batch));

    // Step 2: likelihood cache and reuse-set screening.
    store.extend_cache(snapshot, log_likelihood);
    ReuseSet reuse{k};
    if (config.vrer) {
      const AdvantageFn advantage = [&](std::span<const Transition> run) {
        return td_errors(model, run, config.gamma);
      };
      reuse = select_reuse_set(model, k, store, config.c, config.n_eval, advantage).reuse;
    }
    {
      const auto adv = advantages_for(model, store, reuse, config.gamma);
      const auto estimate = algorithm == Algorithm::actor_critic
                                ? mlr_estimate(model, k, store, reuse, adv)
                                : clipped_estimate(model, k, store, reuse, adv,
                                                   config.ppo.clip_eps);
      log.trace_var = estimate.trace_var;
    }
    log.reuse_size = reuse.size();

    // Step 3: offline optimization over the reused transitions. The mixture
    // denominators depend only on stored likelihoods, so they are fixed for
    // the whole offline loop.
    const std::size_t pool = store.pool_size(reuse);
    std::map<int, std::size_t> pool_offset;
    std::vector<double> log_behavior;
    log_behavior.reserve(pool);
    {
      std::vector<double> weights;
      for (int i : reuse) {
        weights.push_back(static_cast<double>(store.transitions_of(i).size()) /
                          static_cast<double>(pool));
      }
      std::vector<std::span<const double>> columns;
      std::vector<double> components(reuse.size());
      for (int source : reuse) {
        pool_offset[source] = log_behavior.size();
        columns.clear();
        for (int i : reuse) columns.push_back(store.log_likelihoods(i, source));
        const auto own = store.log_likelihoods(source, source);
        for (std::size_t j = 0; j < own.size(); ++j) {
          if (algorithm == Algorithm::ppo) {
            log_behavior.push_back(own[j]);
          } else {
            for (std::size_t c = 0; c < columns.size(); ++c) components[c] = columns[c][j];
            log_behavior.push_back(log_mixture_likelihood(components, weights));
          }
        }
      }
    }
    const auto mb_size = static_cast<std::size_t>(config.minibatch);
    const std::size_t steps_per_epoch = (pool + mb_size - 1) / mb_size;
    const ActorCritic behavior = model;
    Eigen::VectorXd params = model.parameters();

    for (int epoch = 0; epoch < config.offline_epochs; ++epoch) {
      for (std::size_t step = 0; step < steps_per_epoch; ++step) {
        const auto refs = store.batch_for(reuse, mb_size, rng);
        const auto b = stack_batch(refs.size(), [&](std::size_t j) -> const Transition& {
          return store.transition(refs[j]);
        });
        const auto eval = model.evaluate_batch(b.states, b.actions);
        const Eigen::VectorXd deltas = td_vector(model, b, eval.value, config.gamma);
        const Eigen::VectorXd advantages = config.adv_norm ? standardized(deltas) : deltas;

        const auto m = static_cast<Eigen::Index>(refs.size());
        Eigen::VectorXd actor_weight(m);
        for (Eigen::Index j = 0; j < m; ++j) {
          const auto& ref = refs[static_cast<std::size_t>(j)];
          // MLR for actor-critic (mixture denominator), the transition's own
          // behavior policy for PPO.
          const double r = likelihood_ratio(
              eval.log_prob(j), log_behavior[pool_offset.at(ref.policy_index) + ref.offset]);
          actor_weight(j) = r * advantages(j);
          if (algorithm == Algorithm::ppo) {
            const double a = advantages(j);
            const bool clipped = (a > 0.0 && r > 1.0 + config.ppo.clip_eps) ||
                                 (a < 0.0 && r < 1.0 - config.ppo.clip_eps);
            if (clipped) actor_weight(j) = 0.0;
          }
        }
        const double scale = 1.0 / static_cast<double>(m);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
        model.accumulate_batch_gradient(eval, scale * actor_weight, scale * deltas, grad);
        params = sgd_step(params, grad, lr);
        model.set_parameters(params);
      }
      log.epochs_run = epoch + 1;
      if (algorithm == Algorithm::ppo) {
        log.kl = kl_divergence(behavior, model, fresh_states);
        if (log.kl > config.ppo.kl_stop) break;
      }
    }

    // Steps 4-5: the updated parameters become snapshot k+1 next iteration.
    const auto& finished = collector.finished_returns();
    if (!finished.empty()) {
      double sum = 0.0;
      for (double r : finished) sum += r;
      last_return = sum / static_cast<double>(finished.size());
      have_return = true;
    }
    log.mean_return = have_return ? last_return : collector.running_return();
    log.wall_time_s = std::chrono::duration<double>(clock::now() - start).count();
    spdlog::debug("iter {}: return {:.4g} trace_var {:.4g} |U| {} epochs {} kl {:.4g}", k,
                  log.mean_return, log.trace_var, log.reuse_size, log.epochs_run, log.kl);
    result.logs.push_back(log);
  }

  result.final_snapshot =
      PolicySnapshot{config.iterations + 1, model.actor_parameters(), model.critic_parameters()};
  return result;
}

}  // namespace

TrainResult train_actor_critic_vrer(Environment& env, const AgentConfig& config,
                                    std::mt19937_64& rng) {
  return train(env, config, rng, Algorithm::actor_critic);
}

TrainResult train_ppo_vrer(Environment& env, const AgentConfig& config, std::mt19937_64& rng) {
  return train(env, config, rng, Algorithm::ppo);
}

}  // namespace vrer
