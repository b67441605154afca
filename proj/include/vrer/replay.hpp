#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vrer/policy.hpp"
#include "vrer/reuse_set.hpp"

namespace vrer {

/// One observed step, tagged with the iteration whose policy produced it.
/// `done` marks a terminal transition (no bootstrap); time-limit
/// truncations are stored with done = false.
struct Transition {
  Eigen::VectorXd s;
  Action a;
  Eigen::VectorXd s_next;
  double r = 0.0;
  int policy_index = 0;
  bool done = false;
};

/// Frozen actor and critic parameters of iteration `index`.
struct PolicySnapshot {
  int index = 0;
  Eigen::VectorXd actor_params;
  Eigen::VectorXd critic_params;
};

/// Position of a transition: the iteration that generated it and its offset
/// within that iteration's batch.
struct TransitionRef {
  int policy_index = 0;
  std::size_t offset = 0;

  friend bool operator==(const TransitionRef&, const TransitionRef&) = default;
};

/// Log-likelihoods of `transitions` under the policy in `snapshot`.
using LogLikelihoodFn =
    std::function<std::vector<double>(const PolicySnapshot&, std::span<const Transition>)>;

/// Transition set D_k, snapshot memory M_k and the log-likelihood cache.
///
/// Transitions are stored in per-iteration blocks. The cache holds, for every
/// block and every stored snapshot, the log-likelihoods of the block's
/// actions; entries are computed once when either side first appears and are
/// never recomputed. An optional snapshot cap evicts the oldest snapshot
/// together with its block.
class ReplayStore {
 public:
  explicit ReplayStore(std::size_t max_snapshots = 0) : max_snapshots_(max_snapshots) {}

  /// Appends T_k. All transitions must share one policy index, larger than
  /// any stored one. An empty batch is a no-op.
  void append_batch(std::vector<Transition> batch);

  /// Registers snapshot k and fills the cache: the snapshot over all of D_k,
  /// and every older snapshot over the newest block.
  void extend_cache(const PolicySnapshot& snapshot, const LogLikelihoodFn& log_likelihood);

  /// Uniform minibatch, without replacement, over the union of the listed
  /// snapshots' transitions. Returns the whole union when it is smaller.
  std::vector<TransitionRef> batch_for(const ReuseSet& reuse, std::size_t minibatch,
                                       std::mt19937_64& rng) const;

  /// Every transition generated by the listed snapshots, in block order.
  std::vector<TransitionRef> pool(const ReuseSet& reuse) const;
  std::size_t pool_size(const ReuseSet& reuse) const;

  const Transition& transition(TransitionRef ref) const;
  std::span<const Transition> transitions_of(int policy_index) const;
  std::uint64_t global_index(TransitionRef ref) const;

  /// Cached log pi_{snapshot}(a|s) for the referenced transition.
  double log_likelihood(int snapshot_index, TransitionRef ref) const;
  /// Cached log-likelihoods of a whole block under one snapshot.
  std::span<const double> log_likelihoods(int snapshot_index, int policy_index) const;
  bool has_cached(int snapshot_index, int policy_index) const;

  std::size_t size() const;  // |D|
  std::size_t batch_count() const { return blocks_.size(); }
  std::vector<int> snapshot_indices() const;
  bool has_snapshot(int index) const;
  const PolicySnapshot& snapshot(int index) const;
  const PolicySnapshot& latest_snapshot() const;
  bool has_batch(int policy_index) const;

  /// Number of likelihood evaluations performed so far.
  std::uint64_t evaluation_count() const { return evaluations_; }
  /// Number of cache entries currently held.
  std::size_t cache_entries() const;

  /// Versioned line-oriented text dump; doubles are written in hexfloat so
  /// that restore() reproduces the store bit for bit.
  void dump(std::ostream& out) const;
  static ReplayStore restore(std::istream& in);

 private:
  struct Block {
    int policy_index = 0;
    std::uint64_t first_global = 0;
    std::vector<Transition> transitions;
    std::map<int, std::vector<double>> log_lik;  // keyed by snapshot index
  };

  const Block& block(int policy_index) const;
  void evict_oldest();

  std::deque<Block> blocks_;
  std::deque<PolicySnapshot> snapshots_;
  std::uint64_t next_global_ = 0;
  std::uint64_t evaluations_ = 0;
  std::size_t max_snapshots_ = 0;
};

}  // namespace vrer
