#include "vrer/replay.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "vrer/errors.hpp"

namespace vrer {
namespace {

constexpr const char* kDumpMagic = "vrer-replay";
constexpr int kDumpVersion = 1;

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  out << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << v(i);
}

double read_double(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw IoError("replay dump truncated");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw IoError("bad number in replay dump: " + token);
  return v;
}

template <typename T>
T read_value(std::istream& in) {
  T v{};
  if (!(in >> v)) throw IoError("replay dump truncated");
  return v;
}

Eigen::VectorXd read_vector(std::istream& in) {
  const auto n = read_value<Eigen::Index>(in);
  if (n < 0) throw IoError("negative vector length in replay dump");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = read_double(in);
  return v;
}

void expect_keyword(std::istream& in, const std::string& keyword) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw IoError("replay dump: expected '" + keyword + "', found '" + token + "'");
  }
}

}  // namespace

void ReplayStore::append_batch(std::vector<Transition> batch) {
  if (batch.empty()) return;
  const int index = batch.front().policy_index;
  for (const auto& t : batch) {
    if (t.policy_index != index) {
      throw BatchIntegrityError("batch mixes policy indices " + std::to_string(index) + " and " +
                                std::to_string(t.policy_index));
    }
  }
  if (!blocks_.empty() && index <= blocks_.back().policy_index) {
    throw BatchIntegrityError("policy index " + std::to_string(index) +
                              " is not newer than stored index " +
                              std::to_string(blocks_.back().policy_index));
  }
  Block block;
  block.policy_index = index;
  block.first_global = next_global_;
  next_global_ += batch.size();
  block.transitions = std::move(batch);
  blocks_.push_back(std::move(block));
}

void ReplayStore::extend_cache(const PolicySnapshot& snapshot,
                               const LogLikelihoodFn& log_likelihood) {
  if (!snapshots_.empty() && snapshot.index <= snapshots_.back().index) {
    throw BatchIntegrityError("snapshot index " + std::to_string(snapshot.index) +
                              " is already cached or older than the latest snapshot");
  }
  snapshots_.push_back(snapshot);
  for (const auto& snap : snapshots_) {
    for (auto& block : blocks_) {
      if (block.log_lik.contains(snap.index)) continue;
      auto values = log_likelihood(snap, block.transitions);
      if (values.size() != block.transitions.size()) {
        throw StructuralError("likelihood function returned wrong number of values");
      }
      evaluations_ += values.size();
      block.log_lik.emplace(snap.index, std::move(values));
    }
  }
  if (max_snapshots_ > 0) {
    while (snapshots_.size() > max_snapshots_) evict_oldest();
  }
}

void ReplayStore::evict_oldest() {
  const int victim = snapshots_.front().index;
  snapshots_.pop_front();
  // Blocks generated by the victim's iteration (or earlier) go with it.
  while (!blocks_.empty() && blocks_.front().policy_index <= victim) blocks_.pop_front();
  for (auto& block : blocks_) block.log_lik.erase(victim);
}

const ReplayStore::Block& ReplayStore::block(int policy_index) const {
  auto it = std::lower_bound(blocks_.begin(), blocks_.end(), policy_index,
                             [](const Block& b, int i) { return b.policy_index < i; });
  if (it == blocks_.end() || it->policy_index != policy_index) {
    throw EmptyReuseError("no transitions stored for policy index " + std::to_string(policy_index));
  }
  return *it;
}

bool ReplayStore::has_batch(int policy_index) const {
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [&](const Block& b) { return b.policy_index == policy_index; });
}

std::size_t ReplayStore::pool_size(const ReuseSet& reuse) const {
  std::size_t n = 0;
  for (int i : reuse) {
    if (has_batch(i)) n += block(i).transitions.size();
  }
  return n;
}

std::vector<TransitionRef> ReplayStore::pool(const ReuseSet& reuse) const {
  std::vector<TransitionRef> refs;
  refs.reserve(pool_size(reuse));
  for (int i : reuse) {
    if (!has_batch(i)) continue;
    const auto n = block(i).transitions.size();
    for (std::size_t j = 0; j < n; ++j) refs.push_back(TransitionRef{i, j});
  }
  return refs;
}

std::vector<TransitionRef> ReplayStore::batch_for(const ReuseSet& reuse, std::size_t minibatch,
                                                  std::mt19937_64& rng) const {
  // Cumulative block sizes map a flat position back to (block, offset).
  std::vector<int> indices;
  std::vector<std::size_t> cumulative;
  std::size_t total = 0;
  for (int i : reuse) {
    if (!has_batch(i)) continue;
    const auto n = block(i).transitions.size();
    if (n == 0) continue;
    indices.push_back(i);
    total += n;
    cumulative.push_back(total);
  }
  if (total == 0) throw EmptyReuseError("reuse set has no stored transitions");

  auto locate = [&](std::size_t flat) {
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
    const auto b = static_cast<std::size_t>(it - cumulative.begin());
    const std::size_t start = b == 0 ? 0 : cumulative[b - 1];
    return TransitionRef{indices[b], flat - start};
  };

  std::vector<TransitionRef> out;
  if (minibatch >= total) {
    out.reserve(total);
    for (std::size_t f = 0; f < total; ++f) out.push_back(locate(f));
    return out;
  }
  // Floyd's algorithm: m distinct positions in O(m).
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(minibatch * 2);
  out.reserve(minibatch);
  for (std::size_t j = total - minibatch; j < total; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    std::size_t pick = dist(rng);
    if (!chosen.insert(pick).second) {
      pick = j;
      chosen.insert(j);
    }
    out.push_back(locate(pick));
  }
  return out;
}

const Transition& ReplayStore::transition(TransitionRef ref) const {
  const auto& b = block(ref.policy_index);
  if (ref.offset >= b.transitions.size()) throw StructuralError("transition offset out of range");
  return b.transitions[ref.offset];
}

std::span<const Transition> ReplayStore::transitions_of(int policy_index) const {
  if (!has_batch(policy_index)) return {};
  return block(policy_index).transitions;
}

std::uint64_t ReplayStore::global_index(TransitionRef ref) const {
  return block(ref.policy_index).first_global + ref.offset;
}

double ReplayStore::log_likelihood(int snapshot_index, TransitionRef ref) const {
  const auto values = log_likelihoods(snapshot_index, ref.policy_index);
  if (ref.offset >= values.size()) throw StructuralError("transition offset out of range");
  return values[ref.offset];
}

std::span<const double> ReplayStore::log_likelihoods(int snapshot_index, int policy_index) const {
  const auto& b = block(policy_index);
  const auto it = b.log_lik.find(snapshot_index);
  if (it == b.log_lik.end()) {
    throw CacheIncompleteError("no cached likelihoods of batch " + std::to_string(policy_index) +
                               " under snapshot " + std::to_string(snapshot_index));
  }
  return it->second;
}

bool ReplayStore::has_cached(int snapshot_index, int policy_index) const {
  if (!has_batch(policy_index)) return false;
  return block(policy_index).log_lik.contains(snapshot_index);
}

std::size_t ReplayStore::size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.transitions.size();
  return n;
}

std::size_t ReplayStore::cache_entries() const {
  std::size_t n = 0;
  for (const auto& b : blocks_)
    for (const auto& [index, values] : b.log_lik) n += values.size();
  return n;
}

std::vector<int> ReplayStore::snapshot_indices() const {
  std::vector<int> out;
  out.reserve(snapshots_.size());
  for (const auto& s : snapshots_) out.push_back(s.index);
  return out;
}

bool ReplayStore::has_snapshot(int index) const {
  return std::any_of(snapshots_.begin(), snapshots_.end(),
                     [&](const PolicySnapshot& s) { return s.index == index; });
}

const PolicySnapshot& ReplayStore::snapshot(int index) const {
  for (const auto& s : snapshots_)
    if (s.index == index) return s;
  throw StructuralError("no snapshot with index " + std::to_string(index));
}

const PolicySnapshot& ReplayStore::latest_snapshot() const {
  if (snapshots_.empty()) throw StructuralError("store holds no snapshots");
  return snapshots_.back();
}

void ReplayStore::dump(std::ostream& out) const {
  std::ostringstream buf;
  buf << std::hexfloat;
  buf << kDumpMagic << ' ' << kDumpVersion << '\n';
  buf << "config " << max_snapshots_ << ' ' << next_global_ << ' ' << evaluations_ << '\n';
  buf << "snapshots " << snapshots_.size() << '\n';
  for (const auto& s : snapshots_) {
    buf << "snapshot " << s.index;
    write_vector(buf, s.actor_params);
    write_vector(buf, s.critic_params);
    buf << '\n';
  }
  buf << "batches " << blocks_.size() << '\n';
  for (const auto& b : blocks_) {
    buf << "batch " << b.policy_index << ' ' << b.first_global << ' ' << b.transitions.size()
        << ' ' << b.log_lik.size() << '\n';
    for (const auto& t : b.transitions) {
      // Field order follows Transition: s, a, s_next, r, policy_index, done.
      buf << "t";
      write_vector(buf, t.s);
      buf << ' ' << t.a.value;
      write_vector(buf, t.s_next);
      buf << ' ' << t.r << ' ' << t.policy_index << ' ' << (t.done ? 1 : 0) << '\n';
    }
    for (const auto& [index, values] : b.log_lik) {
      buf << "loglik " << index << ' ' << values.size();
      for (double v : values) buf << ' ' << v;
      buf << '\n';
    }
  }
  buf << "end\n";
  out << buf.str();
  if (!out) throw IoError("failed writing replay dump");
}

ReplayStore ReplayStore::restore(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kDumpMagic) {
    throw IoError("not a replay dump (bad header)");
  }
  if (version != kDumpVersion) {
    throw IoError("unsupported replay dump version " + std::to_string(version));
  }
  expect_keyword(in, "config");
  ReplayStore store(read_value<std::size_t>(in));
  store.next_global_ = read_value<std::uint64_t>(in);
  store.evaluations_ = read_value<std::uint64_t>(in);

  expect_keyword(in, "snapshots");
  const auto n_snap = read_value<std::size_t>(in);
  for (std::size_t i = 0; i < n_snap; ++i) {
    expect_keyword(in, "snapshot");
    PolicySnapshot s;
    s.index = read_value<int>(in);
    s.actor_params = read_vector(in);
    s.critic_params = read_vector(in);
    store.snapshots_.push_back(std::move(s));
  }
  expect_keyword(in, "batches");
  const auto n_blocks = read_value<std::size_t>(in);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    expect_keyword(in, "batch");
    Block block;
    block.policy_index = read_value<int>(in);
    block.first_global = read_value<std::uint64_t>(in);
    const auto n_t = read_value<std::size_t>(in);
    const auto n_cached = read_value<std::size_t>(in);
    for (std::size_t j = 0; j < n_t; ++j) {
      expect_keyword(in, "t");
      Transition t;
      t.s = read_vector(in);
      t.a.value = read_double(in);
      t.s_next = read_vector(in);
      t.r = read_double(in);
      t.policy_index = read_value<int>(in);
      t.done = read_value<int>(in) != 0;
      block.transitions.push_back(std::move(t));
    }
    for (std::size_t c = 0; c < n_cached; ++c) {
      expect_keyword(in, "loglik");
      const int index = read_value<int>(in);
      const auto n = read_value<std::size_t>(in);
      std::vector<double> values(n);
      for (auto& v : values) v = read_double(in);
      block.log_lik.emplace(index, std::move(values));
    }
    store.blocks_.push_back(std::move(block));
  }
  expect_keyword(in, "end");
  return store;
}

}  // namespace vrer
