#pragma once

#include <algorithm>
#include <initializer_list>
#include <vector>

namespace vrer {

/// Sorted, duplicate-free snapshot indices whose transitions are replayed.
class ReuseSet {
 public:
  ReuseSet() = default;
  ReuseSet(std::initializer_list<int> indices) : ReuseSet(std::vector<int>(indices)) {}
  explicit ReuseSet(std::vector<int> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  }

  void insert(int index) {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), index);
    if (it == indices_.end() || *it != index) indices_.insert(it, index);
  }
  bool contains(int index) const {
    return std::binary_search(indices_.begin(), indices_.end(), index);
  }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const std::vector<int>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  friend bool operator==(const ReuseSet&, const ReuseSet&) = default;

 private:
  std::vector<int> indices_;
};

}  // namespace vrer
