#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nn/graph.hpp"
#include "nn/ops.hpp"
#include "nn/rng.hpp"

namespace daufi::nn {

// Owns all trainable leaves of a model, in creation order. Creation order is
// what makes initialization, optimizer traversal and checkpoints
// deterministic. Also registers non-trainable per-layer statistics so
// checkpoints can carry them.
class ParamStore {
 public:
  NodeRef create(const std::string& name, Shape shape) {
    if (index_.count(name))
      throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    Var v = make_leaf(Tensor(shape), true, name);
    index_[name] = items_.size();
    items_.push_back(v.node);
    return v.node;
  }

  NodeRef get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::out_of_range("ParamStore: no parameter " + name);
    return items_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<NodeRef>& items() const { return items_; }

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p->zero_grad();
  }

  std::shared_ptr<BnStats> create_stats(const std::string& name) {
    for (const auto& [n, _] : stats_)
      if (n == name)
        throw std::invalid_argument("ParamStore: duplicate stats " + name);
    auto s = std::make_shared<BnStats>();
    stats_.emplace_back(name, s);
    return s;
  }

  const std::vector<std::pair<std::string, std::shared_ptr<BnStats>>>&
  stats_items() const {
    return stats_;
  }

 private:
  std::vector<NodeRef> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, std::shared_ptr<BnStats>>> stats_;
};

// He-uniform fill: limit = sqrt(6 / fan_in).
inline void he_uniform_init(Tensor& t, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / std::max(1, fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-limit, limit);
}

}  // namespace daufi::nn
