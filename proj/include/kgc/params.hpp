#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kgc/autodiff.hpp"

namespace kgc {

// Ordered registry of a model's trainable leaves. The order is the canonical
// one used by the optimizer and the checkpoint format.
class ParamSet {
 public:
  Var add(const std::string& name, Tensor init) {
    Var v(std::move(init), /*requires_grad=*/true);
    items_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::vector<std::pair<std::string, Var>>& items() { return items_; }

  Var find(const std::string& name) const {
    for (const auto& [n, v] : items_) {
      if (n == name) return v;
    }
    throw Error("ParamSet: no parameter named " + name);
  }

  void zero_grads() {
    for (auto& [n, v] : items_) v.zero_grad();
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += v.value().numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

}  // namespace kgc
