#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "pinn/tensor.hpp"

namespace pinn {

/// Named, ordered collection of trainable arrays. Order is the identity used
/// by the optimizer, gradient maps, and checkpoints.
class ParamSet {
 public:
  int add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
    int pid = static_cast<int>(values_.size());
    index_.emplace(name, pid);
    names_.push_back(name);
    values_.push_back(std::move(value));
    return pid;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int pid) const { return names_.at(static_cast<std::size_t>(pid)); }
  Tensor& value(int pid) { return values_.at(static_cast<std::size_t>(pid)); }
  const Tensor& value(int pid) const { return values_.at(static_cast<std::size_t>(pid)); }

  std::int64_t total_scalars() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
  }

  /// Flatten all parameters into one vector (checkpoint, finite differences).
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_scalars()));
    for (const auto& v : values_) out.insert(out.end(), v.buffer().begin(), v.buffer().end());
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    if (static_cast<std::int64_t>(flat.size()) != total_scalars())
      throw std::invalid_argument("ParamSet: flat size mismatch");
    std::size_t off = 0;
    for (auto& v : values_) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + v.buffer().size()),
                v.buffer().begin());
      off += v.buffer().size();
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, int> index_;
};

/// Per-parameter gradients aligned with a ParamSet.
struct Grads {
  std::vector<Tensor> g;

  explicit Grads(const ParamSet& params) {
    g.reserve(static_cast<std::size_t>(params.size()));
    for (int i = 0; i < params.size(); ++i) g.emplace_back(Tensor::zeros(params.value(i).shape()));
  }

  bool all_finite() const {
    for (const auto& t : g)
      if (!t.all_finite()) return false;
    return true;
  }
};

}  // namespace pinn
