#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace jug {

/// Named map of trainable tensors. Iteration order is the name order, which
/// keeps parameter sweeps and optimizer updates deterministic.
class ParameterStore {
 public:
  /// Registers a parameter. 2-D shapes get uniform(-a, a) with
  /// a = sqrt(6 / (fan_in + fan_out)); 1-D shapes (biases) start at zero.
  Tensor& add(const std::string& name, Shape shape, Rng& rng) {
    if (params_.count(name)) throw std::runtime_error("parameter registered twice: " + name);
    Tensor t(std::move(shape), true);
    if (t.shape.size() == 2) {
      const double fan_in = static_cast<double>(t.shape[1]);
      const double fan_out = static_cast<double>(t.shape[0]);
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& x : t.value) x = rng.uniform(-a, a);
    }
    auto [it, ok] = params_.emplace(name, std::move(t));
    (void)ok;
    return it->second;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  const Tensor& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  std::map<std::string, Tensor>& entries() { return params_; }
  const std::map<std::string, Tensor>& entries() const { return params_; }

  void zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : params_)
      for (double g : t.grad) s += g * g;
    return std::sqrt(s);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

 private:
  std::map<std::string, Tensor> params_;
};

/// Scales all gradients so the global norm does not exceed max_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(ParameterStore& store, double max_norm) {
  const double norm = store.grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, t] : store.entries())
      for (double& g : t.grad) g *= s;
  }
  return norm;
}

}  // namespace jug
