#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "param_store.hpp"

namespace jug {

/// Adam with bias correction. Moment state persists across steps and is part
/// of the checkpoint. Parameters whose grad buffer was never allocated are
/// skipped and reported back to the caller.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update; zeroes consumed gradients. Returns the names of
  /// parameters that had no gradient buffer and were left untouched.
  std::vector<std::string> step(ParameterStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::vector<std::string> skipped;
    for (auto& [name, p] : store.entries()) {
      if (p.grad.size() != p.value.size()) {
        skipped.push_back(name);
        continue;
      }
      Moments& m = moments_[name];
      if (m.m.size() != p.value.size()) {
        m.m.assign(p.value.size(), 0.0);
        m.v.assign(p.value.size(), 0.0);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m.m[i] = beta1_ * m.m[i] + (1.0 - beta1_) * g;
        m.v[i] = beta2_ * m.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = m.m[i] / bc1;
        const double vhat = m.v[i] / bc2;
        p.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      p.zero_grad();
    }
    return skipped;
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t step_count() const { return t_; }

  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void set_step_count(std::uint64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace jug
