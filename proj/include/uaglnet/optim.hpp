// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay, and cosine annealing with warm restarts
// evaluated per step.
#pragma once

#include <cstdint>
#include <vector>

#include "uaglnet/nn.hpp"

namespace uaglnet {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
class AdamW {
 public:
  AdamW(ParamStore<T>& params, AdamWHyper hyper);

  /// One update at learning rate `lr`. Parameters that received no gradient
  /// are left untouched. Both the decay and the adaptive step scale with lr,
  /// so lr = 0 leaves every parameter bit-identical.
  void step(double lr);

  std::int64_t steps() const { return steps_; }
  const std::vector<std::vector<T>>& first_moment() const { return m_; }
  const std::vector<std::vector<T>>& second_moment() const { return v_; }
  void restore(std::int64_t steps, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  ParamStore<T>* params_;
  AdamWHyper hyper_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

/// Cycle i lasts first_cycle * mult^i steps; within a cycle
/// lr = lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T_i)) / 2.
struct CosineWarmRestarts {
  double lr_max = 5e-4;
  double lr_min = 0.0;
  std::int64_t first_cycle = 500;
  int mult = 2;

  double at(std::int64_t step) const;
};

}  // namespace uaglnet
