// SPDX-License-Identifier: Apache-2.0
//
// Autodiff versus central differences. Every registered case builds a small
// random instance; the checked scalar is sum(op(inputs) * R) for a fixed random
// R of the output's shape, so every output element contributes.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uaglnet/rng.hpp"
#include "uaglnet/tensor.hpp"

namespace uaglnet {

/// |a - n| / max(|a|, |n|, 1e-2): relative for ordinary gradients, absolute
/// near zero.
double gradient_error(double analytic, double numeric);

/// d f / d x for every element of x by central differences with step h.
/// x is perturbed in place and restored.
template <typename T>
std::vector<T> finite_difference_gradient(const std::function<T()>& f, Tensor<T>& x, T h);

struct GradInstance {
  std::vector<TensorD> inputs;  // every entry is differentiated
  std::function<TensorD(const std::vector<TensorD>&)> fn;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> make;
};

const std::vector<GradCase>& gradcheck_registry();

struct GradCheckResult {
  std::string name;
  int instances = 0;
  double max_error = 0.0;
  bool passed = false;
};

/// Worst error over all inputs of one instance.
double check_gradient_instance(const GradInstance& instance, Rng& rng, double h = 1e-6);

GradCheckResult run_gradcheck(const GradCase& c, int instances, std::uint64_t seed,
                              double tolerance = 1e-4);
/// Cases whose name contains `filter` (all when empty).
std::vector<GradCheckResult> run_gradchecks(int instances, std::uint64_t seed,
                                            const std::string& filter = "",
                                            double tolerance = 1e-4);

}  // namespace uaglnet
