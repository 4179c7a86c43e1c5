// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/rng.hpp"

#include <sstream>

namespace uaglnet {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw ValueError("invalid rng state string");
}

template <typename T>
Tensor<T> randn(const Shape& shape, Rng& rng, double stddev) {
  std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
  for (T& x : v) x = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>(shape, std::move(v));
}

template <typename T>
Tensor<T> rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
  for (T& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(shape, std::move(v));
}

template Tensor<float> randn(const Shape&, Rng&, double);
template Tensor<double> randn(const Shape&, Rng&, double);
template Tensor<float> rand_uniform(const Shape&, Rng&, double, double);
template Tensor<double> rand_uniform(const Shape&, Rng&, double, double);

}  // namespace uaglnet
