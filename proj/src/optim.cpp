// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/optim.hpp"

#include <cmath>
#include <numbers>

namespace uaglnet {

template <typename T>
AdamW<T>::AdamW(ParamStore<T>& params, AdamWHyper hyper) : params_(&params), hyper_(hyper) {
  for (const auto& [_, t] : params.entries()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(t.numel()), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const T b1 = static_cast<T>(hyper_.beta1), b2 = static_cast<T>(hyper_.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(hyper_.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(hyper_.beta2, t));
  const T rate = static_cast<T>(lr);
  const T decay = static_cast<T>(lr * hyper_.weight_decay);
  const T eps = static_cast<T>(hyper_.eps);
  auto& entries = params_->entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor<T> p = entries[k].second;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.data_mut();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      w[i] = w[i] - decay * w[i];
      w[i] = w[i] - rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
void AdamW<T>::restore(std::int64_t steps, std::vector<std::vector<T>> m,
                       std::vector<std::vector<T>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw ConfigError("optimizer state has " + std::to_string(m.size()) + " moment buffers, model has " +
                      std::to_string(m_.size()));
  }
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (m[k].size() != m_[k].size() || v[k].size() != v_[k].size()) {
      throw ConfigError("optimizer moment size mismatch for " + params_->entries()[k].first);
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

double CosineWarmRestarts::at(std::int64_t step) const {
  if (first_cycle < 1 || mult < 1) throw ConfigError("restart schedule needs positive periods");
  std::int64_t t = step, period = first_cycle;
  while (t >= period) {
    t -= period;
    period *= mult;
  }
  const double phase = static_cast<double>(t) / static_cast<double>(period);
  return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace uaglnet
