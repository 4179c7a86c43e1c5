// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "uaglnet/config.hpp"

namespace uaglnet::testing {

// Hand-summed parameter counts, layer by layer.
inline Index ffn_count(Index c, Index r) { return c * r * c + r * c + r * c * c + c; }
inline Index attn_count(Index c) { return 4 * (c * c + c); }
inline Index mkfm_count(Index c, Index n) {
  Index total = 2 * (c * c + c);  // combine + embed
  for (Index j = 1; j <= n; ++j) total += (c / n) * (2 * j + 1) * (2 * j + 1) + c / n;
  return total;
}
inline Index mkfm_block_count(Index c, Index n, Index r) { return 2 * c + mkfm_count(c, n) + 2 * c + ffn_count(c, r); }
inline Index cib_count(Index c, Index n, Index r) {
  return mkfm_block_count(c, n, r) + 2 * c + attn_count(c) + 2 * c + ffn_count(c, r);
}
inline Index transformer_count(Index c, Index r) { return 2 * c + attn_count(c) + 2 * c + ffn_count(c, r); }

inline std::array<Index, 4> stage_counts(const ModelConfig& cfg) {
  const auto& w = cfg.widths;
  const Index n = cfg.mkfm_groups;
  std::array<Index, 4> s{};
  s[0] = 3 * w[0] * 9 + w[0] + w[0] * w[0] * 4 + w[0];
  for (int i = 0; i < cfg.depths[0]; ++i) s[0] += mkfm_block_count(w[0], n, cfg.ffn_ratios[0]);
  s[1] = w[0] * w[1] * 9 + w[1];
  for (int i = 0; i < cfg.depths[1]; ++i) s[1] += mkfm_block_count(w[1], n, cfg.ffn_ratios[1]);
  s[2] = w[1] * w[2] * 9 + w[2];
  for (int i = 0; i < cfg.depths[2]; ++i) s[2] += cib_count(w[2], n, cfg.ffn_ratios[2]);
  s[3] = w[2] * w[3] * 9 + w[3];
  for (int i = 0; i < cfg.depths[3]; ++i) s[3] += transformer_count(w[3], cfg.ffn_ratios[3]);
  return s;
}

}  // namespace uaglnet::testing
