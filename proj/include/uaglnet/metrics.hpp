// SPDX-License-Identifier: Apache-2.0
//
// Pixel confusion counts and the derived precision, recall, F1 and IoU.
// Dataset metrics are micro-averaged: counts are summed over all tiles before
// the formulas are applied.
#pragma once

#include <cstdint>
#include <string>

#include "uaglnet/tensor.hpp"

namespace uaglnet {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Positive where sigmoid(logit) >= threshold.
template <typename T>
ConfusionCounts confusion_counts(const Tensor<T>& logits, const Tensor<T>& target,
                                 double threshold = 0.5);
/// Both inputs already binary.
template <typename T>
ConfusionCounts confusion_counts_binary(const Tensor<T>& prediction, const Tensor<T>& target);

struct Metrics {
  double precision = 0, recall = 0, f1 = 0, iou = 0;
  // Set when a formula hit a zero denominator and was defined as 0.
  bool zero_denominator = false;
};

Metrics metrics_from_counts(const ConfusionCounts& c);

/// Fixed-width plain-text table with one row per metric and the raw counts.
std::string format_report_table(const ConfusionCounts& c, const Metrics& m);
/// `metric=value` lines, values to 4 decimal places.
std::string format_report_key_values(const ConfusionCounts& c, const Metrics& m);

}  // namespace uaglnet
