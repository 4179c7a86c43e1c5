// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "uaglnet/losses.hpp"

namespace uaglnet {

namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_str(a.shape()) +
                         " and target " + shape_str(b.shape()) + " differ");
  }
}

void tally(ConfusionCounts& c, bool pred, bool truth) {
  if (pred) {
    truth ? ++c.tp : ++c.fp;
  } else {
    truth ? ++c.fn : ++c.tn;
  }
}

double ratio(std::int64_t num, std::int64_t den, bool& flag) {
  if (den == 0) {
    flag = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

template <typename T>
ConfusionCounts confusion_counts(const Tensor<T>& logits, const Tensor<T>& target,
                                 double threshold) {
  require_same(logits, target, "confusion_counts");
  require_binary(target, "confusion_counts");
  ConfusionCounts c;
  const auto s = logits.data();
  const auto y = target.data();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(s[i])));
    tally(c, p >= threshold, y[i] == T(1));
  }
  return c;
}

template <typename T>
ConfusionCounts confusion_counts_binary(const Tensor<T>& prediction, const Tensor<T>& target) {
  require_same(prediction, target, "confusion_counts_binary");
  require_binary(prediction, "confusion_counts_binary");
  require_binary(target, "confusion_counts_binary");
  ConfusionCounts c;
  const auto p = prediction.data();
  const auto y = target.data();
  for (std::size_t i = 0; i < p.size(); ++i) tally(c, p[i] == T(1), y[i] == T(1));
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  m.precision = ratio(c.tp, c.tp + c.fp, m.zero_denominator);
  m.recall = ratio(c.tp, c.tp + c.fn, m.zero_denominator);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, m.zero_denominator);
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn, m.zero_denominator);
  return m;
}

std::string format_report_table(const ConfusionCounts& c, const Metrics& m) {
  std::ostringstream os;
  char line[96];
  os << "metric      value\n";
  os << "---------   ---------\n";
  const std::pair<const char*, double> rows[] = {
      {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"iou", m.iou}};
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof line, "%-9s   %9.4f\n", name, value);
    os << line;
  }
  std::snprintf(line, sizeof line, "tp=%lld fp=%lld tn=%lld fn=%lld\n",
                static_cast<long long>(c.tp), static_cast<long long>(c.fp),
                static_cast<long long>(c.tn), static_cast<long long>(c.fn));
  os << line;
  if (m.zero_denominator) os << "warning: zero denominator, affected metrics reported as 0\n";
  return os.str();
}

std::string format_report_key_values(const ConfusionCounts& c, const Metrics& m) {
  std::ostringstream os;
  char buf[64];
  const std::pair<const char*, double> rows[] = {
      {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"iou", m.iou}};
  for (const auto& [name, value] : rows) {
    std::snprintf(buf, sizeof buf, "%s=%.4f\n", name, value);
    os << buf;
  }
  os << "tp=" << c.tp << "\nfp=" << c.fp << "\ntn=" << c.tn << "\nfn=" << c.fn << '\n';
  os << "zero_denominator=" << (m.zero_denominator ? 1 : 0) << '\n';
  return os.str();
}

template ConfusionCounts confusion_counts(const Tensor<float>&, const Tensor<float>&, double);
template ConfusionCounts confusion_counts(const Tensor<double>&, const Tensor<double>&, double);
template ConfusionCounts confusion_counts_binary(const Tensor<float>&, const Tensor<float>&);
template ConfusionCounts confusion_counts_binary(const Tensor<double>&, const Tensor<double>&);

}  // namespace uaglnet
