// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "uaglnet/metrics.hpp"

using namespace uaglnet;
using uaglnet::testing::make;

namespace {

// Brute-force reference: walk the pixels and tally by hand.
ConfusionCounts tally(const std::vector<int>& pred, const std::vector<int>& truth) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++c.tp;
    if (pred[i] && !truth[i]) ++c.fp;
    if (!pred[i] && truth[i]) ++c.fn;
    if (!pred[i] && !truth[i]) ++c.tn;
  }
  return c;
}

Tensor<double> as_tensor(const std::vector<int>& v) {
  std::vector<double> d(v.begin(), v.end());
  return Tensor<double>(Shape{1, 1, static_cast<Index>(v.size())}, std::move(d));
}

Tensor<double> as_logits(const std::vector<int>& v) {
  std::vector<double> d;
  for (int x : v) d.push_back(x ? 2.0 : -2.0);
  return Tensor<double>(Shape{1, 1, static_cast<Index>(v.size())}, std::move(d));
}

}  // namespace

TEST(Confusion, TenPixelCase) {
  const std::vector<int> pred{1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  const std::vector<int> truth{1, 1, 1, 1, 1, 1, 0, 0, 1, 1};
  const auto c = confusion_counts(as_logits(pred), as_tensor(truth));
  EXPECT_EQ(c, tally(pred, truth));
  EXPECT_EQ(c, (ConfusionCounts{6, 2, 0, 2}));
  EXPECT_EQ(confusion_counts_binary(as_tensor(pred), as_tensor(truth)), c);
}

TEST(Confusion, IdentityAndComplement) {
  const std::vector<int> truth{1, 0, 0, 1, 1, 0};
  std::vector<int> flipped;
  for (int v : truth) flipped.push_back(1 - v);
  const auto same = confusion_counts(as_logits(truth), as_tensor(truth));
  EXPECT_EQ(same.fp + same.fn, 0);
  const auto inv = confusion_counts(as_logits(flipped), as_tensor(truth));
  EXPECT_EQ(inv.tp + inv.tn, 0);
  EXPECT_EQ(inv.total(), 6);
}

TEST(Confusion, ThresholdIsInclusive) {
  const auto c = confusion_counts(make({1, 1, 2}, {0, -1e-9}), make({1, 1, 2}, {1, 1}));
  EXPECT_EQ(c.tp, 1);
  EXPECT_EQ(c.fn, 1);
}

TEST(Confusion, NonBinaryTargetThrows) {
  EXPECT_THROW(confusion_counts(make({1, 1, 2}, {0, 0}), make({1, 1, 2}, {0, 0.3})), ValueError);
}

TEST(Metrics, WorkedExample) {
  const auto m = metrics_from_counts({6, 2, 0, 2});
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
  EXPECT_DOUBLE_EQ(m.iou, 0.6);
  EXPECT_FALSE(m.zero_denominator);
}

TEST(Metrics, PerfectAndEmpty) {
  const auto perfect = metrics_from_counts({5, 0, 7, 0});
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_EQ(perfect.iou, 1.0);
  const auto empty = metrics_from_counts({0, 0, 9, 0});
  EXPECT_EQ(empty.precision + empty.recall + empty.f1 + empty.iou, 0.0);
  EXPECT_TRUE(empty.zero_denominator);
}

TEST(Metrics, F1IouIdentity) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const ConfusionCounts c{rng.uniform_int(0, 1000) + 1, rng.uniform_int(0, 1000), rng.uniform_int(0, 1000),
                            rng.uniform_int(0, 1000)};
    const auto m = metrics_from_counts(c);
    EXPECT_NEAR(m.f1, 2 * m.iou / (1 + m.iou), 1e-12);
  }
}

TEST(Metrics, PermutationInvariant) {
  Rng rng(2);
  std::vector<int> pred(200), truth(200);
  for (auto& v : pred) v = static_cast<int>(rng.uniform_int(0, 1));
  for (auto& v : truth) v = static_cast<int>(rng.uniform_int(0, 1));
  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  }
  std::vector<int> p2, t2;
  for (auto k : order) {
    p2.push_back(pred[k]);
    t2.push_back(truth[k]);
  }
  EXPECT_EQ(confusion_counts(as_logits(pred), as_tensor(truth)), confusion_counts(as_logits(p2), as_tensor(t2)));
}

TEST(Metrics, MicroAveragingMatchesConcatenation) {
  Rng rng(3);
  std::vector<int> pred(300), truth(300);
  for (auto& v : pred) v = static_cast<int>(rng.uniform_int(0, 1));
  for (auto& v : truth) v = static_cast<int>(rng.uniform_int(0, 1));
  ConfusionCounts summed;
  for (std::size_t start = 0; start < 300; start += 100) {
    const std::vector<int> p(pred.begin() + static_cast<long>(start), pred.begin() + static_cast<long>(start + 100));
    const std::vector<int> t(truth.begin() + static_cast<long>(start), truth.begin() + static_cast<long>(start + 100));
    summed += confusion_counts(as_logits(p), as_tensor(t));
  }
  const auto whole = confusion_counts(as_logits(pred), as_tensor(truth));
  EXPECT_EQ(summed, whole);
  EXPECT_EQ(metrics_from_counts(summed).iou, metrics_from_counts(whole).iou);
}

TEST(Report, KeyValueFormat) {
  const ConfusionCounts c{6, 2, 0, 2};
  const auto text = format_report_key_values(c, metrics_from_counts(c));
  EXPECT_NE(text.find("precision=0.7500\n"), std::string::npos);
  EXPECT_NE(text.find("iou=0.6000\n"), std::string::npos);
  EXPECT_NE(text.find("tp=6\n"), std::string::npos);
  EXPECT_NE(text.find("zero_denominator=0\n"), std::string::npos);
}

TEST(Report, TableCarriesWarning) {
  const ConfusionCounts c{0, 0, 4, 0};
  const auto text = format_report_table(c, metrics_from_counts(c));
  EXPECT_NE(text.find("iou"), std::string::npos);
  EXPECT_NE(text.find("warning"), std::string::npos);
}
