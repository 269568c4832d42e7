#include <gtest/gtest.h>

#include "support.hpp"
#include "uiqbench/error.hpp"
#include "uiqbench/metrics.hpp"

using namespace uiqbench;

namespace {

std::vector<RankOutcome> outcomes(std::initializer_list<std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<RankOutcome> out;
  int i = 0;
  for (auto [t, h] : pairs) out.push_back({"q" + std::to_string(i++), t, h});
  return out;
}

std::vector<RankOutcome> targets_only(std::initializer_list<std::size_t> ranks) {
  std::vector<RankOutcome> out;
  int i = 0;
  for (auto t : ranks) out.push_back({"q" + std::to_string(i++), t, std::nullopt});
  return out;
}

}  // namespace

TEST(Recall, Examples) {
  EXPECT_NEAR(recall_at_k(targets_only({1, 3, 12}), 5), 66.6667, 1e-4);
  EXPECT_EQ(recall_at_k(targets_only({1}), 1), 100.0);
  EXPECT_THROW(recall_at_k({}, 5), ValidationError);
  EXPECT_THROW(recall_at_k(targets_only({1}), 0), ValidationError);
}

TEST(Recall, AgainstCountingOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> r(1, 40);
  std::vector<RankOutcome> outs;
  std::vector<std::pair<std::size_t, std::size_t>> raw;
  for (int i = 0; i < 1000; ++i) {
    const auto t = r(rng);
    outs.push_back({std::to_string(i), t, std::nullopt});
    raw.push_back({t, 0});
  }
  const auto oracle = testsupport::count_metrics(raw, {1, 5, 10});
  for (std::size_t k : {1u, 5u, 10u}) EXPECT_EQ(recall_at_k(outs, k), oracle.rate(oracle.recall.at(k)));
}

TEST(Hnsr, AtKExamples) {
  EXPECT_EQ(hnsr_at_k(outcomes({{3, 15}}), 10), 100.0);
  EXPECT_EQ(hnsr_at_k(outcomes({{3, 7}}), 10), 0.0);
  EXPECT_EQ(hnsr_at_k(outcomes({{12, 20}}), 10), 0.0);
}

TEST(Hnsr, UnboundedExamples) {
  EXPECT_EQ(hnsr(outcomes({{2, 5}})), 100.0);
  EXPECT_EQ(hnsr(outcomes({{5, 2}})), 0.0);
  EXPECT_NEAR(hnsr(outcomes({{1, 2}, {2, 1}, {3, 9}})), 66.6667, 1e-4);
}

TEST(DeltaRank, Examples) {
  EXPECT_EQ(delta_rank(outcomes({{3, 15}})), 12.0);
  EXPECT_EQ(delta_rank(outcomes({{5, 2}})), -3.0);
  EXPECT_EQ(delta_rank(outcomes({{1, 11}, {2, 3}})), 5.5);
}

TEST(Tfr, Examples) {
  EXPECT_EQ(tfr(outcomes({{1, 11}})), 100.0);
  EXPECT_EQ(tfr_hn_at_k(outcomes({{1, 11}}), 10), 100.0);
  EXPECT_EQ(tfr(outcomes({{1, 5}})), 100.0);
  EXPECT_EQ(tfr_hn_at_k(outcomes({{1, 5}}), 10), 0.0);
  EXPECT_EQ(tfr(outcomes({{2, 50}})), 0.0);
  EXPECT_EQ(tfr_hn_at_k(outcomes({{2, 50}}), 10), 0.0);
}

TEST(Exclusionary, MissingHardNegativeRejected) {
  EXPECT_THROW(hnsr(targets_only({1})), ValidationError);
  EXPECT_THROW(hnsr_at_k(targets_only({1}), 5), ValidationError);
  EXPECT_THROW(delta_rank(targets_only({1})), ValidationError);
  EXPECT_THROW(tfr_hn_at_k(targets_only({1}), 5), ValidationError);
  EXPECT_NO_THROW(tfr(targets_only({1})));
}

TEST(BestPerGroup, KeepsBestRank) {
  std::vector<RankOutcome> outs = {{"a#c0", 5, std::nullopt}, {"a#c1", 2, std::nullopt}, {"b#c0", 7, std::nullopt}};
  const auto best = best_per_group(outs, [](const std::string& q) { return q.substr(0, q.find('#')); });
  ASSERT_EQ(best.size(), 2u);
  EXPECT_EQ(best[0].query_id, "a#c1");
  EXPECT_EQ(best[1].target_rank, 7u);
}

namespace {

MetricReport one_value(const std::string& ds, double v, std::size_t n = 10) {
  MetricReport r;
  r.set({ds, "m", "caption", Direction::kT2A, "R", 5}, v, n);
  return r;
}

}  // namespace

TEST(AggregateMean, ThreeDatasets) {
  const auto m = aggregate_mean({one_value("a", 40), one_value("b", 50), one_value("c", 60)});
  ASSERT_EQ(m.entries.size(), 1u);
  const auto& [key, val] = *m.entries.begin();
  EXPECT_EQ(key.dataset, "mean");
  EXPECT_EQ(val.value, 50.0);
  EXPECT_EQ(val.count, 30u);
}

TEST(AggregateMean, SingleDatasetIsIdentity) {
  const auto m = aggregate_mean({one_value("a", 42.5)});
  EXPECT_EQ(m.entries.begin()->second.value, 42.5);
}

TEST(AggregateMean, MismatchedKeysRejected) {
  auto b = one_value("b", 50);
  b.set({"b", "m", "caption", Direction::kT2A, "R", 10}, 70, 10);
  EXPECT_THROW(aggregate_mean({one_value("a", 40), b}), ValidationError);
}

// Table 6 "Avg UIQ" for M2D-CLAP is printed as 47.76, but the plain mean of its
// four printed R@5 columns is 49.31; the published column is not that mean.
TEST(AggregateMean, PublishedAvgUiqIsNotTheFourColumnMean) {
  const auto m = aggregate_mean({one_value("q", 48.76), one_value("i", 44.74), one_value("k", 53.16),
                                 one_value("p", 50.58)});
  const double mean = m.entries.begin()->second.value;
  EXPECT_EQ(format_fixed2(mean), "49.31");
  EXPECT_NE(format_fixed2(mean), "47.76");
}

TEST(MetricReport, ZeroCountRejected) {
  MetricReport r;
  EXPECT_THROW(r.set({"a", "m", "caption", Direction::kT2A, "R", 5}, 1.0, 0), ValidationError);
}

TEST(CellMetrics, ExclusionaryOnlyWithHardNegatives) {
  MetricReport r;
  const MetricKey cell{"d", "m", "negative", Direction::kT2A, "", 0};
  add_cell_metrics(r, cell, outcomes({{1, 3}, {4, 2}}), {1, 5, 10});
  EXPECT_EQ(r.entries.at({"d", "m", "negative", Direction::kT2A, "R", 5}).value, 100.0);
  EXPECT_EQ(r.entries.at({"d", "m", "negative", Direction::kT2A, "HNSR", 0}).value, 50.0);
  EXPECT_EQ(r.entries.at({"d", "m", "negative", Direction::kT2A, "DeltaRank", 0}).value, 0.0);
  EXPECT_EQ(r.entries.at({"d", "m", "negative", Direction::kT2A, "TFR-HN", 10}).value, 0.0);

  MetricReport plain;
  add_cell_metrics(plain, {"d", "m", "caption", Direction::kT2A, "", 0}, targets_only({1, 2}), {1, 5});
  for (const auto& [k, v] : plain.entries) EXPECT_TRUE(k.metric == "R" || k.metric == "TFR") << k.metric;
}

TEST(Format, HalfUp) {
  EXPECT_EQ(format_fixed2(66.666666), "66.67");
  EXPECT_EQ(format_fixed2(66.665), "66.67");
  EXPECT_EQ(format_fixed2(0.004), "0.00");
  EXPECT_EQ(format_fixed2(-0.001), "0.00");
  EXPECT_EQ(format_fixed2(100.0), "100.00");
  EXPECT_EQ(metric_label("R", 5), "R@5");
  EXPECT_EQ(metric_label("HNSR", 0), "HNSR");
  EXPECT_EQ(metric_label("TFR-HN", 10), "TFR-HN@10");
}
