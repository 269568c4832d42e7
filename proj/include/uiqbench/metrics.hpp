#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "uiqbench/simrank.hpp"

namespace uiqbench {

// Rates are percentages in [0, 100]. Every function rejects an empty outcome
// list; the exclusionary metrics also reject outcomes without a hard-negative rank.
double recall_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k);
double hnsr_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k);
double hnsr(const std::vector<RankOutcome>& outcomes);
double tfr(const std::vector<RankOutcome>& outcomes);
double tfr_hn_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k);
// Mean of (hn_rank - target_rank); negative when the hard negative wins.
double delta_rank(const std::vector<RankOutcome>& outcomes);

// Keeps, for each group, the outcome with the best target rank (first wins on ties).
// `group_of` maps a query id to its group (typically the clip id).
template <typename GroupFn>
std::vector<RankOutcome> best_per_group(const std::vector<RankOutcome>& outcomes, GroupFn group_of) {
  std::map<std::string, RankOutcome> best;
  for (const auto& o : outcomes) {
    auto [it, inserted] = best.emplace(group_of(o.query_id), o);
    if (!inserted && o.target_rank < it->second.target_rank) it->second = o;
  }
  std::vector<RankOutcome> out;
  out.reserve(best.size());
  for (auto& [group, o] : best) out.push_back(std::move(o));
  return out;
}

enum class Direction { kT2A, kT2T };
std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

struct MetricKey {
  std::string dataset;
  std::string model;
  std::string query_type;  // "caption" or a UIQ type token
  Direction direction = Direction::kT2A;
  std::string metric;      // R, HNSR@k, HNSR, TFR, TFR-HN, DeltaRank
  std::size_t k = 0;       // 0 when the metric has no cutoff

  auto tie() const { return std::tie(dataset, model, query_type, direction, metric, k); }
  bool operator<(const MetricKey& o) const { return tie() < o.tie(); }
  bool operator==(const MetricKey& o) const { return tie() == o.tie(); }
};

// Human-readable metric label, e.g. "R@5", "HNSR", "TFR-HN@10".
std::string metric_label(const std::string& metric, std::size_t k);

struct MetricValue {
  double value = 0.0;
  std::size_t count = 0;

  bool operator==(const MetricValue&) const = default;
};

struct MetricReport {
  std::map<MetricKey, MetricValue> entries;

  void set(MetricKey key, double value, std::size_t count);
  bool empty() const noexcept { return entries.empty(); }
};

// Unweighted per-key mean across datasets. Keys are compared with the dataset
// field ignored, and every report must carry the same key set. The result uses
// `mean_label` as its dataset name and sums the per-dataset query counts.
MetricReport aggregate_mean(const std::vector<MetricReport>& reports,
                            const std::string& mean_label = "mean");

// Fills the standard metric set for one (dataset, model, direction, query type) cell.
// Exclusionary metrics are added only when every outcome carries an hn_rank.
void add_cell_metrics(MetricReport& report, const MetricKey& cell,
                      const std::vector<RankOutcome>& outcomes, const std::vector<std::size_t>& ks);

// Two decimals, half-up; presentation only.
std::string format_fixed2(double value);

}  // namespace uiqbench
