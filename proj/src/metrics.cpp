#include "uiqbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uiqbench/error.hpp"

namespace uiqbench {

namespace {

void require_nonempty(const std::vector<RankOutcome>& outcomes, const char* metric) {
  if (outcomes.empty()) {
    throw ValidationError(std::string(metric) + ": empty outcome list");
  }
}

void require_k(std::size_t k, const char* metric) {
  if (k == 0) throw ValidationError(std::string(metric) + ": k must be >= 1");
}

std::size_t hn(const RankOutcome& o, const char* metric) {
  if (!o.hn_rank) {
    throw ValidationError(std::string(metric) + ": outcome for query '" + o.query_id +
                          "' has no hard-negative rank");
  }
  return *o.hn_rank;
}

template <typename Pred>
double percent_where(const std::vector<RankOutcome>& outcomes, Pred pred) {
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += pred(o) ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

}  // namespace

double recall_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k) {
  require_nonempty(outcomes, "R@k");
  require_k(k, "R@k");
  return percent_where(outcomes, [k](const RankOutcome& o) { return o.target_rank <= k; });
}

double hnsr_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k) {
  require_nonempty(outcomes, "HNSR@k");
  require_k(k, "HNSR@k");
  return percent_where(outcomes, [k](const RankOutcome& o) {
    const auto h = hn(o, "HNSR@k");
    return o.target_rank <= k && h > k;
  });
}

double hnsr(const std::vector<RankOutcome>& outcomes) {
  require_nonempty(outcomes, "HNSR");
  return percent_where(outcomes, [](const RankOutcome& o) { return hn(o, "HNSR") > o.target_rank; });
}

double tfr(const std::vector<RankOutcome>& outcomes) {
  require_nonempty(outcomes, "TFR");
  return percent_where(outcomes, [](const RankOutcome& o) { return o.target_rank == 1; });
}

double tfr_hn_at_k(const std::vector<RankOutcome>& outcomes, std::size_t k) {
  require_nonempty(outcomes, "TFR-HN@k");
  require_k(k, "TFR-HN@k");
  return percent_where(outcomes, [k](const RankOutcome& o) {
    const auto h = hn(o, "TFR-HN@k");
    return o.target_rank == 1 && h > k;
  });
}

double delta_rank(const std::vector<RankOutcome>& outcomes) {
  require_nonempty(outcomes, "Delta-Rank");
  double sum = 0.0;
  for (const auto& o : outcomes) {
    sum += static_cast<double>(hn(o, "Delta-Rank")) - static_cast<double>(o.target_rank);
  }
  return sum / static_cast<double>(outcomes.size());
}

std::string to_string(Direction d) { return d == Direction::kT2A ? "T2A" : "T2T"; }

Direction parse_direction(const std::string& s) {
  if (s == "T2A" || s == "t2a") return Direction::kT2A;
  if (s == "T2T" || s == "t2t") return Direction::kT2T;
  throw ValidationError("unknown direction '" + s + "'");
}

std::string metric_label(const std::string& metric, std::size_t k) {
  if (metric == "R") return "R@" + std::to_string(k);
  if (k == 0) return metric;
  return metric + "@" + std::to_string(k);
}

void MetricReport::set(MetricKey key, double value, std::size_t count) {
  if (count == 0) {
    throw ValidationError("metric '" + metric_label(key.metric, key.k) + "' reported with zero queries");
  }
  entries[std::move(key)] = MetricValue{value, count};
}

MetricReport aggregate_mean(const std::vector<MetricReport>& reports, const std::string& mean_label) {
  if (reports.empty()) throw ValidationError("aggregate_mean: no reports");

  auto strip = [&](MetricKey k) {
    k.dataset = mean_label;
    return k;
  };
  std::map<MetricKey, std::pair<double, std::size_t>> acc;
  for (const auto& [key, v] : reports.front().entries) {
    auto [it, inserted] = acc.emplace(strip(key), std::pair{0.0, std::size_t{0}});
    if (!inserted) {
      throw ValidationError("aggregate_mean: report mixes datasets for key '" +
                            metric_label(key.metric, key.k) + "'");
    }
  }
  for (const auto& r : reports) {
    if (r.entries.size() != acc.size()) {
      throw ValidationError("aggregate_mean: key-set mismatch across datasets");
    }
    for (const auto& [key, v] : r.entries) {
      auto it = acc.find(strip(key));
      if (it == acc.end()) {
        throw ValidationError("aggregate_mean: key-set mismatch (" + key.dataset + "/" + key.model +
                              "/" + key.query_type + "/" + metric_label(key.metric, key.k) + ")");
      }
      it->second.first += v.value;
      it->second.second += v.count;
    }
  }
  MetricReport out;
  for (const auto& [key, sum] : acc) {
    out.set(key, sum.first / static_cast<double>(reports.size()), sum.second);
  }
  return out;
}

void add_cell_metrics(MetricReport& report, const MetricKey& cell,
                      const std::vector<RankOutcome>& outcomes, const std::vector<std::size_t>& ks) {
  const std::size_t n = outcomes.size();
  auto key = [&](const std::string& metric, std::size_t k) {
    MetricKey m = cell;
    m.metric = metric;
    m.k = k;
    return m;
  };
  for (auto k : ks) report.set(key("R", k), recall_at_k(outcomes, k), n);

  const bool exclusionary =
      std::all_of(outcomes.begin(), outcomes.end(), [](const RankOutcome& o) { return o.hn_rank.has_value(); });
  if (!exclusionary || outcomes.empty()) return;
  for (auto k : ks) report.set(key("HNSR", k), hnsr_at_k(outcomes, k), n);
  report.set(key("HNSR", 0), hnsr(outcomes), n);
  report.set(key("DeltaRank", 0), delta_rank(outcomes), n);
  report.set(key("TFR", 0), tfr(outcomes), n);
  for (auto k : ks) report.set(key("TFR-HN", k), tfr_hn_at_k(outcomes, k), n);
}

std::string format_fixed2(double value) {
  // Nudge by a relative epsilon so values such as 66.665 (stored as 66.66499...)
  // still round half-up as written.
  const double scaled = value * 100.0;
  double rounded = std::floor(scaled + 0.5 + std::abs(scaled) * 1e-12);
  if (rounded == 0.0) rounded = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", rounded / 100.0);
  return buf;
}

}  // namespace uiqbench
