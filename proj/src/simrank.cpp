#include "uiqbench/simrank.hpp"

#include <algorithm>
#include <thread>
#include <unordered_map>

#include "uiqbench/error.hpp"

namespace uiqbench {

namespace {

// Runs fn(begin, end) over contiguous shards of [0, n).
template <typename Fn>
void parallel_rows(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

float dot(std::span<const float> a, std::span<const float> b) {
  constexpr std::size_t kLanes = 16;
  float lanes[kLanes] = {};
  double total = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  // Float lanes are flushed into the double total every 256 elements so that
  // long vectors do not lose precision.
  while (i + kLanes <= n) {
    const std::size_t block_end = std::min(n - (n - i) % kLanes, i + 256);
    for (; i < block_end; i += kLanes) {
      for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
    }
    for (std::size_t l = 0; l < kLanes; ++l) {
      total += lanes[l];
      lanes[l] = 0.0f;
    }
  }
  for (; i < n; ++i) total += static_cast<double>(a[i]) * b[i];
  return static_cast<float>(total);
}

SimilarityMatrix cosine_matrix(const EmbeddingSet& queries, const EmbeddingSet& docs,
                               std::size_t threads) {
  if (queries.dim() != docs.dim()) {
    throw ValidationError("dimension mismatch: queries have dim " + std::to_string(queries.dim()) +
                          ", docs have dim " + std::to_string(docs.dim()));
  }
  if (!queries.normalized() || !docs.normalized()) {
    throw ValidationError("cosine_matrix requires L2-normalized inputs");
  }
  SimilarityMatrix sim;
  sim.query_ids = queries.ids();
  sim.doc_ids = docs.ids();
  sim.scores.assign(queries.size() * docs.size(), 0.0f);
  const std::size_t nd = docs.size();
  parallel_rows(queries.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const auto qrow = queries.row(q);
      float* out = sim.scores.data() + q * nd;
      for (std::size_t d = 0; d < nd; ++d) out[d] = dot(qrow, docs.row(d));
    }
  });
  return sim;
}

std::size_t rank_of(std::span<const float> scores, std::size_t item) {
  if (item >= scores.size()) {
    throw ValidationError("rank_of: item index " + std::to_string(item) + " out of range " +
                          std::to_string(scores.size()));
  }
  const float s = scores[item];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < item; ++j) ahead += scores[j] >= s;
  for (std::size_t j = item + 1; j < scores.size(); ++j) ahead += scores[j] > s;
  return ahead + 1;
}

std::vector<RankOutcome> rank_outcomes(const SimilarityMatrix& sim,
                                       const std::vector<QueryPairing>& pairings,
                                       std::size_t threads) {
  std::unordered_map<std::string, std::size_t> qidx, didx;
  qidx.reserve(sim.query_ids.size());
  didx.reserve(sim.doc_ids.size());
  for (std::size_t i = 0; i < sim.query_ids.size(); ++i) qidx.emplace(sim.query_ids[i], i);
  for (std::size_t i = 0; i < sim.doc_ids.size(); ++i) didx.emplace(sim.doc_ids[i], i);

  struct Resolved {
    std::size_t q, target;
    std::optional<std::size_t> hn;
  };
  std::vector<Resolved> resolved;
  resolved.reserve(pairings.size());
  auto doc = [&](const std::string& id, const std::string& query) {
    auto it = didx.find(id);
    if (it == didx.end()) {
      throw ValidationError("query '" + query + "' references unknown doc id '" + id + "'");
    }
    return it->second;
  };
  for (const auto& p : pairings) {
    auto it = qidx.find(p.query_id);
    if (it == qidx.end()) {
      throw ValidationError("no similarity row for query '" + p.query_id + "'");
    }
    Resolved r{it->second, doc(p.target_doc, p.query_id), std::nullopt};
    if (p.hn_doc) {
      r.hn = doc(*p.hn_doc, p.query_id);
      if (*r.hn == r.target) {
        throw ValidationError("query '" + p.query_id + "' has identical target and hard negative");
      }
    }
    resolved.push_back(r);
  }

  std::vector<RankOutcome> out(pairings.size());
  parallel_rows(resolved.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = sim.row(resolved[i].q);
      out[i].query_id = pairings[i].query_id;
      out[i].target_rank = rank_of(row, resolved[i].target);
      if (resolved[i].hn) out[i].hn_rank = rank_of(row, *resolved[i].hn);
    }
  });
  return out;
}

}  // namespace uiqbench
