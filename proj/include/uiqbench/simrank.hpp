#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uiqbench/embedstore.hpp"

namespace uiqbench {

// scores[q * docs + d] = cosine(query q, doc d), stored as float32.
struct SimilarityMatrix {
  std::vector<std::string> query_ids;
  std::vector<std::string> doc_ids;
  std::vector<float> scores;

  std::size_t num_queries() const noexcept { return query_ids.size(); }
  std::size_t num_docs() const noexcept { return doc_ids.size(); }
  std::span<const float> row(std::size_t q) const {
    return std::span<const float>(scores).subspan(q * doc_ids.size(), doc_ids.size());
  }
  float at(std::size_t q, std::size_t d) const { return scores[q * doc_ids.size() + d]; }
};

struct RankOutcome {
  std::string query_id;
  std::size_t target_rank = 0;  // 1-based
  std::optional<std::size_t> hn_rank;

  bool operator==(const RankOutcome&) const = default;
};

// Which doc is relevant to a query, and optionally which doc is its hard negative.
struct QueryPairing {
  std::string query_id;
  std::string target_doc;
  std::optional<std::string> hn_doc;
};

// Number of workers for parallel loops; 0 selects the hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

// Dot product with 16 float lanes folded into a double in a fixed order.
float dot(std::span<const float> a, std::span<const float> b);

// Both inputs must be unit-normalized and share a dimension. Each entry is
// computed independently, so the output does not depend on `threads`.
SimilarityMatrix cosine_matrix(const EmbeddingSet& queries, const EmbeddingSet& docs,
                               std::size_t threads = 1);

// 1-based rank of `item` under descending score with ties broken by ascending index.
std::size_t rank_of(std::span<const float> scores, std::size_t item);

std::vector<RankOutcome> rank_outcomes(const SimilarityMatrix& sim,
                                       const std::vector<QueryPairing>& pairings,
                                       std::size_t threads = 1);

}  // namespace uiqbench
