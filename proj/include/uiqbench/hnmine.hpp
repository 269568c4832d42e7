#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "uiqbench/embedstore.hpp"

namespace uiqbench {

struct MiningConfig {
  std::size_t candidate_count = 20;  // Stage 1 top-K
  double stage2_multiplier = 3.0;
  std::size_t final_count_per_target = 1;
  // Pairs whose semantic similarity reaches this value are flagged.
  double high_semantic_threshold = 0.9;

  void validate() const;
  // ceil(stage2_multiplier * final_count_per_target)
  std::size_t stage2_keep() const;
};

struct MinedPair {
  std::string target_id;
  std::string hn_id;
  double acoustic_sim = 0.0;
  double semantic_sim = 0.0;
  bool high_semantic_similarity = false;

  bool operator==(const MinedPair&) const = default;
};

struct MiningFailure {
  std::string target_id;
  std::size_t stage2_survivors = 0;
  std::string reason;
};

struct TargetStageCounts {
  std::string target_id;
  std::size_t stage1 = 0;
  std::size_t stage2 = 0;
  double acoustic_threshold = 0.0;  // acoustic similarity of the last Stage 2 survivor
  std::size_t emitted = 0;
};

struct MiningResult {
  std::vector<MinedPair> pairs;  // sorted by target_id, then descending acoustic_sim
  std::vector<MiningFailure> failures;
  std::vector<TargetStageCounts> stages;  // one per target, sorted by target_id
};

// Resolves the caption embedding used for semantic scoring of a clip: the
// row "<clip>#c<designated>" if present, otherwise the row keyed by the clip id.
std::size_t designated_caption_row(const EmbeddingSet& text_emb, const Clip& clip);

// Four-stage mining: acoustic top-K, keep the ceil(m*N) most acoustically
// similar, score caption similarity, keep the N least semantically similar.
// Ties in either similarity are broken by ascending candidate id.
MiningResult mine_pairs(const EmbeddingSet& audio_emb, const EmbeddingSet& text_emb,
                        const DatasetManifest& manifest, const MiningConfig& cfg,
                        std::size_t threads = 1);

struct PairReview {
  std::string target_id;
  std::string hn_id;
  bool accepted = true;
};

struct RemovedPair {
  MinedPair pair;
  std::size_t review_index = 0;  // position in the review list that rejected it
};

struct VerifyResult {
  std::vector<MinedPair> kept;
  std::vector<RemovedPair> removed;
};

// Drops rejected pairs; unreviewed pairs are kept. Reviews naming a pair that
// was not emitted are an error.
VerifyResult verify_pairs(const std::vector<MinedPair>& pairs, const std::vector<PairReview>& reviews);

void save_pairs(const std::vector<MinedPair>& pairs, const std::filesystem::path& path);
std::vector<MinedPair> load_pairs(const std::filesystem::path& path);
std::vector<PairReview> load_reviews(const std::filesystem::path& path);
// Writes manifest-format hn_pair records, one per line.
void save_hn_pair_records(const std::vector<MinedPair>& pairs, const std::filesystem::path& path);

}  // namespace uiqbench
