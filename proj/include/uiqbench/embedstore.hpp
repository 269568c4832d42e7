#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uiqbench {

/// An ordered set of fixed-dimension float32 vectors addressed by unique string ids.
///
/// Instances are immutable after construction; the constructor enforces id
/// uniqueness, shape consistency and finiteness. When `normalized` is set, each
/// row must have unit Euclidean norm (within 1e-4).
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::vector<std::string> ids, std::uint32_t dim, std::vector<float> data,
               bool normalized = false);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::uint32_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t row) const { return ids_.at(row); }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> find(std::string_view id) const;
  // Throws ValidationError naming the id when absent.
  std::size_t index_of(std::string_view id) const;

  bool operator==(const EmbeddingSet& other) const;

 private:
  std::vector<std::string> ids_;
  std::uint32_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr char kEmbeddingMagic[4] = {'O', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 4 + 8 + 4;
inline constexpr double kNormTolerance = 1e-4;
inline constexpr double kDegenerateNorm = 1e-12;

std::filesystem::path ids_sidecar_path(const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

// Rows are scaled to unit norm in double precision; a row with norm below 1e-12
// is rejected with the offending id.
EmbeddingSet l2_normalize(const EmbeddingSet& set);

enum class QueryType { kQuestion, kImperative, kKeyphrase, kParaphrase, kNegative };

inline constexpr QueryType kAllQueryTypes[] = {QueryType::kQuestion, QueryType::kImperative,
                                               QueryType::kKeyphrase, QueryType::kParaphrase,
                                               QueryType::kNegative};

std::string_view to_string(QueryType type);
// Accepts the five canonical tokens plus "tagging" (alias of keyphrase).
QueryType parse_query_type(std::string_view token);

struct Clip {
  std::string clip_id;
  std::vector<std::string> captions;
  std::size_t designated_caption = 0;
};

struct UiqEntry {
  std::string query_id;
  std::string clip_id;
  QueryType query_type;
  std::string query_text;
};

struct HardNegativePair {
  std::string target_clip_id;
  std::string hard_negative_clip_id;
};

// Query id of the caption at `index` for a clip: "<clip_id>#c<index>".
std::string caption_query_id(std::string_view clip_id, std::size_t index);
// Default query id of a UIQ entry: "<clip_id>#<query_type>".
std::string uiq_query_id(std::string_view clip_id, QueryType type);

class DatasetManifest {
 public:
  DatasetManifest() = default;
  DatasetManifest(std::vector<Clip> clips, std::vector<UiqEntry> uiq_entries,
                  std::vector<HardNegativePair> hn_pairs);

  const std::vector<Clip>& clips() const noexcept { return clips_; }
  const std::vector<UiqEntry>& uiq_entries() const noexcept { return uiq_entries_; }
  const std::vector<HardNegativePair>& hn_pairs() const noexcept { return hn_pairs_; }

  const Clip& clip(std::string_view clip_id) const;
  bool has_clip(std::string_view clip_id) const;
  // Hard negative paired with a target clip, if any.
  std::optional<std::string> hard_negative_of(std::string_view target_clip_id) const;

 private:
  std::vector<Clip> clips_;
  std::vector<UiqEntry> uiq_entries_;
  std::vector<HardNegativePair> hn_pairs_;
  std::unordered_map<std::string, std::size_t> clip_index_;
  std::unordered_map<std::string, std::string> hn_by_target_;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text, std::string_view source = "<memory>");
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace uiqbench
