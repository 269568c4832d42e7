#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace uiqbench {

enum class KeyKind { kYoutubeId, kFilename };
std::string to_string(KeyKind kind);
KeyKind parse_key_kind(std::string_view s);

struct NormalizedKey {
  std::string key;
  bool conforming = true;
};

// "Y<11-char id>.wav" -> "<11-char id>". A bare 11-character YouTube id is
// already normalized. Anything else passes through unchanged, flagged.
NormalizedKey normalize_wavcaps_id(std::string_view raw);

// ASCII lowercase with surrounding whitespace trimmed; the extension is kept.
std::string normalize_filename(std::string_view raw);

class CorpusIndex {
 public:
  explicit CorpusIndex(KeyKind kind) : kind_(kind) {}

  // Adds one raw row; `captions` is the caption multiplicity it contributes.
  void add(std::string_view raw, std::size_t captions = 1);

  KeyKind kind() const noexcept { return kind_; }
  std::size_t raw_count() const noexcept { return raw_count_; }
  std::size_t size() const noexcept { return multiplicity_.size(); }
  std::size_t non_conforming() const noexcept { return non_conforming_.size(); }
  const std::set<std::string>& non_conforming_keys() const noexcept { return non_conforming_; }
  bool contains(const std::string& key) const { return multiplicity_.count(key) != 0; }
  std::size_t multiplicity(const std::string& key) const;
  const std::map<std::string, std::size_t>& entries() const noexcept { return multiplicity_; }

 private:
  KeyKind kind_;
  std::size_t raw_count_ = 0;
  std::map<std::string, std::size_t> multiplicity_;
  std::set<std::string> non_conforming_;
};

// One raw id per line (one line per caption row); blank lines are skipped.
CorpusIndex load_corpus_index(const std::filesystem::path& path, KeyKind kind);

struct OverlapReport {
  KeyKind kind = KeyKind::kYoutubeId;
  std::set<std::string> overlap_keys;
  std::size_t eval_keys = 0;
  std::size_t train_keys = 0;
  double clip_overlap_pct = 0.0;
  std::size_t duplicated_caption_rows = 0;
  double train_side_pct = 0.0;
};

OverlapReport overlap_report(const CorpusIndex& eval_index, const CorpusIndex& train_index);

// One normalized key per line, sorted.
void emit_blocklist(const OverlapReport& report, const std::filesystem::path& path);

}  // namespace uiqbench
