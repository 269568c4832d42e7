#include "uiqbench/leakage.hpp"

#include <algorithm>
#include <fstream>

#include "uiqbench/error.hpp"

namespace uiqbench {

namespace {

constexpr std::size_t kYoutubeIdLength = 11;

bool is_youtube_id_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
         c == '_';
}

bool is_youtube_id(std::string_view s) {
  return s.size() == kYoutubeIdLength && std::all_of(s.begin(), s.end(), is_youtube_id_char);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

}  // namespace

std::string to_string(KeyKind kind) { return kind == KeyKind::kYoutubeId ? "youtube_id" : "filename"; }

KeyKind parse_key_kind(std::string_view s) {
  if (s == "youtube_id") return KeyKind::kYoutubeId;
  if (s == "filename") return KeyKind::kFilename;
  throw ValidationError("unknown key kind '" + std::string(s) + "' (expected youtube_id or filename)");
}

NormalizedKey normalize_wavcaps_id(std::string_view raw) {
  constexpr std::string_view kSuffix = ".wav";
  if (raw.size() == 1 + kYoutubeIdLength + kSuffix.size() && raw.front() == 'Y' &&
      raw.substr(1 + kYoutubeIdLength) == kSuffix && is_youtube_id(raw.substr(1, kYoutubeIdLength))) {
    return {std::string(raw.substr(1, kYoutubeIdLength)), true};
  }
  if (is_youtube_id(raw)) return {std::string(raw), true};
  return {std::string(raw), false};
}

std::string normalize_filename(std::string_view raw) {
  auto begin = std::find_if_not(raw.begin(), raw.end(), is_space);
  auto end = std::find_if_not(raw.rbegin(), raw.rend(), is_space).base();
  std::string out = begin < end ? std::string(begin, end) : std::string();
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
  });
  return out;
}

void CorpusIndex::add(std::string_view raw, std::size_t captions) {
  if (captions == 0) throw ValidationError("caption multiplicity must be positive");
  std::string key;
  if (kind_ == KeyKind::kYoutubeId) {
    auto n = normalize_wavcaps_id(raw);
    key = std::move(n.key);
    if (!n.conforming) non_conforming_.insert(key);
  } else {
    key = normalize_filename(raw);
  }
  if (key.empty()) throw ValidationError("empty key after normalization");
  ++raw_count_;
  multiplicity_[key] += captions;
}

std::size_t CorpusIndex::multiplicity(const std::string& key) const {
  auto it = multiplicity_.find(key);
  return it == multiplicity_.end() ? 0 : it->second;
}

CorpusIndex load_corpus_index(const std::filesystem::path& path, KeyKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  CorpusIndex index(kind);
  std::string line;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    index.add(line);
  }
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return index;
}

OverlapReport overlap_report(const CorpusIndex& eval_index, const CorpusIndex& train_index) {
  if (eval_index.kind() != train_index.kind()) {
    throw ValidationError("overlap_report: key kind mismatch (" + to_string(eval_index.kind()) +
                          " vs " + to_string(train_index.kind()) + ")");
  }
  OverlapReport r;
  r.kind = eval_index.kind();
  r.eval_keys = eval_index.size();
  r.train_keys = train_index.size();
  for (const auto& [key, captions] : eval_index.entries()) {
    if (train_index.contains(key)) {
      r.overlap_keys.insert(key);
      r.duplicated_caption_rows += captions;
    }
  }
  const double overlap = static_cast<double>(r.overlap_keys.size());
  r.clip_overlap_pct = r.eval_keys ? 100.0 * overlap / static_cast<double>(r.eval_keys) : 0.0;
  r.train_side_pct = r.train_keys ? 100.0 * overlap / static_cast<double>(r.train_keys) : 0.0;
  return r;
}

void emit_blocklist(const OverlapReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& key : report.overlap_keys) out << key << '\n';
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace uiqbench
