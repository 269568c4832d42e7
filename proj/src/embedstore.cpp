#include "uiqbench/embedstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uiqbench/error.hpp"

namespace uiqbench {

namespace {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void put(std::string& buf, T value) {
  value = to_little_endian(value);
  const auto* p = reinterpret_cast<const char*>(&value);
  buf.append(p, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return to_little_endian(value);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failure on '" + path.string() + "'");
  }
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw IoError("write failure on '" + path.string() + "'");
  }
}

}  // namespace

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, std::uint32_t dim, std::vector<float> data,
                           bool normalized)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), normalized_(normalized) {
  if (dim_ == 0) {
    throw ValidationError("embedding dimension must be positive");
  }
  if (data_.size() != ids_.size() * static_cast<std::size_t>(dim_)) {
    throw ValidationError("embedding payload holds " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(ids_.size()) + " rows x " +
                          std::to_string(dim_));
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw ValidationError("duplicate embedding id '" + ids_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    auto r = row(i);
    double sq = 0.0;
    for (float v : r) {
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite value in embedding '" + ids_[i] + "'");
      }
      sq += static_cast<double>(v) * v;
    }
    if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
      throw ValidationError("embedding '" + ids_[i] + "' is flagged normalized but has norm " +
                            std::to_string(std::sqrt(sq)));
    }
  }
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::index_of(std::string_view id) const {
  auto idx = find(id);
  if (!idx) {
    throw ValidationError("no embedding for id '" + std::string(id) + "'");
  }
  return *idx;
}

bool EmbeddingSet::operator==(const EmbeddingSet& other) const {
  if (ids_ != other.ids_ || dim_ != other.dim_ || normalized_ != other.normalized_) return false;
  // Bitwise comparison so that -0.0f and 0.0f are distinguished.
  return data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

std::filesystem::path ids_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".ids");
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string where = "'" + path.string() + "'";
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw ValidationError(where + ": truncated header at byte offset " +
                          std::to_string(bytes.size()) + " (need " +
                          std::to_string(kEmbeddingHeaderBytes) + ")");
  }
  if (std::memcmp(bytes.data(), kEmbeddingMagic, 4) != 0) {
    throw ValidationError(where + ": bad magic at byte offset 0 (expected \"OEMB\")");
  }
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kEmbeddingFormatVersion) {
    throw ValidationError(where + ": unsupported format version " + std::to_string(version) +
                          " at byte offset 4");
  }
  const auto count = get<std::uint64_t>(bytes, 8);
  const auto dim = get<std::uint32_t>(bytes, 16);
  if (dim == 0) {
    throw ValidationError(where + ": zero dimension at byte offset 16");
  }
  const std::size_t payload = bytes.size() - kEmbeddingHeaderBytes;
  const std::size_t row_bytes = static_cast<std::size_t>(dim) * sizeof(float);
  if (count > payload / row_bytes || payload != count * row_bytes) {
    throw ValidationError(where + ": header declares " + std::to_string(count) + " rows of dim " +
                          std::to_string(dim) + " but payload starting at byte offset " +
                          std::to_string(kEmbeddingHeaderBytes) + " holds " +
                          std::to_string(payload) + " bytes (" + std::to_string(payload / row_bytes) +
                          " full rows)");
  }

  std::vector<float> data(count * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = get<float>(bytes, kEmbeddingHeaderBytes + i * sizeof(float));
  }

  const auto sidecar = ids_sidecar_path(path);
  const std::string id_text = read_file(sidecar);
  std::vector<std::string> ids;
  ids.reserve(count);
  std::size_t start = 0;
  while (start < id_text.size()) {
    auto end = id_text.find('\n', start);
    if (end == std::string::npos) end = id_text.size();
    std::string line = id_text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ids.push_back(std::move(line));
    start = end + 1;
  }
  if (ids.size() != count) {
    throw ValidationError("'" + sidecar.string() + "' lists " + std::to_string(ids.size()) +
                          " ids but matrix has " + std::to_string(count) + " rows");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(where + ": non-finite value in embedding '" + ids[i / dim] +
                            "' at byte offset " +
                            std::to_string(kEmbeddingHeaderBytes + i * sizeof(float)));
    }
  }
  return EmbeddingSet(std::move(ids), dim, std::move(data), false);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::string bytes;
  bytes.reserve(kEmbeddingHeaderBytes + set.data().size() * sizeof(float));
  bytes.append(kEmbeddingMagic, 4);
  put<std::uint32_t>(bytes, kEmbeddingFormatVersion);
  put<std::uint64_t>(bytes, set.size());
  put<std::uint32_t>(bytes, set.dim());
  for (float v : set.data()) put<float>(bytes, v);

  std::string ids;
  for (const auto& id : set.ids()) {
    if (id.find('\n') != std::string::npos) {
      throw ValidationError("embedding id contains a newline: '" + id + "'");
    }
    ids += id;
    ids += '\n';
  }
  write_file(path, bytes);
  write_file(ids_sidecar_path(path), ids);
}

EmbeddingSet l2_normalize(const EmbeddingSet& set) {
  std::vector<float> out(set.data().begin(), set.data().end());
  const std::size_t dim = set.dim();
  for (std::size_t i = 0; i < set.size(); ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = out[i * dim + d];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < kDegenerateNorm) {
      throw ValidationError("degenerate (near-zero) vector for id '" + set.id(i) + "'");
    }
    for (std::size_t d = 0; d < dim; ++d) {
      out[i * dim + d] = static_cast<float>(out[i * dim + d] / norm);
    }
  }
  return EmbeddingSet(set.ids(), set.dim(), std::move(out), true);
}

std::string_view to_string(QueryType type) {
  switch (type) {
    case QueryType::kQuestion:
      return "question";
    case QueryType::kImperative:
      return "imperative";
    case QueryType::kKeyphrase:
      return "keyphrase";
    case QueryType::kParaphrase:
      return "paraphrase";
    case QueryType::kNegative:
      return "negative";
  }
  return "unknown";
}

QueryType parse_query_type(std::string_view token) {
  if (token == "question") return QueryType::kQuestion;
  if (token == "imperative") return QueryType::kImperative;
  if (token == "keyphrase" || token == "tagging") return QueryType::kKeyphrase;
  if (token == "paraphrase") return QueryType::kParaphrase;
  if (token == "negative") return QueryType::kNegative;
  throw ValidationError("unknown query_type '" + std::string(token) +
                        "' (expected question, imperative, keyphrase, paraphrase or negative)");
}

std::string caption_query_id(std::string_view clip_id, std::size_t index) {
  return std::string(clip_id) + "#c" + std::to_string(index);
}

std::string uiq_query_id(std::string_view clip_id, QueryType type) {
  return std::string(clip_id) + "#" + std::string(to_string(type));
}

DatasetManifest::DatasetManifest(std::vector<Clip> clips, std::vector<UiqEntry> uiq_entries,
                                 std::vector<HardNegativePair> hn_pairs)
    : clips_(std::move(clips)), uiq_entries_(std::move(uiq_entries)), hn_pairs_(std::move(hn_pairs)) {
  for (std::size_t i = 0; i < clips_.size(); ++i) {
    const auto& c = clips_[i];
    if (c.clip_id.empty()) throw ValidationError("clip with empty clip_id");
    if (!clip_index_.emplace(c.clip_id, i).second) {
      throw ValidationError("duplicate clip_id '" + c.clip_id + "'");
    }
    if (!c.captions.empty() && c.designated_caption >= c.captions.size()) {
      throw ValidationError("clip '" + c.clip_id + "' designates caption " +
                            std::to_string(c.designated_caption) + " but has " +
                            std::to_string(c.captions.size()) + " captions");
    }
  }

  std::unordered_map<std::string, int> target_count;
  for (const auto& p : hn_pairs_) {
    for (const auto* id : {&p.target_clip_id, &p.hard_negative_clip_id}) {
      if (!has_clip(*id)) {
        throw ValidationError("hn_pair references unknown clip_id '" + *id + "'");
      }
    }
    if (p.target_clip_id == p.hard_negative_clip_id) {
      throw ValidationError("hn_pair target equals hard negative ('" + p.target_clip_id + "')");
    }
    ++target_count[p.target_clip_id];
    hn_by_target_.emplace(p.target_clip_id, p.hard_negative_clip_id);
  }

  std::unordered_map<std::string, std::size_t> query_ids;
  for (auto& e : uiq_entries_) {
    if (!has_clip(e.clip_id)) {
      throw ValidationError("uiq entry references unknown clip_id '" + e.clip_id + "'");
    }
    if (e.query_id.empty()) e.query_id = uiq_query_id(e.clip_id, e.query_type);
    if (!query_ids.emplace(e.query_id, 0).second) {
      throw ValidationError("duplicate uiq query_id '" + e.query_id + "'");
    }
    if (e.query_type == QueryType::kNegative) {
      const auto it = target_count.find(e.clip_id);
      const int n = it == target_count.end() ? 0 : it->second;
      if (n != 1) {
        throw ValidationError("negative query '" + e.query_id + "' on clip '" + e.clip_id +
                              "' must be grounded in exactly one hn_pair (found " +
                              std::to_string(n) + ")");
      }
    }
  }
}

const Clip& DatasetManifest::clip(std::string_view clip_id) const {
  auto it = clip_index_.find(std::string(clip_id));
  if (it == clip_index_.end()) {
    throw ValidationError("unknown clip_id '" + std::string(clip_id) + "'");
  }
  return clips_[it->second];
}

bool DatasetManifest::has_clip(std::string_view clip_id) const {
  return clip_index_.count(std::string(clip_id)) != 0;
}

std::optional<std::string> DatasetManifest::hard_negative_of(std::string_view target_clip_id) const {
  auto it = hn_by_target_.find(std::string(target_clip_id));
  if (it == hn_by_target_.end()) return std::nullopt;
  return it->second;
}

DatasetManifest parse_manifest(std::string_view text, std::string_view source) {
  std::vector<Clip> clips;
  std::vector<UiqEntry> entries;
  std::vector<HardNegativePair> pairs;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }

    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      const std::string kind = rec.at("record").get<std::string>();
      if (kind == "clip") {
        Clip c;
        c.clip_id = rec.at("clip_id").get<std::string>();
        c.captions = rec.value("captions", std::vector<std::string>{});
        c.designated_caption = rec.value("designated_caption", std::size_t{0});
        clips.push_back(std::move(c));
      } else if (kind == "uiq") {
        UiqEntry e;
        e.clip_id = rec.at("clip_id").get<std::string>();
        e.query_type = parse_query_type(rec.at("query_type").get<std::string>());
        e.query_text = rec.at("query_text").get<std::string>();
        e.query_id = rec.value("query_id", std::string{});
        entries.push_back(std::move(e));
      } else if (kind == "hn_pair") {
        pairs.push_back({rec.at("target_clip_id").get<std::string>(),
                         rec.at("hard_negative_clip_id").get<std::string>()});
      } else {
        throw ValidationError("unknown record kind '" + kind + "'");
      }
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": malformed manifest record: " + e.what());
    }
    if (end == text.size()) break;
  }

  try {
    return DatasetManifest(std::move(clips), std::move(entries), std::move(pairs));
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(source) + ": " + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.string());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::string out;
  for (const auto& c : manifest.clips()) {
    nlohmann::json j = {{"record", "clip"}, {"clip_id", c.clip_id}, {"captions", c.captions}};
    if (c.designated_caption != 0) j["designated_caption"] = c.designated_caption;
    out += j.dump() + "\n";
  }
  for (const auto& e : manifest.uiq_entries()) {
    nlohmann::json j = {{"record", "uiq"},
                        {"clip_id", e.clip_id},
                        {"query_type", std::string(to_string(e.query_type))},
                        {"query_text", e.query_text}};
    if (e.query_id != uiq_query_id(e.clip_id, e.query_type)) j["query_id"] = e.query_id;
    out += j.dump() + "\n";
  }
  for (const auto& p : manifest.hn_pairs()) {
    nlohmann::json j = {{"record", "hn_pair"},
                        {"target_clip_id", p.target_clip_id},
                        {"hard_negative_clip_id", p.hard_negative_clip_id}};
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

}  // namespace uiqbench
