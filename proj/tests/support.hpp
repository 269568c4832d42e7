// Shared fixtures and brute-force oracles for the unit and acceptance tests.
// Oracles here deliberately avoid the library's own ranking and mining code.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uiqbench/embedstore.hpp"
#include "uiqbench/hnmine.hpp"
#include "uiqbench/simrank.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("uiqbench_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::vector<float> gaussian_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = g(rng);
  return v;
}

inline std::vector<float> unit(std::vector<float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  const double n = std::sqrt(s);
  for (auto& x : v) x = static_cast<float>(x / n);
  return v;
}

inline uiqbench::EmbeddingSet make_set(const std::vector<std::string>& ids,
                                       const std::vector<std::vector<float>>& rows, bool normalized) {
  const std::uint32_t dim = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.front().size());
  std::vector<float> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return uiqbench::EmbeddingSet(ids, dim, std::move(data), normalized);
}

inline uiqbench::EmbeddingSet random_unit_set(std::mt19937_64& rng, const std::vector<std::string>& ids,
                                              std::size_t dim) {
  std::vector<std::vector<float>> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) rows.push_back(unit(gaussian_vector(rng, dim)));
  return make_set(ids, rows, true);
}

// Plain double dot product of float rows, returned at float precision like the library.
inline float naive_cosine(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<float>(s);
}

// Rank oracle: stable sort of all indices by descending score, then find the item.
inline std::size_t sort_rank(std::span<const float> scores, std::size_t item) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), item) - order.begin()) + 1;
}

// Counting oracle for every metric; rates are hits / n * 100 built from integer counts.
struct MetricCounts {
  std::size_t n = 0;
  std::map<std::size_t, std::size_t> recall;  // k -> hits
  std::map<std::size_t, std::size_t> hnsr_k;
  std::map<std::size_t, std::size_t> tfr_hn_k;
  std::size_t hnsr = 0;
  std::size_t tfr = 0;
  long long delta_sum = 0;

  double rate(std::size_t hits) const { return 100.0 * static_cast<double>(hits) / static_cast<double>(n); }
  double delta() const { return static_cast<double>(delta_sum) / static_cast<double>(n); }
};

inline MetricCounts count_metrics(const std::vector<std::pair<std::size_t, std::size_t>>& target_hn,
                                  const std::vector<std::size_t>& ks) {
  MetricCounts c;
  c.n = target_hn.size();
  for (std::size_t k : ks) {
    c.recall[k] = 0;
    c.hnsr_k[k] = 0;
    c.tfr_hn_k[k] = 0;
  }
  for (const auto& [t, h] : target_hn) {
    for (std::size_t k : ks) {
      if (t <= k) ++c.recall[k];
      if (t <= k && !(h <= k)) ++c.hnsr_k[k];
      if (t == 1 && !(h <= k)) ++c.tfr_hn_k[k];
    }
    if (t < h) ++c.hnsr;
    if (t == 1) ++c.tfr;
    c.delta_sum += static_cast<long long>(h) - static_cast<long long>(t);
  }
  return c;
}

// Exhaustive mining oracle. For each candidate the acoustic position is the
// number of rivals that beat it (higher similarity, or equal similarity with a
// smaller id); Stage 1 and 2 keep positions below min(K, ceil(m*N)). The same
// counting rule on semantic similarity (lower wins) picks the final N.
struct OraclePair {
  std::string target;
  std::string hn;
  float acoustic = 0.0f;
  float semantic = 0.0f;
};

struct OracleMining {
  std::vector<OraclePair> pairs;
  std::map<std::string, std::size_t> stage2_size;
  std::set<std::string> failed;
};

inline OracleMining mining_oracle(const uiqbench::EmbeddingSet& audio, const uiqbench::EmbeddingSet& text,
                                  const uiqbench::DatasetManifest& manifest, std::size_t K, double m,
                                  std::size_t N) {
  std::vector<std::string> ids;
  std::map<std::string, std::string> caption_row;
  for (const auto& c : manifest.clips()) {
    ids.push_back(c.clip_id);
    caption_row[c.clip_id] = uiqbench::caption_query_id(c.clip_id, c.designated_caption);
  }
  std::sort(ids.begin(), ids.end());
  const std::size_t keep = std::min<std::size_t>(K, static_cast<std::size_t>(std::ceil(m * N)));

  OracleMining out;
  for (const auto& t : ids) {
    const auto ta = audio.row(audio.index_of(t));
    const auto tc = text.row(text.index_of(caption_row[t]));
    std::map<std::string, float> ac;
    for (const auto& c : ids) {
      if (c != t) ac[c] = naive_cosine(ta, audio.row(audio.index_of(c)));
    }
    std::vector<std::string> survivors;
    for (const auto& [c, s] : ac) {
      std::size_t beaten_by = 0;
      for (const auto& [o, so] : ac) {
        if (o != c && (so > s || (so == s && o < c))) ++beaten_by;
      }
      if (beaten_by < keep) survivors.push_back(c);
    }
    out.stage2_size[t] = survivors.size();
    if (survivors.size() < N) {
      out.failed.insert(t);
      continue;
    }
    std::map<std::string, float> sem;
    for (const auto& c : survivors) sem[c] = naive_cosine(tc, text.row(text.index_of(caption_row[c])));
    std::vector<OraclePair> chosen;
    for (const auto& [c, s] : sem) {
      std::size_t beaten_by = 0;
      for (const auto& [o, so] : sem) {
        if (o != c && (so < s || (so == s && o < c))) ++beaten_by;
      }
      if (beaten_by < N) chosen.push_back({t, c, ac[c], s});
    }
    std::sort(chosen.begin(), chosen.end(), [](const OraclePair& a, const OraclePair& b) {
      return a.acoustic != b.acoustic ? a.acoustic > b.acoustic : a.hn < b.hn;
    });
    out.pairs.insert(out.pairs.end(), chosen.begin(), chosen.end());
  }
  return out;
}

}  // namespace testsupport
