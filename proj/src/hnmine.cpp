#include "uiqbench/hnmine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "uiqbench/error.hpp"
#include "uiqbench/simrank.hpp"

namespace uiqbench {

void MiningConfig::validate() const {
  if (candidate_count == 0) throw ValidationError("mining: K must be positive");
  if (final_count_per_target == 0) throw ValidationError("mining: final count must be positive");
  if (candidate_count < final_count_per_target) {
    throw ValidationError("mining: K (" + std::to_string(candidate_count) +
                          ") must be >= final count (" + std::to_string(final_count_per_target) + ")");
  }
  if (!(stage2_multiplier >= 1.0) || !std::isfinite(stage2_multiplier)) {
    throw ValidationError("mining: stage2 multiplier must be >= 1.0");
  }
}

std::size_t MiningConfig::stage2_keep() const {
  return static_cast<std::size_t>(
      std::ceil(stage2_multiplier * static_cast<double>(final_count_per_target)));
}

std::size_t designated_caption_row(const EmbeddingSet& text_emb, const Clip& clip) {
  if (auto r = text_emb.find(caption_query_id(clip.clip_id, clip.designated_caption))) return *r;
  if (auto r = text_emb.find(clip.clip_id)) return *r;
  throw ValidationError("no caption embedding for clip '" + clip.clip_id + "' (looked for '" +
                        caption_query_id(clip.clip_id, clip.designated_caption) + "' and '" +
                        clip.clip_id + "')");
}

namespace {

struct Candidate {
  std::size_t clip = 0;  // index into the sorted clip list
  double acoustic = 0.0;
  double semantic = 0.0;
};

struct TargetResult {
  std::vector<MinedPair> pairs;
  TargetStageCounts counts;
  bool failed = false;
};

}  // namespace

MiningResult mine_pairs(const EmbeddingSet& audio_emb, const EmbeddingSet& text_emb,
                        const DatasetManifest& manifest, const MiningConfig& cfg,
                        std::size_t threads) {
  cfg.validate();
  if (!audio_emb.normalized() || !text_emb.normalized()) {
    throw ValidationError("mine_pairs requires L2-normalized embeddings");
  }

  // Canonical clip order makes the output independent of corpus order.
  std::vector<const Clip*> clips;
  for (const auto& c : manifest.clips()) clips.push_back(&c);
  std::sort(clips.begin(), clips.end(),
            [](const Clip* a, const Clip* b) { return a->clip_id < b->clip_id; });

  const std::size_t n = clips.size();
  std::vector<std::size_t> audio_row(n), text_row(n);
  for (std::size_t i = 0; i < n; ++i) {
    audio_row[i] = audio_emb.index_of(clips[i]->clip_id);
    text_row[i] = designated_caption_row(text_emb, *clips[i]);
  }

  const std::size_t k1 = cfg.candidate_count;
  const std::size_t k2 = cfg.stage2_keep();
  const std::size_t final_n = cfg.final_count_per_target;

  auto mine_target = [&](std::size_t t) {
    TargetResult res;
    res.counts.target_id = clips[t]->clip_id;

    // Stage 1: acoustic top-K, self excluded.
    std::vector<Candidate> cands;
    cands.reserve(n);
    const auto trow = audio_emb.row(audio_row[t]);
    for (std::size_t c = 0; c < n; ++c) {
      if (c == t) continue;
      cands.push_back({c, static_cast<double>(dot(trow, audio_emb.row(audio_row[c]))), 0.0});
    }
    auto by_acoustic = [](const Candidate& a, const Candidate& b) {
      if (a.acoustic != b.acoustic) return a.acoustic > b.acoustic;
      return a.clip < b.clip;  // clips are id-sorted, so this is lexicographic id order
    };
    std::sort(cands.begin(), cands.end(), by_acoustic);
    cands.resize(std::min(cands.size(), k1));
    res.counts.stage1 = cands.size();

    // Stage 2: keep the ceil(m*N) most acoustically similar.
    cands.resize(std::min(cands.size(), k2));
    res.counts.stage2 = cands.size();
    if (!cands.empty()) res.counts.acoustic_threshold = cands.back().acoustic;
    if (cands.size() < final_n) {
      res.failed = true;
      return res;
    }

    // Stage 3: semantic similarity of designated captions.
    const auto caption = text_emb.row(text_row[t]);
    for (auto& c : cands) {
      c.semantic = static_cast<double>(dot(caption, text_emb.row(text_row[c.clip])));
    }

    // Stage 4: keep the N least semantically similar.
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.semantic != b.semantic) return a.semantic < b.semantic;
      return a.clip < b.clip;
    });
    cands.resize(final_n);
    std::sort(cands.begin(), cands.end(), by_acoustic);
    for (const auto& c : cands) {
      res.pairs.push_back({clips[t]->clip_id, clips[c.clip]->clip_id, c.acoustic, c.semantic,
                           c.semantic >= cfg.high_semantic_threshold});
    }
    res.counts.emitted = res.pairs.size();
    return res;
  };

  std::vector<TargetResult> per_target(n);
  const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < n; t += workers) per_target[t] = mine_target(t);
      });
    }
  }

  MiningResult out;
  for (auto& r : per_target) {
    if (r.failed) {
      out.failures.push_back({r.counts.target_id, r.counts.stage2,
                              "only " + std::to_string(r.counts.stage2) +
                                  " candidates after acoustic filtering, need " +
                                  std::to_string(final_n)});
    }
    for (auto& p : r.pairs) out.pairs.push_back(std::move(p));
    out.stages.push_back(std::move(r.counts));
  }
  return out;
}

VerifyResult verify_pairs(const std::vector<MinedPair>& pairs, const std::vector<PairReview>& reviews) {
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < pairs.size(); ++i) index.emplace(std::pair{pairs[i].target_id, pairs[i].hn_id}, i);

  std::map<std::size_t, std::size_t> rejected_by;  // pair index -> review index
  for (std::size_t r = 0; r < reviews.size(); ++r) {
    const auto& rev = reviews[r];
    auto it = index.find({rev.target_id, rev.hn_id});
    if (it == index.end()) {
      throw ValidationError("review " + std::to_string(r) + " references unknown pair (" +
                            rev.target_id + ", " + rev.hn_id + ")");
    }
    if (!rev.accepted) rejected_by.emplace(it->second, r);
  }

  VerifyResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto it = rejected_by.find(i);
    if (it == rejected_by.end()) {
      out.kept.push_back(pairs[i]);
    } else {
      out.removed.push_back({pairs[i], it->second});
    }
  }
  return out;
}

namespace {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace

void save_pairs(const std::vector<MinedPair>& pairs, const std::filesystem::path& path) {
  std::string text;
  for (const auto& p : pairs) {
    nlohmann::json flags = nlohmann::json::array();
    if (p.high_semantic_similarity) flags.push_back("high_semantic_similarity");
    nlohmann::json j = {{"target_id", p.target_id},
                        {"hn_id", p.hn_id},
                        {"acoustic_sim", p.acoustic_sim},
                        {"semantic_sim", p.semantic_sim},
                        {"flags", flags}};
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

std::vector<MinedPair> load_pairs(const std::filesystem::path& path) {
  std::vector<MinedPair> out;
  try {
    for (const auto& j : read_jsonl(path)) {
      MinedPair p;
      p.target_id = j.at("target_id").get<std::string>();
      p.hn_id = j.at("hn_id").get<std::string>();
      p.acoustic_sim = j.at("acoustic_sim").get<double>();
      p.semantic_sim = j.at("semantic_sim").get<double>();
      for (const auto& f : j.value("flags", nlohmann::json::array())) {
        if (f == "high_semantic_similarity") p.high_semantic_similarity = true;
      }
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed pair record: " + e.what());
  }
  return out;
}

std::vector<PairReview> load_reviews(const std::filesystem::path& path) {
  std::vector<PairReview> out;
  try {
    for (const auto& j : read_jsonl(path)) {
      out.push_back({j.at("target_id").get<std::string>(), j.at("hn_id").get<std::string>(),
                     j.at("accepted").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed review record: " + e.what());
  }
  return out;
}

void save_hn_pair_records(const std::vector<MinedPair>& pairs, const std::filesystem::path& path) {
  std::string text;
  for (const auto& p : pairs) {
    nlohmann::json j = {{"record", "hn_pair"},
                        {"target_clip_id", p.target_id},
                        {"hard_negative_clip_id", p.hn_id}};
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

}  // namespace uiqbench
