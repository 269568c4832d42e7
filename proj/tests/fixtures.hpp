// Synthetic on-disk datasets for end-to-end harness runs.
#pragma once

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "uiqbench/embedstore.hpp"

namespace testsupport {

struct SyntheticSpec {
  std::size_t clips = 10;
  std::size_t captions = 5;
  std::size_t dim = 32;
  double noise = 0.0;  // text = audio + noise * gaussian
  bool uiq = true;     // one entry per clip and type, negatives paired with the next clip
  std::uint64_t seed = 1;
  std::string name = "synth";
};

// Writes manifest.jsonl, audio.oemb, captions.oemb and one <type>.oemb per UIQ
// type into `dir`, and returns the dataset block for a run config.
inline nlohmann::json write_synthetic_dataset(const fs::path& dir, const SyntheticSpec& spec,
                                              const std::string& model = "model-a") {
  using namespace uiqbench;
  fs::create_directories(dir);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<float> g(0.0f, 1.0f);

  std::vector<std::string> clip_ids;
  std::vector<std::vector<float>> audio;
  for (std::size_t i = 0; i < spec.clips; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip%05zu", i);
    clip_ids.push_back(buf);
    audio.push_back(gaussian_vector(rng, spec.dim));
  }
  auto noisy = [&](const std::vector<float>& base) {
    std::vector<float> v = base;
    for (auto& x : v) x += static_cast<float>(spec.noise) * g(rng);
    return v;
  };

  std::string manifest;
  std::vector<std::string> cap_ids;
  std::vector<std::vector<float>> cap_rows;
  for (std::size_t i = 0; i < spec.clips; ++i) {
    nlohmann::json caps = nlohmann::json::array();
    for (std::size_t c = 0; c < spec.captions; ++c) {
      caps.push_back("caption " + std::to_string(c) + " for " + clip_ids[i]);
      cap_ids.push_back(caption_query_id(clip_ids[i], c));
      cap_rows.push_back(noisy(audio[i]));
    }
    manifest += nlohmann::json{{"record", "clip"}, {"clip_id", clip_ids[i]}, {"captions", caps}}.dump() + "\n";
  }
  save_embeddings(make_set(clip_ids, audio, false), dir / "audio.oemb");
  save_embeddings(make_set(cap_ids, cap_rows, false), dir / "captions.oemb");

  nlohmann::json t2a = {{"caption", (dir / "captions.oemb").string()}};
  if (spec.uiq) {
    for (auto type : kAllQueryTypes) {
      std::vector<std::string> ids;
      std::vector<std::vector<float>> rows;
      for (std::size_t i = 0; i < spec.clips; ++i) {
        manifest += nlohmann::json{{"record", "uiq"},
                                   {"clip_id", clip_ids[i]},
                                   {"query_type", std::string(to_string(type))},
                                   {"query_text", "query for " + clip_ids[i]}}
                        .dump() +
                    "\n";
        ids.push_back(uiq_query_id(clip_ids[i], type));
        rows.push_back(noisy(audio[i]));
      }
      const auto path = dir / (std::string(to_string(type)) + ".oemb");
      save_embeddings(make_set(ids, rows, false), path);
      t2a[std::string(to_string(type))] = path.string();
    }
    for (std::size_t i = 0; i < spec.clips; ++i) {
      manifest += nlohmann::json{{"record", "hn_pair"},
                                 {"target_clip_id", clip_ids[i]},
                                 {"hard_negative_clip_id", clip_ids[(i + 1) % spec.clips]}}
                      .dump() +
                  "\n";
    }
  }
  write_file(dir / "manifest.jsonl", manifest);

  return {{"name", spec.name},
          {"manifest", (dir / "manifest.jsonl").string()},
          {"audio_embeddings", (dir / "audio.oemb").string()},
          {"models",
           {{{"name", model}, {"t2a", t2a}, {"t2t", {{"captions", (dir / "captions.oemb").string()}}}}}}};
}

}  // namespace testsupport
