#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uiqbench/metrics.hpp"

namespace uiqbench {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kCaptionQueryType = "caption";

struct ModelConfig {
  std::string name;
  // Falls back to the dataset-level audio embeddings when unset.
  std::optional<std::filesystem::path> audio_embeddings;
  // T2A query embeddings keyed by "caption" or a UIQ type token.
  std::map<std::string, std::filesystem::path> t2a;
  // T2T caption embeddings (ids "<clip>#c<i>").
  std::optional<std::filesystem::path> t2t_captions;
  // Optional replacement document corpus for T2T, keyed by clip id.
  std::optional<std::filesystem::path> t2t_documents;
};

struct DatasetConfig {
  std::string name;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> audio_embeddings;
  std::vector<ModelConfig> models;
};

struct RunConfig {
  std::vector<DatasetConfig> datasets;
  std::vector<std::size_t> ks = {1, 5, 10};
  std::size_t t2t_doc_index = 0;
  std::filesystem::path output_dir = "uiqbench_out";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  // Collapse caption queries to the best-ranked caption per clip.
  bool per_clip_max = false;

  // Checks shapes and that every referenced path exists.
  void validate() const;
};

// Relative paths inside the file are resolved against the file's directory.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
// UIQBENCH_OUTPUT_DIR and UIQBENCH_THREADS override the config file.
void apply_env_overrides(RunConfig& cfg);
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct CellRanks {
  MetricKey cell;  // metric/k unset
  std::vector<RankOutcome> outcomes;
};

struct SkipRecord {
  MetricKey cell;
  std::size_t skipped = 0;  // clips without an entry of this query type
};

struct EvalResult {
  MetricReport report;  // per-dataset entries plus "mean" entries when available
  std::vector<CellRanks> ranks;
  std::vector<SkipRecord> skips;
  std::vector<std::string> notes;
  nlohmann::json provenance;
};

EvalResult run_eval(const RunConfig& cfg);

std::string render_markdown(const MetricReport& report);
std::string render_csv(const MetricReport& report);

// Plain unweighted mean of the question/imperative/keyphrase/paraphrase R@5
// values for one (dataset, model); nullopt when any of the four is missing.
std::optional<double> four_way_uiq_mean(const MetricReport& report, const std::string& dataset,
                                        const std::string& model);

nlohmann::json report_to_json(const EvalResult& result);
MetricReport report_from_json(const nlohmann::json& j);

enum class ReportFormat { kCsv, kMarkdown, kBoth };
ReportFormat parse_report_format(const std::string& s);

// Writes report.json, ranks.jsonl and the requested table files into `dir`.
void write_eval_outputs(const EvalResult& result, const std::filesystem::path& dir, ReportFormat format);
void write_tables(const MetricReport& report, const std::filesystem::path& dir, ReportFormat format);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace uiqbench
