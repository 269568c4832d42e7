#include "uiqbench/harness.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "uiqbench/embedstore.hpp"
#include "uiqbench/error.hpp"
#include "uiqbench/simrank.hpp"

namespace uiqbench {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return resolve(base, j.at(key).get<std::string>());
}

bool is_query_type_token(const std::string& t) {
  if (t == kCaptionQueryType) return true;
  try {
    parse_query_type(t);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw IoError(what + ": '" + p.string() + "' does not exist");
}

}  // namespace

void RunConfig::validate() const {
  if (datasets.empty()) throw ValidationError("config: no datasets");
  if (ks.empty()) throw ValidationError("config: ks must not be empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw ValidationError("config: ks must be positive");
    if (i > 0 && ks[i] <= ks[i - 1]) throw ValidationError("config: ks must be sorted ascending and unique");
  }
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (d.name.empty() || d.name == "mean") throw ValidationError("config: invalid dataset name '" + d.name + "'");
    if (!names.insert(d.name).second) throw ValidationError("config: duplicate dataset '" + d.name + "'");
    require_file(d.manifest, "dataset " + d.name + " manifest");
    if (d.models.empty()) throw ValidationError("config: dataset '" + d.name + "' has no models");
    std::set<std::string> models;
    for (const auto& m : d.models) {
      const std::string where = "dataset " + d.name + " model " + m.name;
      if (m.name.empty() || !models.insert(m.name).second) {
        throw ValidationError("config: missing or duplicate model name in dataset '" + d.name + "'");
      }
      const auto audio = m.audio_embeddings ? m.audio_embeddings : d.audio_embeddings;
      if (!m.t2a.empty()) {
        if (!audio) throw ValidationError("config: " + where + " has T2A queries but no audio embeddings");
        require_file(*audio, where + " audio embeddings");
      }
      for (const auto& [type, path] : m.t2a) {
        if (!is_query_type_token(type)) {
          throw ValidationError("config: " + where + " has unknown query type '" + type + "'");
        }
        require_file(path, where + " " + type + " embeddings");
      }
      if (m.t2t_captions) require_file(*m.t2t_captions, where + " T2T caption embeddings");
      if (m.t2t_documents) {
        if (!m.t2t_captions) throw ValidationError("config: " + where + " has T2T documents but no captions");
        require_file(*m.t2t_documents, where + " T2T documents");
      }
    }
  }
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig cfg;
  try {
    if (j.contains("ks")) cfg.ks = j.at("ks").get<std::vector<std::size_t>>();
    cfg.t2t_doc_index = j.value("t2t_doc_index", std::size_t{0});
    if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.threads = j.value("threads", std::size_t{0});
    cfg.per_clip_max = j.value("per_clip_max", false);
    for (const auto& dj : j.at("datasets")) {
      DatasetConfig d;
      d.name = dj.at("name").get<std::string>();
      d.manifest = resolve(base_dir, dj.at("manifest").get<std::string>());
      d.audio_embeddings = optional_path(dj, "audio_embeddings", base_dir);
      for (const auto& mj : dj.at("models")) {
        ModelConfig m;
        m.name = mj.at("name").get<std::string>();
        m.audio_embeddings = optional_path(mj, "audio_embeddings", base_dir);
        if (mj.contains("t2a")) {
          for (const auto& [type, p] : mj.at("t2a").items()) {
            m.t2a[type == "tagging" ? "keyphrase" : type] = resolve(base_dir, p.get<std::string>());
          }
        }
        if (mj.contains("t2t")) {
          const auto& t = mj.at("t2t");
          m.t2t_captions = optional_path(t, "captions", base_dir);
          m.t2t_documents = optional_path(t, "documents", base_dir);
        }
        d.models.push_back(std::move(m));
      }
      cfg.datasets.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* out = std::getenv("UIQBENCH_OUTPUT_DIR"); out && *out) cfg.output_dir = out;
  if (const char* t = std::getenv("UIQBENCH_THREADS"); t && *t) {
    try {
      cfg.threads = std::stoul(t);
    } catch (const std::exception&) {
      throw UsageError(std::string("UIQBENCH_THREADS is not a number: '") + t + "'");
    }
  }
}

json run_config_to_json(const RunConfig& cfg) {
  json datasets = json::array();
  for (const auto& d : cfg.datasets) {
    json models = json::array();
    for (const auto& m : d.models) {
      json mj = {{"name", m.name}};
      if (m.audio_embeddings) mj["audio_embeddings"] = m.audio_embeddings->string();
      json t2a = json::object();
      for (const auto& [type, p] : m.t2a) t2a[type] = p.string();
      mj["t2a"] = t2a;
      json t2t = json::object();
      if (m.t2t_captions) t2t["captions"] = m.t2t_captions->string();
      if (m.t2t_documents) t2t["documents"] = m.t2t_documents->string();
      mj["t2t"] = t2t;
      models.push_back(mj);
    }
    json dj = {{"name", d.name}, {"manifest", d.manifest.string()}, {"models", models}};
    if (d.audio_embeddings) dj["audio_embeddings"] = d.audio_embeddings->string();
    datasets.push_back(dj);
  }
  // Thread count and output dir are excluded: they never change results.
  return {{"datasets", datasets},
          {"ks", cfg.ks},
          {"t2t_doc_index", cfg.t2t_doc_index},
          {"seed", cfg.seed},
          {"per_clip_max", cfg.per_clip_max}};
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

class EmbeddingCache {
 public:
  const EmbeddingSet& get(const fs::path& path) {
    auto it = sets_.find(path.string());
    if (it != sets_.end()) return it->second;
    auto set = l2_normalize(load_embeddings(path));
    return sets_.emplace(path.string(), std::move(set)).first->second;
  }
  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    for (const auto& [p, s] : sets_) out.push_back(p);
    return out;
  }

 private:
  std::map<std::string, EmbeddingSet> sets_;
};

// Rows of `set` for `ids`, in that order, optionally renamed.
EmbeddingSet select_rows(const EmbeddingSet& set, const std::vector<std::string>& ids,
                         const std::vector<std::string>& new_ids, const std::string& where) {
  std::vector<float> data;
  data.reserve(ids.size() * set.dim());
  for (const auto& id : ids) {
    auto row = set.find(id);
    if (!row) throw ValidationError(where + ": missing embedding for id '" + id + "'");
    const auto r = set.row(*row);
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingSet(new_ids.empty() ? ids : new_ids, set.dim(), std::move(data), true);
}

std::string cell_name(const MetricKey& k) {
  return k.dataset + "/" + k.model + "/" + to_string(k.direction) + "/" + k.query_type;
}

}  // namespace

EvalResult run_eval(const RunConfig& cfg) {
  cfg.validate();
  EvalResult result;
  EmbeddingCache cache;
  std::vector<MetricReport> per_dataset;
  std::map<std::string, std::string> manifest_digests;

  for (const auto& ds : cfg.datasets) {
    const DatasetManifest manifest = load_manifest(ds.manifest);
    manifest_digests[ds.manifest.string()] = file_sha256(ds.manifest);
    const auto& clips = manifest.clips();
    if (clips.empty()) throw ValidationError("dataset " + ds.name + ": manifest has no clips");
    std::vector<std::string> clip_ids;
    for (const auto& c : clips) clip_ids.push_back(c.clip_id);

    MetricReport ds_report;
    for (const auto& model : ds.models) {
      auto evaluate = [&](const MetricKey& cell, const EmbeddingSet& queries, const EmbeddingSet& docs,
                          const std::vector<QueryPairing>& pairings, bool collapse_per_clip,
                          const std::map<std::string, std::string>& clip_of) {
        if (queries.dim() != docs.dim()) {
          throw ValidationError(cell_name(cell) + ": dimension mismatch (queries " +
                                std::to_string(queries.dim()) + ", docs " + std::to_string(docs.dim()) + ")");
        }
        const auto sim = cosine_matrix(queries, docs, cfg.threads);
        auto outcomes = rank_outcomes(sim, pairings, cfg.threads);
        if (collapse_per_clip) {
          outcomes = best_per_group(outcomes, [&](const std::string& q) { return clip_of.at(q); });
        }
        add_cell_metrics(ds_report, cell, outcomes, cfg.ks);
        result.ranks.push_back({cell, std::move(outcomes)});
      };

      // Text-to-audio
      if (!model.t2a.empty()) {
        const auto audio_path = model.audio_embeddings ? *model.audio_embeddings : *ds.audio_embeddings;
        const MetricKey base{ds.name, model.name, "", Direction::kT2A, "", 0};
        const auto docs = select_rows(cache.get(audio_path), clip_ids, {},
                                      cell_name(base) + " audio corpus");
        for (const auto& [type, path] : model.t2a) {
          MetricKey cell = base;
          cell.query_type = type;
          std::vector<std::string> qids;
          std::vector<QueryPairing> pairings;
          std::map<std::string, std::string> clip_of;
          std::set<std::string> covered;
          if (type == kCaptionQueryType) {
            for (const auto& c : clips) {
              for (std::size_t i = 0; i < c.captions.size(); ++i) {
                auto q = caption_query_id(c.clip_id, i);
                pairings.push_back({q, c.clip_id, std::nullopt});
                clip_of[q] = c.clip_id;
                qids.push_back(std::move(q));
              }
            }
          } else {
            const QueryType qt = parse_query_type(type);
            for (const auto& e : manifest.uiq_entries()) {
              if (e.query_type != qt) continue;
              std::optional<std::string> hn;
              if (qt == QueryType::kNegative) hn = manifest.hard_negative_of(e.clip_id);
              pairings.push_back({e.query_id, e.clip_id, hn});
              clip_of[e.query_id] = e.clip_id;
              covered.insert(e.clip_id);
              qids.push_back(e.query_id);
            }
            result.skips.push_back({cell, clips.size() - covered.size()});
          }
          if (qids.empty()) {
            result.notes.push_back(cell_name(cell) + ": no queries in manifest, cell skipped");
            continue;
          }
          const auto queries = select_rows(cache.get(path), qids, {}, cell_name(cell));
          evaluate(cell, queries, docs, pairings, cfg.per_clip_max && type == kCaptionQueryType, clip_of);
        }
      }

      // Text-to-text
      if (model.t2t_captions) {
        MetricKey cell{ds.name, model.name, kCaptionQueryType, Direction::kT2T, "", 0};
        const EmbeddingSet& captions = cache.get(*model.t2t_captions);
        EmbeddingSet docs;
        const bool external_docs = model.t2t_documents.has_value();
        if (external_docs) {
          docs = select_rows(cache.get(*model.t2t_documents), clip_ids, {}, cell_name(cell) + " documents");
        } else {
          std::vector<std::string> doc_rows;
          for (const auto& c : clips) {
            if (cfg.t2t_doc_index >= c.captions.size()) {
              throw ValidationError(cell_name(cell) + ": t2t_doc_index " + std::to_string(cfg.t2t_doc_index) +
                                    " exceeds caption count of clip '" + c.clip_id + "'");
            }
            doc_rows.push_back(caption_query_id(c.clip_id, cfg.t2t_doc_index));
          }
          docs = select_rows(captions, doc_rows, clip_ids, cell_name(cell) + " documents");
        }
        std::vector<std::string> qids;
        std::vector<QueryPairing> pairings;
        std::map<std::string, std::string> clip_of;
        for (const auto& c : clips) {
          for (std::size_t i = 0; i < c.captions.size(); ++i) {
            if (!external_docs && i == cfg.t2t_doc_index) continue;
            auto q = caption_query_id(c.clip_id, i);
            pairings.push_back({q, c.clip_id, std::nullopt});
            clip_of[q] = c.clip_id;
            qids.push_back(std::move(q));
          }
        }
        if (qids.empty()) {
          result.notes.push_back(cell_name(cell) + ": no caption queries remain, cell skipped");
        } else {
          const auto queries = select_rows(captions, qids, {}, cell_name(cell));
          evaluate(cell, queries, docs, pairings, cfg.per_clip_max, clip_of);
        }
      }
    }
    if (!ds_report.empty()) per_dataset.push_back(ds_report);
    for (auto& [k, v] : ds_report.entries) result.report.entries.emplace(k, v);
  }

  if (per_dataset.size() >= 2) {
    try {
      const auto mean = aggregate_mean(per_dataset, "mean");
      for (auto& [k, v] : mean.entries) result.report.entries.emplace(k, v);
    } catch (const ValidationError& e) {
      result.notes.push_back(std::string("cross-dataset mean omitted: ") + e.what());
    }
  }

  json inputs = json::object();
  for (const auto& [p, d] : manifest_digests) inputs[p] = d;
  for (const auto& p : cache.paths()) {
    inputs[p] = file_sha256(p);
    inputs[ids_sidecar_path(p).string()] = file_sha256(ids_sidecar_path(p));
  }
  result.provenance = {{"tool", "uiqbench"},
                       {"version", kToolVersion},
                       {"config_sha256", sha256_hex(run_config_to_json(cfg).dump())},
                       {"inputs_sha256", inputs}};
  return result;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

int metric_order(const std::string& m) {
  static const std::vector<std::string> order = {"R", "HNSR", "DeltaRank", "TFR", "TFR-HN"};
  auto it = std::find(order.begin(), order.end(), m);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

int query_type_order(const std::string& t) {
  static const std::vector<std::string> order = {"caption",    "question", "imperative",
                                                 "keyphrase",  "paraphrase", "negative"};
  auto it = std::find(order.begin(), order.end(), t);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

struct Column {
  std::string dataset;
  std::string metric;
  std::size_t k;

  auto tie() const { return std::tie(dataset, metric, k); }
};

struct Table {
  std::string title;
  std::vector<Column> columns;
  std::vector<std::string> models;
  std::map<std::pair<std::string, std::size_t>, double> cells;  // (model, column index)
  std::map<std::size_t, double> best;                            // column -> max
};

// Groups report entries into one table per (direction, query type) and
// dataset scope ("mean" gets its own tables).
std::vector<Table> build_tables(const MetricReport& report) {
  struct Group {
    Direction direction;
    std::string query_type;
    bool mean;
  };
  auto group_less = [](const Group& a, const Group& b) {
    return std::tuple(a.mean, a.direction, query_type_order(a.query_type), a.query_type) <
           std::tuple(b.mean, b.direction, query_type_order(b.query_type), b.query_type);
  };
  std::map<Group, std::vector<std::pair<MetricKey, MetricValue>>, decltype(group_less)> groups(group_less);
  std::vector<std::string> dataset_order;
  for (const auto& [k, v] : report.entries) {
    groups[{k.direction, k.query_type, k.dataset == "mean"}].push_back({k, v});
  }

  std::vector<Table> tables;
  for (const auto& [g, entries] : groups) {
    Table t;
    t.title = to_string(g.direction) + " / " + g.query_type + (g.mean ? " (mean across datasets)" : "");
    std::vector<Column> cols;
    std::vector<std::string> models;
    for (const auto& [k, v] : entries) {
      Column c{k.dataset, k.metric, k.k};
      if (std::none_of(cols.begin(), cols.end(), [&](const Column& x) { return x.tie() == c.tie(); })) {
        cols.push_back(c);
      }
      if (std::find(models.begin(), models.end(), k.model) == models.end()) models.push_back(k.model);
    }
    std::stable_sort(cols.begin(), cols.end(), [](const Column& a, const Column& b) {
      return std::tuple(a.dataset, metric_order(a.metric), a.metric, a.k) <
             std::tuple(b.dataset, metric_order(b.metric), b.metric, b.k);
    });
    t.columns = cols;
    t.models = models;
    for (const auto& [k, v] : entries) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].tie() == Column{k.dataset, k.metric, k.k}.tie()) {
          t.cells[{k.model, c}] = v.value;
          auto it = t.best.find(c);
          if (it == t.best.end() || v.value > it->second) t.best[c] = v.value;
        }
      }
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::string metric_column_label(const Column& c, bool with_dataset) {
  const std::string m = metric_label(c.metric, c.k);
  return with_dataset ? c.dataset + " " + m : m;
}

}  // namespace

std::optional<double> four_way_uiq_mean(const MetricReport& report, const std::string& dataset,
                                        const std::string& model) {
  double sum = 0.0;
  for (const char* type : {"question", "imperative", "keyphrase", "paraphrase"}) {
    auto it = report.entries.find(MetricKey{dataset, model, type, Direction::kT2A, "R", 5});
    if (it == report.entries.end()) return std::nullopt;
    sum += it->second.value;
  }
  return sum / 4.0;
}

std::string render_markdown(const MetricReport& report) {
  if (report.empty()) throw ValidationError("render: empty report");
  std::ostringstream out;
  out << "# Retrieval report\n\nValues are percentages except Delta-Rank (mean rank gap). "
         "Best value per column in bold.\n";
  for (const auto& t : build_tables(report)) {
    const bool mean = t.title.find("(mean") != std::string::npos;
    out << "\n## " << t.title << "\n\n| Model |";
    for (const auto& c : t.columns) out << ' ' << metric_column_label(c, !mean) << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& m : t.models) {
      out << "| " << m << " |";
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        auto it = t.cells.find({m, c});
        if (it == t.cells.end()) {
          out << " - |";
          continue;
        }
        const std::string v = format_fixed2(it->second);
        const bool best = format_fixed2(t.best.at(c)) == v;
        out << ' ' << (best ? "**" + v + "**" : v) << " |";
      }
      out << '\n';
    }
  }

  // UIQ summary: four R@5 columns and their plain mean, per dataset scope.
  std::set<std::pair<std::string, std::string>> scopes;
  for (const auto& [k, v] : report.entries) scopes.insert({k.dataset, k.model});
  std::map<std::string, std::vector<std::pair<std::string, double>>> summary;
  for (const auto& [ds, model] : scopes) {
    if (auto m = four_way_uiq_mean(report, ds, model)) summary[ds].push_back({model, *m});
  }
  for (const auto& [ds, rows] : summary) {
    out << "\n## UIQ summary / " << ds
        << "\n\nPlain mean of the question, imperative, keyphrase and paraphrase R@5 values.\n\n"
        << "| Model | Question R@5 | Imperative R@5 | Keyphrase R@5 | Paraphrase R@5 | Hard Neg. HNSR@10 | "
           "Mean of 4 R@5 |\n|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& [model, mean] : rows) {
      out << "| " << model << " |";
      for (const char* type : {"question", "imperative", "keyphrase", "paraphrase"}) {
        out << ' ' << format_fixed2(report.entries.at({ds, model, type, Direction::kT2A, "R", 5}).value) << " |";
      }
      auto hn = report.entries.find({ds, model, "negative", Direction::kT2A, "HNSR", 10});
      out << ' ' << (hn == report.entries.end() ? std::string("-") : format_fixed2(hn->second.value)) << " |";
      out << ' ' << format_fixed2(mean) << " |\n";
    }
  }
  return out.str();
}

std::string render_csv(const MetricReport& report) {
  if (report.empty()) throw ValidationError("render: empty report");
  std::map<std::tuple<std::string, Direction, std::string, std::string, std::size_t>, double> best;
  for (const auto& [k, v] : report.entries) {
    auto key = std::tuple(k.dataset, k.direction, k.query_type, k.metric, k.k);
    auto it = best.find(key);
    if (it == best.end() || v.value > it->second) best[key] = v.value;
  }
  std::ostringstream out;
  out << "dataset,model,direction,query_type,metric,value,count,best\n";
  for (const auto& [k, v] : report.entries) {
    const std::string value = format_fixed2(v.value);
    const bool is_best = format_fixed2(best.at({k.dataset, k.direction, k.query_type, k.metric, k.k})) == value;
    out << k.dataset << ',' << k.model << ',' << to_string(k.direction) << ',' << k.query_type << ','
        << metric_label(k.metric, k.k) << ',' << value << ',' << v.count << ',' << (is_best ? 1 : 0) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json report_to_json(const EvalResult& result) {
  json entries = json::array();
  for (const auto& [k, v] : result.report.entries) {
    entries.push_back({{"dataset", k.dataset},
                       {"model", k.model},
                       {"direction", to_string(k.direction)},
                       {"query_type", k.query_type},
                       {"metric", k.metric},
                       {"k", k.k},
                       {"label", metric_label(k.metric, k.k)},
                       {"value", v.value},
                       {"count", v.count}});
  }
  json skips = json::array();
  for (const auto& s : result.skips) {
    skips.push_back({{"dataset", s.cell.dataset},
                     {"model", s.cell.model},
                     {"direction", to_string(s.cell.direction)},
                     {"query_type", s.cell.query_type},
                     {"skipped_clips", s.skipped}});
  }
  return {{"provenance", result.provenance}, {"entries", entries}, {"skipped", skips}, {"notes", result.notes}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  try {
    for (const auto& e : j.at("entries")) {
      r.set({e.at("dataset").get<std::string>(), e.at("model").get<std::string>(),
             e.at("query_type").get<std::string>(), parse_direction(e.at("direction").get<std::string>()),
             e.at("metric").get<std::string>(), e.at("k").get<std::size_t>()},
            e.at("value").get<double>(), e.at("count").get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  return r;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  if (s == "both") return ReportFormat::kBoth;
  throw UsageError("unknown format '" + s + "' (expected csv, markdown or both)");
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

void write_tables(const MetricReport& report, const fs::path& dir, ReportFormat format) {
  ensure_dir(dir);
  if (format != ReportFormat::kMarkdown) write_text(dir / "metrics.csv", render_csv(report));
  if (format != ReportFormat::kCsv) write_text(dir / "tables.md", render_markdown(report));
}

void write_eval_outputs(const EvalResult& result, const fs::path& dir, ReportFormat format) {
  ensure_dir(dir);
  write_text(dir / "report.json", report_to_json(result).dump(2) + "\n");
  std::string ranks;
  for (const auto& cell : result.ranks) {
    for (const auto& o : cell.outcomes) {
      json j = {{"dataset", cell.cell.dataset},
                {"model", cell.cell.model},
                {"direction", to_string(cell.cell.direction)},
                {"query_type", cell.cell.query_type},
                {"query_id", o.query_id},
                {"target_rank", o.target_rank}};
      if (o.hn_rank) j["hn_rank"] = *o.hn_rank;
      ranks += j.dump() + "\n";
    }
  }
  write_text(dir / "ranks.jsonl", ranks);
  write_tables(result.report, dir, format);
}

}  // namespace uiqbench
