// uiqbench: batch evaluation of audio-text retrieval over precomputed embeddings.
//
//   uiqbench eval --config run.json [--out DIR] [--threads N] [--seed S] [--format both]
//   uiqbench report --input DIR/report.json --out DIR [--format markdown]
//   uiqbench mine --audio A.oemb --text T.oemb --manifest M.jsonl --out pairs.jsonl
//   uiqbench leakage --kind youtube_id --eval eval_ids.txt --train train_ids.txt --blocklist bl.txt
//   uiqbench train --text T.oemb --audio A.oemb --manifest M.jsonl --out-dir ckpt/
//   uiqbench validate-uiq [--type question] < queries.txt
//
// Exit codes: 0 success, 1 usage, 2 validation failure, 3 I/O.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uiqbench/embedstore.hpp"
#include "uiqbench/error.hpp"
#include "uiqbench/harness.hpp"
#include "uiqbench/hnmine.hpp"
#include "uiqbench/leakage.hpp"
#include "uiqbench/trainer.hpp"
#include "uiqbench/uiqtools.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uiqbench;

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string config;
  std::string out;
  std::size_t threads = 0;
  bool threads_set = false;
  std::uint64_t seed = 0;
  std::string format = "both";
};

int run_eval_cmd(const EvalArgs& a, const CLI::App& cmd) {
  RunConfig cfg = load_run_config(a.config);
  apply_env_overrides(cfg);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (cmd.count("--threads")) cfg.threads = a.threads;
  if (cmd.count("--seed")) cfg.seed = a.seed;
  const auto format = parse_report_format(a.format);

  const auto t0 = std::chrono::steady_clock::now();
  const EvalResult result = run_eval(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_eval_outputs(result, cfg.output_dir, format);

  std::size_t queries = 0;
  for (const auto& c : result.ranks) queries += c.outcomes.size();
  for (const auto& n : result.notes) std::cerr << "note: " << n << '\n';
  std::printf("evaluated %zu queries in %zu cells, wall time %.3f s; wrote %s\n", queries, result.ranks.size(),
              secs, cfg.output_dir.string().c_str());
  return 0;
}

// --- report ---------------------------------------------------------------

int run_report_cmd(const std::string& input, const std::string& out, const std::string& format) {
  std::ifstream in(input);
  if (!in) throw IoError("cannot open '" + input + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(input + ": " + e.what());
  }
  write_tables(report_from_json(j), out, parse_report_format(format));
  return 0;
}

// --- mine -----------------------------------------------------------------

struct MineArgs {
  std::string audio, text, manifest, out;
  std::string reviews, removed_log, manifest_records, stages;
  MiningConfig cfg;
  std::size_t threads = 1;
};

int run_mine_cmd(const MineArgs& a) {
  const auto audio = l2_normalize(load_embeddings(a.audio));
  const auto text = l2_normalize(load_embeddings(a.text));
  const auto manifest = load_manifest(a.manifest);
  auto result = mine_pairs(audio, text, manifest, a.cfg, a.threads);

  for (const auto& f : result.failures) {
    std::cerr << "mining failure: target " << f.target_id << ": " << f.reason << '\n';
  }
  std::vector<MinedPair> pairs = result.pairs;
  if (!a.reviews.empty()) {
    const auto verified = verify_pairs(pairs, load_reviews(a.reviews));
    pairs = verified.kept;
    json log = json::array();
    for (const auto& r : verified.removed) {
      log.push_back({{"target_id", r.pair.target_id}, {"hn_id", r.pair.hn_id}, {"review_index", r.review_index}});
    }
    std::cerr << "review removed " << verified.removed.size() << " pair(s)\n";
    if (!a.removed_log.empty()) write_json(a.removed_log, log);
  }
  save_pairs(pairs, a.out);
  if (!a.manifest_records.empty()) save_hn_pair_records(pairs, a.manifest_records);
  if (!a.stages.empty()) {
    json s = json::array();
    for (const auto& c : result.stages) {
      s.push_back({{"target_id", c.target_id},
                   {"stage1", c.stage1},
                   {"stage2", c.stage2},
                   {"acoustic_threshold", c.acoustic_threshold},
                   {"emitted", c.emitted}});
    }
    write_json(a.stages, s);
  }
  std::printf("mined %zu pair(s), %zu failure(s)\n", pairs.size(), result.failures.size());
  return result.failures.empty() ? 0 : 2;
}

// --- leakage --------------------------------------------------------------

struct LeakageArgs {
  std::string kind = "youtube_id";
  std::string eval, eval_manifest, train, blocklist, out;
};

int run_leakage_cmd(const LeakageArgs& a) {
  const KeyKind kind = parse_key_kind(a.kind);
  if (a.eval.empty() == a.eval_manifest.empty()) throw UsageError("give exactly one of --eval or --eval-manifest");
  CorpusIndex eval_index(kind);
  if (!a.eval.empty()) {
    eval_index = load_corpus_index(a.eval, kind);
  } else {
    const auto manifest = load_manifest(a.eval_manifest);
    for (const auto& c : manifest.clips()) {
      eval_index.add(c.clip_id, std::max<std::size_t>(c.captions.size(), 1));
    }
  }
  const CorpusIndex train_index = load_corpus_index(a.train, kind);
  const auto report = overlap_report(eval_index, train_index);
  if (!a.blocklist.empty()) emit_blocklist(report, a.blocklist);

  json j = {{"kind", to_string(kind)},
            {"eval_keys", report.eval_keys},
            {"train_keys", report.train_keys},
            {"overlap", report.overlap_keys.size()},
            {"clip_overlap_pct", report.clip_overlap_pct},
            {"duplicated_caption_rows", report.duplicated_caption_rows},
            {"train_side_pct", report.train_side_pct},
            {"eval_non_conforming", eval_index.non_conforming()},
            {"train_non_conforming", train_index.non_conforming()}};
  if (!a.out.empty()) write_json(a.out, j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string text, audio, manifest, out_dir;
  TrainConfig cfg;
  std::size_t out_dim = kRetrievalDim;
  double dropout = 0.1;
  double val_fraction = 0.1;
  bool export_embeddings = false;
};

int run_train_cmd(const TrainArgs& a) {
  const auto text = load_embeddings(a.text);
  const auto audio = load_embeddings(a.audio);

  // Pairs: caption rows "<clip>#c<i>" to clip audio when a manifest is given,
  // otherwise rows with identical ids.
  std::vector<std::pair<std::string, TrainPair>> pairs;
  if (!a.manifest.empty()) {
    const auto manifest = load_manifest(a.manifest);
    for (const auto& c : manifest.clips()) {
      for (std::size_t i = 0; i < c.captions.size(); ++i) {
        const auto q = caption_query_id(c.clip_id, i);
        if (auto t = text.find(q)) pairs.push_back({c.clip_id, {*t, audio.index_of(c.clip_id)}});
      }
    }
  } else {
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (auto r = audio.find(text.id(i))) pairs.push_back({text.id(i), {i, *r}});
    }
  }
  if (pairs.empty()) throw ValidationError("no training pairs could be formed");

  // Deterministic clip-level split so captions of one clip stay together.
  std::vector<TrainPair> train_pairs, val_pairs;
  for (const auto& [group, p] : pairs) {
    const double u = counter_uniform(a.cfg.seed, 0x5E1, std::hash<std::string>{}(group), 0, 0);
    (u < a.val_fraction ? val_pairs : train_pairs).push_back(p);
  }
  if (train_pairs.empty()) throw ValidationError("validation split left no training pairs");

  auto text_head = ProjectionHead::initialize(text.dim(), a.out_dim, a.cfg.seed, 1, a.dropout);
  auto audio_head = ProjectionHead::initialize(audio.dim(), a.out_dim, a.cfg.seed, 2, a.dropout);
  const auto res = train(text_head, audio_head, text, audio, train_pairs, val_pairs, a.cfg);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  save_checkpoint(res.text_head, dir / "text_head.oemb");
  save_checkpoint(res.audio_head, dir / "audio_head.oemb");
  save_trace(res.trace, dir / "trace.jsonl");
  if (a.export_embeddings) {
    save_embeddings(project(res.text_head, text), dir / "text_projected.oemb");
    save_embeddings(project(res.audio_head, audio), dir / "audio_projected.oemb");
  }
  std::printf("trained %zu steps on %zu pairs (%zu validation); loss %.6f -> %.6f%s\n",
              res.trace.step_loss.size(), train_pairs.size(), val_pairs.size(),
              res.trace.step_loss.empty() ? 0.0 : res.trace.step_loss.front(),
              res.trace.step_loss.empty() ? 0.0 : res.trace.step_loss.back(),
              res.trace.early_stopped ? " (early stop)" : "");
  return 0;
}

// --- validate-uiq ---------------------------------------------------------

struct ValidateArgs {
  std::string type, input, ratings, out;
  double smoothing = kDefaultKlSmoothing;
  bool population_std = false;
};

int validate_queries(const ValidateArgs& a) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (!a.input.empty() && a.input != "-") {
    file.open(a.input);
    if (!file) throw IoError("cannot open '" + a.input + "'");
    in = &file;
  }
  std::optional<QueryType> fixed;
  if (!a.type.empty()) fixed = parse_query_type(a.type);

  std::size_t line_no = 0, total = 0, invalid = 0;
  std::string line;
  while (std::getline(*in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    QueryType type;
    std::string text = line;
    if (fixed) {
      type = *fixed;
    } else {
      // "<type>: <text>", as in the generation output format.
      const auto colon = line.find(':');
      if (colon == std::string::npos) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected '<type>: <text>' or use --type");
      }
      type = parse_query_type(line.substr(0, colon));
      text = line.substr(colon + 1);
    }
    ++total;
    const auto res = validate_query(text, type);
    if (!res.valid) {
      ++invalid;
      for (const auto& v : res.violations) {
        std::cerr << "line " << line_no << " [" << to_string(type) << "] " << to_string(v.code) << ": " << v.detail
                  << '\n';
      }
    }
  }
  std::printf("%zu/%zu queries valid\n", total - invalid, total);
  return invalid == 0 ? 0 : 2;
}

int rating_stats(const ValidateArgs& a) {
  const auto ratings = load_ratings(a.ratings);
  const auto std_kind = a.population_std ? StdKind::kPopulation : StdKind::kSample;
  json out;
  auto dump = [](const auto& groups) {
    json arr = json::array();
    for (const auto& [key, s] : groups) arr.push_back({{"group", key}, {"mean", s.mean}, {"std", s.std}, {"n", s.n}});
    return arr;
  };
  out["by_type_and_rater_kind"] =
      dump(likert_summary(ratings, {GroupKey::kQueryType, GroupKey::kRaterKind}, std_kind));
  out["by_rater_kind"] = dump(likert_summary(ratings, {GroupKey::kRaterKind}, std_kind));
  out["std_form"] = a.population_std ? "population" : "sample";

  // Per query type: Pearson r between per-sample human mean and LLM score,
  // and KL(human || llm) over the 5 Likert bins.
  json agreement = json::array();
  std::map<std::string, std::vector<Rating>> by_type;
  for (const auto& r : ratings) by_type[r.query_type].push_back(r);
  for (const auto& [type, rows] : by_type) {
    std::map<std::string, std::pair<double, std::size_t>> human;
    std::map<std::string, double> llm;
    std::vector<Rating> human_rows, llm_rows;
    for (const auto& r : rows) {
      if (rater_kind(r.rater) == "human") {
        auto& h = human[r.sample_id];
        h.first += r.score;
        ++h.second;
        human_rows.push_back(r);
      } else {
        llm[r.sample_id] = r.score;
        llm_rows.push_back(r);
      }
    }
    json entry = {{"query_type", type}};
    std::vector<double> x, y;
    for (const auto& [sample, h] : human) {
      if (auto it = llm.find(sample); it != llm.end()) {
        x.push_back(h.first / static_cast<double>(h.second));
        y.push_back(it->second);
      }
    }
    try {
      const auto pr = pearson_r(x, y);
      entry["pearson_r"] = pr.r;
      entry["p_value"] = pr.p_value;
      entry["n"] = x.size();
    } catch (const ValidationError& e) {
      entry["pearson_r"] = nullptr;
      entry["pearson_note"] = e.what();
    }
    if (!human_rows.empty() && !llm_rows.empty()) {
      const auto hp = likert_histogram(human_rows), hq = likert_histogram(llm_rows);
      entry["kl_human_llm"] = kl_divergence(hp, hq, a.smoothing);
      entry["kl_llm_human"] = kl_divergence(hq, hp, a.smoothing);
    }
    agreement.push_back(entry);
  }
  out["agreement"] = agreement;
  out["kl_smoothing"] = a.smoothing;
  if (!a.out.empty()) write_json(a.out, out);
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uiqbench: audio-text retrieval evaluation over precomputed embeddings"};
  app.require_subcommand(1);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Run T2A/T2T/UIQ evaluation from a config file");
  eval->add_option("--config", eval_args.config, "Run config (JSON)")->required();
  eval->add_option("--out", eval_args.out, "Output directory (overrides config and environment)");
  eval->add_option("--threads", eval_args.threads, "Worker threads (0 = hardware)");
  eval->add_option("--seed", eval_args.seed, "Seed recorded in provenance");
  eval->add_option("--format", eval_args.format, "csv, markdown or both")->capture_default_str();

  std::string report_input, report_out, report_format = "both";
  auto* report = app.add_subcommand("report", "Render tables from a report.json");
  report->add_option("--input", report_input, "report.json from eval")->required();
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--format", report_format, "csv, markdown or both")->capture_default_str();

  MineArgs mine_args;
  auto* mine = app.add_subcommand("mine", "Mine acoustically similar, semantically distinct pairs");
  mine->add_option("--audio", mine_args.audio, "Audio embeddings (ids = clip ids)")->required();
  mine->add_option("--text", mine_args.text, "Caption embeddings")->required();
  mine->add_option("--manifest", mine_args.manifest, "Dataset manifest")->required();
  mine->add_option("--out", mine_args.out, "Pair file to write")->required();
  mine->add_option("--k", mine_args.cfg.candidate_count, "Stage 1 candidate count")->capture_default_str();
  mine->add_option("--multiplier", mine_args.cfg.stage2_multiplier, "Stage 2 multiplier")->capture_default_str();
  mine->add_option("--final-count", mine_args.cfg.final_count_per_target, "Pairs per target")->capture_default_str();
  mine->add_option("--reviews", mine_args.reviews, "Review decisions to apply");
  mine->add_option("--removed-log", mine_args.removed_log, "Where to log pairs removed by review");
  mine->add_option("--manifest-records", mine_args.manifest_records, "Also write manifest hn_pair records");
  mine->add_option("--stages", mine_args.stages, "Write per-target stage counts");
  mine->add_option("--threads", mine_args.threads, "Worker threads (0 = hardware)");

  LeakageArgs leak_args;
  auto* leakage = app.add_subcommand("leakage", "Train/eval overlap report and blocklist");
  leakage->add_option("--kind", leak_args.kind, "youtube_id or filename")->capture_default_str();
  leakage->add_option("--eval", leak_args.eval, "Eval ids, one per caption row");
  leakage->add_option("--eval-manifest", leak_args.eval_manifest, "Eval manifest (clip ids, caption counts)");
  leakage->add_option("--train", leak_args.train, "Training corpus ids, one per row")->required();
  leakage->add_option("--blocklist", leak_args.blocklist, "Blocklist to write");
  leakage->add_option("--out", leak_args.out, "Report JSON to write");

  TrainArgs train_args;
  auto* trainc = app.add_subcommand("train", "Train projection heads with symmetric InfoNCE");
  trainc->add_option("--text", train_args.text, "Text backbone embeddings")->required();
  trainc->add_option("--audio", train_args.audio, "Audio backbone embeddings")->required();
  trainc->add_option("--manifest", train_args.manifest, "Pair captions to clips via manifest");
  trainc->add_option("--out-dir", train_args.out_dir, "Checkpoint directory")->required();
  trainc->add_option("--lr", train_args.cfg.learning_rate, "Learning rate")->capture_default_str();
  trainc->add_option("--tau", train_args.cfg.temperature, "Temperature")->capture_default_str();
  trainc->add_option("--batch", train_args.cfg.batch_size, "Batch size")->capture_default_str();
  trainc->add_option("--steps", train_args.cfg.max_steps, "Max steps")->capture_default_str();
  trainc->add_option("--seed", train_args.cfg.seed, "Seed")->capture_default_str();
  trainc->add_option("--weight-decay", train_args.cfg.weight_decay, "AdamW weight decay")->capture_default_str();
  trainc->add_option("--patience", train_args.cfg.patience, "Early-stop patience in epochs (0 = off)");
  trainc->add_option("--out-dim", train_args.out_dim, "Projection width")->capture_default_str();
  trainc->add_option("--dropout", train_args.dropout, "Dropout rate")->capture_default_str();
  trainc->add_option("--val-fraction", train_args.val_fraction, "Validation clip fraction")->capture_default_str();
  trainc->add_flag("--export", train_args.export_embeddings, "Write projected embeddings");

  ValidateArgs val_args;
  auto* validate = app.add_subcommand("validate-uiq", "Check UIQ format rules or summarize ratings");
  validate->add_option("--type", val_args.type, "Query type for every line (else '<type>: <text>')");
  validate->add_option("--input", val_args.input, "Query file (default stdin)");
  validate->add_option("--ratings", val_args.ratings, "Ratings file: print Likert/Pearson/KL statistics");
  validate->add_option("--out", val_args.out, "Write ratings statistics JSON");
  validate->add_option("--smoothing", val_args.smoothing, "KL additive smoothing")->capture_default_str();
  validate->add_flag("--population-std", val_args.population_std, "Population instead of sample std");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*eval) return run_eval_cmd(eval_args, *eval);
    if (*report) return run_report_cmd(report_input, report_out, report_format);
    if (*mine) return run_mine_cmd(mine_args);
    if (*leakage) return run_leakage_cmd(leak_args);
    if (*trainc) return run_train_cmd(train_args);
    if (*validate) return val_args.ratings.empty() ? validate_queries(val_args) : rating_stats(val_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
