#include <gtest/gtest.h>

#include <regex>

#include "fixtures.hpp"
#include "uiqbench/error.hpp"
#include "uiqbench/harness.hpp"

using namespace uiqbench;
using testsupport::TempDir;

namespace {

RunConfig config_for(const std::vector<nlohmann::json>& datasets, const std::filesystem::path& out) {
  nlohmann::json j = {{"datasets", datasets}, {"output_dir", out.string()}};
  return parse_run_config(j, out.parent_path());
}

double entry(const MetricReport& r, const std::string& ds, const std::string& type, Direction d,
             const std::string& metric, std::size_t k) {
  return r.entries.at({ds, "model-a", type, d, metric, k}).value;
}

// Pulls every "| name | v | v |" data row out of rendered markdown.
std::vector<std::vector<std::string>> markdown_rows(const std::string& md) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(md);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("| ", 0) != 0 || line.rfind("| Model", 0) == 0) continue;
    std::vector<std::string> cells;
    std::size_t pos = 1;
    while (true) {
      const auto next = line.find('|', pos);
      if (next == std::string::npos) break;
      auto cell = line.substr(pos, next - pos);
      cell = std::regex_replace(cell, std::regex(R"(^\s+|\s+$|\*\*)"), "");
      cells.push_back(cell);
      pos = next + 1;
    }
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Eval, IdenticalTextAndAudioGivesPerfectRecall) {
  TempDir dir;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  const auto res = run_eval(config_for({ds}, dir / "out"));
  EXPECT_EQ(entry(res.report, "synth", "caption", Direction::kT2A, "R", 1), 100.0);
  EXPECT_EQ(entry(res.report, "synth", "question", Direction::kT2A, "R", 1), 100.0);
  EXPECT_EQ(entry(res.report, "synth", "negative", Direction::kT2A, "HNSR", 10), 0.0);  // 10 docs: HN always in top 10
  EXPECT_EQ(entry(res.report, "synth", "negative", Direction::kT2A, "HNSR", 1), 100.0);
  EXPECT_EQ(entry(res.report, "synth", "caption", Direction::kT2T, "R", 1), 100.0);
  // T2T: 10 clips x 4 remaining captions
  EXPECT_EQ(res.report.entries.at({"synth", "model-a", "caption", Direction::kT2T, "R", 1}).count, 40u);
  EXPECT_EQ(res.report.entries.at({"synth", "model-a", "caption", Direction::kT2A, "R", 1}).count, 50u);
}

TEST(Eval, ByteIdenticalOutputsAcrossRunsAndThreads) {
  TempDir dir;
  testsupport::SyntheticSpec spec;
  spec.clips = 40;
  spec.noise = 1.0;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", spec);
  auto cfg = config_for({ds}, dir / "out");
  cfg.threads = 1;
  write_eval_outputs(run_eval(cfg), dir / "run1", ReportFormat::kBoth);
  cfg.threads = 1;
  write_eval_outputs(run_eval(cfg), dir / "run2", ReportFormat::kBoth);
  cfg.threads = 4;
  write_eval_outputs(run_eval(cfg), dir / "run3", ReportFormat::kBoth);
  for (const char* f : {"report.json", "ranks.jsonl", "metrics.csv", "tables.md"}) {
    const auto a = testsupport::read_file(dir / "run1" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, testsupport::read_file(dir / "run2" / f)) << f;
    EXPECT_EQ(a, testsupport::read_file(dir / "run3" / f)) << f;
  }
}

TEST(Eval, CrossDatasetMean) {
  TempDir dir;
  testsupport::SyntheticSpec a, b;
  a.name = "alpha";
  a.noise = 1.0;
  b.name = "beta";
  b.noise = 1.5;
  b.seed = 2;
  const auto res = run_eval(config_for({testsupport::write_synthetic_dataset(dir / "a", a),
                                        testsupport::write_synthetic_dataset(dir / "b", b)},
                                       dir / "out"));
  const double ra = entry(res.report, "alpha", "caption", Direction::kT2A, "R", 5);
  const double rb = entry(res.report, "beta", "caption", Direction::kT2A, "R", 5);
  EXPECT_DOUBLE_EQ(entry(res.report, "mean", "caption", Direction::kT2A, "R", 5), (ra + rb) / 2);
}

TEST(Eval, MissingQueryEmbeddingNamesQuery) {
  TempDir dir;
  auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  // Replace the question embeddings with a file lacking one clip.
  const auto full = load_embeddings(dir / "d" / "question.oemb");
  std::vector<std::string> ids(full.ids().begin() + 1, full.ids().end());
  std::vector<float> data(full.data().begin() + full.dim(), full.data().end());
  save_embeddings(EmbeddingSet(ids, full.dim(), data), dir / "d" / "question.oemb");
  try {
    run_eval(config_for({ds}, dir / "out"));
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("synth/model-a/T2A/question"), std::string::npos) << msg;
    EXPECT_NE(msg.find("clip00000#question"), std::string::npos) << msg;
  }
}

TEST(Eval, SkipsCountedForPartialUiq) {
  TempDir dir;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  // Drop two question entries from the manifest.
  auto text = testsupport::read_file(dir / "d" / "manifest.jsonl");
  for (const char* clip : {"clip00003", "clip00007"}) {
    const std::string line = nlohmann::json{{"record", "uiq"},
                                            {"clip_id", clip},
                                            {"query_type", "question"},
                                            {"query_text", std::string("query for ") + clip}}
                                 .dump() +
                             "\n";
    const auto pos = text.find(line);
    ASSERT_NE(pos, std::string::npos);
    text.erase(pos, line.size());
  }
  testsupport::write_file(dir / "d" / "manifest.jsonl", text);
  const auto res = run_eval(config_for({ds}, dir / "out"));
  EXPECT_EQ(res.report.entries.at({"synth", "model-a", "question", Direction::kT2A, "R", 1}).count, 8u);
  bool found = false;
  for (const auto& s : res.skips) {
    if (s.cell.query_type == "question") {
      EXPECT_EQ(s.skipped, 2u);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Eval, T2tDocIndexBounds) {
  TempDir dir;
  auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  nlohmann::json j = {{"datasets", {ds}}, {"output_dir", (dir / "out").string()}, {"t2t_doc_index", 7}};
  EXPECT_THROW(run_eval(parse_run_config(j, dir.path())), ValidationError);
}

TEST(Config, ParsesAndValidates) {
  TempDir dir;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  nlohmann::json j = {{"datasets", {ds}}, {"ks", {1, 10}}, {"seed", 7}};
  testsupport::write_file(dir / "run.json", "// comment line\n" + j.dump(2));
  const auto cfg = load_run_config(dir / "run.json");
  EXPECT_EQ(cfg.ks, (std::vector<std::size_t>{1, 10}));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.datasets[0].models[0].t2a.size(), 6u);

  nlohmann::json bad = j;
  bad["ks"] = {5, 1};
  EXPECT_THROW(parse_run_config(bad, dir.path()).validate(), ValidationError);
  bad = j;
  bad["datasets"][0]["manifest"] = "nope.jsonl";
  EXPECT_THROW(parse_run_config(bad, dir.path()).validate(), IoError);
  EXPECT_THROW(load_run_config(dir / "missing.json"), IoError);
}

TEST(Config, EnvironmentOverrides) {
  TempDir dir;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  auto cfg = parse_run_config({{"datasets", {ds}}}, dir.path());
  setenv("UIQBENCH_OUTPUT_DIR", "/tmp/elsewhere", 1);
  setenv("UIQBENCH_THREADS", "3", 1);
  apply_env_overrides(cfg);
  unsetenv("UIQBENCH_OUTPUT_DIR");
  unsetenv("UIQBENCH_THREADS");
  EXPECT_EQ(cfg.output_dir, "/tmp/elsewhere");
  EXPECT_EQ(cfg.threads, 3u);
}

TEST(Render, SingleEntryIsOneByOne) {
  MetricReport r;
  r.set({"d", "m", "caption", Direction::kT2A, "R", 1}, 12.345, 3);
  const auto rows = markdown_rows(render_markdown(r));
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_EQ(rows[0].size(), 2u);
  EXPECT_EQ(rows[0][0], "m");
  EXPECT_EQ(rows[0][1], "12.35");
}

TEST(Render, MarkdownRoundTripAndBestFlag) {
  MetricReport r;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 100);
  for (const char* model : {"m1", "m2", "m3"}) {
    for (std::size_t k : {1u, 5u, 10u}) r.set({"d", model, "question", Direction::kT2A, "R", k}, u(rng), 10);
  }
  const auto md = render_markdown(r);
  const auto rows = markdown_rows(md);
  ASSERT_EQ(rows.size(), 3u);
  const std::vector<std::size_t> ks = {1, 5, 10};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(row[c + 1], format_fixed2(r.entries.at({"d", row[0], "question", Direction::kT2A, "R", ks[c]}).value));
    }
  }
  // Exactly one bolded value per column, on the maximum.
  for (std::size_t c = 0; c < 3; ++c) {
    double best = -1;
    std::string best_model;
    for (const char* model : {"m1", "m2", "m3"}) {
      const double v = r.entries.at({"d", model, "question", Direction::kT2A, "R", ks[c]}).value;
      if (v > best) {
        best = v;
        best_model = model;
      }
    }
    EXPECT_NE(md.find("**" + format_fixed2(best) + "**"), std::string::npos);
  }
  EXPECT_THROW(render_markdown(MetricReport{}), ValidationError);
}

TEST(Render, CsvLongForm) {
  MetricReport r;
  r.set({"d", "m1", "caption", Direction::kT2A, "R", 5}, 50, 4);
  r.set({"d", "m2", "caption", Direction::kT2A, "R", 5}, 75, 4);
  const auto csv = render_csv(r);
  EXPECT_EQ(csv,
            "dataset,model,direction,query_type,metric,value,count,best\n"
            "d,m1,T2A,caption,R@5,50.00,4,0\n"
            "d,m2,T2A,caption,R@5,75.00,4,1\n");
}

TEST(Render, UiqSummaryUsesPlainFourWayMean) {
  MetricReport r;
  const std::vector<std::pair<const char*, double>> cols = {
      {"question", 48.76}, {"imperative", 44.74}, {"keyphrase", 53.16}, {"paraphrase", 50.58}};
  for (const auto& [type, v] : cols) r.set({"d", "M2D-CLAP", type, Direction::kT2A, "R", 5}, v, 100);
  EXPECT_EQ(format_fixed2(*four_way_uiq_mean(r, "d", "M2D-CLAP")), "49.31");
  EXPECT_NE(render_markdown(r).find("| 49.31 |"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
  TempDir dir;
  const auto ds = testsupport::write_synthetic_dataset(dir / "d", {});
  const auto res = run_eval(config_for({ds}, dir / "out"));
  const auto back = report_from_json(report_to_json(res));
  EXPECT_EQ(back.entries, res.report.entries);
  EXPECT_EQ(res.provenance.at("version"), kToolVersion);
  EXPECT_EQ(res.provenance.at("config_sha256").get<std::string>().size(), 64u);
}

TEST(Digest, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
