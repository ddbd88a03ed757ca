#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "seekmark/dataset.hpp"
#include "seekmark/error.hpp"
#include "seekmark/experiment.hpp"

using namespace seekmark;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seekmark_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string small_config(const fs::path& out, double delta = 5.0, int sequences = 20) {
  return R"({"master_seed": 3, "output_dir": ")" + out.string() + R"(",
    "model": {"vocab_size": 128, "corpus_sequences": 100, "corpus_length": 64},
    "schemes": [{"variant": "seek", "window_size": 4, "hash_space": 4, "delta": )" +
         std::to_string(delta) + R"(},
                {"variant": "kgw-min", "window_size": 2, "hash_space": 16, "delta": )" +
         std::to_string(delta) + R"(}],
    "corpus": {"sequences": )" + std::to_string(sequences) +
         R"(, "prompt_len": 8, "new_tokens": 60},
    "attacks": [{"name": "sub", "kind": "scrub", "params": {"edit_rate": 0.1}},
                {"name": "cp", "kind": "copypaste", "params": {"p_fraction": 0.5}},
                {"name": "spoof", "kind": "spoof", "params": {"train_sequences": 50}}]})";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void expect_validation(const std::string& json, const std::string& needle) {
  try {
    config_from_json(json);
    FAIL() << "accepted: " << json;
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

int run_cli(const std::string& args) {
  const std::string cli = SEEKMARK_CLI_PATH;
  if (cli.empty()) return -1;
  const int rc = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST(Config, RoundTripAndHash) {
  const ExperimentConfig c = config_from_json(small_config("x"));
  const ExperimentConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  moved.master_seed = 4;
  EXPECT_NE(config_hash(moved), config_hash(c));
  EXPECT_EQ(c.schemes[0].vocab_size, 128u);
}

TEST(Config, ValidationPaths) {
  expect_validation(R"({"schemes": [{"variant": "seek", "gamma": 2}]})", "config.schemes[0].gamma");
  expect_validation(R"({"schemes": [{"variant": "seek"}, {"variant": "kgw-min", "gamma": 0}]})",
                    "config.schemes[1].gamma");
  expect_validation(R"({"schemes": []})", "config.schemes");
  expect_validation(R"({"schemes": [{"variant": "seek"}], "corpus": {"sequences": "many"}})",
                    "config.corpus.sequences");
  expect_validation(R"({"schemes": [{"variant": "seek", "vocab_size": 64}]})",
                    "config.schemes[0].vocab_size");
  expect_validation(R"({"schemes": [{"variant": "seek"}], "attacks": [{"kind": "melt"}]})",
                    "config.attacks[0].kind");
  expect_validation(R"({"schemes": [{"variant": "seek", "window_size": 40}]})",
                    "config.corpus.prompt_len");
  expect_validation("{", "malformed");
}

TEST(Pipeline, GenerateWritesFourCorpora) {
  const fs::path dir = scratch("gen");
  ExperimentConfig c = config_from_json(small_config(dir));
  const auto files = cmd_generate(c, 2);
  int jsonl = 0;
  for (const auto& f : files) jsonl += f.extension() == ".jsonl";
  EXPECT_EQ(jsonl, 4);
  const Dataset d = read_dataset(dir / "data" / "seek-h4-d4.wm.jsonl");
  EXPECT_EQ(d.records.size(), 20u);
  EXPECT_EQ(d.header.config_hash, config_hash(c));
  EXPECT_EQ(d.records[3].id, "seek-h4-d4/wm/3");
  EXPECT_EQ(d.records[3].tokens.size(), 68u);
  const std::string first = slurp(dir / "data" / "seek-h4-d4.wm.jsonl");
  cmd_generate(c, 1);
  EXPECT_EQ(slurp(dir / "data" / "seek-h4-d4.wm.jsonl"), first);
  const RunManifest m = RunManifest::from_json(slurp(dir / "manifest.json"));
  ASSERT_EQ(m.stages.size(), 1u);
  for (const auto& f : m.stages[0].files) EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Pipeline, SaturatedDetection) {
  const fs::path dir = scratch("sat");
  ExperimentConfig c = config_from_json(small_config(dir, 50.0));
  cmd_generate(c, 2);
  const fs::path out = cmd_detect(dir / "data" / "seek-h4-d4.wm.jsonl", "", dir / "d.csv", 2);
  const CsvTable t = read_csv(out);
  EXPECT_EQ(t.meta.at("config_hash"), config_hash(c));
  ASSERT_EQ(t.rows.size(), 20u);
  for (const auto& r : t.rows) EXPECT_GT(std::stod(r[t.column("z")]), 10.0);
}

TEST(Pipeline, SchemeMismatchRefused) {
  const fs::path dir = scratch("mismatch");
  cmd_generate(config_from_json(small_config(dir)), 1);
  try {
    cmd_detect(dir / "data" / "seek-h4-d4.wm.jsonl", "kgw-min-h2-d16", dir / "d.csv", 1);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("scheme-id mismatch"), std::string::npos);
  }
}

TEST(Pipeline, CorruptAndMissingFiles) {
  const fs::path dir = scratch("corrupt");
  EXPECT_THROW(read_dataset(dir / "absent.jsonl"), IoError);
  cmd_generate(config_from_json(small_config(dir)), 1);
  const fs::path p = dir / "data" / "seek-h4-d4.wm.jsonl";
  std::string text = slurp(p);
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  text.insert(third + 1, "{not json\n");
  std::ofstream(p, std::ios::binary) << text;
  try {
    read_dataset(p);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(p.string() + ":4"), std::string::npos) << e.what();
  }
  std::string wrong = slurp(dir / "data" / "seek-h4-d4.null.jsonl");
  wrong.replace(wrong.find("\"schema_version\":1"), 18, "\"schema_version\":9");
  std::ofstream(dir / "v9.jsonl", std::ios::binary) << wrong;
  EXPECT_THROW(read_dataset(dir / "v9.jsonl"), ValidationError);
}

TEST(Pipeline, ReportNeedsOutputs) {
  const fs::path dir = scratch("empty");
  try {
    cmd_report(dir);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "no stage outputs found");
  }
}

TEST(Pipeline, FullRunDeterministic) {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunManifest ma = run_pipeline(config_from_json(small_config(a)), 2);
  run_pipeline(config_from_json(small_config(b)), 1);
  std::size_t compared = 0;
  for (const auto& st : ma.stages)
    for (const auto& f : st.files) {
      ASSERT_TRUE(fs::exists(a / f)) << f;
      EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
      const std::string head = slurp(a / f).substr(0, 200);
      if (f != "model.bin" && f != "config.json")
        EXPECT_NE(head.find(ma.config_hash), std::string::npos) << f;
      ++compared;
    }
  EXPECT_GT(compared, 20u);
  const CsvTable det = read_csv(a / "report" / "detection.csv");
  EXPECT_EQ(det.rows.size(), 2u * 3u * 2u);
  const CsvTable spoof = read_csv(a / "report" / "spoofing.csv");
  EXPECT_EQ(spoof.rows.size(), 2u * 2u);
  EXPECT_TRUE(fs::exists(a / "report" / "roc_points.csv"));
  EXPECT_TRUE(fs::exists(a / "report" / "scrub_spoof.csv"));
}

TEST(Pipeline, StandaloneAttackAndCalibrate) {
  const fs::path dir = scratch("standalone");
  cmd_generate(config_from_json(small_config(dir)), 1);
  const fs::path wm = dir / "data" / "seek-h4-d4.wm.jsonl";
  const fs::path null = dir / "data" / "seek-h4-d4.null.jsonl";
  const fs::path out = cmd_attack(wm, "scrub", R"({"edit_rate": 0.3})", dir / "s.jsonl", 5, 1);
  const Dataset d = read_dataset(out);
  EXPECT_EQ(d.header.kind, "attacked");
  EXPECT_EQ(d.records[0].source_seq_id, "seek-h4-d4/wm/0");
  const std::string cp = R"({"host": ")" + null.string() + R"("})";
  EXPECT_NO_THROW(cmd_attack(wm, "copypaste", cp, dir / "cp.jsonl", 5, 1));
  const std::string sp = R"({"model": ")" + (dir / "model.bin").string() + R"(", "base": ")" +
                         null.string() + R"(", "sequences": 5})";
  EXPECT_EQ(read_dataset(cmd_attack(wm, "spoof", sp, dir / "sp.jsonl", 5, 1)).records.size(), 5u);
  EXPECT_THROW(cmd_attack(wm, "melt", "{}", dir / "x.jsonl", 5, 1), ValidationError);
  const CsvTable cal = read_csv(cmd_calibrate(null, {0.1, 0.05}, dir / "cal.csv", 1));
  EXPECT_EQ(cal.rows.size(), 4u);
}

TEST(Cli, ExitCodes) {
  if (std::string(SEEKMARK_CLI_PATH).empty()) GTEST_SKIP() << "CLI not built";
  const fs::path dir = scratch("cli");
  std::ofstream(dir / "cfg.json") << small_config(dir / "run");
  EXPECT_EQ(run_cli("generate --config " + (dir / "cfg.json").string()), 0);
  EXPECT_EQ(run_cli("detect --data " + (dir / "run/data/seek-h4-d4.wm.jsonl").string() + " --out " +
                    (dir / "d.csv").string()),
            0);
  EXPECT_EQ(run_cli("report --run " + (dir / "nothing").string()), 1);
  EXPECT_EQ(run_cli("detect --data " + (dir / "missing.jsonl").string()), 2);
  std::ofstream(dir / "bad.json") << R"({"schemes": [{"variant": "seek", "gamma": 7}]})";
  EXPECT_EQ(run_cli("generate --config " + (dir / "bad.json").string()), 1);
  EXPECT_EQ(run_cli("calibrate --null " + (dir / "run/data/seek-h4-d4.null.jsonl").string() +
                    " --fpr 0.1,oops"),
            1);
  EXPECT_EQ(run_cli("verify-props --grid '{\"hs\":[2],\"ds\":[2],\"gammas\":[0.25],\"trials\":"
                    "20000}' --out " + (dir / "p.csv").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "p.csv"));
}

TEST(Performance, CorpusGenerationBudget) {
  const fs::path dir = scratch("perf");
  const std::string cfg = R"({"output_dir": ")" + dir.string() + R"(",
    "model": {"vocab_size": 1024},
    "schemes": [{"variant": "seek", "window_size": 6, "hash_space": 6}],
    "corpus": {"sequences": 500, "prompt_len": 16, "new_tokens": 200}})";
  const auto t0 = std::chrono::steady_clock::now();
  cmd_generate(config_from_json(cfg), 1);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(s, 60.0);
}
