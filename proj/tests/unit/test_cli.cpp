// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "softtopic/artifacts.hpp"
#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"
#include "softtopic/evalsuite.hpp"
#include "softtopic/topicmodel.hpp"
#include "softtopic_cli/commands.hpp"
#include "softtopic_cli/run_config.hpp"
#include "test_support.hpp"

namespace softtopic::cli {
namespace {

using softtopic::testing::TempDir;
using softtopic::testing::fixture;
using softtopic::testing::read_file;
using softtopic::testing::write_file;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(RunConfig, SectionsCommentsAndDefaults) {
  const RunConfig c = parse_run_config(
      "seed = 7  # trailing comment\n"
      "data = artifacts\n"
      "[model]\n"
      "num_topics = 4\n"
      "loss_mode = nll\n"
      "[sweep]\n"
      "seeds = 1,2\n"
      "axes = temperature=1,3; ablation=original,nll\n",
      "/base");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.data, std::filesystem::path("/base/artifacts"));
  EXPECT_FALSE(c.out.has_value());
  EXPECT_EQ(c.model.num_topics, 4u);
  EXPECT_EQ(c.model.loss_mode, LossMode::nll);
  EXPECT_EQ(c.model.hidden_dim, 200u);
  EXPECT_EQ(c.train.learning_rate, 2e-3);
  EXPECT_EQ(c.sweep_seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.sweep_axes, (std::vector<std::string>{"temperature=1,3", "ablation=original,nll"}));
}

TEST(RunConfig, DottedKeysEqualSections) {
  const RunConfig a = parse_run_config("[train]\nepochs = 9\n");
  const RunConfig b = parse_run_config("train.epochs = 9\n");
  EXPECT_EQ(a.train.epochs, b.train.epochs);
}

TEST(RunConfig, ErrorsCarryLineNumbers) {
  const auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("seed = 1\nmodel.colour = red\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("seed = 1\nmodel.colour = red\n").find("model.colour"), std::string::npos);
  EXPECT_NE(message("[model]\nnum_topics = x\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("seed\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[model\n").find("line 1"), std::string::npos);
}

TEST(RunConfig, KeysAreSortedAndComplete) {
  const auto keys = run_config_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  for (const char* k : {"seed", "model.temperature", "train.epochs", "eval.metrics", "synth.temperature", "sweep.axes"})
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
}

TEST(Cli, PreprocessMatchesGoldenVocabulary) {
  TempDir dir;
  const Result r = invoke({"preprocess", "--corpus", fixture("three_docs.jsonl").string(), "--out",
                           dir.path().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string golden = read_file(fixture("three_docs.vocab.txt"));
  EXPECT_EQ(read_file(dir / "vocab.txt"), golden);
  EXPECT_EQ(sha256_file(dir / "vocab.txt"), sha256_hex(golden));
  const Matrix bow = read_dtm1(dir / "bow.dtm");
  EXPECT_EQ(bow, Matrix::from_rows({{0, 0, 1, 2, 0, 0, 0, 0, 1, 0},
                                    {0, 2, 1, 0, 0, 0, 1, 0, 0, 0},
                                    {2, 0, 0, 0, 1, 1, 0, 1, 0, 1}}));
  EXPECT_EQ(read_file(dir / "labels.csv"), "id,label\nn1,space\nn2,space\nn3,food\n");
  EXPECT_EQ(read_file(dir / "ids.txt"), "n1\nn2\nn3\n");
}

TEST(Cli, PreprocessIsIdempotent) {
  TempDir a, b;
  for (const auto* dir : {&a, &b})
    ASSERT_EQ(invoke({"preprocess", "--corpus", fixture("three_docs.jsonl").string(), "--out",
                      dir->path().string()})
                  .code,
              0);
  for (const char* f : {"vocab.txt", "bow.dtm", "ids.txt", "labels.csv"})
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
}

TEST(Cli, PreprocessEmptyCorpus) {
  TempDir dir;
  write_file(dir / "c.jsonl", "{\"id\": \"a\", \"text\": \"the of and\"}\n");
  const Result r = invoke({"preprocess", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: empty_corpus:", 0), 0u) << r.err;
}

// A synthetic artifact set plus a trained checkpoint, shared by the
// command tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new TempDir();
    const std::string cfg = fixture("tiny_run.cfg").string();
    ASSERT_EQ(invoke({"synth", "--config", cfg, "--out", data().string()}).code, 0);
    const Result r = invoke({"train", "--config", cfg, "--data", data().string(), "--out", run().string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete root_;
    root_ = nullptr;
  }

  static std::filesystem::path data() { return root_->path() / "data"; }
  static std::filesystem::path run() { return root_->path() / "run"; }
  static std::vector<std::string> common() {
    return {"--config", fixture("tiny_run.cfg").string(), "--data", data().string()};
  }
  static std::vector<std::string> with(std::vector<std::string> head, std::vector<std::string> tail = {}) {
    const auto c = common();
    head.insert(head.end(), c.begin(), c.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  }

  static TempDir* root_;
};

TempDir* CliPipeline::root_ = nullptr;

TEST_F(CliPipeline, TrainWritesCheckpointAndLog) {
  EXPECT_TRUE(std::filesystem::exists(run() / "checkpoint.bin"));
  const std::string log = read_file(run() / "train.log");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
}

TEST_F(CliPipeline, SeedRepetitionGivesIdenticalCheckpoint) {
  TempDir again;
  ASSERT_EQ(invoke(with({"train"}, {"--out", again.path().string()})).code, 0);
  EXPECT_EQ(sha256_file(again / "checkpoint.bin"), sha256_file(run() / "checkpoint.bin"));
  TempDir other;
  ASSERT_EQ(invoke(with({"train"}, {"--out", other.path().string(), "--seed", "1"})).code, 0);
  EXPECT_NE(sha256_file(other / "checkpoint.bin"), sha256_file(run() / "checkpoint.bin"));
}

TEST_F(CliPipeline, MissingTargetsNamesThePath) {
  TempDir broken;
  for (const char* f : {"vocab.txt", "bow.dtm", "ids.txt", "embeddings.dtm"})
    std::filesystem::copy_file(data() / f, broken / f);
  const Result r = invoke({"train", "--config", fixture("tiny_run.cfg").string(), "--data",
                           broken.path().string(), "--out", (broken / "run").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("targets.dtm"), std::string::npos) << r.err;
}

TEST_F(CliPipeline, EvalReportsRequestedMetrics) {
  TempDir out;
  const Result r = invoke(with({"eval"}, {"--checkpoint", (run() / "checkpoint.bin").string(), "--out",
                                          out.path().string(), "--retrieval-n", "3"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const EvalReport report = EvalReport::from_json(r.out);
  for (const char* k : {"npmi", "i_rbo", "purity", "precision@5", "precision@3"})
    EXPECT_TRUE(report.metrics.count(k)) << k;
  EXPECT_EQ(read_file(out / "eval.json"), r.out);
}

TEST_F(CliPipeline, EvalIsStableAcrossRuns) {
  const auto args = with({"eval"}, {"--checkpoint", (run() / "checkpoint.bin").string()});
  EXPECT_EQ(invoke(args).out, invoke(args).out);
}

TEST_F(CliPipeline, PurityWithoutLabelsIsAnError) {
  TempDir unlabelled;
  for (const auto& e : std::filesystem::directory_iterator(data()))
    if (e.path().filename() != "labels.csv") std::filesystem::copy_file(e.path(), unlabelled / e.path().filename().string());
  const Result r = invoke({"eval", "--config", fixture("tiny_run.cfg").string(), "--data",
                           unlabelled.path().string(), "--checkpoint", (run() / "checkpoint.bin").string(),
                           "--metrics", "purity"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: undefined_metric:", 0), 0u) << r.err;
  const Result ok = invoke({"eval", "--config", fixture("tiny_run.cfg").string(), "--data",
                            unlabelled.path().string(), "--checkpoint", (run() / "checkpoint.bin").string(),
                            "--metrics", "npmi,i_rbo"});
  EXPECT_EQ(ok.code, 0) << ok.err;
}

TEST_F(CliPipeline, TopicsPrintsOneLinePerTopic) {
  TempDir out;
  const Result r = invoke(with({"topics"}, {"--checkpoint", (run() / "checkpoint.bin").string(), "--topn", "1",
                                            "--out", out.path().string()}));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.rfind("topic " + std::to_string(count) + ": ", 0), 0u) << line;
    EXPECT_EQ(std::count(line.begin(), line.end(), ' '), 2) << line;
    ++count;
  }
  EXPECT_EQ(count, 3);
  EXPECT_EQ(read_file(out / "topics.txt"), r.out);
  const Result dflt = invoke(with({"topics"}, {"--checkpoint", (run() / "checkpoint.bin").string()}));
  std::istringstream first(dflt.out);
  std::getline(first, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), ' '), 16) << line;
}

TEST_F(CliPipeline, RetrieveMatchesLibraryRanking) {
  const std::string ck = (run() / "checkpoint.bin").string();
  EXPECT_EQ(invoke(with({"retrieve"}, {"--checkpoint", ck, "--query", "doc00000", "-n", "0"})).out, "");
  const Result r = invoke(with({"retrieve"}, {"--checkpoint", ck, "--query", "doc00000", "-n", "29"}));
  ASSERT_EQ(r.code, 0) << r.err;

  const Dataset d = load_dataset(data());
  const Checkpoint c = load_checkpoint(ck);
  Rng rng(derive_seed(0, "inference"));
  const Matrix theta = infer_theta_matrix(*d.embeddings, c.params, c.config, rng);
  const auto expected = retrieve(theta, 0, 29);
  std::istringstream lines(r.out);
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    const std::string id = line.substr(0, line.find('\t'));
    EXPECT_NE(id, "doc00000");
    ASSERT_LT(i, expected.size());
    EXPECT_EQ(id, d.ids[expected[i].index]);
    ++i;
  }
  EXPECT_EQ(i, 29u);
  const Result missing = invoke(with({"retrieve"}, {"--checkpoint", ck, "--query", "nope"}));
  EXPECT_EQ(missing.code, 1);
}

TEST_F(CliPipeline, AblateWritesOneRowPerCellAndMetric) {
  TempDir out;
  const Result r = invoke(with({"ablate"}, {"--out", out.path().string(), "--axes", "ablation=original,nll_bow"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(out / "sweep.csv");
  // 2 values x 2 seeds x (4 metrics + target_entropy), plus the header.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 5);
  EXPECT_TRUE(std::filesystem::exists(out / "sweep/ablation/nll_bow/seed1/checkpoint.bin"));
  const EvalReport summary = EvalReport::from_json(read_file(out / "eval.json"));
  EXPECT_TRUE(summary.metrics.count("original/purity"));
  EXPECT_TRUE(summary.welch_p_values.count("original|nll_bow/purity"));
}

TEST(Cli, ExitCodesAndErrorFormat) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  const Result usage = invoke({"preprocess"});
  EXPECT_EQ(usage.code, 2);
  EXPECT_EQ(usage.err.rfind("error: usage:", 0), 0u) << usage.err;
  TempDir dir;
  write_file(dir / "bad.cfg", "model.colour = red\n");
  const Result config = invoke({"train", "--config", (dir / "bad.cfg").string()});
  EXPECT_EQ(config.code, 1);
  EXPECT_EQ(config.err.rfind("error: config:", 0), 0u) << config.err;
  const Result no_out = invoke({"train", "--data", dir.path().string()});
  EXPECT_EQ(no_out.code, 1);
  EXPECT_EQ(std::count(no_out.err.begin(), no_out.err.end(), '\n'), 1);
}

}  // namespace
}  // namespace softtopic::cli
