// SPDX-License-Identifier: Apache-2.0
#include "softtopic/experiment.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "softtopic/error.hpp"
#include "softtopic/synth.hpp"
#include "softtopic/targets.hpp"
#include "test_support.hpp"

namespace softtopic {
namespace {

using testing::TempDir;

class ExperimentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    SynthSpec s;
    s.num_topics = 3;
    s.vocab_size = 30;
    s.docs_per_topic = 8;
    s.embed_dim = 6;
    write_synth_artifacts(dir_->path(), s, 1.0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static Dataset data() { return load_dataset(dir_->path()); }

  static RunSpec spec() {
    RunSpec r;
    r.model.num_topics = 3;
    r.model.hidden_dim = 8;
    r.model.temperature = 1.0;
    r.train.epochs = 2;
    r.train.batch_size = 8;
    r.eval.top_n = 5;
    r.eval.metrics = {"npmi", "i_rbo", "purity", "precision@5"};
    return r;
  }

  static TempDir* dir_;
};

TempDir* ExperimentTest::dir_ = nullptr;

TEST_F(ExperimentTest, PrepareDataDerivesSoftTargetsFromLogits) {
  const Dataset d = data();
  ModelConfig m = spec().model;
  m.temperature = 3.0;
  const PreparedData p = prepare_data(d, m);
  EXPECT_EQ(m.input_dim, 6u);
  EXPECT_EQ(m.vocab_size, 30u);
  EXPECT_EQ(p.targets, soft_targets(*d.logits, 3.0));
  EXPECT_NEAR(p.target_entropy, mean_row_entropy(p.targets), 1e-12);

  m.input_mode = InputMode::external;
  EXPECT_EQ(prepare_data(d, m).inputs, *d.external_embeddings);
}

TEST_F(ExperimentTest, AxisValues) {
  RunSpec r = spec();
  apply_axis_value(r, SweepAxis::temperature, "0.5");
  EXPECT_EQ(r.model.temperature, 0.5);
  apply_axis_value(r, SweepAxis::ablation, "nll_bow_embeddings");
  EXPECT_EQ(r.model.loss_mode, LossMode::nll);
  EXPECT_EQ(r.model.target_mode, TargetMode::bow);
  EXPECT_EQ(r.model.input_mode, InputMode::external);
  apply_axis_value(r, SweepAxis::ablation, "original");
  EXPECT_EQ(r.model.loss_mode, LossMode::kl);
  EXPECT_EQ(r.model.target_mode, TargetMode::soft);
  EXPECT_EQ(r.model.input_mode, InputMode::hidden);
  EXPECT_THROW(apply_axis_value(r, SweepAxis::temperature, "-1"), ConfigError);
  EXPECT_THROW(apply_axis_value(r, SweepAxis::ablation, "bogus"), ConfigError);
  EXPECT_THROW(parse_sweep_axis("learning_rate"), ConfigError);
  EXPECT_EQ(ablation_names().size(), 5u);
}

TEST_F(ExperimentTest, SingleValueSweepEqualsDirectRun) {
  const Dataset d = data();
  SweepOptions o;
  o.seeds = {3};
  o.threads = 1;
  const auto rows = sweep(d, spec(), SweepAxis::temperature, {"1"}, o);
  ASSERT_EQ(rows.size(), 1u);
  RunSpec direct = spec();
  direct.train.seed = 3;
  const RunResult r = run_experiment(d, direct);
  EXPECT_EQ(rows[0].report.to_json(), r.eval.to_json());
  EXPECT_EQ(rows[0].data_hash, r.data_hash);
}

TEST_F(ExperimentTest, SweepRowCountAndOrder) {
  SweepOptions o;
  o.seeds = {0, 1};
  o.threads = 2;
  const auto rows = sweep(data(), spec(), SweepAxis::loss_mode, {"kl", "nll"}, o);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].axis_value, "kl");
  EXPECT_EQ(rows[1].seed, 1u);
  EXPECT_EQ(rows[2].axis_value, "nll");
  const std::string csv = sweep_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "axis_value,seed,metric_name,value");
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  // Four metrics plus target_entropy per cell.
  EXPECT_EQ(lines, 4u * 5u);
}

TEST_F(ExperimentTest, ThreadCountDoesNotChangeResults) {
  SweepOptions one, two;
  one.seeds = two.seeds = {0, 1};
  one.threads = 1;
  two.threads = 2;
  const auto a = sweep(data(), spec(), SweepAxis::temperature, {"1", "3"}, one);
  const auto b = sweep(data(), spec(), SweepAxis::temperature, {"1", "3"}, two);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
}

TEST_F(ExperimentTest, BowLossModesShareData) {
  RunSpec base = spec();
  base.model.target_mode = TargetMode::bow;
  SweepOptions o;
  o.seeds = {0};
  o.threads = 1;
  const auto rows = sweep(data(), base, SweepAxis::loss_mode, {"kl", "nll"}, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].data_hash, rows[1].data_hash);
}

TEST_F(ExperimentTest, TargetEntropyFallsAsTemperatureFalls) {
  RunSpec base = spec();
  base.train.epochs = 1;
  SweepOptions o;
  o.seeds = {0};
  o.threads = 1;
  const auto rows = sweep(data(), base, SweepAxis::temperature, {"10", "5", "3", "1", "0.5"}, o);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_LT(rows[i].report.metrics.at("target_entropy"), rows[i - 1].report.metrics.at("target_entropy"));
}

TEST_F(ExperimentTest, SummaryAveragesSeedsAndComparesValues) {
  std::vector<SweepRow> rows;
  for (const char* v : {"a", "b"})
    for (std::uint64_t s = 0; s < 3; ++s) {
      SweepRow r;
      r.axis_value = v;
      r.seed = s;
      r.report.metrics["purity"] = (v[0] == 'a' ? 0.5 : 0.7) + 0.01 * static_cast<double>(s);
      rows.push_back(r);
    }
  const EvalReport sum = summarize_sweep(rows);
  EXPECT_NEAR(sum.metrics.at("a/purity"), 0.51, 1e-12);
  EXPECT_NEAR(sum.metrics.at("b/purity"), 0.71, 1e-12);
  EXPECT_EQ(sum.per_seed.at("a/purity").size(), 3u);
  const double p = sum.welch_p_values.at("a|b/purity");
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1e-3);
}

TEST_F(ExperimentTest, RunWritesOutputsAndEvaluatesReloadedCheckpoint) {
  TempDir out;
  const Dataset d = data();
  const RunResult r =
      run_experiment(d, spec(), {out / "checkpoint.bin", out / "train.log", out / "eval.json"});
  const Checkpoint ck = load_checkpoint(out / "checkpoint.bin");
  EvalReport again = evaluate_checkpoint(d, ck, spec().eval, spec().train.seed);
  again.metrics["target_entropy"] = r.eval.metrics.at("target_entropy");
  EXPECT_EQ(again.to_json(), testing::read_file(out / "eval.json"));
}

TEST(WorkerThreads, ReadsEnvironment) {
  ::setenv("SOFTTOPIC_THREADS", "3", 1);
  EXPECT_EQ(worker_threads_from_env(), 3u);
  ::unsetenv("SOFTTOPIC_THREADS");
  EXPECT_GE(worker_threads_from_env(), 1u);
}

}  // namespace
}  // namespace softtopic
