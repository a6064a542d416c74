// SPDX-License-Identifier: Apache-2.0
#pragma once

// Glue between artifacts, training and evaluation: one train+eval run on a
// loaded dataset, and the sweep harness that repeats it over an axis of
// configuration values and seeds.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "softtopic/artifacts.hpp"
#include "softtopic/evalsuite.hpp"
#include "softtopic/topicmodel.hpp"
#include "softtopic/trainer.hpp"

namespace softtopic {

struct RunSpec {
  ModelConfig model;  // num_topics and hyperparameters; dims are filled from data
  TrainConfig train;
  EvalOptions eval;
};

/// Encoder inputs and reconstruction targets for one model configuration.
struct PreparedData {
  Matrix inputs;                  // rows of `kept`
  Matrix targets;                 // rows of `kept`
  std::vector<std::size_t> kept;  // dataset rows used for training
  Matrix all_inputs;              // every document, for inference
  double target_entropy = 0.0;    // mean entropy of the normalised target rows
  std::string data_hash;          // sha256 over the source matrices consumed
};

/// Selects inputs (hidden or external embeddings) and builds targets:
/// soft targets come from logits at `model.temperature`, or from the
/// precomputed targets file when no logits exist. Fills input_dim and
/// vocab_size in `model`.
PreparedData prepare_data(const Dataset& data, ModelConfig& model);

/// Infers theta for every document (seeded from `seed`) and runs evaluate().
EvalReport evaluate_checkpoint(const Dataset& data, const Checkpoint& checkpoint,
                               const EvalOptions& options, std::uint64_t seed);

struct RunOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> progress_log;
  std::optional<std::filesystem::path> eval_json;
};

struct RunResult {
  Checkpoint checkpoint;
  TrainReport train_report;
  EvalReport eval;
  std::string data_hash;
};

/// Train then evaluate. The report also carries `target_entropy`.
RunResult run_experiment(const Dataset& data, RunSpec spec, const RunOutputs& outputs = {});

enum class SweepAxis { temperature, loss_mode, target_mode, input_mode, ablation };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view s);

/// Named ablations: original, nll, nll_bow, embeddings, nll_bow_embeddings.
const std::vector<std::string>& ablation_names();

/// Applies one axis value to a run spec. Throws ConfigError for a value
/// the axis does not accept.
void apply_axis_value(RunSpec& spec, SweepAxis axis, const std::string& value);

inline const std::vector<std::uint64_t> kDefaultSweepSeeds = {0, 1, 2, 3, 4};

struct SweepRow {
  std::string axis_value;
  std::uint64_t seed = 0;
  EvalReport report;
  std::string data_hash;
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds = kDefaultSweepSeeds;
  /// Worker threads for independent cells; 0 reads SOFTTOPIC_THREADS
  /// (default: hardware concurrency).
  std::size_t threads = 0;
  /// Per-cell output directories `<root>/<value>/seed<k>/` when set.
  std::optional<std::filesystem::path> output_root;
};

/// One run per (value, seed), rows ordered by value then seed. Each
/// cell's training seed is the sweep seed itself, so a single-value sweep
/// equals direct runs.
std::vector<SweepRow> sweep(const Dataset& data, const RunSpec& base, SweepAxis axis,
                            const std::vector<std::string>& values, const SweepOptions& options = {});

/// Aggregates sweep rows: metrics["<value>/<metric>"] is the mean over
/// seeds, per_seed holds the per-seed values in seed order, and
/// welch_p_values["<a>|<b>/<metric>"] compares every pair of axis values
/// (in input order) when both have at least two seeds.
EvalReport summarize_sweep(const std::vector<SweepRow>& rows);

/// `axis_value,seed,metric_name,value`, one line per metric, metrics sorted.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Worker cap from SOFTTOPIC_THREADS, falling back to hardware concurrency.
std::size_t worker_threads_from_env();

}  // namespace softtopic
