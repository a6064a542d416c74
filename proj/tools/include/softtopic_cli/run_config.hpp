// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration files: `key = value` lines, `#` comments, optional
// `[section]` headers that prefix the following keys with `section.`.
// Every key is checked against a fixed schema; unknown keys are errors.
//
//   seed = 3
//   data = artifacts/synth
//   out  = runs/synth-k5
//   [model]
//   num_topics = 5
//   temperature = 1

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "softtopic/evalsuite.hpp"
#include "softtopic/synth.hpp"
#include "softtopic/topicmodel.hpp"
#include "softtopic/trainer.hpp"

namespace softtopic::cli {

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> out;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  SynthSpec synth;
  double synth_temperature = 1.0;
  std::vector<std::uint64_t> sweep_seeds = {0, 1, 2, 3, 4};
  std::size_t sweep_threads = 0;  // 0: SOFTTOPIC_THREADS or hardware
  /// `axis=v1,v2,...` entries, as for --axes.
  std::vector<std::string> sweep_axes;

  /// Propagates `seed` into the train and synth sections.
  void apply_seed(std::uint64_t s);
};

/// Relative `data`/`out` paths resolve against `base_dir`. Throws
/// ConfigError with the line number for syntax errors, unknown keys and
/// invalid values.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// All accepted keys, sorted.
std::vector<std::string> run_config_keys();

}  // namespace softtopic::cli
