// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "softtopic/matrix.hpp"
#include "softtopic/topicmodel.hpp"

namespace softtopic {

enum class LrSchedule { cosine, constant };

struct TrainConfig {
  double learning_rate = 2e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LrSchedule lr_schedule = LrSchedule::cosine;
  std::uint64_t seed = 0;
  /// Also checkpoint every k epochs (0 = end of training only).
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamSet& params);
};

/// One bias-corrected Adam update. Throws NumericalError naming the block
/// if an updated parameter is non-finite.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const TrainConfig& config);

/// base_lr * (1 + cos(pi * step / total_steps)) / 2, floored at 0.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;
  double recon = 0.0;
  double prior = 0.0;
  double lr = 0.0;  // learning rate at the epoch's first step
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  std::optional<std::filesystem::path> checkpoint_path;
  std::size_t excluded_documents = 0;
};

/// Output locations for train(). Unset paths are skipped.
struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> progress_log;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

/// Mini-batch training. `targets` rows are reconstruction targets in the
/// form the loss mode expects (see Batch). Final parameters are rounded to
/// checkpoint precision so in-memory and reloaded models agree exactly.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Matrix& inputs, const Matrix& targets, const TrainOutputs& outputs = {});

/// Builds the reconstruction target matrix for a model configuration:
/// soft/kl uses `soft` rows as-is, bow/kl normalises counts, bow/nll uses raw
/// counts, soft/nll uses soft rows as fractional counts. Rows whose bow is
/// empty are dropped in bow mode; `kept` receives the surviving row indices.
Matrix reconstruction_targets(const ModelConfig& config, const Matrix* soft, const Matrix* bow,
                              std::vector<std::size_t>& kept);

/// `epoch,total_loss,recon_term,prior_term,lr`
std::string format_progress_line(const EpochStats& e);

}  // namespace softtopic
