// SPDX-License-Identifier: Apache-2.0
#include "softtopic/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>

#include "softtopic/error.hpp"
#include "softtopic/targets.hpp"

namespace softtopic {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam epsilon must be > 0");
}

AdamState AdamState::zeros_like(const ParamSet& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const TrainConfig& config) {
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  std::vector<Matrix*> p, g, m, v;
  std::vector<std::string> names;
  params.for_each([&](const std::string& n, Matrix& x) {
    names.push_back(n);
    p.push_back(&x);
  });
  const_cast<ParamSet&>(grads).for_each([&](const std::string&, Matrix& x) { g.push_back(&x); });
  state.m.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
  state.v.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
    throw InputError("adam: gradient/state structure does not mirror parameters");

  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t]->size() != p[t]->size() || m[t]->size() != p[t]->size())
      throw InputError("adam: shape mismatch in " + names[t]);
    double* x = p[t]->data();
    const double* gr = g[t]->data();
    double* mt = m[t]->data();
    double* vt = v[t]->data();
    for (std::size_t i = 0; i < p[t]->size(); ++i) {
      mt[i] = b1 * mt[i] + (1.0 - b1) * gr[i];
      vt[i] = b2 * vt[i] + (1.0 - b2) * gr[i] * gr[i];
      const double m_hat = mt[i] / c1;
      const double v_hat = vt[i] / c2;
      x[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
      if (!std::isfinite(x[i])) throw NumericalError("non-finite update in " + names[t]);
    }
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

Matrix reconstruction_targets(const ModelConfig& config, const Matrix* soft, const Matrix* bow,
                              std::vector<std::size_t>& kept) {
  kept.clear();
  if (config.target_mode == TargetMode::soft) {
    if (soft == nullptr) throw InputError("soft targets required for target_mode=soft");
    kept.resize(soft->rows());
    std::iota(kept.begin(), kept.end(), std::size_t{0});
    return *soft;
  }
  if (bow == nullptr) throw InputError("bag-of-words counts required for target_mode=bow");
  for (std::size_t r = 0; r < bow->rows(); ++r) {
    const auto row = bow->row(r);
    if (std::any_of(row.begin(), row.end(), [](double c) { return c > 0.0; })) kept.push_back(r);
  }
  Matrix out = bow->gather_rows(kept);
  if (config.loss_mode == LossMode::kl) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const auto row = bow_targets(bow_from_row(out.row(r)), out.cols());
      std::copy(row.begin(), row.end(), out.row(r).begin());
    }
  }
  return out;
}

std::string format_progress_line(const EpochStats& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g", e.epoch, e.total, e.recon, e.prior, e.lr);
  return buf;
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Matrix& inputs, const Matrix& targets, const TrainOutputs& outputs) {
  model_config.validate();
  train_config.validate();
  if (inputs.rows() != targets.rows())
    throw InputError("embeddings have " + std::to_string(inputs.rows()) + " rows but targets have " +
                     std::to_string(targets.rows()));
  if (inputs.rows() == 0) throw InputError("no training documents");
  if (inputs.cols() != model_config.input_dim || targets.cols() != model_config.vocab_size)
    throw InputError("training data shape does not match model config");

  const auto start = std::chrono::steady_clock::now();
  Rng init_rng(derive_seed(train_config.seed, "init"));
  Rng shuffle_rng(derive_seed(train_config.seed, "shuffle"));
  Rng noise_rng(derive_seed(train_config.seed, "noise"));

  TrainResult result;
  ModelParams& params = result.params;
  params = init_params(model_config, init_rng);
  AdamState adam = AdamState::zeros_like(params.weights);

  const std::size_t n = inputs.rows();
  const std::size_t batches_per_epoch = (n + train_config.batch_size - 1) / train_config.batch_size;
  const std::uint64_t total_steps = train_config.epochs * batches_per_epoch;

  std::ofstream log;
  if (outputs.progress_log) {
    log.open(*outputs.progress_log, std::ios::trunc);
    if (!log) throw InputError("cannot open progress log: " + outputs.progress_log->string());
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = b * train_config.batch_size;
      const std::size_t hi = std::min(n, lo + train_config.batch_size);
      const std::span<const std::size_t> rows(order.data() + lo, hi - lo);
      const Batch batch{inputs.gather_rows(rows), targets.gather_rows(rows)};

      const double lr = train_config.lr_schedule == LrSchedule::cosine
                            ? cosine_lr(adam.step, total_steps, train_config.learning_rate)
                            : train_config.learning_rate;
      if (b == 0) stats.lr = lr;

      GradientResult g;
      try {
        g = gradients(batch, params, model_config, noise_rng);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b));
      }
      const double w = static_cast<double>(hi - lo) / static_cast<double>(n);
      stats.total += w * g.loss.total;
      stats.recon += w * g.loss.recon;
      stats.prior += w * g.loss.prior;
      adam_step(params.weights, g.grads, adam, lr, train_config);
      update_batchnorm(params.bn, g, hi - lo, model_config.bn_momentum);
    }
    result.report.epochs.push_back(stats);
    if (log) log << format_progress_line(stats) << '\n';
    if (outputs.checkpoint && train_config.checkpoint_every > 0 &&
        epoch % train_config.checkpoint_every == 0 && epoch != train_config.epochs) {
      auto snapshot = params;
      round_to_storage_precision(snapshot);
      auto path = *outputs.checkpoint;
      path += ".epoch" + std::to_string(epoch);
      save_checkpoint(path, model_config, snapshot);
    }
  }

  round_to_storage_precision(params);
  if (outputs.checkpoint) {
    save_checkpoint(*outputs.checkpoint, model_config, params);
    result.report.checkpoint_path = outputs.checkpoint;
  }
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace softtopic
