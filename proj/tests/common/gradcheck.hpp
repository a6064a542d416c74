// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference oracle for the model loss.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "softtopic/targets.hpp"
#include "softtopic/topicmodel.hpp"

namespace softtopic::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "block[index] analytic=... numeric=..."
  std::size_t entries = 0;
};

/// Compares gradients() against (L(w+h) - L(w-h)) / 2h for every weight
/// entry under a fixed noise draw. Pairs where both sides are below
/// `floor` in magnitude are treated as agreeing zeros.
inline GradCheck check_gradients(const Batch& batch, ModelParams params, const ModelConfig& config,
                                 const Noise& noise, double h = 1e-4, double floor = 1e-8) {
  const GradientResult g = gradients(batch, params, config, noise);
  std::vector<const Matrix*> analytic;
  g.grads.for_each([&](const std::string&, const Matrix& m) { analytic.push_back(&m); });

  GradCheck out;
  std::size_t block = 0;
  params.weights.for_each([&](const std::string& name, Matrix& w) {
    const Matrix& a = *analytic[block++];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = total_loss(batch, params, config, noise).total;
      w.data()[i] = saved - h;
      const double down = total_loss(batch, params, config, noise).total;
      w.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      ++out.entries;
      const double scale = std::max(std::abs(numeric), std::abs(a.data()[i]));
      if (scale < floor) continue;
      const double rel = std::abs(numeric - a.data()[i]) / scale;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a.data()[i]) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  });
  return out;
}

/// A random tiny model with perturbed weights and a random batch.
struct TinyProblem {
  ModelConfig config;
  ModelParams params;
  Batch batch;
  Noise noise;
};

inline TinyProblem random_tiny_problem(Rng& rng, bool batchnorm) {
  TinyProblem p;
  ModelConfig& m = p.config;
  m.input_dim = 1 + rng.below(4);
  m.num_topics = 1 + rng.below(3);
  m.vocab_size = 2 + rng.below(5);
  m.hidden_dim = 1 + rng.below(4);
  m.hidden_layers = 1 + rng.below(2);
  m.dropout_rate = rng.below(2) ? 0.3 : 0.0;
  m.loss_mode = rng.below(3) == 0 ? LossMode::nll : LossMode::kl;
  m.loss_weight = rng.below(2) ? 1e3 : 1.0;
  m.decoder_batchnorm = batchnorm;
  p.params = init_params(m, rng);
  p.params.weights.for_each([&](const std::string&, Matrix& w) {
    for (double& v : w.values()) v += 0.3 * rng.normal();
  });
  const std::size_t rows = (batchnorm ? 2 : 1) + rng.below(4);
  p.batch.inputs = Matrix(rows, m.input_dim);
  for (double& v : p.batch.inputs.values()) v = rng.normal();
  Matrix logits(rows, m.vocab_size);
  for (double& v : logits.values()) v = rng.normal();
  p.batch.targets = soft_targets(logits, 1.0);
  p.noise = draw_noise(rows, m, true, rng);
  return p;
}

}  // namespace softtopic::testing
