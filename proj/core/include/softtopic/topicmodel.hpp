// SPDX-License-Identifier: Apache-2.0
#pragma once

// ProdLDA-style variational topic model trained against soft label targets.
//
// Encoder: `hidden_layers` affine+softplus layers over the document
// embedding, dropout on the last hidden activation, then two linear heads
// for the posterior mean and log-variance of z. theta = softmax(z) with
// z = mu + exp(logvar / 2) * eps.
//
// Decoder: logits = theta^T beta, optionally batch-normalised per word
// (no affine scale), then softmax over the vocabulary.
//
// Loss per document (averaged over the batch):
//   kl  mode: loss_weight * KL(pred || target) + prior_weight * KL(q(z|x) || p(z))
//   nll mode: -sum_v target_v log pred_v     + prior_weight * KL(q(z|x) || p(z))

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softtopic/corpus.hpp"
#include "softtopic/matrix.hpp"
#include "softtopic/rng.hpp"

namespace softtopic {

inline constexpr double kProbabilityFloor = 1e-10;

enum class LossMode { kl, nll };
enum class TargetMode { soft, bow };
/// Which embedding matrix feeds the encoder: LM hidden states or an
/// external sentence encoder.
enum class InputMode { hidden, external };

std::string to_string(LossMode m);
std::string to_string(TargetMode m);
std::string to_string(InputMode m);
LossMode parse_loss_mode(std::string_view s);
TargetMode parse_target_mode(std::string_view s);
InputMode parse_input_mode(std::string_view s);

struct ModelConfig {
  std::size_t num_topics = 0;
  std::size_t input_dim = 0;
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 200;
  std::size_t hidden_layers = 2;
  double dropout_rate = 0.2;
  double temperature = 3.0;
  double loss_weight = 1e3;
  LossMode loss_mode = LossMode::kl;
  TargetMode target_mode = TargetMode::soft;
  InputMode input_mode = InputMode::hidden;
  std::size_t inference_samples = 10;
  bool decoder_batchnorm = true;
  std::optional<double> prior_alpha;  // defaults to 1/K
  /// Multiplier on the prior KL term; 0 detaches the prior.
  double prior_weight = 1.0;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;

  double alpha() const;
  /// Throws ConfigError on any invalid field.
  void validate() const;

  /// Sorted `key=value` lines; doubles printed round-trip exact.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Trainable tensors. Gradients and Adam moments use the same structure.
struct ParamSet {
  std::vector<Matrix> hidden_weight;  // layer l: out x in
  std::vector<Matrix> hidden_bias;    // 1 x out
  Matrix mu_weight;                   // K x hidden
  Matrix mu_bias;                     // 1 x K
  Matrix logvar_weight;               // K x hidden
  Matrix logvar_bias;                 // 1 x K
  Matrix beta;                        // K x |V|
  Matrix prior_mu;                    // 1 x K
  Matrix prior_logvar;                // 1 x K

  /// Visits tensors in checkpoint order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  ParamSet zeros_like() const;
  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

struct BatchNormState {
  Matrix running_mean;  // 1 x |V|
  Matrix running_var;   // 1 x |V|
  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

struct ModelParams {
  ParamSet weights;
  BatchNormState bn;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights, zero biases, Laplace-approximated Dirichlet(alpha)
/// prior, beta Glorot-uniform over (K, |V|).
ModelParams init_params(const ModelConfig& config, Rng& rng);

/// Laplace approximation of a symmetric Dirichlet(alpha) in softmax basis.
void laplace_prior(std::size_t num_topics, double alpha, Matrix& mu, Matrix& logvar);

struct Posterior {
  std::vector<double> mu;
  std::vector<double> logvar;
};

/// Noise for one batch: dropout scales (B x hidden, entries 0 or 1/(1-r);
/// empty when dropout is inactive) and reparameterisation noise (B x K).
struct Noise {
  Matrix dropout_scale;
  Matrix eps;
};

/// Draws dropout masks first, then eps, row-major.
Noise draw_noise(std::size_t batch, const ModelConfig& config, bool training, Rng& rng);

Posterior encode(std::span<const double> x, const ModelParams& params, const ModelConfig& config,
                 bool training, Rng& rng);

/// softmax(mu + exp(logvar/2) * eps), eps ~ N(0, I) drawn from rng.
std::vector<double> sample_theta(const Posterior& post, Rng& rng);

/// Single-document decode. With batchnorm in training mode a single
/// document is its own batch.
std::vector<double> decode(std::span<const double> theta, const ModelParams& params,
                           const ModelConfig& config, bool training);

/// Row-wise decode of a theta matrix (B x K) to word distributions (B x |V|).
Matrix decode_batch(const Matrix& theta, const ModelParams& params, const ModelConfig& config,
                    bool training);

/// Closed-form KL between diagonal Gaussians q = N(mu, exp(logvar)) and
/// p = N(prior_mu, exp(prior_logvar)).
double prior_kl(const Posterior& post, std::span<const double> prior_mu,
                std::span<const double> prior_logvar);

/// sum_v pred_v log(pred_v / max(target_v, 1e-10)), with 0 log 0 = 0.
double recon_loss_kl(std::span<const double> pred, std::span<const double> target);

/// -sum_v count_v log max(pred_v, 1e-10).
double recon_loss_nll(std::span<const double> pred, const BowVector& bow);
double recon_loss_nll(std::span<const double> pred, std::span<const double> weights);

/// Inputs (B x D) and reconstruction targets (B x |V|). In kl mode target
/// rows are distributions; in nll mode they are count (or soft) weights.
struct Batch {
  Matrix inputs;
  Matrix targets;
};

struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;  // batch mean of the unweighted reconstruction term
  double prior = 0.0;  // batch mean of the prior KL
};

struct GradientResult {
  LossBreakdown loss;
  ParamSet grads;
  Matrix bn_batch_mean;  // 1 x |V|, empty without batchnorm
  Matrix bn_batch_var;   // biased batch variance
};

/// Training-mode loss. Noise is drawn from `rng` exactly as `gradients`
/// draws it, so equal seeds see equal dropout masks and eps.
LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         Rng& rng);
LossBreakdown total_loss(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         const Noise& noise);

/// Exact reverse-mode gradients of `total_loss`. Throws NumericalError
/// naming the block if any gradient entry is non-finite.
GradientResult gradients(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         Rng& rng);
GradientResult gradients(const Batch& batch, const ModelParams& params, const ModelConfig& config,
                         const Noise& noise);

/// Folds batch statistics into the running estimates.
void update_batchnorm(BatchNormState& bn, const GradientResult& g, std::size_t batch_size,
                      double momentum);

/// Mean of `inference_samples` draws (dropout off), renormalised.
std::vector<double> infer_theta(std::span<const double> x, const ModelParams& params,
                                const ModelConfig& config, Rng& rng);
/// Row-wise infer_theta over an N x D matrix.
Matrix infer_theta_matrix(const Matrix& inputs, const ModelParams& params,
                          const ModelConfig& config, Rng& rng);

inline constexpr std::size_t kDefaultTopWords = 15;

/// Per topic, the n words with largest beta weight; ties by lower index.
std::vector<std::vector<std::string>> top_words(const Matrix& beta, const Vocabulary& vocab,
                                                std::size_t n = kDefaultTopWords);
std::vector<std::vector<std::size_t>> top_word_indices(const Matrix& beta, std::size_t n);

// Checkpoint container, little-endian:
//   "STCK", u32 version, u32 n + n bytes of ModelConfig::to_text(),
//   u32 tensor count, then per tensor: u32 n + n bytes of name, DTM1 block.
// Tensor order: hidden.<l>.weight, hidden.<l>.bias for each layer,
// mu.weight, mu.bias, logvar.weight, logvar.bias, beta, prior.mu,
// prior.logvar, bn.running_mean, bn.running_var.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

std::string checkpoint_bytes(const ModelConfig& config, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(std::string_view bytes);

/// Rounds all tensors to float32, the checkpoint storage precision.
void round_to_storage_precision(ModelParams& params);

}  // namespace softtopic
