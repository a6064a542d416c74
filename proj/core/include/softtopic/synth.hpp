// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic corpora with known topic structure. Documents follow the LDA
// generative process; the oracle targets and embeddings stand in for the
// language-model logits and hidden states.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "softtopic/corpus.hpp"
#include "softtopic/matrix.hpp"

namespace softtopic {

enum class DocTopicMode { single, mixed };
enum class BetaMode { block, dirichlet };

struct SynthSpec {
  std::size_t num_topics = 5;
  std::size_t vocab_size = 200;
  std::size_t docs_per_topic = 100;
  double doc_length = 40.0;  // mean tokens per document
  double topic_concentration = 0.1;
  DocTopicMode doc_topic_mode = DocTopicMode::single;
  double mixed_alpha = 0.3;  // Dirichlet(alpha) over topics in mixed mode
  BetaMode beta_mode = BetaMode::block;
  /// Off-block Dirichlet weight relative to in-block in block mode.
  double off_block_ratio = 1e-3;
  std::size_t embed_dim = 16;
  double embed_noise_sigma = 0.05;
  std::uint64_t seed = 0;

  /// Throws InputError for an infeasible spec.
  void validate() const;
  std::size_t num_docs() const { return num_topics * docs_per_topic; }
};

struct SynthCorpus {
  std::vector<Document> documents;
  std::vector<std::size_t> labels;  // argmax of true_theta
  std::vector<bool> ambiguous;      // max theta < 0.5 (mixed mode)
  Vocabulary vocab;
  Matrix true_beta;   // K x |V|, row-stochastic
  Matrix true_theta;  // N x K, row-stochastic
  Matrix bow;         // N x |V| counts
};

/// Deterministic under spec.seed. Topic k owns the contiguous word block
/// [k*|V|/K, (k+1)*|V|/K) in block mode.
SynthCorpus generate(const SynthSpec& spec);

/// Stand-in LM logits: log(theta_d^T beta + 1e-12).
Matrix oracle_logits(const SynthCorpus& corpus);

/// soft_targets(oracle_logits(corpus), temperature).
Matrix oracle_targets(const SynthCorpus& corpus, double temperature);

/// Fixed seeded linear map (embed_dim x K, N(0,1) entries) applied to
/// true_theta plus N(0, sigma^2) noise. `stream` selects an independent
/// map so a second "external encoder" view can be produced.
Matrix oracle_embeddings(const SynthCorpus& corpus, const SynthSpec& spec,
                         std::string_view stream = "embeddings");

/// Word range [first, last) owned by topic k in block mode.
std::pair<std::size_t, std::size_t> topic_block(const SynthSpec& spec, std::size_t k);

/// A training set the model can fit exactly: inputs x_d ~ N(0, I),
/// theta*_d = softmax(A x_d), targets_d = softmax(theta*_d^T beta*) with
/// A ~ N(0, theta_scale^2) and beta* ~ N(0, beta_scale^2). Matches decode() with batchnorm off.
struct RealizableInstance {
  Matrix inputs;   // N x D
  Matrix theta;    // N x K
  Matrix beta;     // K x |V|
  Matrix targets;  // N x |V|
};

RealizableInstance make_realizable_instance(std::size_t num_docs, std::size_t input_dim,
                                            std::size_t num_topics, std::size_t vocab_size,
                                            std::uint64_t seed, double theta_scale = 1.0,
                                            double beta_scale = 1.0);

/// Writes corpus.jsonl, vocab.txt, bow.dtm, logits.dtm, targets.dtm,
/// embeddings.dtm, external_embeddings.dtm, ids.txt and labels.csv.
/// Ambiguous documents are left out of labels.csv.
void write_synth_artifacts(const std::filesystem::path& dir, const SynthSpec& spec,
                           double temperature);

}  // namespace softtopic
