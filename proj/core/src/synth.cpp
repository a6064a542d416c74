// SPDX-License-Identifier: Apache-2.0
#include "softtopic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "softtopic/artifacts.hpp"
#include "softtopic/dtm.hpp"
#include "softtopic/error.hpp"
#include "softtopic/rng.hpp"
#include "softtopic/targets.hpp"

namespace softtopic {
namespace {

std::string word_name(std::size_t v, std::size_t vocab_size) {
  const int width = static_cast<int>(std::to_string(vocab_size - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%0*zu", width, v);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_topics < 2) throw InputError("synth: num_topics must be >= 2");
  if (vocab_size < 2 * num_topics) throw InputError("synth: vocab_size must be >= 2 * num_topics");
  if (docs_per_topic == 0) throw InputError("synth: docs_per_topic must be >= 1");
  if (!(doc_length >= 1.0)) throw InputError("synth: doc_length must be >= 1");
  if (!(topic_concentration > 0.0)) throw InputError("synth: topic_concentration must be > 0");
  if (!(mixed_alpha > 0.0)) throw InputError("synth: mixed_alpha must be > 0");
  if (!(off_block_ratio > 0.0)) throw InputError("synth: off_block_ratio must be > 0");
  if (embed_dim == 0) throw InputError("synth: embed_dim must be >= 1");
  if (!(embed_noise_sigma >= 0.0)) throw InputError("synth: embed_noise_sigma must be >= 0");
}

std::pair<std::size_t, std::size_t> topic_block(const SynthSpec& spec, std::size_t k) {
  return {k * spec.vocab_size / spec.num_topics, (k + 1) * spec.vocab_size / spec.num_topics};
}

SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t K = spec.num_topics, V = spec.vocab_size, N = spec.num_docs();
  SynthCorpus out;

  std::vector<std::string> words;
  for (std::size_t v = 0; v < V; ++v) words.push_back(word_name(v, V));
  out.vocab = Vocabulary(words);

  Rng beta_rng(derive_seed(spec.seed, "synth.beta"));
  out.true_beta = Matrix(K, V);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> alpha(V, spec.topic_concentration);
    if (spec.beta_mode == BetaMode::block) {
      const auto [lo, hi] = topic_block(spec, k);
      for (std::size_t v = 0; v < V; ++v)
        if (v < lo || v >= hi) alpha[v] *= spec.off_block_ratio;
    }
    const auto row = beta_rng.dirichlet(alpha);
    std::copy(row.begin(), row.end(), out.true_beta.row(k).begin());
  }

  Rng theta_rng(derive_seed(spec.seed, "synth.theta"));
  out.true_theta = Matrix(N, K);
  for (std::size_t d = 0; d < N; ++d) {
    if (spec.doc_topic_mode == DocTopicMode::single) {
      out.true_theta(d, d / spec.docs_per_topic) = 1.0;
    } else {
      const std::vector<double> alpha(K, spec.mixed_alpha);
      const auto row = theta_rng.dirichlet(alpha);
      std::copy(row.begin(), row.end(), out.true_theta.row(d).begin());
    }
  }

  out.bow = Matrix(N, V);
  for (std::size_t d = 0; d < N; ++d) {
    // Per-document stream keeps documents independent of generation order.
    Rng doc_rng(derive_seed(spec.seed, "synth.doc." + std::to_string(d)));
    std::vector<double> word_dist(V, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t v = 0; v < V; ++v) word_dist[v] += out.true_theta(d, k) * out.true_beta(k, v);
    const std::uint64_t length = 1 + doc_rng.poisson(spec.doc_length - 1.0);
    std::string text;
    for (std::uint64_t t = 0; t < length; ++t) {
      const std::size_t v = doc_rng.categorical(word_dist);
      out.bow(d, v) += 1.0;
      if (!text.empty()) text.push_back(' ');
      text += words[v];
    }
    const auto theta = out.true_theta.row(d);
    const std::size_t label =
        static_cast<std::size_t>(std::max_element(theta.begin(), theta.end()) - theta.begin());
    out.labels.push_back(label);
    out.ambiguous.push_back(theta[label] < 0.5);
    char id[32];
    std::snprintf(id, sizeof id, "doc%05zu", d);
    out.documents.push_back({id, text, "topic" + std::to_string(label)});
  }
  return out;
}

Matrix oracle_logits(const SynthCorpus& corpus) {
  const std::size_t N = corpus.true_theta.rows(), K = corpus.true_beta.rows(),
                    V = corpus.true_beta.cols();
  Matrix logits(N, V);
  for (std::size_t d = 0; d < N; ++d)
    for (std::size_t v = 0; v < V; ++v) {
      double p = 0.0;
      for (std::size_t k = 0; k < K; ++k) p += corpus.true_theta(d, k) * corpus.true_beta(k, v);
      logits(d, v) = std::log(p + 1e-12);
    }
  return logits;
}

Matrix oracle_targets(const SynthCorpus& corpus, double temperature) {
  return soft_targets(oracle_logits(corpus), temperature);
}

Matrix oracle_embeddings(const SynthCorpus& corpus, const SynthSpec& spec, std::string_view stream) {
  const std::size_t K = corpus.true_theta.cols(), N = corpus.true_theta.rows();
  Rng map_rng(derive_seed(spec.seed, std::string("synth.") + std::string(stream) + ".map"));
  Matrix map(spec.embed_dim, K);
  for (double& v : map.values()) v = map_rng.normal();
  Rng noise_rng(derive_seed(spec.seed, std::string("synth.") + std::string(stream) + ".noise"));
  Matrix out(N, spec.embed_dim);
  for (std::size_t d = 0; d < N; ++d)
    for (std::size_t e = 0; e < spec.embed_dim; ++e) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += map(e, k) * corpus.true_theta(d, k);
      const double noise = noise_rng.normal();
      out(d, e) = s + spec.embed_noise_sigma * noise;
    }
  return out;
}

void write_synth_artifacts(const std::filesystem::path& dir, const SynthSpec& spec,
                           double temperature) {
  std::filesystem::create_directories(dir);
  const SynthCorpus corpus = generate(spec);
  const ArtifactLayout layout(dir);
  write_corpus_jsonl(layout.corpus(), corpus.documents);
  write_vocabulary(layout.vocab(), corpus.vocab);
  write_dtm1(layout.bow(), corpus.bow);
  const Matrix logits = oracle_logits(corpus);
  write_dtm1(layout.logits(), logits);
  write_dtm1(layout.targets(), soft_targets(logits, temperature));
  write_dtm1(layout.embeddings(), oracle_embeddings(corpus, spec, "embeddings"));
  write_dtm1(layout.external_embeddings(), oracle_embeddings(corpus, spec, "external"));

  std::vector<std::string> ids;
  std::vector<std::optional<std::string>> labels;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    ids.push_back(corpus.documents[d].id);
    labels.push_back(corpus.ambiguous[d] ? std::nullopt : corpus.documents[d].label);
  }
  write_ids(layout.ids(), ids);
  write_labels_csv(layout.labels(), ids, labels);
}

RealizableInstance make_realizable_instance(std::size_t num_docs, std::size_t input_dim,
                                            std::size_t num_topics, std::size_t vocab_size,
                                            std::uint64_t seed, double theta_scale,
                                            double beta_scale) {
  if (num_docs == 0 || input_dim == 0 || num_topics == 0 || vocab_size == 0)
    throw InputError("realizable instance needs non-empty dimensions");
  Rng rng(derive_seed(seed, "realizable"));
  RealizableInstance out{Matrix(num_docs, input_dim), Matrix(num_docs, num_topics),
                         Matrix(num_topics, vocab_size), Matrix(num_docs, vocab_size)};
  Matrix a(num_topics, input_dim);
  for (double& v : a.values()) v = theta_scale * rng.normal();
  for (double& v : out.beta.values()) v = beta_scale * rng.normal();
  for (double& v : out.inputs.values()) v = rng.normal();
  for (std::size_t d = 0; d < num_docs; ++d) {
    auto theta = out.theta.row(d);
    for (std::size_t k = 0; k < num_topics; ++k)
      for (std::size_t j = 0; j < input_dim; ++j) theta[k] += a(k, j) * out.inputs(d, j);
    softmax_inplace(theta);
    auto target = out.targets.row(d);
    for (std::size_t k = 0; k < num_topics; ++k)
      for (std::size_t v = 0; v < vocab_size; ++v) target[v] += theta[k] * out.beta(k, v);
    softmax_inplace(target);
  }
  return out;
}

}  // namespace softtopic
