// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softtopic/corpus.hpp"
#include "softtopic/matrix.hpp"

namespace softtopic {

using TopicWordLists = std::vector<std::vector<std::string>>;

/// Document-level word incidence: which vocabulary words occur in each
/// document, stored as per-word sorted posting lists.
class DocWordIncidence {
 public:
  DocWordIncidence() = default;
  /// From an N x |V| count matrix (entries > 0 mark presence).
  explicit DocWordIncidence(const Matrix& counts);
  DocWordIncidence(std::size_t num_docs, std::vector<std::vector<std::size_t>> postings);

  std::size_t num_docs() const { return num_docs_; }
  std::size_t num_words() const { return postings_.size(); }
  std::size_t doc_frequency(std::size_t word) const { return postings_.at(word).size(); }
  std::size_t co_doc_frequency(std::size_t a, std::size_t b) const;

 private:
  std::size_t num_docs_ = 0;
  std::vector<std::vector<std::size_t>> postings_;
};

inline constexpr double kNpmiSmoothing = 1e-12;

/// NPMI of one word pair from document frequencies. Joint probability 1
/// scores 1, absent words and never co-occurring pairs score -1.
double npmi_pair(const DocWordIncidence& incidence, std::size_t a, std::size_t b);

/// Mean over topics of the mean pairwise NPMI among each topic's words.
double npmi_coherence(std::span<const std::vector<std::size_t>> topics,
                      const DocWordIncidence& incidence);
/// Word-list overload; words missing from the vocabulary score -1.
double npmi_coherence(const TopicWordLists& topics, const Vocabulary& vocab,
                      const DocWordIncidence& incidence);

inline constexpr double kDefaultRboPersistence = 0.9;

/// Extrapolated rank-biased overlap of two equal-length ranked lists:
/// (1 - p) sum_{d=1..n} p^(d-1) X_d / d + p^n X_n / n, X_d = |A_1..d & B_1..d|.
double rbo(std::span<const std::string> a, std::span<const std::string> b,
           double p = kDefaultRboPersistence);

/// 1 - mean RBO over all unordered topic pairs. Needs >= 2 topics.
double i_rbo(const TopicWordLists& topics, double p = kDefaultRboPersistence);

/// Per-document argmax topic, ties to the lowest index.
std::vector<std::size_t> argmax_topics(const Matrix& theta);

/// Harmonic purity: sum_c |c|/N * max_k F1(c, k), where topic k's
/// predicted set is the documents whose argmax topic is k.
double purity_harmonic(const Matrix& theta, std::span<const std::string> labels);

enum class RetrievalDivergence { query_first, symmetric };

struct RetrievedDocument {
  std::size_t index;
  double divergence;
};

/// Ranks every other document by ascending divergence from `query`
/// (ties by document order) and returns the first n. Thetas are smoothed
/// with 1e-10 and renormalised first.
std::vector<RetrievedDocument> retrieve(const Matrix& theta, std::size_t query, std::size_t n,
                                        RetrievalDivergence divergence = RetrievalDivergence::query_first);

/// Mean over all queries of the fraction of the top-n retrieved documents
/// sharing the query's label. Requires n < number of documents.
double retrieval_precision(const Matrix& theta, std::span<const std::string> labels, std::size_t n,
                           RetrievalDivergence divergence = RetrievalDivergence::query_first);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's unequal-variance t-test, two-sided.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// Regularised incomplete beta I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df dof.
double student_t_two_sided(double t, double df);

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<double>> per_seed;
  std::map<std::string, double> welch_p_values;

  /// JSON with keys sorted; numbers printed round-trip exact.
  std::string to_json() const;
  static EvalReport from_json(std::string_view text);
};

/// Metric inputs for `evaluate`. Labels are optional per document; purity
/// and retrieval use the labelled subset and throw if there is none.
struct EvalInputs {
  const Matrix* theta = nullptr;
  const Matrix* beta = nullptr;
  const Vocabulary* vocab = nullptr;
  const DocWordIncidence* incidence = nullptr;
  std::vector<std::optional<std::string>> labels;
};

struct EvalOptions {
  /// npmi, i_rbo, purity, precision@N for any N.
  std::vector<std::string> metrics = {"npmi", "i_rbo", "purity", "precision@5", "precision@10"};
  std::size_t top_n = 15;
  double rbo_p = kDefaultRboPersistence;
  RetrievalDivergence divergence = RetrievalDivergence::query_first;
};

/// Computes the requested metrics. Throws UndefinedMetricError naming the
/// metric when its inputs are missing (e.g. purity without labels).
EvalReport evaluate(const EvalInputs& inputs, const EvalOptions& options);

}  // namespace softtopic
