// SPDX-License-Identifier: Apache-2.0
#include "softtopic/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "softtopic/error.hpp"
#include "softtopic/topicmodel.hpp"

namespace softtopic {
namespace {

Matrix smoothed(const Matrix& theta) {
  Matrix out = theta;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double s = 0.0;
    for (double& v : row) {
      v = std::max(v, 0.0) + 1e-10;
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return out;
}

double kl_rows(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return s;
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

DocWordIncidence::DocWordIncidence(const Matrix& counts)
    : num_docs_(counts.rows()), postings_(counts.cols()) {
  for (std::size_t d = 0; d < counts.rows(); ++d)
    for (std::size_t w = 0; w < counts.cols(); ++w)
      if (counts(d, w) > 0.0) postings_[w].push_back(d);
}

DocWordIncidence::DocWordIncidence(std::size_t num_docs,
                                   std::vector<std::vector<std::size_t>> postings)
    : num_docs_(num_docs), postings_(std::move(postings)) {
  for (auto& p : postings_) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (!p.empty() && p.back() >= num_docs_) throw InputError("posting refers to unknown document");
  }
}

std::size_t DocWordIncidence::co_doc_frequency(std::size_t a, std::size_t b) const {
  const auto& pa = postings_.at(a);
  const auto& pb = postings_.at(b);
  std::size_t n = 0;
  for (std::size_t i = 0, j = 0; i < pa.size() && j < pb.size();) {
    if (pa[i] < pb[j]) ++i;
    else if (pb[j] < pa[i]) ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double npmi_pair(const DocWordIncidence& incidence, std::size_t a, std::size_t b) {
  const double n = static_cast<double>(incidence.num_docs());
  const std::size_t df_a = incidence.doc_frequency(a);
  const std::size_t df_b = incidence.doc_frequency(b);
  if (df_a == 0 || df_b == 0) return -1.0;
  const std::size_t joint = incidence.co_doc_frequency(a, b);
  // NPMI -> -1 as the joint probability -> 0.
  if (joint == 0) return -1.0;
  const double p_ab = (static_cast<double>(joint) + kNpmiSmoothing) / n;
  if (p_ab >= 1.0) return 1.0;
  const double p_a = static_cast<double>(df_a) / n;
  const double p_b = static_cast<double>(df_b) / n;
  const double v = std::log(p_ab / (p_a * p_b)) / -std::log(p_ab);
  return std::clamp(v, -1.0, 1.0);
}

double npmi_coherence(std::span<const std::vector<std::size_t>> topics,
                      const DocWordIncidence& incidence) {
  if (topics.empty()) throw UndefinedMetricError("npmi: no topics");
  double total = 0.0;
  for (const auto& words : topics) {
    if (words.size() < 2) throw UndefinedMetricError("npmi: topics need at least two words");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i)
      for (std::size_t j = i + 1; j < words.size(); ++j, ++pairs)
        s += npmi_pair(incidence, words[i], words[j]);
    total += s / static_cast<double>(pairs);
  }
  return total / static_cast<double>(topics.size());
}

double npmi_coherence(const TopicWordLists& topics, const Vocabulary& vocab,
                      const DocWordIncidence& incidence) {
  if (topics.empty()) throw UndefinedMetricError("npmi: no topics");
  double total = 0.0;
  for (const auto& words : topics) {
    if (words.size() < 2) throw UndefinedMetricError("npmi: topics need at least two words");
    std::vector<std::optional<std::size_t>> idx;
    for (const auto& w : words) idx.push_back(vocab.index_of(w));
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = i + 1; j < idx.size(); ++j, ++pairs)
        s += (idx[i] && idx[j]) ? npmi_pair(incidence, *idx[i], *idx[j]) : -1.0;
    total += s / static_cast<double>(pairs);
  }
  return total / static_cast<double>(topics.size());
}

double rbo(std::span<const std::string> a, std::span<const std::string> b, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("rbo persistence must be in (0, 1)");
  if (a.size() != b.size()) throw InputError("rbo: lists must have equal length");
  const std::size_t n = a.size();
  if (n == 0) return 0.0;
  std::unordered_set<std::string_view> seen_a, seen_b;
  double overlap = 0.0;
  double sum = 0.0;
  double weight = 1.0;  // p^(d-1)
  for (std::size_t d = 1; d <= n; ++d) {
    const std::string_view x = a[d - 1], y = b[d - 1];
    if (x == y) {
      overlap += 1.0;
    } else {
      if (seen_b.contains(x)) overlap += 1.0;
      if (seen_a.contains(y)) overlap += 1.0;
    }
    seen_a.insert(x);
    seen_b.insert(y);
    sum += weight * overlap / static_cast<double>(d);
    weight *= p;
  }
  // weight == p^n here.
  const double value = (1.0 - p) * sum + weight * overlap / static_cast<double>(n);
  return std::clamp(value, 0.0, 1.0);
}

double i_rbo(const TopicWordLists& topics, double p) {
  if (topics.size() < 2) throw UndefinedMetricError("i_rbo needs at least two topics");
  double s = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < topics.size(); ++i)
    for (std::size_t j = i + 1; j < topics.size(); ++j, ++pairs) s += rbo(topics[i], topics[j], p);
  return 1.0 - s / static_cast<double>(pairs);
}

std::vector<std::size_t> argmax_topics(const Matrix& theta) {
  std::vector<std::size_t> out(theta.rows());
  for (std::size_t r = 0; r < theta.rows(); ++r) {
    const auto row = theta.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double purity_harmonic(const Matrix& theta, std::span<const std::string> labels) {
  if (labels.size() != theta.rows()) throw InputError("purity: one label per document required");
  if (labels.empty()) throw UndefinedMetricError("purity: empty class list");
  const auto assign = argmax_topics(theta);
  const std::size_t K = theta.cols();

  std::map<std::string, std::size_t> class_index;
  for (const auto& l : labels) class_index.emplace(l, class_index.size());
  const std::size_t C = class_index.size();
  std::vector<std::size_t> class_size(C, 0), topic_size(K, 0);
  std::vector<std::size_t> joint(C * K, 0);
  for (std::size_t d = 0; d < labels.size(); ++d) {
    const std::size_t c = class_index.at(labels[d]);
    ++class_size[c];
    ++topic_size[assign[d]];
    ++joint[c * K + assign[d]];
  }
  const double n = static_cast<double>(labels.size());
  double purity = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double best = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double tp = static_cast<double>(joint[c * K + k]);
      if (tp == 0.0) continue;
      const double precision = tp / static_cast<double>(topic_size[k]);
      const double recall = tp / static_cast<double>(class_size[c]);
      best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    purity += static_cast<double>(class_size[c]) / n * best;
  }
  return purity;
}

std::vector<RetrievedDocument> retrieve(const Matrix& theta, std::size_t query, std::size_t n,
                                        RetrievalDivergence divergence) {
  if (query >= theta.rows()) throw InputError("retrieve: query index out of range");
  const Matrix s = smoothed(theta);
  std::vector<RetrievedDocument> all;
  all.reserve(theta.rows());
  for (std::size_t d = 0; d < s.rows(); ++d) {
    if (d == query) continue;
    double div = kl_rows(s.row(query), s.row(d));
    if (divergence == RetrievalDivergence::symmetric) div = 0.5 * (div + kl_rows(s.row(d), s.row(query)));
    all.push_back({d, div});
  }
  const std::size_t keep = std::min(n, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const RetrievedDocument& a, const RetrievedDocument& b) {
                      return a.divergence != b.divergence ? a.divergence < b.divergence
                                                          : a.index < b.index;
                    });
  all.resize(keep);
  return all;
}

double retrieval_precision(const Matrix& theta, std::span<const std::string> labels, std::size_t n,
                           RetrievalDivergence divergence) {
  if (labels.size() != theta.rows()) throw InputError("retrieval: one label per document required");
  if (n == 0) throw DomainError("retrieval: N must be >= 1");
  if (n >= theta.rows())
    throw DomainError("retrieval: N=" + std::to_string(n) + " must be smaller than the corpus size " +
                      std::to_string(theta.rows()));
  double total = 0.0;
  for (std::size_t q = 0; q < theta.rows(); ++q) {
    std::size_t hits = 0;
    for (const auto& r : retrieve(theta, q, n, divergence))
      if (labels[r.index] == labels[q]) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(n);
  }
  return total / static_cast<double>(theta.rows());
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("welch_t needs at least two values per side");
  const double ma = mean(a), mb = mean(b);
  const double sa = sample_variance(a, ma) / static_cast<double>(a.size());
  const double sb = sample_variance(b, mb) / static_cast<double>(b.size());
  WelchResult r;
  if (sa == 0.0 && sb == 0.0) {
    r.df = static_cast<double>(a.size() + b.size() - 2);
    if (ma == mb) return r;
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) /
         (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  r.p_value = student_t_two_sided(r.t, r.df);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  j["metrics"] = metrics;
  if (!per_seed.empty()) j["per_seed"] = per_seed;
  if (!welch_p_values.empty()) j["welch_p_values"] = welch_p_values;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  if (j.contains("per_seed")) r.per_seed = j["per_seed"].get<std::map<std::string, std::vector<double>>>();
  if (j.contains("welch_p_values"))
    r.welch_p_values = j["welch_p_values"].get<std::map<std::string, double>>();
  return r;
}

EvalReport evaluate(const EvalInputs& in, const EvalOptions& options) {
  EvalReport report;
  auto need = [](bool ok, const std::string& metric, const std::string& what) {
    if (!ok) throw UndefinedMetricError(metric + " requires " + what);
  };

  // Labelled subset for purity/retrieval.
  std::vector<std::size_t> labelled;
  std::vector<std::string> labels;
  for (std::size_t d = 0; d < in.labels.size(); ++d)
    if (in.labels[d]) {
      labelled.push_back(d);
      labels.push_back(*in.labels[d]);
    }

  for (const auto& metric : options.metrics) {
    if (metric == "npmi") {
      need(in.beta && in.incidence, metric, "topic-word weights and a document incidence");
      report.metrics[metric] = npmi_coherence(top_word_indices(*in.beta, std::min(options.top_n, in.beta->cols())), *in.incidence);
    } else if (metric == "i_rbo") {
      need(in.beta && in.vocab, metric, "topic-word weights and a vocabulary");
      report.metrics[metric] = i_rbo(top_words(*in.beta, *in.vocab, std::min(options.top_n, in.beta->cols())), options.rbo_p);
    } else if (metric == "purity") {
      need(in.theta, metric, "document-topic distributions");
      need(!labelled.empty(), metric, "document labels");
      if (in.labels.size() != in.theta->rows()) throw InputError("label count != theta rows");
      report.metrics[metric] = purity_harmonic(in.theta->gather_rows(labelled), labels);
    } else if (metric.starts_with("precision@")) {
      need(in.theta, metric, "document-topic distributions");
      need(!labelled.empty(), metric, "document labels");
      if (in.labels.size() != in.theta->rows()) throw InputError("label count != theta rows");
      std::size_t n = 0;
      try {
        n = std::stoul(metric.substr(10));
      } catch (const std::exception&) {
        throw ConfigError("bad retrieval metric name: " + metric);
      }
      report.metrics[metric] =
          retrieval_precision(in.theta->gather_rows(labelled), labels, n, options.divergence);
    } else {
      throw ConfigError("unknown metric: " + metric +
                        " (expected npmi, i_rbo, purity or precision@N)");
    }
  }
  return report;
}

}  // namespace softtopic
