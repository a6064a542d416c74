// SPDX-License-Identifier: Apache-2.0
#include "softtopic/targets.hpp"

#include <cmath>
#include <string>

#include "softtopic/error.hpp"

namespace softtopic {

Matrix soft_targets(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DomainError("temperature must be a positive finite number");
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    if (!all_finite(in)) throw InputError("non-finite logit in row " + std::to_string(r));
    auto dst = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = in[c] / temperature;
    softmax_inplace(dst);
  }
  return out;
}

std::vector<double> bow_targets(const BowVector& bow, std::size_t vocab_size) {
  if (bow.empty()) throw DegenerateDocumentError("document has no in-vocabulary tokens");
  std::vector<double> row(vocab_size, 0.0);
  const double total = static_cast<double>(bow.total());
  for (const auto& [idx, count] : bow.entries) {
    if (idx >= vocab_size) throw InputError("bow index out of vocabulary range");
    row[idx] = count / total;
  }
  return row;
}

double mean_row_entropy(const Matrix& targets) {
  if (targets.rows() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < targets.rows(); ++r) sum += entropy(targets.row(r));
  return sum / static_cast<double>(targets.rows());
}

}  // namespace softtopic
