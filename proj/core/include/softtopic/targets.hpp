// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "softtopic/corpus.hpp"
#include "softtopic/matrix.hpp"

namespace softtopic {

inline constexpr double kDefaultTemperature = 3.0;

/// Row-wise softmax(logits / temperature) with per-row max subtraction.
/// Throws InputError on a non-finite logit and DomainError if
/// temperature <= 0.
Matrix soft_targets(const Matrix& logits, double temperature = kDefaultTemperature);

/// Normalised count row. Throws DegenerateDocumentError for an empty bow.
std::vector<double> bow_targets(const BowVector& bow, std::size_t vocab_size);

/// Mean Shannon entropy (nats) of the rows of a target matrix.
double mean_row_entropy(const Matrix& targets);

}  // namespace softtopic
