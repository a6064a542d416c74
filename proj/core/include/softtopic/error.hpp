// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace softtopic {

/// Malformed or non-finite input data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. tau <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// No token survived preprocessing.
class EmptyCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Document with no in-vocabulary tokens where a BoW target is required.
class DegenerateDocumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss, gradient or update became NaN/Inf. The message names the
/// parameter block or training coordinates.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, truncated payload or version mismatch in a binary file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Metric cannot be computed for the given input (e.g. I-RBO on one topic).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace softtopic
