// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "softtopic/matrix.hpp"

namespace softtopic {

struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> label;
};

/// The bundled English stop-word list (core/data/stopwords_en.txt).
const std::unordered_set<std::string>& english_stop_words();

struct TokenizerOptions {
  std::unordered_set<std::string> stop_words = english_stop_words();
  std::size_t min_length = 2;  // in code points
  bool drop_numeric = true;
};

/// Splits on non-alphanumeric boundaries, lowercases ASCII letters, then
/// removes stop-words, pure-digit tokens and tokens shorter than
/// `min_length`. Non-ASCII code points are kept as word characters.
std::vector<std::string> tokenize(std::string_view text);
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Throws InputError on duplicates, empty words or uppercase ASCII.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<std::size_t> index_of(std::string_view word) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::size_t kDefaultVocabularySize = 2000;

/// Top-`size` tokens by corpus frequency; ties broken lexicographically.
/// Throws EmptyCorpusError if no token survives.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized, std::size_t size);
Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t size,
                            const TokenizerOptions& options = {});

struct BowVector {
  std::map<std::size_t, std::uint32_t> entries;

  std::uint64_t total() const;
  bool empty() const { return entries.empty(); }
  friend bool operator==(const BowVector&, const BowVector&) = default;
};

/// Counts of in-vocabulary tokens; out-of-vocabulary tokens are dropped.
BowVector bow_vector(std::span<const std::string> tokens, const Vocabulary& vocab);

/// Dense N x |V| count matrix.
Matrix bow_matrix(std::span<const BowVector> bows, std::size_t vocab_size);
BowVector bow_from_row(std::span<const double> counts);

/// JSON-lines corpus: one object per line with `id`, `text` and optional
/// `label`. Blank lines are skipped. Throws InputError naming the line.
std::vector<Document> read_corpus_jsonl(const std::filesystem::path& path);
void write_corpus_jsonl(const std::filesystem::path& path, std::span<const Document> docs);

/// One word per line, UTF-8, line number = index.
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::filesystem::path& path);

}  // namespace softtopic
