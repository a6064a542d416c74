// SPDX-License-Identifier: Apache-2.0
#include "softtopic/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "softtopic/error.hpp"
#include "stopwords_data.hpp"

namespace softtopic {
namespace {

// Length of the UTF-8 sequence starting with lead byte `c` (1 for invalid
// leads so malformed input still advances).
std::size_t utf8_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;
}

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_digits(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::size_t code_points(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); i += utf8_length(static_cast<unsigned char>(s[i]))) ++n;
  return n;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::unordered_set<std::string>& english_stop_words() {
  static const std::unordered_set<std::string> words = [] {
    std::unordered_set<std::string> out;
    std::istringstream in{std::string(detail::kStopWordsEn)};
    std::string w;
    while (std::getline(in, w)) {
      w = trim(w);
      if (!w.empty()) out.insert(w);
    }
    return out;
  }();
  return words;
}

std::vector<std::string> tokenize(std::string_view text) {
  static const TokenizerOptions defaults{};
  return tokenize(text, defaults);
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    const bool keep = code_points(current) >= options.min_length &&
                      !(options.drop_numeric && is_digits(current)) &&
                      !options.stop_words.contains(current);
    if (keep) tokens.push_back(current);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    const std::size_t len = std::min(utf8_length(c), text.size() - i);
    if (is_word_byte(c)) {
      if (c < 0x80) {
        current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
      } else {
        current.append(text.substr(i, len));
      }
    } else {
      flush();
    }
    i += len;
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto& w = words_[i];
    if (w.empty()) throw InputError("vocabulary: empty word at index " + std::to_string(i));
    if (std::any_of(w.begin(), w.end(), [](char c) { return c >= 'A' && c <= 'Z'; }))
      throw InputError("vocabulary: word not lowercase: " + w);
    if (!index_.emplace(w, i).second) throw InputError("vocabulary: duplicate word: " + w);
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized, std::size_t size) {
  if (size == 0) throw DomainError("vocabulary size must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& doc : tokenized)
    for (const auto& t : doc) ++counts[t];
  if (counts.empty()) throw EmptyCorpusError("no tokens survive preprocessing");

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  ranked.resize(std::min(size, ranked.size()));
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, _] : ranked) words.push_back(std::move(w));
  return Vocabulary(std::move(words));
}

Vocabulary build_vocabulary(std::span<const Document> docs, std::size_t size,
                            const TokenizerOptions& options) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(docs.size());
  for (const auto& d : docs) tokenized.push_back(tokenize(d.text, options));
  return build_vocabulary(tokenized, size);
}

std::uint64_t BowVector::total() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : entries) n += c;
  return n;
}

BowVector bow_vector(std::span<const std::string> tokens, const Vocabulary& vocab) {
  BowVector bow;
  for (const auto& t : tokens)
    if (const auto idx = vocab.index_of(t)) ++bow.entries[*idx];
  return bow;
}

Matrix bow_matrix(std::span<const BowVector> bows, std::size_t vocab_size) {
  Matrix m(bows.size(), vocab_size);
  for (std::size_t d = 0; d < bows.size(); ++d)
    for (const auto& [idx, count] : bows[d].entries) {
      if (idx >= vocab_size) throw InputError("bow index out of vocabulary range");
      m(d, idx) = count;
    }
  return m;
}

BowVector bow_from_row(std::span<const double> counts) {
  BowVector bow;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    if (counts[v] < 0.0 || counts[v] != std::floor(counts[v]))
      throw InputError("bow row holds a non-count value at column " + std::to_string(v));
    if (counts[v] > 0.0) bow.entries[v] = static_cast<std::uint32_t>(counts[v]);
  }
  return bow;
}

std::vector<Document> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus: " + path.string());
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["text"].is_string())
      throw InputError(where + ": expected object with string `id` and `text`");
    Document doc;
    doc.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    doc.text = j["text"].get<std::string>();
    if (j.contains("label") && !j["label"].is_null())
      doc.label = j["label"].is_string() ? j["label"].get<std::string>() : j["label"].dump();
    if (trim(doc.text).empty()) throw InputError(where + ": empty text for id " + doc.id);
    if (!seen.insert(doc.id).second) throw InputError(where + ": duplicate id " + doc.id);
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_corpus_jsonl(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  for (const auto& d : docs) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.label) j["label"] = *d.label;
    out << j.dump() << '\n';
  }
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  for (const auto& w : vocab.words()) out << w << '\n';
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open vocabulary: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

}  // namespace softtopic
