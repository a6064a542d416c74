// SPDX-License-Identifier: Apache-2.0
#include "softtopic/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "softtopic/error.hpp"
#include "test_support.hpp"

namespace softtopic {
namespace {

using Tokens = std::vector<std::string>;
using testing::TempDir;

TokenizerOptions bare() {
  TokenizerOptions o;
  o.stop_words.clear();
  o.min_length = 1;
  return o;
}

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, LowercasesStripsPunctuationAndStopWords) {
  EXPECT_EQ(tokenize("The LUNAR lander, the lander!"), (Tokens{"lunar", "lander", "lander"}));
}

TEST(Tokenize, AllStopWords) { EXPECT_TRUE(tokenize("a an the of").empty()); }

TEST(Tokenize, DropsDigitsAndSingleCharacters) {
  EXPECT_EQ(tokenize("x 42 rover7 v2 7"), (Tokens{"rover7", "v2"}));
}

TEST(Tokenize, KeepsNonAsciiLettersInsideWords) {
  EXPECT_EQ(tokenize("Café naïve"), (Tokens{"café", "naïve"}));
}

TEST(Tokenize, IsDeterministic) {
  const std::string text = "Orbital mechanics: the Hohmann transfer, revisited (again).";
  EXPECT_EQ(tokenize(text), tokenize(text));
}

TEST(StopWords, BundledListIsLoaded) {
  const auto& words = english_stop_words();
  EXPECT_EQ(words.size(), 318u);
  for (const char* w : {"the", "a", "of", "and", "which", "yourselves"}) EXPECT_TRUE(words.count(w)) << w;
  EXPECT_FALSE(words.count("lander"));
}

TEST(BuildVocabulary, MostFrequentWord) {
  const std::vector<Document> docs = {{"d0", "x x y", {}}};
  EXPECT_EQ(build_vocabulary(docs, 1, bare()).words(), (Tokens{"x"}));
}

TEST(BuildVocabulary, FrequencyTiesAreLexicographic) {
  const std::vector<Document> docs = {{"d0", "a b", {}}, {"d1", "b c", {}}};
  EXPECT_EQ(build_vocabulary(docs, 2, bare()).words(), (Tokens{"b", "a"}));
}

TEST(BuildVocabulary, SmallerThanRequested) {
  const std::vector<Document> docs = {{"d0", "x", {}}};
  EXPECT_EQ(build_vocabulary(docs, 5, bare()).words(), (Tokens{"x"}));
}

TEST(BuildVocabulary, EmptyCorpusThrows) {
  const std::vector<Document> docs = {{"d0", "the of and", {}}};
  EXPECT_THROW(build_vocabulary(docs, 10), EmptyCorpusError);
}

TEST(BuildVocabulary, DefaultSize) { EXPECT_EQ(kDefaultVocabularySize, 2000u); }

TEST(BuildVocabulary, DeterministicAcrossRuns) {
  const std::vector<Document> docs = {{"a", "rocket fuel rocket orbit", {}},
                                      {"b", "orbit lander fuel crater", {}},
                                      {"c", "crater dust dust rocket", {}}};
  const auto v1 = build_vocabulary(docs, 4);
  const auto v2 = build_vocabulary(docs, 4);
  EXPECT_EQ(v1, v2);
  EXPECT_EQ(v1.words(), (Tokens{"rocket", "crater", "dust", "fuel"}));
}

TEST(Vocabulary, IndexIsBijective) {
  const Vocabulary v({"alpha", "beta", "gamma"});
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.index_of(v.word(i)), i);
  EXPECT_FALSE(v.index_of("delta"));
}

TEST(Vocabulary, RejectsInvalidWords) {
  EXPECT_THROW(Vocabulary({"a", "a"}), InputError);
  EXPECT_THROW(Vocabulary({""}), InputError);
  EXPECT_THROW(Vocabulary({"Upper"}), InputError);
}

TEST(BowVector, DropsOutOfVocabulary) {
  const Vocabulary v({"x", "y"});
  const Tokens t{"x", "x", "z"};
  EXPECT_EQ(bow_vector(t, v).entries, (std::map<std::size_t, std::uint32_t>{{0, 2}}));
}

TEST(BowVector, EmptyTokens) {
  const Vocabulary v({"x", "y"});
  EXPECT_TRUE(bow_vector(Tokens{}, v).empty());
}

TEST(BowVector, IndexLookup) {
  const Vocabulary v({"x", "y"});
  EXPECT_EQ(bow_vector(Tokens{"y"}, v).entries, (std::map<std::size_t, std::uint32_t>{{1, 1}}));
}

TEST(BowVector, CountConservationAndIndexSafety) {
  std::mt19937 gen(7);
  const Tokens pool{"ash", "birch", "cedar", "dogwood", "elm", "fir", "gum", "holly"};
  const Vocabulary v({"birch", "elm", "holly", "ash"});
  for (int trial = 0; trial < 200; ++trial) {
    Tokens tokens(gen() % 30);
    for (auto& t : tokens) t = pool[gen() % pool.size()];
    const auto bow = bow_vector(tokens, v);
    const auto in_vocab = std::count_if(tokens.begin(), tokens.end(),
                                        [&](const std::string& t) { return v.index_of(t).has_value(); });
    EXPECT_EQ(bow.total(), static_cast<std::uint64_t>(in_vocab));
    for (const auto& [idx, count] : bow.entries) {
      EXPECT_LT(idx, v.size());
      EXPECT_GE(count, 1u);
    }
  }
}

TEST(BowMatrix, DenseRoundTrip) {
  BowVector a, b;
  a.entries = {{0, 2}, {2, 1}};
  b.entries = {{1, 4}};
  const std::vector<BowVector> bows{a, b};
  const Matrix m = bow_matrix(bows, 3);
  EXPECT_EQ(m, Matrix::from_rows({{2, 0, 1}, {0, 4, 0}}));
  EXPECT_EQ(bow_from_row(m.row(0)), a);
  EXPECT_EQ(bow_from_row(m.row(1)), b);
}

TEST(CorpusJsonl, RoundTripWithOptionalLabels) {
  TempDir dir;
  const std::vector<Document> docs = {{"d1", "first \"quoted\" text", std::string("space")},
                                      {"d2", "second line\nwith newline", std::nullopt}};
  write_corpus_jsonl(dir / "c.jsonl", docs);
  const auto back = read_corpus_jsonl(dir / "c.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "d1");
  EXPECT_EQ(back[0].text, docs[0].text);
  EXPECT_EQ(back[0].label, "space");
  EXPECT_FALSE(back[1].label.has_value());
}

TEST(CorpusJsonl, ErrorsNameTheLine) {
  TempDir dir;
  const auto check = [&](const std::string& body, const std::string& needle) {
    testing::write_file(dir / "bad.jsonl", body);
    try {
      read_corpus_jsonl(dir / "bad.jsonl");
      FAIL() << "expected InputError for: " << body;
    } catch (const InputError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  check("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n", ":2:");
  check("{\"id\":\"a\",\"text\":\"   \"}\n", ":1:");
  check("{\"id\":\"a\",\"text\":\"ok\"}\nnot json\n", ":2:");
  check("{\"text\":\"no id\"}\n", ":1:");
}

TEST(VocabularyFile, OneWordPerLineRoundTrip) {
  TempDir dir;
  const Vocabulary v({"orbit", "café", "lander"});
  write_vocabulary(dir / "vocab.txt", v);
  EXPECT_EQ(testing::read_file(dir / "vocab.txt"), "orbit\ncafé\nlander\n");
  EXPECT_EQ(read_vocabulary(dir / "vocab.txt"), v);
}

}  // namespace
}  // namespace softtopic
