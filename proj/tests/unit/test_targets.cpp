// SPDX-License-Identifier: Apache-2.0
#include "softtopic/targets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "softtopic/error.hpp"

namespace softtopic {
namespace {

Matrix one_row(std::vector<double> r) { return Matrix::from_rows({std::move(r)}); }

TEST(SoftTargets, SymmetricRow) {
  const Matrix t = soft_targets(one_row({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(t(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(t(0, 1), 0.5);
}

TEST(SoftTargets, LogisticOfOne) {
  const Matrix t = soft_targets(one_row({1, 0}), 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(t(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_NEAR(t(0, 0), 0.731059, 1e-6);
  EXPECT_NEAR(t(0, 1), 0.268941, 1e-6);
}

TEST(SoftTargets, HugeTemperatureIsUniform) {
  const Matrix t = soft_targets(one_row({5, -5}), 1e9);
  EXPECT_LT(std::abs(t(0, 0) - 0.5), 1e-8);
  EXPECT_GT(t(0, 0), 0.5);
}

TEST(SoftTargets, DefaultTemperatureIsThree) {
  EXPECT_EQ(kDefaultTemperature, 3.0);
  const Matrix logits = one_row({2, -1, 0.5});
  EXPECT_EQ(soft_targets(logits), soft_targets(logits, 3.0));
}

TEST(SoftTargets, LargeLogitsDoNotOverflow) {
  const Matrix t = soft_targets(one_row({1000, 999, -1000}), 1.0);
  EXPECT_NEAR(t(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_TRUE(all_finite(t.values()));
}

TEST(SoftTargets, Errors) {
  EXPECT_THROW(soft_targets(one_row({0, 1}), 0.0), DomainError);
  EXPECT_THROW(soft_targets(one_row({0, 1}), -1.0), DomainError);
  EXPECT_THROW(soft_targets(one_row({0, std::numeric_limits<double>::infinity()}), 1.0), InputError);
  EXPECT_THROW(soft_targets(one_row({std::nan(""), 1}), 1.0), InputError);
}

class SoftTargetProperties : public ::testing::Test {
 protected:
  std::vector<std::vector<double>> rows() {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> width(2, 12);
    std::uniform_real_distribution<double> value(-30.0, 30.0);
    std::vector<std::vector<double>> out(300);
    for (auto& r : out) {
      r.resize(width(gen));
      for (double& v : r) v = value(gen);
    }
    return out;
  }
};

TEST_F(SoftTargetProperties, RowStochasticAndOrderPreserving) {
  for (const auto& r : rows()) {
    for (double tau : {0.05, 0.5, 1.0, 3.0, 10.0, 1e4}) {
      const Matrix t = soft_targets(one_row(r), tau);
      double sum = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_GE(t(0, i), 0.0);
        sum += t(0, i);
        for (std::size_t j = 0; j < r.size(); ++j)
          if (r[i] > r[j] && tau <= 10.0) {
            EXPECT_GE(t(0, i), t(0, j));
          }
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST_F(SoftTargetProperties, ShiftInvariant) {
  for (const auto& r : rows()) {
    auto shifted = r;
    for (double& v : shifted) v += 17.25;
    const Matrix a = soft_targets(one_row(r), 3.0), b = soft_targets(one_row(shifted), 3.0);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a(0, i), b(0, i), 1e-9);
  }
}

TEST_F(SoftTargetProperties, TemperatureLimits) {
  for (auto r : rows()) {
    // Enforce a logit gap >= 1 at the top for the cold limit.
    const auto top = std::max_element(r.begin(), r.end());
    double second = -1e300;
    for (auto it = r.begin(); it != r.end(); ++it)
      if (it != top) second = std::max(second, *it);
    if (*top - second < 1.0) *top = second + 1.0;
    const Matrix cold = soft_targets(one_row(r), 1e-3);
    EXPECT_GT(cold(0, static_cast<std::size_t>(top - r.begin())), 1.0 - 1e-6);
    const Matrix hot = soft_targets(one_row(r), 1e9);
    for (std::size_t i = 0; i < r.size(); ++i)
      EXPECT_LT(std::abs(hot(0, i) - 1.0 / static_cast<double>(r.size())), 1e-6);
  }
}

TEST(BowTargets, Examples) {
  BowVector a;
  a.entries = {{0, 2}, {1, 2}};
  EXPECT_EQ(bow_targets(a, 3), (std::vector<double>{0.5, 0.5, 0.0}));
  BowVector b;
  b.entries = {{2, 1}};
  EXPECT_EQ(bow_targets(b, 3), (std::vector<double>{0.0, 0.0, 1.0}));
  BowVector c;
  c.entries = {{0, 1}, {1, 3}};
  EXPECT_EQ(bow_targets(c, 2), (std::vector<double>{0.25, 0.75}));
}

TEST(BowTargets, EmptyDocumentIsDegenerate) {
  EXPECT_THROW(bow_targets(BowVector{}, 3), DegenerateDocumentError);
}

TEST(MeanRowEntropy, UniformAndOneHot) {
  EXPECT_NEAR(mean_row_entropy(Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}, {1, 0, 0, 0}})),
              0.5 * std::log(4.0), 1e-12);
}

TEST(MeanRowEntropy, IncreasesWithTemperature) {
  const Matrix logits = Matrix::from_rows({{3, 1, 0, -2}, {0.5, 0.2, 4, 1}});
  double previous = -1.0;
  for (double tau : {0.5, 1.0, 3.0, 5.0, 10.0}) {
    const double h = mean_row_entropy(soft_targets(logits, tau));
    EXPECT_GT(h, previous);
    previous = h;
  }
}

}  // namespace
}  // namespace softtopic
