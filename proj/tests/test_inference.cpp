#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "relanom/errors.hpp"
#include "relanom/inference.hpp"

using namespace relanom;

TEST(FTail, ZeroAndInfinity) {
  EXPECT_EQ(f_upper_tail(0.0, 1, 120), 1.0);
  EXPECT_EQ(f_upper_tail(std::numeric_limits<double>::infinity(), 1, 120), 0.0);
}

TEST(FTail, Errors) {
  EXPECT_THROW(f_upper_tail(1.0, 0.0, 10), InvalidDf);
  EXPECT_THROW(f_upper_tail(1.0, 1.0, -3), InvalidDf);
  EXPECT_THROW(f_upper_tail(1.0, 1.0, std::numeric_limits<double>::infinity()), InvalidDf);
  EXPECT_THROW(f_upper_tail(-1.0, 1.0, 10), Error);
  EXPECT_THROW(f_upper_tail(std::nan(""), 1.0, 10), Error);
}

TEST(FTail, TSquaredIdentity) {
  for (double ddf : {1.0, 2.5, 7.0, 29.0, 112.0, 159.0, 1000.0})
    for (double f : {0.01, 0.5, 1.0, 3.9, 7.15, 20.6, 77.1, 265.5})
      EXPECT_NEAR(f_upper_tail(f, 1.0, ddf), oracle::t_two_sided(f, ddf), 1e-10) << f << " " << ddf;
}

TEST(FTail, QuadratureOracle) {
  for (double ddf : {3.0, 29.0, 112.0})
    for (double ndf : {1.0, 2.0, 5.0})
      for (double f : {0.3, 1.7, 6.3, 25.0})
        EXPECT_NEAR(f_upper_tail(f, ndf, ddf), oracle::f_upper_tail_quadrature(f, ndf, ddf), 1e-8);
}

TEST(FTail, AlbertDeLongRow) {
  const double p = f_upper_tail(6.3, 1, 112);
  EXPECT_NEAR(p, oracle::f_upper_tail_quadrature(6.3, 1, 112), 1e-10);
  EXPECT_LE(p, 0.0138);
}

TEST(IncompleteBeta, Symmetry) {
  oracle::Rng rng(61);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0.2, 80), b = rng.uniform(0.2, 80), x = rng.uniform();
    EXPECT_NEAR(regularized_incomplete_beta(a, b, x) + regularized_incomplete_beta(b, a, 1 - x), 1.0, 1e-12);
  }
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 0.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 1.0), 1.0);
  EXPECT_NEAR(regularized_incomplete_beta(1, 1, 0.3), 0.3, 1e-15);
}

TEST(Bh, HandEvaluation) {
  const std::vector<double> p{0.01, 0.02, 0.03, 0.04};
  for (double q : bh_adjust(p)) EXPECT_DOUBLE_EQ(q, 0.04);
}

TEST(Bh, DegenerateInputs) {
  EXPECT_EQ(bh_adjust(std::vector<double>{0.037}), std::vector<double>{0.037});
  EXPECT_EQ(bh_adjust(std::vector<double>{1, 1, 1}), (std::vector<double>{1, 1, 1}));
  EXPECT_TRUE(bh_adjust(std::vector<double>{}).empty());
  EXPECT_THROW(bh_adjust(std::vector<double>{0.5, 1.2}), InvalidP);
  EXPECT_THROW(bh_adjust(std::vector<double>{-0.1}), InvalidP);
  EXPECT_THROW(bh_adjust(std::vector<double>{std::nan("")}), InvalidP);
}

namespace {

std::vector<double> random_pvalues(oracle::Rng& rng) {
  const int m = rng.between(1, 50);
  std::vector<double> p;
  const bool coarse = rng.uniform() < 0.3;
  for (int i = 0; i < m; ++i) {
    double v = std::pow(rng.uniform(), 3.0);
    if (coarse) v = std::round(v * 20) / 20;
    p.push_back(v);
  }
  return p;
}

}  // namespace

TEST(Bh, BruteForceOracle) {
  oracle::Rng rng(62);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_pvalues(rng);
    EXPECT_EQ(bh_adjust(p), oracle::bh_brute_force(p)) << "trial " << trial;
  }
}

TEST(Bh, Properties) {
  oracle::Rng rng(63);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = random_pvalues(rng);
    const auto q = bh_adjust(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GE(q[i], p[i]);
      EXPECT_LE(q[i], 1.0);
      for (std::size_t j = 0; j < p.size(); ++j)
        if (p[i] < p[j]) EXPECT_LE(q[i], q[j]);
    }
    std::vector<std::size_t> perm(p.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.between(0, static_cast<int>(i) - 1))]);
    std::vector<double> shuffled;
    for (std::size_t i : perm) shuffled.push_back(p[i]);
    const auto qs = bh_adjust(shuffled);
    for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(qs[k], q[perm[k]]);
  }
}

TEST(Bh, IdempotentOnAdjustedSets) {
  // A set already of the form m p_(k) / k with non-decreasing values is a fixed point.
  const std::vector<double> q{0.04, 0.04, 0.04, 0.04};
  EXPECT_EQ(bh_adjust(q), q);
  const std::vector<double> r{0.25, 0.5, 0.75, 1.0};
  const auto once = bh_adjust(r);
  EXPECT_EQ(bh_adjust(once), once);
}

TEST(PValueSetTest, AdjustFillsCorrected) {
  PValueSet s;
  s.add("a", 0.01);
  s.add("b", 0.04);
  s.adjust();
  EXPECT_EQ(s.p_corrected.size(), 2u);
  EXPECT_DOUBLE_EQ(s.p_corrected[0], 0.02);
  EXPECT_DOUBLE_EQ(s.p_corrected[1], 0.04);
}
