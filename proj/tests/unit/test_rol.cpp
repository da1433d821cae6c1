#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "f1rank/rol.hpp"

using namespace f1rank;

namespace {

std::vector<double> central_difference(const std::vector<double>& a, double h = 1e-6) {
  std::vector<double> g(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto up = a, down = a;
    up[k] += h;
    down[k] -= h;
    g[k] = (rol_log_prob(up) - rol_log_prob(down)) / (2 * h);
  }
  return g;
}

std::vector<double> random_abilities(std::mt19937_64& rng, std::size_t m, double lo = -3, double hi = 3) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> a(m);
  for (auto& v : a) v = u(rng);
  return a;
}

}  // namespace

TEST(RolLogProb, TwoEqualCompetitors) {
  EXPECT_NEAR(rol_log_prob(std::vector<double>{0, 0}), std::log(0.5), 1e-15);
}

TEST(RolLogProb, ThreeCompetitorExample) {
  // e/(e+2) * 1/2, evaluated independently in double precision.
  const double expected = -1.2445918944919965;
  EXPECT_NEAR(rol_log_prob(std::vector<double>{1, 0, 0}), expected, 1e-14);
  EXPECT_NEAR(std::exp(expected), 0.28806, 1e-5);
  EXPECT_NEAR(rol_log_prob(std::vector<double>{11, 10, 10}), expected, 1e-12);
}

TEST(RolLogProb, TranslationInvariance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-30, 30);
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_abilities(rng, 2 + rep % 5);
    const double c = shift(rng);
    auto b = a;
    for (auto& v : b) v += c;
    EXPECT_NEAR(rol_log_prob(a), rol_log_prob(b), 1e-10);
  }
}

TEST(RolLogProb, StableAtExtremes) {
  const double lp = rol_log_prob(std::vector<double>{-50, 50, 0});
  EXPECT_TRUE(std::isfinite(lp));
  EXPECT_NEAR(lp, -100.0, 1e-9);
  EXPECT_NEAR(rol_log_prob(std::vector<double>{50, -50}), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(rol_log_prob(std::vector<double>{700, -700, 0})));
}

TEST(RolLogProb, RejectsBadInput) {
  EXPECT_THROW(rol_log_prob(std::vector<double>{1.0}), ModelError);
  EXPECT_THROW(rol_log_prob(std::vector<double>{}), ModelError);
  EXPECT_THROW(rol_log_prob(std::vector<double>{0, NAN}), ModelError);
  EXPECT_THROW(rol_grad(std::vector<double>{INFINITY, 0}), ModelError);
}

TEST(RolGrad, TwoEqualCompetitors) {
  auto g = rol_grad(std::vector<double>{0, 0});
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[1], -0.5, 1e-15);
  auto fd = central_difference({0, 0});
  EXPECT_NEAR(g[0], fd[0], 1e-6);
  EXPECT_NEAR(g[1], fd[1], 1e-6);
}

TEST(RolGrad, ThreeCompetitorExample) {
  const std::vector<double> a{1, 0, 0};
  auto g = rol_grad(a);
  auto fd = central_difference(a);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g[k], fd[k], 1e-6);
}

TEST(RolGrad, MatchesFiniteDifferencesAndSumsToZero) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_abilities(rng, 2 + rep % 5);
    auto g = rol_grad(a);
    auto fd = central_difference(a);
    double total = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_LE(std::abs(g[k] - fd[k]), 1e-5 * std::max(1.0, std::abs(fd[k]))) << "rep " << rep;
      total += g[k];
    }
    EXPECT_NEAR(total, 0.0, 1e-12);
  }
}

TEST(RolGrad, FiniteAtExtremes) {
  for (double v : rol_grad(std::vector<double>{-700, 700, 0, 3})) EXPECT_TRUE(std::isfinite(v));
}

TEST(BruteForcePmf, Examples) {
  auto two = brute_force_rank_pmf(std::vector<double>{0, 0});
  ASSERT_EQ(two.size(), 2u);
  for (const auto& [perm, p] : two) EXPECT_DOUBLE_EQ(p, 0.5);

  auto three = brute_force_rank_pmf(std::vector<double>{1, 0, 0});
  EXPECT_NEAR((three[{0, 1, 2}]), 0.28805844238291456, 1e-15);

  std::mt19937_64 rng(3);
  auto four = brute_force_rank_pmf(random_abilities(rng, 4));
  ASSERT_EQ(four.size(), 24u);
  double total = 0;
  for (const auto& [perm, p] : four) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(BruteForcePmf, RefusesLargeInput) {
  EXPECT_THROW(brute_force_rank_pmf(std::vector<double>(8, 0.0)), ModelError);
  EXPECT_NO_THROW(brute_force_rank_pmf(std::vector<double>(7, 0.0)));
}

TEST(BruteForcePmf, AgreesWithLogProb) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_abilities(rng, 2 + rep % 4);
    double total = 0;
    for (const auto& [perm, p] : brute_force_rank_pmf(a)) {
      std::vector<double> ordered;
      for (auto i : perm) ordered.push_back(a[i]);
      EXPECT_NEAR(std::exp(rol_log_prob(ordered)), p, 1e-12);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(BruteForcePmf, RaisingAbilityRaisesProbabilityOfLeading) {
  std::mt19937_64 rng(9);
  auto a = random_abilities(rng, 4);
  const auto before = brute_force_rank_pmf(a);
  a[2] += 0.25;
  const auto after = brute_force_rank_pmf(a);
  for (const auto& [perm, p] : before)
    if (perm.front() == 2) {
      EXPECT_GT(after.at(perm), p);
    }
}

TEST(SampleRanking, DominantCompetitorWins) {
  std::mt19937_64 rng(1);
  int wins = 0;
  for (int i = 0; i < 1000; ++i) wins += sample_ranking(std::vector<double>{20, -20}, rng).front() == 0;
  EXPECT_GE(wins, 999);
}

TEST(SampleRanking, SingleCompetitor) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_ranking(std::vector<double>{0.3}, rng), std::vector<std::size_t>{0});
}

TEST(SampleRanking, UniformOverOrderingsForEqualAbilities) {
  std::mt19937_64 rng(2);
  std::map<std::vector<std::size_t>, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[sample_ranking(std::vector<double>{0, 0, 0}, rng)];
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [perm, c] : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 6.0, 0.01);
}

TEST(SampleRanking, ChiSquareAgainstOracle) {
  const std::vector<double> a{0.8, -0.4, 0.1};
  const auto pmf = brute_force_rank_pmf(a);
  std::mt19937_64 rng(20140316);
  std::map<std::vector<std::size_t>, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample_ranking(a, rng)];
  double stat = 0;
  for (const auto& [perm, p] : pmf) {
    const double expected = n * p;
    const double diff = counts[perm] - expected;
    stat += diff * diff / expected;
  }
  // Upper 0.001 quantile of chi-square with 5 degrees of freedom.
  EXPECT_LT(stat, 20.515005652432873);
}

TEST(WinProbability, Examples) {
  EXPECT_NEAR(win_probability(0.3, 0.0), 0.574442516811659, 1e-15);
  EXPECT_NEAR(win_probability(0.3, 0.0), 0.57, 0.005);
  EXPECT_DOUBLE_EQ(win_probability(1.7, 1.7), 0.5);
  for (double d : {-800.0, -3.0, 0.1, 40.0, 800.0}) {
    const double p = win_probability(d, 0.5);
    EXPECT_NEAR(p + win_probability(0.5, d), 1.0, 1e-15);
    EXPECT_TRUE(std::isfinite(p));
  }
}
