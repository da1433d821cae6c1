#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "f1rank/diagnostics.hpp"
#include "f1rank/nuts.hpp"

using namespace f1rank;

namespace {

/// Independent normals with the given scales.
struct DiagonalGaussian {
  std::vector<double> sd;
  std::size_t dimension() const { return sd.size(); }
  double log_density(std::span<const double> x, std::span<double> g) const {
    double lp = 0;
    for (std::size_t i = 0; i < sd.size(); ++i) {
      lp -= 0.5 * x[i] * x[i] / (sd[i] * sd[i]);
      if (!g.empty()) g[i] = -x[i] / (sd[i] * sd[i]);
    }
    return lp;
  }
};

/// Bivariate normal with unit and triple scales and correlation rho.
struct CorrelatedGaussian {
  double s1 = 1.0, s2 = 3.0, rho = 0.9;
  std::size_t dimension() const { return 2; }
  double log_density(std::span<const double> x, std::span<double> g) const {
    const double det = s1 * s1 * s2 * s2 * (1 - rho * rho);
    const double a = s2 * s2 / det, b = -rho * s1 * s2 / det, c = s1 * s1 / det;
    if (!g.empty()) {
      g[0] = -(a * x[0] + b * x[1]);
      g[1] = -(b * x[0] + c * x[1]);
    }
    return -0.5 * (a * x[0] * x[0] + 2 * b * x[0] * x[1] + c * x[1] * x[1]);
  }
};

struct Nowhere {
  std::size_t dimension() const { return 2; }
  double log_density(std::span<const double>, std::span<double>) const {
    return -std::numeric_limits<double>::infinity();
  }
};

SamplerConfig quick(std::size_t chains = 4, std::size_t warmup = 500, std::size_t samples = 1000) {
  SamplerConfig c;
  c.chains = chains;
  c.warmup_iterations = warmup;
  c.sampling_iterations = samples;
  c.threads = 1;
  return c;
}

double moment(const std::vector<double>& v, int k) {
  double s = 0;
  for (double x : v) s += std::pow(x, k);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Nuts, StandardNormalMoments) {
  const DiagonalGaussian target{std::vector<double>(10, 1.0)};
  const auto draws = nuts_sample(target, quick());
  EXPECT_EQ(draws.divergence_count(), 0u);
  // Each moment k is checked against its Monte Carlo standard error,
  // sqrt(Var(x^k) / ESS(x^k)), with Var(x) = 1, Var(x^2) = 2, Var(x^4) = 96.
  struct Moment {
    int k;
    double expected, var;
  };
  const std::vector<Moment> moments = {{1, 0.0, 1.0}, {2, 1.0, 2.0}, {4, 3.0, 96.0}};
  for (std::size_t c = 0; c < 10; ++c) {
    for (const auto& [k, expected, var] : moments) {
      auto chains = draws.by_chain(c);
      for (auto& ch : chains)
        for (auto& x : ch) x = std::pow(x, k);
      const double ess = ess_basic(chains).value;
      const double mcse = std::sqrt(var / ess);
      EXPECT_NEAR(moment(draws.pooled(c), k), expected, 4.5 * mcse) << c << " k=" << k;
    }
    EXPECT_LT(rhat(draws.by_chain(c)).value, 1.01) << c;
  }
  const double mean_accept = std::accumulate(draws.accept_stat.begin(), draws.accept_stat.end(), 0.0) /
                             static_cast<double>(draws.accept_stat.size());
  EXPECT_NEAR(mean_accept, 0.8, 0.1);
}

TEST(Nuts, FiftyDimensionalStandardNormal) {
  const DiagonalGaussian target{std::vector<double>(50, 1.0)};
  const auto draws = nuts_sample(target, quick(8, 1000, 1000));
  for (std::size_t c = 0; c < 50; ++c) {
    const auto v = draws.pooled(c);
    const double m = moment(v, 1);
    EXPECT_NEAR(m, 0.0, 0.05) << c;
    EXPECT_NEAR(moment(v, 2) - m * m, 1.0, 0.1) << c;
  }
}

TEST(Nuts, CorrelatedGaussianCovariance) {
  const CorrelatedGaussian target;
  const auto draws = nuts_sample(target, quick(8, 1000, 2000));
  const auto x = draws.pooled(0), y = draws.pooled(1);
  const double mx = moment(x, 1), my = moment(y, 1);
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  const double n = static_cast<double>(x.size() - 1);
  const double t11 = 1.0, t22 = 9.0, t12 = 0.9 * 3.0;
  const double err = std::sqrt(std::pow(vx / n - t11, 2) + std::pow(vy / n - t22, 2) + 2 * std::pow(cxy / n - t12, 2));
  const double norm = std::sqrt(t11 * t11 + t22 * t22 + 2 * t12 * t12);
  EXPECT_LT(err / norm, 0.05);
}

TEST(Nuts, MetricAdaptsToScales) {
  const DiagonalGaussian target{{0.1, 1.0, 10.0}};
  const auto draws = nuts_sample(target, quick(2, 1000, 200));
  for (const auto& a : draws.adaptation) {
    ASSERT_EQ(a.inverse_metric.size(), 3u);
    EXPECT_NEAR(a.inverse_metric[0] / 0.01, 1.0, 0.35);
    EXPECT_NEAR(a.inverse_metric[1] / 1.0, 1.0, 0.35);
    EXPECT_NEAR(a.inverse_metric[2] / 100.0, 1.0, 0.35);
    EXPECT_GT(a.step_size, 0.1);
  }
}

TEST(Nuts, DeterministicForFixedSeed) {
  const DiagonalGaussian target{{1.0, 2.0}};
  const auto a = nuts_sample(target, quick(2, 100, 100));
  const auto b = nuts_sample(target, quick(2, 100, 100));
  EXPECT_EQ(a.values, b.values);
  auto other = quick(2, 100, 100);
  other.seed += 1;
  EXPECT_NE(nuts_sample(target, other).values, a.values);
}

TEST(Nuts, ChainsIndependentOfChainCountAndThreads) {
  const DiagonalGaussian target{{1.0, 2.0, 0.5}};
  auto two = quick(2, 100, 100);
  auto three = quick(3, 100, 100);
  three.threads = 2;
  const auto a = nuts_sample(target, two);
  const auto b = nuts_sample(target, three);
  const std::size_t per_chain = 100 * 3;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_chain; ++i)
      ASSERT_EQ(a.values[c * per_chain + i], b.values[c * per_chain + i]);
  // Different chains see different streams.
  EXPECT_NE(b.value(0, 50, 0), b.value(1, 50, 0));
}

TEST(Nuts, LeapfrogEnergyErrorIsSecondOrder) {
  const DiagonalGaussian target{{1.0, 2.0, 0.7}};
  const SamplerConfig config = quick(1);
  nuts_detail::NutsChain<DiagonalGaussian> chain(target, config, 0);
  auto energy_error = [&](double eps) {
    chain.set_position(std::vector<double>{0.3, -1.0, 0.5});
    auto z = chain.state();
    z.p = {0.8, 0.2, -0.4};
    const double h0 = chain.hamiltonian(z);
    const int steps = static_cast<int>(std::lround(1.3 / eps));
    for (int i = 0; i < steps; ++i) chain.leapfrog(z, eps);
    return std::abs(chain.hamiltonian(z) - h0);
  };
  const double e1 = energy_error(0.1), e2 = energy_error(0.05), e3 = energy_error(0.025);
  EXPECT_NEAR(e1 / e2, 4.0, 0.8);
  EXPECT_NEAR(e2 / e3, 4.0, 0.8);
}

TEST(Nuts, WindowScheduleMatchesDefaults) {
  nuts_detail::WindowSchedule w(1000, 75, 25, 50);
  std::vector<std::size_t> ends;
  std::size_t slow = 0;
  for (std::size_t it = 0; it < 1000; ++it) {
    slow += w.in_slow_window();
    if (w.at_window_end()) {
      ends.push_back(it);
      w.compute_next_window();
    }
    w.advance();
  }
  EXPECT_EQ(ends, (std::vector<std::size_t>{99, 149, 249, 449, 949}));
  EXPECT_EQ(slow, 875u);

  nuts_detail::WindowSchedule short_run(100, 75, 25, 50);
  ends.clear();
  for (std::size_t it = 0; it < 100; ++it) {
    if (short_run.at_window_end()) {
      ends.push_back(it);
      short_run.compute_next_window();
    }
    short_run.advance();
  }
  EXPECT_EQ(ends, (std::vector<std::size_t>{89}));

  nuts_detail::WindowSchedule none(10, 75, 25, 50);
  EXPECT_FALSE(none.in_slow_window());
}

TEST(Nuts, DualAveragingSettlesNearTarget) {
  nuts_detail::DualAveraging da;
  da.restart(1.0);
  // Acceptance falls with the step size as exp(-eps); its 0.8 crossing is at log(1.25).
  double eps = 1.0;
  for (int i = 0; i < 3000; ++i) eps = da.learn(std::exp(-eps), 0.8);
  EXPECT_NEAR(da.final_step_size(), std::log(1.25), 0.02);
}

TEST(Nuts, ConfigAndInitializationErrors) {
  const DiagonalGaussian target{{1.0}};
  auto c = quick(0);
  EXPECT_THROW(nuts_sample(target, c), ConfigError);
  c = quick();
  c.target_acceptance = 1.0;
  EXPECT_THROW(nuts_sample(target, c), ConfigError);
  c = quick();
  c.max_tree_depth = 0;
  EXPECT_THROW(nuts_sample(target, c), ConfigError);
  EXPECT_THROW(nuts_sample(Nowhere{}, quick(1, 10, 10)), SamplerError);
}

TEST(Nuts, TreeDepthCapRespected) {
  const DiagonalGaussian target{{1.0, 1.0}};
  auto c = quick(1, 50, 100);
  c.max_tree_depth = 2;
  const auto draws = nuts_sample(target, c);
  for (int d : draws.tree_depth) EXPECT_LE(d, 2);
}
