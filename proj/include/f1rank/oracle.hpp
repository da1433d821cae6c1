#pragma once

// On-demand correctness checks: the ranking likelihood against exhaustive
// enumeration, and model gradients against central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "f1rank/model.hpp"
#include "f1rank/rol.hpp"
#include "f1rank/synthetic.hpp"

namespace f1rank::oracle {

struct RolCheck {
  std::size_t vectors = 0;
  std::size_t orderings = 0;
  double max_prob_error = 0.0;  // |exp(log prob) - enumerated probability|
  double max_sum_error = 0.0;   // |sum of pmf - 1|
  double max_grad_error = 0.0;  // relative, against central differences
};

/// Random ability vectors with 2..6 competitors.
inline RolCheck check_rol(std::size_t vectors = 200, std::uint64_t seed = 20240601) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  std::normal_distribution<double> z(0.0, 1.5);
  RolCheck out;
  out.vectors = vectors;
  for (std::size_t v = 0; v < vectors; ++v) {
    std::vector<double> a(size(rng));
    for (auto& x : a) x = z(rng);
    double total = 0.0;
    std::vector<double> ordered(a.size());
    for (const auto& [perm, p] : brute_force_rank_pmf(a)) {
      for (std::size_t i = 0; i < perm.size(); ++i) ordered[i] = a[perm[i]];
      out.max_prob_error = std::max(out.max_prob_error, std::abs(std::exp(rol_log_prob(ordered)) - p));
      total += p;
      ++out.orderings;
    }
    out.max_sum_error = std::max(out.max_sum_error, std::abs(total - 1.0));

    const auto g = rol_grad(a);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double h = 1e-6;
      auto up = a, down = a;
      up[k] += h, down[k] -= h;
      const double fd = (rol_log_prob(up) - rol_log_prob(down)) / (2 * h);
      out.max_grad_error = std::max(out.max_grad_error, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return out;
}

struct GradientCheck {
  std::string variant;
  std::size_t dimension = 0;
  std::size_t points = 0;
  double max_relative_error = 0.0;
};

/// The four covariate specs plus the two dynamics variants.
inline std::vector<std::pair<std::string, ModelSpec>> variants() {
  std::vector<std::pair<std::string, ModelSpec>> out;
  for (const char* name : {"basic", "weather", "circuit", "both"}) {
    ModelSpec s;
    apply_model_name(s, name);
    out.emplace_back(name, s);
  }
  ModelSpec ar1;
  ar1.dynamics = Dynamics::ar1;
  out.emplace_back("basic+ar1", ar1);
  ModelSpec slope;
  slope.dynamics = Dynamics::intercept_slope;
  out.emplace_back("basic+slope", slope);
  return out;
}

/// Small simulated corpus with seat changes, wet races and street circuits.
inline Dataset gradient_corpus(std::uint64_t seed = 4) {
  synthetic::Settings s;
  s.seasons = 3;
  s.races_per_season = 4;
  s.teams = 3;
  s.driver_pool = 9;
  s.wet_share = 0.3;
  s.street_share = 0.3;
  s.seed = seed;
  return synthetic::simulate(s).data;
}

inline GradientCheck check_gradient(const std::string& label, const Model& model, std::size_t points,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const std::size_t n = model.dimension();
  GradientCheck out{label, n, points, 0.0};
  std::vector<double> x(n), grad(n), up, down;
  for (std::size_t p = 0; p < points; ++p) {
    for (auto& v : x) v = u(rng);
    model.log_density(x, grad);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = 1e-6;
      up = x, down = x;
      up[i] += h, down[i] -= h;
      const double fd = (model.log_density(up, {}) - model.log_density(down, {})) / (2 * h);
      out.max_relative_error = std::max(out.max_relative_error, std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return out;
}

inline std::vector<GradientCheck> check_gradients(const Dataset& data, std::size_t points = 50,
                                                  std::uint64_t seed = 77) {
  const auto index = build_index(data);
  const auto outcomes = build_outcomes(data, index);
  std::vector<GradientCheck> out;
  for (const auto& [label, spec] : variants())
    out.push_back(check_gradient(label, Model(spec, index, outcomes), points, seed));
  return out;
}

}  // namespace f1rank::oracle
