#pragma once

// Rank-ordered logit (Plackett-Luce) distribution over full rankings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "f1rank/error.hpp"

namespace f1rank {

namespace detail {

inline void check_abilities(std::span<const double> abilities, std::size_t min_size) {
  if (abilities.size() < min_size) {
    throw ModelError("ranking needs at least " + std::to_string(min_size) + " competitors, got " +
                     std::to_string(abilities.size()));
  }
  for (std::size_t i = 0; i < abilities.size(); ++i) {
    if (!std::isfinite(abilities[i])) {
      throw ModelError("non-finite ability at position " + std::to_string(i));
    }
  }
}

/// Uniform draw on the open interval (0, 1) from 53 random bits.
template <class Rng>
double open_unit_uniform(Rng& rng) {
  static_assert(Rng::min() == 0 && Rng::max() == std::numeric_limits<std::uint64_t>::max(),
                "expects a full-range 64-bit engine");
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Log-probability and gradient of an observed ranking; `abilities` is in
/// finishing order, winner first. No argument checking. `tail_lse` must hold
/// abilities.size() doubles of scratch space.
inline double rol_log_prob_and_grad(std::span<const double> abilities, std::span<double> grad,
                                    std::span<double> tail_lse) {
  const std::size_t m = abilities.size();
  // tail_lse[i] = log sum_{j >= i} exp(abilities[j]), built right to left.
  double running_max = abilities[m - 1];
  double running_sum = 1.0;
  tail_lse[m - 1] = abilities[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) {
    const double a = abilities[i];
    if (a > running_max) {
      running_sum = running_sum * std::exp(running_max - a) + 1.0;
      running_max = a;
    } else {
      running_sum += std::exp(a - running_max);
    }
    tail_lse[i] = running_max + std::log(running_sum);
  }
  double lp = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) lp += abilities[i] - tail_lse[i];

  if (!grad.empty()) {
    // d/dk = [k < m-1] - sum_{i <= min(k, m-2)} exp(a_k - lse_i); the inner sum is
    // carried as exp(a_k - lse_k) * acc_k with acc_k = sum_{i<=k} exp(lse_k - lse_i).
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      acc = (k == 0 ? 0.0 : acc * std::exp(tail_lse[k] - tail_lse[k - 1])) + 1.0;
      grad[k] = 1.0 - std::exp(abilities[k] - tail_lse[k]) * acc;
    }
    grad[m - 1] = m >= 2 ? -std::exp(abilities[m - 1] - tail_lse[m - 2]) * acc : 0.0;
  }
  return lp;
}

inline double rol_log_prob(std::span<const double> abilities) {
  detail::check_abilities(abilities, 2);
  std::vector<double> scratch(abilities.size());
  return rol_log_prob_and_grad(abilities, {}, scratch);
}

inline std::vector<double> rol_grad(std::span<const double> abilities) {
  detail::check_abilities(abilities, 2);
  std::vector<double> grad(abilities.size()), scratch(abilities.size());
  rol_log_prob_and_grad(abilities, grad, scratch);
  return grad;
}

/// Draws a ranking: each competitor's performance is its ability plus a
/// standard Gumbel variate; the result lists competitor indices best-first.
/// Equal performances are ordered by competitor index.
template <class Rng>
std::vector<std::size_t> sample_ranking(std::span<const double> abilities, Rng& rng) {
  std::vector<double> performance(abilities.size());
  for (std::size_t i = 0; i < abilities.size(); ++i) {
    performance[i] = abilities[i] - std::log(-std::log(detail::open_unit_uniform(rng)));
  }
  std::vector<std::size_t> order(abilities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return performance[a] > performance[b]; });
  return order;
}

/// Exact probability of every ordering by direct evaluation of the
/// sequential-choice product. Permutations list competitor indices
/// best-first. Limited to seven competitors.
inline std::map<std::vector<std::size_t>, double> brute_force_rank_pmf(
    std::span<const double> abilities) {
  const std::size_t m = abilities.size();
  if (m > 7) throw ModelError("brute-force pmf refuses more than 7 competitors");
  detail::check_abilities(abilities, 1);
  const double top = *std::max_element(abilities.begin(), abilities.end());
  std::vector<double> strength(m);
  for (std::size_t i = 0; i < m; ++i) strength[i] = std::exp(abilities[i] - top);

  std::map<std::vector<std::size_t>, double> pmf;
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    double p = 1.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      double remaining = 0.0;
      for (std::size_t j = i; j < m; ++j) remaining += strength[perm[j]];
      p *= strength[perm[i]] / remaining;
    }
    pmf[perm] = p;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return pmf;
}

/// Probability that ability `a` finishes ahead of ability `b` head to head.
inline double win_probability(double a, double b) {
  const double d = a - b;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace f1rank
