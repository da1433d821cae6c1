#pragma once

// Pareto-smoothed importance sampling leave-one-out cross-validation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "f1rank/draws.hpp"
#include "f1rank/error.hpp"

namespace f1rank {

/// Draws x points log-likelihood matrix, row-major.
struct LogLikMatrix {
  std::size_t draws = 0;
  std::size_t points = 0;
  std::vector<double> values;
  std::vector<std::string> labels;  // one per point

  double at(std::size_t s, std::size_t i) const { return values[s * points + i]; }

  static LogLikMatrix from_draws(const PosteriorDraws& d) {
    return {d.draw_count(), d.pointwise_count(), d.per_race_loglik, d.pointwise_labels};
  }
};

struct GeneralizedPareto {
  double k = 0.0;
  double sigma = 0.0;
};

struct ElpdReport {
  std::string label;
  double elpd_loo = 0.0;
  double se_elpd = 0.0;
  double lpd = 0.0;  // in-sample log pointwise predictive density
  double p_loo = 0.0;
  std::vector<double> pointwise;
  std::vector<double> pareto_k;
  std::size_t high_k_count = 0;  // points with k > 0.7
  double delta = 0.0;            // relative to the best model
  double se_delta = 0.0;
};

inline constexpr double kParetoKWarning = 0.7;

namespace psis_detail {

inline double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double generalized_pareto_quantile(double p, double k, double sigma) {
  if (k == 0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

}  // namespace psis_detail

/// Zhang-Stephens empirical-Bayes fit of a generalized Pareto distribution to
/// positive exceedances (any order), with the weakly informative shrinkage of
/// k towards 0.5.
inline GeneralizedPareto fit_generalized_pareto(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const double x_star = x[static_cast<std::size_t>(std::floor(n / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m), log_lik(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] +
               (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j + 1) - 0.5))) /
                   prior / x_star;
    double k = 0.0;
    for (double v : x) k += std::log1p(-theta[j] * v);
    k /= static_cast<double>(n);
    log_lik[j] = static_cast<double>(n) * (std::log(-theta[j] / k) - k - 1.0);
  }
  const double lse = psis_detail::log_sum_exp(log_lik);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(log_lik[j] - lse);
    if (std::isfinite(w)) theta_hat += theta[j] * w;
  }
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  const double dn = static_cast<double>(n);
  k = (k * dn + 0.5 * 10.0) / (dn + 10.0);
  if (std::isnan(k)) k = std::numeric_limits<double>::infinity();
  return {k, sigma};
}

struct SmoothedWeights {
  std::vector<double> log_weights;  // unnormalized
  double pareto_k = std::numeric_limits<double>::infinity();
};

/// Smooths the largest 20% of the importance log-ratios with fitted
/// generalized Pareto quantiles and truncates at the largest raw ratio.
inline SmoothedWeights pareto_smooth(const std::vector<double>& log_ratios) {
  const std::size_t S = log_ratios.size();
  const double max_ratio = *std::max_element(log_ratios.begin(), log_ratios.end());
  SmoothedWeights out;
  out.log_weights.resize(S);
  for (std::size_t s = 0; s < S; ++s) out.log_weights[s] = log_ratios[s] - max_ratio;

  const std::size_t tail = std::min<std::size_t>(
      static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(S))), S > 0 ? S - 1 : 0);
  if (tail >= 5) {
    std::vector<std::size_t> order(S);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return out.log_weights[a] < out.log_weights[b];
    });
    const std::size_t first_tail = S - tail;
    const double tail_min = out.log_weights[order[first_tail]];
    const double tail_max = out.log_weights[order[S - 1]];
    if (std::abs(tail_max - tail_min) >= std::numeric_limits<double>::epsilon() / 100) {
      const double cutoff = out.log_weights[order[first_tail - 1]];
      const double exp_cutoff = std::exp(cutoff);
      std::vector<double> exceed(tail);
      for (std::size_t i = 0; i < tail; ++i)
        exceed[i] = std::exp(out.log_weights[order[first_tail + i]]) - exp_cutoff;
      const auto fit = fit_generalized_pareto(exceed);
      out.pareto_k = fit.k;
      if (std::isfinite(fit.k)) {
        for (std::size_t i = 0; i < tail; ++i) {
          const double p = (static_cast<double>(i + 1) - 0.5) / static_cast<double>(tail);
          out.log_weights[order[first_tail + i]] =
              std::log(psis_detail::generalized_pareto_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        }
      }
    }
  }
  for (auto& w : out.log_weights) w = std::min(w, 0.0) + max_ratio;
  return out;
}

/// PSIS-LOO for one model.
inline ElpdReport psis_loo(const LogLikMatrix& ll, const std::string& label = "model") {
  if (ll.draws == 0 || ll.points == 0) throw AnalysisError("empty log-likelihood matrix");
  for (double v : ll.values)
    if (!std::isfinite(v)) throw AnalysisError("non-finite log-likelihood in model " + label);
  ElpdReport r;
  r.label = label;
  r.pointwise.resize(ll.points);
  r.pareto_k.resize(ll.points);
  std::vector<double> column(ll.draws), ratios(ll.draws), weighted(ll.draws);
  for (std::size_t i = 0; i < ll.points; ++i) {
    for (std::size_t s = 0; s < ll.draws; ++s) {
      column[s] = ll.at(s, i);
      ratios[s] = -column[s];
    }
    const auto smooth = pareto_smooth(ratios);
    for (std::size_t s = 0; s < ll.draws; ++s) weighted[s] = smooth.log_weights[s] + column[s];
    r.pointwise[i] =
        psis_detail::log_sum_exp(weighted) - psis_detail::log_sum_exp(smooth.log_weights);
    r.pareto_k[i] = smooth.pareto_k;
    if (smooth.pareto_k > kParetoKWarning) ++r.high_k_count;
    r.lpd += psis_detail::log_sum_exp(column) - std::log(static_cast<double>(ll.draws));
  }
  r.elpd_loo = std::accumulate(r.pointwise.begin(), r.pointwise.end(), 0.0);
  r.p_loo = r.lpd - r.elpd_loo;
  const double n = static_cast<double>(ll.points);
  const double mean = r.elpd_loo / n;
  double ss = 0.0;
  for (double v : r.pointwise) ss += (v - mean) * (v - mean);
  r.se_elpd = ll.points > 1 ? std::sqrt(n * ss / (n - 1.0)) : 0.0;
  return r;
}

/// Fills delta and se_delta relative to the best model and returns reports
/// sorted best-first. The standard error comes from pointwise differences.
inline std::vector<ElpdReport> compare_models(std::vector<ElpdReport> reports) {
  if (reports.size() < 2) throw AnalysisError("model comparison needs at least two models");
  const std::size_t n = reports.front().pointwise.size();
  for (const auto& r : reports) {
    if (r.pointwise.size() != n) throw AnalysisError("models were fitted to different race sets");
  }
  std::stable_sort(reports.begin(), reports.end(),
                   [](const ElpdReport& a, const ElpdReport& b) { return a.elpd_loo > b.elpd_loo; });
  const auto& best = reports.front();
  for (auto& r : reports) {
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = r.pointwise[i] - best.pointwise[i];
    r.delta = std::accumulate(diff.begin(), diff.end(), 0.0);
    const double mean = r.delta / static_cast<double>(n);
    double ss = 0.0;
    for (double v : diff) ss += (v - mean) * (v - mean);
    r.se_delta = n > 1 ? std::sqrt(static_cast<double>(n) * ss / static_cast<double>(n - 1)) : 0.0;
  }
  return reports;
}

/// PSIS-LOO for several models over the same points, compared best-first.
inline std::vector<ElpdReport> psis_loo(const std::vector<std::pair<std::string, LogLikMatrix>>& models) {
  if (models.empty()) throw AnalysisError("no models given");
  const auto& labels = models.front().second.labels;
  std::vector<ElpdReport> reports;
  for (const auto& [label, ll] : models) {
    if (ll.points != models.front().second.points || ll.labels != labels) {
      throw AnalysisError("model " + label + " was fitted to a different race set");
    }
    reports.push_back(psis_loo(ll, label));
  }
  if (reports.size() == 1) return reports;
  return compare_models(std::move(reports));
}

}  // namespace f1rank
