#pragma once

// Convergence diagnostics: rank-normalized split R-hat and effective sample
// size with Geyer's initial monotone sequence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "f1rank/draws.hpp"
#include "f1rank/error.hpp"

namespace f1rank {

/// A diagnostic value; `degenerate` marks the constant-draws convention.
struct Diagnostic {
  double value = 0.0;
  bool degenerate = false;
};

using ChainDraws = std::vector<std::vector<double>>;

namespace diag_detail {

inline void check_shape(const ChainDraws& chains, std::size_t min_chains) {
  if (chains.size() < min_chains) {
    throw AnalysisError("diagnostic needs at least " + std::to_string(min_chains) + " chains");
  }
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw AnalysisError("chains have unequal lengths");
  }
  if (n < 4) throw AnalysisError("diagnostic needs at least 4 draws per chain");
}

/// Splits each chain into halves, dropping the middle draw of odd chains.
inline ChainDraws split_chains(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

inline bool is_constant(const ChainDraws& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

/// Replaces draws by normal scores of their pooled fractional ranks,
/// Phi^-1((r - 3/8) / (S + 1/4)), averaging ranks over ties.
inline ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i)
      pooled.emplace_back(chains[c][i], c * chains[c].size() + i);
  std::sort(pooled.begin(), pooled.end());
  const double S = static_cast<double>(pooled.size());
  std::vector<double> rank(pooled.size());
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[pooled[k].second] = avg;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> normal;
  ChainDraws out = chains;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i)
      out[c][i] = boost::math::quantile(normal, (rank[c * chains[c].size() + i] - 0.375) / (S + 0.25));
  return out;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Classic potential scale reduction over the given (already split) chains.
inline double basic_rhat(const ChainDraws& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double between = n * variance(means);
  const double within = mean(vars);
  const double var_plus = (n - 1.0) / n * within + between / n;
  return std::sqrt(var_plus / within);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// ESS over the given chains (Geyer initial positive and monotone sequence
/// on the multi-chain autocorrelation estimate).
inline double basic_ess(const ChainDraws& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> chain_mean(m);
  std::vector<std::vector<double>> centred(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean(chains[c]);
    centred[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) centred[c][i] = chains[c][i] - chain_mean[c];
  }
  // Biased autocovariance at `lag`, averaged over chains.
  auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += centred[c][i] * centred[c][i + lag];
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };
  const double dn = static_cast<double>(n);
  const double acov0 = mean_acov(0);
  const double mean_var = acov0 * dn / (dn - 1.0);
  double var_plus = mean_var * (dn - 1.0) / dn;
  if (m > 1) var_plus += variance(chain_mean);

  // rho[t] is the combined autocorrelation at lag t; pairs (even, odd) are
  // accumulated while their sum stays positive.
  std::vector<double> rho(n + 1, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  long t = 0;
  const long last = static_cast<long>(n) - 5;
  while (t < last && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0) {
    t += 2;
    rho_even = 1.0 - (mean_var - mean_acov(static_cast<std::size_t>(t))) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(static_cast<std::size_t>(t + 1))) / var_plus;
    if (rho_even + rho_odd >= 0) {
      rho[t] = rho_even;
      rho[t + 1] = rho_odd;
    }
  }
  const long max_t = t;
  if (rho_even > 0) rho[max_t] = rho_even;
  for (t = 2; t <= max_t - 2; t += 2) {
    if (rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1]) {
      rho[t] = 0.5 * (rho[t - 2] + rho[t - 1]);
      rho[t + 1] = rho[t];
    }
  }
  const double total = static_cast<double>(m) * dn;
  double tau = -1.0 + rho[max_t];
  for (t = 0; t < max_t; ++t) tau += 2.0 * rho[t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace diag_detail

/// Rank-normalized split R-hat: the largest of the bulk value, the value for
/// draws folded around the median, and the classic split value on the raw
/// draws (ranks saturate when chains do not overlap at all). Constant draws
/// give 1 with `degenerate` set.
inline Diagnostic rhat(const ChainDraws& chains) {
  diag_detail::check_shape(chains, 2);
  if (diag_detail::is_constant(chains)) return {1.0, true};
  const auto split = diag_detail::split_chains(chains);
  const double bulk = diag_detail::basic_rhat(diag_detail::rank_normalize(split));
  const double med = [&] {
    std::vector<double> all;
    for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
    return diag_detail::median(std::move(all));
  }();
  ChainDraws folded = split;
  for (auto& c : folded)
    for (auto& v : c) v = std::abs(v - med);
  double tail = bulk;
  if (!diag_detail::is_constant(folded)) {
    tail = diag_detail::basic_rhat(diag_detail::rank_normalize(folded));
  }
  const double classic = diag_detail::basic_rhat(split);
  return {std::max({bulk, tail, std::isfinite(classic) ? classic : bulk}), false};
}

/// Bulk effective sample size on rank-normalized split chains. Constant
/// draws give 0 with `degenerate` set.
inline Diagnostic effective_sample_size(const ChainDraws& chains) {
  diag_detail::check_shape(chains, 1);
  if (diag_detail::is_constant(chains)) return {0.0, true};
  return {diag_detail::basic_ess(diag_detail::rank_normalize(diag_detail::split_chains(chains))),
          false};
}

/// ESS on the raw split chains, without rank normalization.
inline Diagnostic ess_basic(const ChainDraws& chains) {
  diag_detail::check_shape(chains, 1);
  if (diag_detail::is_constant(chains)) return {0.0, true};
  return {diag_detail::basic_ess(diag_detail::split_chains(chains)), false};
}

struct ParameterDiagnostics {
  std::string name;
  Diagnostic rhat;
  Diagnostic ess;
};

inline std::vector<ParameterDiagnostics> diagnose(const PosteriorDraws& draws) {
  std::vector<ParameterDiagnostics> out;
  for (std::size_t c = 0; c < draws.columns(); ++c) {
    const auto chains = draws.by_chain(c);
    ParameterDiagnostics d{draws.names[c], {1.0, true}, {0.0, true}};
    if (draws.iterations >= 4) {
      if (draws.chains >= 2) d.rhat = rhat(chains);
      d.ess = effective_sample_size(chains);
    }
    out.push_back(d);
  }
  return out;
}

namespace diag_detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace diag_detail

/// Up to `limit` names closest to `name` by edit distance.
inline std::vector<std::string> nearest_names(const std::vector<std::string>& names,
                                              const std::string& name, std::size_t limit = 3) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& n : names) scored.emplace_back(diag_detail::edit_distance(n, name), n);
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(limit, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

/// Writes long-format traces: chain,iteration,parameter,value.
inline void trace_export(const PosteriorDraws& draws, const std::vector<std::string>& parameters,
                         std::ostream& out) {
  if (parameters.empty()) throw AnalysisError("trace export needs at least one parameter");
  std::vector<std::size_t> columns;
  for (const auto& p : parameters) {
    auto c = draws.column_index(p);
    if (!c) {
      std::string hint;
      for (const auto& n : nearest_names(draws.names, p)) hint += (hint.empty() ? "" : ", ") + n;
      throw AnalysisError("unknown parameter '" + p + "'; nearest matches: " + hint);
    }
    columns.push_back(*c);
  }
  out << "chain,iteration,parameter,value\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < columns.size(); ++k)
    for (std::size_t c = 0; c < draws.chains; ++c)
      for (std::size_t i = 0; i < draws.iterations; ++i)
        out << c + 1 << ',' << i + 1 << ',' << parameters[k] << ',' << draws.value(c, i, columns[k])
            << '\n';
}

inline void trace_export(const PosteriorDraws& draws, const std::vector<std::string>& parameters,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw AnalysisError("cannot write trace file '" + path + "'");
  trace_export(draws, parameters, out);
}

}  // namespace f1rank
