#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "f1rank/error.hpp"

namespace f1rank {

struct ChainAdaptation {
  double step_size = 0.0;
  std::vector<double> inverse_metric;
};

/// Retained draws of every chain. `values` is laid out chain-major, then
/// iteration, then column; the first `parameter_count` columns correspond to
/// sampler coordinates and any further columns are derived quantities.
struct PosteriorDraws {
  std::size_t chains = 0;
  std::size_t iterations = 0;
  std::vector<std::string> names;
  std::size_t parameter_count = 0;
  std::vector<double> values;

  std::vector<std::string> pointwise_labels;
  std::vector<double> per_race_loglik;  // chains x iterations x pointwise_labels.size()

  std::vector<std::uint8_t> divergent;  // chains x iterations
  std::vector<int> tree_depth;
  std::vector<double> accept_stat;
  std::vector<double> log_density;
  std::vector<ChainAdaptation> adaptation;

  std::size_t columns() const { return names.size(); }
  std::size_t draw_count() const { return chains * iterations; }
  std::size_t pointwise_count() const { return pointwise_labels.size(); }

  double value(std::size_t chain, std::size_t iteration, std::size_t column) const {
    return values[(chain * iterations + iteration) * names.size() + column];
  }

  std::optional<std::size_t> column_index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  std::size_t require_column(const std::string& name) const {
    auto c = column_index(name);
    if (!c) throw AnalysisError("unknown parameter '" + name + "'");
    return *c;
  }

  /// All chains concatenated.
  std::vector<double> pooled(std::size_t column) const {
    std::vector<double> out;
    out.reserve(draw_count());
    for (std::size_t i = 0; i < draw_count(); ++i) out.push_back(values[i * names.size() + column]);
    return out;
  }

  std::vector<std::vector<double>> by_chain(std::size_t column) const {
    std::vector<std::vector<double>> out(chains, std::vector<double>(iterations));
    for (std::size_t c = 0; c < chains; ++c)
      for (std::size_t i = 0; i < iterations; ++i) out[c][i] = value(c, i, column);
    return out;
  }

  /// Draws x pointwise matrix (row-major) of per-race log-likelihoods.
  const std::vector<double>& loglik_matrix() const { return per_race_loglik; }

  std::size_t divergence_count() const {
    return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), 1));
  }
};

}  // namespace f1rank
