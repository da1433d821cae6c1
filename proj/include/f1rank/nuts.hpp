#pragma once

// No-U-Turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
// the generalized no-U-turn criterion, dual-averaging step-size adaptation
// and windowed diagonal metric estimation.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "f1rank/draws.hpp"
#include "f1rank/error.hpp"

namespace f1rank {

struct SamplerConfig {
  std::size_t chains = 8;
  std::size_t warmup_iterations = 1000;
  std::size_t sampling_iterations = 1250;
  std::uint64_t seed = 20140316;
  double target_acceptance = 0.8;
  std::size_t max_tree_depth = 10;
  /// Initial coordinates are drawn uniformly from (-init_radius, init_radius).
  double init_radius = 2.0;
  /// Worker threads for chains; 0 uses the hardware concurrency.
  std::size_t threads = 0;
  /// Stan-style warmup windows: initial fast buffer, first slow window,
  /// terminal fast buffer.
  std::size_t init_buffer = 75;
  std::size_t base_window = 25;
  std::size_t term_buffer = 50;
};

/// Anything exposing a log density with gradient over R^n.
template <class T>
concept DifferentiableDensity =
    requires(const T& t, std::span<const double> x, std::span<double> g) {
      { t.dimension() } -> std::convertible_to<std::size_t>;
      { t.log_density(x, g) } -> std::convertible_to<double>;
    };

/// Optional: natural-scale outputs recorded instead of raw coordinates.
template <class T>
concept ConstrainableDensity =
    DifferentiableDensity<T> && requires(const T& t, std::span<const double> x, std::span<double> o) {
      { t.output_names() } -> std::convertible_to<std::vector<std::string>>;
      { t.output_dimension() } -> std::convertible_to<std::size_t>;
      t.constrain(x, o);
    };

/// Optional: pointwise log-likelihood recorded at every retained draw.
template <class T>
concept PointwiseDensity =
    DifferentiableDensity<T> && requires(const T& t, std::span<const double> x, std::span<double> o) {
      { t.pointwise_count() } -> std::convertible_to<std::size_t>;
      t.pointwise_log_likelihood(x, o);
    };

namespace nuts_detail {

struct PhasePoint {
  std::vector<double> q, p, grad;
  double log_density = 0.0;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Welford running variance.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(std::size_t n) : mean_(n, 0.0), m2_(n, 0.0) {}

  void add(const std::vector<double>& x) {
    ++count_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(count_);
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  std::size_t count() const { return count_; }

  std::vector<double> variance() const {
    std::vector<double> v(m2_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / static_cast<double>(count_ - 1);
    return v;
  }

  void restart() {
    count_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_, m2_;
};

class DualAveraging {
 public:
  void restart(double step_size) {
    mu_ = std::log(10.0 * step_size);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat, double target) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double n = static_cast<double>(counter_);
    const double eta = 1.0 / (n + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(n) / gamma_;
    const double x_eta = std::pow(n, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step_size() const { return std::exp(x_bar_); }

 private:
  double mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  std::size_t counter_ = 0;
  static constexpr double gamma_ = 0.05, t0_ = 10.0, kappa_ = 0.75;
};

/// Warmup window bookkeeping, matching the usual three-stage schedule.
class WindowSchedule {
 public:
  WindowSchedule(std::size_t warmup, std::size_t init_buffer, std::size_t base_window,
                  std::size_t term_buffer)
      : warmup_(warmup), init_(init_buffer), window_(base_window), term_(term_buffer) {
    if (warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_ + window_ + term_ > warmup) {
      init_ = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
      term_ = static_cast<std::size_t>(0.1 * static_cast<double>(warmup));
      window_ = warmup - (init_ + term_);
    }
    next_window_ = init_ + window_ - 1;
  }

  bool in_slow_window() const {
    return enabled_ && counter_ >= init_ && counter_ < warmup_ - term_ && counter_ != warmup_;
  }

  bool at_window_end() const {
    return enabled_ && counter_ == next_window_ && counter_ != warmup_;
  }

  void advance() { ++counter_; }

  void compute_next_window() {
    if (next_window_ == warmup_ - term_ - 1) return;
    window_ *= 2;
    next_window_ = counter_ + window_;
    if (next_window_ != warmup_ - term_ - 1) {
      const std::size_t boundary = next_window_ + 2 * window_;
      if (boundary >= warmup_ - term_) next_window_ = warmup_ - term_ - 1;
    }
  }

 private:
  std::size_t warmup_, init_, window_, term_;
  std::size_t counter_ = 0;
  std::size_t next_window_ = 0;
  bool enabled_ = true;
};

struct TransitionInfo {
  double accept_stat = 0.0;
  int depth = 0;
  std::size_t n_leapfrog = 0;
  bool divergent = false;
};

template <DifferentiableDensity Target>
class NutsChain {
 public:
  NutsChain(const Target& target, const SamplerConfig& config, std::uint64_t chain_seed)
      : target_(target),
        config_(config),
        n_(target.dimension()),
        rng_(make_rng(config.seed, chain_seed)),
        inv_metric_(n_, 1.0) {}

  static std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x46315241u};
    return std::mt19937_64(seq);
  }

  void initialize() {
    std::uniform_real_distribution<double> unif(-config_.init_radius, config_.init_radius);
    z_.q.resize(n_);
    z_.p.assign(n_, 0.0);
    z_.grad.resize(n_);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : z_.q) v = unif(rng_);
      z_.log_density = target_.log_density(z_.q, z_.grad);
      bool ok = std::isfinite(z_.log_density);
      for (double g : z_.grad) ok = ok && std::isfinite(g);
      if (ok) return;
    }
    throw SamplerError("initialization failed: no finite log density after 100 attempts");
  }

  void set_position(std::span<const double> q) {
    z_.q.assign(q.begin(), q.end());
    z_.p.assign(n_, 0.0);
    z_.grad.resize(n_);
    z_.log_density = target_.log_density(z_.q, z_.grad);
  }

  const PhasePoint& state() const { return z_; }
  double step_size() const { return step_size_; }
  void set_step_size(double eps) { step_size_ = eps; }
  const std::vector<double>& inverse_metric() const { return inv_metric_; }
  void set_inverse_metric(std::vector<double> m) { inv_metric_ = std::move(m); }
  std::mt19937_64& rng() { return rng_; }

  double hamiltonian(const PhasePoint& z) const {
    double k = 0.0;
    for (std::size_t i = 0; i < n_; ++i) k += inv_metric_[i] * z.p[i] * z.p[i];
    return -z.log_density + 0.5 * k;
  }

  void leapfrog(PhasePoint& z, double eps) const {
    for (std::size_t i = 0; i < n_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < n_; ++i) z.q[i] += eps * inv_metric_[i] * z.p[i];
    z.log_density = target_.log_density(z.q, z.grad);
    for (std::size_t i = 0; i < n_; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  }

  void sample_momentum(PhasePoint& z) {
    for (std::size_t i = 0; i < n_; ++i) z.p[i] = normal_(rng_) / std::sqrt(inv_metric_[i]);
  }

  /// Step-size heuristic: double or halve until a single leapfrog step's
  /// acceptance probability crosses 0.8.
  void init_step_size() {
    const PhasePoint start = z_;
    auto delta_h = [&]() {
      z_ = start;
      sample_momentum(z_);
      const double h0 = hamiltonian(z_);
      leapfrog(z_, step_size_);
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      return h0 - h;
    };
    const double log_target = std::log(0.8);
    const int direction = delta_h() > log_target ? 1 : -1;
    for (int i = 0; i < 200; ++i) {
      const double d = delta_h();
      if (direction == 1 && !(d > log_target)) break;
      if (direction == -1 && !(d < log_target)) break;
      step_size_ = direction == 1 ? 2.0 * step_size_ : 0.5 * step_size_;
      if (step_size_ > 1e7) throw SamplerError("step size diverged to infinity");
      if (step_size_ == 0) throw SamplerError("step size collapsed to zero");
    }
    z_ = start;
  }

  TransitionInfo transition() {
    using std::vector;
    const double neg_inf = -std::numeric_limits<double>::infinity();
    sample_momentum(z_);
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    vector<double> p_fwd_fwd = z_.p, p_sharp_fwd_fwd = sharp(z_.p);
    vector<double> p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    vector<double> p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    vector<double> p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp_fwd_fwd;
    vector<double> rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_);
    TransitionInfo info;
    double sum_metro_prob = 0.0;
    divergent_ = false;

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    while (static_cast<std::size_t>(info.depth) < config_.max_tree_depth) {
      vector<double> rho_fwd(n_, 0.0), rho_bck(n_, 0.0);
      bool valid_subtree = false;
      double log_sum_weight_subtree = neg_inf;
      if (unif(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(info.depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                                   p_fwd_bck, p_fwd_fwd, h0, 1.0, info.n_leapfrog,
                                   log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(info.depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                                   p_bck_fwd, p_bck_bck, h0, -1.0, info.n_leapfrog,
                                   log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++info.depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (unif(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      for (std::size_t i = 0; i < n_; ++i) rho[i] = rho_bck[i] + rho_fwd[i];
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      vector<double> rho_extended(n_);
      for (std::size_t i = 0; i < n_; ++i) rho_extended[i] = rho_bck[i] + p_fwd_bck[i];
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      for (std::size_t i = 0; i < n_; ++i) rho_extended[i] = rho_fwd[i] + p_bck_fwd[i];
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    }
    z_ = z_sample;
    info.divergent = divergent_;
    info.accept_stat =
        info.n_leapfrog > 0 ? sum_metro_prob / static_cast<double>(info.n_leapfrog) : 0.0;
    return info;
  }

 private:
  std::vector<double> sharp(const std::vector<double>& p) const {
    std::vector<double> s(n_);
    for (std::size_t i = 0; i < n_; ++i) s[i] = inv_metric_[i] * p[i];
    return s;
  }

  static bool criterion(const std::vector<double>& p_sharp_minus,
                        const std::vector<double>& p_sharp_plus, const std::vector<double>& rho) {
    return dot(p_sharp_plus, rho) > 0 && dot(p_sharp_minus, rho) > 0;
  }

  bool build_tree(int depth, PhasePoint& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho,
                  std::vector<double>& p_beg, std::vector<double>& p_end, double h0, double sign,
                  std::size_t& n_leapfrog, double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(z_, sign * step_size_);
      ++n_leapfrog;
      double h = hamiltonian(z_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > max_delta_h_) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = sharp(z_.p);
      p_sharp_end = p_sharp_beg;
      for (std::size_t i = 0; i < n_; ++i) rho[i] += z_.p[i];
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }
    const double neg_inf = -std::numeric_limits<double>::infinity();

    double log_sum_weight_init = neg_inf;
    std::vector<double> p_init_end(n_), p_sharp_init_end(n_), rho_init(n_, 0.0);
    const bool valid_init =
        build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                   p_init_end, h0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob);
    if (!valid_init) return false;

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = neg_inf;
    std::vector<double> p_final_beg(n_), p_sharp_final_beg(n_), rho_final(n_, 0.0);
    const bool valid_final =
        build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                   p_final_beg, p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob);
    if (!valid_final) return false;

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      if (unif(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree))
        z_propose = z_propose_final;
    }

    std::vector<double> rho_subtree(n_);
    for (std::size_t i = 0; i < n_; ++i) rho_subtree[i] = rho_init[i] + rho_final[i];
    for (std::size_t i = 0; i < n_; ++i) rho[i] += rho_subtree[i];
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    std::vector<double> rho_extended(n_);
    for (std::size_t i = 0; i < n_; ++i) rho_extended[i] = rho_init[i] + p_final_beg[i];
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_extended);
    for (std::size_t i = 0; i < n_; ++i) rho_extended[i] = rho_final[i] + p_init_end[i];
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  const Target& target_;
  const SamplerConfig& config_;
  std::size_t n_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> inv_metric_;
  double step_size_ = 1.0;
  PhasePoint z_;
  bool divergent_ = false;
  static constexpr double max_delta_h_ = 1000.0;
};

template <DifferentiableDensity Target>
void run_chain(const Target& target, const SamplerConfig& config, std::size_t chain,
               PosteriorDraws& out) {
  NutsChain<Target> sampler(target, config, chain);
  sampler.initialize();
  sampler.init_step_size();

  const std::size_t n = target.dimension();
  DualAveraging dual;
  dual.restart(sampler.step_size());
  WindowSchedule windows(config.warmup_iterations, config.init_buffer, config.base_window,
                         config.term_buffer);
  VarianceEstimator estimator(n);

  for (std::size_t it = 0; it < config.warmup_iterations; ++it) {
    const auto info = sampler.transition();
    sampler.set_step_size(dual.learn(info.accept_stat, config.target_acceptance));
    if (windows.in_slow_window()) estimator.add(sampler.state().q);
    if (windows.at_window_end()) {
      windows.compute_next_window();
      auto var = estimator.variance();
      const double k = static_cast<double>(estimator.count());
      for (auto& v : var) v = (k / (k + 5.0)) * v + 1e-3 * (5.0 / (k + 5.0));
      sampler.set_inverse_metric(std::move(var));
      estimator.restart();
      sampler.init_step_size();
      dual.restart(sampler.step_size());
    }
    windows.advance();
  }
  if (config.warmup_iterations > 0) sampler.set_step_size(dual.final_step_size());

  const std::size_t cols = out.names.size();
  const std::size_t pw = out.pointwise_count();
  std::vector<double> buffer;
  for (std::size_t it = 0; it < config.sampling_iterations; ++it) {
    const auto info = sampler.transition();
    const std::size_t row = chain * config.sampling_iterations + it;
    const auto& q = sampler.state().q;
    double* dst = out.values.data() + row * cols;
    if constexpr (ConstrainableDensity<Target>) {
      target.constrain(q, std::span<double>(dst, cols));
    } else {
      std::copy(q.begin(), q.end(), dst);
    }
    if constexpr (PointwiseDensity<Target>) {
      target.pointwise_log_likelihood(q, std::span<double>(out.per_race_loglik.data() + row * pw, pw));
    }
    out.divergent[row] = info.divergent ? 1 : 0;
    out.tree_depth[row] = info.depth;
    out.accept_stat[row] = info.accept_stat;
    out.log_density[row] = sampler.state().log_density;
  }
  out.adaptation[chain] = {sampler.step_size(), sampler.inverse_metric()};
}

}  // namespace nuts_detail

/// Runs `config.chains` independent NUTS chains. Chain k's random stream
/// depends only on (seed, k), so results are reproducible and unaffected by
/// the number of chains or threads.
template <DifferentiableDensity Target>
PosteriorDraws nuts_sample(const Target& target, const SamplerConfig& config) {
  if (config.chains == 0 || config.sampling_iterations == 0) {
    throw ConfigError("sampler needs at least one chain and one sampling iteration");
  }
  if (!(config.target_acceptance > 0 && config.target_acceptance < 1)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  if (config.max_tree_depth == 0) throw ConfigError("max tree depth must be positive");
  PosteriorDraws draws;
  draws.chains = config.chains;
  draws.iterations = config.sampling_iterations;
  const std::size_t n = target.dimension();
  if constexpr (ConstrainableDensity<Target>) {
    draws.names = target.output_names();
  } else {
    for (std::size_t i = 0; i < n; ++i) draws.names.push_back("x[" + std::to_string(i) + "]");
  }
  draws.parameter_count = n;
  const std::size_t total = config.chains * config.sampling_iterations;
  draws.values.assign(total * draws.names.size(), 0.0);
  if constexpr (PointwiseDensity<Target>) {
    const std::size_t pw = target.pointwise_count();
    draws.pointwise_labels.resize(pw);
    for (std::size_t i = 0; i < pw; ++i) draws.pointwise_labels[i] = std::to_string(i);
    draws.per_race_loglik.assign(total * pw, 0.0);
  }
  draws.divergent.assign(total, 0);
  draws.tree_depth.assign(total, 0);
  draws.accept_stat.assign(total, 0.0);
  draws.log_density.assign(total, 0.0);
  draws.adaptation.resize(config.chains);

  std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  auto work = [&](std::size_t first) {
    for (std::size_t c = first; c < config.chains; c += workers) {
      try {
        nuts_detail::run_chain(target, config, c, draws);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double rate = static_cast<double>(draws.divergence_count()) / static_cast<double>(total);
  if (rate > 0.1) {
    std::cerr << "warning: " << draws.divergence_count() << " of " << total
              << " post-warmup transitions diverged; inferences are unreliable\n";
  }
  return draws;
}

}  // namespace f1rank
