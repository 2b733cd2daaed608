#pragma once

// Close-end sequential monitoring for a change in the Beta AR(1)
// parameters.
//
// After a training sample of size m with estimate eta_hat, the detector
// accumulates S_{m,k} = sum_{t=m+1}^{m+k} G(X_t, eta_hat) and signals at the
// first k <= N m with
//
//   w(m,k)^2 S' A S >= c,   w(m,k) = m^{-1/2} (1 + k/m)^{-1} (k/(m+k))^{-gamma}.
//
// The threshold c is the (1 - alpha) quantile of the limiting supremum
//
//   sup_{0<s<=N} rho(s)^2 (W1(s) - s W2(1))' A (W1(s) - s W2(1)),
//   rho(s) = s^{-gamma} (1 + s)^{gamma-1},
//
// where W1, W2 are independent Wiener processes with covariance Sigma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "betaar/errors.hpp"
#include "betaar/inference.hpp"
#include "betaar/model.hpp"
#include "betaar/parallel.hpp"
#include "betaar/rng.hpp"

namespace betaar {

struct WeightConfig {
  double gamma = 0.0;
  double horizon_N = 3.0;

  void validate() const {
    detail::require(gamma >= 0.0 && gamma < 0.5, "WeightConfig: gamma must lie in [0, 0.5)");
    detail::require(horizon_N > 0.0 && std::isfinite(horizon_N),
                    "WeightConfig: horizon N must be finite and > 0");
  }

  // Last monitoring step, floor(N m).
  std::size_t max_steps(std::size_t m) const {
    return static_cast<std::size_t>(std::floor(horizon_N * static_cast<double>(m) + 1e-9));
  }
};

// rho(s, gamma) = s^{-gamma} (s + 1)^{gamma - 1}
inline double rho(double s, double gamma) {
  detail::require(s > 0.0, "rho: s must be > 0");
  return std::pow(s, -gamma) * std::pow(s + 1.0, gamma - 1.0);
}

inline double weight(std::size_t m, std::size_t k, double gamma) {
  detail::require(m >= 1, "weight: m must be >= 1");
  detail::require(k >= 1, "weight: k must be >= 1 (the weight is undefined at k = 0)");
  detail::require(gamma >= 0.0 && gamma < 0.5, "weight: gamma must lie in [0, 0.5)");
  const double md = static_cast<double>(m), kd = static_cast<double>(k);
  return std::pow(md, -0.5) / (1.0 + kd / md) * std::pow(kd / (md + kd), -gamma);
}

inline double detection_statistic(const Eigen::Ref<const Vector>& score_sum,
                                  const Eigen::Ref<const Matrix>& A, double w) {
  if (A.rows() != A.cols() || A.rows() != score_sum.size()) {
    throw DomainError("detection_statistic: A is " + std::to_string(A.rows()) + "x" +
                      std::to_string(A.cols()) + " but the score sum has length " +
                      std::to_string(score_sum.size()));
  }
  const double q = score_sum.dot(A * score_sum);
  // Rounding can push a PSD form fractionally below zero at S ~ 0.
  return w * w * std::max(q, 0.0);
}

namespace detail {

inline void require_pd(const Matrix& a, const char* what) {
  detail::require(a.rows() == a.cols() && a.rows() > 0, std::string(what) + " must be square");
  detail::require(a.allFinite(), std::string(what) + " must be finite");
  detail::require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + a.cwiseAbs().maxCoeff()),
                  std::string(what) + " must be symmetric");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " must be positive definite");
}

}  // namespace detail

// Linear interpolation between order statistics: position p (n - 1) in the
// sorted sample.
inline double empirical_quantile(std::vector<double> values, double p) {
  detail::require(!values.empty(), "empirical_quantile: empty sample");
  detail::require(p >= 0.0 && p <= 1.0, "empirical_quantile: p must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

struct CalibrationSettings {
  double horizon_N = 3.0;
  std::size_t m_grid = 1000;
  std::size_t reps = 10000;
  unsigned threads = 1;
};

// Supremum draws of the limiting functional, one vector per gamma. All
// gammas share the same Wiener paths. Replication r uses stream r of a base
// seed taken from `rng`, so results do not depend on the thread count.
inline std::vector<std::vector<double>> simulate_sup_statistics(const Matrix& sigma_hat,
                                                                const Matrix& A,
                                                                const std::vector<double>& gammas,
                                                                const CalibrationSettings& cfg,
                                                                RngState& rng) {
  detail::require(sigma_hat.rows() == sigma_hat.cols() && sigma_hat.rows() > 0,
                  "calibrate_threshold: sigma_hat must be square");
  detail::require(A.rows() == sigma_hat.rows() && A.cols() == sigma_hat.cols(),
                  "calibrate_threshold: A and sigma_hat dimensions differ");
  detail::require_pd(A, "calibrate_threshold: A");
  detail::require(cfg.reps >= 100, "calibrate_threshold: reps must be >= 100");
  detail::require(cfg.m_grid >= 1, "calibrate_threshold: m_grid must be >= 1");
  detail::require(!gammas.empty(), "calibrate_threshold: no gamma values");
  for (double g : gammas) WeightConfig{g, cfg.horizon_N}.validate();
  const MvnSampler prototype(sigma_hat);  // validates PSD

  const auto steps = static_cast<std::size_t>(
      std::floor(cfg.horizon_N * static_cast<double>(cfg.m_grid) + 1e-9));
  detail::require(steps >= 1, "calibrate_threshold: N * m_grid must be >= 1");
  const Eigen::Index d = sigma_hat.rows();
  // Work with standard normals B: W = L B, so the form becomes B' (L' A L) B.
  const Matrix L = prototype.factor();
  const Matrix M = L.transpose() * A * L;
  const double inv_sqrt_grid = 1.0 / std::sqrt(static_cast<double>(cfg.m_grid));

  // rho^2 on the grid for each gamma.
  std::vector<std::vector<double>> rho2(gammas.size(), std::vector<double>(steps));
  for (std::size_t g = 0; g < gammas.size(); ++g)
    for (std::size_t j = 1; j <= steps; ++j) {
      const double r = rho(static_cast<double>(j) / static_cast<double>(cfg.m_grid), gammas[g]);
      rho2[g][j - 1] = r * r;
    }

  std::vector<std::vector<double>> sups(gammas.size(), std::vector<double>(cfg.reps));
  const std::uint64_t base = rng.engine()();
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t rep) {
    RngState local(base, rep);
    Vector w1 = Vector::Zero(d), w2(d), diff(d);
    for (Eigen::Index i = 0; i < d; ++i) w2[i] = local.standard_normal();
    std::vector<double> best(gammas.size(), 0.0);
    for (std::size_t j = 1; j <= steps; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) w1[i] += local.standard_normal() * inv_sqrt_grid;
      const double s = static_cast<double>(j) / static_cast<double>(cfg.m_grid);
      diff = w1 - s * w2;
      const double q = diff.dot(M * diff);
      for (std::size_t g = 0; g < gammas.size(); ++g) best[g] = std::max(best[g], rho2[g][j - 1] * q);
    }
    for (std::size_t g = 0; g < gammas.size(); ++g) sups[g][rep] = best[g];
  });
  return sups;
}

inline double calibrate_threshold(const Matrix& sigma_hat, const Matrix& A, double gamma,
                                  double alpha, const CalibrationSettings& cfg, RngState& rng) {
  detail::require(alpha > 0.0 && alpha < 1.0, "calibrate_threshold: alpha must lie in (0,1)");
  const auto sups = simulate_sup_statistics(sigma_hat, A, {gamma}, cfg, rng);
  return empirical_quantile(sups.front(), 1.0 - alpha);
}

inline double calibrate_threshold(const Matrix& sigma_hat, const Matrix& A, double gamma,
                                  double alpha, double horizon_N, std::size_t m_grid,
                                  std::size_t reps, RngState& rng) {
  return calibrate_threshold(sigma_hat, A, gamma, alpha, CalibrationSettings{horizon_N, m_grid, reps, 1},
                             rng);
}

struct ThresholdTable {
  struct Meta {
    std::size_t replications = 0;
    std::size_t m_grid = 0;
    double horizon_N = 0.0;
    Eigen::Index dimension = 0;
    std::uint64_t seed = 0;
    // Where Sigma_hat came from, e.g. "identity" or "fit:<path>".
    std::string sigma_source;
  };

  Meta meta;
  std::map<std::pair<double, double>, double> entries;  // (gamma, alpha) -> c

  std::vector<double> gammas() const {
    std::vector<double> out;
    for (const auto& [key, c] : entries)
      if (out.empty() || out.back() != key.first) out.push_back(key.first);
    return out;
  }

  std::vector<double> alphas() const {
    std::vector<double> out;
    for (const auto& [key, c] : entries) out.push_back(key.second);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::optional<double> find(double gamma, double alpha, double tol = 1e-9) const {
    for (const auto& [key, c] : entries)
      if (std::abs(key.first - gamma) <= tol && std::abs(key.second - alpha) <= tol) return c;
    return std::nullopt;
  }

  double at(double gamma, double alpha) const {
    if (auto c = find(gamma, alpha)) return *c;
    throw DomainError("threshold table has no entry for gamma=" + std::to_string(gamma) +
                      ", alpha=" + std::to_string(alpha));
  }

  // c strictly decreasing in alpha for each gamma.
  bool is_monotone() const {
    for (double g : gammas()) {
      double prev = std::numeric_limits<double>::infinity();
      for (const auto& [key, c] : entries) {
        if (key.first != g) continue;
        if (!(c < prev)) return false;
        prev = c;
      }
    }
    return true;
  }
};

// Thresholds for every (gamma, alpha) pair from one shared set of draws.
inline ThresholdTable calibrate_table(const Matrix& sigma_hat, const Matrix& A,
                                      const std::vector<double>& gammas,
                                      const std::vector<double>& alphas,
                                      const CalibrationSettings& cfg, std::uint64_t seed,
                                      std::string sigma_source = "") {
  detail::require(!alphas.empty(), "calibrate_table: no alpha values");
  for (double a : alphas) detail::require(a > 0.0 && a < 1.0, "calibrate_table: alpha must lie in (0,1)");
  RngState rng(seed);
  const auto sups = simulate_sup_statistics(sigma_hat, A, gammas, cfg, rng);
  ThresholdTable t;
  t.meta = {cfg.reps, cfg.m_grid, cfg.horizon_N, sigma_hat.rows(), seed, std::move(sigma_source)};
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    std::vector<double> sorted = sups[g];
    std::sort(sorted.begin(), sorted.end());
    for (double a : alphas) t.entries[{gammas[g], a}] = empirical_quantile(sorted, 1.0 - a);
  }
  return t;
}

struct Crossing {
  std::size_t k_detect = 0;
  double statistic = 0.0;
};

struct TraceEntry {
  std::size_t k = 0;
  double statistic = 0.0;
  Vector score_sum;  // empty unless partial sums are recorded
};

struct MonitorState {
  std::size_t m = 0;
  std::size_t k = 0;
  Vector score_sum;
  Matrix rescale_A;
  double threshold_c = 0.0;
  WeightConfig weight;
  std::optional<Crossing> crossing;
  std::vector<TraceEntry> trace;

  bool detected() const noexcept { return crossing.has_value(); }
};

struct MonitorOptions {
  // Rescaling matrix; the inverse of the fit's information matrix when empty.
  std::optional<Matrix> A;
  bool stop_at_crossing = true;
  bool record_trace = true;
  bool record_partial_sums = false;
};

// Online detector fed one transition at a time.
class Monitor {
 public:
  Monitor(ModelParams params, std::size_t m, Matrix A, WeightConfig config, double threshold,
          MonitorOptions options = {})
      : params_(std::move(params)), options_(std::move(options)) {
    params_.validate();
    config.validate();
    detail::require(m >= 1, "Monitor: training size m must be >= 1");
    detail::require(std::isfinite(threshold) && threshold > 0.0, "Monitor: threshold must be finite and > 0");
    detail::require(A.rows() == params_.dim(), "Monitor: A dimension does not match the model");
    detail::require_pd(A, "Monitor: A");
    state_.m = m;
    state_.rescale_A = std::move(A);
    state_.threshold_c = threshold;
    state_.weight = config;
    state_.score_sum = Vector::Zero(params_.dim());
    z_.resize(params_.dim() - 1);
    max_steps_ = config.max_steps(m);
  }

  const MonitorState& state() const noexcept { return state_; }
  MonitorState release() { return std::move(state_); }
  std::size_t max_steps() const noexcept { return max_steps_; }

  // False once the horizon is reached or, if stopping at crossings, after
  // the first crossing.
  bool active() const noexcept {
    return state_.k < max_steps_ && !(options_.stop_at_crossing && state_.crossing);
  }

  // Processes X_{m+k} with predecessor x_prev and covariates w; returns the
  // statistic at the new k.
  double push(double x, double x_prev, const Eigen::Ref<const Vector>& w) {
    detail::require(active(), "Monitor: monitoring has ended");
    const std::size_t k = state_.k + 1;
    if (!std::isfinite(x) || !std::isfinite(x_prev) || !w.allFinite()) {
      throw DomainError("Monitor: non-finite observation at monitoring step k=" + std::to_string(k) +
                        " (t=" + std::to_string(state_.m + k) + ")");
    }
    if (x < 0.0 || x > 1.0 || x_prev < 0.0 || x_prev > 1.0) {
      throw DomainError("Monitor: observation outside [0,1] at monitoring step k=" + std::to_string(k) +
                        " (t=" + std::to_string(state_.m + k) + ")");
    }
    detail::accumulate_transition(params_, x, x_prev, w, z_, nullptr, &state_.score_sum, nullptr);
    state_.k = k;
    const double stat =
        detection_statistic(state_.score_sum, state_.rescale_A, weight(state_.m, k, state_.weight.gamma));
    if (options_.record_trace) {
      state_.trace.push_back({k, stat, options_.record_partial_sums ? state_.score_sum : Vector()});
    }
    if (!state_.crossing && stat >= state_.threshold_c) state_.crossing = Crossing{k, stat};
    return stat;
  }

 private:
  ModelParams params_;
  MonitorOptions options_;
  MonitorState state_;
  Vector z_;
  std::size_t max_steps_ = 0;
};

inline Matrix default_rescale(const FitResult& fit) {
  detail::require(fit.info_matrix.rows() == fit.dim() && fit.info_matrix.cols() == fit.dim(),
                  "run_monitor: fit has no information matrix");
  return fit.info_matrix.inverse();
}

// Monitors the transitions of `stream`, whose x[0] is the last training
// observation X_m and whose row k-1 of w accompanies X_{m+k}. Steps beyond
// N m are not processed.
inline MonitorState run_monitor(const FitResult& fit, const SeriesSample& stream,
                                const WeightConfig& config, double threshold,
                                MonitorOptions options = {}) {
  detail::require(fit.converged, "run_monitor: the fit did not converge");
  detail::require(fit.m >= 1, "run_monitor: fit records no training size");
  Matrix A = options.A ? *options.A : default_rescale(fit);
  Monitor mon(fit.params_hat, fit.m, std::move(A), config, threshold, options);
  if (stream.x.size() == 0) return mon.release();
  detail::require(stream.w.rows() + 1 == stream.x.size(), "run_monitor: need len(w) == len(x) - 1");
  detail::require(stream.w.cols() == fit.params_hat.num_covariates(),
                  "run_monitor: covariate dimension does not match the fit");
  for (std::size_t t = 1; t <= stream.transitions() && mon.active(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    mon.push(stream.x[ti], stream.x[ti - 1], stream.covariates(t));
  }
  return mon.release();
}

// Unweighted forms q_k = S_{m,k}' A S_{m,k} for k = 1..steps over
// transitions m+1..m+steps of `data`. The statistic at k for any gamma is
// weight(m, k, gamma)^2 q_k, so one pass serves several weight choices.
inline std::vector<double> quadratic_form_path(const ModelParams& params, const SeriesSample& data,
                                               std::size_t m, const Matrix& A, std::size_t steps) {
  params.validate();
  detail::require(A.rows() == params.dim() && A.cols() == params.dim(),
                  "quadratic_form_path: A dimension does not match the model");
  detail::require(m + steps <= data.transitions(), "quadratic_form_path: series too short");
  Vector s = Vector::Zero(params.dim());
  Vector z(params.dim() - 1);
  std::vector<double> q(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto t = static_cast<Eigen::Index>(m + k);
    detail::accumulate_transition(params, data.x[t], data.x[t - 1], data.covariates(m + k), z, nullptr, &s,
                                  nullptr);
    q[k - 1] = std::max(s.dot(A * s), 0.0);
  }
  return q;
}

// First k with weight(m,k,gamma)^2 q_k >= c.
inline std::optional<std::size_t> first_crossing(const std::vector<double>& q, std::size_t m, double gamma,
                                                 double c) {
  for (std::size_t k = 1; k <= q.size(); ++k) {
    const double w = weight(m, k, gamma);
    if (w * w * q[k - 1] >= c) return k;
  }
  return std::nullopt;
}

inline std::vector<std::pair<std::size_t, double>> statistic_trace(const MonitorState& state) {
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(state.trace.size());
  for (const auto& e : state.trace) out.emplace_back(e.k, e.statistic);
  return out;
}

}  // namespace betaar
