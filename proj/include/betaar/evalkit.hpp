#pragma once

// One-step forecasts with equal-tailed Beta prediction intervals, forecast
// error metrics, and summaries of replicated monitoring runs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "betaar/detector.hpp"
#include "betaar/errors.hpp"
#include "betaar/model.hpp"
#include "betaar/specfun.hpp"

namespace betaar {

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz evaluation.
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kEps) return h;
  }
  throw NumericalError("incomplete_beta: continued fraction did not converge (a=" + std::to_string(a) +
                       ", b=" + std::to_string(b) + ", x=" + std::to_string(x) + ")");
}

}  // namespace detail

// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  detail::require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b),
                  "incomplete_beta: shapes must be finite and > 0");
  detail::require(x >= 0.0 && x <= 1.0, "incomplete_beta: x must lie in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - specfun::log_beta(a, b);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use the
  // reflection I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * detail::incomplete_beta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

// Beta(a, b) quantile by bisection on I_x(a, b), absolute tolerance 1e-10.
inline double beta_quantile(double p, double a, double b) {
  detail::require(p >= 0.0 && p <= 1.0, "beta_quantile: p must lie in [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (incomplete_beta(a, b, mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct ForecastPoint {
  double mu_hat = 0.0;
  double lower = 0.0;
  double upper = 1.0;

  bool covers(double x) const noexcept { return x >= lower && x <= upper; }
};

inline ForecastPoint one_step_forecast(const ModelParams& params, double x_prev,
                                       const Eigen::Ref<const Vector>& w_next, double alpha) {
  detail::require(alpha > 0.0 && alpha < 1.0, "one_step_forecast: alpha must lie in (0,1)");
  params.validate();
  ForecastPoint f;
  f.mu_hat = conditional_mean(params, x_prev, w_next);
  const double a = params.tau * f.mu_hat, b = params.tau * (1.0 - f.mu_hat);
  f.lower = beta_quantile(0.5 * alpha, a, b);
  f.upper = beta_quantile(1.0 - 0.5 * alpha, a, b);
  return f;
}

// Forecasts of x[t] from x[t-1] and the covariates of t, for t in
// [from_t, to_t] (1-based, inclusive).
inline std::vector<ForecastPoint> forecast_series(const ModelParams& params, const SeriesSample& data,
                                                  std::size_t from_t, std::size_t to_t, double alpha) {
  detail::require(from_t >= 1 && from_t <= to_t && to_t <= data.transitions(),
                  "forecast_series: index range out of bounds");
  std::vector<ForecastPoint> out;
  out.reserve(to_t - from_t + 1);
  for (std::size_t t = from_t; t <= to_t; ++t) {
    out.push_back(one_step_forecast(params, data.x[static_cast<Eigen::Index>(t) - 1],
                                    data.covariates(t), alpha));
  }
  return out;
}

struct ForecastMetrics {
  double mae = 0.0;
  std::optional<double> mape;  // percent
  double rmse = 0.0;
  double cp = 0.0;  // percent
  std::size_t count = 0;
};

// MAE, MAPE (percent, averaged over points), RMSE and interval coverage
// (percent).
inline ForecastMetrics forecast_metrics(const std::vector<double>& actual,
                                        const std::vector<ForecastPoint>& forecast,
                                        bool with_mape = true) {
  detail::require(!actual.empty(), "forecast_metrics: need at least one point");
  detail::require(actual.size() == forecast.size(), "forecast_metrics: lengths differ");
  const auto n = static_cast<double>(actual.size());
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double err = actual[i] - forecast[i].mu_hat;
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (with_mape) {
      if (actual[i] == 0.0) {
        throw DomainError("forecast_metrics: MAPE undefined, actual value at index " + std::to_string(i) +
                          " is zero");
      }
      pct_sum += std::abs(err / actual[i]);
    }
    if (forecast[i].covers(actual[i])) ++covered;
  }
  ForecastMetrics m;
  m.count = actual.size();
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (with_mape) m.mape = 100.0 * pct_sum / n;
  m.cp = 100.0 * static_cast<double>(covered) / n;
  return m;
}

struct DetectionSummary {
  std::optional<double> mean_delay;  // M1, over detected runs only
  double rejection_rate = 0.0;       // M2
  double sensitivity = 0.0;          // M3
  std::size_t runs = 0;
  std::size_t detected = 0;
};

// Summary from first-crossing indices (empty optional = no detection).
inline DetectionSummary detection_metrics(const std::vector<std::optional<std::size_t>>& k_detect,
                                          std::size_t k_star) {
  detail::require(!k_detect.empty(), "detection_metrics: no results");
  DetectionSummary s;
  s.runs = k_detect.size();
  double delay_sum = 0.0;
  std::size_t late = 0;
  for (const auto& k : k_detect) {
    if (!k) continue;
    ++s.detected;
    delay_sum += static_cast<double>(*k);
    if (*k > k_star) ++late;
  }
  const auto runs = static_cast<double>(s.runs);
  s.rejection_rate = static_cast<double>(s.detected) / runs;
  s.sensitivity = static_cast<double>(late) / runs;
  if (s.detected > 0) s.mean_delay = delay_sum / static_cast<double>(s.detected) - static_cast<double>(k_star);
  return s;
}

inline DetectionSummary detection_metrics(const std::vector<MonitorState>& results, std::size_t k_star) {
  std::vector<std::optional<std::size_t>> ks;
  ks.reserve(results.size());
  for (const auto& r : results) {
    ks.push_back(r.crossing ? std::optional<std::size_t>(r.crossing->k_detect) : std::nullopt);
  }
  return detection_metrics(ks, k_star);
}

// 2 (l + 3) - 2 log PL
inline double aic(double loglik, Eigen::Index num_covariates) {
  return 2.0 * static_cast<double>(num_covariates + 3) - 2.0 * loglik;
}

}  // namespace betaar
