#pragma once

// Partial maximum likelihood for the Beta AR(1) model: the conditional
// log-likelihood, its analytic score and Hessian, the fit, and the
// information / asymptotic covariance estimates.
//
// Per transition, with mu = E(X_t | X_{t-1}, W_t), a = tau mu and
// b = tau (1 - mu):
//
//   l_t = lnG(tau) - lnG(a) - lnG(b) + (a - 1) ln X_t + (b - 1) ln(1 - X_t)
//
// Writing X* = logit(X_t), mu* = psi(a) - psi(b) and v = mu (1 - mu), the
// score G_t = d l_t / d(tau, beta) is
//
//   G_tau  = mu (X* - mu*) + ln(1 - X_t) - psi(b) + psi(tau)
//   G_beta = tau (X* - mu*) v Z_{t-1}
//
// and the Hessian entries are
//
//   H_tau,tau   = psi'(tau) - mu^2 psi'(a) - (1 - mu)^2 psi'(b)
//   H_tau,beta  = [(X* - mu*) - tau (mu psi'(a) - (1 - mu) psi'(b))] v Z
//   H_beta,beta = tau [(1 - 2 mu)(X* - mu*) - tau (psi'(a) + psi'(b)) v] v Z Z'
//
// Observations are clamped to [2^-53, 1 - 2^-53] before any logarithm.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "betaar/errors.hpp"
#include "betaar/model.hpp"
#include "betaar/optimize.hpp"
#include "betaar/specfun.hpp"

namespace betaar {

namespace detail {

// Adds the contributions of one transition to whichever outputs are
// non-null. `z` is scratch space of length d - 1.
inline void accumulate_transition(const ModelParams& p, double x, double x_prev,
                                  const Eigen::Ref<const Vector>& w, Vector& z, double* loglik,
                                  Vector* score, Matrix* hessian) {
  if (w.size() != p.exo_coefs.size()) {
    throw DomainError("covariate dimension " + std::to_string(w.size()) +
                      " does not match exo_coefs dimension " +
                      std::to_string(p.exo_coefs.size()));
  }
  z[0] = 1.0;
  z[1] = p.xlink(x_prev);
  z.tail(w.size()) = w;
  const double tau = p.tau;
  const double lin = p.phi0 + p.phi1 * z[1] + p.exo_coefs.dot(w);
  const double mu = expit(lin);
  const double one_minus_mu = expit(-lin);
  const double a = tau * mu;
  const double b = tau * one_minus_mu;
  const double xc = clamp_unit(x);
  const double log_x = std::log(xc);
  const double log_1mx = std::log1p(-xc);

  if (loglik) {
    *loglik += specfun::log_gamma(tau) - specfun::log_gamma(a) - specfun::log_gamma(b) +
               (a - 1.0) * log_x + (b - 1.0) * log_1mx;
  }
  if (!score && !hessian) return;

  const double psi_a = specfun::digamma(a);
  const double psi_b = specfun::digamma(b);
  const double resid = (log_x - log_1mx) - (psi_a - psi_b);  // X* - mu*
  const double v = mu * one_minus_mu;
  const Eigen::Index k = z.size();

  if (score) {
    (*score)[0] += mu * resid + log_1mx - psi_b + specfun::digamma(tau);
    score->tail(k) += (tau * resid * v) * z;
  }
  if (hessian) {
    const double tri_a = specfun::trigamma(a);
    const double tri_b = specfun::trigamma(b);
    Matrix& h = *hessian;
    h(0, 0) += specfun::trigamma(tau) - mu * mu * tri_a - one_minus_mu * one_minus_mu * tri_b;
    const double cross = (resid - tau * (mu * tri_a - one_minus_mu * tri_b)) * v;
    const double coef = tau * ((1.0 - 2.0 * mu) * resid - tau * (tri_a + tri_b) * v) * v;
    for (Eigen::Index i = 0; i < k; ++i) {
      h(i + 1, 0) += cross * z[i];
      for (Eigen::Index j = 0; j <= i; ++j) h(i + 1, j + 1) += coef * z[i] * z[j];
    }
  }
}

inline void symmetrize_from_lower(Matrix& h) {
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = i + 1; j < h.cols(); ++j) h(i, j) = h(j, i);
}

inline void check_dims(const ModelParams& p, const SeriesSample& data) {
  if (data.num_covariates() != p.num_covariates()) {
    throw DomainError("data has " + std::to_string(data.num_covariates()) +
                      " covariates but the model expects " + std::to_string(p.num_covariates()));
  }
  detail::require(data.w.rows() + 1 == data.x.size(), "SeriesSample: need len(w) == len(x) - 1");
}

}  // namespace detail

// Sum of conditional log-densities over transitions t = 1..m.
inline double partial_loglik(const ModelParams& params, const SeriesSample& data) {
  params.validate();
  detail::check_dims(params, data);
  detail::require(data.transitions() >= 1, "partial_loglik: need at least one transition");
  Vector z(params.dim() - 1);
  double ll = 0.0;
  for (std::size_t t = 1; t <= data.transitions(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    detail::accumulate_transition(params, data.x[ti], data.x[ti - 1], data.covariates(t), z, &ll,
                                  nullptr, nullptr);
  }
  return ll;
}

// Per-transition score G(X_t, eta), length l + 3.
inline Vector score_contrib(const ModelParams& params, double x, double x_prev,
                            const Eigen::Ref<const Vector>& w) {
  params.validate();
  Vector z(params.dim() - 1);
  Vector s = Vector::Zero(params.dim());
  detail::accumulate_transition(params, x, x_prev, w, z, nullptr, &s, nullptr);
  return s;
}

// Sum of score_contrib over transitions from_t..to_t (inclusive, 1-based).
// An empty range (to_t < from_t) yields the zero vector.
inline Vector score_sum(const ModelParams& params, const SeriesSample& data, std::size_t from_t,
                        std::size_t to_t) {
  params.validate();
  detail::check_dims(params, data);
  Vector s = Vector::Zero(params.dim());
  if (to_t < from_t) return s;
  detail::require(from_t >= 1 && to_t <= data.transitions(), "score_sum: index range out of bounds");
  Vector z(params.dim() - 1);
  for (std::size_t t = from_t; t <= to_t; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    detail::accumulate_transition(params, data.x[ti], data.x[ti - 1], data.covariates(t), z,
                                  nullptr, &s, nullptr);
  }
  return s;
}

// Per-transition Hessian of the conditional log-density.
inline Matrix hessian_contrib(const ModelParams& params, double x, double x_prev,
                              const Eigen::Ref<const Vector>& w) {
  params.validate();
  Vector z(params.dim() - 1);
  Matrix h = Matrix::Zero(params.dim(), params.dim());
  detail::accumulate_transition(params, x, x_prev, w, z, nullptr, nullptr, &h);
  detail::symmetrize_from_lower(h);
  return h;
}

inline Matrix hessian_sum(const ModelParams& params, const SeriesSample& data) {
  params.validate();
  detail::check_dims(params, data);
  Vector z(params.dim() - 1);
  Matrix h = Matrix::Zero(params.dim(), params.dim());
  for (std::size_t t = 1; t <= data.transitions(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    detail::accumulate_transition(params, data.x[ti], data.x[ti - 1], data.covariates(t), z,
                                  nullptr, nullptr, &h);
  }
  detail::symmetrize_from_lower(h);
  return h;
}

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  // Starting point; method-of-moments / least-squares start when empty.
  std::optional<ModelParams> initial_params;
};

struct FitResult {
  ModelParams params_hat;
  double loglik = 0.0;
  double score_norm_at_solution = std::numeric_limits<double>::infinity();  // max-norm of S_m
  Matrix info_matrix;     // (1/m) sum of -hessian_contrib at the estimate
  Matrix asymptotic_cov;  // info_matrix^{-1} / m
  bool converged = false;
  std::size_t m = 0;  // transitions used
  int iterations = 0;
  std::size_t clamped_observations = 0;
  double info_condition_number = 0.0;
  std::string method;
  std::string message;

  Eigen::Index dim() const noexcept { return params_hat.dim(); }

  Vector asymptotic_sd() const { return asymptotic_cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

  // 2 d - 2 log PL
  double aic() const { return 2.0 * static_cast<double>(dim()) - 2.0 * loglik; }
};

inline std::vector<std::string> parameter_names(Eigen::Index num_covariates) {
  std::vector<std::string> names{"tau", "phi0", "phi1"};
  for (Eigen::Index i = 1; i <= num_covariates; ++i) names.push_back("phi_" + std::to_string(i));
  return names;
}

// Method-of-moments tau from the marginal mean and variance, beta from least
// squares of logit(x_t) on Z_{t-1}.
inline ModelParams initial_estimate(const SeriesSample& data, const XLink& link) {
  const std::size_t m = data.transitions();
  const Eigen::Index l = data.num_covariates();
  const Eigen::Index k = l + 2;
  Matrix design(static_cast<Eigen::Index>(m), k);
  Vector target(static_cast<Eigen::Index>(m));
  constexpr double kEdge = 1e-4;
  for (std::size_t t = 1; t <= m; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    design.row(ti - 1) = build_regressor(link, data.x[ti - 1], data.covariates(t)).transpose();
    target[ti - 1] = logit(std::clamp(data.x[ti], kEdge, 1.0 - kEdge));
  }
  Vector beta = design.colPivHouseholderQr().solve(target);
  if (!beta.allFinite()) beta.setZero();

  const Vector xs = data.x.tail(static_cast<Eigen::Index>(m));
  const double mean = xs.mean();
  const double var = (xs.array() - mean).square().sum() / std::max<double>(1.0, double(m) - 1.0);
  double tau = var > 0.0 ? mean * (1.0 - mean) / var - 1.0 : 100.0;
  if (!(tau > 0.0) || !std::isfinite(tau)) tau = 1.0;

  ModelParams p;
  p.tau = tau;
  p.phi0 = beta[0];
  p.phi1 = beta[1];
  p.exo_coefs = beta.tail(l);
  p.xlink = link;
  return p;
}

// Maximizes the partial log-likelihood.
//
// Stage 1 runs BFGS on theta = (ln tau, beta) so tau stays positive. Stage 2
// polishes with Newton steps on the analytic Hessian, which reaches the
// score tolerance in a handful of steps once BFGS is in the basin. If BFGS
// stalls in its line search a Nelder-Mead pass restarts it.
inline FitResult fit_pmle(const SeriesSample& data, const XLink& xlink,
                          const FitOptions& options = {}) {
  data.validate();
  xlink.validate();
  detail::require(options.gradient_tolerance > 0.0, "FitOptions: gradient_tolerance must be > 0");
  detail::require(options.max_iterations >= 1, "FitOptions: max_iterations must be >= 1");
  const Eigen::Index l = data.num_covariates();
  const Eigen::Index d = l + 3;
  const std::size_t m = data.transitions();
  if (m < static_cast<std::size_t>(d + 2)) {
    throw DomainError("fit_pmle: need at least " + std::to_string(d + 2) + " transitions, got " +
                      std::to_string(m));
  }

  ModelParams start = options.initial_params ? *options.initial_params : initial_estimate(data, xlink);
  start.xlink = xlink;
  detail::require(start.num_covariates() == l, "fit_pmle: initial_params covariate dimension mismatch");
  start.validate();

  const double inv_m = 1.0 / static_cast<double>(m);
  auto to_params = [&](const Vector& theta) {
    Vector eta = theta;
    eta[0] = std::exp(theta[0]);
    return ModelParams::from_vector(eta, xlink);
  };
  Vector z(d - 1);
  Vector score(d);
  auto evaluate = [&](const ModelParams& p, double* ll, Vector* s) {
    *ll = 0.0;
    if (s) s->setZero();
    for (std::size_t t = 1; t <= m; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      detail::accumulate_transition(p, data.x[ti], data.x[ti - 1], data.covariates(t), z, ll, s,
                                    nullptr);
    }
  };
  // f(theta) = -log PL / m
  optimize::ObjectiveFn objective = [&](const Vector& theta, Vector* grad) {
    if (!theta.allFinite() || std::abs(theta[0]) > 700.0) return std::numeric_limits<double>::infinity();
    const ModelParams p = to_params(theta);
    if (!(p.tau > 0.0) || !std::isfinite(p.tau)) return std::numeric_limits<double>::infinity();
    double ll = 0.0;
    evaluate(p, &ll, grad ? &score : nullptr);
    if (grad) {
      *grad = -score * inv_m;
      (*grad)[0] *= p.tau;
    }
    return -ll * inv_m;
  };
  const double tol = options.gradient_tolerance;
  // grad is in theta coordinates and scaled by 1/m; recover S_m(eta).
  auto score_max_norm = [&](const Vector& theta, const Vector& grad) {
    Vector s = -grad / inv_m;
    s[0] /= std::exp(theta[0]);
    return s.cwiseAbs().maxCoeff();
  };
  // BFGS only needs to reach the Newton basin; the final tolerance is
  // enforced by the polishing stage.
  const double coarse_tol = std::max(tol, 1e-6 * static_cast<double>(m));
  optimize::StopFn coarse_stop = [&](const Vector& theta, double, const Vector& grad) {
    return score_max_norm(theta, grad) <= coarse_tol;
  };

  Vector theta = start.to_vector();
  theta[0] = std::log(start.tau);
  int iterations = 0;
  std::string method = "bfgs";
  bool converged = false;

  auto newton_polish = [&](Vector& th) {
    // Newton in eta coordinates with step halving on tau <= 0 or a drop in
    // the likelihood beyond rounding.
    for (int it = 0; it < 50 && iterations < options.max_iterations; ++it) {
      const ModelParams p = to_params(th);
      double ll = 0.0;
      evaluate(p, &ll, &score);
      if (score.cwiseAbs().maxCoeff() <= tol) return true;
      const Matrix h = hessian_sum(p, data);
      Eigen::LLT<Matrix> llt(-h);
      if (llt.info() != Eigen::Success) return false;
      const Vector delta = llt.solve(score);
      Vector eta = p.to_vector();
      double step = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        Vector cand = eta + step * delta;
        if (cand[0] > 0.0 && cand.allFinite()) {
          double ll_new = 0.0;
          evaluate(ModelParams::from_vector(cand, xlink), &ll_new, nullptr);
          if (std::isfinite(ll_new) && ll_new >= ll - 1e-10 * (1.0 + std::abs(ll))) {
            th = cand;
            th[0] = std::log(cand[0]);
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      ++iterations;
      if (!accepted) return false;
    }
    const ModelParams p = to_params(th);
    double ll = 0.0;
    evaluate(p, &ll, &score);
    return score.cwiseAbs().maxCoeff() <= tol;
  };

  for (int round = 0; round < 3 && !converged && iterations < options.max_iterations; ++round) {
    auto r = optimize::bfgs(objective, theta, options.max_iterations - iterations, coarse_stop);
    iterations += r.iterations;
    if (r.x.allFinite() && std::isfinite(r.f)) theta = r.x;
    Vector th = theta;
    if (newton_polish(th)) {
      theta = th;
      converged = true;
      method += "+newton";
      break;
    }
    if (objective(th, nullptr) <= objective(theta, nullptr)) theta = th;
    auto nm = optimize::nelder_mead(objective, theta, 0.1, 2000 * static_cast<int>(d));
    iterations += nm.iterations;
    if (std::isfinite(nm.f)) theta = nm.x;
    method += "+simplex";
  }

  FitResult result;
  result.params_hat = to_params(theta);
  result.m = m;
  result.iterations = iterations;
  result.method = method;
  double ll = 0.0;
  evaluate(result.params_hat, &ll, &score);
  result.loglik = ll;
  result.score_norm_at_solution = score.cwiseAbs().maxCoeff();
  result.converged = converged && result.score_norm_at_solution <= tol;
  for (Eigen::Index t = 1; t < data.x.size(); ++t) {
    if (clamp_unit(data.x[t]) != data.x[t]) ++result.clamped_observations;
  }

  result.info_matrix = -hessian_sum(result.params_hat, data) * inv_m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(result.info_matrix);
  const Vector ev = es.eigenvalues();
  const double max_abs = ev.cwiseAbs().maxCoeff();
  const double min_abs = ev.cwiseAbs().minCoeff();
  result.info_condition_number = min_abs > 0.0 ? max_abs / min_abs : std::numeric_limits<double>::infinity();
  if (!(result.info_condition_number < 1e14)) {
    throw NumericalError("fit_pmle: information matrix is singular (condition number " +
                         std::to_string(result.info_condition_number) + ")");
  }
  result.asymptotic_cov =
      es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose() * inv_m;
  detail::symmetrize_from_lower(result.asymptotic_cov);
  if (result.converged && ev.minCoeff() <= 0.0) {
    result.converged = false;
    result.message = "stationary point is not a local maximum (information matrix not positive definite)";
  } else if (!result.converged) {
    result.message = "score max-norm " + std::to_string(result.score_norm_at_solution) +
                     " above tolerance after " + std::to_string(iterations) + " iterations";
  } else {
    result.message = "converged";
  }
  return result;
}

// Q-Q data for one parameter: (standard normal quantile, sorted standardized
// estimate) pairs plus the least-squares line through them.
struct QQSeries {
  std::string parameter;
  std::vector<std::pair<double, double>> points;
  double slope = 0.0;
  double intercept = 0.0;
};

// Pairs sorted values with normal quantiles at plotting positions
// (i - 0.5) / n.
inline QQSeries qq_pairs(std::vector<double> standardized, std::string name = {}) {
  QQSeries q;
  q.parameter = std::move(name);
  const std::size_t n = standardized.size();
  if (n == 0) return q;
  std::sort(standardized.begin(), standardized.end());
  const boost::math::normal_distribution<double> normal;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  q.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double theo = boost::math::quantile(normal, p);
    q.points.emplace_back(theo, standardized[i]);
    sx += theo;
    sy += standardized[i];
    sxx += theo * theo;
    sxy += theo * standardized[i];
  }
  const double dn = static_cast<double>(n);
  const double denom = sxx - sx * sx / dn;
  q.slope = denom > 0.0 ? (sxy - sx * sy / dn) / denom : 0.0;
  q.intercept = (sy - q.slope * sx) / dn;
  return q;
}

// Standardizes each estimate by its own asymptotic SD, or by the SDs of
// `reference_cov` when given, and emits one Q-Q series per parameter.
inline std::vector<QQSeries> qq_export(const std::vector<FitResult>& fits, const ModelParams& truth,
                                       const Matrix* reference_cov = nullptr) {
  detail::require(fits.size() >= 30, "qq_export: need at least 30 fits");
  const Vector eta0 = truth.to_vector();
  const Eigen::Index d = eta0.size();
  if (reference_cov) {
    detail::require(reference_cov->rows() == d && reference_cov->cols() == d,
                    "qq_export: reference covariance dimension mismatch");
  }
  const auto names = parameter_names(d - 3);
  std::vector<QQSeries> out;
  for (Eigen::Index i = 0; i < d; ++i) {
    std::vector<double> zs;
    zs.reserve(fits.size());
    for (const auto& f : fits) {
      detail::require(f.dim() == d, "qq_export: fit dimension mismatch");
      const double var = reference_cov ? (*reference_cov)(i, i) : f.asymptotic_cov(i, i);
      const double sd = std::sqrt(std::max(var, 0.0));
      const double diff = f.params_hat.to_vector()[i] - eta0[i];
      zs.push_back(sd > 0.0 ? diff / sd : 0.0);
    }
    out.push_back(qq_pairs(std::move(zs), names[static_cast<std::size_t>(i)]));
  }
  return out;
}

}  // namespace betaar
