#pragma once

// Generalized Beta AR(1) process.
//
//   X_t | X_{t-1}, W_t ~ Beta(tau mu_t, tau (1 - mu_t))
//   logit(mu_t) = phi0 + phi1 A(X_{t-1}) + phi' W_t
//
// A is the bounded x-link. Covariates are observed inputs: either supplied
// by the caller or generated by independent truncated AR(1) processes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "betaar/errors.hpp"
#include "betaar/rng.hpp"

namespace betaar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Covariates: one row per time step, one column per covariate.
using CovariateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultTruncation = 0.01;

enum class XLinkKind { identity, truncated_logit, truncated_cloglog };

inline std::string to_string(XLinkKind kind) {
  switch (kind) {
    case XLinkKind::identity: return "identity";
    case XLinkKind::truncated_logit: return "logit";
    case XLinkKind::truncated_cloglog: return "cloglog";
  }
  return "unknown";
}

inline XLinkKind parse_xlink_kind(std::string_view name) {
  if (name == "identity") return XLinkKind::identity;
  if (name == "logit" || name == "truncated_logit") return XLinkKind::truncated_logit;
  if (name == "cloglog" || name == "truncated_cloglog") return XLinkKind::truncated_cloglog;
  throw DomainError("unknown x-link '" + std::string(name) + "' (identity|logit|cloglog)");
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double expit(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// x-link A: [0,1] -> bounded interval. Truncated kinds evaluate at
// x* = min(max(c, x), 1 - c). With c = 0 the clamp falls back to
// [2^-53, 1 - 2^-53] so the output stays finite at the boundary.
struct XLink {
  XLinkKind kind = XLinkKind::truncated_logit;
  double trunc_c = kDefaultTruncation;

  void validate() const {
    detail::require(trunc_c >= 0.0 && trunc_c < 0.5, "XLink: truncation c must lie in [0, 0.5)");
  }

  double clamp(double x) const {
    const double lo = trunc_c > kUnitFloor ? trunc_c : kUnitFloor;
    const double hi = 1.0 - lo;
    return x < lo ? lo : (x > hi ? hi : x);
  }

  double operator()(double x) const {
    detail::require(x >= 0.0 && x <= 1.0, "apply_xlink: x must lie in [0,1]");
    switch (kind) {
      case XLinkKind::identity: return x;
      case XLinkKind::truncated_logit: return logit(clamp(x));
      case XLinkKind::truncated_cloglog: return std::log(-std::log1p(-clamp(x)));
    }
    return x;
  }

  // max |A(x)| over [0,1].
  double bound() const {
    if (kind == XLinkKind::identity) return 1.0;
    return std::max(std::abs((*this)(0.0)), std::abs((*this)(1.0)));
  }

  bool operator==(const XLink&) const = default;
};

inline double apply_xlink(const XLink& link, double x) { return link(x); }

struct ModelParams {
  double tau = 100.0;
  double phi0 = 0.0;
  double phi1 = 0.0;
  Vector exo_coefs;  // length l
  XLink xlink;

  Eigen::Index num_covariates() const noexcept { return exo_coefs.size(); }
  // Length of eta = (tau, phi0, phi1, phi_1..phi_l).
  Eigen::Index dim() const noexcept { return exo_coefs.size() + 3; }

  void validate() const {
    detail::require(tau > 0.0 && std::isfinite(tau), "ModelParams: tau must be finite and > 0");
    detail::require(std::isfinite(phi0) && std::isfinite(phi1) && exo_coefs.allFinite(),
                    "ModelParams: coefficients must be finite");
    xlink.validate();
  }

  Vector to_vector() const {
    Vector eta(dim());
    eta << tau, phi0, phi1, exo_coefs;
    return eta;
  }

  static ModelParams from_vector(const Eigen::Ref<const Vector>& eta, const XLink& link) {
    detail::require(eta.size() >= 3, "ModelParams: parameter vector needs at least 3 entries");
    ModelParams p;
    p.tau = eta[0];
    p.phi0 = eta[1];
    p.phi1 = eta[2];
    p.exo_coefs = eta.tail(eta.size() - 3);
    p.xlink = link;
    return p;
  }

  // The parameter set used throughout the simulation studies:
  // eta = (100, -0.6, 0.1, 0.1), truncated logit with c = 0.01.
  static ModelParams reference() {
    ModelParams p;
    p.tau = 100.0;
    p.phi0 = -0.6;
    p.phi1 = 0.1;
    p.exo_coefs = Vector::Constant(1, 0.1);
    p.xlink = XLink{XLinkKind::truncated_logit, kDefaultTruncation};
    return p;
  }
};

// Z_{t-1} = (1, A(x_prev), w_1..w_l)
inline Vector build_regressor(const XLink& link, double x_prev,
                              const Eigen::Ref<const Vector>& w) {
  Vector z(w.size() + 2);
  z << 1.0, link(x_prev), w;
  return z;
}

inline double linear_predictor(const ModelParams& params, double x_prev,
                               const Eigen::Ref<const Vector>& w) {
  if (w.size() != params.exo_coefs.size()) {
    throw DomainError("covariate dimension " + std::to_string(w.size()) +
                      " does not match exo_coefs dimension " +
                      std::to_string(params.exo_coefs.size()));
  }
  return params.phi0 + params.phi1 * params.xlink(x_prev) + params.exo_coefs.dot(w);
}

inline double conditional_mean(const ModelParams& params, double x_prev,
                               const Eigen::Ref<const Vector>& w) {
  return expit(linear_predictor(params, x_prev, w));
}

// Observations X_0..X_n with covariates W_1..W_n; row t-1 of `w`
// accompanies x[t].
struct SeriesSample {
  Vector x;
  CovariateMatrix w;

  std::size_t transitions() const noexcept {
    return x.size() > 0 ? static_cast<std::size_t>(x.size() - 1) : 0;
  }
  Eigen::Index num_covariates() const noexcept { return w.cols(); }

  // Covariate vector accompanying x[t], t >= 1.
  auto covariates(std::size_t t) const { return w.row(static_cast<Eigen::Index>(t) - 1).transpose(); }

  void validate() const {
    detail::require(x.size() >= 1, "SeriesSample: at least one observation required");
    detail::require(w.rows() == x.size() - 1, "SeriesSample: need len(w) == len(x) - 1");
    for (Eigen::Index t = 0; t < x.size(); ++t) {
      if (!(x[t] >= 0.0 && x[t] <= 1.0)) {
        throw DomainError("SeriesSample: x[" + std::to_string(t) + "] outside [0,1]");
      }
    }
    detail::require(w.allFinite(), "SeriesSample: covariates must be finite");
  }

  // Observations first..last (inclusive) as a new sample whose x[0] is
  // x[first].
  SeriesSample slice(std::size_t first, std::size_t last) const {
    detail::require(first <= last && last < static_cast<std::size_t>(x.size()),
                    "SeriesSample::slice: range out of bounds");
    SeriesSample s;
    const auto n = static_cast<Eigen::Index>(last - first);
    s.x = x.segment(static_cast<Eigen::Index>(first), n + 1);
    s.w = w.middleRows(static_cast<Eigen::Index>(first), n);
    return s;
  }

  bool operator==(const SeriesSample& o) const {
    return x.size() == o.x.size() && w.rows() == o.w.rows() && w.cols() == o.w.cols() &&
           x == o.x && w == o.w;
  }
};

// One-step simulator that keeps the current state, so parameter changes can
// be injected mid-path.
class BetaAR1Simulator {
 public:
  BetaAR1Simulator(ModelParams params, const ExoAR1Spec& exo, RngState& rng, double x0 = 0.5,
                   ExoStart start = ExoStart::zero)
      : params_(std::move(params)), x_prev_(x0) {
    params_.validate();
    detail::require(x0 >= 0.0 && x0 <= 1.0, "simulate_path: x0 must lie in [0,1]");
    exo_.reserve(static_cast<std::size_t>(params_.num_covariates()));
    for (Eigen::Index i = 0; i < params_.num_covariates(); ++i) exo_.emplace_back(exo, rng, start);
    w_.resize(params_.num_covariates());
  }

  const ModelParams& params() const noexcept { return params_; }
  void set_params(ModelParams params) {
    params.validate();
    detail::require(params.num_covariates() == params_.num_covariates(),
                    "BetaAR1Simulator: covariate dimension cannot change");
    params_ = std::move(params);
  }

  double current() const noexcept { return x_prev_; }
  const Vector& last_covariates() const noexcept { return w_; }

  // Draws W_t then X_t; returns X_t.
  double step(RngState& rng) {
    for (std::size_t i = 0; i < exo_.size(); ++i) w_[static_cast<Eigen::Index>(i)] = exo_[i].next(rng);
    return draw(rng);
  }

  // Same as step() with a caller-supplied W_t.
  double step_with(RngState& rng, const Eigen::Ref<const Vector>& w) {
    w_ = w;
    return draw(rng);
  }

  void burn_in(RngState& rng, std::size_t steps) {
    for (std::size_t i = 0; i < steps; ++i) step(rng);
  }

 private:
  double draw(RngState& rng) {
    const double mu = conditional_mean(params_, x_prev_, w_);
    x_prev_ = sample_beta(rng, params_.tau * mu, params_.tau * (1.0 - mu));
    return x_prev_;
  }

  ModelParams params_;
  std::vector<ExoAR1Process> exo_;
  Vector w_;
  double x_prev_;
};

struct SimulateOptions {
  double x0 = 0.5;
  std::size_t burn_in = 500;
  ExoStart exo_start = ExoStart::zero;
};

// n transitions with covariates from independent truncated AR(1) processes
// (one per exo coefficient). After `burn_in` discarded steps the current
// state becomes X_0.
inline SeriesSample simulate_path(const ModelParams& params, const ExoAR1Spec& exo, std::size_t n,
                                  RngState& rng, const SimulateOptions& opts = {}) {
  detail::require(n >= 1, "simulate_path: n must be >= 1");
  BetaAR1Simulator sim(params, exo, rng, opts.x0, opts.exo_start);
  sim.burn_in(rng, opts.burn_in);
  SeriesSample s;
  s.x.resize(static_cast<Eigen::Index>(n) + 1);
  s.w.resize(static_cast<Eigen::Index>(n), params.num_covariates());
  s.x[0] = sim.current();
  for (std::size_t t = 1; t <= n; ++t) {
    s.x[static_cast<Eigen::Index>(t)] = sim.step(rng);
    s.w.row(static_cast<Eigen::Index>(t) - 1) = sim.last_covariates().transpose();
  }
  return s;
}

// Path driven by supplied covariates; one transition per row of `w`.
inline SeriesSample simulate_path(const ModelParams& params, const CovariateMatrix& w, double x0,
                                  RngState& rng) {
  detail::require(w.rows() >= 1, "simulate_path: need at least one covariate row");
  detail::require(w.cols() == params.num_covariates(),
                  "simulate_path: covariate columns must match exo_coefs");
  BetaAR1Simulator sim(params, ExoAR1Spec{}, rng, x0);
  SeriesSample s;
  s.x.resize(w.rows() + 1);
  s.w = w;
  s.x[0] = x0;
  for (Eigen::Index t = 0; t < w.rows(); ++t) {
    s.x[t + 1] = sim.step_with(rng, w.row(t).transpose());
  }
  return s;
}

}  // namespace betaar
