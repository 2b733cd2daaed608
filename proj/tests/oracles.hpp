#pragma once

// Reference implementations used only by the tests. They are written
// independently of the library: long double arithmetic, std::lgamma and
// Boost's digamma, and fourth-order Richardson finite differences.

#include <cmath>
#include <functional>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

namespace oracle {

using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Single-transition conditional Beta log-density with eta = (tau, phi0,
// phi1, phi...) and regressor z = (1, A(x_prev), w...).
inline long double loglik(const VecL& eta, long double x, const VecL& z) {
  long double lin = 0.0L;
  for (Eigen::Index i = 0; i < z.size(); ++i) lin += eta[i + 1] * z[i];
  const long double mu = 1.0L / (1.0L + std::exp(-lin));
  const long double tau = eta[0];
  const long double a = tau * mu, b = tau * (1.0L - mu);
  return std::lgamma(tau) - std::lgamma(a) - std::lgamma(b) + (a - 1.0L) * std::log(x) +
         (b - 1.0L) * std::log1p(-x);
}

// Analytic score written out directly from the density, by the chain rule
// through a = tau mu and b = tau (1 - mu).
inline VecL score(const VecL& eta, long double x, const VecL& z) {
  using boost::math::digamma;
  long double lin = 0.0L;
  for (Eigen::Index i = 0; i < z.size(); ++i) lin += eta[i + 1] * z[i];
  const long double mu = 1.0L / (1.0L + std::exp(-lin));
  const long double tau = eta[0];
  const long double a = tau * mu, b = tau * (1.0L - mu);
  const long double dl_da = -digamma(a) + std::log(x);
  const long double dl_db = -digamma(b) + std::log1p(-x);
  VecL g(eta.size());
  g[0] = digamma(tau) + mu * dl_da + (1.0L - mu) * dl_db;
  const long double dmu = mu * (1.0L - mu);
  for (Eigen::Index i = 0; i < z.size(); ++i) g[i + 1] = tau * dmu * (dl_da - dl_db) * z[i];
  return g;
}

// d f / d eta_i by the five-point stencil with step h_i.
inline long double richardson(const std::function<long double(const VecL&)>& f, const VecL& eta,
                              Eigen::Index i, long double h) {
  auto at = [&](long double off) {
    VecL e = eta;
    e[i] += off;
    return f(e);
  };
  return (8.0L * (at(h) - at(-h)) - (at(2.0L * h) - at(-2.0L * h))) / (12.0L * h);
}

inline long double step_for(const VecL& eta, Eigen::Index i) {
  return i == 0 ? 1e-3L * eta[0] : 1e-3L;
}

inline VecL fd_gradient(const std::function<long double(const VecL&)>& f, const VecL& eta) {
  VecL g(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) g[i] = richardson(f, eta, i, step_for(eta, i));
  return g;
}

// Jacobian of a vector function, column i = d g / d eta_i.
inline Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> fd_jacobian(
    const std::function<VecL(const VecL&)>& g, const VecL& eta) {
  const Eigen::Index d = eta.size();
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> j(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const long double h = step_for(eta, i);
    auto at = [&](long double off) {
      VecL e = eta;
      e[i] += off;
      return g(e);
    };
    j.col(i) = (8.0L * (at(h) - at(-h)) - (at(2.0L * h) - at(-2.0L * h))) / (12.0L * h);
  }
  return j;
}

}  // namespace oracle
