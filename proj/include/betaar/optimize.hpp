#pragma once

// Unconstrained minimizers used by the likelihood fit: BFGS with an Armijo
// backtracking line search, and a Nelder-Mead simplex for the case where
// the line search cannot make progress.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace betaar::optimize {

using Vector = Eigen::VectorXd;

// Returns f(x) and writes the gradient into `grad` when it is non-null.
using ObjectiveFn = std::function<double(const Vector& x, Vector* grad)>;
// Returns true when x satisfies the caller's convergence test.
using StopFn = std::function<bool(const Vector& x, double f, const Vector& grad)>;

struct MinimizeResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  Vector grad;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

inline MinimizeResult bfgs(const ObjectiveFn& fn, Vector x, int max_iterations,
                           const StopFn& stop) {
  const Eigen::Index n = x.size();
  MinimizeResult r;
  Vector g(n);
  double f = fn(x, &g);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Vector g_new(n);

  for (int it = 0; it < max_iterations; ++it) {
    if (std::isfinite(f) && stop(x, f, g)) {
      r.converged = true;
      break;
    }
    Vector dir = -h_inv * g;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      scaled = false;
      dir = -g;
      slope = -g.squaredNorm();
    }
    // The unscaled first step is capped at unit length in parameter space.
    double step = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(dir.norm(), 1e-300));
    constexpr double kArmijo = 1e-4;
    Vector x_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + step * dir;
      f_new = fn(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++r.iterations;
    if (!accepted) {
      r.line_search_failed = true;
      break;
    }
    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h_inv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }
  r.x = x;
  r.f = f;
  r.grad = g;
  if (!r.converged && std::isfinite(f)) r.converged = stop(x, f, g);
  return r;
}

// Nelder-Mead with the standard coefficients (1, 2, 0.5, 0.5). Stops when
// the spread of simplex values falls below `f_tolerance` or after
// `max_evaluations` objective calls.
inline MinimizeResult nelder_mead(const ObjectiveFn& fn, const Vector& x0, double initial_step,
                                  int max_evaluations, double f_tolerance = 1e-12) {
  const Eigen::Index n = x0.size();
  std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
  std::vector<double> vals(static_cast<std::size_t>(n + 1));
  auto eval = [&](const Vector& p) {
    const double v = fn(p, nullptr);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)][i] += initial_step;
  for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = eval(pts[i]);
  int evals = static_cast<int>(pts.size());
  MinimizeResult r;
  std::vector<std::size_t> order(pts.size());

  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(vals[worst] - vals[best]) <= f_tolerance * (1.0 + std::abs(vals[best]))) break;
    ++r.iterations;

    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Vector reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected);
    ++evals;
    if (fr < vals[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded);
      ++evals;
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Vector contracted =
        outside ? Vector(centroid + 0.5 * (reflected - centroid))
                : Vector(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(contracted);
    ++evals;
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
      ++evals;
    }
  }
  const auto best = static_cast<std::size_t>(
      std::min_element(vals.begin(), vals.end()) - vals.begin());
  r.x = pts[best];
  r.f = vals[best];
  return r;
}

}  // namespace betaar::optimize
