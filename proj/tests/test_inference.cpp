#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "betaar/inference.hpp"
#include "oracles.hpp"

using namespace betaar;

namespace {

struct Point {
  ModelParams params;
  double x;
  double x_prev;
  Vector w;
};

// Random parameter/data point; tau spans [1, 300] on a log scale.
Point random_point(std::mt19937_64& gen, Eigen::Index l) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point p;
  p.params.tau = std::exp(std::log(1.0) + u(gen) * std::log(300.0));
  p.params.phi0 = -1.0 + 2.0 * u(gen);
  p.params.phi1 = -0.5 + u(gen);
  p.params.exo_coefs = Vector(l);
  for (Eigen::Index i = 0; i < l; ++i) p.params.exo_coefs[i] = -0.5 + u(gen);
  p.params.xlink = u(gen) < 0.5 ? XLink{XLinkKind::truncated_logit, 0.01}
                                : XLink{XLinkKind::truncated_cloglog, 0.02};
  p.x = 0.05 + 0.9 * u(gen);
  p.x_prev = u(gen);
  p.w = Vector(l);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < l; ++i) p.w[i] = n01(gen);
  return p;
}

oracle::VecL regressor_l(const Point& p) {
  return build_regressor(p.params.xlink, p.x_prev, p.w).cast<long double>();
}

double rel_norm(const Vector& got, const Vector& want) {
  return (got - want).norm() / want.norm();
}

SeriesSample single_transition(double x_prev, double x, const Vector& w) {
  SeriesSample s;
  s.x = Vector(2);
  s.x << x_prev, x;
  s.w = CovariateMatrix(1, w.size());
  s.w.row(0) = w.transpose();
  return s;
}

}  // namespace

TEST(PartialLoglik, UniformCaseIsZero) {
  ModelParams p;
  p.tau = 2.0;
  p.exo_coefs = Vector::Zero(1);
  RngState rng(1);
  const auto s = simulate_path(ModelParams::reference(), ExoAR1Spec{}, 200, rng);
  EXPECT_EQ(partial_loglik(p, s), 0.0);
}

TEST(PartialLoglik, BetaTwoTwoAtHalf) {
  ModelParams p;
  p.tau = 4.0;
  p.exo_coefs = Vector::Zero(0);
  const auto s = single_transition(0.3, 0.5, Vector::Zero(0));
  EXPECT_NEAR(partial_loglik(p, s), std::log(1.5), 1e-14);
  EXPECT_NEAR(partial_loglik(p, s), 0.4054651081081644, 1e-14);
}

TEST(PartialLoglik, MatchesLongDoubleOracle) {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 50; ++i) {
    const Point pt = random_point(gen, 2);
    const auto s = single_transition(pt.x_prev, pt.x, pt.w);
    const long double ref = oracle::loglik(pt.params.to_vector().cast<long double>(), pt.x, regressor_l(pt));
    EXPECT_NEAR(partial_loglik(pt.params, s), double(ref), 1e-10 * (1.0 + std::abs(double(ref))));
  }
}

TEST(PartialLoglik, DimensionMismatchAndEmpty) {
  const ModelParams p = ModelParams::reference();
  EXPECT_THROW(partial_loglik(p, single_transition(0.3, 0.5, Vector::Zero(2))), DomainError);
  SeriesSample empty;
  empty.x = Vector::Constant(1, 0.5);
  empty.w = CovariateMatrix(0, 1);
  EXPECT_THROW(partial_loglik(p, empty), DomainError);
}

TEST(PartialLoglik, TruthBeatsPerturbedIntercept) {
  int wins = 0;
  ModelParams perturbed = ModelParams::reference();
  perturbed.phi0 += 0.2;
  for (int r = 0; r < 100; ++r) {
    RngState rng(100, static_cast<std::uint64_t>(r));
    const auto s = simulate_path(ModelParams::reference(), ExoAR1Spec{}, 5000, rng);
    if (partial_loglik(ModelParams::reference(), s) > partial_loglik(perturbed, s)) ++wins;
  }
  EXPECT_GE(wins, 95);
}

TEST(PartialLoglik, BoundaryObservationsAreClamped) {
  const ModelParams p = ModelParams::reference();
  EXPECT_TRUE(std::isfinite(partial_loglik(p, single_transition(0.0, 0.0, Vector::Zero(1)))));
  EXPECT_TRUE(std::isfinite(partial_loglik(p, single_transition(1.0, 1.0, Vector::Zero(1)))));
}

TEST(ScoreContrib, HandExample) {
  ModelParams p;
  p.tau = 2.0;
  p.exo_coefs = Vector::Zero(0);
  const Vector g = score_contrib(p, 0.5, 0.5, Vector::Zero(0));
  ASSERT_EQ(g.size(), 3);
  EXPECT_NEAR(g[0], 0.3068528194400547, 1e-14);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(ScoreContrib, MatchesFiniteDifferenceOfLoglik) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 40; ++i) {
    const Point pt = random_point(gen, 1 + i % 2);
    const auto z = regressor_l(pt);
    const long double x = pt.x;
    const auto fd = oracle::fd_gradient([&](const oracle::VecL& e) { return oracle::loglik(e, x, z); },
                                        pt.params.to_vector().cast<long double>());
    const Vector g = score_contrib(pt.params, pt.x, pt.x_prev, pt.w);
    EXPECT_LT(rel_norm(g, fd.cast<double>()), 1e-6) << "point " << i;
  }
}

TEST(ScoreContrib, MatchesAnalyticOracle) {
  std::mt19937_64 gen(12);
  for (int i = 0; i < 40; ++i) {
    const Point pt = random_point(gen, 2);
    const auto ref = oracle::score(pt.params.to_vector().cast<long double>(), pt.x, regressor_l(pt));
    EXPECT_LT(rel_norm(score_contrib(pt.params, pt.x, pt.x_prev, pt.w), ref.cast<double>()), 1e-10);
  }
}

TEST(ScoreSum, RangesAndEmpty) {
  RngState rng(3);
  const ModelParams p = ModelParams::reference();
  const auto s = simulate_path(p, ExoAR1Spec{}, 50, rng);
  EXPECT_EQ(score_sum(p, s, 10, 9), Vector::Zero(4));
  EXPECT_EQ(score_sum(p, s, 7, 7), score_contrib(p, s.x[7], s.x[6], s.covariates(7)));
  Vector manual = Vector::Zero(4);
  for (std::size_t t = 1; t <= 50; ++t)
    manual += score_contrib(p, s.x[Eigen::Index(t)], s.x[Eigen::Index(t) - 1], s.covariates(t));
  EXPECT_LT((score_sum(p, s, 1, 50) - manual).norm(), 1e-10 * manual.norm());
  EXPECT_THROW(score_sum(p, s, 1, 51), DomainError);
  EXPECT_THROW(score_sum(p, s, 0, 3), DomainError);
}

TEST(HessianContrib, MatchesFiniteDifferenceOfScore) {
  std::mt19937_64 gen(13);
  for (int i = 0; i < 40; ++i) {
    const Point pt = random_point(gen, 1 + i % 2);
    const auto z = regressor_l(pt);
    const long double x = pt.x;
    const auto fd = oracle::fd_jacobian([&](const oracle::VecL& e) { return oracle::score(e, x, z); },
                                        pt.params.to_vector().cast<long double>());
    const Matrix h = hessian_contrib(pt.params, pt.x, pt.x_prev, pt.w);
    const Matrix ref = fd.cast<double>();
    EXPECT_LT((h - ref).norm() / ref.norm(), 1e-5) << "point " << i;
  }
}

TEST(HessianContrib, ExactlySymmetric) {
  std::mt19937_64 gen(14);
  for (int i = 0; i < 20; ++i) {
    const Point pt = random_point(gen, 3);
    const Matrix h = hessian_contrib(pt.params, pt.x, pt.x_prev, pt.w);
    EXPECT_EQ(h, h.transpose());
  }
}

TEST(HessianSum, NegativeMeanIsPositiveDefinite) {
  RngState rng(15);
  const ModelParams p = ModelParams::reference();
  const auto s = simulate_path(p, ExoAR1Spec{}, 10000, rng);
  const Matrix info = -hessian_sum(p, s) / 10000.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(info);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ScoreMoments, ZeroMeanAtTruth) {
  RngState rng(16);
  const ModelParams p = ModelParams::reference();
  const std::size_t n = 100000;
  const auto s = simulate_path(p, ExoAR1Spec{}, n, rng);
  Matrix g(4, Eigen::Index(n));
  for (std::size_t t = 1; t <= n; ++t)
    g.col(Eigen::Index(t) - 1) = score_contrib(p, s.x[Eigen::Index(t)], s.x[Eigen::Index(t) - 1], s.covariates(t));
  const Vector mean = g.rowwise().mean();
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double sd = std::sqrt((g.row(i).array() - mean[i]).square().sum() / double(n - 1));
    EXPECT_LT(std::abs(mean[i]), 4.0 * sd / std::sqrt(double(n))) << "component " << i;
  }
}

TEST(ScoreMoments, LogitAndLogComplementExpectations) {
  const int n = 100000;
  for (auto [a, b] : {std::pair{50.0, 50.0}, std::pair{2.0, 5.0}, std::pair{35.4, 64.6}}) {
    RngState rng(17);
    std::vector<double> lx(n), l1(n);
    for (int i = 0; i < n; ++i) {
      const double x = sample_beta(rng, a, b);
      lx[i] = logit(x);
      l1[i] = std::log1p(-x);
    }
    auto check = [&](const std::vector<double>& v, double want) {
      double m = 0, ss = 0;
      for (double e : v) m += e;
      m /= n;
      for (double e : v) ss += (e - m) * (e - m);
      const double se = std::sqrt(ss / (n - 1) / n);
      EXPECT_LT(std::abs(m - want), 4.0 * se) << a << "," << b;
    };
    check(lx, specfun::digamma(a) - specfun::digamma(b));
    check(l1, specfun::digamma(b) - specfun::digamma(a + b));
  }
}

TEST(ScoreMoments, FourthCentralMomentOfLogit) {
  const int n = 200000;
  const double a = 50.0, b = 50.0;
  RngState rng(18);
  std::vector<double> v(n);
  double mean = 0.0;
  for (auto& e : v) {
    e = logit(sample_beta(rng, a, b));
    mean += e;
  }
  mean /= n;
  double m4 = 0.0;
  for (double e : v) m4 += std::pow(e - mean, 4);
  m4 /= n;
  const double k2 = specfun::trigamma(a) + specfun::trigamma(b);
  const double want = specfun::polygamma3(a) + specfun::polygamma3(b) + 3.0 * k2 * k2;
  EXPECT_NEAR(m4 / want, 1.0, 0.05);
}

TEST(FitPmle, FromTruthConvergesQuickly) {
  RngState rng(19);
  const ModelParams truth = ModelParams::reference();
  const auto s = simulate_path(truth, ExoAR1Spec{}, 3000, rng);
  FitOptions opts;
  opts.initial_params = truth;
  const auto fit = fit_pmle(s, truth.xlink, opts);
  EXPECT_TRUE(fit.converged) << fit.message;
  EXPECT_LE(fit.score_norm_at_solution, opts.gradient_tolerance);
  EXPECT_LE(fit.iterations, 30);
  EXPECT_LE(score_sum(fit.params_hat, s, 1, 3000).cwiseAbs().maxCoeff(), opts.gradient_tolerance);
}

TEST(FitPmle, AutoStartRecoversTruth) {
  RngState rng(20);
  const ModelParams truth = ModelParams::reference();
  const auto s = simulate_path(truth, ExoAR1Spec{}, 3000, rng);
  const auto fit = fit_pmle(s, truth.xlink);
  ASSERT_TRUE(fit.converged) << fit.message;
  EXPECT_EQ(fit.m, 3000u);
  EXPECT_EQ(fit.dim(), 4);
  EXPECT_EQ(fit.info_matrix, fit.info_matrix.transpose());
  EXPECT_EQ(fit.asymptotic_cov, fit.asymptotic_cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(fit.asymptotic_cov);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  const Vector z = (fit.params_hat.to_vector() - truth.to_vector()).cwiseQuotient(fit.asymptotic_sd());
  EXPECT_LT(z.cwiseAbs().maxCoeff(), 4.0);
  EXPECT_NEAR((fit.info_matrix * fit.asymptotic_cov * 3000.0 - Matrix::Identity(4, 4)).norm(), 0.0, 1e-8);
  EXPECT_DOUBLE_EQ(fit.aic(), 8.0 - 2.0 * fit.loglik);
  EXPECT_NEAR(fit.loglik, partial_loglik(fit.params_hat, s), 1e-9 * std::abs(fit.loglik));
}

TEST(FitPmle, IdentityLinkAndCloglog) {
  for (auto kind : {XLinkKind::identity, XLinkKind::truncated_cloglog}) {
    ModelParams truth = ModelParams::reference();
    truth.xlink = XLink{kind, 0.01};
    truth.phi1 = 0.8;
    RngState rng(21);
    const auto s = simulate_path(truth, ExoAR1Spec{}, 2000, rng);
    const auto fit = fit_pmle(s, truth.xlink);
    EXPECT_TRUE(fit.converged) << to_string(kind) << ": " << fit.message;
    EXPECT_NEAR(fit.params_hat.phi1, 0.8, 5.0 * fit.asymptotic_sd()[2]);
  }
}

TEST(FitPmle, SingularInformationRaises) {
  RngState rng(22);
  ModelParams truth = ModelParams::reference();
  truth.exo_coefs = Vector::Zero(1);
  CovariateMatrix w = CovariateMatrix::Ones(200, 1);
  const auto s = simulate_path(truth, w, 0.4, rng);
  EXPECT_THROW(fit_pmle(s, truth.xlink), NumericalError);
}

TEST(FitPmle, TooFewTransitions) {
  RngState rng(23);
  const auto s = simulate_path(ModelParams::reference(), ExoAR1Spec{}, 5, rng);
  EXPECT_THROW(fit_pmle(s, XLink{}), DomainError);
  FitOptions bad;
  bad.gradient_tolerance = 0.0;
  const auto s2 = simulate_path(ModelParams::reference(), ExoAR1Spec{}, 50, rng);
  EXPECT_THROW(fit_pmle(s2, XLink{}, bad), DomainError);
}

TEST(FitPmle, IterationCapFlagsNonConvergence) {
  RngState rng(24);
  const auto s = simulate_path(ModelParams::reference(), ExoAR1Spec{}, 1000, rng);
  FitOptions opts;
  opts.max_iterations = 1;
  ModelParams far = ModelParams::reference();
  far.tau = 3.0;
  far.phi0 = 1.5;
  opts.initial_params = far;
  const auto fit = fit_pmle(s, XLink{}, opts);
  EXPECT_FALSE(fit.converged);
  EXPECT_FALSE(fit.message.empty());
}

TEST(QQ, NormalInputsTrackDiagonal) {
  std::mt19937_64 gen(25);
  std::normal_distribution<double> n01;
  std::vector<double> v(1000);
  for (auto& e : v) e = n01(gen);
  const auto q = qq_pairs(v, "z");
  ASSERT_EQ(q.points.size(), 1000u);
  double gap = 0.0;
  for (auto [t, s] : q.points) gap = std::max(gap, std::abs(t - s));
  // Extreme order statistics wander; the band applies to the central 98%.
  double central_gap = 0.0;
  for (std::size_t i = 10; i < 990; ++i)
    central_gap = std::max(central_gap, std::abs(q.points[i].first - q.points[i].second));
  EXPECT_LT(central_gap, 0.2);
  EXPECT_NEAR(q.slope, 1.0, 0.1);
}

TEST(QQ, ConstantInputsAreFlat) {
  const auto q = qq_pairs(std::vector<double>(50, 1.5));
  for (auto [t, s] : q.points) EXPECT_EQ(s, 1.5);
  EXPECT_NEAR(q.slope, 0.0, 1e-12);
  EXPECT_NEAR(q.intercept, 1.5, 1e-12);
}

TEST(QQ, ExportNeedsThirtyFitsAndStandardizes) {
  std::vector<FitResult> fits(10);
  EXPECT_THROW(qq_export(fits, ModelParams::reference()), DomainError);
  std::mt19937_64 gen(26);
  std::normal_distribution<double> n01;
  const ModelParams truth = ModelParams::reference();
  fits.assign(400, FitResult{});
  const Vector sd = Vector::Constant(4, 0.5);
  for (auto& f : fits) {
    Vector eta = truth.to_vector();
    for (Eigen::Index i = 0; i < 4; ++i) eta[i] += sd[i] * n01(gen);
    f.params_hat = ModelParams::from_vector(eta, truth.xlink);
    f.asymptotic_cov = Matrix(sd.array().square().matrix().asDiagonal());
  }
  const auto series = qq_export(fits, truth);
  ASSERT_EQ(series.size(), 4u);
  EXPECT_EQ(series[0].parameter, "tau");
  EXPECT_EQ(series[3].parameter, "phi_1");
  for (const auto& q : series) EXPECT_NEAR(q.slope, 1.0, 0.2);
}
