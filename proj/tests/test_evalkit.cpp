#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/special_functions/beta.hpp>

#include "betaar/evalkit.hpp"
#include "betaar/inference.hpp"

using namespace betaar;

TEST(IncompleteBeta, MatchesBoostOnGrid) {
  for (double a : {0.05, 0.5, 1.0, 2.5, 35.4, 64.6, 500.0}) {
    for (double b : {0.05, 0.7, 1.0, 3.0, 64.6, 900.0}) {
      for (int i = 0; i <= 40; ++i) {
        const double x = i / 40.0;
        EXPECT_NEAR(incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-12)
            << a << "," << b << "," << x;
      }
    }
  }
}

TEST(IncompleteBeta, ClosedFormsAndErrors) {
  EXPECT_NEAR(incomplete_beta(1.0, 1.0, 0.3), 0.3, 1e-15);
  EXPECT_NEAR(incomplete_beta(2.0, 2.0, 0.5), 0.5, 1e-15);
  EXPECT_NEAR(incomplete_beta(1.0, 3.0, 0.2), 1.0 - std::pow(0.8, 3), 1e-15);
  EXPECT_THROW(incomplete_beta(0.0, 1.0, 0.5), DomainError);
  EXPECT_THROW(incomplete_beta(1.0, 1.0, 1.5), DomainError);
}

TEST(BetaQuantile, MatchesBoostInverse) {
  for (double a : {0.5, 2.0, 35.4, 200.0}) {
    for (double b : {0.5, 3.0, 64.6}) {
      for (double p : {0.005, 0.05, 0.25, 0.5, 0.9, 0.95, 0.999}) {
        EXPECT_NEAR(beta_quantile(p, a, b), boost::math::ibeta_inv(a, b, p), 1e-9)
            << a << "," << b << "," << p;
      }
    }
  }
}

TEST(OneStepForecast, UniformInterval) {
  ModelParams p;
  p.tau = 2.0;
  p.exo_coefs = Vector::Zero(0);
  const auto f = one_step_forecast(p, 0.3, Vector::Zero(0), 0.1);
  EXPECT_EQ(f.mu_hat, 0.5);
  EXPECT_NEAR(f.lower, 0.05, 1e-9);
  EXPECT_NEAR(f.upper, 0.95, 1e-9);
}

TEST(OneStepForecast, ReferenceModelInterval) {
  const ModelParams p = ModelParams::reference();
  const auto f = one_step_forecast(p, 0.5, Vector::Zero(1), 0.1);
  EXPECT_NEAR(f.mu_hat, 0.3543436937742045, 1e-15);
  EXPECT_LT(f.upper - f.lower, 0.2);
  EXPECT_TRUE(f.covers(f.mu_hat));
  const double a = p.tau * f.mu_hat, b = p.tau - a;
  EXPECT_NEAR(boost::math::ibeta(a, b, f.lower), 0.05, 1e-8);
  EXPECT_NEAR(boost::math::ibeta(a, b, f.upper), 0.95, 1e-8);
}

TEST(OneStepForecast, NestedAsAlphaDecreases) {
  const ModelParams p = ModelParams::reference();
  ForecastPoint prev = one_step_forecast(p, 0.4, Vector::Constant(1, 0.3), 0.5);
  for (double alpha : {0.2, 0.1, 0.05, 0.01, 0.001}) {
    const auto f = one_step_forecast(p, 0.4, Vector::Constant(1, 0.3), alpha);
    EXPECT_LT(f.lower, prev.lower);
    EXPECT_GT(f.upper, prev.upper);
    prev = f;
  }
  EXPECT_THROW(one_step_forecast(p, 0.4, Vector::Zero(1), 0.0), DomainError);
  EXPECT_THROW(one_step_forecast(p, 0.4, Vector::Zero(1), 1.0), DomainError);
}

TEST(ForecastMetrics, PerfectForecasts) {
  const std::vector<double> actual{0.1, 0.5, 0.9};
  std::vector<ForecastPoint> fc;
  for (double x : actual) fc.push_back({x, 0.0, 1.0});
  const auto m = forecast_metrics(actual, fc);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(*m.mape, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.cp, 100.0);
}

TEST(ForecastMetrics, HandExample) {
  const auto m = forecast_metrics({0.2, 0.4}, {{0.3, 0.0, 0.25}, {0.2, 0.1, 0.5}});
  EXPECT_NEAR(m.mae, 0.15, 1e-15);
  EXPECT_NEAR(m.rmse, std::sqrt(0.025), 1e-15);
  EXPECT_NEAR(*m.mape, 50.0, 1e-12);
  EXPECT_EQ(m.cp, 100.0);
}

TEST(ForecastMetrics, ErrorsAndInvariants) {
  try {
    forecast_metrics({0.2, 0.0, 0.3}, std::vector<ForecastPoint>(3));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  EXPECT_NO_THROW(forecast_metrics({0.2, 0.0}, std::vector<ForecastPoint>(2), false));
  EXPECT_THROW(forecast_metrics({}, {}), DomainError);
  EXPECT_THROW(forecast_metrics({0.1}, std::vector<ForecastPoint>(2)), DomainError);

  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> actual(200);
  std::vector<ForecastPoint> fc(200);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    actual[i] = u(gen);
    const double c = u(gen);
    fc[i] = {c, c - 0.2, c + 0.2};
  }
  const auto m = forecast_metrics(actual, fc);
  EXPECT_GE(m.rmse, m.mae);
  std::vector<std::size_t> perm(actual.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<double> a2;
  std::vector<ForecastPoint> f2;
  for (auto i : perm) {
    a2.push_back(actual[i]);
    f2.push_back(fc[i]);
  }
  EXPECT_EQ(forecast_metrics(a2, f2).cp, m.cp);
}

TEST(ForecastMetrics, CoverageOnSimulatedData) {
  RngState rng(2);
  const ModelParams truth = ModelParams::reference();
  const auto s = simulate_path(truth, ExoAR1Spec{}, 1000, rng);
  const auto fc = forecast_series(truth, s, 1, 1000, 0.1);
  std::vector<double> actual(s.x.data() + 1, s.x.data() + 1001);
  const auto m = forecast_metrics(actual, fc);
  EXPECT_GE(m.cp, 87.0);
  EXPECT_LE(m.cp, 93.0);
}

TEST(DetectionMetrics, Examples) {
  std::vector<std::optional<std::size_t>> all(10, std::size_t{51});
  auto s = detection_metrics(all, 50);
  EXPECT_DOUBLE_EQ(*s.mean_delay, 1.0);
  EXPECT_EQ(s.rejection_rate, 1.0);
  EXPECT_EQ(s.sensitivity, 1.0);

  std::vector<std::optional<std::size_t>> none(7);
  s = detection_metrics(none, 50);
  EXPECT_FALSE(s.mean_delay.has_value());
  EXPECT_EQ(s.rejection_rate, 0.0);
  EXPECT_EQ(s.sensitivity, 0.0);

  std::vector<std::optional<std::size_t>> mixed{std::size_t{10}, std::size_t{100}, std::nullopt,
                                                std::size_t{50}};
  s = detection_metrics(mixed, 50);
  EXPECT_DOUBLE_EQ(*s.mean_delay, (10.0 + 100.0 + 50.0) / 3.0 - 50.0);
  EXPECT_DOUBLE_EQ(s.rejection_rate, 0.75);
  EXPECT_DOUBLE_EQ(s.sensitivity, 0.25);
  EXPECT_LE(s.sensitivity, s.rejection_rate);

  EXPECT_THROW(detection_metrics(std::vector<std::optional<std::size_t>>{}, 50), DomainError);
  EXPECT_THROW(detection_metrics(std::vector<MonitorState>{}, 50), DomainError);
}

TEST(Aic, Definition) {
  EXPECT_DOUBLE_EQ(aic(100.0, 1), 8.0 - 200.0);
  EXPECT_DOUBLE_EQ(aic(-3.5, 0), 6.0 + 7.0);
}
