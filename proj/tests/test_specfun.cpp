#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "betaar/specfun.hpp"

using namespace betaar;
using namespace betaar::specfun;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEulerGamma = 0.57721566490153286061;

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> xs;
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) xs.push_back(std::exp(a + (b - a) * i / (n - 1)));
  return xs;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), std::numeric_limits<double>::min());
}

}  // namespace

TEST(LogGamma, Examples) {
  EXPECT_EQ(log_gamma(1.0), 0.0);
  EXPECT_EQ(log_gamma(2.0), 0.0);
  EXPECT_LT(rel_err(log_gamma(5.0), std::log(24.0)), 1e-14);
  EXPECT_LT(rel_err(log_gamma(5.0), 3.1780538303479456196), 1e-14);
}

TEST(LogGamma, MatchesLongDoubleReferenceOnGrid) {
  for (double x : log_grid(1e-8, 1e8, 400)) {
    const long double ref = std::lgamma(static_cast<long double>(x));
    // Relative error is meaningless at the zeros x = 1, 2; use an absolute
    // floor there.
    const double tol = 1e-12 * std::max(1.0, std::abs(static_cast<double>(ref)));
    EXPECT_NEAR(log_gamma(x), static_cast<double>(ref), tol) << "x=" << x;
  }
}

TEST(LogGamma, DomainErrors) {
  EXPECT_THROW(log_gamma(0.0), DomainError);
  EXPECT_THROW(log_gamma(-1.0), DomainError);
  EXPECT_THROW(log_gamma(std::numeric_limits<double>::quiet_NaN()), DomainError);
  EXPECT_THROW(log_gamma(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(Digamma, ClosedForms) {
  EXPECT_LT(rel_err(digamma(1.0), -kEulerGamma), 1e-14);
  EXPECT_LT(rel_err(digamma(2.0), 1.0 - kEulerGamma), 1e-14);
  EXPECT_LT(rel_err(digamma(0.5), -kEulerGamma - 2.0 * std::log(2.0)), 1e-14);
}

TEST(Digamma, MatchesBoostOnGrid) {
  for (double x : log_grid(1e-6, 1e8, 500)) {
    const double ref = static_cast<double>(boost::math::digamma(static_cast<long double>(x)));
    EXPECT_NEAR(digamma(x), ref, 1e-12 * std::abs(ref) + 1e-15) << "x=" << x;
  }
}

TEST(Digamma, RecurrenceOnLogGrid) {
  for (double x : log_grid(0.1, 1e6, 300)) {
    const double lhs = digamma(x + 1.0) - digamma(x);
    const double scale = std::max({std::abs(digamma(x)), std::abs(digamma(x + 1.0)), 1.0 / x});
    EXPECT_LE(std::abs(lhs - 1.0 / x), 1e-12 * scale) << "x=" << x;
  }
}

TEST(Digamma, DomainErrors) {
  EXPECT_THROW(digamma(0.0), DomainError);
  EXPECT_THROW(digamma(-2.5), DomainError);
}

TEST(Trigamma, ClosedForms) {
  EXPECT_LT(rel_err(trigamma(1.0), kPi * kPi / 6.0), 1e-14);
  EXPECT_LT(rel_err(trigamma(0.5), kPi * kPi / 2.0), 1e-14);
  EXPECT_LT(rel_err(trigamma(2.0), kPi * kPi / 6.0 - 1.0), 1e-13);
}

TEST(Trigamma, MatchesBoostAndIsPositive) {
  for (double x : log_grid(1e-6, 1e8, 500)) {
    const double ref = static_cast<double>(boost::math::trigamma(static_cast<long double>(x)));
    EXPECT_GT(trigamma(x), 0.0);
    EXPECT_LT(rel_err(trigamma(x), ref), 1e-10) << "x=" << x;
  }
}

TEST(Trigamma, MatchesFiniteDifferenceOfDigamma) {
  const double h = 1e-5;
  for (double x : log_grid(0.5, 100.0, 60)) {
    const double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
    EXPECT_LT(rel_err(trigamma(x), fd), 1e-5) << "x=" << x;
  }
}

TEST(Trigamma, Recurrence) {
  for (double x : log_grid(0.1, 1e6, 300)) {
    const double lhs = trigamma(x + 1.0) - trigamma(x);
    const double scale = std::max({trigamma(x), trigamma(x + 1.0), 1.0 / (x * x)});
    EXPECT_LE(std::abs(lhs + 1.0 / (x * x)), 1e-12 * scale) << "x=" << x;
  }
}

TEST(Polygamma3, ClosedForms) {
  const double pi4 = std::pow(kPi, 4);
  EXPECT_LT(rel_err(polygamma3(1.0), pi4 / 15.0), 1e-13);
  EXPECT_LT(rel_err(polygamma3(2.0), pi4 / 15.0 - 6.0), 1e-12);
}

TEST(Polygamma3, LargeArgumentAsymptotics) {
  const double x = 100.0;
  const double three_terms = 2.0 / std::pow(x, 3) + 3.0 / std::pow(x, 4) + 2.0 / std::pow(x, 5);
  EXPECT_LT(rel_err(polygamma3(x), three_terms), 1e-4);
  EXPECT_NEAR(polygamma3(x) * x * x * x / 2.0, 1.0, 0.02);
  EXPECT_NEAR(polygamma3(1e6) * 1e18 / 2.0, 1.0, 1e-5);
}

TEST(Polygamma3, PositiveDecreasingAndMatchesBoost) {
  double prev = std::numeric_limits<double>::infinity();
  for (double x : log_grid(1e-3, 1e6, 400)) {
    const double v = polygamma3(x);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, prev) << "x=" << x;
    prev = v;
    const double ref = static_cast<double>(boost::math::polygamma(3, static_cast<long double>(x)));
    EXPECT_LT(rel_err(v, ref), 1e-8) << "x=" << x;
  }
}

TEST(Polygamma3, Recurrence) {
  for (double x : log_grid(0.1, 1e4, 200)) {
    const double lhs = polygamma3(x) - polygamma3(x + 1.0);
    const double scale = std::max(polygamma3(x), 6.0 / std::pow(x, 4));
    EXPECT_LE(std::abs(lhs - 6.0 / std::pow(x, 4)), 1e-12 * scale) << "x=" << x;
  }
}

TEST(LogBeta, ExamplesAndSymmetry) {
  EXPECT_EQ(log_beta(1.0, 1.0), 0.0);
  EXPECT_LT(rel_err(log_beta(2.0, 3.0), std::log(1.0 / 12.0)), 1e-14);
  for (double a : log_grid(1e-3, 1e5, 25)) {
    for (double b : log_grid(2e-3, 3e4, 25)) {
      EXPECT_EQ(log_beta(a, b), log_beta(b, a));
    }
  }
  EXPECT_THROW(log_beta(0.0, 1.0), DomainError);
  EXPECT_THROW(log_beta(1.0, -1.0), DomainError);
}
