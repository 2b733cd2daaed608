#pragma once

// Seedable random streams and the draws used by every simulation in the
// library.
//
// An RngState is identified by (seed, stream_id). The engine is seeded from
// both words through std::seed_seq, so replication r of a study can own
// stream r and results do not depend on how replications are scheduled
// across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "betaar/errors.hpp"

namespace betaar {

class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x62657461u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  // Independent child stream, e.g. one per replication.
  RngState substream(std::uint64_t index) const {
    return RngState(seed_ ^ 0x9e3779b97f4a7c15ULL * (stream_id_ + 1), index);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

  double uniform() { return unit_(engine_); }

  // Uniform on the open interval (0,1).
  double uniform_open() {
    double u;
    do {
      u = unit_(engine_);
    } while (u == 0.0);
    return u;
  }

  double standard_normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Smallest and largest values a Beta draw may take. Exact 0 or 1 would make
// log X or log(1 - X) in the likelihood infinite.
inline constexpr double kUnitFloor = 0x1p-53;
inline constexpr double kUnitCeil = 1.0 - 0x1p-53;

inline double clamp_unit(double x) {
  return x < kUnitFloor ? kUnitFloor : (x > kUnitCeil ? kUnitCeil : x);
}

inline double sample_normal(RngState& rng, double mean, double sd) {
  detail::require(sd > 0.0 && std::isfinite(sd), "sample_normal: sd must be > 0");
  return mean + sd * rng.standard_normal();
}

// log of a Gamma(shape, 1) draw. For shape < 1 the augmentation
// G(a) = G(a+1) U^(1/a) is applied in log space so tiny shapes never
// underflow to log(0).
inline double sample_log_gamma(RngState& rng, double shape) {
  detail::require(shape > 0.0 && std::isfinite(shape), "sample_gamma: shape must be > 0");
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng.engine()));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  return std::log(g(rng.engine())) + std::log(rng.uniform_open()) / shape;
}

inline double sample_gamma(RngState& rng, double shape) {
  return std::exp(sample_log_gamma(rng, shape));
}

// Beta(alpha, beta) as G_a / (G_a + G_b), evaluated as a logistic of the log
// ratio; the result is clamped to [2^-53, 1 - 2^-53].
inline double sample_beta(RngState& rng, double alpha, double beta) {
  detail::require(alpha > 0.0 && beta > 0.0 && std::isfinite(alpha) && std::isfinite(beta),
                  "sample_beta: shapes must be finite and > 0");
  const double la = sample_log_gamma(rng, alpha);
  const double lb = sample_log_gamma(rng, beta);
  return clamp_unit(1.0 / (1.0 + std::exp(lb - la)));
}

struct ExoAR1Spec {
  double coefficient = -0.1;
  double noise_sd = 1.0;
  double lower = -10.0;
  double upper = 10.0;

  void validate() const {
    detail::require(std::abs(coefficient) < 1.0, "ExoAR1Spec: |coefficient| must be < 1");
    detail::require(noise_sd > 0.0, "ExoAR1Spec: noise_sd must be > 0");
    detail::require(lower < upper, "ExoAR1Spec: lower must be < upper");
  }

  double clip(double w) const { return w < lower ? lower : (w > upper ? upper : w); }
};

enum class ExoStart { zero, stationary };

// Streaming AR(1) covariate: the recursion runs on the unclipped state and
// only the emitted value is clipped.
class ExoAR1Process {
 public:
  ExoAR1Process(const ExoAR1Spec& spec, RngState& rng, ExoStart start = ExoStart::zero)
      : spec_(spec) {
    spec_.validate();
    if (start == ExoStart::stationary) {
      const double sd = spec_.noise_sd / std::sqrt(1.0 - spec_.coefficient * spec_.coefficient);
      state_ = sd * rng.standard_normal();
    }
  }

  double next(RngState& rng) {
    state_ = spec_.coefficient * state_ + spec_.noise_sd * rng.standard_normal();
    return spec_.clip(state_);
  }

  double state() const noexcept { return state_; }

 private:
  ExoAR1Spec spec_;
  double state_ = 0.0;
};

inline std::vector<double> simulate_exo_path(RngState& rng, const ExoAR1Spec& spec, std::size_t n,
                                             ExoStart start = ExoStart::zero) {
  spec.validate();
  detail::require(n >= 1, "simulate_exo_path: n must be >= 1");
  ExoAR1Process proc(spec, rng, start);
  std::vector<double> out(n);
  for (auto& w : out) w = proc.next(rng);
  return out;
}

// Zero-mean Gaussian vectors with a fixed PSD covariance. The factor is
// V diag(sqrt(lambda)) from a symmetric eigendecomposition, so singular
// covariances are accepted.
class MvnSampler {
 public:
  explicit MvnSampler(const Eigen::MatrixXd& cov) {
    detail::require(cov.rows() == cov.cols() && cov.rows() > 0,
                    "sample_mvn: covariance must be square and non-empty");
    const double scale = cov.cwiseAbs().maxCoeff();
    detail::require(cov.allFinite(), "sample_mvn: covariance must be finite");
    detail::require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + scale),
                    "sample_mvn: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10 * std::max(scale, 1e-300)) {
      throw DomainError("sample_mvn: covariance is not positive semi-definite");
    }
    factor_ = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    z_.resize(cov.rows());
  }

  Eigen::Index dim() const noexcept { return factor_.rows(); }

  void draw(RngState& rng, Eigen::Ref<Eigen::VectorXd> out) {
    for (Eigen::Index i = 0; i < z_.size(); ++i) z_[i] = rng.standard_normal();
    out.noalias() = factor_ * z_;
  }

  Eigen::VectorXd draw(RngState& rng) {
    Eigen::VectorXd out(dim());
    draw(rng, out);
    return out;
  }

  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

 private:
  Eigen::MatrixXd factor_;
  Eigen::VectorXd z_;
};

inline Eigen::VectorXd sample_mvn(RngState& rng, const Eigen::MatrixXd& cov) {
  return MvnSampler(cov).draw(rng);
}

}  // namespace betaar
