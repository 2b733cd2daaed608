#pragma once

// Replication studies: estimator consistency, threshold calibration,
// empirical size and power of the monitoring scheme, and forecast
// evaluation under different x-links. Replication r always draws from
// RngState(seed, r), so results are identical for any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "betaar/detector.hpp"
#include "betaar/evalkit.hpp"
#include "betaar/inference.hpp"
#include "betaar/model.hpp"
#include "betaar/parallel.hpp"
#include "betaar/rng.hpp"

namespace betaar::experiments {

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string sig(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

inline std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

struct Report {
  std::string markdown;
  std::string csv;
};

// Information matrix (1/n) sum(-hessian_contrib) at the estimate from one
// long simulated path; the reference Sigma_0 for rescaling and calibration.
inline Matrix reference_information(const ModelParams& params, std::size_t n, std::uint64_t seed,
                                    const ExoAR1Spec& exo = {}) {
  RngState rng(seed, 0xfeedULL);
  const auto path = simulate_path(params, exo, n, rng);
  FitOptions opts;
  opts.initial_params = params;
  const auto fit = fit_pmle(path, params.xlink, opts);
  if (!fit.converged) throw NumericalError("reference_information: fit did not converge: " + fit.message);
  return fit.info_matrix;
}

// --- consistency ----------------------------------------------------------

struct ConsistencyConfig {
  ModelParams params = ModelParams::reference();
  ExoAR1Spec exo;
  std::vector<std::size_t> m_values{1000, 2000, 3000};
  std::size_t reps = 100;
  std::size_t burn_in = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct ConsistencyRow {
  std::size_t m = 0;
  Vector mse;
  Vector mean;
  std::size_t fits = 0;
  std::size_t not_converged = 0;
  std::size_t failed = 0;
  std::vector<FitResult> results;  // successful fits, in replication order
};

struct ConsistencyResult {
  ConsistencyConfig config;
  std::vector<ConsistencyRow> rows;
};

inline ConsistencyResult run_consistency(const ConsistencyConfig& cfg) {
  cfg.params.validate();
  betaar::detail::require(!cfg.m_values.empty(), "consistency: no sample sizes");
  betaar::detail::require(cfg.reps >= 1, "consistency: reps must be >= 1");
  ConsistencyResult out;
  out.config = cfg;
  const Vector eta0 = cfg.params.to_vector();
  for (std::size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
    const std::size_t m = cfg.m_values[mi];
    std::vector<std::optional<FitResult>> fits(cfg.reps);
    parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
      RngState rng(cfg.seed, (static_cast<std::uint64_t>(mi) << 32) | r);
      SimulateOptions opts;
      opts.burn_in = cfg.burn_in;
      const auto path = simulate_path(cfg.params, cfg.exo, m, rng, opts);
      try {
        fits[r] = fit_pmle(path, cfg.params.xlink);
      } catch (const NumericalError&) {
        fits[r].reset();
      }
    });
    ConsistencyRow row;
    row.m = m;
    row.mse = Vector::Zero(eta0.size());
    row.mean = Vector::Zero(eta0.size());
    for (auto& f : fits) {
      if (!f) {
        ++row.failed;
        continue;
      }
      if (!f->converged) ++row.not_converged;
      const Vector e = f->params_hat.to_vector();
      row.mse += (e - eta0).array().square().matrix();
      row.mean += e;
      row.results.push_back(std::move(*f));
    }
    row.fits = row.results.size();
    if (row.fits > 0) {
      row.mse /= static_cast<double>(row.fits);
      row.mean /= static_cast<double>(row.fits);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline Report consistency_report(const ConsistencyResult& r) {
  const auto names = parameter_names(r.config.params.num_covariates());
  Report rep;
  std::ostringstream md, csv;
  md << "## PMLE consistency: MSE of each estimate\n\n";
  md << "True parameters: " << r.config.params.to_vector().transpose() << "; x-link "
     << to_string(r.config.params.xlink.kind) << " (c = " << r.config.params.xlink.trunc_c << "); "
     << r.config.reps << " replications per m; seed " << r.config.seed << ".\n\n";
  md << "| MSE |";
  for (const auto& n : names) md << ' ' << n << " |";
  md << " fits | not converged | failed |\n|---|";
  for (std::size_t i = 0; i < names.size() + 3; ++i) md << "---|";
  md << '\n';
  csv << "m";
  for (const auto& n : names) csv << ",mse_" << n;
  for (const auto& n : names) csv << ",mean_" << n;
  csv << ",fits,not_converged,failed\n";
  for (const auto& row : r.rows) {
    md << "| m = " << row.m << " |";
    for (Eigen::Index i = 0; i < row.mse.size(); ++i) md << ' ' << detail::sig(row.mse[i], 5) << " |";
    md << ' ' << row.fits << " | " << row.not_converged << " | " << row.failed << " |\n";
    csv << row.m;
    for (Eigen::Index i = 0; i < row.mse.size(); ++i) csv << ',' << detail::full(row.mse[i]);
    for (Eigen::Index i = 0; i < row.mean.size(); ++i) csv << ',' << detail::full(row.mean[i]);
    csv << ',' << row.fits << ',' << row.not_converged << ',' << row.failed << '\n';
  }
  rep.markdown = md.str();
  rep.csv = csv.str();
  return rep;
}

// Q-Q data for the fits of one row, standardized by the reference
// covariance info^{-1} / m.
inline std::string qq_csv(const ConsistencyRow& row, const ModelParams& truth, const Matrix& reference_info) {
  const Matrix cov = reference_info.inverse() / static_cast<double>(row.m);
  const auto series = qq_export(row.results, truth, &cov);
  std::ostringstream os;
  os << "parameter,theoretical,sample\n";
  for (const auto& s : series)
    for (const auto& [t, v] : s.points) os << s.parameter << ',' << detail::full(t) << ',' << detail::full(v) << '\n';
  return os.str();
}

// --- thresholds -----------------------------------------------------------

struct ThresholdsConfig {
  std::vector<double> gammas{0.0, 0.25, 0.4};
  std::vector<double> alphas{0.1, 0.05, 0.025, 0.01};
  CalibrationSettings calibration;
  std::uint64_t seed = 1;
};

// Calibrates with Wiener covariance sigma and A = sigma^{-1}.
inline ThresholdTable run_thresholds(const ThresholdsConfig& cfg, const Matrix& sigma,
                                     const std::string& sigma_source) {
  return calibrate_table(sigma, sigma.inverse(), cfg.gammas, cfg.alphas, cfg.calibration, cfg.seed, sigma_source);
}

inline Report thresholds_report(const ThresholdTable& t) {
  Report rep;
  std::ostringstream md, csv;
  md << "## Thresholds c(gamma, alpha)\n\n";
  md << "N = " << t.meta.horizon_N << ", d = " << t.meta.dimension << ", " << t.meta.replications
     << " replications, grid m = " << t.meta.m_grid << ", seed " << t.meta.seed;
  if (!t.meta.sigma_source.empty()) md << ", Sigma from " << t.meta.sigma_source;
  md << ".\n\n| gamma \\ alpha |";
  const auto alphas = t.alphas();
  std::vector<double> by_desc(alphas.rbegin(), alphas.rend());
  for (double a : by_desc) md << ' ' << a << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < by_desc.size(); ++i) md << "---|";
  md << '\n';
  csv << "gamma,alpha,c\n";
  for (double g : t.gammas()) {
    md << "| " << g << " |";
    for (double a : by_desc) {
      const auto c = t.find(g, a);
      md << ' ' << (c ? detail::fixed(*c, 4) : std::string("-")) << " |";
      if (c) csv << g << ',' << a << ',' << detail::full(*c) << '\n';
    }
    md << '\n';
  }
  rep.markdown = md.str();
  rep.csv = csv.str();
  return rep;
}

// --- monitoring studies (size and power) ----------------------------------

enum class RescaleMode { reference, fit };

struct MonitoringConfig {
  ModelParams params = ModelParams::reference();
  ExoAR1Spec exo;
  std::size_t m = 1000;
  double horizon_N = 3.0;
  std::vector<double> gammas{0.0};
  std::vector<double> alphas{0.05};
  std::size_t reps = 1000;
  std::size_t burn_in = 500;
  // Parameters after the change; no change when empty.
  std::optional<ModelParams> changed_params;
  std::size_t k_star = 50;
  RescaleMode rescale = RescaleMode::reference;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct MonitoringRun {
  bool ok = false;
  // k_detect[g][a]
  std::vector<std::vector<std::optional<std::size_t>>> k_detect;
};

struct MonitoringResult {
  MonitoringConfig config;
  ThresholdTable thresholds;
  std::vector<MonitoringRun> runs;
  std::size_t failed = 0;

  // First-crossing indices over successful runs for one (gamma, alpha).
  std::vector<std::optional<std::size_t>> detections(std::size_t g, std::size_t a) const {
    std::vector<std::optional<std::size_t>> out;
    for (const auto& r : runs)
      if (r.ok) out.push_back(r.k_detect[g][a]);
    return out;
  }

  double rejection_rate(std::size_t g, std::size_t a) const {
    const auto d = detections(g, a);
    if (d.empty()) return 0.0;
    return static_cast<double>(std::count_if(d.begin(), d.end(), [](auto& k) { return k.has_value(); })) /
           static_cast<double>(d.size());
  }

  DetectionSummary summary(std::size_t g, std::size_t a) const {
    return detection_metrics(detections(g, a), config.k_star);
  }
};

// Simulates m + N m transitions per replication, fits on the first m and
// scans the remaining N m. With `changed_params`, transitions after m + k*
// follow the changed parameters.
inline MonitoringResult run_monitoring(const MonitoringConfig& cfg, const ThresholdTable& thresholds,
                                       const Matrix& reference_info) {
  cfg.params.validate();
  if (cfg.changed_params) cfg.changed_params->validate();
  betaar::detail::require(cfg.reps >= 1, "monitoring study: reps must be >= 1");
  for (double g : cfg.gammas) WeightConfig{g, cfg.horizon_N}.validate();
  for (double g : cfg.gammas)
    for (double a : cfg.alphas) (void)thresholds.at(g, a);
  const std::size_t steps = WeightConfig{0.0, cfg.horizon_N}.max_steps(cfg.m);
  betaar::detail::require(steps >= 1, "monitoring study: N m must be >= 1");
  const Matrix ref_A = reference_info.inverse();

  MonitoringResult out;
  out.config = cfg;
  out.thresholds = thresholds;
  out.runs.resize(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    RngState rng(cfg.seed, r);
    BetaAR1Simulator sim(cfg.params, cfg.exo, rng);
    sim.burn_in(rng, cfg.burn_in);
    const std::size_t n = cfg.m + steps;
    SeriesSample path;
    path.x.resize(static_cast<Eigen::Index>(n) + 1);
    path.w.resize(static_cast<Eigen::Index>(n), cfg.params.num_covariates());
    path.x[0] = sim.current();
    for (std::size_t t = 1; t <= n; ++t) {
      if (cfg.changed_params && t == cfg.m + cfg.k_star + 1) sim.set_params(*cfg.changed_params);
      path.x[static_cast<Eigen::Index>(t)] = sim.step(rng);
      path.w.row(static_cast<Eigen::Index>(t) - 1) = sim.last_covariates().transpose();
    }
    MonitoringRun run;
    try {
      const auto fit = fit_pmle(path.slice(0, cfg.m), cfg.params.xlink);
      if (!fit.converged) {
        out.runs[r] = run;
        return;
      }
      const Matrix A = cfg.rescale == RescaleMode::reference ? ref_A : default_rescale(fit);
      const auto q = quadratic_form_path(fit.params_hat, path, cfg.m, A, steps);
      run.k_detect.assign(cfg.gammas.size(), std::vector<std::optional<std::size_t>>(cfg.alphas.size()));
      for (std::size_t g = 0; g < cfg.gammas.size(); ++g)
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a)
          run.k_detect[g][a] = first_crossing(q, cfg.m, cfg.gammas[g], thresholds.at(cfg.gammas[g], cfg.alphas[a]));
      run.ok = true;
    } catch (const NumericalError&) {
      run.ok = false;
    }
    out.runs[r] = std::move(run);
  });
  out.failed = static_cast<std::size_t>(std::count_if(out.runs.begin(), out.runs.end(), [](auto& r) { return !r.ok; }));
  return out;
}

inline Report size_report(const MonitoringResult& r) {
  Report rep;
  std::ostringstream md, csv;
  const auto& c = r.config;
  md << "## Empirical size (no change)\n\n";
  md << "m = " << c.m << ", N = " << c.horizon_N << ", " << (c.reps - r.failed) << " of " << c.reps
     << " replications usable, A from " << (c.rescale == RescaleMode::reference ? "reference information" : "each fit")
     << ", seed " << c.seed << ".\n\n| gamma \\ alpha |";
  for (double a : c.alphas) md << ' ' << a << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < c.alphas.size(); ++i) md << "---|";
  md << '\n';
  csv << "m,gamma,alpha,threshold,rejection_rate,replications\n";
  for (std::size_t g = 0; g < c.gammas.size(); ++g) {
    md << "| " << c.gammas[g] << " |";
    for (std::size_t a = 0; a < c.alphas.size(); ++a) {
      const double rate = r.rejection_rate(g, a);
      md << ' ' << detail::fixed(rate, 4) << " |";
      csv << c.m << ',' << c.gammas[g] << ',' << c.alphas[a] << ','
          << detail::full(r.thresholds.at(c.gammas[g], c.alphas[a])) << ',' << detail::full(rate) << ','
          << (c.reps - r.failed) << '\n';
    }
    md << '\n';
  }
  rep.markdown = md.str();
  rep.csv = csv.str();
  return rep;
}

inline Report power_report(const MonitoringResult& r) {
  Report rep;
  std::ostringstream md, csv;
  const auto& c = r.config;
  md << "## Detection after a parameter change at k* = " << c.k_star << "\n\n";
  md << "m = " << c.m << ", N = " << c.horizon_N << ", alpha = " << c.alphas.front() << ", "
     << (c.reps - r.failed) << " of " << c.reps << " replications usable, seed " << c.seed << ".\n\n";
  md << "| gamma | M1 (mean k - k*) | M2 (%) | M3 (%) |\n|---|---|---|---|\n";
  csv << "m,k_star,gamma,alpha,M1,M2,M3,replications\n";
  for (std::size_t g = 0; g < c.gammas.size(); ++g) {
    const auto s = r.summary(g, 0);
    md << "| " << c.gammas[g] << " | " << (s.mean_delay ? detail::fixed(*s.mean_delay, 2) : "n/a") << " | "
       << detail::fixed(100.0 * s.rejection_rate, 2) << " | " << detail::fixed(100.0 * s.sensitivity, 2) << " |\n";
    csv << c.m << ',' << c.k_star << ',' << c.gammas[g] << ',' << c.alphas.front() << ','
        << (s.mean_delay ? detail::full(*s.mean_delay) : "") << ',' << detail::full(s.rejection_rate) << ','
        << detail::full(s.sensitivity) << ',' << s.runs << '\n';
  }
  rep.markdown = md.str();
  rep.csv = csv.str();
  return rep;
}

// --- forecasting ------------------------------------------------------------

struct ForecastConfig {
  ModelParams params = ModelParams::reference();
  ExoAR1Spec exo;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  double alpha = 0.1;
  std::vector<XLinkKind> xlinks{XLinkKind::truncated_logit, XLinkKind::truncated_cloglog, XLinkKind::identity};
  std::size_t burn_in = 500;
  std::uint64_t seed = 1;
};

struct ForecastRow {
  XLink xlink;
  FitResult fit;
  ForecastMetrics in_sample;
  ForecastMetrics out_of_sample;
};

struct ForecastResult {
  ForecastConfig config;
  std::vector<ForecastRow> rows;
};

// One simulated path; each x-link is fitted on the first n_train
// transitions and forecasts the remaining n_test one step ahead.
inline ForecastResult run_forecast(const ForecastConfig& cfg) {
  cfg.params.validate();
  betaar::detail::require(cfg.n_train >= 10 && cfg.n_test >= 1, "forecast study: need n_train >= 10, n_test >= 1");
  RngState rng(cfg.seed);
  SimulateOptions opts;
  opts.burn_in = cfg.burn_in;
  const auto path = simulate_path(cfg.params, cfg.exo, cfg.n_train + cfg.n_test, rng, opts);
  const auto train = path.slice(0, cfg.n_train);
  ForecastResult out;
  out.config = cfg;
  for (auto kind : cfg.xlinks) {
    ForecastRow row;
    row.xlink = XLink{kind, cfg.params.xlink.trunc_c};
    row.fit = fit_pmle(train, row.xlink);
    const auto in_fc = forecast_series(row.fit.params_hat, path, 1, cfg.n_train, cfg.alpha);
    const auto out_fc = forecast_series(row.fit.params_hat, path, cfg.n_train + 1, cfg.n_train + cfg.n_test, cfg.alpha);
    std::vector<double> in_x(path.x.data() + 1, path.x.data() + 1 + cfg.n_train);
    std::vector<double> out_x(path.x.data() + 1 + cfg.n_train, path.x.data() + 1 + cfg.n_train + cfg.n_test);
    row.in_sample = forecast_metrics(in_x, in_fc);
    row.out_of_sample = forecast_metrics(out_x, out_fc);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline Report forecast_report(const ForecastResult& r) {
  Report rep;
  std::ostringstream md, csv;
  const auto& c = r.config;
  md << "## One-step forecasts by x-link\n\n";
  md << "Simulated from " << c.params.to_vector().transpose() << " (x-link " << to_string(c.params.xlink.kind)
     << "); " << c.n_train << " training and " << c.n_test << " test transitions; "
     << static_cast<int>(std::lround(100.0 * (1.0 - c.alpha))) << "% equal-tailed intervals; seed " << c.seed
     << ".\n\n";
  md << "| x-link | sample | MAE | MAPE (%) | RMSE | CP (%) | AIC |\n|---|---|---|---|---|---|---|\n";
  csv << "xlink,sample,mae,mape,rmse,cp,aic,loglik,converged\n";
  for (const auto& row : r.rows) {
    for (int s = 0; s < 2; ++s) {
      const auto& m = s == 0 ? row.in_sample : row.out_of_sample;
      const char* label = s == 0 ? "in" : "out";
      md << "| " << to_string(row.xlink.kind) << " | " << label << " | " << detail::sig(m.mae, 5) << " | "
         << detail::fixed(*m.mape, 3) << " | " << detail::sig(m.rmse, 5) << " | " << detail::fixed(m.cp, 2) << " | "
         << detail::fixed(row.fit.aic(), 2) << " |\n";
      csv << to_string(row.xlink.kind) << ',' << label << ',' << detail::full(m.mae) << ',' << detail::full(*m.mape)
          << ',' << detail::full(m.rmse) << ',' << detail::full(m.cp) << ',' << detail::full(row.fit.aic()) << ','
          << detail::full(row.fit.loglik) << ',' << (row.fit.converged ? 1 : 0) << '\n';
    }
  }
  rep.markdown = md.str();
  rep.csv = csv.str();
  return rep;
}

}  // namespace betaar::experiments
