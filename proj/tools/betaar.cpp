// betaar command-line tool: simulate, fit, calibrate, monitor, forecast and
// replication experiments. Exit codes: 0 success, 1 usage or configuration
// error, 2 data or I/O error, 3 numerical failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "betaar/experiments.hpp"
#include "betaar/io.hpp"

namespace fs = std::filesystem;
using namespace betaar;
using io::Json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto field = io::detail::trim(item);
    if (field.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(std::string(field), &used));
      if (used != field.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse '" + item + "' as a number");
    }
  }
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (double v : parse_list(text, what)) {
    if (v < 1.0 || v != std::floor(v)) throw ConfigError(what + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : ",") + p;
  return s;
}

struct Globals {
  std::uint64_t seed = 1;
  std::string config;
  std::string out = ".";
  unsigned threads = 1;
};

// Model parameter options shared by simulate and experiment.
struct ModelOptions {
  double tau = 100.0;
  double phi0 = -0.6;
  double phi1 = 0.1;
  std::string phi = "0.1";
  std::string xlink = "logit";
  double trunc_c = kDefaultTruncation;
  double exo_coef = -0.1;
  double exo_sd = 1.0;

  void add(CLI::App* app) {
    app->add_option("--tau", tau, "Beta precision")->capture_default_str();
    app->add_option("--phi0", phi0, "intercept")->capture_default_str();
    app->add_option("--phi1", phi1, "coefficient of A(X_{t-1})")->capture_default_str();
    app->add_option("--phi", phi, "covariate coefficients, comma separated (empty for none)")->capture_default_str();
    add_xlink(app);
    app->add_option("--exo-coef", exo_coef, "AR(1) coefficient of each covariate process")->capture_default_str();
    app->add_option("--exo-sd", exo_sd, "innovation sd of each covariate process")->capture_default_str();
  }

  void add_xlink(CLI::App* app) {
    app->add_option("--xlink", xlink, "x-link: identity, logit or cloglog")
        ->capture_default_str()
        ->check(CLI::IsMember({"identity", "logit", "cloglog"}));
    app->add_option("--trunc-c", trunc_c, "x-link truncation c")->capture_default_str();
  }

  XLink link() const {
    XLink l{parse_xlink_kind(xlink), trunc_c};
    l.validate();
    return l;
  }

  ModelParams params() const {
    ModelParams p;
    p.tau = tau;
    p.phi0 = phi0;
    p.phi1 = phi1;
    const auto coefs = parse_list(phi, "--phi");
    p.exo_coefs = Eigen::Map<const Vector>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    p.xlink = link();
    p.validate();
    return p;
  }

  ExoAR1Spec exo() const {
    ExoAR1Spec e;
    e.coefficient = exo_coef;
    e.noise_sd = exo_sd;
    e.validate();
    return e;
  }
};

// Effective values of every option of `app` (defaults included).
Json effective_config(const CLI::App* app, const Globals& g) {
  Json j = Json::object();
  j["command"] = app->get_name();
  j["seed"] = g.seed;
  j["threads"] = g.threads;
  Json opts = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      opts[name] = join(opt->results());
    } else {
      opts[name] = opt->get_default_str();
    }
  }
  j["options"] = opts;
  return j;
}

fs::path out_path(const Globals& g, const std::string& file) {
  const fs::path dir(g.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + g.out + "': " + ec.message());
  return dir / file;
}

void note(const std::string& msg) { std::cerr << msg << '\n'; }

// --- simulate ---------------------------------------------------------------

struct SimulateCmd {
  ModelOptions model;
  std::size_t n = 1000;
  std::size_t burn_in = 500;
  double x0 = 0.5;
  std::size_t change_at = 0;
  std::optional<double> change_phi0, change_phi1, change_tau;

  void add(CLI::App* app) {
    app->add_option("--n", n, "number of transitions")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--burn-in", burn_in, "discarded warm-up steps")->capture_default_str();
    app->add_option("--x0", x0, "initial state before burn-in")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    model.add(app);
    app->add_option("--change-at", change_at, "transitions t > change-at use the changed parameters (0: none)")
        ->capture_default_str();
    app->add_option("--change-tau", change_tau, "tau after the change");
    app->add_option("--change-phi0", change_phi0, "phi0 after the change");
    app->add_option("--change-phi1", change_phi1, "phi1 after the change");
  }

  int run(const CLI::App* app, const Globals& g) const {
    const ModelParams p = model.params();
    ModelParams after = p;
    if (change_tau) after.tau = *change_tau;
    if (change_phi0) after.phi0 = *change_phi0;
    if (change_phi1) after.phi1 = *change_phi1;
    after.validate();
    RngState rng(g.seed);
    BetaAR1Simulator sim(p, model.exo(), rng, x0);
    sim.burn_in(rng, burn_in);
    SeriesSample s;
    s.x.resize(static_cast<Eigen::Index>(n) + 1);
    s.w.resize(static_cast<Eigen::Index>(n), p.num_covariates());
    s.x[0] = sim.current();
    for (std::size_t t = 1; t <= n; ++t) {
      if (change_at > 0 && t == change_at + 1) sim.set_params(after);
      s.x[static_cast<Eigen::Index>(t)] = sim.step(rng);
      s.w.row(static_cast<Eigen::Index>(t) - 1) = sim.last_covariates().transpose();
    }
    const auto csv = out_path(g, "series.csv");
    io::save_series_csv(csv.string(), s);
    Json meta = io::envelope("simulation");
    meta["config"] = effective_config(app, g);
    meta["params"] = io::to_json(p);
    if (change_at > 0) {
      meta["change_at"] = change_at;
      meta["params_after_change"] = io::to_json(after);
    }
    meta["transitions"] = n;
    meta["series_csv"] = csv.filename().string();
    io::write_json_file(out_path(g, "simulation.json").string(), meta);
    note("wrote " + csv.string());
    return 0;
  }
};

// --- fit ----------------------------------------------------------------------

struct FitCmd {
  ModelOptions model;
  std::string input;
  std::size_t m = 0;
  std::size_t covariates = 0;
  bool check_covariates = false;
  int max_iterations = 500;
  double tolerance = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--input", input, "series CSV (t,x,w1..wl)")->required();
    app->add_option("--m", m, "fit on transitions 1..m only (0: all)")->capture_default_str();
    app->add_option("--covariates", covariates, "expected number of covariate columns")
        ->each([this](const std::string&) { check_covariates = true; });
    model.add_xlink(app);
    app->add_option("--max-iter", max_iterations, "iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--tol", tolerance, "score tolerance")->capture_default_str()->check(CLI::PositiveNumber);
  }

  int run(const CLI::App* app, const Globals& g) const {
    std::optional<Eigen::Index> expect;
    if (check_covariates) expect = static_cast<Eigen::Index>(covariates);
    auto data = io::load_series_csv(input, expect);
    if (m > 0) {
      if (m > data.transitions())
        throw ConfigError("--m " + std::to_string(m) + " exceeds the " + std::to_string(data.transitions()) +
                          " transitions in " + input);
      data = data.slice(0, m);
    }
    FitOptions opts;
    opts.max_iterations = max_iterations;
    opts.gradient_tolerance = tolerance;
    const auto fit = fit_pmle(data, model.link(), opts);
    Json j = io::fit_to_json(fit);
    j["config"] = effective_config(app, g);
    j["input"] = input;
    const auto path = out_path(g, "fit.json");
    io::write_json_file(path.string(), j);
    note("wrote " + path.string());
    if (!fit.converged) {
      note("error: fit did not converge: " + fit.message);
      return kExitNumerical;
    }
    return 0;
  }
};

// --- calibrate ----------------------------------------------------------------

FitResult load_fit(const std::string& path) { return io::fit_from_json(io::read_json_file(path)); }

struct CalibrateCmd {
  std::string fit;
  std::string gammas = "0,0.25,0.4";
  std::string alphas = "0.1,0.05,0.025,0.01";
  double horizon_N = 3.0;
  std::size_t m_grid = 1000;
  std::size_t reps = 10000;

  void add(CLI::App* app) {
    app->add_option("--fit", fit, "fit JSON whose information matrix is Sigma_0");
    app->add_option("--gammas", gammas, "weight exponents, comma separated")->capture_default_str();
    app->add_option("--alphas", alphas, "significance levels, comma separated")->capture_default_str();
    app->add_option("--N", horizon_N, "monitoring horizon multiple")->capture_default_str();
    app->add_option("--m-grid", m_grid, "Wiener grid size")->capture_default_str();
    app->add_option("--reps", reps, "Monte-Carlo replications")->capture_default_str();
  }

  int run(const CLI::App* app, const Globals& g) const {
    if (fit.empty()) throw ConfigError("calibrate: Sigma_0 is required; pass --fit <fit.json>");
    const auto f = load_fit(fit);
    if (f.info_matrix.size() == 0) throw ConfigError("calibrate: " + fit + " holds no information matrix");
    experiments::ThresholdsConfig cfg;
    cfg.gammas = parse_list(gammas, "--gammas");
    cfg.alphas = parse_list(alphas, "--alphas");
    cfg.calibration = CalibrationSettings{horizon_N, m_grid, reps, g.threads};
    cfg.seed = g.seed;
    const auto table = experiments::run_thresholds(cfg, f.info_matrix, fit);
    Json j = io::threshold_table_to_json(table);
    j["config"] = effective_config(app, g);
    const auto path = out_path(g, "thresholds.json");
    io::write_json_file(path.string(), j);
    const auto rep = experiments::thresholds_report(table);
    io::write_text_file(out_path(g, "thresholds.md").string(), rep.markdown);
    io::write_text_file(out_path(g, "thresholds.csv").string(), rep.csv);
    std::cout << rep.markdown;
    note("wrote " + path.string());
    return 0;
  }
};

// --- monitor ------------------------------------------------------------------

struct MonitorCmd {
  std::string fit;
  std::string input;
  std::string thresholds;
  std::optional<double> threshold;
  double gamma = 0.0;
  double alpha = 0.05;
  double horizon_N = 3.0;
  bool full_trace = false;

  void add(CLI::App* app) {
    app->add_option("--fit", fit, "fit JSON from the training sample")->required();
    app->add_option("--input", input, "series CSV; monitoring starts at t = m + 1")->required();
    app->add_option("--thresholds", thresholds, "threshold table JSON");
    app->add_option("--threshold", threshold, "threshold c, overrides the table");
    app->add_option("--gamma", gamma, "weight exponent")->capture_default_str();
    app->add_option("--alpha", alpha, "significance level (table lookup)")->capture_default_str();
    app->add_option("--N", horizon_N, "monitoring horizon multiple")->capture_default_str();
    app->add_flag("--full-trace", full_trace, "keep monitoring after the first crossing");
  }

  int run(const CLI::App* app, const Globals& g) const {
    const auto f = load_fit(fit);
    double c = 0.0;
    std::string c_source;
    if (threshold) {
      c = *threshold;
      c_source = "--threshold";
    } else if (!thresholds.empty()) {
      const auto table = io::threshold_table_from_json(io::read_json_file(thresholds));
      if (table.meta.horizon_N != horizon_N)
        throw ConfigError("monitor: table horizon N = " + io::detail::format_double(table.meta.horizon_N) +
                          " differs from --N " + io::detail::format_double(horizon_N));
      const auto hit = table.find(gamma, alpha);
      if (!hit) throw ConfigError("monitor: table has no entry for this (gamma, alpha)");
      c = *hit;
      c_source = thresholds;
    } else {
      throw ConfigError("monitor: pass --thresholds <table.json> or --threshold <c>");
    }
    const auto data = io::load_series_csv(input, f.params_hat.num_covariates());
    if (data.transitions() < f.m)
      throw SchemaError("monitor: " + input + " has " + std::to_string(data.transitions()) +
                        " transitions but the fit used m = " + std::to_string(f.m));
    const WeightConfig wc{gamma, horizon_N};
    wc.validate();
    const std::size_t available = data.transitions() - f.m;
    const std::size_t horizon = wc.max_steps(f.m);
    if (available > horizon)
      note("warning: " + std::to_string(available - horizon) + " observations beyond the horizon N m = " +
           std::to_string(horizon) + " are ignored");
    const auto stream = data.slice(f.m, f.m + std::min(available, horizon));
    MonitorOptions opts;
    opts.stop_at_crossing = !full_trace;
    const auto st = run_monitor(f, stream, wc, c, opts);
    Json j = io::monitor_to_json(st);
    j["threshold_source"] = c_source;
    j["alpha"] = alpha;
    j["config"] = effective_config(app, g);
    const auto path = out_path(g, "monitor.json");
    io::write_json_file(path.string(), j);
    std::ostringstream trace;
    io::write_trace_csv(trace, st);
    io::write_text_file(out_path(g, "trace.csv").string(), trace.str());
    std::cout << j["verdict"].get<std::string>();
    if (st.crossing) std::cout << " at k = " << st.crossing->k_detect << " (t = " << f.m + st.crossing->k_detect << ")";
    std::cout << '\n';
    return 0;
  }
};

// --- forecast -----------------------------------------------------------------

struct ForecastCmd {
  std::string fit;
  std::string input;
  std::size_t from = 0;
  std::size_t to = 0;
  double alpha = 0.1;

  void add(CLI::App* app) {
    app->add_option("--fit", fit, "fit JSON")->required();
    app->add_option("--input", input, "series CSV")->required();
    app->add_option("--from", from, "first forecast t (0: m + 1)")->capture_default_str();
    app->add_option("--to", to, "last forecast t (0: end of series)")->capture_default_str();
    app->add_option("--alpha", alpha, "interval level is 1 - alpha")->capture_default_str();
  }

  int run(const CLI::App* app, const Globals& g) const {
    const auto f = load_fit(fit);
    const auto data = io::load_series_csv(input, f.params_hat.num_covariates());
    const std::size_t first = from > 0 ? from : f.m + 1;
    const std::size_t last = to > 0 ? to : data.transitions();
    if (first < 1 || first > last || last > data.transitions())
      throw ConfigError("forecast: range " + std::to_string(first) + ".." + std::to_string(last) +
                        " is outside 1.." + std::to_string(data.transitions()));
    const auto fc = forecast_series(f.params_hat, data, first, last, alpha);
    std::vector<double> actual(data.x.data() + first, data.x.data() + last + 1);
    const bool positive = std::all_of(actual.begin(), actual.end(), [](double v) { return v > 0.0; });
    const auto m = forecast_metrics(actual, fc, positive);
    std::ostringstream csv;
    io::write_forecast_csv(csv, first, actual, fc);
    io::write_text_file(out_path(g, "forecast.csv").string(), csv.str());
    Json j = io::envelope("forecast");
    j["from_t"] = first;
    j["to_t"] = last;
    j["alpha"] = alpha;
    j["count"] = m.count;
    j["mae"] = m.mae;
    j["mape_percent"] = m.mape ? Json(*m.mape) : Json(nullptr);
    j["rmse"] = m.rmse;
    j["coverage_percent"] = m.cp;
    j["aic"] = f.aic();
    j["config"] = effective_config(app, g);
    io::write_json_file(out_path(g, "forecast.json").string(), j);
    std::cout << "MAE " << m.mae << "  RMSE " << m.rmse << "  CP " << m.cp << "%  over " << m.count << " forecasts\n";
    return 0;
  }
};

// --- experiment ---------------------------------------------------------------

struct ExperimentCmd {
  std::string table;
  ModelOptions model;
  std::size_t reps = 0;
  std::string m_values;
  std::string gammas = "0,0.25,0.4";
  std::string alphas;
  double horizon_N = 3.0;
  std::size_t m_grid = 1000;
  std::size_t calib_reps = 10000;
  std::size_t reference_n = 100000;
  std::string rescale = "reference";
  std::string thresholds;
  std::size_t k_star = 50;
  double change_phi1 = 0.2;
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  double forecast_alpha = 0.1;

  void add(CLI::App* app) {
    app->add_option("table", table, "consistency, thresholds, size, power or forecast")
        ->required()
        ->check(CLI::IsMember({"consistency", "thresholds", "size", "power", "forecast"}));
    model.add(app);
    app->add_option("--reps", reps, "replications (0: study default)")->capture_default_str();
    app->add_option("--m", m_values, "training sizes, comma separated (study default when empty)");
    app->add_option("--gammas", gammas, "weight exponents")->capture_default_str();
    app->add_option("--alphas", alphas, "significance levels (study default when empty)");
    app->add_option("--N", horizon_N, "monitoring horizon multiple")->capture_default_str();
    app->add_option("--m-grid", m_grid, "Wiener grid size for calibration")->capture_default_str();
    app->add_option("--calib-reps", calib_reps, "calibration replications")->capture_default_str();
    app->add_option("--reference-n", reference_n, "length of the reference path for Sigma_0")->capture_default_str();
    app->add_option("--rescale", rescale, "monitoring A: reference or fit")
        ->capture_default_str()
        ->check(CLI::IsMember({"reference", "fit"}));
    app->add_option("--thresholds", thresholds, "threshold table JSON (calibrated on the fly when empty)");
    app->add_option("--k-star", k_star, "change point for the power study")->capture_default_str();
    app->add_option("--change-phi1", change_phi1, "phi1 after the change")->capture_default_str();
    app->add_option("--n-train", n_train, "forecast study training length")->capture_default_str();
    app->add_option("--n-test", n_test, "forecast study test length")->capture_default_str();
    app->add_option("--forecast-alpha", forecast_alpha, "forecast interval level is 1 - alpha")->capture_default_str();
  }

  std::vector<double> alpha_list(std::vector<double> fallback) const {
    return alphas.empty() ? fallback : parse_list(alphas, "--alphas");
  }

  ThresholdTable table_for(const std::vector<double>& gs, const std::vector<double>& as, const Matrix& info,
                           const Globals& g) const {
    if (!thresholds.empty()) return io::threshold_table_from_json(io::read_json_file(thresholds));
    experiments::ThresholdsConfig cfg;
    cfg.gammas = gs;
    cfg.alphas = as;
    cfg.calibration = CalibrationSettings{horizon_N, m_grid, calib_reps, g.threads};
    cfg.seed = g.seed;
    return experiments::run_thresholds(cfg, info, "reference path, n = " + std::to_string(reference_n));
  }

  void emit(const Globals& g, const CLI::App* app, const experiments::Report& rep, Json extra = Json::object()) const {
    io::write_text_file(out_path(g, table + ".md").string(), rep.markdown);
    io::write_text_file(out_path(g, table + ".csv").string(), rep.csv);
    Json j = io::envelope("experiment");
    j["table"] = table;
    j["config"] = effective_config(app, g);
    for (auto& [k, v] : extra.items()) j[k] = v;
    io::write_json_file(out_path(g, table + ".json").string(), j);
    std::cout << rep.markdown;
  }

  int run(const CLI::App* app, const Globals& g) const {
    const ModelParams p = model.params();
    const ExoAR1Spec exo = model.exo();
    if (table == "consistency") {
      experiments::ConsistencyConfig cfg;
      cfg.params = p;
      cfg.exo = exo;
      if (!m_values.empty()) cfg.m_values = parse_counts(m_values, "--m");
      cfg.reps = reps > 0 ? reps : 100;
      cfg.seed = g.seed;
      cfg.threads = g.threads;
      const auto r = experiments::run_consistency(cfg);
      emit(g, app, experiments::consistency_report(r));
      if (r.rows.back().fits >= 30) {
        const Matrix info = experiments::reference_information(p, reference_n, g.seed, exo);
        io::write_text_file(out_path(g, "consistency_qq.csv").string(), experiments::qq_csv(r.rows.back(), p, info));
      }
      return 0;
    }
    if (table == "forecast") {
      experiments::ForecastConfig cfg;
      cfg.params = p;
      cfg.exo = exo;
      cfg.n_train = n_train;
      cfg.n_test = n_test;
      cfg.alpha = forecast_alpha;
      cfg.seed = g.seed;
      emit(g, app, experiments::forecast_report(experiments::run_forecast(cfg)));
      return 0;
    }
    const Matrix info = experiments::reference_information(p, reference_n, g.seed, exo);
    const auto gs = parse_list(gammas, "--gammas");
    if (table == "thresholds") {
      const auto t = table_for(gs, alpha_list({0.1, 0.05, 0.025, 0.01}), info, g);
      Json extra;
      extra["threshold_table"] = io::threshold_table_to_json(t);
      emit(g, app, experiments::thresholds_report(t), extra);
      return 0;
    }
    experiments::MonitoringConfig cfg;
    cfg.params = p;
    cfg.exo = exo;
    cfg.horizon_N = horizon_N;
    cfg.gammas = gs;
    cfg.rescale = rescale == "fit" ? experiments::RescaleMode::fit : experiments::RescaleMode::reference;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    const auto ms = m_values.empty() ? std::vector<std::size_t>{table == "size" ? 1000u : 500u}
                                     : parse_counts(m_values, "--m");
    if (table == "size") {
      cfg.alphas = alpha_list({0.1, 0.05, 0.025, 0.01});
      cfg.reps = reps > 0 ? reps : 1000;
    } else {
      cfg.alphas = alpha_list({0.05});
      if (cfg.alphas.size() != 1) throw ConfigError("power: give a single --alphas value");
      cfg.reps = reps > 0 ? reps : 200;
      cfg.k_star = k_star;
      ModelParams changed = p;
      changed.phi1 = change_phi1;
      cfg.changed_params = changed;
    }
    const auto t = table_for(gs, cfg.alphas, info, g);
    experiments::Report all;
    Json extra;
    extra["threshold_table"] = io::threshold_table_to_json(t);
    for (std::size_t m : ms) {
      cfg.m = m;
      const auto r = experiments::run_monitoring(cfg, t, info);
      const auto rep = table == "size" ? experiments::size_report(r) : experiments::power_report(r);
      all.markdown += rep.markdown + "\n";
      if (all.csv.empty()) {
        all.csv = rep.csv;
      } else {
        all.csv += rep.csv.substr(rep.csv.find('\n') + 1);
      }
    }
    emit(g, app, all, extra);
    return 0;
  }
};

// Splices `key = value` lines of the config file into argv: global keys go
// before the subcommand, the rest after it, so command-line flags given
// later take precedence.
std::vector<std::string> with_config(const std::vector<std::string>& args, const std::vector<std::string>& commands) {
  std::string config;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty()) return args;
  std::ifstream in(config);
  if (!in) throw ConfigError("cannot read config file '" + config + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError("config file '" + config + "': " + e.what());
  }
  std::vector<std::string> global, local;
  for (const auto& item : items) {
    if (!item.parents.empty() || item.name == "++" || item.name == "--") continue;
    const std::string flag = "--" + item.name;
    auto& target = (item.name == "seed" || item.name == "threads" || item.name == "out") ? global : local;
    if (item.name == "table") {
      target.push_back(join(item.inputs));
      continue;
    }
    target.push_back(flag + "=" + join(item.inputs));
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), global.begin(), global.end());
  bool placed = false;
  for (std::size_t i = 1; i < args.size(); ++i) {
    out.push_back(args[i]);
    if (!placed && std::find(commands.begin(), commands.end(), args[i]) != commands.end()) {
      out.insert(out.end(), local.begin(), local.end());
      placed = true;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beta AR(1) models for proportion-valued time series"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--config", g.config, "flat key = value config file; command-line flags take precedence");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0: all cores)")->capture_default_str();

  SimulateCmd simulate;
  FitCmd fit;
  CalibrateCmd calibrate;
  MonitorCmd monitor;
  ForecastCmd forecast;
  ExperimentCmd experiment;
  auto* s_sim = app.add_subcommand("simulate", "simulate a path and write series.csv");
  auto* s_fit = app.add_subcommand("fit", "partial maximum-likelihood fit, writes fit.json");
  auto* s_cal = app.add_subcommand("calibrate", "Monte-Carlo thresholds, writes thresholds.json");
  auto* s_mon = app.add_subcommand("monitor", "sequential monitoring, writes monitor.json and trace.csv");
  auto* s_fc = app.add_subcommand("forecast", "one-step forecasts, writes forecast.csv and forecast.json");
  auto* s_exp = app.add_subcommand("experiment", "replication study report");
  simulate.add(s_sim);
  fit.add(s_fit);
  calibrate.add(s_cal);
  monitor.add(s_mon);
  forecast.add(s_fc);
  experiment.add(s_exp);

  try {
    const std::vector<std::string> raw(argv, argv + argc);
    auto args = with_config(raw, {"simulate", "fit", "calibrate", "monitor", "forecast", "experiment"});
    // CLI11 takes the arguments without the program name, in reverse order.
    args.erase(args.begin());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  g.threads = resolve_threads(g.threads);
  try {
    if (s_sim->parsed()) return simulate.run(s_sim, g);
    if (s_fit->parsed()) return fit.run(s_fit, g);
    if (s_cal->parsed()) return calibrate.run(s_cal, g);
    if (s_mon->parsed()) return monitor.run(s_mon, g);
    if (s_fc->parsed()) return forecast.run(s_fc, g);
    if (s_exp->parsed()) return experiment.run(s_exp, g);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
