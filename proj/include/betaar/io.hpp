#pragma once

// File formats.
//
// Series CSV: header `t,x,w1,...,wl`, one row per time index starting at
// t = 0. Covariates W_t accompany X_t for t >= 1; the w fields of the t = 0
// row are left empty and ignored on input. Values are written with 17
// significant digits so files round-trip exactly.
//
// JSON documents carry `schema_version` and a `kind` tag. Requires the
// single-header nlohmann/json (`json.hpp`) on the include path.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "betaar/detector.hpp"
#include "betaar/errors.hpp"
#include "betaar/evalkit.hpp"
#include "betaar/inference.hpp"
#include "betaar/model.hpp"

namespace betaar::io {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view field, const std::string& column, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("column '" + column + "': cannot parse '" + std::string(field) + "' as a number", line);
  }
  if (!std::isfinite(v)) throw ParseError("column '" + column + "': value is not finite", line);
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace detail

inline void write_series_csv(std::ostream& os, const SeriesSample& s) {
  const Eigen::Index l = s.num_covariates();
  os << "t,x";
  for (Eigen::Index j = 1; j <= l; ++j) os << ",w" << j;
  os << '\n';
  for (Eigen::Index t = 0; t < s.x.size(); ++t) {
    os << t << ',' << detail::format_double(s.x[t]);
    for (Eigen::Index j = 0; j < l; ++j) {
      os << ',';
      if (t > 0) os << detail::format_double(s.w(t - 1, j));
    }
    os << '\n';
  }
}

inline void save_series_csv(const std::string& path, const SeriesSample& s) {
  auto os = detail::open_out(path);
  write_series_csv(os, s);
  if (!os) throw IoError("failed writing '" + path + "'");
}

// Reads a series CSV. When `expected_covariates` is given the header must
// carry exactly that many w columns.
inline SeriesSample read_series_csv(std::istream& is,
                                    std::optional<Eigen::Index> expected_covariates = std::nullopt) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw ParseError("empty series file: missing header `t,x,w1,...`", line_no);
  for (auto f : detail::split_fields(detail::trim(line))) header.emplace_back(detail::trim(f));
  if (header.size() < 2 || header[0] != "t" || header[1] != "x") {
    throw SchemaError("header must start with `t,x`", line_no);
  }
  const auto l = static_cast<Eigen::Index>(header.size() - 2);
  for (Eigen::Index j = 1; j <= l; ++j) {
    if (header[static_cast<std::size_t>(j + 1)] != "w" + std::to_string(j)) {
      throw SchemaError("header column " + std::to_string(j + 2) + " must be 'w" + std::to_string(j) +
                            "', found '" + header[static_cast<std::size_t>(j + 1)] + "'",
                        line_no);
    }
  }
  if (expected_covariates && *expected_covariates != l) {
    throw SchemaError("expected " + std::to_string(*expected_covariates) + " covariate column(s) w1..w" +
                          std::to_string(*expected_covariates) + ", found " + std::to_string(l),
                      line_no);
  }

  std::vector<double> xs;
  std::vector<double> ws;
  while (std::getline(is, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto fields = detail::split_fields(trimmed);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const double t = detail::parse_double(fields[0], "t", line_no);
    if (t != static_cast<double>(xs.size())) {
      throw ParseError("expected t = " + std::to_string(xs.size()) + ", found " + std::string(detail::trim(fields[0])),
                       line_no);
    }
    const double x = detail::parse_double(fields[1], "x", line_no);
    if (x < 0.0 || x > 1.0) throw ParseError("column 'x': value outside [0,1]", line_no);
    xs.push_back(x);
    if (xs.size() == 1) continue;  // covariates of the t = 0 row are ignored
    for (Eigen::Index j = 0; j < l; ++j) {
      ws.push_back(detail::parse_double(fields[static_cast<std::size_t>(j + 2)], header[static_cast<std::size_t>(j + 2)],
                                        line_no));
    }
  }
  if (xs.empty()) throw ParseError("series file has a header but no data rows", line_no);
  SeriesSample s;
  s.x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  s.w = Eigen::Map<const CovariateMatrix>(ws.data(), static_cast<Eigen::Index>(xs.size()) - 1, l);
  return s;
}

inline SeriesSample load_series_csv(const std::string& path,
                                    std::optional<Eigen::Index> expected_covariates = std::nullopt) {
  auto is = detail::open_in(path);
  return read_series_csv(is, expected_covariates);
}

inline Json to_json(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Json to_json(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(std::move(row));
  }
  return j;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaError(what + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(what + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw SchemaError(what + " must be a non-empty array of rows");
  const std::size_t n = j.size();
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < n; ++i) {
    const Vector row = vector_from_json(j[i], what);
    if (row.size() != m.cols()) throw SchemaError(what + " rows have different lengths");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

inline Json to_json(const XLink& link) { return Json{{"kind", to_string(link.kind)}, {"c", link.trunc_c}}; }

inline XLink xlink_from_json(const Json& j) {
  XLink link;
  try {
    link.kind = parse_xlink_kind(j.at("kind").get<std::string>());
    link.trunc_c = j.at("c").get<double>();
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("xlink: ") + e.what());
  }
  return link;
}

inline Json to_json(const ModelParams& p) {
  return Json{{"tau", p.tau}, {"phi0", p.phi0}, {"phi1", p.phi1}, {"phi", to_json(p.exo_coefs)},
              {"xlink", to_json(p.xlink)}};
}

inline ModelParams params_from_json(const Json& j) {
  ModelParams p;
  try {
    p.tau = j.at("tau").get<double>();
    p.phi0 = j.at("phi0").get<double>();
    p.phi1 = j.at("phi1").get<double>();
    p.exo_coefs = vector_from_json(j.at("phi"), "phi");
    p.xlink = xlink_from_json(j.at("xlink"));
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("params: ") + e.what());
  }
  return p;
}

inline Json envelope(const std::string& kind) {
  return Json{{"schema_version", kSchemaVersion}, {"kind", kind}};
}

inline void check_envelope(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw SchemaError("expected a JSON object");
  if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion) {
    throw SchemaError("unsupported or missing schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!j.contains("kind") || j["kind"] != kind) {
    throw SchemaError("expected a '" + kind + "' document");
  }
}

inline Json fit_to_json(const FitResult& f) {
  Json j = envelope("fit");
  const auto names = parameter_names(f.params_hat.num_covariates());
  const Vector eta = f.params_hat.to_vector();
  const Vector sd = f.asymptotic_sd();
  Json est = Json::object();
  for (std::size_t i = 0; i < names.size(); ++i) {
    est[names[i]] = Json{{"estimate", eta[static_cast<Eigen::Index>(i)]},
                         {"asymptotic_sd", sd[static_cast<Eigen::Index>(i)]}};
  }
  j["parameter_names"] = names;
  j["params"] = to_json(f.params_hat);
  j["estimates"] = std::move(est);
  j["m"] = f.m;
  j["loglik"] = f.loglik;
  j["aic"] = f.aic();
  j["score_norm_at_solution"] = f.score_norm_at_solution;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["method"] = f.method;
  j["message"] = f.message;
  j["clamped_observations"] = f.clamped_observations;
  j["info_condition_number"] = f.info_condition_number;
  j["info_matrix"] = to_json(f.info_matrix);
  j["asymptotic_cov"] = to_json(f.asymptotic_cov);
  return j;
}

inline FitResult fit_from_json(const Json& j) {
  check_envelope(j, "fit");
  FitResult f;
  try {
    f.params_hat = params_from_json(j.at("params"));
    f.m = j.at("m").get<std::size_t>();
    f.loglik = j.at("loglik").get<double>();
    f.score_norm_at_solution = j.at("score_norm_at_solution").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.value("iterations", 0);
    f.method = j.value("method", std::string());
    f.message = j.value("message", std::string());
    f.clamped_observations = j.value("clamped_observations", std::size_t{0});
    f.info_condition_number = j.value("info_condition_number", 0.0);
    f.info_matrix = matrix_from_json(j.at("info_matrix"), "info_matrix");
    f.asymptotic_cov = matrix_from_json(j.at("asymptotic_cov"), "asymptotic_cov");
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("fit document: ") + e.what());
  }
  const Eigen::Index d = f.params_hat.dim();
  if (f.info_matrix.rows() != d || f.info_matrix.cols() != d || f.asymptotic_cov.rows() != d ||
      f.asymptotic_cov.cols() != d) {
    throw SchemaError("fit document: matrix dimensions do not match the parameter vector");
  }
  return f;
}

inline Json threshold_table_to_json(const ThresholdTable& t) {
  Json j = envelope("threshold_table");
  j["meta"] = Json{{"replications", t.meta.replications}, {"m_grid", t.meta.m_grid},
                   {"horizon_N", t.meta.horizon_N},       {"dimension", t.meta.dimension},
                   {"seed", t.meta.seed},                 {"sigma_source", t.meta.sigma_source}};
  Json entries = Json::array();
  for (const auto& [key, c] : t.entries) entries.push_back(Json{{"gamma", key.first}, {"alpha", key.second}, {"c", c}});
  j["entries"] = std::move(entries);
  return j;
}

inline ThresholdTable threshold_table_from_json(const Json& j) {
  check_envelope(j, "threshold_table");
  ThresholdTable t;
  try {
    const Json& m = j.at("meta");
    t.meta.replications = m.at("replications").get<std::size_t>();
    t.meta.m_grid = m.at("m_grid").get<std::size_t>();
    t.meta.horizon_N = m.at("horizon_N").get<double>();
    t.meta.dimension = m.at("dimension").get<Eigen::Index>();
    t.meta.seed = m.at("seed").get<std::uint64_t>();
    t.meta.sigma_source = m.value("sigma_source", std::string());
    for (const Json& e : j.at("entries")) {
      t.entries[{e.at("gamma").get<double>(), e.at("alpha").get<double>()}] = e.at("c").get<double>();
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("threshold table: ") + e.what());
  }
  return t;
}

inline Json monitor_to_json(const MonitorState& s) {
  Json j = envelope("monitor");
  j["m"] = s.m;
  j["gamma"] = s.weight.gamma;
  j["horizon_N"] = s.weight.horizon_N;
  j["threshold"] = s.threshold_c;
  j["k_processed"] = s.k;
  j["detected"] = s.detected();
  j["verdict"] = s.detected() ? "detected" : "no detection";
  j["k_detect"] = s.crossing ? Json(s.crossing->k_detect) : Json(nullptr);
  j["t_detect"] = s.crossing ? Json(s.m + s.crossing->k_detect) : Json(nullptr);
  j["statistic_at_detection"] = s.crossing ? Json(s.crossing->statistic) : Json(nullptr);
  j["final_score_sum"] = to_json(s.score_sum);
  j["rescale_A"] = to_json(s.rescale_A);
  return j;
}

inline void write_trace_csv(std::ostream& os, const MonitorState& s) {
  os << "k,t,statistic\n";
  for (const auto& [k, stat] : statistic_trace(s)) {
    os << k << ',' << (s.m + k) << ',' << detail::format_double(stat) << '\n';
  }
}

inline void write_forecast_csv(std::ostream& os, std::size_t first_t, const std::vector<double>& actual,
                               const std::vector<ForecastPoint>& fc) {
  os << "t,actual,mu_hat,lower,upper,covered\n";
  for (std::size_t i = 0; i < fc.size(); ++i) {
    os << (first_t + i) << ',' << detail::format_double(actual[i]) << ',' << detail::format_double(fc[i].mu_hat)
       << ',' << detail::format_double(fc[i].lower) << ',' << detail::format_double(fc[i].upper) << ','
       << (fc[i].covers(actual[i]) ? 1 : 0) << '\n';
  }
}

inline Json read_json_file(const std::string& path) {
  auto is = detail::open_in(path);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  auto os = detail::open_out(path);
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline void write_text_file(const std::string& path, const std::string& text) {
  auto os = detail::open_out(path);
  os << text;
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace betaar::io
