#include "alphamix/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

namespace alphamix::io {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t row, std::size_t col, const std::string& what) {
  throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    if (!known) throw Error(ErrorCode::ParseError, "unknown key '" + key + "' in " + where);
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw Error(ErrorCode::ParseError, where + " must be a number");
  return j.get<double>();
}

VectorXd get_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + " must be an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = get_number(j[i], where);
  return v;
}

MatrixXd get_matrix(const json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + " must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? (j[0].is_array() ? j[0].size() : 0) : 0;
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorCode::ParseError, where + " is ragged");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = get_number(j[r][c], where);
  }
  return m;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && std::equal(suffix.rbegin(), suffix.rend(), s.rbegin());
}

void write_vector(std::ostringstream& os, const VectorXd& v) {
  os << '[';
  for (Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_double(v(i));
  os << ']';
}

void write_matrix(std::ostringstream& os, const MatrixXd& m, const char* indent) {
  os << '[';
  for (Index r = 0; r < m.rows(); ++r) {
    os << (r ? "," : "") << '\n' << indent << "  ";
    write_vector(os, m.row(r).transpose());
  }
  os << '\n' << indent << ']';
}

std::string quoted(const std::string& s) { return json(s).dump(); }

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TimeSeriesPanel parse_panel(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find('\n', start);
    const std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::ParseError, "row 1, column 1: empty input");

  TimeSeriesPanel panel;
  for (std::string_view id : split_fields(lines[0])) {
    if (id.empty()) parse_fail(1, panel.stream_ids.size() + 1, "empty stream id");
    panel.stream_ids.emplace_back(id);
  }
  const std::size_t n = panel.stream_ids.size();
  const std::size_t rows = lines.size() - 1;
  if (rows < 2) parse_fail(lines.size() + 1, 1, "at least two observation rows are required");
  panel.observations.resize(static_cast<Index>(rows), static_cast<Index>(n));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != n)
      parse_fail(r + 2, std::min(fields.size(), n) + 1,
                 "expected " + std::to_string(n) + " fields, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < n; ++c) {
      const std::string_view f = fields[c];
      double value = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (!f.empty() && *first == '+') ++first;
      const auto res = std::from_chars(first, last, value);
      if (f.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(value))
        parse_fail(r + 2, c + 1, "not a number: '" + std::string(f) + "'");
      panel.observations(static_cast<Index>(r), static_cast<Index>(c)) = value;
    }
  }
  return panel;
}

TimeSeriesPanel load_panel(const std::string& path) { return parse_panel(read_file(path)); }

std::string format_panel(const TimeSeriesPanel& panel) {
  std::ostringstream os;
  for (std::size_t c = 0; c < panel.stream_ids.size(); ++c) os << (c ? "," : "") << panel.stream_ids[c];
  os << '\n';
  for (Index r = 0; r < panel.observations.rows(); ++r) {
    for (Index c = 0; c < panel.observations.cols(); ++c) os << (c ? "," : "") << format_double(panel.observations(r, c));
    os << '\n';
  }
  return os.str();
}

void save_panel(const TimeSeriesPanel& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  out << format_panel(panel);
}

Moments estimate_moments(const TimeSeriesPanel& panel) {
  const Index rows = panel.periods(), n = panel.streams();
  if (rows < 2 || n == 0) throw Error(ErrorCode::EmptyInput, "panel needs at least two rows and one stream");
  const Index m = rows - 1;
  const VectorXd mean = panel.observations.colwise().mean().transpose();
  const MatrixXd centered = panel.observations.rowwise() - mean.transpose();
  MatrixXd c = (centered.transpose() * centered) / static_cast<double>(m);
  c = 0.5 * (c + c.transpose()).eval();
  for (Index i = 0; i < n; ++i) {
    const double scale = panel.observations.col(i).cwiseAbs().maxCoeff();
    if (!(c(i, i) > (1e-12 * scale) * (1e-12 * scale)) || c(i, i) == 0.0)
      throw Error(ErrorCode::DegenerateStream,
                  "stream '" + (static_cast<std::size_t>(i) < panel.stream_ids.size() ? panel.stream_ids[i] : "") +
                      "' has zero variance");
  }
  std::vector<std::string> notes;
  if (m < n)
    notes.push_back("M = " + std::to_string(m) + " < N = " + std::to_string(n) +
                    ": the sample covariance has rank at most M and is singular");
  const VectorXd sd = c.diagonal().cwiseSqrt();
  MatrixXd psi = sd.cwiseInverse().asDiagonal() * c * sd.cwiseInverse().asDiagonal();
  psi = 0.5 * (psi + psi.transpose()).eval();
  psi.diagonal().setOnes();
  return Moments{AlphaSet(mean, sd), std::move(c), std::move(psi), std::move(notes)};
}

FactorBuild build_factor_model(const CovarianceModel& dense, Index f, int refinements) {
  const MatrixXd& c = dense.as_dense().matrix();
  const Index n = c.rows();
  if (f < 1 || f >= n) throw Error(ErrorCode::InvalidInput, "factor count must satisfy 1 <= F < N");
  const VectorXd diag = c.diagonal();
  const VectorXd floor = 1e-8 * diag;

  MatrixXd loaded;
  VectorXd xi2 = VectorXd::Zero(n);
  Index floored = 0;
  auto step = [&](const MatrixXd& reduced) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(reduced);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "eigendecomposition failed");
    loaded.resize(n, f);
    for (Index a = 0; a < f; ++a) {
      const double lambda = std::max(0.0, es.eigenvalues()(n - 1 - a));
      loaded.col(a) = es.eigenvectors().col(n - 1 - a) * std::sqrt(lambda);
    }
    VectorXd next = diag - loaded.rowwise().squaredNorm();
    floored = 0;
    for (Index i = 0; i < n; ++i)
      if (next(i) < floor(i)) {
        next(i) = floor(i);
        ++floored;
      }
    const double change = (next - xi2).cwiseAbs().maxCoeff();
    xi2 = next;
    return change;
  };

  FactorBuild out{CovarianceModel::diagonal(diag), 0, 0, {}};
  step(c);
  for (int it = 0; it < refinements; ++it) {
    MatrixXd reduced = c;
    reduced.diagonal() -= xi2;
    const double change = step(reduced);
    out.refinements = it + 1;
    if (change <= 1e-15 * diag.maxCoeff()) break;
  }
  out.floored = floored;
  if (floored * 10 > n)
    out.notes.push_back("IllConditioned: specific-variance floor applied to " + std::to_string(floored) + " of " +
                        std::to_string(n) + " streams");
  out.cov = CovarianceModel::factor(xi2, loaded, MatrixXd::Identity(f, f));
  return out;
}

Model parse_model(std::string_view text) {
  const json j = parse_json(text);
  check_keys(j, {"schema", "ids", "alpha", "turnovers", "covariance", "factor", "correlation", "s_max", "p_star"},
             "model");
  if (j.contains("schema") && j["schema"] != 1) throw Error(ErrorCode::ParseError, "unsupported model schema");
  if (!j.contains("alpha")) throw Error(ErrorCode::ParseError, "model needs 'alpha'");
  const VectorXd alpha = get_vector(j["alpha"], "alpha");
  const bool has_dense = j.contains("covariance"), has_factor = j.contains("factor");
  if (has_dense == has_factor) throw Error(ErrorCode::ParseError, "model needs exactly one of 'covariance' or 'factor'");
  std::optional<CovarianceModel> cov;
  if (has_dense) {
    cov = CovarianceModel::dense(get_matrix(j["covariance"], "covariance"));
  } else {
    const json& f = j["factor"];
    check_keys(f, {"specific_var", "loadings", "factor_cov"}, "factor");
    if (!f.contains("specific_var") || !f.contains("loadings"))
      throw Error(ErrorCode::ParseError, "factor model needs 'specific_var' and 'loadings'");
    const VectorXd xi2 = get_vector(f["specific_var"], "factor.specific_var");
    MatrixXd loadings = get_matrix(f["loadings"], "factor.loadings");
    if (loadings.rows() == 0) loadings.resize(xi2.size(), 0);
    const MatrixXd phi = f.contains("factor_cov") ? get_matrix(f["factor_cov"], "factor.factor_cov")
                                                  : MatrixXd::Identity(loadings.cols(), loadings.cols());
    cov = CovarianceModel::factor(xi2, loadings, phi);
  }
  if (cov->size() != alpha.size()) throw Error(ErrorCode::DimensionMismatch, "alpha and covariance differ in size");
  std::optional<VectorXd> tau;
  if (j.contains("turnovers")) tau = get_vector(j["turnovers"], "turnovers");
  Model m{{}, AlphaSet(alpha, cov->variances().cwiseSqrt(), tau), *cov, std::nullopt};
  if (j.contains("ids")) {
    if (!j["ids"].is_array() || j["ids"].size() != static_cast<std::size_t>(alpha.size()))
      throw Error(ErrorCode::ParseError, "'ids' must list one id per stream");
    for (const auto& id : j["ids"]) {
      if (!id.is_string()) throw Error(ErrorCode::ParseError, "'ids' must be strings");
      m.ids.push_back(id.get<std::string>());
    }
  } else {
    for (Index i = 0; i < alpha.size(); ++i) m.ids.push_back("s" + std::to_string(i + 1));
  }
  if (j.contains("correlation")) {
    m.correlation = get_matrix(j["correlation"], "correlation");
    if (m.correlation->rows() != alpha.size() || m.correlation->cols() != alpha.size())
      throw Error(ErrorCode::DimensionMismatch, "correlation size differs");
  }
  return m;
}

Model load_model(const std::string& path) { return parse_model(read_file(path)); }

Model load_input(const std::string& path, std::vector<std::string>* notes) {
  if (ends_with(path, ".csv")) {
    const TimeSeriesPanel panel = load_panel(path);
    Moments mom = estimate_moments(panel);
    if (notes) notes->insert(notes->end(), mom.notes.begin(), mom.notes.end());
    return Model{panel.stream_ids, mom.alpha, mom.model(), mom.correlation};
  }
  return load_model(path);
}

RunTarget parse_target(std::string_view text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string_view::npos) throw Error(ErrorCode::InvalidTarget, "target must look like kind=value");
  const std::string_view kind = text.substr(0, eq), num = text.substr(eq + 1);
  double value = 0.0;
  const auto res = std::from_chars(num.data(), num.data() + num.size(), value);
  if (num.empty() || res.ec != std::errc() || res.ptr != num.data() + num.size())
    throw Error(ErrorCode::InvalidTarget, "target value is not a number");
  if (kind == "pnl") return PnlTarget{value};
  if (kind == "sharpe-min") return factor::SharpeMin{value};
  if (kind == "risk-max") return factor::RiskMax{value};
  throw Error(ErrorCode::InvalidTarget, "unknown target kind '" + std::string(kind) + "'");
}

RunConfig parse_config(std::string_view text) {
  const json j = parse_json(text);
  check_keys(j, {"schema", "target", "costs", "factor", "tolerances", "solver"}, "config");
  RunConfig cfg;
  if (j.contains("target")) {
    const json& t = j["target"];
    check_keys(t, {"pnl", "sharpe_min", "risk_max"}, "target");
    if (t.size() != 1) throw Error(ErrorCode::ParseError, "target needs exactly one of pnl, sharpe_min, risk_max");
    if (t.contains("pnl")) cfg.target = PnlTarget{get_number(t["pnl"], "target.pnl")};
    if (t.contains("sharpe_min")) cfg.target = factor::SharpeMin{get_number(t["sharpe_min"], "target.sharpe_min")};
    if (t.contains("risk_max")) cfg.target = factor::RiskMax{get_number(t["risk_max"], "target.risk_max")};
  }
  if (j.contains("costs")) {
    const json& c = j["costs"];
    check_keys(c, {"L", "Q", "n", "I", "rho_star", "per_stream"}, "costs");
    costs::CostSpec spec;
    if (c.contains("L")) spec.linear_rate = get_number(c["L"], "costs.L");
    if (c.contains("Q")) spec.impact_coeff = get_number(c["Q"], "costs.Q");
    if (c.contains("n")) spec.impact_exponent = get_number(c["n"], "costs.n");
    if (c.contains("I")) spec.investment = get_number(c["I"], "costs.I");
    if (c.contains("rho_star")) spec.rho_star = get_number(c["rho_star"], "costs.rho_star");
    if (c.contains("per_stream")) spec.per_stream = get_vector(c["per_stream"], "costs.per_stream");
    spec.validate();
    cfg.costs = spec;
  }
  if (j.contains("factor")) {
    const json& f = j["factor"];
    check_keys(f, {"F"}, "factor");
    if (!f.contains("F") || !f["F"].is_number_integer()) throw Error(ErrorCode::ParseError, "factor.F must be an integer");
    cfg.factors = f["F"].get<Index>();
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    check_keys(t, {"max_iterations", "boundary_tol", "mu_rel_tol"}, "tolerances");
    if (t.contains("max_iterations")) {
      if (!t["max_iterations"].is_number_integer() || t["max_iterations"].get<int>() < 1)
        throw Error(ErrorCode::ParseError, "tolerances.max_iterations must be a positive integer");
      cfg.solver.max_iterations = t["max_iterations"].get<int>();
    }
    if (t.contains("boundary_tol")) cfg.solver.boundary_tol = get_number(t["boundary_tol"], "tolerances.boundary_tol");
    if (t.contains("mu_rel_tol")) cfg.solver.mu_rel_tol = get_number(t["mu_rel_tol"], "tolerances.mu_rel_tol");
    if (!(cfg.solver.boundary_tol > 0.0) || !(cfg.solver.mu_rel_tol > 0.0))
      throw Error(ErrorCode::ParseError, "tolerances must be positive");
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, {"initial_signs", "continuation_fallback"}, "solver");
    if (s.contains("initial_signs")) {
      const std::string v = s["initial_signs"].is_string() ? s["initial_signs"].get<std::string>() : "";
      if (v == "alpha") cfg.solver.initial_signs = factor::InitialSigns::Alpha;
      else if (v == "smax") cfg.solver.initial_signs = factor::InitialSigns::Smax;
      else throw Error(ErrorCode::ParseError, "solver.initial_signs must be 'alpha' or 'smax'");
    }
    if (s.contains("continuation_fallback")) {
      if (!s["continuation_fallback"].is_boolean())
        throw Error(ErrorCode::ParseError, "solver.continuation_fallback must be a boolean");
      cfg.solver.continuation_fallback = s["continuation_fallback"].get<bool>();
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_double(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string solution_json(const WeightSolution& sol) {
  std::ostringstream os;
  os << "{\n  \"schema\": 1,\n  \"weights\": ";
  write_vector(os, sol.weights);
  os << ",\n  \"support\": [";
  for (std::size_t k = 0; k < sol.support.size(); ++k) os << (k ? "," : "") << sol.support[k];
  os << "],\n  \"signs\": [";
  for (std::size_t k = 0; k < sol.signs.size(); ++k) os << (k ? "," : "") << sol.signs[k];
  os << "],\n  \"mu\": " << format_double(sol.mu) << ",\n  \"mu_tilde\": " << format_double(sol.mu_tilde)
     << ",\n  \"pnl\": " << format_double(sol.pnl) << ",\n  \"risk\": " << format_double(sol.risk)
     << ",\n  \"sharpe\": " << format_double(sol.sharpe) << ",\n  \"iterations\": " << sol.iterations
     << ",\n  \"certified_global\": " << (sol.certified_global ? "true" : "false") << "\n}\n";
  return os.str();
}

std::string model_json(const Model& model, const MatrixXd* correlation, double s_max, double p_star) {
  std::ostringstream os;
  os << "{\n  \"schema\": 1,\n  \"ids\": [";
  for (std::size_t i = 0; i < model.ids.size(); ++i) os << (i ? "," : "") << quoted(model.ids[i]);
  os << "],\n  \"alpha\": ";
  write_vector(os, model.alpha.alphas());
  if (model.alpha.has_turnovers()) {
    os << ",\n  \"turnovers\": ";
    write_vector(os, model.alpha.turnovers());
  }
  if (model.cov.is_dense()) {
    os << ",\n  \"covariance\": ";
    write_matrix(os, model.cov.as_dense().matrix(), "  ");
  } else {
    const auto& f = model.cov.as_factor();
    os << ",\n  \"factor\": {\n    \"specific_var\": ";
    write_vector(os, f.specific_var());
    os << ",\n    \"loadings\": ";
    write_matrix(os, f.loadings(), "    ");
    os << ",\n    \"factor_cov\": ";
    write_matrix(os, f.factor_cov(), "    ");
    os << "\n  }";
  }
  if (correlation) {
    os << ",\n  \"correlation\": ";
    write_matrix(os, *correlation, "  ");
  }
  os << ",\n  \"s_max\": " << format_double(s_max) << ",\n  \"p_star\": " << format_double(p_star) << "\n}\n";
  return os.str();
}

}  // namespace alphamix::io
