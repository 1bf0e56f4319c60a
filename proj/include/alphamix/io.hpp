#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "alphamix/core.hpp"
#include "alphamix/costs.hpp"
#include "alphamix/factor.hpp"

namespace alphamix::io {

// Observations of N streams, most recent row first.
struct TimeSeriesPanel {
  MatrixXd observations;  // (M+1) x N
  std::vector<std::string> stream_ids;

  Index streams() const { return observations.cols(); }
  Index periods() const { return observations.rows(); }
};

TimeSeriesPanel parse_panel(std::string_view text);
TimeSeriesPanel load_panel(const std::string& path);
std::string format_panel(const TimeSeriesPanel& panel);
void save_panel(const TimeSeriesPanel& panel, const std::string& path);

struct Moments {
  AlphaSet alpha;
  MatrixXd covariance;
  MatrixXd correlation;
  std::vector<std::string> notes;

  /// The covariance as a dense model; throws NotPositiveDefinite when it is singular.
  CovarianceModel model() const { return CovarianceModel::dense(covariance); }
};

/// Sample means, unbiased sample covariance (divisor M) and correlation. With M < N
/// the covariance has rank at most M; a warning is recorded in notes.
Moments estimate_moments(const TimeSeriesPanel& panel);

struct FactorBuild {
  CovarianceModel cov;
  Index floored = 0;
  int refinements = 0;
  std::vector<std::string> notes;
};

/// Principal-component factor model with Phi = I: loadings are the top-F eigenvectors
/// scaled by sqrt(eigenvalue) and xi^2 = C_ii - sum_A Omega~_iA^2, floored at 1e-8 C_ii.
/// With refinements > 0 the eigen-step is repeated on C - Xi until Xi settles.
FactorBuild build_factor_model(const CovarianceModel& dense, Index factors, int refinements = 1000);

struct Model {
  std::vector<std::string> ids;
  AlphaSet alpha;
  CovarianceModel cov;
  std::optional<MatrixXd> correlation;
};

Model parse_model(std::string_view json_text);
Model load_model(const std::string& path);
/// CSV panels go through estimate_moments; anything else is read as model JSON.
Model load_input(const std::string& path, std::vector<std::string>* notes = nullptr);

struct PnlTarget {
  double value;
};
using RunTarget = std::variant<PnlTarget, factor::SharpeMin, factor::RiskMax>;

struct RunConfig {
  std::optional<RunTarget> target;
  std::optional<Index> factors;
  std::optional<costs::CostSpec> costs;
  factor::SolverOptions solver;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::string& path);
/// "pnl=X", "sharpe-min=X" or "risk-max=X".
RunTarget parse_target(std::string_view text);

std::string format_double(double x);
std::string solution_json(const WeightSolution& sol);
std::string model_json(const Model& model, const MatrixXd* correlation, double s_max, double p_star);

std::string read_file(const std::string& path);

}  // namespace alphamix::io
