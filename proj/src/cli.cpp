#include "alphamix/cli.hpp"

#include <cmath>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "alphamix/core.hpp"
#include "alphamix/costs.hpp"
#include "alphamix/factor.hpp"
#include "alphamix/io.hpp"
#include "alphamix/oracle.hpp"
#include "alphamix/synthetic.hpp"

namespace alphamix::cli {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence:
    case ErrorCode::NumericalFailure:
    case ErrorCode::SingularSystem:
      return kSolverFailure;
    case ErrorCode::InvalidTarget:
    case ErrorCode::InfeasibleSharpe:
    case ErrorCode::InfeasibleTarget:
    case ErrorCode::BelowSharpeMaxPnl:
    case ErrorCode::CapacityExceeded:
    case ErrorCode::UnboundedCapacity:
    case ErrorCode::NoProfitableScale:
      return kInfeasible;
    default:
      return kDataError;
  }
}

namespace {

struct CovChoice {
  Index factors = 0;
  bool dense = false;
};

void add_cov_flags(CLI::App* cmd, CovChoice& choice) {
  auto* f = cmd->add_option("--factor", choice.factors, "Fit an F-factor model to a dense covariance")
                ->check(CLI::PositiveNumber);
  auto* d = cmd->add_flag("--dense", choice.dense, "Densify a factor covariance");
  f->excludes(d);
}

void choose_covariance(io::Model& model, const CovChoice& choice, std::ostream& err) {
  if (choice.factors > 0 && model.cov.is_dense()) {
    io::FactorBuild fb = io::build_factor_model(model.cov, choice.factors);
    for (const auto& n : fb.notes) err << "warning: " << n << '\n';
    model.cov = fb.cov;
  } else if (choice.dense && model.cov.is_factor()) {
    model.cov = CovarianceModel::dense(model.cov.densify());
  }
}

void print_notes(const WeightSolution& sol, std::ostream& err) {
  for (const auto& n : sol.notes) err << "note: " << n << '\n';
}

std::pair<AlphaSet, CovarianceModel> random_instance(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = gauss(rng);
  MatrixXd c = a * a.transpose() / static_cast<double>(n) + 0.2 * MatrixXd::Identity(n, n);
  VectorXd alpha(n);
  for (Index i = 0; i < n; ++i) alpha(i) = gauss(rng);
  CovarianceModel cov = CovarianceModel::dense(c);
  return {AlphaSet(alpha, c.diagonal().cwiseSqrt()), cov};
}

std::string join_ids(const std::vector<std::string>& ids, char sep) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? std::string(1, sep) : "") + ids[i];
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal weights for alpha streams under sum |w_i| = 1", "alphamix"};
  app.require_subcommand(1);

  std::string input, target_text, costs_path, config_path;
  CovChoice cov_choice;
  int points = 20;
  double imin = 0.0, imax = 0.0, pnl = std::nan("");
  Index n_streams = 5;
  std::uint64_t seed = 1;

  auto* est = app.add_subcommand("estimate", "Estimate alpha, C, Psi, S_max and P~* from a CSV panel");
  est->add_option("panel", input, "CSV panel, most recent row first")->required();

  auto* opt = app.add_subcommand("optimize", "Solve for the weights and print them as JSON");
  opt->add_option("input", input, "CSV panel or model JSON")->required();
  opt->add_option("--target", target_text, "pnl=X, sharpe-min=X or risk-max=X");
  opt->add_option("--costs", costs_path, "JSON config with a costs section");
  opt->add_option("--config", config_path, "JSON run config");
  add_cov_flags(opt, cov_choice);

  auto* fr = app.add_subcommand("frontier", "Sweep P~ from P~* towards max|alpha| and print CSV");
  fr->add_option("input", input, "CSV panel or model JSON")->required();
  fr->add_option("--points", points, "Number of points")->check(CLI::Range(1, 100000));
  add_cov_flags(fr, cov_choice);

  auto* cap = app.add_subcommand("capacity", "Investment level that maximizes the optimized P&L");
  cap->add_option("input", input, "Model JSON with turnovers")->required();
  cap->add_option("--costs", costs_path, "JSON config with a costs section")->required();
  cap->add_option("--imin", imin, "Lower end of the search range")->required();
  cap->add_option("--imax", imax, "Upper end of the search range")->required();
  add_cov_flags(cap, cov_choice);

  auto* cc = app.add_subcommand("crosscheck", "Compare the dense solver with exhaustive enumeration");
  cc->add_option("input", input, "CSV panel or model JSON (random instance if omitted)");
  cc->add_option("--n", n_streams, "Streams in the random instance")->check(CLI::Range(1, 12));
  cc->add_option("--seed", seed, "Seed for the random instance");
  cc->add_option("--pnl", pnl, "Target P&L (default: midway between P~* and 0.9 max|alpha|)");

  auto* syn = app.add_subcommand("synthetic", "Print the synthetic eigen-portfolio basis as a table");
  syn->add_option("input", input, "CSV panel or model JSON")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kUsage;
  }

  try {
    std::vector<std::string> notes;
    if (*est) {
      const io::TimeSeriesPanel panel = io::load_panel(input);
      io::Moments mom = io::estimate_moments(panel);
      for (const auto& n : mom.notes) err << "warning: " << n << '\n';
      const io::Model model{panel.stream_ids, mom.alpha, mom.model(), mom.correlation};
      const factor::SmaxResult sm = factor::smax_solution(model.alpha, model.cov);
      out << io::model_json(model, &mom.correlation, sm.s_max, sm.p_star);
      return kOk;
    }

    if (*opt) {
      io::Model model = io::load_input(input, &notes);
      for (const auto& n : notes) err << "warning: " << n << '\n';
      io::RunConfig cfg = config_path.empty() ? io::RunConfig{} : io::load_config(config_path);
      if (!costs_path.empty()) {
        const io::RunConfig cc_cfg = io::load_config(costs_path);
        if (!cc_cfg.costs) throw Error(ErrorCode::InvalidInput, costs_path + " has no costs section");
        cfg.costs = cc_cfg.costs;
      }
      if (!target_text.empty()) cfg.target = io::parse_target(target_text);
      if (!cfg.target) {
        err << "error: a target is required (--target or config)\n" << opt->help();
        return kUsage;
      }
      CovChoice choice = cov_choice;
      if (choice.factors == 0 && !choice.dense && cfg.factors) choice.factors = *cfg.factors;
      choose_covariance(model, choice, err);

      WeightSolution sol;
      const bool has_costs = cfg.costs && (cfg.costs->linear_rate > 0.0 || cfg.costs->impact_coeff > 0.0 ||
                                           cfg.costs->per_stream.has_value());
      if (has_costs) {
        const auto* p = std::get_if<io::PnlTarget>(&*cfg.target);
        if (!p) throw Error(ErrorCode::InvalidTarget, "with costs only a pnl target is supported");
        const costs::CostSpec& spec = *cfg.costs;
        const MatrixXd* corr = model.correlation ? &*model.correlation : nullptr;
        sol = spec.impact_coeff > 0.0 ? costs::impact_solve(model.alpha, model.cov, spec, p->value, cfg.solver)
                                      : costs::linear_cost_solve(model.alpha, model.cov, spec, p->value, corr, cfg.solver);
      } else if (const auto* p = std::get_if<io::PnlTarget>(&*cfg.target)) {
        sol = factor::solve_at_pnl(model.alpha, model.cov, p->value, cfg.solver);
      } else if (const auto* s = std::get_if<factor::SharpeMin>(&*cfg.target)) {
        sol = factor::target_search(model.alpha, model.cov, *s, cfg.solver);
      } else {
        sol = factor::target_search(model.alpha, model.cov, std::get<factor::RiskMax>(*cfg.target), cfg.solver);
      }
      print_notes(sol, err);
      out << io::solution_json(sol);
      return kOk;
    }

    if (*fr) {
      io::Model model = io::load_input(input, &notes);
      for (const auto& n : notes) err << "warning: " << n << '\n';
      choose_covariance(model, cov_choice, err);
      const auto pts = factor::frontier(model.alpha, model.cov, points);
      out << "pnl,risk,sharpe\n";
      for (const auto& p : pts)
        out << io::format_double(p.pnl) << ',' << io::format_double(p.risk) << ',' << io::format_double(p.sharpe)
            << '\n';
      return kOk;
    }

    if (*cap) {
      io::Model model = io::load_input(input, &notes);
      for (const auto& n : notes) err << "warning: " << n << '\n';
      choose_covariance(model, cov_choice, err);
      const io::RunConfig cfg = io::load_config(costs_path);
      if (!cfg.costs) throw Error(ErrorCode::InvalidInput, costs_path + " has no costs section");
      const costs::CapacityResult res = costs::capacity_search(model.alpha, model.cov, *cfg.costs, imin, imax);
      for (const auto& n : res.notes) err << "note: " << n << '\n';
      std::ostringstream os;
      os << "{\n  \"schema\": 1,\n  \"i_star\": " << io::format_double(res.i_star)
         << ",\n  \"pnl_at_star\": " << io::format_double(res.pnl_at_star) << ",\n  \"weights\": [";
      for (Index i = 0; i < res.solution.weights.size(); ++i)
        os << (i ? "," : "") << io::format_double(res.solution.weights(i));
      os << "]\n}\n";
      out << os.str();
      return kOk;
    }

    if (*cc) {
      AlphaSet alpha(VectorXd::Ones(1), VectorXd::Ones(1));
      CovarianceModel cov = CovarianceModel::diagonal(VectorXd::Ones(1));
      if (input.empty()) {
        std::tie(alpha, cov) = random_instance(n_streams, seed);
      } else {
        io::Model model = io::load_input(input, &notes);
        alpha = model.alpha;
        cov = model.cov.is_dense() ? model.cov : CovarianceModel::dense(model.cov.densify());
      }
      if (alpha.size() > oracle::kMaxOracleStreams)
        throw Error(ErrorCode::InvalidInput, "crosscheck is limited to 12 streams");
      double target = pnl;
      if (std::isnan(target)) {
        const double p_star = factor::smax_solution(alpha, cov).p_star;
        const double top = 0.9 * max_pnl(alpha).first;
        target = top > p_star ? p_star + 0.5 * (top - p_star) : p_star;
      }
      const WeightSolution sol = factor::solve_fixed_pnl_dense(alpha, cov, target);
      const oracle::OracleResult ref = oracle::brute_force_min(alpha, cov, target);
      const double rel = std::abs(sol.risk - ref.solution.risk) / std::max(ref.solution.risk, 1e-300);
      const double wdiff = (sol.weights - ref.solution.weights).cwiseAbs().maxCoeff();
      const bool match = rel <= 1e-8 && wdiff <= 1e-8;
      out << (match ? "MATCH" : "MISMATCH") << " pnl=" << io::format_double(target)
          << " risk=" << io::format_double(sol.risk) << " oracle_risk=" << io::format_double(ref.solution.risk)
          << " max_weight_diff=" << io::format_double(wdiff) << '\n';
      return match ? kOk : kSolverFailure;
    }

    if (*syn) {
      io::Model model = io::load_input(input, &notes);
      const CovarianceModel dense =
          model.cov.is_dense() ? model.cov : CovarianceModel::dense(model.cov.densify());
      const synthetic::SyntheticBasis b = synthetic::synthetic_portfolios(model.alpha, dense);
      out << "portfolio\teigenvalue\talpha\tvariance\t" << join_ids(model.ids, '\t') << '\n';
      for (Index a = 0; a < b.portfolio_weights.rows(); ++a) {
        out << a + 1 << '\t' << io::format_double(b.eigenvalues(a)) << '\t' << io::format_double(b.synthetic_alphas(a))
            << '\t' << io::format_double(b.synthetic_vars(a));
        for (Index j = 0; j < b.portfolio_weights.cols(); ++j) out << '\t' << io::format_double(b.portfolio_weights(a, j));
        out << '\n';
      }
      return kOk;
    }
  } catch (const NonConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kUsage;
}

}  // namespace alphamix::cli
