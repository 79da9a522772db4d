#include "ddfc/sdp/solver.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "cone_program.h"
#include "ddfc/common/errors.h"
#include "ipm.h"

namespace ddfc::sdp {

using internal::CompiledProblem;
using internal::ConeBlock;
using internal::ConeProgram;
using internal::IpmIterate;
using internal::IpmMonitor;
using internal::IpmOptions;
using internal::IpmResult;
using internal::IpmStatus;
using internal::SparseRow;
using internal::SparseSym;

std::string ToString(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal:
      return "optimal";
    case SolveStatus::kInfeasible:
      return "infeasible";
    case SolveStatus::kNumericalFailure:
      return "numerical-failure";
  }
  return "unknown";
}

double SdpSolution::Scalar(const std::string& name) const {
  return Matrix(name)(0, 0);
}

const Eigen::MatrixXd& SdpSolution::Matrix(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end()) {
    throw ConfigError(fmt::format("solution has no value for '{}'", name));
  }
  return it->second;
}

namespace {

// Scaled program: blocks and rows normalized to unit max entry, variables
// rescaled so each has unit max coefficient (y = D·ŷ), objective normalized.
struct ScaledProgram {
  ConeProgram program;
  Eigen::VectorXd var_scale;  // D
  int num_user_rows = 0;
};

ScaledProgram ScaleProgram(const ConeProgram& in, double bound) {
  ScaledProgram out;
  out.program = in;
  ConeProgram& p = out.program;
  for (ConeBlock& b : p.blocks) {
    double s = b.f0.cwiseAbs().maxCoeff();
    for (const SparseSym& f : b.coeffs) {
      for (double v : f.val) s = std::max(s, std::abs(v));
    }
    if (s > 0.0) {
      b.f0 /= s;
      for (SparseSym& f : b.coeffs) f.Scale(1.0 / s);
    }
  }
  for (SparseRow& r : p.rows) {
    double s = std::abs(r.b);
    for (const auto& t : r.terms) s = std::max(s, std::abs(t.second));
    if (s > 0.0) {
      r.b /= s;
      for (auto& t : r.terms) t.second /= s;
    }
  }
  Eigen::VectorXd vmax = Eigen::VectorXd::Zero(p.num_vars);
  for (const ConeBlock& b : p.blocks) {
    for (std::size_t k = 0; k < b.vars.size(); ++k) {
      for (double v : b.coeffs[k].val) {
        vmax(b.vars[k]) = std::max(vmax(b.vars[k]), std::abs(v));
      }
    }
  }
  for (const SparseRow& r : p.rows) {
    for (const auto& t : r.terms) vmax(t.first) = std::max(vmax(t.first), std::abs(t.second));
  }
  out.var_scale = Eigen::VectorXd::Ones(p.num_vars);
  for (int i = 0; i < p.num_vars; ++i) {
    if (vmax(i) > 0.0) out.var_scale(i) = 1.0 / vmax(i);
  }
  for (ConeBlock& b : p.blocks) {
    for (std::size_t k = 0; k < b.vars.size(); ++k) {
      b.coeffs[k].Scale(out.var_scale(b.vars[k]));
    }
  }
  for (SparseRow& r : p.rows) {
    for (auto& t : r.terms) t.second *= out.var_scale(t.first);
  }
  p.c = p.c.cwiseProduct(out.var_scale);
  const double cmax = p.c.size() ? p.c.cwiseAbs().maxCoeff() : 0.0;
  if (cmax > 0.0) p.c /= cmax;
  p.c0 = 0.0;
  out.num_user_rows = static_cast<int>(p.rows.size());
  for (int i = 0; i < p.num_vars; ++i) {
    p.rows.push_back(SparseRow{{{i, 1.0}}, bound});
    p.row_names.push_back("box+");
    p.rows.push_back(SparseRow{{{i, -1.0}}, bound});
    p.row_names.push_back("box-");
  }
  return out;
}

// Phase-1 program: min t s.t. F(ŷ) + tI ⪰ 0, user rows + t ≥ 0, t ≥ −floor.
ConeProgram PhaseOne(const ScaledProgram& sp, double floor) {
  ConeProgram p = sp.program;
  const int t = p.num_vars;
  p.num_vars += 1;
  for (ConeBlock& b : p.blocks) {
    SparseSym id;
    for (int i = 0; i < b.dim; ++i) {
      id.row.push_back(i);
      id.col.push_back(i);
      id.val.push_back(1.0);
    }
    b.vars.push_back(t);
    b.coeffs.push_back(std::move(id));
  }
  for (int r = 0; r < sp.num_user_rows; ++r) p.rows[r].terms.push_back({t, 1.0});
  p.rows.push_back(SparseRow{{{t, 1.0}}, floor});
  p.row_names.push_back("phase1-floor");
  p.c = Eigen::VectorXd::Zero(p.num_vars);
  p.c(t) = 1.0;
  p.c0 = 0.0;
  return p;
}

bool StrictlyFeasible(const ConeProgram& p, const Eigen::VectorXd& y) {
  for (const SparseRow& r : p.rows) {
    double v = r.b;
    for (const auto& t : r.terms) v += t.second * y(t.first);
    if (!(v >= 0.0)) return false;
  }
  for (const ConeBlock& b : p.blocks) {
    Eigen::LLT<Eigen::MatrixXd> llt(internal::EvaluateBlock(b, y));
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

}  // namespace

SdpSolution Solve(const SdpProblem& problem, const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  SdpSolution sol;
  const CompiledProblem compiled = internal::Compile(problem, options.strict_margin);
  sol.stats.num_scalar_vars = compiled.program.num_vars;
  sol.stats.num_eliminated = compiled.num_original - compiled.program.num_vars;
  auto finish = [&](SolveStatus status, std::string message) {
    sol.status = status;
    sol.stats.message = std::move(message);
    sol.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.verbose) {
      fmt::print(stderr, "sdp: {} ({}) in {:.2f}s\n", ToString(status),
                 sol.stats.message, sol.stats.seconds);
    }
    return sol;
  };
  if (compiled.inconsistent_equalities) {
    return finish(SolveStatus::kInfeasible, "inconsistent equality constraints");
  }

  try {
    const ScaledProgram scaled = ScaleProgram(compiled.program, options.variable_bound);
    const int n = scaled.program.num_vars;
    auto unscale = [&](const Eigen::VectorXd& yhat) {
      return Eigen::VectorXd(yhat.head(n).cwiseProduct(scaled.var_scale));
    };

    // Phase 1.
    const ConeProgram p1 = PhaseOne(scaled, 1.0);
    IpmOptions ipm;
    ipm.gap_tol = options.gap_tol;
    ipm.infeas_tol = options.infeas_tol;
    ipm.max_iterations = options.max_iterations;
    ipm.verbose = options.verbose;
    auto monitor = [&](const IpmIterate& it) {
      const double t = (*it.y)(n);
      if (options.early_feasible_margin > 0.0 && t <= -options.early_feasible_margin &&
          StrictlyFeasible(scaled.program, it.y->head(n))) {
        return IpmMonitor::kStopFeasible;
      }
      // A positive dual bound proves infeasibility only while the primal
      // side agrees; roundoff can push it above a negative primal margin.
      if (it.dual_infeasibility < 1e-7 && it.primal_infeasibility < 1e-7 &&
          it.dual_objective > 1e-7 &&
          std::abs(it.primal_objective - it.dual_objective) <= 0.5 * it.dual_objective) {
        return IpmMonitor::kStopInfeasible;
      }
      return IpmMonitor::kContinue;
    };
    if (options.verbose) fmt::print(stderr, "sdp: phase 1, {} variables\n", n);
    const IpmResult r1 = internal::SolveConeProgram(p1, ipm, monitor);
    sol.stats.phase1_iterations = r1.iterations;
    sol.stats.phase1_margin = r1.y.size() ? r1.y(n) : 0.0;
    Eigen::VectorXd y1;
    switch (r1.status) {
      case IpmStatus::kStoppedInfeasible:
        return finish(SolveStatus::kInfeasible, "phase 1 dual bound is positive");
      case IpmStatus::kStoppedFeasible:
        y1 = r1.y.head(n);
        break;
      case IpmStatus::kConverged:
        if (r1.primal_objective >= -1e-9) {
          return finish(SolveStatus::kInfeasible,
                        fmt::format("phase 1 optimum {:.3e} is not negative",
                                    r1.primal_objective));
        }
        y1 = r1.y.head(n);
        if (!StrictlyFeasible(scaled.program, y1)) {
          return finish(SolveStatus::kNumericalFailure,
                        "phase 1 point failed verification");
        }
        break;
      default:
        // The last iterate still counts when it verifies.
        if (r1.y.size() > n && r1.y(n) < 0.0 && StrictlyFeasible(scaled.program, r1.y.head(n))) {
          y1 = r1.y.head(n);
          break;
        }
        return finish(SolveStatus::kNumericalFailure, "phase 1: " + r1.message);
    }

    Eigen::VectorXd y = y1;
    const bool has_objective =
        n > 0 && scaled.program.c.cwiseAbs().maxCoeff() > 0.0;
    if (has_objective) {
      if (options.verbose) fmt::print(stderr, "sdp: phase 2\n");
      // Stop once the objective has settled on a feasible iterate while the
      // multiplier residual stalls; the returned point is re-verified below.
      std::vector<double> history;
      auto settle = [&](const IpmIterate& it) {
        history.push_back(it.primal_objective);
        constexpr std::size_t kWindow = 10;
        if (history.size() <= kWindow || it.primal_infeasibility > 1e-9) {
          return IpmMonitor::kContinue;
        }
        const double scale = 1.0 + std::abs(it.primal_objective);
        const double drift = std::abs(it.primal_objective - history[history.size() - 1 - kWindow]);
        const double gap = std::abs(it.primal_objective - it.dual_objective);
        return drift <= 1e-8 * scale && gap <= 1e-3 * scale ? IpmMonitor::kStopFeasible
                                                             : IpmMonitor::kContinue;
      };
      const IpmResult r2 = internal::SolveConeProgram(scaled.program, ipm, settle);
      sol.stats.phase2_iterations = r2.iterations;
      if (r2.status == IpmStatus::kStoppedFeasible) sol.stats.message = "objective settled";
      if (r2.status != IpmStatus::kConverged && r2.status != IpmStatus::kStoppedFeasible) {
        return finish(SolveStatus::kNumericalFailure, "phase 2: " + r2.message);
      }
      if (r2.y.cwiseAbs().maxCoeff() > 0.5 * options.variable_bound) {
        return finish(SolveStatus::kNumericalFailure,
                      "phase 2 reached the variable bound; objective looks unbounded");
      }
      // Pull the optimum toward the strictly feasible phase-1 point until it
      // certifies.
      y = r2.y;
      for (double theta : {0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        const Eigen::VectorXd cand = (1.0 - theta) * r2.y + theta * y1;
        if (StrictlyFeasible(scaled.program, cand)) {
          y = cand;
          break;
        }
      }
    }

    sol.values = internal::Recover(compiled, unscale(y));
    sol.objective_value = Evaluate(problem.objective(), sol.values);
    const SolutionReport report = CheckSolution(problem, sol.values, options.feas_tol);
    if (!report.feasible) {
      return finish(SolveStatus::kNumericalFailure,
                    fmt::format("returned point violates constraints (lmi {:.3e}, "
                                "linear {:.3e})",
                                report.worst_lmi, report.worst_linear));
    }
    if (!has_objective) return finish(SolveStatus::kOptimal, "feasible point found");
    return finish(SolveStatus::kOptimal, sol.stats.message.empty()
                                             ? "phase 2 converged"
                                             : "phase 2 " + sol.stats.message);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    return finish(SolveStatus::kNumericalFailure, e.what());
  }
}

SolutionReport CheckSolution(const SdpProblem& problem, const ValueMap& values,
                             double feas_tol) {
  SolutionReport rep;
  rep.worst_lmi = std::numeric_limits<double>::infinity();
  for (const auto& lmi : problem.lmis()) {
    const Eigen::MatrixXd e = Evaluate(lmi.expr, values);
    LmiResidual r;
    r.name = lmi.name;
    r.asymmetry = e.size() ? (e - e.transpose()).cwiseAbs().maxCoeff() : 0.0;
    Eigen::MatrixXd sym = 0.5 * (e + e.transpose());
    if (lmi.sense == LmiSense::kNegative) sym = -sym;
    r.min_eigenvalue =
        sym.size() ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                         sym, Eigen::EigenvaluesOnly)
                         .eigenvalues()(0)
                   : 0.0;
    rep.worst_lmi = std::min(rep.worst_lmi, r.min_eigenvalue);
    rep.lmis.push_back(std::move(r));
  }
  if (problem.lmis().empty()) rep.worst_lmi = 0.0;
  for (const auto& lc : problem.linear_constraints()) {
    const double v = Evaluate(lc.expr, values);
    LinearResidual r;
    r.name = lc.name;
    r.violation = lc.relation == Relation::kEqual ? std::abs(v) : std::max(0.0, -v);
    rep.worst_linear = std::max(rep.worst_linear, r.violation);
    rep.linear.push_back(std::move(r));
  }
  for (const auto& s : problem.scalar_vars()) {
    if (!s.nonnegative) continue;
    auto it = values.find(s.name);
    const double v = it == values.end() ? 0.0 : it->second(0, 0);
    LinearResidual r{s.name + ">=0", std::max(0.0, -v)};
    rep.worst_linear = std::max(rep.worst_linear, r.violation);
    rep.linear.push_back(std::move(r));
  }
  rep.feasible = rep.worst_lmi >= -feas_tol && rep.worst_linear <= feas_tol &&
                 std::isfinite(rep.worst_lmi);
  return rep;
}

}  // namespace ddfc::sdp
