#pragma once

#include <string>
#include <vector>

#include "ddfc/sdp/problem.h"

namespace ddfc::sdp {

struct SolverOptions {
  /// Margin turning strict LMIs into expr ⪰ εI / expr ⪯ −εI.
  double strict_margin = 1e-8;
  /// Tolerance used when certifying a returned point; independent of the
  /// interior-point tolerances below.
  double feas_tol = 1e-7;
  double gap_tol = 1e-8;
  double infeas_tol = 1e-8;
  int max_iterations = 120;
  /// Bound on every (internally scaled) decision variable. Keeps the central
  /// path bounded when the feasible set is unbounded.
  double variable_bound = 1e6;
  /// Phase 1 stops early once every constraint holds with this relative
  /// margin; 0 runs phase 1 to convergence.
  double early_feasible_margin = 1e-6;
  bool verbose = false;
};

enum class SolveStatus {
  kOptimal,
  kInfeasible,
  kNumericalFailure,
};

std::string ToString(SolveStatus status);

struct SolverStats {
  int phase1_iterations = 0;
  int phase2_iterations = 0;
  int num_scalar_vars = 0;      ///< after eliminating equalities
  int num_eliminated = 0;
  /// Best feasibility margin t* from phase 1 (negative: strictly feasible).
  double phase1_margin = 0.0;
  double seconds = 0.0;
  std::string message;
};

struct SdpSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  ValueMap values;
  double objective_value = 0.0;
  SolverStats stats;

  double Scalar(const std::string& name) const;
  const Eigen::MatrixXd& Matrix(const std::string& name) const;
};

/// Solves the problem. Strict LMIs are imposed with margin
/// options.strict_margin. Configuration errors throw ConfigError; numerical
/// trouble is reported through the status and never throws.
SdpSolution Solve(const SdpProblem& problem, const SolverOptions& options = {});

struct LmiResidual {
  std::string name;
  /// Smallest eigenvalue of the sense-adjusted expression (expr for ⪰,
  /// −expr for ⪯), without the strictness margin.
  double min_eigenvalue = 0.0;
  /// Largest absolute entry of expr − exprᵀ.
  double asymmetry = 0.0;
};

struct LinearResidual {
  std::string name;
  /// Positive means violated: |expr| for equalities, max(0, −expr) for
  /// inequalities.
  double violation = 0.0;
};

struct SolutionReport {
  std::vector<LmiResidual> lmis;
  std::vector<LinearResidual> linear;
  double worst_lmi = 0.0;     ///< min over LMIs of min_eigenvalue
  double worst_linear = 0.0;  ///< max violation over linear constraints
  bool feasible = false;      ///< worst_lmi ≥ −feas_tol, worst_linear ≤ feas_tol
};

/// Re-substitutes a solution into every constraint.
SolutionReport CheckSolution(const SdpProblem& problem, const ValueMap& values,
                             double feas_tol = 1e-7);

}  // namespace ddfc::sdp
