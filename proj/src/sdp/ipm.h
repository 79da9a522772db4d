#pragma once

// Primal-dual interior-point method for a ConeProgram.
//
//   min  cᵀy             s.t.  F0_k + Σ yᵢ Fᵢ_k ⪰ 0,   aᵣᵀy + bᵣ ≥ 0
//   max −Σ<F0_k, X_k> − bᵀx  s.t.  Σ_k <Fᵢ_k, X_k> + Σᵣ aᵣᵢ xᵣ = cᵢ
//
// HKM search direction with Mehrotra predictor-corrector, infeasible start.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "cone_program.h"

namespace ddfc::sdp::internal {

struct IpmOptions {
  double gap_tol = 1e-8;
  double infeas_tol = 1e-8;
  int max_iterations = 120;
  double step_fraction = 0.95;
  bool verbose = false;
};

struct IpmIterate {
  int iteration = 0;
  const Eigen::VectorXd* y = nullptr;
  double primal_objective = 0.0;  ///< cᵀy + c0
  double dual_objective = 0.0;
  double primal_infeasibility = 0.0;  ///< relative ‖F(y) − S‖
  double dual_infeasibility = 0.0;    ///< relative ‖c − Σ<F, X> − Aᵀx‖
  double mu = 0.0;
};

enum class IpmMonitor { kContinue, kStopFeasible, kStopInfeasible };

enum class IpmStatus {
  kConverged,
  kStoppedFeasible,
  kStoppedInfeasible,
  kIterationLimit,
  kFailure,
};

struct IpmResult {
  IpmStatus status = IpmStatus::kFailure;
  Eigen::VectorXd y;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  int iterations = 0;
  std::string message;
};

/// Runs the method from the cold start y = y0 (zero if empty). The monitor
/// is consulted after every iteration and may stop the run early.
IpmResult SolveConeProgram(
    const ConeProgram& program, const IpmOptions& options,
    const std::function<IpmMonitor(const IpmIterate&)>& monitor = {},
    const Eigen::VectorXd& y0 = {});

}  // namespace ddfc::sdp::internal
