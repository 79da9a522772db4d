#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/data/dataset.h"
#include "ddfc/multiplier/multiplier.h"
#include "ddfc/sdp/problem.h"
#include "ddfc/sdp/solver.h"
#include "ddfc/synth/structure.h"
#include "ddfc/synth/weights.h"

namespace ddfc::synth {

struct Structure {
  AgentPartition partition;
  Adjacency delta;
};

/// Robust H2 design problem in the original state coordinates.
struct SynthesisSpec {
  multiplier::MultiplierTemplate multiplier;
  Eigen::MatrixXd Ce;   ///< p_e × n
  Eigen::MatrixXd Deu;  ///< p_e × m
  Eigen::MatrixXd Bd;   ///< n × q, disturbance channel of the H2 bound
  std::optional<Structure> structure;
  /// The LMIs are posed for x̃ = diag(s) x. Exact change of coordinates
  /// (the multiplier is transformed by congruence); empty means s = 1.
  Eigen::VectorXd state_scaling;

  int n() const { return multiplier.n; }
  int m() const { return multiplier.m; }
  void Validate() const;
};

/// s_i = 1 / rms of row i of X (1 for rows that are identically zero).
Eigen::VectorXd DataStateScaling(const data::DataSet& data);

/// Multiplier from the data (plus the prior when psi_bar > 0), the given
/// weights and disturbance channel, and the data-based state scaling.
SynthesisSpec MakeSpec(const data::DataSet& data, const Weights& weights,
                       const Eigen::MatrixXd& Bd, double psi_bar = 0.0);

/// Variables: Gamma (p_e², symmetric), P (n², symmetric), G (n × n),
/// Y (m × n), tau_d, tau_pr ≥ 0 (only for active multiplier parts).
/// With gamma set, adds trace(Γ) ≤ γ²; otherwise the caller may minimize
/// trace(Γ). Structural equalities are added when spec.structure is set.
sdp::SdpProblem AssembleH2Lmis(const SynthesisSpec& spec, std::optional<double> gamma);

/// The stability part alone: P, G, Y and the multiplier scalings with the
/// robust stability LMI, P ≻ 0 and the structural equalities. Feasibility
/// implies feasibility of the H2 problem for some finite γ.
sdp::SdpProblem AssembleStabilityLmis(const SynthesisSpec& spec);

/// K = Y G⁻¹. Throws NumericalError when G is near singular
/// (σ_min ≤ 1e-9 σ_max) or the residual ‖Y − KG‖_F exceeds 1e-8 ‖Y‖_F.
Eigen::MatrixXd RecoverController(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& G);

struct SolveAttempt {
  double gamma = 0.0;  ///< 0 for the min-trace solve
  std::string status;
  double seconds = 0.0;
  int iterations = 0;
};

struct SynthesisResult {
  Eigen::MatrixXd K;    ///< m × n, original coordinates
  double gamma = 0.0;   ///< achieved bound, ≥ sqrt(trace Γ)
  double trace_gamma = 0.0;
  /// Certificate in scaled coordinates (see state_scaling).
  Eigen::MatrixXd Gamma, P, G, Y;
  double tau_d = 0.0;
  double tau_pr = 0.0;
  Eigen::VectorXd state_scaling;
  std::optional<Adjacency> delta;
  std::vector<SolveAttempt> attempts;
  double seconds = 0.0;

  Json ToJson() const;
  static SynthesisResult FromJson(const Json& j);
};

/// One solve at fixed γ. Returns nothing when the SDP is infeasible or the
/// solver fails; the attempt is appended to `log`.
std::optional<SynthesisResult> SolveAtGamma(const SynthesisSpec& spec, double gamma,
                                            const sdp::SolverOptions& options,
                                            std::vector<SolveAttempt>* log = nullptr);

/// Minimizes trace(Γ) directly.
std::optional<SynthesisResult> MinimizeTrace(const SynthesisSpec& spec,
                                             const sdp::SolverOptions& options,
                                             std::vector<SolveAttempt>* log = nullptr);

struct BisectionOptions {
  double gamma_lo = 0.0;
  double gamma_hi = 1e3;
  double tol = 1e-2;  ///< relative bracket width (hi − lo) / hi
  int max_iter = 40;
  double gamma_cap = 1e8;
  int retries = 3;  ///< perturbed re-solves after a numerical failure
  std::uint64_t seed = 1;
  /// Bracket the search with a direct min-trace solve first.
  bool seed_with_min_trace = true;
  sdp::SolverOptions solver;
};

/// Smallest feasible γ within the relative tolerance. Throws InfeasibleError
/// when no γ up to the cap is feasible.
SynthesisResult BisectGamma(const SynthesisSpec& spec, const BisectionOptions& options = {});

}  // namespace ddfc::synth
