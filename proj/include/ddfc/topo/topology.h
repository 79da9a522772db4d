#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddfc/common/json.h"
#include "ddfc/data/dataset.h"
#include "ddfc/sdp/problem.h"
#include "ddfc/sdp/solver.h"
#include "ddfc/synth/structure.h"
#include "ddfc/synth/synthesis.h"

namespace ddfc::topo {

using synth::Adjacency;
using synth::AgentPartition;

/// Per-link state inside the search: −1 free, 0 off, 1 on. The diagonal is
/// always on.
using Fixing = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Directed communication graph with link costs and benefits; δ(i, j) = 1
/// means agent i reads agent j.
struct CommTopology {
  Adjacency delta;
  Eigen::MatrixXd cost;
  Eigen::MatrixXd eta;

  int agents() const { return static_cast<int>(delta.rows()); }
  int links() const { return synth::OffDiagonalLinks(delta); }
  double Objective() const;
  Json ToJson() const;
};

/// Σ_{i≠j} (c_ij − η_ij) δ_ij.
double LinkObjective(const Adjacency& delta, const Eigen::MatrixXd& cost,
                     const Eigen::MatrixXd& eta);

/// Least-squares [Â B̂] = X⁺Zᵀ(ZZᵀ)⁻¹, then η_ij = ‖[Â_ij B̂_ij]‖_F / ‖[Â_ii B̂_ii]‖_F
/// over the agent blocks (rows: agent i's states; columns: agent j's states
/// and inputs). Diagonal entries are 0. Throws when Z is rank deficient.
Eigen::MatrixXd EstimateLinkBenefits(const data::DataSet& data, const AgentPartition& partition);

struct DeltaTerm {
  int i = 0;
  int j = 0;
  double coeff = 0.0;
};

/// |var(row, col)| ≤ M̄ (constant + Σ coeff·δ_ij) over the free links.
struct BigMBound {
  std::string var;  ///< "Y" or "G"
  int row = 0;
  int col = 0;
  double constant = 0.0;
  std::vector<DeltaTerm> terms;

  bool fixed() const { return terms.empty(); }
};

/// Big-M coupling for every agent pair: Y on I_K(i,j) and G on I_G(i,j) by
/// δ_ij, and G on I_G(z,j) by δ_ij − δ_iz + 1 for z ∉ {i, j}. Fixed links are
/// substituted, so a bound with no terms and constant 0 forces the entry to 0.
std::vector<BigMBound> BigMBounds(const AgentPartition& partition, const Fixing& fixing);

struct TopologyOptions {
  double big_m = 1e8;
  int node_budget = 2000;     ///< relaxation solves in the tree search
  double time_limit = 0.0;    ///< seconds, 0 = none
  /// Greedy start plus flip/exchange local search above this many agents.
  int greedy_above_agents = 6;
  int max_swap_solves = -1;   ///< new solves in the local search, −1 = unbounded
  double integrality_tol = 1e-6;
  sdp::SolverOptions solver;
  bool verbose = false;
};

struct FoundTopology {
  Adjacency delta;
  sdp::ValueMap certificate;
};

struct TopologyResult {
  Adjacency delta;
  double objective = 0.0;
  double bound = 0.0;  ///< proven lower bound on the optimum
  double gap = 0.0;    ///< objective − bound
  bool optimal = false;
  std::string termination;
  sdp::ValueMap certificate;  ///< Γ, P, G, Y, τ at δ (scaled coordinates)
  int nodes = 0;
  int solves = 0;
  int bound_violations = 0;  ///< relaxation above a contained integral point
  double seconds = 0.0;
  /// Every distinct topology certified feasible during the search.
  std::vector<FoundTopology> feasible;

  Json ToJson() const;
};

/// Robust H2 LMIs without a γ bound, plus structural equalities for a fixed
/// δ: feasible exactly when the structured design on δ has a finite γ under
/// the same solver settings. Fills `certificate` on success.
bool FixedTopologyFeasible(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                           const Adjacency& delta, const sdp::SolverOptions& options,
                           sdp::ValueMap* certificate = nullptr);

struct Relaxation {
  sdp::SolveStatus status = sdp::SolveStatus::kNumericalFailure;
  double objective = 0.0;      ///< including the fixed links
  Eigen::MatrixXd delta;       ///< relaxed values (fixed entries exact)
};

/// Continuous relaxation δ ∈ [0, 1] of the free links.
Relaxation SolveRelaxation(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                           const Fixing& fixing, const Eigen::MatrixXd& cost,
                           const Eigen::MatrixXd& eta, const TopologyOptions& options);

/// Minimizes Σ (c − η) δ subject to robust stability feasibility. Throws
/// InfeasibleError when even the dense topology is infeasible and
/// NumericalError when the budget ends without an incumbent.
TopologyResult SolveTopology(const synth::SynthesisSpec& spec, const AgentPartition& partition,
                             const Eigen::MatrixXd& cost, const Eigen::MatrixXd& eta,
                             const TopologyOptions& options = {});

struct SweepLevel {
  double c = 0.0;
  TopologyResult result;
};

/// One search per uniform cost level. Afterwards every level picks the best
/// topology among all certified ones found across the sweep (ties: fewer
/// links), so link counts are weakly decreasing in c.
std::vector<SweepLevel> SweepCosts(const synth::SynthesisSpec& spec,
                                   const AgentPartition& partition,
                                   const std::vector<double>& costs, const Eigen::MatrixXd& eta,
                                   const TopologyOptions& options = {});

}  // namespace ddfc::topo
